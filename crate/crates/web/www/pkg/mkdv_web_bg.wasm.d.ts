/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const decay_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_advance: (a: number, b: number) => [number, number];
export const demo_energies: (a: number) => [number, number, number, number];
export const demo_new: (a: bigint, b: number, c: number, d: number) => [number, number, number];
export const demo_profile: (a: number, b: number) => [number, number, number, number];
export const demo_spectrum: (a: number) => [number, number];
export const demo_time: (a: number) => number;
export const __wbindgen_export_0: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
