/* tslint:disable */
/* eslint-disable */
/**
 * `(N, bound)` pairs, flattened, for `N = 1..=max_n`.
 */
export function decay_curve(family: string, kind: string, max_n: number): Float64Array;
export class Demo {
  free(): void;
  /**
   * Draws a field from `μ_level` with `K = 3N+1` modes, scaled by `amplitude`.
   */
  constructor(seed: bigint, level: number, cutoff_n: number, amplitude: number);
  time(): number;
  /**
   * Advances the state by `dt_total` with the default step.
   */
  advance(dt_total: number): void;
  /**
   * `Re u, Im u` on `points` equally spaced grid points, concatenated.
   */
  profile(points: number): Float64Array;
  /**
   * `E_1 … E_5` of `Π_N u`.
   */
  energies(): Float64Array;
  /**
   * `log10 |û_k|²` for `k = -K..=K`.
   */
  spectrum(): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
  readonly memory: WebAssembly.Memory;
  readonly __wbg_demo_free: (a: number, b: number) => void;
  readonly decay_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
  readonly demo_advance: (a: number, b: number) => [number, number];
  readonly demo_energies: (a: number) => [number, number, number, number];
  readonly demo_new: (a: bigint, b: number, c: number, d: number) => [number, number, number];
  readonly demo_profile: (a: number, b: number) => [number, number, number, number];
  readonly demo_spectrum: (a: number) => [number, number];
  readonly demo_time: (a: number) => number;
  readonly __wbindgen_export_0: WebAssembly.Table;
  readonly __wbindgen_malloc: (a: number, b: number) => number;
  readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
  readonly __externref_table_dealloc: (a: number) => void;
  readonly __wbindgen_free: (a: number, b: number, c: number) => void;
  readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;
/**
* Instantiates the given `module`, which can either be bytes or
* a precompiled `WebAssembly.Module`.
*
* @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
*
* @returns {InitOutput}
*/
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
* If `module_or_path` is {RequestInfo} or {URL}, makes a request and
* for everything else, calls `WebAssembly.instantiate` directly.
*
* @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
*
* @returns {Promise<InitOutput>}
*/
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
