mod common;

use mkdv_core::measures::{sample_gaussians, GaussianSamplerSpec};
use mkdv_core::pairing::*;
use mkdv_core::Complex64;

/// Brute-force version of the resonant-set conditions over all six entries.
fn brute_force(n: i64, keep: impl Fn(&IndexVector6) -> bool) -> Vec<IndexVector6> {
    let r = -n..=n;
    let mut out = Vec::new();
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    for e in r.clone() {
                        for f in r.clone() {
                            let v = IndexVector6([a, b, c, d, e, f]);
                            if a - b - c + d - e + f == 0 && (a - b - c).abs() > n && keep(&v) {
                                out.push(v);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pairing degree straight from the definition: try every injective
/// matching of plus slots into minus slots.
fn degree_by_definition(v: &IndexVector6) -> usize {
    let plus = [0usize, 3, 5];
    let minus = [1usize, 2, 4];
    let mut best = 0;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in perms {
        for mask in 0..8u32 {
            let ok = (0..3).all(|i| mask & (1 << i) == 0 || v.0[plus[i]] == v.0[minus[p[i]]]);
            if ok {
                best = best.max(mask.count_ones() as usize);
            }
        }
    }
    best
}

#[test]
fn enumeration_matches_brute_force() {
    for n in [1usize, 2] {
        for f in [FamilyTag::I0, FamilyTag::I(1, 5), FamilyTag::I(6, 2), FamilyTag::TildeI(6, 3), FamilyTag::HatI(6, 2)] {
            let want = brute_force(n as i64, |v| {
                let r = degree_by_definition(v);
                match f {
                    FamilyTag::I0 => r == 0,
                    FamilyTag::I(p, m) => r == 1 && v.slot(p) == v.slot(m),
                    FamilyTag::TildeI(p, m) => r == 1 && v.slot(p) == v.slot(m) && v.distinct_count() == 5,
                    FamilyTag::HatI(p, m) => r == 1 && v.slot(p) == v.slot(m) && v.distinct_count() != 5,
                }
            });
            assert_eq!(enumerate_family(n, f), want, "N = {n}, {f}");
        }
    }
}

#[test]
fn streamed_members_satisfy_membership() {
    for f in FamilyTag::all_pairs().into_iter().chain([FamilyTag::I0]) {
        for v in enumerate_family(4, f) {
            assert!(in_family(&v, 4, f));
        }
    }
}

#[test]
fn tilde_hat_partition() {
    for n in 1..=6 {
        for (p, m) in [(6, 2), (6, 3)] {
            let whole = count_family(n, FamilyTag::I(p, m));
            let parts = count_family(n, FamilyTag::TildeI(p, m)) + count_family(n, FamilyTag::HatI(p, m));
            assert_eq!(whole, parts);
        }
    }
}

#[test]
fn two_pairings_are_three_pairings() {
    for n in 1..=6 {
        let mut seen = 0;
        for_each_member_of_resonant_set(n, |v| {
            let r = v.pairing_degree();
            assert_ne!(r, 2, "{v}");
            if r == 3 {
                seen += 1;
            }
        });
        assert!(seen > 0 || n < 2);
    }
}

fn for_each_member_of_resonant_set(n: usize, mut visit: impl FnMut(&IndexVector6)) {
    let nn = n as i64;
    for v in brute_force(nn, |_| true) {
        visit(&v);
    }
}

#[test]
fn tilde_partners_cancel_pairwise() {
    let g = sample_gaussians(&GaussianSamplerSpec::new(2, 6, 3, "partner"));
    for f in [FamilyTag::TildeI(6, 2), FamilyTag::TildeI(6, 3)] {
        for v in enumerate_family(6, f) {
            let w = tilde_partner(&v, f).unwrap();
            assert!(in_family(&w, 6, f), "{v} -> {w}");
            let a = CoefficientKind::A.value(&v) * monomial(&g, 6, &v);
            let b = CoefficientKind::A.value(&w) * monomial(&g, 6, &w);
            assert!((a + b).im.abs() <= 1e-14 * (a.norm() + b.norm()));
        }
    }
}

#[test]
fn r_pairings_are_real() {
    let g = sample_gaussians(&GaussianSamplerSpec::new(2, 5, 4, "real"));
    let s = pathwise_sum_by(5, CoefficientKind::B, &g, |v| v.pairing_degree() >= 2).unwrap();
    assert!(s.value.im.abs() <= 1e-12 * s.scale);
}

/// The bounding sum with shapes and free parts spelled out by hand.
fn annal_by_hand(n: usize, f: FamilyTag, kind: CoefficientKind) -> f64 {
    let mut groups = std::collections::BTreeMap::<(Vec<(usize, usize)>, Vec<i64>), f64>::new();
    for v in brute_force(n as i64, |v| f.admits(v)) {
        for shape in v.shapes() {
            let paired: Vec<usize> = shape.iter().flat_map(|&(p, m)| [p, m]).collect();
            let free: Vec<i64> = (1..=6).filter(|s| !paired.contains(s)).map(|s| v.slot(s)).collect();
            *groups.entry((shape, free)).or_default() += kind.value(&v).abs();
        }
    }
    groups.values().map(|s| s * s).sum()
}

#[test]
fn annal_bound_matches_oracles() {
    let direct: f64 = brute_force(1, |v| degree_by_definition(v) == 0)
        .iter()
        .map(|v| CoefficientKind::A.value(v).powi(2))
        .sum();
    assert!((annal_bound(1, FamilyTag::I0, CoefficientKind::A) - direct).abs() <= 1e-14 * direct.max(1e-300));
    let families = [FamilyTag::I0, FamilyTag::I(1, 5), FamilyTag::I(4, 2), FamilyTag::I(6, 2), FamilyTag::HatI(6, 3), FamilyTag::TildeI(6, 2)];
    for n in [2usize, 3] {
        for f in families {
            for kind in [CoefficientKind::A, CoefficientKind::B] {
                let fast = annal_bound(n, f, kind);
                let slow = annal_bound_exhaustive(n, f, kind);
                let hand = annal_by_hand(n, f, kind);
                assert!((fast - slow).abs() <= 1e-12 * slow.max(1e-300), "{n} {f} {kind}");
                assert!((hand - slow).abs() <= 1e-12 * slow.max(1e-300), "{n} {f} {kind}");
            }
        }
    }
}

#[test]
fn annal_bound_decreases() {
    let i0: Vec<f64> = [4, 8, 16].iter().map(|&n| annal_bound(n, FamilyTag::I0, CoefficientKind::A)).collect();
    assert!(i0.iter().all(|x| x.is_finite()) && i0.windows(2).all(|w| w[1] < w[0]));
    let i15: Vec<f64> = [4, 8, 16].iter().map(|&n| annal_bound(n, FamilyTag::I(1, 5), CoefficientKind::A)).collect();
    assert!(i15.windows(2).all(|w| w[1] < w[0]));
}

/// Exact second moment from all pairings of the Gaussian factors, one
/// monomial at a time (the sums are over few terms at N = 1).
fn wick_by_matchings(terms: &[(IndexVector6, f64)]) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, k - 1);
                out.push(q);
            }
        }
        out
    }
    let all = perms(6);
    let mut total = 0.0;
    for (v, a) in terms {
        for (w, b) in terms {
            // g-factors: plus slots of v and minus slots of w; ḡ-factors: the rest.
            let gs: Vec<i64> = [0usize, 3, 5].iter().map(|&s| v.0[s]).chain([1usize, 2, 4].iter().map(|&s| w.0[s])).collect();
            let gbars: Vec<i64> = [1usize, 2, 4].iter().map(|&s| v.0[s]).chain([0usize, 3, 5].iter().map(|&s| w.0[s])).collect();
            let count = all.iter().filter(|p| (0..6).all(|i| gs[i] == gbars[p[i]])).count();
            total += a * b * count as f64;
        }
    }
    total
}

#[test]
fn wick_matches_explicit_matchings() {
    for f in [FamilyTag::I0, FamilyTag::I(6, 2), FamilyTag::I(1, 5)] {
        for kind in [CoefficientKind::A, CoefficientKind::B] {
            let terms: Vec<(IndexVector6, f64)> = enumerate_family(1, f).into_iter().map(|v| (v, kind.value(&v))).collect();
            let exact = wick_second_moment(1, f, kind).unwrap();
            let want = wick_by_matchings(&terms);
            assert!((exact - want).abs() <= 1e-12 * want.max(1e-300), "{f} {kind}: {exact} vs {want}");
        }
    }
    assert!(matches!(wick_second_moment(5, FamilyTag::I0, CoefficientKind::A), Err(PairingError::Budget { .. })));
}

#[test]
fn duality_constants_for_all_kinds() {
    for kind in [CoefficientKind::A, CoefficientKind::B, CoefficientKind::C] {
        for draw in 0..4u64 {
            let n = 6;
            let g = sample_gaussians(&GaussianSamplerSpec::new(2, n, 8, "dual").for_sample(draw));
            let field = field_functional(n, kind, &g).unwrap();
            let sum = pathwise_sum_by(n, kind, &g, |_| true).unwrap();
            let want = duality_constant(kind) * sum.value.im;
            assert!((field - want).abs() <= 1e-10 * (field.abs() + 1e-12), "{kind}: {field} vs {want}");
        }
    }
}

#[test]
fn non_cancelling_subset_keeps_the_imaginary_part() {
    let g = sample_gaussians(&GaussianSamplerSpec::new(2, 6, 9, "subset"));
    let all = pathwise_sum_by(6, CoefficientKind::A, &g, |_| true).unwrap();
    let sub = pathwise_sum_by(6, CoefficientKind::A, &g, non_cancelling).unwrap();
    assert!((all.value.im - sub.value.im).abs() <= 1e-12 * all.scale);
}

#[test]
fn zero_gaussians() {
    let g = vec![Complex64::new(0.0, 0.0); 9];
    assert_eq!(pathwise_sum(4, FamilyTag::TildeI(6, 2), CoefficientKind::A, &g).unwrap().value, Complex64::new(0.0, 0.0));
}

#[test]
fn general_coefficients() {
    let v = IndexVector6([3, -1, 2, 4, -2, 0]);
    assert_eq!(CoefficientKind::An(2).value(&v), CoefficientKind::A.value(&v));
    let w = IndexVector6([5, 1, 1, -2, 4, 3]);
    let p = 3.0f64;
    let q = -3.0f64;
    let den: f64 = w.0.iter().map(|&j| (1.0 + (j as f64).powi(6)).sqrt()).product();
    assert!((CoefficientKind::An(3).value(&w) - (p * q).powi(2) * 3.0 / den).abs() < 1e-15);
}
