//! Index combinatorics of the sextic Gaussian sums.
//!
//! A vector `j = (j1, …, j6)` carries the conjugation signature
//! `(+, −, −, +, −, +)`, i.e. it labels the monomial
//! `g_j = g_{j1} ḡ_{j2} ḡ_{j3} g_{j4} ḡ_{j5} g_{j6}`. With
//! `L(j) = j1 − j2 − j3 + j4 − j5 + j6` and `P(j) = j1 − j2 − j3`, the
//! resonant set `I_N` holds the vectors with entries in `[−N, N]`, `L = 0` and
//! `|P| > N`.
//!
//! A pairing matches a `+` slot with a `−` slot holding the same value. The
//! pairing degree `r` of a vector is the size of a maximum such matching;
//! since equal values form complete bipartite blocks it is
//! `Σ_v min(#plus slots = v, #minus slots = v)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::flow::{e_star_analytic, FlowError};
use crate::hierarchy::energies_with;
use crate::measures::{chi_r, field_from_gaussians, map_indexed, sample_mu, CutoffSpec, GaussianSamplerSpec, McEstimate, MeasureError};
use crate::numeric::{ols, ComplexSum, NeumaierSum};
use crate::spectral::{Factor, SpectralError, Transforms};

/// `+1` for `g`, `−1` for `ḡ`, slot by slot.
pub const SIGNATURE: [i64; 6] = [1, -1, -1, 1, -1, 1];
/// One-based slots carrying `g`.
pub const PLUS_SLOTS: [usize; 3] = [1, 4, 6];
/// One-based slots carrying `ḡ`.
pub const MINUS_SLOTS: [usize; 3] = [2, 3, 5];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PairingError {
    #[error("unknown family tag `{0}`")]
    BadFamily(String),
    #[error("unknown coefficient kind `{0}`")]
    BadKind(String),
    #[error("exact second moment limited to N <= {limit}, got N = {n}")]
    Budget { n: usize, limit: usize },
    #[error("Gaussian array has length {got}, expected {expected}")]
    BadGaussians { got: usize, expected: usize },
    #[error("decay fit needs at least 3 points with positive values")]
    BadFit,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexVector6(pub [i64; 6]);

impl IndexVector6 {
    /// Entry at a one-based slot.
    pub fn slot(&self, s: usize) -> i64 {
        self.0[s - 1]
    }

    pub fn l_sum(&self) -> i64 {
        self.0.iter().zip(SIGNATURE).map(|(j, s)| j * s).sum()
    }

    pub fn p_sum(&self) -> i64 {
        self.0[0] - self.0[1] - self.0[2]
    }

    pub fn distinct_count(&self) -> usize {
        let mut v = self.0;
        v.sort_unstable();
        1 + v.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|j| j.abs()).max().unwrap_or(0)
    }

    /// Entries in `[−N, N]`, `L = 0`, `|P| > N`.
    pub fn in_resonant_set(&self, n: usize) -> bool {
        let n = n as i64;
        self.max_abs() <= n && self.l_sum() == 0 && self.p_sum().abs() > n
    }

    /// `Σ_v min(#plus = v, #minus = v)`.
    pub fn pairing_degree(&self) -> usize {
        let mut used = [false; 3];
        let mut r = 0;
        for &p in &PLUS_SLOTS {
            for (mi, &m) in MINUS_SLOTS.iter().enumerate() {
                if !used[mi] && self.slot(p) == self.slot(m) {
                    used[mi] = true;
                    r += 1;
                    break;
                }
            }
        }
        r
    }

    /// Every maximum matching of equal `+`/`−` slots, each as a list of
    /// one-based `(plus, minus)` pairs sorted by the plus slot.
    pub fn shapes(&self) -> Vec<Vec<(usize, usize)>> {
        let r = self.pairing_degree();
        let mut out = Vec::new();
        let mut current = Vec::new();
        self.extend_shapes(0, 0u8, r, &mut current, &mut out);
        out
    }

    fn extend_shapes(&self, pi: usize, used: u8, r: usize, current: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if current.len() == r {
            out.push(current.clone());
            return;
        }
        if pi == 3 || current.len() + (3 - pi) < r {
            return;
        }
        let p = PLUS_SLOTS[pi];
        for (mi, &m) in MINUS_SLOTS.iter().enumerate() {
            if used & (1 << mi) == 0 && self.slot(p) == self.slot(m) {
                current.push((p, m));
                self.extend_shapes(pi + 1, used | (1 << mi), r, current, out);
                current.pop();
            }
        }
        self.extend_shapes(pi + 1, used, r, current, out);
    }
}

impl fmt::Display for IndexVector6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let j = self.0;
        write!(f, "({},{},{},{},{},{})", j[0], j[1], j[2], j[3], j[4], j[5])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairingClass {
    Zero,
    /// One-based `(plus, minus)` slots of the matched pair. When several
    /// pairs are possible the lexicographically smallest is reported.
    One((usize, usize)),
    /// `r >= 2` matched pairs; `x[m]` is matched with `y[m]`.
    R { r: usize, x: Vec<usize>, y: Vec<usize> },
}

pub fn classify(v: &IndexVector6) -> PairingClass {
    let shapes = v.shapes();
    let first = &shapes[0];
    match first.len() {
        0 => PairingClass::Zero,
        1 => PairingClass::One(*shapes.iter().map(|s| &s[0]).min().expect("nonempty")),
        r => {
            let best = shapes.iter().min().expect("nonempty");
            PairingClass::R {
                r,
                x: best.iter().map(|p| p.0).collect(),
                y: best.iter().map(|p| p.1).collect(),
            }
        }
    }
}

/// Index families of the resonant set.
///
/// `I(k, l)` holds the 1-pairings with `j_k = j_l`; a vector with three
/// equal entries may sit in two such families. `TildeI(k, l)` keeps the
/// members with exactly five distinct entries and `HatI(k, l)` the rest.
/// Slot pairs are stored as `(plus, minus)` and written in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyTag {
    I0,
    I(usize, usize),
    TildeI(usize, usize),
    HatI(usize, usize),
}

fn normalize_pair(a: usize, b: usize) -> Option<(usize, usize)> {
    let plus = |s| PLUS_SLOTS.contains(&s);
    let minus = |s| MINUS_SLOTS.contains(&s);
    if plus(a) && minus(b) {
        Some((a, b))
    } else if plus(b) && minus(a) {
        Some((b, a))
    } else {
        None
    }
}

impl FamilyTag {
    pub fn pair(k: usize, l: usize) -> Option<Self> {
        normalize_pair(k, l).map(|(p, m)| FamilyTag::I(p, m))
    }

    pub fn tilde(k: usize, l: usize) -> Option<Self> {
        normalize_pair(k, l).map(|(p, m)| FamilyTag::TildeI(p, m))
    }

    pub fn hat(k: usize, l: usize) -> Option<Self> {
        normalize_pair(k, l).map(|(p, m)| FamilyTag::HatI(p, m))
    }

    /// All nine `I(k, l)` families.
    pub fn all_pairs() -> Vec<Self> {
        let mut out = Vec::new();
        for p in PLUS_SLOTS {
            for m in MINUS_SLOTS {
                out.push(FamilyTag::I(p, m));
            }
        }
        out
    }

    /// `(plus, minus)` slots of the fixed pairing, if any.
    pub fn pairing(&self) -> Option<(usize, usize)> {
        match *self {
            FamilyTag::I0 => None,
            FamilyTag::I(p, m) | FamilyTag::TildeI(p, m) | FamilyTag::HatI(p, m) => Some((p, m)),
        }
    }

    /// Membership given that `v` already lies in the resonant set.
    pub fn admits(&self, v: &IndexVector6) -> bool {
        match *self {
            FamilyTag::I0 => v.pairing_degree() == 0,
            FamilyTag::I(p, m) => v.slot(p) == v.slot(m) && v.pairing_degree() == 1,
            FamilyTag::TildeI(p, m) => v.slot(p) == v.slot(m) && v.pairing_degree() == 1 && v.distinct_count() == 5,
            FamilyTag::HatI(p, m) => v.slot(p) == v.slot(m) && v.pairing_degree() == 1 && v.distinct_count() != 5,
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sorted = |p: usize, m: usize| (p.min(m), p.max(m));
        match *self {
            FamilyTag::I0 => write!(f, "I0"),
            FamilyTag::I(p, m) => {
                let (a, b) = sorted(p, m);
                write!(f, "I({a},{b})")
            }
            FamilyTag::TildeI(p, m) => {
                let (a, b) = sorted(p, m);
                write!(f, "TildeI({a},{b})")
            }
            FamilyTag::HatI(p, m) => {
                let (a, b) = sorted(p, m);
                write!(f, "HatI({a},{b})")
            }
        }
    }
}

impl FromStr for FamilyTag {
    type Err = PairingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "I0" {
            return Ok(FamilyTag::I0);
        }
        let bad = || PairingError::BadFamily(s.to_string());
        let open = t.find('(').ok_or_else(bad)?;
        let inner = t[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.parse().map_err(|_| bad())?;
        match &t[..open] {
            "I" => FamilyTag::pair(a, b),
            "TildeI" => FamilyTag::tilde(a, b),
            "HatI" => FamilyTag::hat(a, b),
            _ => None,
        }
        .ok_or_else(bad)
    }
}

pub fn in_family(v: &IndexVector6, n: usize, f: FamilyTag) -> bool {
    v.in_resonant_set(n) && f.admits(v)
}

/// Coefficient functions of the sextic sums, with `⟨x⟩ = sqrt(1 + x²)`:
///
/// ```text
/// A  = P (j4 − j5 + j6) j6 / ∏ ⟨j_i²⟩
/// B  = j1 j2 j6 / ∏ ⟨j_i²⟩
/// C  = j2 j3 j6 / ∏ ⟨j_i²⟩
/// An = P^{n−1} (j4 − j5 + j6)^{n−1} j6 / ∏ sqrt(1 + j_i^{2n})
/// ```
///
/// `An(2)` coincides with `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoefficientKind {
    A,
    B,
    C,
    An(u32),
}

impl CoefficientKind {
    fn level(&self) -> u32 {
        match self {
            CoefficientKind::An(n) => *n,
            _ => 2,
        }
    }

    /// `1/sqrt(1 + j^{2n})` for `j = −N..=N`.
    fn weights(&self, n: usize) -> Vec<f64> {
        let lvl = self.level() as i32;
        let n = n as i64;
        (-n..=n).map(|j| (1.0 + (j as f64).powi(2 * lvl)).sqrt().recip()).collect()
    }

    pub fn value(&self, v: &IndexVector6) -> f64 {
        let weight = |j: i64| (1.0 + (j as f64).powi(2 * self.level() as i32)).sqrt().recip();
        let den: f64 = v.0.iter().map(|&j| weight(j)).product();
        self.numerator(v) * den
    }

    fn numerator(&self, v: &IndexVector6) -> f64 {
        let j = v.0.map(|x| x as f64);
        let p = j[0] - j[1] - j[2];
        let q = j[3] - j[4] + j[5];
        match self {
            CoefficientKind::A => p * q * j[5],
            CoefficientKind::B => j[0] * j[1] * j[5],
            CoefficientKind::C => j[1] * j[2] * j[5],
            CoefficientKind::An(n) => (p * q).powi(*n as i32 - 1) * j[5],
        }
    }
}

impl fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::A => write!(f, "A"),
            CoefficientKind::B => write!(f, "B"),
            CoefficientKind::C => write!(f, "C"),
            CoefficientKind::An(n) => write!(f, "A{n}"),
        }
    }
}

impl FromStr for CoefficientKind {
    type Err = PairingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(CoefficientKind::A),
            "B" => Ok(CoefficientKind::B),
            "C" => Ok(CoefficientKind::C),
            t => t
                .strip_prefix('A')
                .and_then(|n| n.parse::<u32>().ok())
                .filter(|n| *n >= 1)
                .map(CoefficientKind::An)
                .ok_or_else(|| PairingError::BadKind(s.to_string())),
        }
    }
}

/// Coefficient with precomputed weights, used by the summation loops.
struct FastCoeff {
    kind: CoefficientKind,
    weights: Vec<f64>,
    n: i64,
}

impl FastCoeff {
    fn new(kind: CoefficientKind, n: usize) -> Self {
        FastCoeff {
            kind,
            weights: kind.weights(n),
            n: n as i64,
        }
    }

    #[inline]
    fn value(&self, v: &IndexVector6) -> f64 {
        let mut den = 1.0;
        for &j in &v.0 {
            den *= self.weights[(j + self.n) as usize];
        }
        self.kind.numerator(v) * den
    }
}

/// Visits members of the resonant set with leading index `j1`, in
/// lexicographic order, for which `keep` holds.
fn for_each_resonant_with_lead(n: usize, j1: i64, mut visit: impl FnMut(IndexVector6)) {
    let nn = n as i64;
    for j2 in -nn..=nn {
        for j3 in -nn..=nn {
            let p = j1 - j2 - j3;
            if p.abs() <= nn {
                continue;
            }
            for j4 in -nn..=nn {
                let lo = (p + j4 - nn).max(-nn);
                let hi = (p + j4 + nn).min(nn);
                for j5 in lo..=hi {
                    let j6 = j5 - j4 - p;
                    visit(IndexVector6([j1, j2, j3, j4, j5, j6]));
                }
            }
        }
    }
}

/// Calls `visit` on every member of the family, in lexicographic order.
pub fn for_each_member(n: usize, f: FamilyTag, mut visit: impl FnMut(&IndexVector6)) {
    let nn = n as i64;
    for j1 in -nn..=nn {
        for_each_resonant_with_lead(n, j1, |v| {
            if f.admits(&v) {
                visit(&v);
            }
        });
    }
}

/// All members of the family in lexicographic order. Intended for moderate
/// `N`; the summation routines stream instead of collecting.
pub fn enumerate_family(n: usize, f: FamilyTag) -> Vec<IndexVector6> {
    let mut out = Vec::new();
    for_each_member(n, f, |v| out.push(*v));
    out
}

pub fn count_family(n: usize, f: FamilyTag) -> usize {
    let mut c = 0;
    for_each_member(n, f, |_| c += 1);
    c
}

/// Reduces `per_lead(j1)` over the leading index in order.
fn reduce_over_lead<T: Send>(n: usize, per_lead: impl Fn(i64) -> T + Sync + Send) -> Vec<T> {
    let nn = n as i64;
    map_indexed(2 * n + 1, |i| per_lead(i as i64 - nn))
}

/// `g_{j1} ḡ_{j2} ḡ_{j3} g_{j4} ḡ_{j5} g_{j6}` for `g` indexed `−N..=N`.
#[inline]
pub fn monomial(g: &[Complex64], n: usize, v: &IndexVector6) -> Complex64 {
    let at = |s: usize| g[(v.0[s] + n as i64) as usize];
    at(0) * at(1).conj() * at(2).conj() * at(3) * at(4).conj() * at(5)
}

/// A pathwise sum and the scale `Σ |coeff| |g_j|` against which its rounding
/// error should be judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSum {
    pub value: Complex64,
    pub scale: f64,
}

/// `Σ_{j ∈ family} coeff(j) g_j`.
pub fn pathwise_sum(n: usize, f: FamilyTag, kind: CoefficientKind, g: &[Complex64]) -> Result<PathwiseSum, PairingError> {
    pathwise_sum_by(n, kind, g, |v| f.admits(v))
}

/// Same sum over the members of the resonant set selected by `keep`.
pub fn pathwise_sum_by(n: usize, kind: CoefficientKind, g: &[Complex64], keep: impl Fn(&IndexVector6) -> bool + Sync + Send) -> Result<PathwiseSum, PairingError> {
    if g.len() != 2 * n + 1 {
        return Err(PairingError::BadGaussians {
            got: g.len(),
            expected: 2 * n + 1,
        });
    }
    let coeff = FastCoeff::new(kind, n);
    let parts = reduce_over_lead(n, |j1| {
        let mut value = ComplexSum::default();
        let mut scale = NeumaierSum::default();
        for_each_resonant_with_lead(n, j1, |v| {
            if keep(&v) {
                let c = coeff.value(&v);
                let m = monomial(g, n, &v);
                value.add(m * c);
                scale.add(c.abs() * m.norm());
            }
        });
        (value, scale)
    });
    let mut value = ComplexSum::default();
    let mut scale = NeumaierSum::default();
    for (v, s) in &parts {
        value.merge(v);
        scale.merge(s);
    }
    Ok(PathwiseSum {
        value: value.value(),
        scale: scale.value(),
    })
}

/// Partner used in the cancellation over `TildeI(2,6)` and `TildeI(3,6)`:
/// `(j1, j, j3, j4, j5, j) ↦ (j5, j, j4, j3, j1, j)` and
/// `(j1, j2, j, j4, j5, j) ↦ (j5, j4, j, j2, j1, j)`.
pub fn tilde_partner(v: &IndexVector6, f: FamilyTag) -> Option<IndexVector6> {
    let j = v.0;
    match f {
        FamilyTag::TildeI(6, 2) => Some(IndexVector6([j[4], j[1], j[3], j[2], j[0], j[5]])),
        FamilyTag::TildeI(6, 3) => Some(IndexVector6([j[4], j[3], j[2], j[1], j[0], j[5]])),
        _ => None,
    }
}

fn pack_key(shape: &[(usize, usize)], v: &IndexVector6) -> u64 {
    let mut bits: u64 = 0;
    let mut paired = [false; 6];
    for &(p, m) in shape {
        let pi = PLUS_SLOTS.iter().position(|&s| s == p).expect("plus slot");
        let mi = MINUS_SLOTS.iter().position(|&s| s == m).expect("minus slot");
        bits |= 1 << (3 * pi + mi);
        paired[p - 1] = true;
        paired[m - 1] = true;
    }
    let mut key = bits << 48;
    let mut shift = 0;
    for s in 0..6 {
        if !paired[s] {
            key |= ((v.0[s] + 128) as u64 & 0xff) << shift;
            shift += 8;
        }
    }
    key
}

/// Right-hand side of the second-moment bound: the sum over pairing shapes
/// `(X, Y)` and free-index vectors `h` of `(Σ |coeff|)²`, the inner sum
/// running over family members that are `(X, Y)`-pairings with free part
/// `h`. A member with several maximum matchings contributes to each.
///
/// `I0` reduces to the plain sum of squares; the pairing families use a
/// loop over the free indices with the paired value innermost.
pub fn annal_bound(n: usize, f: FamilyTag, kind: CoefficientKind) -> f64 {
    let coeff = FastCoeff::new(kind, n);
    match f.pairing() {
        None => {
            let parts = reduce_over_lead(n, |j1| {
                let mut acc = NeumaierSum::default();
                for_each_resonant_with_lead(n, j1, |v| {
                    if f.admits(&v) {
                        let c = coeff.value(&v);
                        acc.add(c * c);
                    }
                });
                acc
            });
            let mut acc = NeumaierSum::default();
            parts.iter().for_each(|p| acc.merge(p));
            acc.value()
        }
        Some(pair) => annal_bound_paired(n, f, pair, &coeff),
    }
}

fn annal_bound_paired(n: usize, f: FamilyTag, (kp, lm): (usize, usize), coeff: &FastCoeff) -> f64 {
    let nn = n as i64;
    let free: Vec<usize> = (1..=6).filter(|&s| s != kp && s != lm).collect();
    let sig: Vec<i64> = free.iter().map(|&s| SIGNATURE[s - 1]).collect();
    let primary = vec![(kp, lm)];
    let parts = reduce_over_lead(n, |h0| {
        let mut squares = NeumaierSum::default();
        let mut extra: HashMap<u64, NeumaierSum> = HashMap::new();
        for h1 in -nn..=nn {
            for h2 in -nn..=nn {
                let h3 = -sig[3] * (sig[0] * h0 + sig[1] * h1 + sig[2] * h2);
                if h3.abs() > nn {
                    continue;
                }
                let mut inner = NeumaierSum::default();
                for j in -nn..=nn {
                    let mut e = [0i64; 6];
                    e[kp - 1] = j;
                    e[lm - 1] = j;
                    for (slot, val) in free.iter().zip([h0, h1, h2, h3]) {
                        e[slot - 1] = val;
                    }
                    let v = IndexVector6(e);
                    if v.p_sum().abs() <= nn || !f.admits(&v) {
                        continue;
                    }
                    let c = coeff.value(&v).abs();
                    inner.add(c);
                    let shapes = v.shapes();
                    if shapes.len() > 1 {
                        for s in shapes.iter().filter(|s| **s != primary) {
                            extra.entry(pack_key(s, &v)).or_default().add(c);
                        }
                    }
                }
                let s = inner.value();
                squares.add(s * s);
            }
        }
        (squares, extra)
    });
    let mut total = NeumaierSum::default();
    let mut extra: BTreeMap<u64, NeumaierSum> = BTreeMap::new();
    for (sq, ex) in parts {
        total.merge(&sq);
        for (k, v) in ex {
            extra.entry(k).or_default().merge(&v);
        }
    }
    for v in extra.values() {
        let s = v.value();
        total.add(s * s);
    }
    total.value()
}

/// Reference evaluation of [`annal_bound`] that enumerates the whole
/// resonant set and groups every shape through a map. Only for small `N`.
pub fn annal_bound_exhaustive(n: usize, f: FamilyTag, kind: CoefficientKind) -> f64 {
    let mut groups: BTreeMap<u64, NeumaierSum> = BTreeMap::new();
    for_each_member(n, f, |v| {
        let c = kind.value(v).abs();
        for s in v.shapes() {
            groups.entry(pack_key(&s, v)).or_default().add(c);
        }
    });
    let mut total = NeumaierSum::default();
    for v in groups.values() {
        let s = v.value();
        total.add(s * s);
    }
    total.value()
}

/// Largest `N` accepted by the exact second moment.
pub const WICK_MAX_N: usize = 4;

/// Per-index powers `(index, #g, #ḡ)` of a monomial, sorted by index.
pub type Monomial = Vec<(i64, u32, u32)>;

pub fn monomial_of(v: &IndexVector6) -> Monomial {
    let mut counts: BTreeMap<i64, (u32, u32)> = BTreeMap::new();
    for (j, s) in v.0.iter().zip(SIGNATURE) {
        let e = counts.entry(*j).or_default();
        if s > 0 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    counts.into_iter().map(|(j, (p, q))| (j, p, q)).collect()
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// `E |Σ c_m M_m|²` for standard complex Gaussians, through
/// `E[M conj(M')] = ∏_i (p_i + q'_i)!` when every index has the same net
/// power `p_i − q_i` in both monomials and zero otherwise.
pub fn wick_second_moment_terms(terms: &[(Monomial, Complex64)]) -> f64 {
    let mut merged: BTreeMap<Monomial, Complex64> = BTreeMap::new();
    for (m, c) in terms {
        let mut m: Monomial = m.iter().copied().filter(|(_, p, q)| p + q > 0).collect();
        m.sort_unstable();
        *merged.entry(m).or_default() += *c;
    }
    let mut groups: BTreeMap<Vec<(i64, i64)>, Vec<(&Monomial, Complex64)>> = BTreeMap::new();
    for (m, c) in &merged {
        let net: Vec<(i64, i64)> = m
            .iter()
            .filter(|(_, p, q)| p != q)
            .map(|(j, p, q)| (*j, *p as i64 - *q as i64))
            .collect();
        groups.entry(net).or_default().push((m, *c));
    }
    let mut total = NeumaierSum::default();
    for members in groups.values() {
        for (m1, c1) in members {
            for (m2, c2) in members {
                let mut e = 1.0;
                let (mut a, mut b) = (m1.iter().peekable(), m2.iter().peekable());
                loop {
                    match (a.peek(), b.peek()) {
                        (None, None) => break,
                        (Some(&&(j1, p1, _)), Some(&&(j2, _, q2))) if j1 == j2 => {
                            e *= factorial(p1 + q2);
                            a.next();
                            b.next();
                        }
                        (Some(&&(j1, p1, _)), Some(&&(j2, _, _))) if j1 < j2 => {
                            e *= factorial(p1);
                            a.next();
                        }
                        (Some(&&(_, p1, _)), None) => {
                            e *= factorial(p1);
                            a.next();
                        }
                        (_, Some(&&(_, _, q2))) => {
                            e *= factorial(q2);
                            b.next();
                        }
                    }
                }
                total.add((c1 * c2.conj()).re * e);
            }
        }
    }
    total.value()
}

/// Exact `E |Σ_{family} coeff(j) g_j|²`; refused above [`WICK_MAX_N`].
pub fn wick_second_moment(n: usize, f: FamilyTag, kind: CoefficientKind) -> Result<f64, PairingError> {
    if n > WICK_MAX_N {
        return Err(PairingError::Budget { n, limit: WICK_MAX_N });
    }
    let mut terms = Vec::new();
    for_each_member(n, f, |v| {
        terms.push((monomial_of(v), Complex64::new(kind.value(v), 0.0)));
    });
    Ok(wick_second_moment_terms(&terms))
}

/// Least-squares slope of `log y` against `log N` and its standard error.
pub fn decay_fit(points: &[(f64, f64)]) -> Result<(f64, f64), PairingError> {
    if points.len() < 3 || points.iter().any(|(x, y)| !(*y > 0.0) || !(*x > 0.0)) {
        return Err(PairingError::BadFit);
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let fit = ols(&x, &y).ok_or(PairingError::BadFit)?;
    Ok((fit.slope, fit.slope_stderr))
}

/// Monte-Carlo estimates of
/// `E[(χ_R(E_1(Π_N u)) · w(E_3(Π_N u)) · E*_{j,N}(u))²]` under `μ_2`, with
/// `w = χ_R'` for `j = 3` and `w = χ_R` for `j = 5`.
pub fn estar_l2_decay(j: usize, ladder: &[usize], r: f64, spec: &GaussianSamplerSpec, n_samples: usize) -> Result<Vec<(usize, McEstimate)>, PairingError> {
    if spec.n != 2 {
        return Err(MeasureError::Params(format!("sampler level must be 2, got {}", spec.n)).into());
    }
    if j != 3 && j != 5 {
        return Err(FlowError::Params(format!("j must be 3 or 5, got {j}")).into());
    }
    if let Some(&nmax) = ladder.iter().max() {
        if spec.cutoff_k < 3 * nmax + 1 {
            return Err(MeasureError::Params(format!("sample cutoff {} below 3N+1", spec.cutoff_k)).into());
        }
    }
    if n_samples < 2 {
        return Err(MeasureError::Params("need at least two samples".into()).into());
    }
    let c = CutoffSpec { r };
    let rows: Vec<Vec<f64>> = map_indexed(n_samples, |i| {
        let u = sample_mu(&spec.for_sample(i as u64));
        let mut tr = Transforms::new();
        ladder
            .iter()
            .map(|&nn| {
                let low = u.project_low(nn).with_cutoff(nn);
                let w1 = chi_r(low.l2_norm_sq(), &c, false);
                if w1 == 0.0 {
                    return 0.0;
                }
                let e3 = match energies_with(&mut tr, &low, 3) {
                    Ok(e) => e[2],
                    Err(_) => return f64::NAN,
                };
                let w3 = chi_r(e3, &c, j == 3);
                if w3 == 0.0 {
                    return 0.0;
                }
                match e_star_analytic(&u, j, nn) {
                    Ok(e) => (w1 * w3 * e).powi(2),
                    Err(_) => f64::NAN,
                }
            })
            .collect()
    });
    Ok(ladder
        .iter()
        .enumerate()
        .map(|(col, &nn)| {
            let vals: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            (nn, McEstimate::from_values(&vals, spec.seed))
        })
        .collect())
}

/// Field-space counterpart of a coefficient kind on `u = Π_N` of the `μ_2`
/// field built from `g`, with `f = |u|²∂u`:
///
/// ```text
/// A:  Re ∫ ∂(|u|² ū) ∂Π_{>N} f
/// B:  Re ∫ Π_{>N} f · ū |∂u|²
/// C:  Re ∫ Π_{>N} f · (∂ū)² u
/// ```
pub fn field_functional(n: usize, kind: CoefficientKind, g: &[Complex64]) -> Result<f64, PairingError> {
    use Factor as F;
    if g.len() != 2 * n + 1 {
        return Err(PairingError::BadGaussians {
            got: g.len(),
            expected: 2 * n + 1,
        });
    }
    let u = field_from_gaussians(g, 2);
    let du = u.derivative(1);
    let mut tr = Transforms::new();
    let f = tr.product(&[F::plain(&u), F::conj(&u), F::plain(&du)], 3 * n)?;
    let pf = f.project_high(n);
    let value = match kind {
        CoefficientKind::A | CoefficientKind::An(2) => {
            let gg = tr.product(&[F::plain(&u), F::conj(&u), F::conj(&u)], 3 * n)?;
            gg.derivative(1).integral_with(&pf.derivative(1)).re
        }
        CoefficientKind::B => tr.product_integral(&[F::plain(&pf), F::conj(&u), F::plain(&du), F::conj(&du)])?.re,
        CoefficientKind::C => tr.product_integral(&[F::plain(&pf), F::conj(&du), F::conj(&du), F::plain(&u)])?.re,
        CoefficientKind::An(_) => {
            return Err(PairingError::BadKind(format!("no field functional for {kind}")));
        }
    };
    Ok(value)
}

/// Constant `c` with `field_functional = c · Im Σ_{I_N} coeff · g_j`.
pub fn duality_constant(kind: CoefficientKind) -> f64 {
    let c = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    match kind {
        CoefficientKind::B => -c,
        _ => c,
    }
}

/// Selector for the kind-A comparison: the resonant set without the
/// `r >= 2` vectors and without `TildeI(2,6) ∪ TildeI(3,6)`.
pub fn non_cancelling(v: &IndexVector6) -> bool {
    let r = v.pairing_degree();
    if r >= 2 {
        return false;
    }
    if r == 1 {
        let tilde = [FamilyTag::TildeI(6, 2), FamilyTag::TildeI(6, 3)];
        return !tilde.iter().any(|t| t.admits(v));
    }
    true
}
