//! Schur-complement resolvents, the `Q`/`G`/`K`/`F` functions of punctured
//! domains, and brute-force trajectory weights with the audits built on them.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::linalg::{hermitian_eigenvalues, CMatrix, CVector};

/// Largest domain on which trajectories are enumerated.
pub const ENUMERATION_LIMIT: usize = 12;
/// Largest trajectory length enumerated.
pub const K_MAX: usize = 6;
/// Domains up to this size are re-inverted densely after every Schur assembly.
pub const AUDIT_LIMIT: usize = 64;
/// Relative agreement required between Schur assembly and dense inversion.
pub const AUDIT_TOL: f64 = 1e-9;
/// Blocks with smallest singular value below this fraction of `1 + ‖·‖`
/// count as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchurError {
    #[error("block {block} is singular (smallest singular value {sigma_min:e})")]
    SingularBlock { block: String, sigma_min: f64 },
    #[error("hypothesis {item} failed: {detail}")]
    HypothesisFailed { item: String, detail: String },
    #[error("Schur assembly disagrees with dense inversion (relative error {0:e})")]
    AuditMismatch(f64),
    #[error("principal set must have one or two points, got {0}")]
    BadPrincipal(usize),
}

fn hypothesis(item: &str, detail: String) -> SchurError {
    SchurError::HypothesisFailed {
        item: item.to_string(),
        detail,
    }
}

fn sub(h: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| h[(rows[i], cols[j])])
}

/// `E − H`.
pub fn shifted(h: &CMatrix, e: f64) -> CMatrix {
    CMatrix::from_diagonal_element(h.nrows(), h.nrows(), Complex64::new(e, 0.0)) - h
}

/// Smallest singular value of a Hermitian matrix.
fn sigma_min(a: &CMatrix) -> f64 {
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    hermitian_eigenvalues(&sym)
        .into_iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Inverse of a Hermitian block, or `SingularBlock`.
fn invert_hermitian(a: &CMatrix, name: &str) -> Result<CMatrix, SchurError> {
    if a.nrows() == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let smin = sigma_min(a);
    if smin <= SINGULAR_TOL * (1.0 + max_abs(a)) {
        return Err(SchurError::SingularBlock {
            block: name.to_string(),
            sigma_min: smin,
        });
    }
    a.clone().try_inverse().ok_or_else(|| SchurError::SingularBlock {
        block: name.to_string(),
        sigma_min: smin,
    })
}

/// Dense `(E − H)⁻¹`.
pub fn dense_resolvent(h: &CMatrix, e: f64) -> Result<CMatrix, SchurError> {
    invert_hermitian(&shifted(h, e), "E−H")
}

/// `(E − H)⁻¹` assembled from the four Schur blocks, with `split` the
/// indices of the first block. Small inputs are cross-checked densely.
pub fn schur_block_inverse(h: &CMatrix, split: &[usize], e: f64) -> Result<CMatrix, SchurError> {
    let n = h.nrows();
    let first: BTreeSet<usize> = split.iter().copied().collect();
    let i1: Vec<usize> = first.iter().copied().collect();
    let i2: Vec<usize> = (0..n).filter(|i| !first.contains(i)).collect();
    let a = shifted(h, e);
    let h1 = sub(&a, &i1, &i1);
    let g12 = sub(&a, &i1, &i2);
    let g21 = sub(&a, &i2, &i1);
    let h2 = sub(&a, &i2, &i2);
    let h1_inv = invert_hermitian(&h1, "𝓗₁")?;
    let t2 = &h2 - &g21 * &h1_inv * &g12;
    let t2_inv = invert_hermitian(&t2, "H̃₂")?;
    let b12 = -(&h1_inv * &g12 * &t2_inv);
    let b21 = -(&t2_inv * &g21 * &h1_inv);
    let b11 = &h1_inv + &h1_inv * &g12 * &t2_inv * &g21 * &h1_inv;
    let mut out = CMatrix::zeros(n, n);
    for (r, &i) in i1.iter().enumerate() {
        for (c, &j) in i1.iter().enumerate() {
            out[(i, j)] = b11[(r, c)];
        }
        for (c, &j) in i2.iter().enumerate() {
            out[(i, j)] = b12[(r, c)];
        }
    }
    for (r, &i) in i2.iter().enumerate() {
        for (c, &j) in i1.iter().enumerate() {
            out[(i, j)] = b21[(r, c)];
        }
        for (c, &j) in i2.iter().enumerate() {
            out[(i, j)] = t2_inv[(r, c)];
        }
    }
    if n <= AUDIT_LIMIT {
        let dense = dense_resolvent(h, e)?;
        let err = max_abs(&(&dense - &out)) / max_abs(&dense).max(f64::MIN_POSITIVE);
        if err > AUDIT_TOL {
            return Err(SchurError::AuditMismatch(err));
        }
    }
    Ok(out)
}

/// `K`, `Q`, `F` and (for two principal points) `G` of a punctured domain.
#[derive(Debug, Clone)]
pub struct QgValues {
    pub principal: Vec<usize>,
    pub punctured: Vec<usize>,
    /// `K = (E − H)⁻¹` on the punctured domain, indexed like `punctured`.
    pub k: CMatrix,
    /// `Q(m₀)` per principal point.
    pub q: Vec<Complex64>,
    /// `F(m₀, ·)` per principal point, indexed like `punctured`.
    pub f: Vec<CVector>,
    /// `(G(m₀⁺, m₀⁻), G(m₀⁻, m₀⁺))` when two distinct points are given.
    pub g: Option<(Complex64, Complex64)>,
}

impl QgValues {
    /// `max(|Im Q|, |G⁺⁻ − conj G⁻⁺|)`.
    pub fn selfadjoint_defect(&self) -> f64 {
        let q = self.q.iter().fold(0.0, |m: f64, z| m.max(z.im.abs()));
        let g = self.g.map_or(0.0, |(a, b)| (a - b.conj()).norm());
        q.max(g)
    }
}

/// `Q`, `G`, `K`, `F` for principal indices `{m₀}` or `{m₀⁺, m₀⁻}` of `H`.
pub fn q_g_functions(h: &CMatrix, principal: &[usize], e: f64) -> Result<QgValues, SchurError> {
    let mut p: Vec<usize> = principal.to_vec();
    p.dedup();
    if p.is_empty() || p.len() > 2 {
        return Err(SchurError::BadPrincipal(p.len()));
    }
    let n = h.nrows();
    let rest: Vec<usize> = (0..n).filter(|i| !p.contains(i)).collect();
    let k = invert_hermitian(&shifted(&sub(h, &rest, &rest), e), "punctured")?;
    let hop = |a: usize, b: usize| -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        for (r, &x) in rest.iter().enumerate() {
            for (c, &y) in rest.iter().enumerate() {
                z += h[(a, x)] * k[(r, c)] * h[(y, b)];
            }
        }
        z
    };
    let q = p.iter().map(|&m| hop(m, m)).collect();
    let f = p
        .iter()
        .map(|&m| CVector::from_fn(rest.len(), |r, _| (0..rest.len()).map(|c| k[(r, c)] * h[(rest[c], m)]).sum()))
        .collect();
    let g = (p.len() == 2).then(|| {
        let (a, b) = (p[0], p[1]);
        (h[(a, b)] + hop(a, b), h[(b, a)] + hop(b, a))
    });
    Ok(QgValues {
        principal: p,
        punctured: rest,
        k,
        q,
        f,
        g,
    })
}

/// `D` on a domain with the constants `T`, `κ₀`, `α₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub d: BTreeMap<i64, f64>,
    pub t: f64,
    pub kappa0: f64,
    pub alpha0: f64,
}

impl WeightProfile {
    pub fn uniform(labels: &[i64], value: f64, t: f64, kappa0: f64, alpha0: f64) -> Self {
        Self {
            d: labels.iter().map(|&l| (l, value)).collect(),
            t,
            kappa0,
            alpha0,
        }
    }

    /// `M = 4T/κ₀`.
    pub fn m_const(&self) -> f64 {
        4.0 * self.t / self.kappa0
    }

    pub fn get(&self, label: i64) -> f64 {
        self.d[&label]
    }

    /// `exp(−κ₀|x − y|^{α₀})`.
    pub fn decay(&self, lat: &Lattice, x: i64, y: i64) -> f64 {
        (-self.kappa0 * f64::from(lat.dist(x, y)).powf(self.alpha0)).exp()
    }

    /// First point breaking `D ≥ 1` or `D(m) ≤ T μ_Λ(m)^{α₀/5}` (when
    /// `D(m) ≥ M`), as `(label, D, allowed)`.
    pub fn class_violation(&self, lat: &Lattice, domain: &[i64]) -> Option<(i64, f64, f64)> {
        let set: BTreeSet<i64> = domain.iter().copied().collect();
        let m = self.m_const();
        for &x in domain {
            let d = self.get(x);
            if d < 1.0 {
                return Some((x, d, 1.0));
            }
            if d >= m {
                let mu = boundary_distance(lat, &set, x);
                let allowed = self.t * f64::from(mu).powf(self.alpha0 / 5.0);
                if d > allowed {
                    return Some((x, d, allowed));
                }
            }
        }
        None
    }
}

/// `dist(x, 𝔗 ∖ Λ)` for `x ∈ Λ`.
pub fn boundary_distance(lat: &Lattice, set: &BTreeSet<i64>, x: i64) -> u32 {
    let reach = set.iter().map(|&e| lat.dist(e, x)).max().unwrap_or(0) + 1;
    lat.offsets_up_to(reach)
        .into_iter()
        .find(|&(_, d)| !set.contains(&(x + d)))
        .map_or(reach, |(n, _)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryClass {
    Plain,
    Resonant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<i64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `‖γ‖ = Σ |nᵢ − nᵢ₊₁|^{α₀}`.
    pub fn path_norm(&self, lat: &Lattice, alpha0: f64) -> f64 {
        path_norm(lat, &self.points, alpha0)
    }

    /// `D̄(γ) = max D(nⱼ)`.
    pub fn d_bar(&self, profile: &WeightProfile) -> f64 {
        self.points.iter().map(|&p| profile.get(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log W_{D,κ₀}(γ) = −κ₀‖γ‖ + Σ D(nⱼ)`.
    pub fn log_w_upper(&self, lat: &Lattice, profile: &WeightProfile) -> f64 {
        -profile.kappa0 * self.path_norm(lat, profile.alpha0)
            + self.points.iter().map(|&p| profile.get(p)).sum::<f64>()
    }

    /// Admissibility, checked over every index pair.
    pub fn is_admissible(&self, lat: &Lattice, profile: &WeightProfile, class: TrajectoryClass) -> bool {
        let p = &self.points;
        if p.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        let n = p.len();
        let t = profile.t;
        let m = profile.m_const();
        let e = profile.alpha0 / 5.0;
        let ok = |i: usize, j: usize, conditional: bool| {
            let lo = profile.get(p[i]).min(profile.get(p[j]));
            (conditional && lo < m) || lo <= t * path_norm(lat, &p[i..=j], profile.alpha0).powf(e)
        };
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1;
                if class == TrajectoryClass::Resonant && adjacent {
                    continue;
                }
                if !ok(i, j, true) {
                    return false;
                }
            }
        }
        if class == TrajectoryClass::Resonant {
            for i in 0..n.saturating_sub(1) {
                if !exceptional(lat, profile, p[i], p[i + 1]) {
                    continue;
                }
                for jp in 0..i {
                    if !ok(jp, i, false) || !ok(jp, i + 1, false) {
                        return false;
                    }
                }
                for jpp in i + 2..n {
                    if !ok(i, jpp, false) || !ok(i + 1, jpp, false) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn path_norm(lat: &Lattice, p: &[i64], alpha0: f64) -> f64 {
    p.windows(2)
        .map(|w| f64::from(lat.dist(w[0], w[1])).powf(alpha0))
        .sum()
}

/// Adjacent pair with both `D ≥ M` and `min D > T|nᵢ − nᵢ₊₁|^{α₀/5}`.
fn exceptional(lat: &Lattice, profile: &WeightProfile, a: i64, b: i64) -> bool {
    let lo = profile.get(a).min(profile.get(b));
    lo >= profile.m_const() && lo > profile.t * f64::from(lat.dist(a, b)).powf(profile.alpha0 / 5.0)
}

/// Depth-first enumeration of admissible trajectories from `start`, checking
/// only the pairs that involve the newest point.
fn enumerate(
    lat: &Lattice,
    domain: &[i64],
    profile: &WeightProfile,
    class: TrajectoryClass,
    k_max: usize,
    start: i64,
    visit: &mut dyn FnMut(&[i64]),
) {
    let mut path = vec![start];
    let mut norms = vec![0.0];
    extend(lat, domain, profile, class, k_max, &mut path, &mut norms, visit);
}

#[allow(clippy::too_many_arguments)]
fn extend(
    lat: &Lattice,
    domain: &[i64],
    profile: &WeightProfile,
    class: TrajectoryClass,
    k_max: usize,
    path: &mut Vec<i64>,
    norms: &mut Vec<f64>,
    visit: &mut dyn FnMut(&[i64]),
) {
    visit(path);
    if path.len() == k_max {
        return;
    }
    let last = *path.last().expect("non-empty path");
    for &next in domain {
        if next == last {
            continue;
        }
        let step = f64::from(lat.dist(last, next)).powf(profile.alpha0);
        norms.push(norms.last().copied().unwrap_or(0.0) + step);
        path.push(next);
        if admits_newest(lat, profile, class, path, norms) {
            extend(lat, domain, profile, class, k_max, path, norms, visit);
        }
        path.pop();
        norms.pop();
    }
}

/// Conditions involving the last index of `path`; `norms[i]` is the prefix
/// path norm up to index `i`.
fn admits_newest(
    lat: &Lattice,
    profile: &WeightProfile,
    class: TrajectoryClass,
    path: &[i64],
    norms: &[f64],
) -> bool {
    let j = path.len() - 1;
    let t = profile.t;
    let m = profile.m_const();
    let e = profile.alpha0 / 5.0;
    let d = |i: usize| profile.get(path[i]);
    let ok = |i: usize, k: usize, conditional: bool| {
        let lo = d(i).min(d(k));
        (conditional && lo < m) || lo <= t * (norms[k] - norms[i]).powf(e)
    };
    for i in 0..j {
        if class == TrajectoryClass::Resonant && i + 1 == j {
            continue;
        }
        if !ok(i, j, true) {
            return false;
        }
    }
    if class == TrajectoryClass::Resonant {
        for i in 0..j.saturating_sub(1) {
            if exceptional(lat, profile, path[i], path[i + 1]) && (!ok(i, j, false) || !ok(i + 1, j, false)) {
                return false;
            }
        }
        if j >= 1 && exceptional(lat, profile, path[j - 1], path[j]) {
            for jp in 0..j - 1 {
                if !ok(jp, j - 1, false) || !ok(jp, j, false) {
                    return false;
                }
            }
        }
    }
    true
}

/// Truncated weight sum and a bound on the omitted lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSum {
    /// `Σ_{k ≤ k_max} ε₀^{k−1} s_k(m, n)`.
    pub lower: f64,
    /// Upper bound on `Σ_{k > k_max} ε₀^{k−1} s_k(m, n)`.
    pub tail: f64,
    /// `ε₀^{k−1} s_k(m, n)` for `k = 1..=k_max`.
    pub per_length: Vec<f64>,
    pub count: usize,
}

impl WeightSum {
    pub fn upper(&self) -> f64 {
        self.lower + self.tail
    }
}

/// `Σ_k ε₀^{k−1} Σ_{γ} w_D(γ)` over admissible trajectories from `m` to `n`
/// of length `≤ k_max`, with `w` the hopping weight.
///
/// The tail uses `w_D(γ) ≤ e^{k·max D} ∏ w` and the row sums of `w`.
#[allow(clippy::too_many_arguments)]
pub fn weight_sum_bruteforce(
    lat: &Lattice,
    domain: &[i64],
    profile: &WeightProfile,
    w: &dyn Fn(i64, i64) -> f64,
    m: i64,
    n: i64,
    class: TrajectoryClass,
    k_max: usize,
    eps0: f64,
) -> WeightSum {
    assert!(domain.len() <= ENUMERATION_LIMIT, "domain too large to enumerate");
    let mut per_length = vec![0.0; k_max];
    let mut count = 0;
    enumerate(lat, domain, profile, class, k_max, m, &mut |p: &[i64]| {
        if *p.last().unwrap() != n {
            return;
        }
        let hops: f64 = p.windows(2).map(|x| w(x[0], x[1])).product();
        let sum_d: f64 = p.iter().map(|&x| profile.get(x)).sum();
        let k = p.len();
        per_length[k - 1] += eps0.powi(k as i32 - 1) * hops * sum_d.exp();
        count += 1;
    });
    let d_max = domain.iter().map(|&x| profile.get(x)).fold(f64::NEG_INFINITY, f64::max);
    let row = domain
        .iter()
        .map(|&x| domain.iter().filter(|&&y| y != x).map(|&y| w(x, y)).sum::<f64>())
        .fold(0.0, f64::max);
    let q = eps0 * d_max.exp() * row;
    let tail = if q < 1.0 {
        d_max.exp() * q.powi(k_max as i32) / (1.0 - q)
    } else {
        f64::INFINITY
    };
    WeightSum {
        lower: per_length.iter().sum(),
        tail,
        per_length,
        count,
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WeightLemmaReport {
    pub trajectories: usize,
    /// Largest `log W − log(bound)`; non-positive when every bound holds.
    pub worst_log_margin: f64,
    pub lemma_violations: usize,
    pub corollary_checked: usize,
    pub corollary_violations: usize,
    pub sum_checked: usize,
    pub sum_violations: usize,
    pub weight_sum_checked: usize,
    pub weight_sum_violations: usize,
}

impl WeightLemmaReport {
    pub fn passed(&self) -> bool {
        self.lemma_violations == 0
            && self.corollary_violations == 0
            && self.sum_violations == 0
            && self.weight_sum_violations == 0
    }
}

/// `C = Σ_{n ∈ 𝔗} exp(−κ|n|^{α₀})`, summed until the shells are negligible.
pub fn lattice_exp_sum(lat: &Lattice, kappa: f64, alpha0: f64) -> f64 {
    let mut total = 0.0;
    let mut r = 0u32;
    let mut offsets = lat.offsets_up_to(64);
    let mut idx = 0;
    loop {
        let mut shell = 0.0;
        while idx < offsets.len() && offsets[idx].0 == r {
            shell += (-kappa * f64::from(r).powf(alpha0)).exp();
            idx += 1;
        }
        total += shell;
        if r > 4 && shell < 1e-17 * total {
            return total;
        }
        r += 1;
        if idx >= offsets.len() {
            offsets = lat.offsets_up_to(2 * r);
        }
    }
}

/// Audits the single-trajectory bound `W ≤ e^{kM² − κ₀(1−2⁻⁹)‖γ‖ + 2D̄}`,
/// its two corollary cases, the length-`k` sum bound `< C^{k−1}`, and the
/// weight-sum bound at `ε₀`, over every admissible resonant-class
/// trajectory in `domain`.
pub fn verify_weight_lemma(
    lat: &Lattice,
    domain: &[i64],
    profile: &WeightProfile,
    k_max: usize,
    eps0: f64,
) -> WeightLemmaReport {
    assert!(domain.len() <= ENUMERATION_LIMIT, "domain too large to enumerate");
    let mut rep = WeightLemmaReport {
        worst_log_margin: f64::NEG_INFINITY,
        ..Default::default()
    };
    let set: BTreeSet<i64> = domain.iter().copied().collect();
    let in_class = profile.class_violation(lat, domain).is_none();
    let m5 = profile.m_const().powi(5);
    let mm = profile.m_const();
    let k0 = profile.kappa0;
    let a0 = profile.alpha0;
    let c = lattice_exp_sum(lat, k0, a0);
    let mut big_s: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    // Σ exp(−κ₀‖γ‖) over all (not only admissible) trajectories of length k.
    let mut free: BTreeMap<(i64, i64, usize), f64> = BTreeMap::new();
    for &start in domain {
        enumerate(lat, domain, profile, TrajectoryClass::Resonant, k_max, start, &mut |p: &[i64]| {
            let g = Trajectory { points: p.to_vec() };
            let k = p.len() as f64;
            let norm = g.path_norm(lat, a0);
            let log_w = g.log_w_upper(lat, profile);
            let d_bar = g.d_bar(profile);
            let bound = k * mm * mm - k0 * (1.0 - 2f64.powi(-9)) * norm + 2.0 * d_bar;
            rep.trajectories += 1;
            rep.worst_log_margin = rep.worst_log_margin.max(log_w - bound);
            if log_w > bound + 1e-9 * bound.abs().max(1.0) {
                rep.lemma_violations += 1;
            }
            if in_class {
                rep.corollary_checked += 1;
                let cb = if d_bar <= m5 {
                    -k0 * norm + k * profile.m_const().powi(5)
                } else {
                    -15.0 / 16.0 * k0 * norm + 2.0 * d_bar
                };
                if log_w > cb + 1e-9 * cb.abs().max(1.0) {
                    rep.corollary_violations += 1;
                }
            }
            let (a, b) = (p[0], *p.last().unwrap());
            *big_s.entry((a, b)).or_default() += eps0.powi(p.len() as i32 - 1) * log_w.exp();
        });
        let mut stack: Vec<(Vec<i64>, f64)> = vec![(vec![start], 0.0)];
        while let Some((p, norm)) = stack.pop() {
            *free.entry((start, *p.last().unwrap(), p.len())).or_default() += (-k0 * norm).exp();
            if p.len() == k_max {
                continue;
            }
            let last = *p.last().unwrap();
            for &x in domain {
                if x != last {
                    let mut q = p.clone();
                    q.push(x);
                    stack.push((q, norm + f64::from(lat.dist(last, x)).powf(a0)));
                }
            }
        }
    }
    for (&(_, _, k), &v) in &free {
        if k >= 2 {
            rep.sum_checked += 1;
            if v >= c.powi(k as i32 - 1) {
                rep.sum_violations += 1;
            }
        }
    }
    if in_class {
        for (&(a, b), &s) in &big_s {
            rep.weight_sum_checked += 1;
            let dist = f64::from(lat.dist(a, b)).powf(a0);
            let mu = boundary_distance(lat, &set, a).min(boundary_distance(lat, &set, b));
            let boundary = 2.0 * profile.t * f64::from(mu).powf(0.2);
            let bound = if a != b {
                3.0 * eps0.sqrt() * (-7.0 / 8.0 * k0 * dist + boundary).exp()
            } else {
                profile.get(a).exp() + 3.0 * eps0.sqrt() * boundary.exp()
            };
            if s > bound * (1.0 + 1e-12) {
                rep.weight_sum_violations += 1;
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MsaOptions {
    pub k_max: usize,
    /// Floor for leftover diagonals; `None` uses `exp(−4T/κ₀)`.
    pub floor: Option<f64>,
    /// Domains up to this size are audited against brute-force weights.
    pub audit_limit: usize,
}

impl Default for MsaOptions {
    fn default() -> Self {
        Self {
            k_max: K_MAX,
            floor: None,
            audit_limit: ENUMERATION_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResolventAudit {
    pub checked: usize,
    /// Pairs with `|𝓗⁻¹(m,n)|` above the truncated sum plus its tail bound.
    pub violations: Vec<(i64, i64, f64, f64)>,
    /// Pairs where only the tail bound closes the gap.
    pub tail_needed: usize,
}

impl ResolventAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MsaOutcome {
    pub resolvent: CMatrix,
    pub profile: WeightProfile,
    /// Blocks whose hypothesis (a) was verified by enumeration.
    pub blocks_verified: usize,
    pub audit: Option<ResolventAudit>,
}

fn index_of(labels: &[i64]) -> BTreeMap<i64, usize> {
    labels.iter().enumerate().map(|(i, &l)| (l, i)).collect()
}

/// Compares `|𝓗⁻¹|` with brute-force resonant-class weight sums, where
/// `w(x,y) = |𝓗(x,y)|/ε₀`.
fn audit_resolvent(
    lat: &Lattice,
    labels: &[i64],
    a: &CMatrix,
    inv: &CMatrix,
    profile: &WeightProfile,
    eps0: f64,
    k_max: usize,
) -> ResolventAudit {
    let idx = index_of(labels);
    let w = |x: i64, y: i64| a[(idx[&x], idx[&y])].norm() / eps0;
    let mut out = ResolventAudit::default();
    for (i, &m) in labels.iter().enumerate() {
        for (j, &n) in labels.iter().enumerate() {
            let s = weight_sum_bruteforce(lat, labels, profile, &w, m, n, TrajectoryClass::Resonant, k_max, eps0);
            let v = inv[(i, j)].norm();
            out.checked += 1;
            if v > s.upper() * (1.0 + 1e-9) {
                out.violations.push((m, n, v, s.upper()));
            } else if v > s.lower * (1.0 + 1e-9) {
                out.tail_needed += 1;
            }
        }
    }
    out
}

fn check_decay(lat: &Lattice, labels: &[i64], a: &CMatrix, profile: &WeightProfile, eps0: f64) -> Result<(), SchurError> {
    for (i, &x) in labels.iter().enumerate() {
        for (j, &y) in labels.iter().enumerate() {
            if i != j {
                let bound = eps0 * profile.decay(lat, x, y);
                let v = a[(i, j)].norm();
                if v > bound * (1.0 + 1e-12) {
                    return Err(hypothesis("decay", format!("|𝓗({x},{y})| = {v:e} > ε₀e^(−κ₀|x−y|^α₀) = {bound:e}")));
                }
            }
        }
    }
    Ok(())
}

/// One multi-scale step: given disjoint blocks with weight profiles, checks
/// the hypotheses and returns `(E − H)⁻¹` on the whole domain with the
/// merged profile (`Dⱼ` on block `j`, `4T/κ₀` elsewhere).
#[allow(clippy::too_many_arguments)]
pub fn msa_step(
    lat: &Lattice,
    labels: &[i64],
    h: &CMatrix,
    blocks: &[Vec<i64>],
    profiles: &[WeightProfile],
    e: f64,
    eps0: f64,
    opts: MsaOptions,
) -> Result<MsaOutcome, SchurError> {
    assert_eq!(blocks.len(), profiles.len());
    let idx = index_of(labels);
    let a = shifted(h, e);
    let (t, kappa0, alpha0) = profiles
        .first()
        .map_or((8.0, 0.5, 1.0), |p| (p.t, p.kappa0, p.alpha0));
    let mut merged = WeightProfile {
        d: BTreeMap::new(),
        t,
        kappa0,
        alpha0,
    };
    check_decay(lat, labels, &a, &merged, eps0)?;
    let mut owner: BTreeMap<i64, usize> = BTreeMap::new();
    let mut verified = 0;
    for (j, (block, prof)) in blocks.iter().zip(profiles).enumerate() {
        for &x in block {
            if !idx.contains_key(&x) {
                return Err(hypothesis("partition", format!("block {j} leaves the domain at {x}")));
            }
            if owner.insert(x, j).is_some() {
                return Err(hypothesis("partition", format!("blocks overlap at {x}")));
            }
            merged.d.insert(x, prof.get(x));
        }
        if let Some((x, d, allowed)) = prof.class_violation(lat, block) {
            return Err(hypothesis("class", format!("block {j}: D({x}) = {d} exceeds {allowed}")));
        }
        let rows: Vec<usize> = block.iter().map(|x| idx[x]).collect();
        let ab = sub(&a, &rows, &rows);
        let inv = invert_hermitian(&ab, &format!("block {j}")).map_err(|err| hypothesis("a", err.to_string()))?;
        if block.len() <= opts.audit_limit.min(ENUMERATION_LIMIT) {
            let rep = audit_resolvent(lat, block, &ab, &inv, prof, eps0, opts.k_max);
            if let Some(&(m, n, v, s)) = rep.violations.first() {
                return Err(hypothesis("a", format!("block {j}: |𝓗⁻¹({m},{n})| = {v:e} > {s:e}")));
            }
            verified += 1;
        }
    }
    let floor = opts.floor.unwrap_or_else(|| (-merged.m_const()).exp());
    for &x in labels {
        if owner.contains_key(&x) {
            continue;
        }
        let diag = a[(idx[&x], idx[&x])].norm();
        if diag < floor {
            return Err(hypothesis("b", format!("|𝓗({x},{x})| = {diag:e} < {floor:e}")));
        }
        merged.d.insert(x, merged.m_const());
    }
    let split: Vec<usize> = owner.keys().map(|x| idx[x]).collect();
    let resolvent = schur_block_inverse(h, &split, e)?;
    let audit = (labels.len() <= opts.audit_limit.min(ENUMERATION_LIMIT))
        .then(|| audit_resolvent(lat, labels, &a, &resolvent, &merged, eps0, opts.k_max));
    Ok(MsaOutcome {
        resolvent,
        profile: merged,
        blocks_verified: verified,
        audit,
    })
}

#[derive(Debug, Clone)]
pub struct ExtensionOutcome {
    pub resolvent: CMatrix,
    pub profile: WeightProfile,
    pub d0: f64,
    pub audit: Option<ResolventAudit>,
}

/// Extends a profile on `Λ ∖ {m⁺, m⁻}` to `Λ` with
/// `D(m±) = D₀ = log‖𝓗_Λ⁻¹‖ + log ε₀⁻¹ + κ₀|m⁺ − m⁻|^{α₀}`.
#[allow(clippy::too_many_arguments)]
pub fn two_point_extension(
    lat: &Lattice,
    labels: &[i64],
    h: &CMatrix,
    m_plus: i64,
    m_minus: i64,
    profile: &WeightProfile,
    e: f64,
    eps0: f64,
    opts: MsaOptions,
) -> Result<ExtensionOutcome, SchurError> {
    let idx = index_of(labels);
    let a = shifted(h, e);
    check_decay(lat, labels, &a, profile, eps0)?;
    let pair: Vec<i64> = if m_plus == m_minus { vec![m_plus] } else { vec![m_plus, m_minus] };
    let rest: Vec<i64> = labels.iter().copied().filter(|x| !pair.contains(x)).collect();
    let rows: Vec<usize> = rest.iter().map(|x| idx[x]).collect();
    let a1 = sub(&a, &rows, &rows);
    let inv1 = invert_hermitian(&a1, "punctured").map_err(|err| hypothesis("ii", err.to_string()))?;
    if let Some((x, d, allowed)) = profile.class_violation(lat, &rest) {
        return Err(hypothesis("ii", format!("D({x}) = {d} exceeds {allowed}")));
    }
    if rest.len() <= opts.audit_limit.min(ENUMERATION_LIMIT) {
        let rep = audit_resolvent(lat, &rest, &a1, &inv1, profile, eps0, opts.k_max);
        if let Some(&(m, n, v, s)) = rep.violations.first() {
            return Err(hypothesis("ii", format!("|𝓗⁻¹({m},{n})| = {v:e} > {s:e}")));
        }
    }
    let full = invert_hermitian(&a, "E−H").map_err(|err| hypothesis("iii", err.to_string()))?;
    let norm = sigma_min(&a).recip();
    let d0 = norm.ln() - eps0.ln() + profile.kappa0 * f64::from(lat.dist(m_plus, m_minus)).powf(profile.alpha0);
    let set: BTreeSet<i64> = labels.iter().copied().collect();
    let mu = pair.iter().map(|&p| boundary_distance(lat, &set, p)).min().unwrap_or(0);
    let allowed = profile.t * f64::from(mu).powf(profile.alpha0 / 5.0);
    if d0 > allowed {
        return Err(hypothesis("iii", format!("D₀ = {d0} exceeds T·dist^(α₀/5) = {allowed}")));
    }
    let mut extended = profile.clone();
    for &p in &pair {
        extended.d.insert(p, d0.max(1.0));
    }
    let split: Vec<usize> = rows;
    let resolvent = if split.is_empty() { full } else { schur_block_inverse(h, &split, e)? };
    let audit = (labels.len() <= opts.audit_limit.min(ENUMERATION_LIMIT))
        .then(|| audit_resolvent(lat, labels, &a, &resolvent, &extended, eps0, opts.k_max));
    Ok(ExtensionOutcome {
        resolvent,
        profile: extended,
        d0,
        audit,
    })
}

/// Complex Hermitian test matrix from a seeded generator.
pub fn random_hermitian(n: usize, seed: u64) -> CMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        h[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}
