//! Eigenvalues and eigenvectors from Schur-complement equations: the simple
//! fixed point `E = v(m₀) + Q(E)`, the pair determinant `χ`, and root
//! branches of continued-fraction functions.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::linalg::{hermitian_eigenvalues, hermitian_norm, CMatrix, CVector};
use crate::schur::{q_g_functions, QgValues, SchurError};

/// Fixed-point tolerance, relative to `max(1, |E|)`.
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 200;
/// Initial damping of the fixed-point iteration.
pub const DAMPING: f64 = 0.5;
/// Step for central finite differences.
pub const FD_STEP: f64 = 1e-5;
/// Sample count used to isolate sign changes inside a bracket.
pub const SCAN_POINTS: usize = 400;
/// Values of `|χ|` at the centers below this count as zero in (α).
pub const ALPHA_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Schur(#[from] SchurError),
    #[error("label {0} is not in the domain")]
    UnknownLabel(i64),
    #[error("expected two roots, found {} at {found:?}", found.len())]
    RootCountMismatch { found: Vec<f64> },
    #[error("ordering margin {margin:e} at E = {e} is below τ₀ = {tau0:e}")]
    OrderingFailed { e: f64, margin: f64, tau0: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("condition ({condition}) fails at (x, u) = ({x}, {u}): {detail}")]
    AdmissibilityFailed {
        condition: char,
        x: f64,
        u: f64,
        detail: String,
    },
    #[error("hypothesis {item} failed: {detail}")]
    HypothesisFailed { item: String, detail: String },
}

fn index_of(labels: &[i64], m: i64) -> Result<usize, EigenError> {
    labels
        .iter()
        .position(|&x| x == m)
        .ok_or(EigenError::UnknownLabel(m))
}

/// `‖Hφ − Eφ‖∞`.
pub fn residual(h: &CMatrix, phi: &CVector, e: f64) -> f64 {
    let r = h * phi - phi * Complex64::new(e, 0.0);
    r.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Eigenvector over the domain with `φ(m₀) = 1`, built from the `F`
/// vectors of a punctured domain: `φ = Σ_j w_j F(m_j, ·)` off the principal
/// points and `φ(m_j) = w_j` on them.
fn synthesize(n: usize, qg: &QgValues, weights: &[Complex64]) -> CVector {
    let mut phi = CVector::zeros(n);
    for (j, &p) in qg.principal.iter().enumerate() {
        phi[p] = weights[j];
        for (r, &i) in qg.punctured.iter().enumerate() {
            phi[i] += qg.f[j][r] * weights[j];
        }
    }
    phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleOptions {
    pub e_init: Option<f64>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SimpleOptions {
    fn default() -> Self {
        Self {
            e_init: None,
            damping: DAMPING,
            tol: FIXED_POINT_TOL,
            max_iter: FIXED_POINT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub e: f64,
    pub labels: Vec<i64>,
    /// Indexed like `labels`, with `φ(m₀) = 1`.
    pub phi: CVector,
    pub residual: f64,
    pub scale: usize,
    pub center: i64,
    pub iterations: usize,
}

impl EigenPair {
    pub fn phi_at(&self, label: i64) -> Option<Complex64> {
        self.labels.iter().position(|&x| x == label).map(|i| self.phi[i])
    }
}

/// Damped iteration `E ← (1−θ)E + θ(H(m₀,m₀) + Q(E))` starting from the
/// diagonal entry; `θ` halves whenever the fixed-point residual grows.
pub fn solve_simple(
    h: &CMatrix,
    labels: &[i64],
    m0: i64,
    scale: usize,
    opts: &SimpleOptions,
) -> Result<EigenPair, EigenError> {
    let i0 = index_of(labels, m0)?;
    let v0 = h[(i0, i0)].re;
    let map = |e: f64| -> Result<(f64, QgValues), EigenError> {
        let qg = q_g_functions(h, &[i0], e)?;
        Ok((v0 + qg.q[0].re, qg))
    };
    let mut e = opts.e_init.unwrap_or(v0);
    let (mut g, mut qg) = map(e)?;
    let mut res = (g - e).abs();
    let mut theta = opts.damping;
    let mut iterations = 0;
    while res > opts.tol * e.abs().max(1.0) {
        if iterations == opts.max_iter {
            return Err(EigenError::NoConvergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let trial = (1.0 - theta) * e + theta * g;
        let (g_t, qg_t) = map(trial)?;
        let res_t = (g_t - trial).abs();
        if res_t > res && theta > 1e-6 {
            theta *= 0.5;
            continue;
        }
        e = trial;
        g = g_t;
        qg = qg_t;
        res = res_t;
    }
    let phi = synthesize(labels.len(), &qg, &[Complex64::new(1.0, 0.0)]);
    Ok(EigenPair {
        e,
        labels: labels.to_vec(),
        residual: residual(h, &phi, e),
        phi,
        scale,
        center: m0,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    /// Least-squares rate `κ` of `log|φ| ≈ c − κ|n − m₀|^{α₀}` fitted to the
    /// per-distance envelope beyond distance 2, if at least two shells exist.
    pub fitted_rate: Option<f64>,
    /// Points where `log|φ(n)| > log(4√ε) − (7κ₀/8)|n − m₀|^{α₀}`.
    pub strict_violations: Vec<i64>,
    /// `fitted_rate ≥ κ₀/2` (vacuous without a fit).
    pub practical_ok: bool,
}

impl DecayAudit {
    pub fn strict_ok(&self) -> bool {
        self.strict_violations.is_empty()
    }
}

/// Eigenvector decay away from the center.
pub fn decay_audit(
    lat: &Lattice,
    labels: &[i64],
    phi: &CVector,
    m0: i64,
    epsilon: f64,
    kappa0: f64,
    alpha0: f64,
) -> DecayAudit {
    let log_pre = (4.0 * epsilon.abs().sqrt()).ln();
    let mut strict_violations = Vec::new();
    let mut envelope: std::collections::BTreeMap<u32, f64> = Default::default();
    for (i, &n) in labels.iter().enumerate() {
        if n == m0 {
            continue;
        }
        let d = lat.dist(n, m0);
        let lp = phi[i].norm().ln();
        if lp > log_pre - 0.875 * kappa0 * (d as f64).powf(alpha0) {
            strict_violations.push(n);
        }
        if d > 2 && lp.is_finite() {
            let slot = envelope.entry(d).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(lp);
        }
    }
    let fitted_rate = (envelope.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = envelope
            .iter()
            .map(|(&d, &y)| ((d as f64).powf(alpha0), y))
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    });
    DecayAudit {
        practical_ok: fitted_rate.is_none_or(|r| r >= kappa0 / 2.0),
        fitted_rate,
        strict_violations,
    }
}

/// `|E_next − E_prev| ≤ 2|ε|δ⁵` between consecutive scales.
pub fn increment_ok(e_prev: f64, e_next: f64, epsilon: f64, delta_prev: f64) -> bool {
    (e_next - e_prev).abs() <= 2.0 * epsilon.abs() * delta_prev.powi(5)
}

/// `χ(E) = (E − v⁺ − Q⁺)(E − v⁻ − Q⁻) − G⁺⁻G⁻⁺` on `Λ ∖ {m₀⁺, m₀⁻}`, with
/// `v±` the diagonal entries.
pub fn pair_chi(h: &CMatrix, labels: &[i64], m_plus: i64, m_minus: i64, e: f64) -> Result<f64, EigenError> {
    let ip = index_of(labels, m_plus)?;
    let im = index_of(labels, m_minus)?;
    if ip == im {
        return Err(EigenError::PreconditionFailed("m₀⁺ = m₀⁻".into()));
    }
    Ok(chi_at(h, ip, im, e)?.0)
}

/// `χ`, together with the `Q`/`G` data it came from.
fn chi_at(h: &CMatrix, ip: usize, im: usize, e: f64) -> Result<(f64, QgValues), SchurError> {
    let qg = q_g_functions(h, &[ip, im], e)?;
    let (i_p, i_m) = if qg.principal[0] == ip { (0, 1) } else { (1, 0) };
    let dp = Complex64::new(e - h[(ip, ip)].re, 0.0) - qg.q[i_p];
    let dm = Complex64::new(e - h[(im, im)].re, 0.0) - qg.q[i_m];
    let (g01, g10) = qg.g.expect("two principal points");
    Ok(((dp * dm - g01 * g10).re, qg))
}

/// `½[a₁ + a₂ ± √((a₁ − a₂)² + 4b²)]`, the two roots of
/// `(u − a₁)(u − a₂) = b²`.
pub fn two_by_two_roots(a1: f64, a2: f64, b: f64) -> (f64, f64) {
    let s = ((a1 - a2).powi(2) + 4.0 * b * b).sqrt();
    (0.5 * (a1 + a2 - s), 0.5 * (a1 + a2 + s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    /// Required ordering margin; `0` admits exactly symmetric pairs.
    pub tau0: f64,
    pub grid: usize,
    pub tol: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            tau0: 0.0,
            grid: SCAN_POINTS,
            tol: FIXED_POINT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBranches {
    pub e_minus: f64,
    pub e_plus: f64,
    pub labels: Vec<i64>,
    /// `φ(m₀⁻) = 1`, `φ(m₀⁺) = β⁻`.
    pub phi_minus: CVector,
    /// `φ(m₀⁺) = 1`, `φ(m₀⁻) = β⁺`.
    pub phi_plus: CVector,
    /// `(β⁻, β⁺)`.
    pub beta: (Complex64, Complex64),
    /// Smallest `v⁺ + Q⁺ − v⁻ − Q⁻` seen on the bracket grid.
    pub tau0: f64,
    pub residuals: (f64, f64),
    /// `|E± − φ±(E±)|` with `φ±` the 2×2 root forms at frozen `Q`, `G`.
    pub root_form_defect: f64,
    /// Dense eigenvalues inside the bracket, when the domain is small enough.
    pub window_count: Option<usize>,
}

impl PairBranches {
    pub fn beta_ok(&self) -> bool {
        self.beta.0.norm() <= 1.0 + 1e-12 && self.beta.1.norm() <= 1.0 + 1e-12
    }
}

/// Bracket from the two dense eigenvalues nearest the diagonal entries at
/// `m₀±`, widened by 10% of `max(|E|, E₊ − E₋)`.
pub fn practical_bracket(h: &CMatrix, labels: &[i64], m_plus: i64, m_minus: i64) -> Result<(f64, f64), EigenError> {
    let ip = index_of(labels, m_plus)?;
    let im = index_of(labels, m_minus)?;
    let mut vals = hermitian_eigenvalues(h);
    let mut take = |target: f64| -> f64 {
        let j = (0..vals.len())
            .min_by(|&a, &b| (vals[a] - target).abs().total_cmp(&(vals[b] - target).abs()))
            .expect("nonempty spectrum");
        vals.remove(j)
    };
    let a = take(h[(ip, ip)].re);
    let b = take(h[(im, im)].re);
    let (lo, hi) = (a.min(b), a.max(b));
    let pad = 0.1 * lo.abs().max(hi.abs()).max(hi - lo);
    Ok((lo - pad, hi + pad))
}

/// Sign changes of `f` on a uniform grid, each refined by bisection and a
/// final secant step to `tol`.
fn bracketed_roots<F>(f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Result<Vec<f64>, EigenError>
where
    F: Fn(f64) -> Result<f64, EigenError> + Sync,
{
    let xs: Vec<f64> = (0..=grid)
        .map(|i| lo + (hi - lo) * i as f64 / grid as f64)
        .collect();
    let ys = xs.par_iter().map(|&x| f(x)).collect::<Result<Vec<f64>, _>>()?;
    let mut roots = Vec::new();
    for i in 0..grid {
        if ys[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if ys[i] * ys[i + 1] < 0.0 {
            roots.push(refine(&f, xs[i], xs[i + 1], ys[i], tol)?);
        }
    }
    if ys[grid] == 0.0 {
        roots.push(xs[grid]);
    }
    Ok(roots)
}

fn refine<F>(f: &F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64, EigenError>
where
    F: Fn(f64) -> Result<f64, EigenError>,
{
    let eps = tol * a.abs().max(b.abs()).max(1.0);
    let mut fb = f(b)?;
    for _ in 0..200 {
        if (b - a).abs() <= eps {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
    }
    let s = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
    Ok(if s >= a.min(b) && s <= a.max(b) { s } else { 0.5 * (a + b) })
}

/// Both roots of `χ = 0` inside `bracket`, with eigenvectors and audits.
pub fn solve_pair(
    h: &CMatrix,
    labels: &[i64],
    m_plus: i64,
    m_minus: i64,
    bracket: (f64, f64),
    opts: &PairOptions,
) -> Result<PairBranches, EigenError> {
    let ip = index_of(labels, m_plus)?;
    let im = index_of(labels, m_minus)?;
    if ip == im {
        return Err(EigenError::PreconditionFailed("m₀⁺ = m₀⁻".into()));
    }
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(EigenError::PreconditionFailed(format!("empty bracket [{lo}, {hi}]")));
    }
    let rest: Vec<usize> = (0..labels.len()).filter(|&i| i != ip && i != im).collect();
    let h_rest = CMatrix::from_fn(rest.len(), rest.len(), |r, c| h[(rest[r], rest[c])]);
    if let Some(&mu) = hermitian_eigenvalues(&h_rest).iter().find(|&&mu| mu >= lo && mu <= hi) {
        return Err(EigenError::PreconditionFailed(format!(
            "punctured spectrum point {mu} lies in the bracket"
        )));
    }
    let margin_at = |e: f64| -> Result<f64, EigenError> {
        let qg = q_g_functions(h, &[ip, im], e)?;
        let (p, m) = if qg.principal[0] == ip { (0, 1) } else { (1, 0) };
        Ok(h[(ip, ip)].re + qg.q[p].re - h[(im, im)].re - qg.q[m].re)
    };
    let grid: Vec<f64> = (0..=opts.grid)
        .map(|i| lo + (hi - lo) * i as f64 / opts.grid as f64)
        .collect();
    let margins = grid.par_iter().map(|&e| margin_at(e)).collect::<Result<Vec<f64>, _>>()?;
    let (worst_e, tau0) = grid
        .iter()
        .zip(&margins)
        .fold((lo, f64::INFINITY), |acc, (&e, &m)| if m < acc.1 { (e, m) } else { acc });
    if tau0 < opts.tau0 - 1e-12 * (1.0 + h[(ip, ip)].re.abs()) {
        return Err(EigenError::OrderingFailed {
            e: worst_e,
            margin: tau0,
            tau0: opts.tau0,
        });
    }
    let chi = |e: f64| -> Result<f64, EigenError> { Ok(chi_at(h, ip, im, e)?.0) };
    let roots = bracketed_roots(chi, lo, hi, opts.grid, opts.tol)?;
    if roots.len() != 2 {
        return Err(EigenError::RootCountMismatch { found: roots });
    }
    let (e_minus, e_plus) = (roots[0], roots[1]);
    let branch = |e: f64, upper: bool| -> Result<(CVector, Complex64, f64), EigenError> {
        let (_, qg) = chi_at(h, ip, im, e)?;
        let (p, m) = if qg.principal[0] == ip { (0, 1) } else { (1, 0) };
        let (g01, g10) = qg.g.expect("two principal points");
        let (g_pm, g_mp) = if p == 0 { (g01, g10) } else { (g10, g01) };
        let one = Complex64::new(1.0, 0.0);
        let mut w = [one; 2];
        let beta = if upper {
            g_mp / (Complex64::new(e - h[(im, im)].re, 0.0) - qg.q[m])
        } else {
            g_pm / (Complex64::new(e - h[(ip, ip)].re, 0.0) - qg.q[p])
        };
        w[if upper { m } else { p }] = beta;
        let a1 = h[(ip, ip)].re + qg.q[p].re;
        let a2 = h[(im, im)].re + qg.q[m].re;
        let (r_lo, r_hi) = two_by_two_roots(a1, a2, g_pm.norm());
        let defect = (e - if upper { r_hi } else { r_lo }).abs();
        Ok((synthesize(labels.len(), &qg, &w), beta, defect))
    };
    let (phi_minus, beta_minus, d_minus) = branch(e_minus, false)?;
    let (phi_plus, beta_plus, d_plus) = branch(e_plus, true)?;
    let window_count = (labels.len() <= 2000).then(|| {
        hermitian_eigenvalues(h)
            .iter()
            .filter(|&&v| v >= lo && v <= hi)
            .count()
    });
    Ok(PairBranches {
        e_minus,
        e_plus,
        labels: labels.to_vec(),
        residuals: (residual(h, &phi_minus, e_minus), residual(h, &phi_plus, e_plus)),
        phi_minus,
        phi_plus,
        beta: (beta_minus, beta_plus),
        tau0,
        root_form_defect: d_minus.max(d_plus),
        window_count,
    })
}

/// Distance from `E` to the nearest dense eigenvalue, relative to `‖H‖`.
pub fn dense_agreement(h: &CMatrix, e: f64) -> f64 {
    let d = hermitian_eigenvalues(h)
        .iter()
        .fold(f64::INFINITY, |m, v| m.min((v - e).abs()));
    d / hermitian_norm(h).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dichotomy {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCase {
    pub case: Dichotomy,
    pub lambda: f64,
    pub gamma: f64,
}

/// Which side of the two-point quadratic `u` sits on, for `a₁ > a₂` and
/// `|(u − a₁)(u − a₂) − b²| < (a₁ − a₂)²/4`.
pub fn quadratic_dichotomy(a1: f64, a2: f64, b: f64, u: f64) -> Result<QuadraticCase, EigenError> {
    let d = a1 - a2;
    if !(d > 0.0) {
        return Err(EigenError::PreconditionFailed(format!("a1 = {a1} is not above a2 = {a2}")));
    }
    let q = (u - a1) * (u - a2) - b * b;
    if q.abs() >= d * d / 4.0 {
        return Err(EigenError::PreconditionFailed(format!(
            "|(u−a1)(u−a2) − b²| = {} is not below (a1−a2)²/4 = {}",
            q.abs(),
            d * d / 4.0
        )));
    }
    let lambda = q / (d * d);
    let gamma = ((1.0 + 4.0 * lambda).sqrt() - 1.0) / 2.0;
    let g = gamma.abs() * d;
    let slack = 1e-12 * (1.0 + a1.abs() + a2.abs() + b.abs());
    let plus = u >= (a1 - g).max(0.5 * (a1 + a2) + b.abs()) - slack;
    let minus = u <= (a2 + g).min(0.5 * (a1 + a2) - b.abs()) + slack;
    let in_bracket = u >= a2 - g - b.abs() - slack && u <= a1 + g + b.abs() + slack;
    let case = match (plus, minus) {
        (true, false) => Dichotomy::Plus,
        (false, true) => Dichotomy::Minus,
        _ => {
            return Err(EigenError::PreconditionFailed(format!(
                "u = {u} satisfies plus = {plus}, minus = {minus}"
            )))
        }
    };
    if !in_bracket {
        return Err(EigenError::PreconditionFailed(format!("u = {u} outside the universal bracket")));
    }
    Ok(QuadraticCase { case, lambda, gamma })
}

/// A smooth function of `(x, u)`.
pub type Func = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn func<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> Func {
    Arc::new(f)
}

#[derive(Clone)]
pub enum CffKind {
    /// `f = u − a(x, u)`.
    Leaf(Func),
    /// `f₁ − b²/f₂` (`index = 1`) or `f₂ − b²/f₁` (`index = 2`).
    Composite {
        f1: Arc<CffNode>,
        f2: Arc<CffNode>,
        b2: Func,
        index: u8,
    },
}

/// A continued-fraction function with its sign data.
#[derive(Clone)]
pub struct CffNode {
    pub kind: CffKind,
    pub level: usize,
    pub sign: i8,
    pub sign_history: Vec<i8>,
}

impl std::fmt::Debug for CffNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            CffKind::Leaf(_) => "leaf".to_string(),
            CffKind::Composite { index, .. } => format!("composite({index})"),
        };
        f.debug_struct("CffNode")
            .field("kind", &kind)
            .field("level", &self.level)
            .field("sign", &self.sign)
            .field("sign_history", &self.sign_history)
            .finish()
    }
}

/// `f`, `μ`, `χ = μf` and `τ` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CffValues {
    pub f: f64,
    pub mu: f64,
    pub chi: f64,
    pub tau: f64,
}

impl CffNode {
    pub fn leaf(a: Func) -> Self {
        Self {
            kind: CffKind::Leaf(a),
            level: 0,
            sign: 1,
            sign_history: Vec::new(),
        }
    }

    pub fn children(&self) -> Option<(&CffNode, &CffNode)> {
        match &self.kind {
            CffKind::Leaf(_) => None,
            CffKind::Composite { f1, f2, .. } => Some((f1, f2)),
        }
    }

    pub fn eval(&self, x: f64, u: f64) -> CffValues {
        match &self.kind {
            CffKind::Leaf(a) => {
                let f = u - a(x, u);
                CffValues {
                    f,
                    mu: 1.0,
                    chi: f,
                    tau: 1.0,
                }
            }
            CffKind::Composite { f1, f2, b2, index } => {
                let (p, q) = (f1.eval(x, u), f2.eval(x, u));
                let b2 = b2(x, u);
                let (f, mu) = if *index == 1 {
                    (p.f - b2 / q.f, p.mu * q.mu * q.f)
                } else {
                    (q.f - b2 / p.f, p.mu * q.mu * p.f)
                };
                // χ in product form stays finite where f has a pole.
                let chi = p.chi * q.chi - p.mu * q.mu * b2;
                CffValues {
                    f,
                    mu,
                    chi,
                    tau: (q.chi - p.chi) * p.tau * q.tau,
                }
            }
        }
    }

    pub fn chi(&self, x: f64, u: f64) -> f64 {
        self.eval(x, u).chi
    }

    /// `(∂_u χ, ∂²_u χ)` by central differences.
    pub fn chi_u_derivs(&self, x: f64, u: f64) -> (f64, f64) {
        let h = FD_STEP;
        let (m, c, p) = (self.chi(x, u - h), self.chi(x, u), self.chi(x, u + h));
        ((p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h))
    }

    /// `min_i τ^{(f_i)}` over the children, `1` for a leaf.
    pub fn child_tau_min(&self, x: f64, u: f64) -> f64 {
        self.children()
            .map_or(1.0, |(a, b)| a.eval(x, u).tau.min(b.eval(x, u).tau))
    }

    /// The dichotomy case of this node's own two-point quadratic at `(x, u)`.
    pub fn case_at(&self, x: f64, u: f64) -> Option<Result<QuadraticCase, EigenError>> {
        let CffKind::Composite { f1, f2, b2, .. } = &self.kind else {
            return None;
        };
        let (p, q) = (f1.eval(x, u), f2.eval(x, u));
        let b = (p.mu * q.mu * b2(x, u)).max(0.0).sqrt();
        Some(quadratic_dichotomy(u - p.chi, u - q.chi, b, u))
    }
}

fn d_u(f: &Func, x: f64, u: f64) -> (f64, f64) {
    let h = FD_STEP;
    let (m, c, p) = (f(x, u - h), f(x, u), f(x, u + h));
    ((p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h))
}

/// The two composites `f₁ − b²/f₂` and `f₂ − b²/f₁`, after checking
/// conditions (a)–(e) at every `(x, u)` of `grid`.
///
/// Sign: a composite built from leaves carries `σ = +1` and an empty
/// history; otherwise `σ` is the common dichotomy case of the children's
/// quadratics and the history gains `σ` at the front.
pub fn cff_build(f1: &CffNode, f2: &CffNode, b2: Func, grid: &[(f64, f64)]) -> Result<(CffNode, CffNode), EigenError> {
    let fail = |condition: char, x: f64, u: f64, detail: String| EigenError::AdmissibilityFailed {
        condition,
        x,
        u,
        detail,
    };
    if f1.level != f2.level {
        return Err(fail('e', f64::NAN, f64::NAN, format!("levels {} and {}", f1.level, f2.level)));
    }
    if f1.sign_history != f2.sign_history {
        return Err(fail(
            'e',
            f64::NAN,
            f64::NAN,
            format!("sign histories {:?} and {:?}", f1.sign_history, f2.sign_history),
        ));
    }
    let mut sigma: Option<Dichotomy> = None;
    for &(x, u) in grid {
        let (p, q) = (f1.eval(x, u), f2.eval(x, u));
        if !(p.chi < q.chi) {
            return Err(fail('a', x, u, format!("χ₁ = {} ≥ χ₂ = {}", p.chi, q.chi)));
        }
        let t10 = p.tau.min(q.tau).powi(10);
        for (i, v) in [p, q].iter().enumerate() {
            if !(v.f.abs() < t10) {
                return Err(fail('b', x, u, format!("|f_{}| = {} ≥ τ¹⁰ = {t10:e}", i + 1, v.f.abs())));
            }
        }
        for (i, child) in [f1, f2].iter().enumerate() {
            let Some(case) = child.case_at(x, u) else {
                continue;
            };
            let case = case.map_err(|e| fail('c', x, u, format!("child {}: {e}", i + 1)))?;
            let CffKind::Composite { index, .. } = child.kind else {
                unreachable!()
            };
            let expected = if case.case == Dichotomy::Plus { 1 } else { 2 };
            if index != expected {
                return Err(fail('c', x, u, format!("child {} is f(·,{index}) in the {:?} case", i + 1, case.case)));
            }
            match sigma {
                None => sigma = Some(case.case),
                Some(s) if s != case.case => {
                    return Err(fail('c', x, u, "children switch between the two cases".into()));
                }
                _ => {}
            }
        }
        let bb = b2(x, u);
        let b = bb.max(0.0).sqrt();
        let (db, d2b) = d_u(&b2, x, u);
        if !(b < t10) || db.abs() > t10 * b || !(d2b.abs() < t10) {
            return Err(fail(
                'd',
                x,
                u,
                format!("|b| = {b:e}, |∂b²| = {:e}, |∂²b²| = {:e}, τ¹⁰ = {t10:e}", db.abs(), d2b.abs()),
            ));
        }
    }
    let (sign, sign_history) = match sigma {
        None => (1, Vec::new()),
        Some(c) => {
            let s = if c == Dichotomy::Plus { 1 } else { -1 };
            let mut hist = vec![s];
            hist.extend(&f1.sign_history);
            (s, hist)
        }
    };
    let a = Arc::new(f1.clone());
    let b = Arc::new(f2.clone());
    let node = |index: u8| CffNode {
        kind: CffKind::Composite {
            f1: a.clone(),
            f2: b.clone(),
            b2: b2.clone(),
            index,
        },
        level: f1.level + 1,
        sign,
        sign_history: sign_history.clone(),
    };
    Ok((node(1), node(2)))
}

/// Approximate root centers `g±(x)` with the window radius `ρ` used for
/// the branch hypotheses.
#[derive(Clone)]
pub struct BranchHypotheses {
    pub g_minus: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub g_plus: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub x: f64,
    pub zeta_minus: f64,
    pub zeta_plus: f64,
    pub chi_u_minus: f64,
    pub chi_u_plus: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
    /// Smallest `∂²_u χ` seen at the roots and their midpoint.
    pub convexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSolution {
    pub points: Vec<BranchPoint>,
    /// Largest ratio of a grid step jump to ten times the implicit-function
    /// slope bound; at most 1 for continuous branches.
    pub continuity_ratio: f64,
    /// `inf_grid min_i τ^{(f_i)}`; a grid infimum, not a true one.
    pub tau0_grid: f64,
}

/// `ζ₋(x) < ζ₊(x)`, the two roots of `χ^{(f)}(x, ·)` inside
/// `[lo(x), hi(x)]`, for every `x` of the grid.
pub fn cff_branch_solve(
    f: &CffNode,
    x_grid: &[f64],
    window: &(dyn Fn(f64) -> (f64, f64) + Sync),
    hypotheses: Option<&BranchHypotheses>,
) -> Result<BranchSolution, EigenError> {
    let scan = |x: f64| -> Result<(f64, f64), EigenError> {
        let (lo, hi) = window(x);
        let roots = bracketed_roots(|u| Ok(f.chi(x, u)), lo, hi, SCAN_POINTS, 1e-14)?;
        match roots[..] {
            [a, b] => Ok((a, b)),
            _ => Err(EigenError::RootCountMismatch { found: roots }),
        }
    };
    let roots = x_grid.par_iter().map(|&x| scan(x)).collect::<Result<Vec<_>, _>>()?;
    let tau0_grid = x_grid
        .iter()
        .zip(&roots)
        .flat_map(|(&x, &(a, b))| [f.child_tau_min(x, a), f.child_tau_min(x, b)])
        .fold(f64::INFINITY, f64::min);
    let sigma1 = tau0_grid.powi(4) / 8.0;
    if let Some(hyp) = hypotheses {
        check_hypotheses(f, x_grid, hyp, sigma1)?;
    }
    let mut points = Vec::with_capacity(x_grid.len());
    for (&x, &(zm, zp)) in x_grid.iter().zip(&roots) {
        let (dm, d2m) = f.chi_u_derivs(x, zm);
        let (dp, d2p) = f.chi_u_derivs(x, zp);
        let (_, d2c) = f.chi_u_derivs(x, 0.5 * (zm + zp));
        let (tm, tp) = (f.eval(x, zm).tau, f.eval(x, zp).tau);
        if !(dm <= -tm * tm && dp >= tp * tp) {
            return Err(EigenError::HypothesisFailed {
                item: "derivative split".into(),
                detail: format!("x = {x}: ∂χ(ζ₋) = {dm:e}, ∂χ(ζ₊) = {dp:e}, τ² = ({:e}, {:e})", tm * tm, tp * tp),
            });
        }
        let convexity = d2m.min(d2p).min(d2c);
        let bound = 0.5
            * [zm, zp, 0.5 * (zm + zp)]
                .iter()
                .map(|&u| f.child_tau_min(x, u))
                .fold(f64::INFINITY, f64::min)
                .powi(4);
        if !(convexity > bound) {
            return Err(EigenError::HypothesisFailed {
                item: "convexity".into(),
                detail: format!("x = {x}: ∂²χ = {convexity:e} ≤ {bound:e}"),
            });
        }
        points.push(BranchPoint {
            x,
            zeta_minus: zm,
            zeta_plus: zp,
            chi_u_minus: dm,
            chi_u_plus: dp,
            tau_minus: tm,
            tau_plus: tp,
            convexity,
        });
    }
    let slope = |x: f64, u: f64, du: f64| {
        let h = FD_STEP;
        ((f.chi(x + h, u) - f.chi(x - h, u)) / (2.0 * h) / du).abs()
    };
    let mut continuity_ratio: f64 = 0.0;
    for w in points.windows(2) {
        let dx = (w[1].x - w[0].x).abs();
        for (z0, z1, d0, d1) in [
            (w[0].zeta_minus, w[1].zeta_minus, w[0].chi_u_minus, w[1].chi_u_minus),
            (w[0].zeta_plus, w[1].zeta_plus, w[0].chi_u_plus, w[1].chi_u_plus),
        ] {
            let bound = slope(w[0].x, z0, d0).max(slope(w[1].x, z1, d1)) * dx;
            let jump = (z1 - z0).abs();
            continuity_ratio = continuity_ratio.max(jump / (10.0 * bound + 1e-12));
        }
    }
    Ok(BranchSolution {
        points,
        continuity_ratio,
        tau0_grid,
    })
}

/// Conditions (α)–(δ) on the centers `g±` at every grid point.
fn check_hypotheses(f: &CffNode, x_grid: &[f64], hyp: &BranchHypotheses, sigma1: f64) -> Result<(), EigenError> {
    let rho = hyp.rho;
    let fail = |item: &str, detail: String| EigenError::HypothesisFailed {
        item: item.to_string(),
        detail,
    };
    let (fa, fb) = f
        .children()
        .ok_or_else(|| fail("(β)", "a leaf has no pair of children".into()))?;
    for g in [&hyp.g_minus, &hyp.g_plus] {
        let prod = fa.chi(0.0, g(0.0)) * fb.chi(0.0, g(0.0));
        if prod.abs() > 1e-12 {
            return Err(fail("(β)", format!("χ₁χ₂ = {prod:e} at x = 0")));
        }
    }
    // log of σ₁¹³ρ⁸/2⁸³, kept in log space to avoid underflow.
    let log_alpha = 13.0 * sigma1.ln() + 8.0 * rho.ln() - 83.0 * std::f64::consts::LN_2;
    let gamma_pad = sigma1.powi(6) * rho.powi(4) / 2f64.powi(39);
    for &x in x_grid {
        let (gm, gp) = ((hyp.g_minus)(x), (hyp.g_plus)(x));
        for g in [gm, gp] {
            // Floored at roundoff: exact centers still leave |χ| ~ 1e−17.
            let c = f.chi(x, g).abs();
            if c > ALPHA_FLOOR && c.ln() >= log_alpha {
                return Err(fail("(α)", format!("|χ(x, g)| = {c:e} at x = {x}")));
            }
        }
        let (dm, _) = f.chi_u_derivs(x, gm);
        let (dp, _) = f.chi_u_derivs(x, gp);
        if gp - gm + gamma_pad < ((dm.abs() + dp.abs()) / 8.0).min(rho) {
            return Err(fail("(γ)", format!("centers too close at x = {x}")));
        }
        let lhs = sigma1 * sigma1 * rho * rho / 128.0 + (-dm).min(dp);
        let rhs = (sigma1 * sigma1 * (gp - gm).powi(2) / 256.0).min(sigma1 * sigma1 * rho * rho / 64.0);
        if lhs < rhs {
            return Err(fail("(δ)", format!("{lhs:e} < {rhs:e} at x = {x}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Hamiltonian, OperatorSpec, TWO_PI_SQ};
    use crate::potential::{fold, FoldedCoefficients, FourierCoefficients};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_setup() -> (Lattice, FoldedCoefficients) {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let mut c = FourierCoefficients::new(1, 1.0, 1.0);
        for n in 1..=5i64 {
            c.insert_pair(vec![n], Complex64::new((-(n as f64)).exp(), 0.0));
        }
        let f = fold(&c, &lat);
        (lat, f)
    }

    fn ball(r: i64) -> Vec<i64> {
        (-r..=r).collect()
    }

    #[test]
    fn zero_coupling_gives_diagonal_eigenpair() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.0, 0.3));
        let labels = ball(10);
        let h = ham.assemble(&labels);
        let p = solve_simple(&h, &labels, 0, 1, &SimpleOptions::default()).unwrap();
        assert_eq!(p.e, ham.v(0));
        for (i, &n) in labels.iter().enumerate() {
            let want = if n == 0 { 1.0 } else { 0.0 };
            assert_eq!(p.phi[i], Complex64::new(want, 0.0));
        }
    }

    #[test]
    fn simple_solution_matches_dense_spectrum() {
        let (lat, f) = exp_setup();
        let eps = 0.01;
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(eps, 0.3));
        let labels = ball(10);
        let h = ham.assemble(&labels);
        let p = solve_simple(&h, &labels, 0, 1, &SimpleOptions::default()).unwrap();
        let target = TWO_PI_SQ * 0.09;
        let dense = hermitian_eigenvalues(&h)
            .into_iter()
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
            .unwrap();
        assert!((p.e - dense).abs() < 1e-10, "{} vs {dense}", p.e);
        assert!(p.residual < 1e-10, "residual {}", p.residual);
        assert!((p.e - ham.v(0)).abs() < eps);
        assert_eq!(p.phi_at(0), Some(Complex64::new(1.0, 0.0)));
        let audit = decay_audit(&lat, &labels, &p.phi, 0, eps, 1.0, 1.0);
        assert!(audit.practical_ok, "{audit:?}");
        assert!(audit.strict_ok(), "{audit:?}");
    }

    #[test]
    fn unknown_center_is_rejected() {
        let h = CMatrix::identity(2, 2);
        assert_eq!(
            solve_simple(&h, &[0, 1], 5, 1, &SimpleOptions::default()),
            Err(EigenError::UnknownLabel(5))
        );
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.01, 0.3));
        let labels = ball(4);
        let h = ham.assemble(&labels);
        let opts = SimpleOptions {
            max_iter: 1,
            ..Default::default()
        };
        assert!(matches!(
            solve_simple(&h, &labels, 0, 1, &opts),
            Err(EigenError::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn chi_two_point_closed_form() {
        let (lat, f) = exp_setup();
        let eps = 0.2;
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(eps, -0.4));
        let labels = [0, 1];
        let h = ham.assemble(&labels);
        let c1 = (-1.0f64).exp();
        for e in [0.0, 3.0, 10.0, 50.0] {
            let want = (e - ham.v(1)) * (e - ham.v(0)) - eps * eps * c1 * c1;
            let got = pair_chi(&h, &labels, 1, 0, e).unwrap();
            assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn chi_equals_determinant_ratio() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.05, -0.45));
        let labels = ball(6);
        let h = ham.assemble(&labels);
        let rest: Vec<i64> = labels.iter().copied().filter(|&n| n != 0 && n != 1).collect();
        let full = hermitian_eigenvalues(&h);
        let punct = hermitian_eigenvalues(&ham.assemble(&rest));
        for e in [5.0, 9.0, 12.3] {
            let ratio = full.iter().map(|l| e - l).product::<f64>() / punct.iter().map(|m| e - m).product::<f64>();
            let chi = pair_chi(&h, &labels, 1, 0, e).unwrap();
            assert!((chi - ratio).abs() <= 1e-10 * (1.0 + ratio.abs()), "{chi} vs {ratio}");
        }
        let ham0 = ham.with_epsilon(0.0);
        let h0 = ham0.assemble(&labels);
        let e = 7.0;
        let want = (e - ham0.v(1)) * (e - ham0.v(0));
        assert!((pair_chi(&h0, &labels, 1, 0, e).unwrap() - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn chi_vanishes_at_dense_eigenvalues() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.05, -0.5));
        let labels: Vec<i64> = (-5..=6).collect();
        let h = ham.assemble(&labels);
        let target = TWO_PI_SQ / 4.0;
        let mut near: Vec<f64> = hermitian_eigenvalues(&h);
        near.sort_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
        for &e in &near[..2] {
            let chi = pair_chi(&h, &labels, 1, 0, e).unwrap();
            assert!(chi.abs() <= 1e-9 * TWO_PI_SQ, "χ({e}) = {chi:e}");
        }
    }

    #[test]
    fn pair_roots_at_zero_coupling_are_diagonal() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.0, -0.49));
        let labels: Vec<i64> = (-4..=5).collect();
        let h = ham.assemble(&labels);
        let (mp, mm) = (1, 0);
        assert!(ham.v(mp) > ham.v(mm));
        let bracket = practical_bracket(&h, &labels, mp, mm).unwrap();
        let b = solve_pair(&h, &labels, mp, mm, bracket, &PairOptions::default()).unwrap();
        assert!((b.e_minus - ham.v(mm)).abs() < 1e-11);
        assert!((b.e_plus - ham.v(mp)).abs() < 1e-11);
    }

    #[test]
    fn symmetric_pair_matches_dense() {
        let (lat, f) = exp_setup();
        let eps = 0.05;
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(eps, -0.5));
        // Invariant under n ↦ 1 − n.
        let labels: Vec<i64> = (-7..=8).collect();
        let h = ham.assemble(&labels);
        let bracket = practical_bracket(&h, &labels, 1, 0).unwrap();
        let b = solve_pair(&h, &labels, 1, 0, bracket, &PairOptions::default()).unwrap();
        let target = TWO_PI_SQ / 4.0;
        let mut dense = hermitian_eigenvalues(&h);
        dense.sort_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
        let (lo, hi) = (dense[0].min(dense[1]), dense[0].max(dense[1]));
        assert!((b.e_minus - lo).abs() < 1e-9 && (b.e_plus - hi).abs() < 1e-9);
        assert!(b.e_minus < b.e_plus);
        let split = b.e_plus - b.e_minus;
        let c1 = (-1.0f64).exp();
        assert!(split > eps * c1 && split < 4.0 * eps * c1, "split {split}");
        assert!(b.residuals.0 < 1e-9 && b.residuals.1 < 1e-9, "{:?}", b.residuals);
        assert!(b.beta_ok());
        assert!(b.tau0.abs() < 1e-9);
        assert!(b.root_form_defect < 1e-9);
        assert_eq!(b.window_count, Some(2));
    }

    #[test]
    fn ordering_margin_is_enforced() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.05, -0.5));
        let labels: Vec<i64> = (-7..=8).collect();
        let h = ham.assemble(&labels);
        let bracket = practical_bracket(&h, &labels, 1, 0).unwrap();
        let opts = PairOptions {
            tau0: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            solve_pair(&h, &labels, 1, 0, bracket, &opts),
            Err(EigenError::OrderingFailed { .. })
        ));
    }

    #[test]
    fn empty_bracket_reports_no_roots() {
        let (lat, f) = exp_setup();
        let ham = Hamiltonian::new(&lat, &f, OperatorSpec::raw(0.05, -0.45));
        let labels: Vec<i64> = (0..=1).collect();
        let h = ham.assemble(&labels);
        let b = solve_pair(&h, &labels, 1, 0, (-1.0, 2.0), &PairOptions::default());
        assert!(matches!(b, Err(EigenError::RootCountMismatch { ref found }) if found.is_empty()));
    }

    #[test]
    fn dichotomy_trivial_cases() {
        let p = quadratic_dichotomy(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.case, Dichotomy::Plus);
        assert_eq!((p.lambda, p.gamma), (0.0, 0.0));
        assert_eq!(quadratic_dichotomy(1.0, 0.0, 0.0, 0.0).unwrap().case, Dichotomy::Minus);
        assert!(quadratic_dichotomy(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(quadratic_dichotomy(1.0, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn dichotomy_random_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen = [0usize; 2];
        let mut tried = 0;
        while tried < 100_000 {
            let a2: f64 = rng.random_range(-5.0..5.0);
            let d: f64 = rng.random_range(0.01..3.0);
            let b: f64 = rng.random_range(-1.0..1.0) * d;
            let u: f64 = rng.random_range(a2 - 2.0 * d..a2 + 3.0 * d);
            let q = (u - a2 - d) * (u - a2) - b * b;
            if q.abs() >= 0.99 * d * d / 4.0 {
                continue;
            }
            tried += 1;
            let c = quadratic_dichotomy(a2 + d, a2, b, u).unwrap();
            seen[(c.case == Dichotomy::Minus) as usize] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0);
    }

    proptest! {
        #[test]
        fn dichotomy_agrees_with_root_side(a2 in -3.0..3.0f64, d in 0.05..2.0f64, bf in -0.9..0.9f64, t in -0.24..0.24f64, upper: bool) {
            let b = bf * d;
            // u solves (u − a₁)(u − a₂) = b² + t·d², on the chosen side.
            let a1 = a2 + d;
            let disc = (d * d / 4.0 + b * b + t * d * d).sqrt();
            let mid = 0.5 * (a1 + a2);
            let u = if upper { mid + disc } else { mid - disc };
            let c = quadratic_dichotomy(a1, a2, b, u).unwrap();
            prop_assert_eq!(c.case, if upper { Dichotomy::Plus } else { Dichotomy::Minus });
            prop_assert!((c.lambda - t).abs() < 1e-9);
        }
    }

    fn leaf_const(a: f64) -> CffNode {
        CffNode::leaf(func(move |_, _| a))
    }

    #[test]
    fn level_one_with_zero_coupling_is_a_product() {
        let (a1, a2) = (0.3, 0.1);
        let grid = [(0.0, 0.2), (0.1, 0.25), (-0.1, 0.15)];
        let (f, g) = cff_build(&leaf_const(a1), &leaf_const(a2), func(|_, _| 0.0), &grid).unwrap();
        assert_eq!((f.level, f.sign, f.sign_history.clone()), (1, 1, vec![]));
        for &(x, u) in &grid {
            let v = f.eval(x, u);
            assert!((v.f - (u - a1)).abs() < 1e-15);
            assert!((v.chi - (u - a2) * (u - a1)).abs() < 1e-15);
            assert!((v.mu - (u - a2)).abs() < 1e-15);
            assert!((v.tau - (a1 - a2)).abs() < 1e-15);
            assert!((g.eval(x, u).mu - (u - a1)).abs() < 1e-15);
        }
    }

    #[test]
    fn chi_stays_finite_across_a_pole() {
        let (a1, a2) = (0.3, 0.1);
        let (f, _) = cff_build(&leaf_const(a1), &leaf_const(a2), func(|_, _| 1e-4), &[(0.0, 0.2)]).unwrap();
        let v = f.eval(0.0, a2);
        assert!(!v.f.is_finite() || v.f.abs() > 1e10);
        assert!((v.chi - ((a2 - a1) * 0.0 - 1e-4)).abs() < 1e-15);
        let near = f.eval(0.0, a2 + 1e-9).chi;
        assert!((near - v.chi).abs() < 1e-9);
    }

    #[test]
    fn tau_matches_expanded_polynomials() {
        // Level 2 on linear leaves: τ = (χ₂ − χ₁)τ₁τ₂ expanded by hand.
        let leaf = |c: f64, s: f64| CffNode::leaf(func(move |x, _| c + s * x));
        let b2 = |c: f64| func(move |x, _| c * x * x);
        let grid: Vec<(f64, f64)> = (0..5).map(|i| (0.0, 0.5 + 0.001 * i as f64)).collect();
        let (f1, _) = cff_build(&leaf(0.5, 0.0), &leaf(0.499, 0.0), b2(0.0), &grid).unwrap();
        let (g1, _) = cff_build(&leaf(0.5, 0.0), &leaf(0.498, 0.0), b2(0.0), &grid).unwrap();
        for &(x, u) in &grid {
            let (p, q) = (f1.eval(x, u), g1.eval(x, u));
            let chi_p = (u - 0.499) * (u - 0.5);
            let chi_q = (u - 0.498) * (u - 0.5);
            assert!((p.chi - chi_p).abs() < 1e-15 && (q.chi - chi_q).abs() < 1e-15);
            let node = CffNode {
                kind: CffKind::Composite {
                    f1: Arc::new(f1.clone()),
                    f2: Arc::new(g1.clone()),
                    b2: b2(0.0),
                    index: 1,
                },
                level: 2,
                sign: 1,
                sign_history: vec![1],
            };
            let want = (chi_q - chi_p) * 0.001 * 0.002;
            assert!((node.eval(x, u).tau - want).abs() < 1e-18);
        }
    }

    #[test]
    fn admissibility_reports_the_failing_condition() {
        let grid = [(0.0, 0.2)];
        let err = cff_build(&leaf_const(0.1), &leaf_const(0.3), func(|_, _| 0.0), &grid).unwrap_err();
        assert!(matches!(err, EigenError::AdmissibilityFailed { condition: 'a', .. }));
        let err = cff_build(&leaf_const(0.3), &leaf_const(0.1), func(|_, _| 4.0), &grid).unwrap_err();
        assert!(matches!(err, EigenError::AdmissibilityFailed { condition: 'd', .. }));
        let err = cff_build(&leaf_const(3.0), &leaf_const(-1.0), func(|_, _| 0.0), &grid).unwrap_err();
        assert!(matches!(err, EigenError::AdmissibilityFailed { condition: 'b', .. }));
    }

    #[test]
    fn sign_history_grows_from_the_left() {
        // Both children sit on the + side of their own quadratics at u = 1/2.
        let grid = [(0.0, 0.5)];
        let zero = || func(|_, _| 0.0);
        let (p, _) = cff_build(&leaf_const(0.5), &leaf_const(-0.4), zero(), &grid).unwrap();
        let (q, _) = cff_build(&leaf_const(0.499), &leaf_const(-0.4), zero(), &grid).unwrap();
        let (f, g) = cff_build(&p, &q, zero(), &grid).unwrap();
        assert_eq!((f.level, f.sign, f.sign_history.clone()), (2, 1, vec![1]));
        let flipped = CffNode {
            sign_history: vec![-1],
            ..g.clone()
        };
        let err = cff_build(&f, &flipped, zero(), &grid).unwrap_err();
        assert!(matches!(err, EigenError::AdmissibilityFailed { condition: 'e', .. }));
    }

    #[test]
    fn constant_product_roots() {
        let (a, a2) = (0.4, 0.2);
        let (f, _) = cff_build(&leaf_const(a), &leaf_const(a2), func(|_, _| 0.0), &[(0.0, 0.3)]).unwrap();
        let xs: Vec<f64> = (0..11).map(|i| -0.5 + 0.1 * i as f64).collect();
        let sol = cff_branch_solve(&f, &xs, &|_| (0.0, 0.6), None).unwrap();
        for p in &sol.points {
            assert!((p.zeta_minus - a2).abs() < 1e-12 && (p.zeta_plus - a).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_model_matches_closed_form() {
        let (g, theta) = (0.3, 0.1);
        let a1 = move |_x: f64, _u: f64| g + theta;
        let a2 = move |_x: f64, _u: f64| g - theta;
        let bsq = move |x: f64, _u: f64| (x * theta).powi(2);
        let (f, _) = cff_build(
            &CffNode::leaf(func(a1)),
            &CffNode::leaf(func(a2)),
            func(bsq),
            &[(0.0, g), (0.4, g + 0.05)],
        )
        .unwrap();
        let root = move |x: f64| (theta * theta + (x * theta).powi(2)).sqrt();
        let hyp = BranchHypotheses {
            g_minus: Arc::new(move |x| g - root(x)),
            g_plus: Arc::new(move |x| g + root(x)),
            rho: 0.5,
        };
        let xs: Vec<f64> = (0..21).map(|i| -0.5 + 0.05 * i as f64).collect();
        let sol = cff_branch_solve(&f, &xs, &|_| (g - 0.5, g + 0.5), Some(&hyp)).unwrap();
        for p in &sol.points {
            let r = root(p.x);
            assert!((p.zeta_minus - (g - r)).abs() < 1e-10);
            assert!((p.zeta_plus - (g + r)).abs() < 1e-10);
            assert!(p.chi_u_minus < 0.0 && p.chi_u_plus > 0.0);
        }
        assert!(sol.continuity_ratio <= 1.0, "{}", sol.continuity_ratio);
        assert_eq!(sol.tau0_grid, 1.0);
    }

    #[test]
    fn single_root_window_is_a_mismatch() {
        let (f, _) = cff_build(&leaf_const(0.4), &leaf_const(0.2), func(|_, _| 0.0), &[(0.0, 0.3)]).unwrap();
        let err = cff_branch_solve(&f, &[0.0], &|_| (0.3, 0.6), None).unwrap_err();
        assert!(matches!(err, EigenError::RootCountMismatch { ref found } if found.len() == 1));
    }
}
