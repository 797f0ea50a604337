//! The band function `E(k)`, gap edges at the resonant momenta
//! `k_m = −ξ(m)/2`, and audits of symmetry, monotonicity, gap size,
//! eigenvector decay and in-gap resolvent decay.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolve::{
    practical_bracket, solve_pair, solve_simple, EigenError, PairOptions, SimpleOptions,
};
use crate::lattice::Lattice;
use crate::linalg::{hermitian_eigenvalues, CMatrix, CVector};
use crate::operator::{Hamiltonian, OperatorSpec};
use crate::oracle::{Floquet, OracleError};
use crate::potential::FoldedCoefficients;
use crate::scales::{resonance_profile, ScaleSchedule};
use crate::schur::{dense_resolvent, q_g_functions, SchurError};

/// Grid points closer than this to some `k_m` are dropped.
pub const KM_EXCLUSION: f64 = 1e-12;
/// Scale increments below this multiple of `max(1, |E|)` are roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;
/// Distance from `k_m` of the one-sided samples used to cross-check gap edges.
pub const LIMIT_STEP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Schur(#[from] SchurError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{count} near-resonant partners of 0 at k = {k}; chains deeper than one pair are not solved")]
    ChainTooDeep { k: f64, count: usize },
    #[error("k_m = 0 for m = {0}")]
    ZeroMomentum(i64),
    #[error("gap equation has no sign change in [{lo}, {hi}]")]
    NoEdge { lo: f64, hi: f64 },
}

/// Everything that fixes `H_{ε,k}` and the scales, apart from `k`.
#[derive(Debug, Clone)]
pub struct BandSetup {
    pub lattice: Lattice,
    pub folded: FoldedCoefficients,
    pub spec: OperatorSpec,
    pub schedule: ScaleSchedule,
    pub truncation_r: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    /// A partner `n` is pair-resonant with `0` when
    /// `|v(n) − v(0)| < pair_factor·|ε|·Σ|c|`.
    pub pair_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleClass {
    /// Solved by the simple fixed point.
    Simple,
    /// Solved as a pair with the given partner.
    Pair { partner: i64 },
}

impl SampleClass {
    pub fn name(&self) -> &'static str {
        match self {
            SampleClass::Simple => "simple",
            SampleClass::Pair { .. } => "pair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub k: f64,
    pub e: f64,
    /// Index of the largest scale used.
    pub scale: usize,
    pub class: SampleClass,
    /// `|E⁽ˢ⁾ − E⁽ˢ⁻¹⁾|` between consecutive scales.
    pub increments: Vec<f64>,
    /// Whether each increment obeys `|ε|(δ₀⁽ˢ⁻¹⁾)⁶` up to roundoff.
    pub increments_ok: bool,
    pub residual: f64,
    pub decay: EnvelopeAudit,
    /// Resonances of `k` within the truncation, theorem family.
    pub resonances: Vec<i64>,
    #[serde(skip)]
    pub labels: Vec<i64>,
    #[serde(skip)]
    pub phi: Option<CVector>,
}

impl BandSample {
    pub fn phi_at(&self, n: i64) -> Option<Complex64> {
        let i = self.labels.iter().position(|&x| x == n)?;
        self.phi.as_ref().map(|p| p[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub k: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEdges {
    pub m: i64,
    pub k_m: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub width: f64,
    /// `2|ε|exp(−κ₀|m|^{α₀}/2)`.
    pub bound: f64,
    /// `|E± − roots of χ|` against the pair solver; `None` when the gap is
    /// too narrow for χ to change sign in floating point.
    pub pair_defect: Option<f64>,
    /// `max |E(k_m ± η) − E±|` over the two one-sided samples, and the
    /// tolerance it is held to.
    pub limit_defect: Option<f64>,
    pub limit_tol: f64,
    /// Gap width from the Floquet discriminant, raw mode only.
    pub floquet_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    /// Smallest slack seen; negative when the audit failed.
    pub worst_margin: Option<f64>,
    pub detail: String,
}

impl AuditRecord {
    fn new(name: &str, checked: usize, failures: &[String], worst_margin: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            passed: failures.is_empty(),
            checked,
            worst_margin,
            detail: failures.iter().take(5).cloned().collect::<Vec<_>>().join("; "),
        }
    }
}

/// The three `k⁽⁰⁾` definitions in use, evaluated at one `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KZeroVariants {
    /// `min(ε₀, k/1024)`.
    pub band: f64,
    /// `min(ε₀^{3/4}, k_{n₀}/512)`, `k_{n₀}` the first positive resonance.
    pub pair: f64,
    /// `min(ε₀^{3/4}, k/512)`.
    pub scale: f64,
}

impl KZeroVariants {
    pub fn new(eps0: f64, k: f64, k_first: f64) -> Self {
        let e34 = eps0.powf(0.75);
        Self {
            band: eps0.min(k / 1024.0),
            pair: e34.min(k_first / 512.0),
            scale: e34.min(k / 512.0),
        }
    }

    pub fn weakest(&self) -> f64 {
        self.band.min(self.pair).min(self.scale)
    }

    pub fn as_array(&self) -> [(&'static str, f64); 3] {
        [("band", self.band), ("pair", self.pair), ("scale", self.scale)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub k_samples: Vec<BandSample>,
    pub failures: Vec<SampleFailure>,
    pub gaps: Vec<GapEdges>,
    pub e0: Option<f64>,
    pub audits: Vec<AuditRecord>,
    /// Variants at the smallest positive sampled `k`.
    pub kzero_variants: Option<KZeroVariants>,
}

impl BandReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.audits.iter().all(|a| a.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeAudit {
    pub checked: usize,
    /// `(n, log-margin)` for points above `ε^{1/2}Σ exp(−(7/8)κ₀|n−m|^{α₀})`.
    pub violations: Vec<(i64, f64)>,
    /// Largest `|φ|` on the centers; must stay at most 2.
    pub center_max: f64,
    /// Fitted decay rate beyond distance 2 from the centers.
    pub fitted_rate: Option<f64>,
    pub strict_ok: bool,
    pub practical_ok: bool,
}

/// Multi-center decay envelope of `φ` around `centers`, checked pointwise
/// at distance greater than `radius` from every center.
#[allow(clippy::too_many_arguments)]
pub fn envelope_audit(
    lat: &Lattice,
    labels: &[i64],
    phi: &CVector,
    centers: &[i64],
    epsilon: f64,
    kappa0: f64,
    alpha0: f64,
    radius: u32,
) -> EnvelopeAudit {
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut center_max: f64 = 0.0;
    let mut shells: std::collections::BTreeMap<u32, f64> = Default::default();
    for (i, &n) in labels.iter().enumerate() {
        let a = phi[i].norm();
        if centers.contains(&n) {
            center_max = center_max.max(a);
            continue;
        }
        let d = centers.iter().map(|&m| lat.dist(n, m)).min().unwrap_or(0);
        if d > 2 && a > 0.0 {
            let slot = shells.entry(d).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(a.ln());
        }
        if d <= radius {
            continue;
        }
        checked += 1;
        let env: f64 = centers
            .iter()
            .map(|&m| (-0.875 * kappa0 * f64::from(lat.dist(n, m)).powf(alpha0)).exp())
            .sum::<f64>()
            * epsilon.abs().sqrt();
        if a > env {
            violations.push((n, (env / a).ln()));
        }
    }
    let fitted_rate = (shells.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = shells
            .iter()
            .map(|(&d, &y)| (f64::from(d).powf(alpha0), y))
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    });
    EnvelopeAudit {
        checked,
        strict_ok: violations.is_empty() && center_max <= 2.0,
        practical_ok: fitted_rate.is_none_or(|r| r >= kappa0 / 2.0) && center_max <= 2.0,
        violations,
        center_max,
        fitted_rate,
    }
}

/// `k ∈ [min, max]` with the given step, minus points near any `k_m`, `m ≠ 0`.
pub fn k_grid(lat: &Lattice, truncation_r: f64, min: f64, max: f64, step: f64) -> Vec<f64> {
    let kms: Vec<f64> = lat
        .ball_labels(truncation_r)
        .into_iter()
        .filter(|&l| l != 0)
        .map(|l| -lat.xi_f64(l) / 2.0)
        .collect();
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n)
        // Snapping to 1e-12 keeps symmetric grids exactly symmetric.
        .map(|i| ((min + step * i as f64) * 1e12).round() / 1e12)
        .filter(|k| kms.iter().all(|km| (k - km).abs() > KM_EXCLUSION))
        .collect()
}

impl BandSetup {
    pub fn hamiltonian(&self, k: f64) -> Hamiltonian<'_> {
        Hamiltonian::new(&self.lattice, &self.folded, self.spec.with_k(k))
    }

    /// Ball radii per scale: `R⁽ˢ⁾` while below the truncation, then the
    /// truncation itself.
    pub fn scale_radii(&self) -> Vec<f64> {
        let mut radii: Vec<f64> = (1..=self.schedule.s_max)
            .map(|s| self.schedule.r(s))
            .take_while(|&r| r < self.truncation_r)
            .collect();
        radii.push(self.truncation_r);
        radii
    }

    fn coupling_l1(&self) -> f64 {
        self.folded.iter().map(|(_, c)| c.norm()).sum::<f64>() * self.spec.coupling().abs()
    }

    /// Labels `n ≠ 0` whose diagonal entry lies within the pair window of
    /// `v(0)`, nearest first.
    pub fn partners(&self, k: f64) -> Vec<i64> {
        let ham = self.hamiltonian(k);
        let v0 = ham.v(0);
        let window = self.pair_factor * self.coupling_l1();
        let mut near: Vec<(f64, i64)> = self
            .lattice
            .ball_labels(self.truncation_r)
            .into_iter()
            .filter(|&n| n != 0)
            .map(|n| ((ham.v(n) - v0).abs(), n))
            .filter(|&(d, _)| d < window)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.into_iter().map(|p| p.1).collect()
    }

    /// `B(r)`, closed under `n ↦ n₀ − n` when a partner is given.
    pub fn domain(&self, r: f64, partner: Option<i64>) -> Vec<i64> {
        let ball = self.lattice.ball_labels(r);
        let mut set: BTreeSet<i64> = ball.iter().copied().collect();
        if let Some(n0) = partner {
            set.extend(ball.iter().map(|&n| n0 - n));
        }
        set.into_iter().collect()
    }

    /// `E(k)` at every feasible scale, keeping the largest.
    pub fn sample(&self, k: f64) -> Result<BandSample, BandError> {
        let partners = self.partners(k);
        if partners.len() > 1 {
            return Err(BandError::ChainTooDeep {
                k,
                count: partners.len(),
            });
        }
        let class = match partners.first() {
            Some(&p) => SampleClass::Pair { partner: p },
            None => SampleClass::Simple,
        };
        let ham = self.hamiltonian(k);
        let mut energies = Vec::new();
        let mut last = None;
        for (s, &r) in self.scale_radii().iter().enumerate() {
            let partner = match class {
                SampleClass::Pair { partner } => Some(partner),
                SampleClass::Simple => None,
            };
            let labels = self.domain(r, partner);
            let h = ham.assemble(&labels);
            let (e, phi) = match partner {
                None => {
                    let p = solve_simple(&h, &labels, 0, s + 1, &SimpleOptions::default())?;
                    (p.e, p.phi)
                }
                Some(n0) => self.pair_branch(&h, &labels, n0)?,
            };
            energies.push(e);
            last = Some((labels, h, e, phi));
        }
        let (labels, h, e, phi) = last.expect("at least one scale");
        let increments: Vec<f64> = energies.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let floor = ROUNDOFF_FLOOR * e.abs().max(1.0);
        let increments_ok = energies.windows(2).enumerate().all(|(i, w)| {
            let log_delta = self.schedule.log_delta((i + 1).min(self.schedule.s_max));
            let bound = self.spec.epsilon.abs() * (6.0 * log_delta).exp();
            (w[1] - w[0]).abs() <= bound.max(floor)
        });
        let centers: Vec<i64> = match class {
            SampleClass::Simple => vec![0],
            SampleClass::Pair { partner } => vec![0, partner],
        };
        let decay = envelope_audit(
            &self.lattice,
            &labels,
            &phi,
            &centers,
            self.spec.epsilon,
            self.kappa0,
            self.alpha0,
            0,
        );
        let profile = resonance_profile(k, &self.schedule, &self.lattice, self.truncation_r);
        Ok(BandSample {
            k,
            e,
            scale: energies.len(),
            class,
            residual: crate::eigensolve::residual(&h, &phi, e),
            increments,
            increments_ok,
            decay,
            resonances: profile.r_of_k().to_vec(),
            labels,
            phi: Some(phi),
        })
    }

    /// The branch of the pair `{0, n₀}` carried by `0`: the upper root when
    /// `v(0) > v(n₀)`, the lower one otherwise.
    fn pair_branch(&self, h: &CMatrix, labels: &[i64], n0: i64) -> Result<(f64, CVector), BandError> {
        let i0 = labels.iter().position(|&x| x == 0).expect("0 in domain");
        let i1 = labels.iter().position(|&x| x == n0).expect("partner in domain");
        let zero_high = h[(i0, i0)].re > h[(i1, i1)].re;
        let (mp, mm) = if zero_high { (0, n0) } else { (n0, 0) };
        let bracket = practical_bracket(h, labels, mp, mm)?;
        let b = match solve_pair(h, labels, mp, mm, bracket, &PairOptions::default()) {
            Err(EigenError::OrderingFailed { .. }) => {
                let b = solve_pair(h, labels, mm, mp, bracket, &PairOptions::default())?;
                // Roles swapped: 0 now sits on the other branch.
                return Ok(if zero_high {
                    (b.e_minus, b.phi_minus)
                } else {
                    (b.e_plus, b.phi_plus)
                });
            }
            r => r?,
        };
        Ok(if zero_high {
            (b.e_plus, b.phi_plus)
        } else {
            (b.e_minus, b.phi_minus)
        })
    }

    /// Samples in parallel; failures are recorded and the run continues.
    pub fn band_curve(&self, ks: &[f64]) -> (Vec<BandSample>, Vec<SampleFailure>) {
        let results: Vec<(f64, Result<BandSample, BandError>)> =
            ks.par_iter().map(|&k| (k, self.sample(k))).collect();
        let mut samples = Vec::new();
        let mut failures = Vec::new();
        for (k, r) in results {
            match r {
                Ok(s) => samples.push(s),
                Err(e) => failures.push(SampleFailure {
                    k,
                    error: e.to_string(),
                }),
            }
        }
        (samples, failures)
    }

    /// `E(0)`, by the simple fixed point at `k = 0`.
    pub fn e_zero(&self) -> Result<f64, BandError> {
        Ok(self.sample(0.0)?.e)
    }

    /// `E±(k_m)` from the scalar equations `E − v(0) − Q(E) ∓ |G(E)| = 0` on
    /// the domain symmetric under `n ↦ m − n`.
    pub fn gap_edges(&self, m: i64) -> Result<GapEdges, BandError> {
        let k_m = -self.lattice.xi_f64(m) / 2.0;
        if k_m == 0.0 {
            return Err(BandError::ZeroMomentum(m));
        }
        let ham = self.hamiltonian(k_m);
        if self.coupling_l1() == 0.0 {
            let v = ham.v(0);
            return Ok(GapEdges {
                m,
                k_m,
                e_minus: v,
                e_plus: v,
                width: 0.0,
                bound: 0.0,
                pair_defect: Some(0.0),
                limit_defect: Some(0.0),
                limit_tol: 0.0,
                floquet_width: None,
            });
        }
        let labels = self.domain(self.truncation_r, Some(m));
        let h = ham.assemble(&labels);
        let i0 = labels.iter().position(|&x| x == 0).expect("0 in domain");
        let im = labels.iter().position(|&x| x == m).expect("m in domain");
        let (lo, hi) = practical_bracket(&h, &labels, 0, m)?;
        let edge = |sign: f64| -> Result<f64, BandError> {
            let f = |e: f64| -> Result<f64, BandError> {
                let qg = q_g_functions(&h, &[i0, im], e)?;
                let p = if qg.principal[0] == i0 { 0 } else { 1 };
                let g = qg.g.expect("two principal points").0.norm();
                Ok(e - h[(i0, i0)].re - qg.q[p].re - sign * g)
            };
            let (mut a, mut b) = (lo, hi);
            let (mut fa, fb) = (f(a)?, f(b)?);
            if fa * fb > 0.0 {
                return Err(BandError::NoEdge { lo, hi });
            }
            for _ in 0..200 {
                if b - a <= 1e-13 * b.abs().max(1.0) {
                    break;
                }
                let c = 0.5 * (a + b);
                let fc = f(c)?;
                if fa * fc <= 0.0 {
                    b = c;
                } else {
                    a = c;
                    fa = fc;
                }
            }
            Ok(0.5 * (a + b))
        };
        let (e_minus, e_plus) = (edge(-1.0)?, edge(1.0)?);
        let pair_defect = match solve_pair(&h, &labels, 0, m, (lo, hi), &PairOptions::default())
            .or_else(|_| solve_pair(&h, &labels, m, 0, (lo, hi), &PairOptions::default()))
        {
            Ok(pair) => Some((pair.e_minus - e_minus).abs().max((pair.e_plus - e_plus).abs())),
            Err(EigenError::RootCountMismatch { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let limits = [k_m - LIMIT_STEP, k_m + LIMIT_STEP]
            .iter()
            .map(|&k| self.sample(k).map(|s| s.e))
            .collect::<Result<Vec<f64>, _>>()
            .ok();
        let limit_defect = limits.map(|v| {
            let (a, b) = (v[0].min(v[1]), v[0].max(v[1]));
            (a - e_minus).abs().max((b - e_plus).abs())
        });
        let slope = self.spec.diagonal_scale() * 2.0 * (k_m.abs() + LIMIT_STEP);
        let limit_tol = (slope * LIMIT_STEP).max(1e-7);
        let floquet_width = if self.spec.normalized {
            None
        } else {
            let fl = Floquet::new(&self.lattice, &self.folded, self.spec.epsilon);
            fl.gap_edges(e_minus, e_plus, 0.5 * (e_plus - e_minus).max(1e-6), 1e-12)
                .ok()
                .flatten()
                .map(|(a, b)| b - a)
        };
        let width = e_plus - e_minus;
        Ok(GapEdges {
            m,
            k_m,
            e_minus,
            e_plus,
            width,
            bound: 2.0
                * self.spec.coupling().abs()
                * (-self.kappa0 * f64::from(self.lattice.norm_of_label(m)).powf(self.alpha0) / 2.0).exp(),
            pair_defect,
            limit_defect,
            limit_tol,
            floquet_width,
        })
    }

    /// `E(k) = E(−k)` and `φ(n; −k) = conj φ(−n; k)` on paired samples.
    pub fn symmetry_audit(&self, samples: &[BandSample]) -> AuditRecord {
        let mut failures = Vec::new();
        let mut checked = 0;
        let mut worst: f64 = f64::INFINITY;
        for s in samples.iter().filter(|s| s.k > 0.0) {
            let Some(t) = samples.iter().find(|t| t.k == -s.k) else {
                continue;
            };
            checked += 1;
            let de = (s.e - t.e).abs();
            let mut dphi: f64 = 0.0;
            for &n in &s.labels {
                if let (Some(a), Some(b)) = (t.phi_at(n), s.phi_at(-n)) {
                    dphi = dphi.max((a - b.conj()).norm());
                }
            }
            worst = worst.min(1e-9 - de.max(dphi));
            if de > 1e-9 || dphi > 1e-9 {
                failures.push(format!("k = {}: |ΔE| = {de:e}, |Δφ| = {dphi:e}", s.k));
            }
        }
        AuditRecord::new("symmetry", checked, &failures, worst.is_finite().then_some(worst))
    }

    /// `(k⁰)²(k−k₁)² < E(k) − E(k₁) < 2k(k−k₁) + 2|ε|Σ(δ₀⁽ˢ⁽ⁿ⁾⁻¹⁾)^{1/8}` over
    /// simple-class sample pairs with `0 < k₁ < k < k₁ + 1/4`. The `k`-terms
    /// carry the diagonal scale.
    pub fn monotonicity_audit(&self, samples: &[BandSample]) -> (AuditRecord, Vec<AuditRecord>) {
        let c = self.spec.diagonal_scale();
        let eps = self.spec.epsilon.abs();
        let eps0 = self.schedule.eps0();
        let k_first = self.first_resonance();
        let admissible: Vec<&BandSample> = samples
            .iter()
            .filter(|s| s.k > 0.0 && s.class == SampleClass::Simple)
            .collect();
        let kms: Vec<(f64, i64)> = self
            .lattice
            .ball_labels(self.truncation_r)
            .into_iter()
            .filter(|&n| n != 0)
            .map(|n| (-self.lattice.xi_f64(n) / 2.0, n))
            .collect();
        let mut failures = Vec::new();
        let mut per_variant = [Vec::new(), Vec::new(), Vec::new()];
        let mut checked = 0;
        let mut worst: f64 = f64::INFINITY;
        for a in &admissible {
            for b in &admissible {
                let (k1, k) = (a.k, b.k);
                if !(k > k1 && k - k1 < 0.25) {
                    continue;
                }
                checked += 1;
                let diff = b.e - a.e;
                let variants = KZeroVariants::new(eps0, k, k_first);
                let lower = |k0: f64| c * k0 * k0 * (k - k1).powi(2);
                let tail: f64 = kms
                    .iter()
                    .filter(|&&(km, _)| km > k1 && km < k)
                    .map(|&(_, n)| {
                        let s = self
                            .schedule
                            .shell_of(f64::from(self.lattice.norm_of_label(n)))
                            .unwrap_or(self.schedule.s_max);
                        (self.schedule.log_delta(s - 1) / 8.0).exp()
                    })
                    .sum();
                let upper = c * 2.0 * k * (k - k1) + 2.0 * eps * tail;
                let lo_margin = diff - lower(variants.weakest());
                let hi_margin = upper - diff;
                worst = worst.min(lo_margin.min(hi_margin));
                if !(lo_margin > 0.0 && hi_margin > 0.0) {
                    failures.push(format!("({k1}, {k}): lower slack {lo_margin:e}, upper slack {hi_margin:e}"));
                }
                for (i, (name, k0)) in variants.as_array().iter().enumerate() {
                    if !(diff > lower(*k0)) {
                        per_variant[i].push(format!("{name} at ({k1}, {k})"));
                    }
                }
            }
        }
        let names = ["monotonicity_k0_band", "monotonicity_k0_pair", "monotonicity_k0_scale"];
        let variants = names
            .iter()
            .zip(&per_variant)
            .map(|(n, f)| AuditRecord::new(n, checked, f, None))
            .collect();
        (
            AuditRecord::new("monotonicity", checked, &failures, worst.is_finite().then_some(worst)),
            variants,
        )
    }

    /// Smallest positive `k_m` within the truncation, or `1/2` if none.
    pub fn first_resonance(&self) -> f64 {
        self.lattice
            .ball_labels(self.truncation_r)
            .into_iter()
            .map(|n| (-self.lattice.xi_f64(n) / 2.0).abs())
            .filter(|&k| k > 0.0)
            .fold(f64::INFINITY, f64::min)
            .min(0.5)
    }

    /// Dense `(E − H_k)⁻¹` on the truncation at each probe `k`: every entry
    /// at most `δ⁻¹`, and at most `exp(−κ₀|m−n|^{α₀}/8)` once
    /// `|m−n| > (16 log δ⁻¹)^{1/α₀}`.
    pub fn gap_resolvent_audit(&self, e: f64, probes: &[f64], delta: f64) -> GapResolventAudit {
        let far = (16.0 * (1.0 / delta).ln()).powf(1.0 / self.alpha0);
        let per_probe: Vec<ProbeResult> = probes
            .par_iter()
            .map(|&k| {
                let labels = self.domain(self.truncation_r, None);
                let h = self.hamiltonian(k).assemble(&labels);
                let dist = hermitian_eigenvalues(&h)
                    .iter()
                    .fold(f64::INFINITY, |m, v| m.min((v - e).abs()));
                let mut r = ProbeResult {
                    k,
                    spectral_distance: dist,
                    max_entry: f64::INFINITY,
                    decay_checked: 0,
                    decay_violations: 0,
                };
                let Ok(g) = dense_resolvent(&h, e) else {
                    return r;
                };
                r.max_entry = g.iter().fold(0.0, |m, z| m.max(z.norm()));
                for (i, &a) in labels.iter().enumerate() {
                    for (j, &b) in labels.iter().enumerate() {
                        let d = f64::from(self.lattice.dist(a, b));
                        if d > far {
                            r.decay_checked += 1;
                            if g[(i, j)].norm() > (-self.kappa0 * d.powf(self.alpha0) / 8.0).exp() {
                                r.decay_violations += 1;
                            }
                        }
                    }
                }
                r
            })
            .collect();
        let passed = per_probe
            .iter()
            .all(|p| p.max_entry <= 1.0 / delta && p.decay_violations == 0);
        GapResolventAudit {
            e,
            delta,
            far_distance: far,
            probes: per_probe,
            passed,
        }
    }

    /// `count` momenta evenly spaced over `(k_m − τ₀, k_m + τ₀]`, with `τ₀`
    /// the smallest positive `|ξ|` in the truncation.
    pub fn gap_probes(&self, m: i64, count: usize) -> Vec<f64> {
        let k_m = -self.lattice.xi_f64(m) / 2.0;
        let tau0 = 2.0 * self.first_resonance();
        (1..=count)
            .map(|i| k_m - tau0 + 2.0 * tau0 * i as f64 / count as f64)
            .collect()
    }

    /// Gap edges for each `m`, the band on `ks`, `E(0)` and all audits.
    pub fn run(&self, ks: &[f64], gap_labels: &[i64]) -> BandReport {
        let (mut samples, failures) = self.band_curve(ks);
        samples.sort_by(|a, b| a.k.total_cmp(&b.k));
        let mut audits = Vec::new();
        let mut gaps = Vec::new();
        let mut gap_failures = Vec::new();
        for &m in gap_labels {
            match self.gap_edges(m) {
                Ok(g) => gaps.push(g),
                Err(e) => gap_failures.push(format!("m = {m}: {e}")),
            }
        }
        let over: Vec<String> = gaps
            .iter()
            .filter(|g| !(g.width >= 0.0 && g.width <= g.bound))
            .map(|g| format!("m = {}: width {:e} > bound {:e}", g.m, g.width, g.bound))
            .chain(gap_failures)
            .collect();
        let worst = gaps.iter().map(|g| g.bound - g.width).reduce(f64::min);
        audits.push(AuditRecord::new("gap_bound", gaps.len(), &over, worst));
        let limit: Vec<String> = gaps
            .iter()
            .filter(|g| g.limit_defect.is_none_or(|d| d > g.limit_tol))
            .map(|g| format!("m = {}: one-sided limits off by {:?}", g.m, g.limit_defect))
            .collect();
        audits.push(AuditRecord::new("gap_limits", gaps.len(), &limit, None));
        audits.push(self.symmetry_audit(&samples));
        let (mono, variants) = self.monotonicity_audit(&samples);
        audits.push(mono);
        audits.extend(variants);
        let decay: Vec<String> = samples
            .iter()
            .filter(|s| !s.decay.practical_ok)
            .map(|s| format!("k = {}: rate {:?}", s.k, s.decay.fitted_rate))
            .collect();
        audits.push(AuditRecord::new("decay", samples.len(), &decay, None));
        let incr: Vec<String> = samples
            .iter()
            .filter(|s| !s.increments_ok)
            .map(|s| format!("k = {}: increments {:?}", s.k, s.increments))
            .collect();
        audits.push(AuditRecord::new("scale_increments", samples.len(), &incr, None));
        let e0 = self.e_zero().ok();
        if let Some(g) = gaps.first().filter(|g| g.width > 0.0) {
            let a = self.gap_resolvent_audit(
                0.5 * (g.e_minus + g.e_plus),
                &self.gap_probes(g.m, 6),
                g.width / 4.0,
            );
            audits.push(a.record("gap_resolvent"));
        }
        if let Some(e0) = e0 {
            let delta = 0.25;
            let probes = self.gap_probes(0, 6);
            audits.push(
                self.gap_resolvent_audit(e0 - 2.0 * delta, &probes, delta)
                    .record("below_spectrum_resolvent"),
            );
        }
        let kzero_variants = samples
            .iter()
            .find(|s| s.k > 0.0)
            .map(|s| KZeroVariants::new(self.schedule.eps0(), s.k, self.first_resonance()));
        BandReport {
            k_samples: samples,
            failures,
            gaps,
            e0,
            audits,
            kzero_variants,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub k: f64,
    pub spectral_distance: f64,
    pub max_entry: f64,
    pub decay_checked: usize,
    pub decay_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResolventAudit {
    pub e: f64,
    pub delta: f64,
    /// Distance beyond which the exponential bound is checked.
    pub far_distance: f64,
    pub probes: Vec<ProbeResult>,
    pub passed: bool,
}

impl GapResolventAudit {
    pub fn record(&self, name: &str) -> AuditRecord {
        let failures: Vec<String> = self
            .probes
            .iter()
            .filter(|p| !(p.max_entry <= 1.0 / self.delta) || p.decay_violations > 0)
            .map(|p| {
                format!(
                    "k = {}: max entry {:e}, {} decay violations, spectrum at distance {:e}",
                    p.k, p.max_entry, p.decay_violations, p.spectral_distance
                )
            })
            .collect();
        let worst = self
            .probes
            .iter()
            .map(|p| 1.0 / self.delta - p.max_entry)
            .filter(|m| m.is_finite())
            .reduce(f64::min);
        let far: usize = self.probes.iter().map(|p| p.decay_checked).sum();
        let mut rec = AuditRecord::new(name, self.probes.len(), &failures, worst);
        rec.passed = self.passed;
        if rec.detail.is_empty() {
            rec.detail = format!("{far} entry pairs beyond distance {:.3}", self.far_distance);
        }
        rec
    }
}
