//! Scale schedule `R⁽ᵘ⁾, δ₀⁽ᵘ⁾`, the ε-budget, resonance intervals around
//! `k_m = −ξ(m)/2`, and per-`k` resonance profiles with reflection sets.
//!
//! Scales grow double-exponentially, so everything is stored as logarithms;
//! linear values are derived on demand and may underflow.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule infeasible: {requested} scales requested, largest feasible is {largest_feasible}")]
    ScheduleInfeasible {
        requested: usize,
        largest_feasible: usize,
    },
    #[error("ε budget exhausted at scale {scale} (ε_s/ε₀ = {ratio})")]
    BudgetExhausted { scale: usize, ratio: f64 },
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Strict,
    Practical,
}

/// Constants in `σ(m) = c·(δ₀⁽ˢ⁻¹⁾)^p` and in the inflation
/// `k±_{m,s} = k±_m ± c'·Σ (δ₀⁽ʳ⁾)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRule {
    pub sigma_const: f64,
    pub sigma_exp: f64,
    pub inflate_const: f64,
}

impl WindowRule {
    pub const STRICT: Self = Self {
        sigma_const: 32.0,
        sigma_exp: 1.0 / 6.0,
        inflate_const: 64.0,
    };
    pub const PRACTICAL: Self = Self {
        sigma_const: 1.0,
        sigma_exp: 0.75,
        inflate_const: 2.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    /// `β` in practical mode; ignored in strict mode where `β₁ = 1/(32b₀)`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// `log R⁽¹⁾`; strict mode defaults to its admissible minimum.
    #[serde(default)]
    pub log_r1: Option<f64>,
    pub s_max: usize,
    pub a0: f64,
    pub b0: f64,
    pub kappa0: f64,
    #[serde(default = "one")]
    pub alpha0: f64,
    pub nu: usize,
    /// `ε₀` in practical mode; strict mode computes it.
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub window: Option<WindowRule>,
}

fn one() -> f64 {
    1.0
}

impl ScheduleConfig {
    pub fn practical(beta: f64, log_r1: f64, s_max: usize) -> Self {
        Self {
            mode: ScheduleMode::Practical,
            beta: Some(beta),
            log_r1: Some(log_r1),
            s_max,
            a0: 0.1,
            b0: 2.0,
            kappa0: 1.0,
            alpha0: 1.0,
            nu: 1,
            epsilon0: None,
            window: None,
        }
    }

    pub fn strict(a0: f64, b0: f64, kappa0: f64, alpha0: f64, nu: usize, s_max: usize) -> Self {
        Self {
            mode: ScheduleMode::Strict,
            beta: None,
            log_r1: None,
            s_max,
            a0,
            b0,
            kappa0,
            alpha0,
            nu,
            epsilon0: None,
            window: None,
        }
    }
}

/// Strict-mode side conditions, all in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictChecks {
    pub beta1: f64,
    pub log_r1_min: f64,
    /// `log δ₀⁻¹` and the bound `D(κ₀, α₀, a₀, b₀)` it must exceed.
    pub log_inv_delta0: f64,
    pub d_bound: f64,
    pub delta_condition: bool,
    /// Scales whose `δ₀⁽ˢ⁻¹⁾` and `R⁽ˢ⁾` are representable as normal f64.
    pub linear_feasible_s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub mode: ScheduleMode,
    pub beta: f64,
    pub s_max: usize,
    /// `log R⁽ᵘ⁾` for `u = 1..=s_max` (index `u − 1`); `R⁽⁰⁾ = 0`.
    pub log_r: Vec<f64>,
    /// `log δ₀⁽ᵘ⁾` for `u = 0..=s_max`.
    pub log_delta: Vec<f64>,
    /// `log δ₀` where `δ₀⁴ = δ₀⁽⁰⁾`.
    pub log_delta_base: f64,
    pub log_eps0: f64,
    /// `ε_s/ε₀` for `s = 0..=s_max`.
    pub eps_ratio: Vec<f64>,
    pub window: WindowRule,
    pub a0: f64,
    pub b0: f64,
    pub strict: Option<StrictChecks>,
}

/// Whether `exp(x)` is a positive normal double.
fn normal_exp(x: f64) -> bool {
    x.is_finite() && x >= f64::MIN_POSITIVE.ln() && x <= f64::MAX.ln()
}

/// `log ε₀(δ₀, κ₀, α₀)` for the strict-mode coupling bound.
pub fn strict_log_eps0(log_delta0: f64, kappa0: f64, alpha0: f64, nu: usize) -> f64 {
    let na = nu as f64 / alpha0;
    let t1 = (-24.0 * na - 4.0) * LN_2 + 4.0 * na * kappa0.ln();
    let t2 = 512.0 * log_delta0;
    let t3 = -10.0 * (na + 1.0) * LN_2 - 8.0 * na * (4.0 * kappa0 * (-log_delta0)).ln();
    3.0 * t1.min(t2).min(t3)
}

/// `ε_s = ε₀ − Σ_{1≤s'≤s} δ₀⁽ˢ'⁾` for `s = 1..=deltas.len()`.
pub fn epsilon_budget_values(eps0: f64, deltas: &[f64]) -> Vec<f64> {
    let mut acc = eps0;
    deltas
        .iter()
        .map(|d| {
            acc -= d;
            acc
        })
        .collect()
}

impl ScaleSchedule {
    pub fn build(cfg: &ScheduleConfig) -> Result<Self, ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::InvalidParameter(m.into()));
        if cfg.s_max == 0 {
            return bad("s_max must be at least 1");
        }
        if !(cfg.kappa0 > 0.0 && cfg.kappa0 <= 1.0) || !(cfg.alpha0 > 0.0 && cfg.alpha0 <= 1.0) {
            return bad("κ₀ and α₀ must lie in (0, 1]");
        }
        let (beta, log_r1, strict_min) = match cfg.mode {
            ScheduleMode::Practical => {
                let beta = match cfg.beta {
                    Some(b) if b > 0.0 && b < 1.0 => b,
                    _ => return bad("practical mode needs β in (0, 1)"),
                };
                let l = match cfg.log_r1 {
                    Some(l) if l > 1.0 => l,
                    _ => return bad("practical mode needs R₁ > e"),
                };
                (beta, l, None)
            }
            ScheduleMode::Strict => {
                if !(cfg.a0 > 0.0 && cfg.a0 < 1.0) || cfg.b0 <= cfg.nu as f64 {
                    return bad("strict mode needs 0 < a₀ < 1 and b₀ > ν");
                }
                let beta1 = 1.0 / (32.0 * cfg.b0);
                let min = (100.0 / cfg.a0)
                    .ln()
                    .max(2f64.powi(34) / beta1 * (1.0 / cfg.kappa0).ln())
                    / cfg.alpha0;
                let l = cfg.log_r1.unwrap_or(min);
                if l < min {
                    return bad("strict mode needs log R₁ above its admissible minimum");
                }
                (beta1, l, Some(min))
            }
        };

        let s_max = cfg.s_max;
        let mut log_r = Vec::with_capacity(s_max);
        let mut log_delta = Vec::with_capacity(s_max + 1);
        log_delta.push(-log_r1 / beta);
        log_r.push(log_r1);
        for u in 1..=s_max {
            log_delta.push(-log_r[u - 1] * log_r[u - 1]);
            if u < s_max {
                log_r.push(beta * log_r[u - 1] * log_r[u - 1]);
            }
        }

        // Scale s needs δ₀⁽ˢ⁻¹⁾ and R⁽ˢ⁾ in double range.
        let linear_feasible = (1..=s_max)
            .take_while(|&s| normal_exp(log_delta[s - 1]) && normal_exp(log_r[s - 1]))
            .count();
        let log_delta_base = log_delta[0] / 4.0;

        let (log_eps0, strict) = match cfg.mode {
            ScheduleMode::Practical => {
                if linear_feasible < s_max {
                    return Err(ScheduleError::ScheduleInfeasible {
                        requested: s_max,
                        largest_feasible: linear_feasible,
                    });
                }
                let eps0 = cfg.epsilon0.unwrap_or(1.0);
                if eps0 <= 0.0 {
                    return bad("ε₀ must be positive");
                }
                (eps0.ln(), None)
            }
            ScheduleMode::Strict => {
                if log_delta.iter().chain(&log_r).any(|x| !x.is_finite()) {
                    let ok = (1..=s_max)
                        .take_while(|&s| log_delta[s - 1].is_finite() && log_r[s - 1].is_finite())
                        .count();
                    return Err(ScheduleError::ScheduleInfeasible {
                        requested: s_max,
                        largest_feasible: ok,
                    });
                }
                let d_bound =
                    2f64.powi(32) / cfg.alpha0 / beta * (1.0 / cfg.kappa0).ln();
                let checks = StrictChecks {
                    beta1: beta,
                    log_r1_min: strict_min.unwrap_or(log_r1),
                    log_inv_delta0: -log_delta_base,
                    d_bound,
                    delta_condition: -log_delta_base > d_bound,
                    linear_feasible_s: linear_feasible,
                };
                (
                    strict_log_eps0(log_delta_base, cfg.kappa0, cfg.alpha0, cfg.nu),
                    Some(checks),
                )
            }
        };

        let mut eps_ratio = vec![1.0];
        let mut acc = 1.0;
        for ld in &log_delta[1..=s_max] {
            acc -= (ld - log_eps0).exp();
            eps_ratio.push(acc);
        }

        let window = cfg.window.unwrap_or(match cfg.mode {
            ScheduleMode::Strict => WindowRule::STRICT,
            ScheduleMode::Practical => WindowRule::PRACTICAL,
        });

        Ok(Self {
            mode: cfg.mode,
            beta,
            s_max,
            log_r,
            log_delta,
            log_delta_base,
            log_eps0,
            eps_ratio,
            window,
            a0: cfg.a0,
            b0: cfg.b0,
            strict,
        })
    }

    /// `log R⁽ᵘ⁾`, with `R⁽⁰⁾ = 0`.
    pub fn log_r(&self, u: usize) -> f64 {
        if u == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_r[u - 1]
        }
    }

    pub fn r(&self, u: usize) -> f64 {
        self.log_r(u).exp()
    }

    pub fn log_delta(&self, u: usize) -> f64 {
        self.log_delta[u]
    }

    /// `δ₀⁽ᵘ⁾`.
    pub fn delta(&self, u: usize) -> f64 {
        self.log_delta[u].exp()
    }

    /// Base `δ₀ = (δ₀⁽⁰⁾)^{1/4}`.
    pub fn delta_base(&self) -> f64 {
        self.log_delta_base.exp()
    }

    pub fn eps0(&self) -> f64 {
        self.log_eps0.exp()
    }

    /// `s` with `12R⁽ˢ⁻¹⁾ < |m| ≤ 12R⁽ˢ⁾`, or `None` past the last scale.
    pub fn shell_of(&self, norm: f64) -> Option<usize> {
        (1..=self.s_max).find(|&s| norm <= 12.0 * self.r(s) && norm > 12.0 * self.r(s - 1))
    }

    /// `σ(m)` for a point of the given norm; `σ(0)` uses `δ₀⁽⁰⁾`.
    pub fn sigma(&self, norm: f64) -> Option<f64> {
        let s = if norm == 0.0 { 1 } else { self.shell_of(norm)? };
        let w = self.window;
        Some(w.sigma_const * (w.sigma_exp * self.log_delta(s - 1)).exp())
    }

    /// Half-width of `ℐ_m`: `(δ₀⁽ˢ⁾)^{3/4}` for `m` in shell `s`.
    pub fn analysis_halfwidth(&self, norm: f64) -> Option<f64> {
        self.shell_of(norm)
            .map(|s| (0.75 * self.log_delta(s)).exp())
    }

    /// Half-width of `𝔍_m`: `a₀(1 + |m|)^{−b₀−3}`.
    pub fn theorem_halfwidth(&self, norm: f64) -> f64 {
        self.a0 * (1.0 + norm).powf(-self.b0 - 3.0)
    }

    /// `ε_s` from the stored ratios, failing if some `ε_s ≤ 0`.
    pub fn epsilon_budget(&self) -> Result<Vec<f64>, ScheduleError> {
        let eps0 = self.eps0();
        for (s, &r) in self.eps_ratio.iter().enumerate() {
            if r <= 0.0 {
                return Err(ScheduleError::BudgetExhausted { scale: s, ratio: r });
            }
        }
        Ok(self.eps_ratio.iter().map(|r| r * eps0).collect())
    }

    /// Largest relative defect of `log R⁽ᵘ⁾ = β (log R⁽ᵘ⁻¹⁾)²` and
    /// `log δ₀⁽ᵘ⁾ = −(log R⁽ᵘ⁾)²`.
    pub fn recurrence_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for u in 2..=self.s_max {
            let want = self.beta * self.log_r(u - 1).powi(2);
            worst = worst.max((self.log_r(u) - want).abs() / want.abs());
        }
        for u in 1..=self.s_max {
            let want = -self.log_r(u).powi(2);
            worst = worst.max((self.log_delta(u) - want).abs() / want.abs());
        }
        worst
    }

    /// `(k⁻_{m,s}, k⁺_{m,s})`, or `None` when `m` lies beyond the last shell.
    pub fn kpm(&self, lat: &Lattice, label: i64, s: usize) -> Option<(f64, f64)> {
        let norm = f64::from(lat.norm_of_label(label));
        let sigma = self.sigma(norm)?;
        let km = -lat.xi_f64(label) / 2.0;
        let mut pad = 0.0;
        for r in 0..s {
            let root = (0.5 * self.log_delta(r)).exp();
            if root <= sigma {
                pad += root;
            }
        }
        pad *= self.window.inflate_const;
        Some((km - sigma - pad, km + sigma + pad))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpmInterval {
    pub label: i64,
    pub norm: u32,
    pub shell: usize,
    pub k_m: f64,
    /// `(k⁻_{m,s}, k⁺_{m,s})` for `s = 0..=s_max`.
    pub levels: Vec<(f64, f64)>,
}

/// Intervals for every `m` with `0 < |m| ≤ truncation_r`, grouped by shell.
pub fn kpm_intervals(schedule: &ScaleSchedule, lat: &Lattice, truncation_r: f64) -> Vec<KpmInterval> {
    lat.ball_labels(truncation_r)
        .into_iter()
        .filter(|&l| l != 0)
        .filter_map(|label| {
            let norm = lat.norm_of_label(label);
            let shell = schedule.shell_of(f64::from(norm))?;
            let levels = (0..=schedule.s_max)
                .map(|s| schedule.kpm(lat, label, s))
                .collect::<Option<Vec<_>>>()?;
            Some(KpmInterval {
                label,
                norm,
                shell,
                k_m: -lat.xi_f64(label) / 2.0,
                levels,
            })
        })
        .collect()
}

/// Resonances of `k` for one family of intervals.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResonanceFamily {
    /// `n⁽ℓ⁾(k)`, ordered by `(norm, label)`.
    pub points: Vec<i64>,
    pub norms: Vec<u32>,
    /// `s⁽ℓ⁾(k)`; `None` past the last shell of the schedule.
    pub s_levels: Vec<Option<usize>>,
    /// `𝔪⁽ℓ⁾(k)`, each sorted.
    pub reflection_sets: Vec<Vec<i64>>,
    /// `|n⁽ℓ⁾| < |n⁽ℓ⁺¹⁾|` holds throughout.
    pub strictly_ordered: bool,
}

impl ResonanceFamily {
    fn build(mut members: Vec<(u32, i64)>, schedule: &ScaleSchedule) -> Self {
        members.sort_unstable();
        let strictly_ordered = members.windows(2).all(|w| w[0].0 < w[1].0);
        let mut sets: Vec<Vec<i64>> = Vec::new();
        for (i, &(_, n)) in members.iter().enumerate() {
            let next: BTreeSet<i64> = if i == 0 {
                [0, n].into_iter().collect()
            } else {
                let prev = &sets[i - 1];
                prev.iter().copied().chain(prev.iter().map(|m| n - m)).collect()
            };
            sets.push(next.into_iter().collect());
        }
        Self {
            points: members.iter().map(|p| p.1).collect(),
            norms: members.iter().map(|p| p.0).collect(),
            s_levels: members
                .iter()
                .map(|p| schedule.shell_of(f64::from(p.0)))
                .collect(),
            reflection_sets: sets,
            strictly_ordered,
        }
    }

    /// `ℓ(k)`, zero when there are no resonances.
    pub fn ell(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceProfile {
    pub k: f64,
    pub truncation_r: f64,
    /// Membership in the analysis intervals `ℐ_n`.
    pub analysis: ResonanceFamily,
    /// Membership in the intervals `𝔍_n = (k_n − δ(n), k_n + δ(n))`.
    pub theorem: ResonanceFamily,
    /// Points of norm beyond `12R⁽ˢᵐᵃˣ⁾` that were scanned; their `ℐ` width
    /// is undefined, so they enter only the `𝔍` family.
    pub beyond_schedule: usize,
    /// Always true: the scan is finite, so `ℛ(k)` is finite within it.
    pub in_g_within_truncation: bool,
}

impl ResonanceProfile {
    /// `ℛ(k)` for the theorem family, which drives the reflection sets.
    pub fn r_of_k(&self) -> &[i64] {
        &self.theorem.points
    }
}

/// Scans `0 < |𝔫| ≤ truncation_r` for both interval families.
pub fn resonance_profile(
    k: f64,
    schedule: &ScaleSchedule,
    lat: &Lattice,
    truncation_r: f64,
) -> ResonanceProfile {
    let mut analysis = Vec::new();
    let mut theorem = Vec::new();
    let mut beyond = 0;
    for label in lat.ball_labels(truncation_r) {
        if label == 0 {
            continue;
        }
        let norm = lat.norm_of_label(label);
        let nf = f64::from(norm);
        let dist = (k + lat.xi_f64(label) / 2.0).abs();
        match schedule.analysis_halfwidth(nf) {
            Some(w) if dist < w => analysis.push((norm, label)),
            Some(_) => {}
            None => beyond += 1,
        }
        if dist < schedule.theorem_halfwidth(nf) {
            theorem.push((norm, label));
        }
    }
    ResonanceProfile {
        k,
        truncation_r,
        analysis: ResonanceFamily::build(analysis, schedule),
        theorem: ResonanceFamily::build(theorem, schedule),
        beyond_schedule: beyond,
        in_g_within_truncation: true,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub lower: i64,
    pub upper: i64,
    pub upper_norm: u32,
    pub required: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingAudit {
    pub checked_pairs: usize,
    pub violations: Vec<OrderingViolation>,
}

impl OrderingAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|n⁽ℓ⁺¹⁾| > ½R^{(s⁽ℓ⁾+1)}` for consecutive resonances of a family.
pub fn resonance_gap_ordering_audit(family: &ResonanceFamily, schedule: &ScaleSchedule) -> OrderingAudit {
    let mut violations = Vec::new();
    let mut checked = 0;
    for l in 0..family.points.len().saturating_sub(1) {
        let Some(s) = family.s_levels[l] else { continue };
        checked += 1;
        let required = if s < schedule.s_max {
            0.5 * schedule.r(s + 1)
        } else {
            0.5 * (schedule.beta * schedule.log_r(s).powi(2)).exp()
        };
        if f64::from(family.norms[l + 1]) <= required {
            violations.push(OrderingViolation {
                lower: family.points[l],
                upper: family.points[l + 1],
                upper_norm: family.norms[l + 1],
                required,
            });
        }
    }
    OrderingAudit {
        checked_pairs: checked,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> ScaleSchedule {
        ScaleSchedule::build(&ScheduleConfig::practical(0.5, 2.5, 3)).unwrap()
    }

    #[test]
    fn practical_example_values() {
        let s = ScaleSchedule::build(&ScheduleConfig::practical(0.5, 4.0, 3)).unwrap();
        assert_eq!(s.log_delta(1), -16.0);
        assert_eq!(s.log_r(2), 8.0);
        assert_eq!(s.log_delta(2), -64.0);
        assert_eq!(s.log_r(3), 32.0);
        assert!(s.recurrence_defect() < 1e-12);
    }

    #[test]
    fn practical_infeasible_past_three() {
        let e = ScaleSchedule::build(&ScheduleConfig::practical(0.5, 4.0, 5)).unwrap_err();
        assert_eq!(
            e,
            ScheduleError::ScheduleInfeasible {
                requested: 5,
                largest_feasible: 3
            }
        );
    }

    #[test]
    fn strict_beta_and_budget() {
        let s = ScaleSchedule::build(&ScheduleConfig::strict(0.5, 2.0, 0.5, 1.0, 1, 3)).unwrap();
        let c = s.strict.as_ref().unwrap();
        assert_eq!(c.beta1, 1.0 / 64.0);
        assert!(c.delta_condition);
        // Oracle: ε_s/ε₀ from the closed-form logs, summed directly.
        let log_eps0 = strict_log_eps0(s.log_delta_base, 0.5, 1.0, 1);
        let mut sum = 0.0;
        for u in 1..=3 {
            let log_r = s.log_r(u);
            sum += (-(log_r * log_r) - log_eps0).exp();
        }
        assert!((s.eps_ratio[3] - (1.0 - sum)).abs() < 1e-15);
        assert!(s.eps_ratio.iter().all(|&r| r > 0.5));
        assert!(s.epsilon_budget().is_ok());
    }

    #[test]
    fn strict_budget_exhausts_without_decay_margin() {
        // κ₀ = 1 leaves log R₁ small, and δ₀⁽¹⁾ then dwarfs ε₀.
        let s = ScaleSchedule::build(&ScheduleConfig::strict(0.5, 2.0, 1.0, 1.0, 1, 2)).unwrap();
        assert!(matches!(
            s.epsilon_budget(),
            Err(ScheduleError::BudgetExhausted { scale: 1, .. })
        ));
    }

    #[test]
    fn budget_values() {
        assert_eq!(epsilon_budget_values(1.0, &[0.0, 0.0]), vec![1.0, 1.0]);
        let v = epsilon_budget_values(1.0, &[0.1, 0.01]);
        assert!((v[0] - 0.9).abs() < 1e-15 && (v[1] - 0.89).abs() < 1e-15);
    }

    #[test]
    fn reference_schedule_numbers() {
        let s = reference();
        assert!((s.r(1) - 12.18).abs() < 0.01);
        assert!((s.r(2) - 22.76).abs() < 0.01);
        assert!((s.r(3) - 132.0).abs() < 1.0);
        assert_eq!(s.log_delta(0), -5.0);
        assert_eq!(s.log_delta(1), -6.25);
        let sig = s.sigma(13.0 * 12.0 / 13.0).unwrap();
        assert!((sig - (-3.75f64).exp()).abs() < 1e-15);
        let w = s.analysis_halfwidth(5.0).unwrap();
        assert!((w - (-4.6875f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kpm_mirror_and_monotone() {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let s = reference();
        let ivs = kpm_intervals(&s, &lat, 60.0);
        assert!(!ivs.is_empty());
        for iv in &ivs {
            let mirror = s.kpm(&lat, -iv.label, 0).unwrap();
            let (lo, hi) = iv.levels[0];
            assert_eq!(mirror, (-hi, -lo));
            for w in iv.levels.windows(2) {
                assert!(w[1].0 <= w[0].0 && w[1].1 >= w[0].1);
            }
            for (lvl, (lo, hi)) in iv.levels.iter().enumerate() {
                let (mlo, mhi) = s.kpm(&lat, -iv.label, lvl).unwrap();
                assert_eq!((mlo, mhi), (-hi, -lo));
            }
        }
        let strict = ScaleSchedule::build(&ScheduleConfig::strict(0.5, 2.0, 0.5, 1.0, 1, 2)).unwrap();
        let sigma0 = strict.sigma(0.0).unwrap();
        let want = 32f64.ln() + strict.log_delta(0) / 6.0;
        if sigma0 > 0.0 {
            assert!((sigma0.ln() - want).abs() < 1e-9 * want.abs());
        } else {
            assert!(want < f64::MIN_POSITIVE.ln());
        }
    }

    #[test]
    fn profile_examples() {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let s = reference();
        // 0.27 is 0.23 away from the nearest k_n = 1/2.
        let p = resonance_profile(0.27, &s, &lat, 100.0);
        assert!(p.analysis.is_empty() && p.theorem.is_empty());
        assert_eq!(p.theorem.ell(), 0);

        let p = resonance_profile(-1.5, &s, &lat, 100.0);
        assert_eq!(p.analysis.points, vec![3]);
        assert_eq!(p.theorem.points, vec![3]);
        assert_eq!(p.theorem.reflection_sets[0], vec![0, 3]);
    }

    #[test]
    fn two_resonance_reflection_set() {
        // ω = 1/97 gives k_n = −n/194; a0 = 1, b0 = −2.5 widen 𝔍_n to
        // (1+|n|)^{−1/2} so several points resonate at once.
        let lat = Lattice::from_strs(&["1/97"]).unwrap();
        let mut cfg = ScheduleConfig::practical(0.5, 2.5, 3);
        cfg.a0 = 1.0;
        cfg.b0 = -2.5;
        let s = ScaleSchedule::build(&cfg).unwrap();
        // δ(n) = (1+|n|)^{−0.5}: n=1 gives 0.71, n=100 gives 0.0995.
        let k = -100.0 / 194.0 + 0.01;
        let p = resonance_profile(k, &s, &lat, 100.0);
        let pts = &p.theorem.points;
        assert!(pts.len() >= 2);
        let (n0, n1) = (pts[0], pts[1]);
        let mut want: BTreeSet<i64> = [0, n0].into_iter().collect();
        want.insert(n1);
        want.insert(n1 - n0);
        assert_eq!(p.theorem.reflection_sets[1], want.into_iter().collect::<Vec<_>>());
        assert_eq!(p.theorem.reflection_sets[1].len(), 4);
    }

    #[test]
    fn ordering_audit_cases() {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let s = reference();
        let p = resonance_profile(-1.5, &s, &lat, 100.0);
        assert!(resonance_gap_ordering_audit(&p.analysis, &s).passed());

        // Adversarial widths: ω = 1/97 puts k_1 and k_2 within 1/194 of each other.
        let lat = Lattice::from_strs(&["1/97"]).unwrap();
        let mut cfg = ScheduleConfig::practical(0.5, 2.5, 3);
        cfg.a0 = 1.0;
        cfg.b0 = -3.0;
        let wide = ScaleSchedule::build(&cfg).unwrap();
        let p = resonance_profile(-1.5 / 194.0, &wide, &lat, 5.0);
        let audit = resonance_gap_ordering_audit(&p.theorem, &wide);
        assert!(!audit.passed());
        assert_eq!(audit.violations[0].lower.abs(), 1);
    }

    proptest! {
        #[test]
        fn profile_matches_brute_force(k in -3.0f64..3.0) {
            let lat = Lattice::from_strs(&["1"]).unwrap();
            let s = reference();
            let p = resonance_profile(k, &s, &lat, 150.0);
            let mut want = Vec::new();
            for n in -150i64..=150 {
                if n == 0 { continue; }
                let w = s.analysis_halfwidth(n.abs() as f64);
                if let Some(w) = w {
                    if (k + n as f64 / 2.0).abs() < w { want.push(n); }
                }
            }
            let mut got = p.analysis.points.clone();
            got.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn reflection_sets_are_invariant(k in -3.0f64..3.0) {
            let lat = Lattice::from_strs(&["1/97"]).unwrap();
            let mut cfg = ScheduleConfig::practical(0.5, 2.5, 3);
            cfg.a0 = 1.0;
            cfg.b0 = -2.5;
            let s = ScaleSchedule::build(&cfg).unwrap();
            let p = resonance_profile(k, &s, &lat, 60.0);
            for (l, set) in p.theorem.reflection_sets.iter().enumerate() {
                let n = p.theorem.points[l];
                let mut img: Vec<i64> = set.iter().map(|m| n - m).collect();
                img.sort();
                prop_assert_eq!(&img, set);
                prop_assert!(l >= 40 || set.len() <= 1usize << (l + 1));
            }
        }
    }
}
