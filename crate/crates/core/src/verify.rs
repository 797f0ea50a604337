//! Property and oracle suites behind `verify`, each returning per-check
//! outcomes with margins.

use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::BandSetup;
use crate::cli::{compute, LoadedConfig};
use crate::domains::{build_level_sets, build_level_sets_with, symmetrize_s, symmetrize_t, DomainError};
use crate::eigensolve::{cff_branch_solve, cff_build, func, quadratic_dichotomy, BranchHypotheses, CffNode, Dichotomy};
use crate::linalg::hermitian_eigenvalues;
use crate::oracle::bloch_residual;
use crate::schur::{dense_resolvent, random_hermitian, schur_block_inverse, verify_weight_lemma, WeightProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Weights,
    Schur,
    Dichotomy,
    Cff,
    Domains,
    Band,
    Floquet,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::Weights,
        Suite::Schur,
        Suite::Dichotomy,
        Suite::Cff,
        Suite::Domains,
        Suite::Band,
        Suite::Floquet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Weights => "weights",
            Suite::Schur => "schur",
            Suite::Dichotomy => "dichotomy",
            Suite::Cff => "cff",
            Suite::Domains => "domains",
            Suite::Band => "band",
            Suite::Floquet => "floquet",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::EACH
            .iter()
            .chain(&[Suite::All])
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Slack against the tolerance; negative on failure.
    pub margin: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, margin: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            margin,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.name().into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run_verify(loaded: &LoadedConfig, suite: Suite) -> Vec<SuiteReport> {
    if suite == Suite::All {
        return Suite::EACH.iter().map(|&s| run_one(loaded, s)).collect();
    }
    vec![run_one(loaded, suite)]
}

fn run_one(loaded: &LoadedConfig, suite: Suite) -> SuiteReport {
    let seed = loaded.config.seed;
    let setup = || loaded.config.setup().expect("validated config");
    let checks = match suite {
        Suite::Weights => weights(&setup(), seed, 20),
        Suite::Schur => schur(seed, 100),
        Suite::Dichotomy => dichotomy(seed, 100_000),
        Suite::Cff => cff(),
        Suite::Domains => domains(&setup()),
        Suite::Band => band(loaded),
        Suite::Floquet => floquet(loaded),
        Suite::All => unreachable!(),
    };
    SuiteReport::new(suite, checks)
}

/// Exhaustive trajectory audits on six-point domains with random `D`.
pub fn weights(setup: &BandSetup, seed: u64, profiles: usize) -> Vec<Check> {
    let lat = &setup.lattice;
    let pool = lat.ball_labels(5.0);
    (0..profiles)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut dom = BTreeSet::new();
            while dom.len() < 6.min(pool.len()) {
                dom.insert(pool[rng.random_range(0..pool.len())]);
            }
            let dom: Vec<i64> = dom.into_iter().collect();
            let mut prof = WeightProfile::uniform(&dom, 0.0, 8.0, setup.kappa0, setup.alpha0);
            for &x in &dom {
                prof.d.insert(x, rng.random_range(0.0..3.0));
            }
            let rep = verify_weight_lemma(lat, &dom, &prof, 5, 1e-6);
            Check::new(
                format!("profile {i}"),
                rep.passed(),
                Some(-rep.worst_log_margin),
                format!(
                    "{} trajectories, {} corollary, {} length sums, {} weight sums",
                    rep.trajectories, rep.corollary_checked, rep.sum_checked, rep.weight_sum_checked
                ),
            )
        })
        .collect()
}

/// Block inversion against the dense inverse on random Hermitian matrices.
pub fn schur(seed: u64, count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(usize, u64, Vec<usize>, f64)> = (0..count)
        .map(|_| {
            let n = rng.random_range(2..=64);
            let s = rng.random();
            let mut split: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            if split.is_empty() || split.len() == n {
                split = vec![0];
            }
            (n, s, split, rng.random_range(-3.0..3.0))
        })
        .collect();
    let tol = 1e-9;
    cases
        .into_par_iter()
        .enumerate()
        .map(|(i, (n, s, split, e0))| {
            let h = random_hermitian(n, s);
            let spec = hermitian_eigenvalues(&h);
            let dist = |e: f64| spec.iter().fold(f64::INFINITY, |m, v| m.min((v - e).abs()));
            // Nudge E off the spectrum.
            let mut e = e0;
            while dist(e) < 1e-2 {
                e += 5e-3;
            }
            let name = format!("matrix {i} (n = {n}, split {})", split.len());
            let (Ok(a), Ok(b)) = (schur_block_inverse(&h, &split, e), dense_resolvent(&h, e)) else {
                return Check::new(name, false, None, "inversion failed");
            };
            let scale = b.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let err = (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm())) / scale;
            Check::new(name, err <= tol, Some(tol - err), format!("relative error {err:e}"))
        })
        .collect()
}

/// Random admissible tuples: exactly one case and the bracket every time.
pub fn dichotomy(seed: u64, count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = [0usize; 2];
    let mut failures = Vec::new();
    let mut tried = 0;
    while tried < count {
        let a2: f64 = rng.random_range(-5.0..5.0);
        let d: f64 = rng.random_range(0.01..3.0);
        let b: f64 = rng.random_range(-1.0..1.0) * d;
        let u: f64 = rng.random_range(a2 - 2.0 * d..a2 + 3.0 * d);
        let q = (u - a2 - d) * (u - a2) - b * b;
        if q.abs() >= 0.99 * d * d / 4.0 {
            continue;
        }
        tried += 1;
        match quadratic_dichotomy(a2 + d, a2, b, u) {
            Ok(c) => seen[(c.case == Dichotomy::Minus) as usize] += 1,
            Err(e) => failures.push(format!("({}, {a2}, {b}, {u}): {e}", a2 + d)),
        }
    }
    vec![Check::new(
        format!("{count} tuples"),
        failures.is_empty(),
        None,
        if failures.is_empty() {
            format!("{} plus, {} minus", seen[0], seen[1])
        } else {
            failures.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    )]
}

/// Branch solving on level-one symmetric models with known roots
/// `g ± sqrt(θ² + (xθ)²)`.
pub fn cff() -> Vec<Check> {
    let params = [(0.3, 0.1), (0.0, 0.05), (1.0, 0.2), (-0.5, 0.01)];
    params
        .iter()
        .map(|&(g, theta)| {
            let name = format!("g = {g}, θ = {theta}");
            let f1 = CffNode::leaf(func(move |_, _| g + theta));
            let f2 = CffNode::leaf(func(move |_, _| g - theta));
            let bsq = func(move |x: f64, _| (x * theta).powi(2));
            let (f, _) = match cff_build(&f1, &f2, bsq, &[(0.0, g), (0.4, g + theta / 2.0)]) {
                Ok(p) => p,
                Err(e) => return Check::new(name, false, None, e.to_string()),
            };
            let root = move |x: f64| (theta * theta + (x * theta).powi(2)).sqrt();
            let hyp = BranchHypotheses {
                g_minus: Arc::new(move |x| g - root(x)),
                g_plus: Arc::new(move |x| g + root(x)),
                rho: 0.5,
            };
            let xs: Vec<f64> = (0..21).map(|i| -0.5 + 0.05 * i as f64).collect();
            let w = 5.0 * theta;
            match cff_branch_solve(&f, &xs, &|_| (g - w, g + w), Some(&hyp)) {
                Ok(sol) => {
                    let err = sol
                        .points
                        .iter()
                        .map(|p| (p.zeta_minus - g + root(p.x)).abs().max((p.zeta_plus - g - root(p.x)).abs()))
                        .fold(0.0, f64::max);
                    let tol = 1e-10;
                    Check::new(name, err <= tol, Some(tol - err), format!("root error {err:e}"))
                }
                Err(e) => Check::new(name, false, None, e.to_string()),
            }
        })
        .collect()
}

/// Level sets, nesting and both symmetrizations over a grid of `k`.
pub fn domains(setup: &BandSetup) -> Vec<Check> {
    let lat = &setup.lattice;
    let sch = &setup.schedule;
    let scale = setup.spec.diagonal_scale();
    let s_top = sch.s_max.min(2);
    let mut checks = Vec::new();
    for s in 1..=s_top {
        let ks: Vec<f64> = (0..=40).map(|i| -0.5 + i as f64 / 40.0).collect();
        let outcomes: Vec<(usize, usize, Vec<String>)> = ks
            .par_iter()
            .map(|&k| {
                let mut built = 0;
                let mut sym = 0;
                let mut fail = Vec::new();
                match build_level_sets(k, s, sch, lat, scale) {
                    Ok(ls) => {
                        built += 1;
                        if !ls.nesting_audit().passed() {
                            fail.push(format!("k = {k}: nesting"));
                        }
                        match symmetrize_s(&ls, sch, lat) {
                            Ok(d) => {
                                sym += 1;
                                if !d.is_invariant(|m| -m) {
                                    fail.push(format!("k = {k}: 𝒮-invariance"));
                                }
                            }
                            Err(DomainError::NotSmallK { .. }) => {}
                            Err(e) => fail.push(format!("k = {k}: {e}")),
                        }
                    }
                    Err(DomainError::ExcludedK { .. }) => {}
                    Err(e) => fail.push(format!("k = {k}: {e}")),
                }
                (built, sym, fail)
            })
            .collect();
        let built: usize = outcomes.iter().map(|o| o.0).sum();
        let sym: usize = outcomes.iter().map(|o| o.1).sum();
        let fail: Vec<String> = outcomes.into_iter().flat_map(|o| o.2).collect();
        checks.push(Check::new(
            format!("scale {s} non-resonant"),
            fail.is_empty() && built > 0,
            None,
            if fail.is_empty() {
                format!("{built} level-set builds, {sym} 𝒮-symmetrized")
            } else {
                fail.join("; ")
            },
        ));
        let partners: Vec<i64> = lat
            .ball_labels(3.0)
            .into_iter()
            .filter(|&n| n != 0)
            .collect();
        let mut fail = Vec::new();
        let mut done = 0;
        for n0 in partners {
            let k = -lat.xi_f64(n0) / 2.0 + 1e-4;
            let res = build_level_sets_with(k, s, sch, lat, scale, Some(n0))
                .and_then(|ls| Ok((ls.nesting_audit().passed(), symmetrize_t(&ls, n0, sch, lat)?)));
            match res {
                Ok((nest, d)) => {
                    done += 1;
                    if !nest || !d.is_invariant(|m| n0 - m) {
                        fail.push(format!("n₀ = {n0}: nesting {nest}"));
                    }
                }
                Err(DomainError::ExcludedK { .. }) | Err(DomainError::NotResonant { .. }) => {}
                Err(e) => fail.push(format!("n₀ = {n0}: {e}")),
            }
        }
        checks.push(Check::new(
            format!("scale {s} pair-resonant"),
            fail.is_empty() && done > 0,
            None,
            if fail.is_empty() {
                format!("{done} T-symmetrized")
            } else {
                fail.join("; ")
            },
        ));
    }
    checks
}

/// The band run on the config, one check per audit.
pub fn band(loaded: &LoadedConfig) -> Vec<Check> {
    let report = match compute(loaded) {
        Ok(r) => r,
        Err(e) => return vec![Check::new("config", false, None, e.to_string())],
    };
    let mut checks: Vec<Check> = report
        .band
        .audits
        .iter()
        .map(|a| Check::new(a.name.clone(), a.passed, a.worst_margin, format!("{} checked {}", a.checked, a.detail)))
        .collect();
    checks.push(Check::new(
        "samples",
        report.band.failures.is_empty(),
        None,
        format!("{} solved, {} failed", report.band.k_samples.len(), report.band.failures.len()),
    ));
    checks
}

/// Gap widths against the Floquet discriminant, and the Bloch residual of
/// every computed eigenvector over one period.
pub fn floquet(loaded: &LoadedConfig) -> Vec<Check> {
    let cfg = &loaded.config;
    let setup = cfg.setup().expect("validated config");
    if setup.spec.normalized {
        return vec![Check::new("floquet", true, None, "not applicable in normalized mode")];
    }
    let mut checks = Vec::new();
    let tol = 1e-5;
    for &m in &cfg.gaps {
        let c = match setup.gap_edges(m) {
            Ok(g) => {
                let fw = g.floquet_width.unwrap_or(0.0);
                let err = (fw - g.width).abs();
                Check::new(
                    format!("gap {m}"),
                    err <= tol,
                    Some(tol - err),
                    format!("width {:e}, Floquet {fw:e}", g.width),
                )
            }
            Err(e) => Check::new(format!("gap {m}"), false, None, e.to_string()),
        };
        checks.push(c);
    }
    let (samples, _) = setup.band_curve(&cfg.ks(&setup));
    let worst = samples
        .par_iter()
        .map(|s| {
            let phi = s.phi.as_ref().expect("eigenvector kept");
            bloch_residual(&setup.lattice, &setup.folded, setup.spec.epsilon, &s.labels, phi, s.k, s.e, 256)
        })
        .reduce(|| 0.0, f64::max);
    let tol = 1e-6;
    checks.push(Check::new(
        "bloch residual",
        worst <= tol && !samples.is_empty(),
        Some(tol - worst),
        format!("{} eigenvectors, worst {worst:e}", samples.len()),
    ));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.iter().chain(&[Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_schur_and_dichotomy_pass() {
        assert!(schur(3, 10).iter().all(|c| c.passed));
        assert!(dichotomy(3, 1000).iter().all(|c| c.passed));
    }

    #[test]
    fn cff_models_pass() {
        for c in cff() {
            assert!(c.passed, "{c:?}");
        }
    }
}
