//! Fourier data of the torus potential `U`, folding onto the quotient
//! lattice, and real-space evaluation of the periodic potential `Ṽ`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;

/// Tolerance for conjugate symmetry and for the imaginary part of `Ṽ(x)`.
pub const REALNESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonzeroMean { value: Complex64 },
    ConjugateSymmetry { n: Vec<i64> },
    Decay { n: Vec<i64>, modulus: f64, bound: f64 },
    Dimension { n: Vec<i64> },
}

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("coefficient validation failed with {} violation(s)", .0.len())]
    ValidationFailed(Vec<Violation>),
    #[error("potential has imaginary residue {residue:.3e} at x = {x}")]
    NonRealValue { x: f64, residue: f64 },
    #[error("invalid generator parameters: {0}")]
    Generator(String),
}

fn linf(n: &[i64]) -> u64 {
    n.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0)
}

fn neg(n: &[i64]) -> Vec<i64> {
    n.iter().map(|v| -v).collect()
}

/// Finitely supported coefficients `c(n)`, `n ∈ ℤ^ν`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub nu: usize,
    pub entries: BTreeMap<Vec<i64>, Complex64>,
    pub kappa0: f64,
    pub alpha0: f64,
    pub support_radius: u64,
}

impl FourierCoefficients {
    pub fn new(nu: usize, kappa0: f64, alpha0: f64) -> Self {
        Self {
            nu,
            entries: BTreeMap::new(),
            kappa0,
            alpha0,
            support_radius: 0,
        }
    }

    /// Inserts `c(n)`; zero values are dropped.
    pub fn insert(&mut self, n: Vec<i64>, value: Complex64) {
        if value == Complex64::new(0.0, 0.0) {
            self.entries.remove(&n);
            return;
        }
        self.support_radius = self.support_radius.max(linf(&n));
        self.entries.insert(n, value);
    }

    /// Inserts `c(n) = value` and `c(−n) = conj(value)`.
    pub fn insert_pair(&mut self, n: Vec<i64>, value: Complex64) {
        let m = neg(&n);
        self.insert(m, value.conj());
        self.insert(n, value);
    }

    pub fn get(&self, n: &[i64]) -> Complex64 {
        self.entries.get(n).copied().unwrap_or_default()
    }

    /// `exp(−κ₀|n|^{α₀})`.
    pub fn decay_bound(&self, n: &[i64]) -> f64 {
        (-self.kappa0 * (linf(n) as f64).powf(self.alpha0)).exp()
    }

    /// Every violation of `c(0)=0`, `c(−n)=conj c(n)` and the decay bound.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (n, &c) in &self.entries {
            if n.len() != self.nu {
                out.push(Violation::Dimension { n: n.clone() });
                continue;
            }
            if n.iter().all(|&v| v == 0) {
                out.push(Violation::NonzeroMean { value: c });
                continue;
            }
            let partner = self.get(&neg(n));
            if (partner - c.conj()).norm() > REALNESS_TOL * (1.0 + c.norm()) {
                out.push(Violation::ConjugateSymmetry { n: n.clone() });
            }
            let bound = self.decay_bound(n);
            if c.norm() > bound * (1.0 + 1e-12) {
                out.push(Violation::Decay {
                    n: n.clone(),
                    modulus: c.norm(),
                    bound,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(PotentialError::ValidationFailed(v))
        }
    }

    /// Worst-case tail `Σ_{|n|>r} exp(−κ₀|n|^{α₀})` discarded by truncating
    /// an infinitely supported potential at `r = support_radius`.
    pub fn truncation_bound(&self) -> f64 {
        let nu = self.nu as i32;
        let mut total = 0.0;
        let mut j = self.support_radius + 1;
        loop {
            let jf = j as f64;
            let shell = (2.0 * jf + 1.0).powi(nu) - (2.0 * jf - 1.0).powi(nu);
            let term = shell * (-self.kappa0 * jf.powf(self.alpha0)).exp();
            total += term;
            if term < 1e-18 * total.max(1e-300) || j > self.support_radius + 1_000_000 {
                break;
            }
            j += 1;
        }
        total
    }

    /// `U(θ) = Σ c(n) e^{2πi n·θ}`, real part.
    pub fn eval_torus(&self, theta: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(n, c)| {
                let p: f64 = n.iter().zip(theta).map(|(a, t)| *a as f64 * t).sum();
                (c * Complex64::from_polar(1.0, TAU * p)).re
            })
            .sum()
    }
}

/// Seeded and deterministic constructors for common potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `c(±n) = amplitude/2`, i.e. `U(θ) = amplitude·cos(2π n·θ)`.
    SingleCosine {
        n: Vec<i64>,
        amplitude: f64,
        kappa0: f64,
        #[serde(default = "one")]
        alpha0: f64,
    },
    /// Sum of cosines `amplitude·cos(2π n·θ + phase)`.
    MultiCosine {
        nu: usize,
        terms: Vec<CosineTerm>,
        kappa0: f64,
        #[serde(default = "one")]
        alpha0: f64,
    },
    /// `c(n) = scale·exp(−κ₀|n|^{α₀})·e^{iφ_n}` with uniform random phases.
    RandomPhase {
        nu: usize,
        kappa0: f64,
        #[serde(default = "one")]
        alpha0: f64,
        seed: u64,
        support_radius: u64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub n: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Generator {
    pub fn build(&self) -> Result<FourierCoefficients, PotentialError> {
        let c = match self {
            Generator::SingleCosine {
                n,
                amplitude,
                kappa0,
                alpha0,
            } => {
                let mut c = FourierCoefficients::new(n.len(), *kappa0, *alpha0);
                if n.iter().all(|&v| v == 0) {
                    return Err(PotentialError::Generator("zero mode".into()));
                }
                c.insert_pair(n.clone(), Complex64::new(amplitude / 2.0, 0.0));
                c
            }
            Generator::MultiCosine {
                nu,
                terms,
                kappa0,
                alpha0,
            } => {
                let mut c = FourierCoefficients::new(*nu, *kappa0, *alpha0);
                for t in terms {
                    if t.n.len() != *nu || t.n.iter().all(|&v| v == 0) {
                        return Err(PotentialError::Generator(format!(
                            "bad mode {:?}",
                            t.n
                        )));
                    }
                    let v = Complex64::from_polar(t.amplitude / 2.0, t.phase);
                    let prev = c.get(&t.n);
                    c.insert_pair(t.n.clone(), prev + v);
                }
                c
            }
            Generator::RandomPhase {
                nu,
                kappa0,
                alpha0,
                seed,
                support_radius,
                scale,
            } => {
                if !(0.0..=1.0).contains(scale) {
                    return Err(PotentialError::Generator("scale must lie in [0,1]".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut c = FourierCoefficients::new(*nu, *kappa0, *alpha0);
                let r = *support_radius as i64;
                for n in box_points(*nu, r) {
                    // One representative per ± pair: first nonzero entry positive.
                    match n.iter().find(|&&v| v != 0) {
                        Some(&f) if f > 0 => {}
                        _ => continue,
                    }
                    let modulus = scale * c.decay_bound(&n);
                    let phase: f64 = rng.random_range(0.0..TAU);
                    c.insert_pair(n, Complex64::from_polar(modulus, phase));
                }
                c.support_radius = *support_radius;
                c
            }
        };
        c.validate()?;
        Ok(c)
    }
}

/// All points of `[−r, r]^ν` in lexicographic order.
pub fn box_points(nu: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(nu)];
    for _ in 0..nu {
        let mut next = Vec::with_capacity(out.len() * (2 * r as usize + 1));
        for p in &out {
            for x in -r..=r {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// `c(𝔫) = Σ_{n ∈ 𝔫} c(n)` indexed by coset label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldedCoefficients {
    pub nu: usize,
    pub kappa0: f64,
    pub alpha0: f64,
    /// `(8/κ₀)^ν`.
    pub bound_constant: f64,
    entries: BTreeMap<i64, Complex64>,
    xi: HashMap<i64, f64>,
    norms: HashMap<i64, u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldedDecayViolation {
    pub label: i64,
    pub norm: u32,
    pub modulus: f64,
    pub bound: f64,
}

impl FoldedCoefficients {
    /// Value at a coset label; zero off the support.
    pub fn get(&self, label: i64) -> Complex64 {
        self.entries.get(&label).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.entries.iter().map(|(&l, &c)| (l, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest coset norm carrying a nonzero coefficient.
    pub fn support_norm(&self) -> u32 {
        self.norms.values().copied().max().unwrap_or(0)
    }

    pub fn norm_of(&self, label: i64) -> Option<u32> {
        self.norms.get(&label).copied()
    }

    /// Mean value `c([0])`, nonzero only when a kernel vector lies in the support.
    pub fn mean(&self) -> Complex64 {
        self.get(0)
    }

    /// Cosets where `|c(𝔫)| > (8/κ₀)^ν exp(−κ₀|𝔫|/4)`.
    pub fn decay_violations(&self) -> Vec<FoldedDecayViolation> {
        self.entries
            .iter()
            .filter_map(|(&label, c)| {
                let norm = self.norms[&label];
                let bound = self.bound_constant * (-self.kappa0 * f64::from(norm) / 4.0).exp();
                (c.norm() > bound).then_some(FoldedDecayViolation {
                    label,
                    norm,
                    modulus: c.norm(),
                    bound,
                })
            })
            .collect()
    }

    /// Largest `|c(𝔫) − conj c(−𝔫)|`.
    pub fn conjugate_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|(&l, c)| (c - self.get(-l).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `Ṽ(x) = Σ_𝔫 c(𝔫) e^{2πi ξ(𝔫) x}`.
    pub fn eval_complex(&self, x: f64) -> Complex64 {
        self.entries
            .iter()
            .map(|(l, c)| {
                let phase = (self.xi[l] * x).rem_euclid(1.0);
                c * Complex64::from_polar(1.0, TAU * phase)
            })
            .sum()
    }

    pub fn eval(&self, x: f64) -> Result<f64, PotentialError> {
        let v = self.eval_complex(x);
        let scale: f64 = 1.0 + self.entries.values().map(|c| c.norm()).sum::<f64>();
        if v.im.abs() > REALNESS_TOL * scale {
            return Err(PotentialError::NonRealValue {
                x,
                residue: v.im.abs(),
            });
        }
        Ok(v.re)
    }

    /// `Ṽ'(x)`, used by step-size control in the ODE oracle.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.entries
            .iter()
            .map(|(l, c)| {
                let xi = self.xi[l];
                let phase = (xi * x).rem_euclid(1.0);
                (c * Complex64::new(0.0, TAU * xi) * Complex64::from_polar(1.0, TAU * phase)).re
            })
            .sum()
    }
}

/// Folds `c` onto the cosets of the null lattice of `lat`.
pub fn fold(c: &FourierCoefficients, lat: &Lattice) -> FoldedCoefficients {
    let mut entries: BTreeMap<i64, Complex64> = BTreeMap::new();
    for (n, v) in &c.entries {
        *entries.entry(lat.label_of(n)).or_default() += v;
    }
    entries.retain(|_, v| *v != Complex64::new(0.0, 0.0));
    let xi = entries.keys().map(|&l| (l, lat.xi_f64(l))).collect();
    let norms = entries.keys().map(|&l| (l, lat.norm_of_label(l))).collect();
    FoldedCoefficients {
        nu: c.nu,
        kappa0: c.kappa0,
        alpha0: c.alpha0,
        bound_constant: (8.0 / c.kappa0).powi(c.nu as i32),
        entries,
        xi,
        norms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use proptest::prelude::*;
    use rand::Rng;

    fn cplx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn exp_decay(nu: usize, r: i64) -> FourierCoefficients {
        let mut c = FourierCoefficients::new(nu, 1.0, 1.0);
        for n in box_points(nu, r) {
            let m = linf(&n);
            if m > 0 {
                c.insert(n, cplx((-(m as f64)).exp(), 0.0));
            }
        }
        c
    }

    #[test]
    fn validate_examples() {
        assert!(exp_decay(1, 5).validate().is_ok());
        assert!(exp_decay(2, 3).validate().is_ok());

        let mut c = exp_decay(1, 5);
        c.insert(vec![0], cplx(0.1, 0.0));
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::NonzeroMean { .. }));

        let mut c = FourierCoefficients::new(1, 0.5, 1.0);
        c.insert(vec![1], cplx(0.5, 0.1));
        c.insert(vec![-1], cplx(0.5, -0.2));
        let v = c.violations();
        assert!(v.contains(&Violation::ConjugateSymmetry { n: vec![1] }));

        let mut c = FourierCoefficients::new(1, 1.0, 1.0);
        c.insert_pair(vec![1], cplx(0.9, 0.0));
        assert!(matches!(
            c.violations()[..],
            [Violation::Decay { .. }, Violation::Decay { .. }]
        ));
    }

    #[test]
    fn fold_rank_zero_is_identity() {
        let lat = Lattice::from_strs(&["3/7"]).unwrap();
        let c = exp_decay(1, 5);
        let f = fold(&c, &lat);
        assert_eq!(f.len(), c.entries.len());
        for (n, v) in &c.entries {
            assert_eq!(f.get(lat.label_of(n)), *v);
        }
    }

    #[test]
    fn fold_two_term_coset() {
        let lat = Lattice::from_strs(&["1/2", "1/2"]).unwrap();
        let mut c = FourierCoefficients::new(2, 1.0, 1.0);
        for n in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            c.insert(n.to_vec(), cplx(0.25, 0.0));
        }
        let f = fold(&c, &lat);
        assert_eq!(f.get(lat.label_of(&[1, 0])), cplx(0.5, 0.0));
        assert_eq!(f.get(lat.label_of(&[-1, 0])), cplx(0.5, 0.0));
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn fold_matches_brute_force() {
        let gen = Generator::RandomPhase {
            nu: 2,
            kappa0: 0.5,
            alpha0: 1.0,
            seed: 11,
            support_radius: 7,
            scale: 1.0,
        };
        let c = gen.build().unwrap();
        for w in [&["2/5", "3/7"][..], &["1/2", "1/2"][..], &["1/3", "1/6"][..]] {
            let lat = Lattice::from_strs(w).unwrap();
            let f = fold(&c, &lat);
            // Oracle: group box points by exact value of n·ω.
            let mut sums: BTreeMap<(i64, i64), Complex64> = BTreeMap::new();
            for n in box_points(2, 7) {
                let x = lat.omega().dot(&n);
                *sums.entry((*x.numer(), *x.denom())).or_default() += c.get(&n);
            }
            for n in box_points(2, 7) {
                let x = lat.omega().dot(&n);
                let want = sums[&(*x.numer(), *x.denom())];
                assert!((f.get(lat.label_of(&n)) - want).norm() < 1e-14);
            }
            assert!(f.conjugate_defect() < 1e-15);
            assert!(f.decay_violations().is_empty());
        }
    }

    #[test]
    fn eval_examples() {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let zero = fold(&FourierCoefficients::new(1, 1.0, 1.0), &lat);
        assert_eq!(zero.eval(0.3).unwrap(), 0.0);

        let mut c = FourierCoefficients::new(1, 0.5, 1.0);
        c.insert_pair(vec![1], cplx(0.5, 0.0));
        let f = fold(&c, &lat);
        for i in 0..50 {
            let x = i as f64 * 0.137 - 3.0;
            assert!((f.eval(x).unwrap() - (TAU * x).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn eval_detects_corruption() {
        let lat = Lattice::from_strs(&["1"]).unwrap();
        let mut c = FourierCoefficients::new(1, 0.5, 1.0);
        c.insert(vec![1], cplx(0.3, 0.0));
        let f = fold(&c, &lat);
        assert!(matches!(
            f.eval(0.2),
            Err(PotentialError::NonRealValue { .. })
        ));
    }

    #[test]
    fn periodicity_with_period_of_omega() {
        // ω = (1/2, 1/3) has period 6.
        let lat = Lattice::from_strs(&["1/2", "1/3"]).unwrap();
        let c = Generator::RandomPhase {
            nu: 2,
            kappa0: 1.0,
            alpha0: 1.0,
            seed: 3,
            support_radius: 4,
            scale: 0.8,
        }
        .build()
        .unwrap();
        let f = fold(&c, &lat);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-10.0..10.0);
            assert!((f.eval(x).unwrap() - f.eval(x + 6.0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_bound_is_tail_sum() {
        let c = exp_decay(1, 5);
        // Σ_{j>5} 2 e^{−j} = 2 e^{−6}/(1 − e^{−1}).
        let want = 2.0 * (-6f64).exp() / (1.0 - (-1f64).exp());
        assert!((c.truncation_bound() - want).abs() < 1e-14);
    }

    #[test]
    fn generator_serde() {
        let g: Generator = toml::from_str(
            "kind = \"single_cosine\"\nn = [1]\namplitude = 1.0\nkappa0 = 0.5\n",
        )
        .unwrap();
        let c = g.build().unwrap();
        assert_eq!(c.get(&[1]), cplx(0.5, 0.0));
        assert_eq!(c.get(&[-1]), cplx(0.5, 0.0));
    }

    proptest! {
        #[test]
        fn fold_then_eval_matches_direct(seed in 0u64..1000, x in -20.0f64..20.0, r in 1u64..5) {
            let lat = Lattice::from_strs(&["2/5", "3/7"]).unwrap();
            let c = Generator::RandomPhase {
                nu: 2, kappa0: 0.7, alpha0: 0.8, seed, support_radius: r, scale: 1.0,
            }.build().unwrap();
            let f = fold(&c, &lat);
            let w = [0.4 * x, 3.0 / 7.0 * x];
            let direct = c.eval_torus(&w);
            prop_assert!((f.eval(x).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn folded_decay_bound_holds(seed in 0u64..1000) {
            let lat = Lattice::from_strs(&["1/2", "1/2"]).unwrap();
            let c = Generator::RandomPhase {
                nu: 2, kappa0: 0.5, alpha0: 1.0, seed, support_radius: 6, scale: 1.0,
            }.build().unwrap();
            let f = fold(&c, &lat);
            prop_assert!(f.decay_violations().is_empty());
            prop_assert!(f.conjugate_defect() < 1e-15);
        }
    }
}
