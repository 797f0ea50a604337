//! Dual Hermitian matrices `H_{ε,k}` on finite subsets of the quotient
//! lattice, in raw and λ-normalized form.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::linalg::{hermitian_eigenvalues, spectrum_distance, CMatrix};
use crate::potential::FoldedCoefficients;

/// `(2π)²`.
pub const TWO_PI_SQ: f64 = TAU * TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("normalized mode needs γ ≥ 1 and γ−1 ≤ |k| ≤ γ (γ = {gamma}, k = {k})")]
    BadGamma { gamma: f64, k: f64 },
    #[error("off-diagonal scale B1 = {0} is outside (0, 1]")]
    BadB1(f64),
    #[error("domain is empty")]
    EmptyDomain,
    #[error("domain contains label {0} twice")]
    Duplicate(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub epsilon: f64,
    pub k: f64,
    pub normalized: bool,
    pub gamma: f64,
    pub lambda: f64,
    pub b1: f64,
}

impl OperatorSpec {
    pub fn raw(epsilon: f64, k: f64) -> Self {
        Self {
            epsilon,
            k,
            normalized: false,
            gamma: 1.0,
            lambda: 1.0,
            b1: 1.0,
        }
    }

    /// `λ = 256γ`, entries divided by `λ` and no `(2π)²` on the diagonal.
    pub fn normalized(epsilon: f64, k: f64, gamma: f64) -> Result<Self, OperatorError> {
        if gamma < 1.0 || k.abs() < gamma - 1.0 || k.abs() > gamma {
            return Err(OperatorError::BadGamma { gamma, k });
        }
        Ok(Self {
            epsilon,
            k,
            normalized: true,
            gamma,
            lambda: 256.0 * gamma,
            b1: 1.0,
        })
    }

    /// Smallest admissible `γ` for `k`: `max(1, ⌈|k|⌉)`.
    pub fn gamma_for(k: f64) -> f64 {
        k.abs().ceil().max(1.0)
    }

    pub fn with_b1(mut self, b1: f64) -> Result<Self, OperatorError> {
        if !(b1 > 0.0 && b1 <= 1.0) {
            return Err(OperatorError::BadB1(b1));
        }
        self.b1 = b1;
        Ok(self)
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Factor in front of `(ξ + k)²` on the diagonal.
    pub fn diagonal_scale(&self) -> f64 {
        if self.normalized {
            1.0 / self.lambda
        } else {
            TWO_PI_SQ
        }
    }

    /// Factor in front of `c(m − n)` off the diagonal.
    pub fn coupling(&self) -> f64 {
        self.epsilon / self.lambda
    }
}

/// Entry access for `H_{ε,k}` on the whole lattice, without assembling.
#[derive(Debug, Clone, Copy)]
pub struct Hamiltonian<'a> {
    pub lattice: &'a Lattice,
    pub folded: &'a FoldedCoefficients,
    pub spec: OperatorSpec,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(lattice: &'a Lattice, folded: &'a FoldedCoefficients, spec: OperatorSpec) -> Self {
        Self {
            lattice,
            folded,
            spec,
        }
    }

    pub fn with_k(&self, k: f64) -> Self {
        Self {
            spec: self.spec.with_k(k),
            ..*self
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            spec: self.spec.with_epsilon(epsilon),
            ..*self
        }
    }

    /// `v(n; k)`.
    pub fn v(&self, label: i64) -> f64 {
        let t = self.lattice.xi_f64(label) + self.spec.k;
        self.spec.diagonal_scale() * t * t
    }

    /// `v(m; k) − v(0; k) = s·ξ(m)(ξ(m) + 2k)`, free of cancellation.
    pub fn v_diff_from_origin(&self, label: i64) -> f64 {
        let x = self.lattice.xi_f64(label);
        self.spec.diagonal_scale() * x * (x + 2.0 * self.spec.k)
    }

    /// `h(n, m)` for `n ≠ m`.
    pub fn h(&self, n: i64, m: i64) -> Complex64 {
        self.folded.get(m - n) * self.spec.coupling()
    }

    /// Full entry, diagonal included.
    pub fn entry(&self, n: i64, m: i64) -> Complex64 {
        if n == m {
            Complex64::new(self.v(n), 0.0)
        } else {
            self.h(n, m)
        }
    }

    /// `H_Λ` in the order of `labels`; exactly Hermitian.
    pub fn assemble(&self, labels: &[i64]) -> CMatrix {
        let n = labels.len();
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = Complex64::new(self.v(labels[i]), 0.0);
            for j in i + 1..n {
                let z = self.h(labels[i], labels[j]);
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        h
    }

    pub fn dual_matrix(&self, labels: &[i64]) -> Result<DualMatrix, OperatorError> {
        if labels.is_empty() {
            return Err(OperatorError::EmptyDomain);
        }
        let mut seen = std::collections::HashSet::new();
        for &l in labels {
            if !seen.insert(l) {
                return Err(OperatorError::Duplicate(l));
            }
        }
        Ok(DualMatrix {
            domain: labels.to_vec(),
            values: self.assemble(labels),
            spec: self.spec,
        })
    }

    /// Bound on `|h(n,m)|`. Without a kernel, `ε·B₁·exp(−κ₀|m−n|^{α₀})`;
    /// with one, the folded bound `ε·(8/κ₀)^ν exp(−κ₀|𝔫|/4)`.
    pub fn offdiag_bound(&self, n: i64, m: i64) -> f64 {
        let d = f64::from(self.lattice.dist(n, m));
        let f = self.folded;
        let base = if self.lattice.null().rank == 0 {
            self.spec.b1 * (-f.kappa0 * d.powf(f.alpha0)).exp()
        } else {
            f.bound_constant * (-f.kappa0 * d / 4.0).exp()
        };
        self.spec.coupling().abs() * base
    }

    /// Worst ratio `|h(n,m)| / bound` over off-diagonal pairs of `labels`.
    pub fn offdiag_decay_ratio(&self, labels: &[i64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &a) in labels.iter().enumerate() {
            for &b in &labels[i + 1..] {
                let z = self.h(a, b).norm();
                if z > 0.0 {
                    worst = worst.max(z / self.offdiag_bound(a, b));
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct DualMatrix {
    pub domain: Vec<i64>,
    pub values: CMatrix,
    pub spec: OperatorSpec,
}

impl DualMatrix {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugationReport {
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConjugationReport {
    fn new(a: &[f64], b: &[f64], tolerance: f64) -> Self {
        let max_deviation = spectrum_distance(a, b);
        Self {
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

pub const CONJUGATION_TOL: f64 = 1e-10;

/// Spectra of `H_{m+Λ, k}` and `H_{Λ, k+ξ(m)}`.
pub fn translation_conjugation_check(
    ham: &Hamiltonian<'_>,
    labels: &[i64],
    m: i64,
) -> ConjugationReport {
    let shifted: Vec<i64> = labels.iter().map(|l| l + m).collect();
    let a = hermitian_eigenvalues(&ham.assemble(&shifted));
    let moved = ham.with_k(ham.spec.k + ham.lattice.xi_f64(m));
    let b = hermitian_eigenvalues(&moved.assemble(labels));
    ConjugationReport::new(&a, &b, CONJUGATION_TOL * (1.0 + scale_of(&a)))
}

/// Spectra of `H_{Λ, k}` and `H_{−Λ, −k}`.
pub fn symmetry_conjugation_check(ham: &Hamiltonian<'_>, labels: &[i64]) -> ConjugationReport {
    let a = hermitian_eigenvalues(&ham.assemble(labels));
    let reflected: Vec<i64> = labels.iter().map(|l| -l).collect();
    let b = hermitian_eigenvalues(&ham.with_k(-ham.spec.k).assemble(&reflected));
    ConjugationReport::new(&a, &b, CONJUGATION_TOL * (1.0 + scale_of(&a)))
}

fn scale_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}
