//! Independent ground truth: dense eigendecomposition of truncations and the
//! Floquet discriminant of the periodic Hill equation `−y″ + εṼy = Ey`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use num_integer::Integer;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{FrequencyVector, Lattice, Rational};
use crate::linalg::{hermitian_eigen, CMatrix, CVector};
use crate::potential::FoldedCoefficients;

/// Largest matrix handed to the dense solver.
pub const DENSE_LIMIT: usize = 4000;
/// Local error tolerance of the ODE integrator.
pub const ODE_TOL: f64 = 1e-12;
/// Allowed `|det M − 1|` for the monodromy matrix.
pub const WRONSKIAN_TOL: f64 = 1e-9;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("matrix of size {0} exceeds the dense limit")]
    TooLarge(usize),
    #[error("integrator failed: {0}")]
    IntegratorFailure(String),
    #[error("no sign change of |Δ|−2 in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    /// `max_j ‖Hv_j − λ_j v_j‖ / ‖H‖`.
    pub relative_residual: f64,
}

/// Full Hermitian eigendecomposition with a residual audit.
pub fn dense_spectrum(h: &CMatrix) -> Result<DenseSpectrum, OracleError> {
    let n = h.nrows();
    if n > DENSE_LIMIT {
        return Err(OracleError::TooLarge(n));
    }
    let (values, vectors) = hermitian_eigen(h);
    let norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (j, &lam) in values.iter().enumerate() {
        let v = vectors.column(j);
        let r = h * v - v * Complex64::new(lam, 0.0);
        worst = worst.max(r.norm());
    }
    Ok(DenseSpectrum {
        values,
        vectors,
        relative_residual: worst / norm,
    })
}

/// Least `T > 0` with `T·ω_j ∈ ℤ` for every `j`.
pub fn period(omega: &FrequencyVector) -> Rational {
    let t = omega
        .components()
        .iter()
        .filter(|c| !c.is_zero())
        .fold(1i64, |acc, c| {
            let (l, t) = (*c.numer(), *c.denom());
            acc.lcm(&(t / l.gcd(&t)))
        });
    Rational::from_integer(t)
}

/// Fourier modes `(2πξ, c)` of `Ṽ` with the mean removed.
#[derive(Debug, Clone)]
struct Modes {
    freq: Vec<f64>,
    coef: Vec<Complex64>,
}

impl Modes {
    fn new(lat: &Lattice, folded: &FoldedCoefficients) -> Self {
        let (freq, coef) = folded
            .iter()
            .filter(|(l, _)| *l != 0)
            .map(|(l, c)| (TAU * lat.xi_f64(l), c))
            .unzip();
        Self { freq, coef }
    }

    fn eval(&self, x: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.coef)
            .map(|(f, c)| (c * Complex64::from_polar(1.0, f * x)).re)
            .sum()
    }
}

/// Floquet analysis of `−y″ + εṼy = Ey` over one period.
#[derive(Debug, Clone)]
pub struct Floquet {
    modes: Modes,
    pub epsilon: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Monodromy {
    pub m: [[f64; 2]; 2],
    pub steps: usize,
}

impl Monodromy {
    pub fn discriminant(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn wronskian_drift(&self) -> f64 {
        (self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0] - 1.0).abs()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloquetData {
    pub period: f64,
    pub e_grid: Vec<f64>,
    pub discriminant: Vec<f64>,
    /// Maximal grid intervals with `|Δ| ≤ 2`, endpoints refined by bisection.
    pub bands: Vec<(f64, f64)>,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [f64; 4];

impl Floquet {
    /// The period is that of the lattice's effective frequency vector.
    pub fn new(lat: &Lattice, folded: &FoldedCoefficients, epsilon: f64) -> Self {
        let t = period(lat.effective_omega());
        Self {
            modes: Modes::new(lat, folded),
            epsilon,
            period: *t.numer() as f64 / *t.denom() as f64,
        }
    }

    pub fn potential(&self, x: f64) -> f64 {
        self.modes.eval(x)
    }

    /// State `(y₁, y₁′, y₂, y₂′)` for the two canonical solutions.
    fn rhs(&self, x: f64, s: &State, e: f64) -> State {
        let q = self.epsilon * self.modes.eval(x) - e;
        [s[1], q * s[0], s[3], q * s[2]]
    }

    /// Monodromy matrix over `[0, T]` by adaptive Dormand–Prince steps.
    pub fn monodromy(&self, e: f64) -> Result<Monodromy, OracleError> {
        let t_end = self.period;
        let mut x = 0.0;
        let mut s: State = [1.0, 0.0, 0.0, 1.0];
        let omega = e.abs().sqrt().max(1.0);
        let mut h = (0.01 / omega).min(t_end);
        let mut k = [[0.0; 4]; 7];
        k[0] = self.rhs(x, &s, e);
        let mut steps = 0;
        while x < t_end {
            if steps > MAX_STEPS {
                return Err(OracleError::IntegratorFailure(format!(
                    "step cap reached at x = {x}"
                )));
            }
            let last = x + h >= t_end;
            if last {
                h = t_end - x;
            }
            for i in 1..7 {
                let mut y = s;
                for (j, kj) in k.iter().enumerate().take(i) {
                    let a = A[i][j];
                    if a != 0.0 {
                        for d in 0..4 {
                            y[d] += h * a * kj[d];
                        }
                    }
                }
                k[i] = self.rhs(x + C[i] * h, &y, e);
            }
            let mut y5 = s;
            let mut err: f64 = 0.0;
            for d in 0..4 {
                let mut hi = 0.0;
                let mut lo = 0.0;
                for i in 0..7 {
                    hi += B5[i] * k[i][d];
                    lo += B4[i] * k[i][d];
                }
                y5[d] += h * hi;
                let scale = ODE_TOL * (1.0 + s[d].abs().max(y5[d].abs()));
                err = err.max((h * (hi - lo)).abs() / scale);
            }
            if !err.is_finite() {
                return Err(OracleError::IntegratorFailure(format!(
                    "non-finite error estimate at x = {x}"
                )));
            }
            if err <= 1.0 {
                x = if last { t_end } else { x + h };
                s = y5;
                // First-same-as-last: the seventh stage is f at the new point.
                k[0] = k[6];
                steps += 1;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
            if h < 1e-14 * t_end {
                return Err(OracleError::IntegratorFailure(format!(
                    "step size underflow at x = {x}"
                )));
            }
        }
        let m = Monodromy {
            m: [[s[0], s[2]], [s[1], s[3]]],
            steps,
        };
        if m.wronskian_drift() > WRONSKIAN_TOL * (1.0 + m.discriminant().abs()) {
            return Err(OracleError::IntegratorFailure(format!(
                "Wronskian drift {:.3e} at E = {e}",
                m.wronskian_drift()
            )));
        }
        Ok(m)
    }

    /// `Δ(E) = y₁(T) + y₂′(T)`.
    pub fn discriminant(&self, e: f64) -> Result<f64, OracleError> {
        Ok(self.monodromy(e)?.discriminant())
    }

    /// Root of `|Δ(E)| − 2` in `[lo, hi]` by bisection to absolute width `tol`.
    pub fn bisect_edge(&self, lo: f64, hi: f64, tol: f64) -> Result<f64, OracleError> {
        let g = |e: f64| self.discriminant(e).map(|d| d.abs() - 2.0);
        let (mut a, mut b) = (lo, hi);
        let (mut ga, gb) = (g(a)?, g(b)?);
        if ga == 0.0 {
            return Ok(a);
        }
        if gb == 0.0 {
            return Ok(b);
        }
        if ga.signum() == gb.signum() {
            return Err(OracleError::NoBracket { lo, hi });
        }
        while b - a > tol {
            let m = 0.5 * (a + b);
            let gm = g(m)?;
            if gm == 0.0 {
                return Ok(m);
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Gap edges near the approximate pair `(lo_edge, hi_edge)`. `window` is
    /// how far into the adjacent bands the search may extend. Returns `None`
    /// when `|Δ| ≤ 2` at the approximate centre, i.e. the gap is closed.
    pub fn gap_edges(
        &self,
        lo_edge: f64,
        hi_edge: f64,
        window: f64,
        tol: f64,
    ) -> Result<Option<(f64, f64)>, OracleError> {
        let mid = 0.5 * (lo_edge + hi_edge);
        if self.discriminant(mid)?.abs() <= 2.0 {
            return Ok(None);
        }
        let lower = self.bisect_edge(lo_edge - window, mid, tol)?;
        let upper = self.bisect_edge(mid, hi_edge + window, tol)?;
        Ok(Some((lower, upper)))
    }

    /// Discriminant on a grid, evaluated in parallel, with bands refined.
    pub fn scan(&self, e_grid: &[f64]) -> Result<FloquetData, OracleError> {
        let discriminant: Vec<f64> = e_grid
            .par_iter()
            .map(|&e| self.discriminant(e))
            .collect::<Result<_, _>>()?;
        let mut bands = Vec::new();
        let mut start: Option<f64> = None;
        for i in 0..e_grid.len() {
            let inside = discriminant[i].abs() <= 2.0;
            match (inside, start) {
                (true, None) => {
                    start = Some(if i == 0 {
                        e_grid[0]
                    } else {
                        self.bisect_edge(e_grid[i - 1], e_grid[i], 1e-12)?
                    });
                }
                (false, Some(s)) => {
                    bands.push((s, self.bisect_edge(e_grid[i - 1], e_grid[i], 1e-12)?));
                    start = None;
                }
                _ => {}
            }
        }
        if let (Some(s), Some(&last)) = (start, e_grid.last()) {
            bands.push((s, last));
        }
        Ok(FloquetData {
            period: self.period,
            e_grid: e_grid.to_vec(),
            discriminant,
            bands,
        })
    }

    /// Writes `(E, Δ)` rows as CSV.
    pub fn write_csv<W: std::io::Write>(data: &FloquetData, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["E", "discriminant"])?;
        for (e, d) in data.e_grid.iter().zip(&data.discriminant) {
            out.write_record([format!("{e:.15e}"), format!("{d:.15e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Max of `|−y″ + εṼy − Ey|` over `samples` points in one period, where
/// `y = Σ conj φ(𝔫) e^{2πi(ξ(𝔫)+k)x}`. The conjugate appears because the
/// matrix places `c(m−n)` at `(n, m)`.
#[allow(clippy::too_many_arguments)]
pub fn bloch_residual(
    lat: &Lattice,
    folded: &FoldedCoefficients,
    epsilon: f64,
    labels: &[i64],
    phi: &CVector,
    k: f64,
    energy: f64,
    samples: usize,
) -> f64 {
    let modes = Modes::new(lat, folded);
    let t = period(lat.effective_omega());
    let t = *t.numer() as f64 / *t.denom() as f64;
    let freqs: Vec<f64> = labels.iter().map(|&l| TAU * (lat.xi_f64(l) + k)).collect();
    let amps: Vec<Complex64> = phi.iter().map(|z| z.conj()).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    (0..samples)
        .map(|i| {
            let x = t * i as f64 / samples as f64;
            let mut y = Complex64::zero();
            let mut ypp = Complex64::zero();
            for (f, a) in freqs.iter().zip(&amps) {
                let e = a * Complex64::from_polar(1.0, f * x);
                y += e;
                ypp -= e * (f * f);
            }
            (-ypp + y * (epsilon * modes.eval(x) - energy)).norm() / norm
        })
        .fold(0.0, f64::max)
}
