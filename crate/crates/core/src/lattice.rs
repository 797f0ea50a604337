//! Exact arithmetic on the quotient group `ℤ^ν / N(ω)` where `N(ω)` is the
//! set of integer vectors orthogonal to a rational frequency vector `ω`.
//!
//! The linear functional `ξ(n) = n·ω` factors through the quotient, and since
//! `ω` has rational entries the quotient is cyclic: a coset is identified by
//! the integer `label = (a·n)/g` where `a` is `ω` with denominators cleared and
//! `g = gcd(a)`. All set and group operations therefore run on `i64` labels;
//! the canonical representative (minimal ℓ∞ norm, lexicographic tie-break) is
//! recovered on demand.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = Ratio<i64>;

/// Upper bound on the number of box points enumerated for the norm table.
const TABLE_BUDGET: f64 = 2.0e5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("frequency vector is empty")]
    Empty,
    #[error("frequency vector is identically zero")]
    Zero,
    #[error("cannot parse rational {0:?}")]
    Parse(String),
    #[error("vector has dimension {got}, lattice has dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Parses `"p/q"`, `"p"` or a decimal-free integer into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, LatticeError> {
    let t = s.trim();
    let err = || LatticeError::Parse(s.to_string());
    match t.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| err())?;
            let q: i64 = q.trim().parse().map_err(|_| err())?;
            if q == 0 {
                return Err(err());
            }
            Ok(Rational::new(p, q))
        }
        None => t.parse::<i64>().map(Rational::from_integer).map_err(|_| err()),
    }
}

fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A vector of exact rationals `ℓ_j / t_j`, not all zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FrequencyVector {
    components: Vec<Rational>,
}

impl FrequencyVector {
    pub fn new(components: Vec<Rational>) -> Result<Self, LatticeError> {
        if components.is_empty() {
            return Err(LatticeError::Empty);
        }
        if components.iter().all(Zero::is_zero) {
            return Err(LatticeError::Zero);
        }
        Ok(Self { components })
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, LatticeError> {
        let comps = items
            .iter()
            .map(|s| parse_rational(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(comps)
    }

    pub fn nu(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Rational] {
        &self.components
    }

    /// `n·ω` in exact arithmetic.
    pub fn dot(&self, n: &[i64]) -> Rational {
        self.components
            .iter()
            .zip(n)
            .fold(Rational::zero(), |acc, (w, &x)| acc + *w * x)
    }

    /// Least common multiple of the reduced denominators.
    pub fn common_denominator(&self) -> i64 {
        self.components.iter().fold(1i64, |l, c| l.lcm(c.denom()))
    }

    /// Product of the reduced denominators `∏ t_j`.
    pub fn denominator_product(&self) -> i64 {
        self.components.iter().map(|c| *c.denom()).product()
    }

    /// `Σ_j |ω_j|`.
    pub fn l1(&self) -> Rational {
        self.components.iter().fold(Rational::zero(), |a, c| a + c.abs())
    }

    fn scaled(&self, d: i64) -> Self {
        Self {
            components: self.components.iter().map(|c| c / d).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for FrequencyVector {
    type Error = LatticeError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::parse(&v)
    }
}

impl From<FrequencyVector> for Vec<String> {
    fn from(f: FrequencyVector) -> Self {
        f.components.iter().map(format_rational).collect()
    }
}

impl FromStr for FrequencyVector {
    type Err = LatticeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let items: Vec<&str> = s.split(',').collect();
        Self::parse(&items)
    }
}

impl fmt::Display for FrequencyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components.iter().map(format_rational).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Integer basis of `{m ∈ ℤ^ν : m·ω = 0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullLattice {
    pub basis: Vec<Vec<i64>>,
    pub rank: usize,
}

impl NullLattice {
    pub fn contains(&self, omega: &FrequencyVector, m: &[i64]) -> bool {
        omega.dot(m).is_zero()
    }
}

fn integer_form(omega: &FrequencyVector) -> Vec<i64> {
    let l = omega.common_denominator();
    omega
        .components()
        .iter()
        .map(|c| (c * l).to_integer())
        .collect()
}

/// Kernel of `m ↦ m·ω` by unimodular column reduction of the cleared integer
/// form: the row `a` is driven to `(g, 0, …, 0)` by column operations tracked
/// in `U`, and the columns of `U` past the first span the kernel.
pub fn null_lattice(omega: &FrequencyVector) -> NullLattice {
    let a = integer_form(omega);
    let nu = a.len();
    let mut row = a.clone();
    let mut u: Vec<Vec<i64>> = (0..nu)
        .map(|i| (0..nu).map(|j| i64::from(i == j)).collect())
        .collect();
    // Column j of `u` is u[·][j]; we store as rows-of-columns for clarity.
    let col = |u: &Vec<Vec<i64>>, j: usize| -> Vec<i64> { (0..nu).map(|i| u[i][j]).collect() };
    // Move a nonzero entry to position 0.
    if let Some(p) = row.iter().position(|&x| x != 0) {
        row.swap(0, p);
        for r in u.iter_mut() {
            r.swap(0, p);
        }
    }
    for j in 1..nu {
        while row[j] != 0 {
            let q = row[0].div_euclid(row[j]);
            row[0] -= q * row[j];
            for r in u.iter_mut() {
                r[0] -= q * r[j];
            }
            row.swap(0, j);
            for r in u.iter_mut() {
                r.swap(0, j);
            }
        }
    }
    let mut basis: Vec<Vec<i64>> = (1..nu).map(|j| col(&u, j)).collect();
    for b in basis.iter_mut() {
        if let Some(&first) = b.iter().find(|&&x| x != 0) {
            if first < 0 {
                b.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    size_reduce(&mut basis);
    let rank = basis.len();
    NullLattice { basis, rank }
}

/// Pairwise size reduction in ℓ2; keeps the basis unimodularly equivalent.
fn size_reduce(basis: &mut [Vec<i64>]) {
    let dot = |x: &[i64], y: &[i64]| -> i128 {
        x.iter().zip(y).map(|(a, b)| *a as i128 * *b as i128).sum()
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                let nj = dot(&basis[j], &basis[j]);
                if nj == 0 {
                    continue;
                }
                let mu = dot(&basis[i], &basis[j]) as f64 / nj as f64;
                let q = mu.round() as i64;
                if q != 0 {
                    let bj = basis[j].clone();
                    let before = dot(&basis[i], &basis[i]);
                    for (x, y) in basis[i].iter_mut().zip(&bj) {
                        *x -= q * y;
                    }
                    if dot(&basis[i], &basis[i]) < before {
                        changed = true;
                    } else {
                        for (x, y) in basis[i].iter_mut().zip(&bj) {
                            *x += q * y;
                        }
                    }
                }
            }
        }
    }
}

/// A coset of the null lattice, stored through its canonical representative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    pub rep: Vec<i64>,
    pub label: i64,
    norm: u32,
    #[serde(with = "rational_string")]
    pub xi: Rational,
}

impl GroupElement {
    /// `|𝔫| = min { |n|_∞ : n ∈ 𝔫 }`.
    pub fn norm(&self) -> f64 {
        f64::from(self.norm)
    }

    pub fn norm_int(&self) -> u32 {
        self.norm
    }

    pub fn xi_f64(&self) -> f64 {
        self.xi.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_identity(&self) -> bool {
        self.label == 0
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm
            .cmp(&other.norm)
            .then_with(|| self.rep.cmp(&other.rep))
    }
}

mod rational_string {
    use super::{format_rational, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// The quotient group together with its admissibility rescale and a norm
/// table. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Lattice {
    omega: FrequencyVector,
    effective: FrequencyVector,
    rescale: i64,
    form: Vec<i64>,
    form_l1: i64,
    gcd: i64,
    common_denominator: i64,
    null: NullLattice,
    table_radius: i64,
    norms: HashMap<i64, u32>,
    by_norm: Vec<(u32, i64)>,
}

impl Lattice {
    /// Builds the quotient for `omega`. If `Σ|ω_j| > 1` the functional is
    /// divided by `⌈Σ|ω_j|⌉` so that `|ξ(𝔫)| ≤ |𝔫|` holds under the ℓ∞ norm.
    pub fn new(omega: FrequencyVector) -> Self {
        let l1 = omega.l1();
        let rescale = if l1 > Rational::from_integer(1) {
            l1.ceil().to_integer()
        } else {
            1
        };
        let effective = omega.scaled(rescale);
        let common_denominator = effective.common_denominator();
        let form = integer_form(&effective);
        let gcd = form.iter().fold(0i64, |g, &x| g.gcd(&x));
        let form_l1 = form.iter().map(|x| x.abs()).sum();
        let null = null_lattice(&omega);
        let nu = omega.nu();
        let mut lat = Self {
            omega,
            effective,
            rescale,
            form,
            form_l1,
            gcd,
            common_denominator,
            null,
            table_radius: 0,
            norms: HashMap::new(),
            by_norm: Vec::new(),
        };
        let radius = if nu == 1 {
            0
        } else {
            ((TABLE_BUDGET.powf(1.0 / nu as f64) - 1.0) / 2.0).floor() as i64
        };
        lat.build_table(radius);
        lat
    }

    pub fn from_strs<S: AsRef<str>>(items: &[S]) -> Result<Self, LatticeError> {
        Ok(Self::new(FrequencyVector::parse(items)?))
    }

    fn build_table(&mut self, radius: i64) {
        let nu = self.nu();
        if nu == 1 {
            return;
        }
        let mut norms: HashMap<i64, u32> = HashMap::new();
        let mut x = vec![-radius; nu];
        loop {
            let norm = x.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u32;
            let label = self.label_of(&x);
            norms
                .entry(label)
                .and_modify(|n| *n = (*n).min(norm))
                .or_insert(norm);
            let mut i = nu;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if x[i] < radius {
                    x[i] += 1;
                    for v in x.iter_mut().skip(i + 1) {
                        *v = -radius;
                    }
                    break;
                } else if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
        let mut by_norm: Vec<(u32, i64)> = norms.iter().map(|(&l, &n)| (n, l)).collect();
        by_norm.sort_unstable();
        self.table_radius = radius;
        self.norms = norms;
        self.by_norm = by_norm;
    }

    pub fn nu(&self) -> usize {
        self.omega.nu()
    }

    /// The frequency vector as supplied.
    pub fn omega(&self) -> &FrequencyVector {
        &self.omega
    }

    /// The frequency vector after the admissibility rescale.
    pub fn effective_omega(&self) -> &FrequencyVector {
        &self.effective
    }

    pub fn rescale_factor(&self) -> i64 {
        self.rescale
    }

    pub fn null(&self) -> &NullLattice {
        &self.null
    }

    /// `ξ` of the coset with label 1; `ξ(label) = label · xi_unit`.
    pub fn xi_unit(&self) -> Rational {
        Rational::new(self.gcd, self.common_denominator)
    }

    pub fn label_of(&self, n: &[i64]) -> i64 {
        let s: i64 = self.form.iter().zip(n).map(|(a, x)| a * x).sum();
        s / self.gcd
    }

    pub fn xi_of_label(&self, label: i64) -> Rational {
        self.xi_unit() * label
    }

    pub fn xi_f64(&self, label: i64) -> f64 {
        self.xi_of_label(label).to_f64().unwrap_or(f64::NAN)
    }

    /// Norm of the coset with the given label.
    pub fn norm_of_label(&self, label: i64) -> u32 {
        if self.nu() == 1 {
            return label.unsigned_abs() as u32;
        }
        if let Some(&n) = self.norms.get(&label) {
            return n;
        }
        let target = label * self.gcd;
        let lower = (self.table_radius + 1).max(ceil_div(target.abs(), self.form_l1));
        let mut r = lower;
        loop {
            if self.lex_first(target, r).is_some() {
                return r as u32;
            }
            r += 1;
        }
    }

    /// `|𝔪 − 𝔫|` for labels.
    pub fn dist(&self, a: i64, b: i64) -> u32 {
        self.norm_of_label(a - b)
    }

    /// Lexicographically smallest `x` with `|x|_∞ ≤ r` and `a·x = target`.
    fn lex_first(&self, target: i64, r: i64) -> Option<Vec<i64>> {
        let nu = self.nu();
        let mut tail_l1 = vec![0i64; nu + 1];
        let mut tail_gcd = vec![0i64; nu + 1];
        for i in (0..nu).rev() {
            tail_l1[i] = tail_l1[i + 1] + self.form[i].abs();
            tail_gcd[i] = tail_gcd[i + 1].gcd(&self.form[i]);
        }
        let mut out = vec![0i64; nu];
        if self.search(0, target, r, &tail_l1, &tail_gcd, &mut out) {
            Some(out)
        } else {
            None
        }
    }

    fn search(
        &self,
        idx: usize,
        remaining: i64,
        r: i64,
        tail_l1: &[i64],
        tail_gcd: &[i64],
        out: &mut [i64],
    ) -> bool {
        let nu = self.nu();
        if idx == nu {
            return remaining == 0;
        }
        if remaining.abs() > r * tail_l1[idx] {
            return false;
        }
        let g = tail_gcd[idx];
        if g == 0 {
            if remaining != 0 {
                return false;
            }
        } else if remaining % g != 0 {
            return false;
        }
        let a = self.form[idx];
        if idx == nu - 1 {
            if a == 0 {
                if remaining == 0 {
                    out[idx] = -r;
                    return true;
                }
                return false;
            }
            if remaining % a == 0 && (remaining / a).abs() <= r {
                out[idx] = remaining / a;
                return true;
            }
            return false;
        }
        for x in -r..=r {
            out[idx] = x;
            if self.search(idx + 1, remaining - a * x, r, tail_l1, tail_gcd, out) {
                return true;
            }
        }
        false
    }

    /// Canonical element of the coset with the given label.
    pub fn element(&self, label: i64) -> GroupElement {
        let norm = self.norm_of_label(label);
        let rep = if self.nu() == 1 {
            vec![label * self.gcd / self.form[0]]
        } else {
            self.lex_first(label * self.gcd, i64::from(norm))
                .expect("a representative exists at the coset norm")
        };
        GroupElement {
            rep,
            label,
            norm,
            xi: self.xi_of_label(label),
        }
    }

    /// Coset representative of minimal ℓ∞ norm, lexicographic tie-break.
    pub fn canonicalize(&self, n: &[i64]) -> Result<GroupElement, LatticeError> {
        if n.len() != self.nu() {
            return Err(LatticeError::Dimension {
                expected: self.nu(),
                got: n.len(),
            });
        }
        Ok(self.element(self.label_of(n)))
    }

    pub fn identity(&self) -> GroupElement {
        self.element(0)
    }

    /// `a ± b`.
    pub fn group_op(&self, a: &GroupElement, b: &GroupElement, sign: i8) -> GroupElement {
        if sign >= 0 {
            self.element(a.label + b.label)
        } else {
            self.element(a.label - b.label)
        }
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        self.element(-a.label)
    }

    /// Labels of `B(R)`, sorted by `(norm, rep)`.
    pub fn ball_labels(&self, radius: f64) -> Vec<i64> {
        if radius < 0.0 {
            return Vec::new();
        }
        let r = radius.floor() as i64;
        if self.nu() == 1 {
            let mut v: Vec<i64> = (-r..=r).collect();
            v.sort_by_key(|&l| (l.unsigned_abs(), l * self.form[0].signum()));
            return v;
        }
        let mut labels: Vec<i64> = if r <= self.table_radius {
            self.by_norm
                .iter()
                .take_while(|(n, _)| i64::from(*n) <= r)
                .map(|&(_, l)| l)
                .collect()
        } else {
            let span = r * self.form_l1 / self.gcd;
            (-span..=span)
                .filter(|&l| i64::from(self.norm_of_label(l)) <= r)
                .collect()
        };
        let mut elems: Vec<GroupElement> = labels.drain(..).map(|l| self.element(l)).collect();
        elems.sort();
        elems.into_iter().map(|e| e.label).collect()
    }

    /// `B(R) = { 𝔪 : |𝔪| ≤ R }`.
    pub fn ball(&self, radius: f64) -> Ball {
        let elements: Vec<GroupElement> = self
            .ball_labels(radius)
            .into_iter()
            .map(|l| self.element(l))
            .collect();
        let nu = self.nu() as i32;
        let r_max = radius.floor() as i64;
        let mut growth: f64 = 0.0;
        for r in 1..=r_max {
            let count = elements.iter().filter(|e| i64::from(e.norm) <= r).count();
            growth = growth.max(count as f64 / (r as f64).powi(nu));
        }
        Ball {
            radius,
            elements,
            growth_constant: growth,
        }
    }

    /// Labels `d` ordered by increasing `|d|`, covering at least `|d| ≤ r`.
    pub fn offsets_up_to(&self, r: u32) -> Vec<(u32, i64)> {
        if self.nu() == 1 {
            let mut v = Vec::with_capacity(2 * r as usize + 1);
            v.push((0, 0));
            for d in 1..=i64::from(r) {
                v.push((d as u32, -d));
                v.push((d as u32, d));
            }
            return v;
        }
        if i64::from(r) <= self.table_radius {
            return self
                .by_norm
                .iter()
                .take_while(|(n, _)| *n <= r)
                .copied()
                .collect();
        }
        let mut v: Vec<(u32, i64)> = self
            .ball_labels(f64::from(r))
            .into_iter()
            .map(|l| (self.norm_of_label(l), l))
            .collect();
        v.sort_unstable();
        v
    }

    /// Exhaustive check of `|ξ(𝔫)| ≥ a₀|𝔫|^{−b₀}` for `0 < |𝔫| ≤ R̄₀`.
    pub fn check_diophantine(&self, a0: f64, b0: f64, rbar0: f64) -> DiophantineReport {
        let mut worst: Option<(GroupElement, f64)> = None;
        for label in self.ball_labels(rbar0) {
            if label == 0 {
                continue;
            }
            let e = self.element(label);
            let margin = e.xi_f64().abs() * e.norm().powf(b0) / a0;
            if worst.as_ref().is_none_or(|(_, m)| margin < *m) {
                worst = Some((e, margin));
            }
        }
        let satisfied = worst.as_ref().is_none_or(|(_, m)| *m >= 1.0);
        let period_condition =
            b0 * rbar0.ln() > (self.omega.denominator_product() as f64).ln();
        DiophantineReport {
            a0,
            b0,
            rbar0,
            worst_pair: worst,
            satisfied,
            period_condition,
        }
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    if b == 0 {
        0
    } else {
        (a + b - 1) / b
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ball {
    pub radius: f64,
    pub elements: Vec<GroupElement>,
    pub growth_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub a0: f64,
    pub b0: f64,
    pub rbar0: f64,
    /// Element with the smallest margin `|ξ(𝔫)|·|𝔫|^{b₀}/a₀`.
    pub worst_pair: Option<(GroupElement, f64)>,
    pub satisfied: bool,
    /// Whether `R̄₀^{b₀} > ∏ t_j`.
    pub period_condition: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(items: &[&str]) -> Lattice {
        Lattice::from_strs(items).unwrap()
    }

    fn brute_norm(lat: &Lattice, label: i64, radius: i64) -> Option<(u32, Vec<i64>)> {
        // Independent path: scan the full box in lexicographic order.
        let nu = lat.nu();
        let mut best: Option<(u32, Vec<i64>)> = None;
        let total = (2 * radius + 1).pow(nu as u32);
        for idx in 0..total {
            let mut x = vec![0i64; nu];
            let mut t = idx;
            for i in (0..nu).rev() {
                x[i] = t % (2 * radius + 1) - radius;
                t /= 2 * radius + 1;
            }
            if lat.label_of(&x) != label {
                continue;
            }
            let n = x.iter().map(|v| v.unsigned_abs()).max().unwrap() as u32;
            match &best {
                Some((bn, _)) if *bn <= n => {}
                _ => best = Some((n, x)),
            }
        }
        best
    }

    #[test]
    fn null_lattice_trivial_quotient() {
        let l = FrequencyVector::parse(&["3/7"]).unwrap();
        let nl = null_lattice(&l);
        assert_eq!(nl.rank, 0);
        assert!(nl.basis.is_empty());
    }

    #[test]
    fn null_lattice_diagonal() {
        let w = FrequencyVector::parse(&["1/2", "1/2"]).unwrap();
        let nl = null_lattice(&w);
        assert_eq!(nl.rank, 1);
        assert_eq!(nl.basis, vec![vec![1, -1]]);
    }

    #[test]
    fn null_lattice_coprime_pair_has_rank_one() {
        // 14 m1 + 15 m2 = 0 is solved by (15, -14).
        let w = FrequencyVector::parse(&["2/5", "3/7"]).unwrap();
        let nl = null_lattice(&w);
        assert_eq!(nl.rank, 1);
        assert_eq!(nl.basis, vec![vec![15, -14]]);
        assert!(nl.contains(&w, &nl.basis[0]));
    }

    #[test]
    fn null_lattice_three_dimensional() {
        let w = FrequencyVector::parse(&["1/2", "1/3", "1/5"]).unwrap();
        let nl = null_lattice(&w);
        assert_eq!(nl.rank, 2);
        for b in &nl.basis {
            assert!(w.dot(b).is_zero());
        }
        // Independence: the 2x2 minors are not all zero.
        let (u, v) = (&nl.basis[0], &nl.basis[1]);
        let minors = [
            u[0] * v[1] - u[1] * v[0],
            u[0] * v[2] - u[2] * v[0],
            u[1] * v[2] - u[2] * v[1],
        ];
        assert!(minors.iter().any(|&m| m != 0));
        // Primitive sublattice: gcd of minors is 1.
        let g = minors.iter().fold(0i64, |g, m| g.gcd(m));
        assert_eq!(g, 1);
    }

    #[test]
    fn canonicalize_examples() {
        let l = lat(&["1/2", "1/2"]);
        let e = l.canonicalize(&[1, 0]).unwrap();
        assert_eq!(e.rep, vec![0, 1]);
        assert_eq!(e.norm(), 1.0);
        assert_eq!(e.xi, Rational::new(1, 2));

        let z = l.canonicalize(&[3, -3]).unwrap();
        assert_eq!(z.rep, vec![0, 0]);
        assert_eq!(z.norm(), 0.0);
        assert!(z.xi.is_zero());

        let t = lat(&["3/7"]);
        let e = t.canonicalize(&[5]).unwrap();
        assert_eq!(e.rep, vec![5]);
        assert_eq!(e.norm(), 5.0);
        assert_eq!(e.xi, Rational::new(15, 7));
    }

    #[test]
    fn canonicalize_rejects_dimension_mismatch() {
        let l = lat(&["1/2", "1/2"]);
        assert!(matches!(
            l.canonicalize(&[1]),
            Err(LatticeError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn group_op_examples() {
        let l = lat(&["1/2", "1/2"]);
        let a = l.canonicalize(&[1, 0]).unwrap();
        let b = l.canonicalize(&[0, 1]).unwrap();
        let s = l.group_op(&a, &b, 1);
        assert_eq!(s.rep, vec![1, 1]);
        assert_eq!(s.xi, Rational::from_integer(1));
        let d = l.group_op(&a, &a, -1);
        assert!(d.is_identity());
        assert!(d.xi.is_zero());
    }

    #[test]
    fn ball_examples() {
        let l = lat(&["1/2", "1/2"]);
        let b0 = l.ball(0.0);
        assert_eq!(b0.elements.len(), 1);
        assert!(b0.elements[0].is_identity());

        let t = lat(&["1"]);
        let b = t.ball(3.0);
        let mut reps: Vec<i64> = b.elements.iter().map(|e| e.rep[0]).collect();
        reps.sort();
        assert_eq!(reps, vec![-3, -2, -1, 0, 1, 2, 3]);

        // Oracle: distinct cosets among box points of radius 4 whose
        // minimal representative lies within radius 2.
        let b2 = l.ball(2.0);
        let mut cosets = std::collections::BTreeSet::new();
        for x in -4i64..=4 {
            for y in -4i64..=4 {
                let label = l.label_of(&[x, y]);
                if let Some((n, _)) = brute_norm(&l, label, 4) {
                    if n <= 2 {
                        cosets.insert(label);
                    }
                }
            }
        }
        assert_eq!(b2.elements.len(), cosets.len());
    }

    #[test]
    fn ball_is_sorted_and_monotone() {
        let l = lat(&["2/5", "3/7"]);
        let b1 = l.ball(3.0);
        let b2 = l.ball(5.0);
        for w in b1.elements.windows(2) {
            assert!(w[0] < w[1]);
        }
        let s2: std::collections::HashSet<i64> = b2.elements.iter().map(|e| e.label).collect();
        assert!(b1.elements.iter().all(|e| s2.contains(&e.label)));
        let nu = l.nu() as i32;
        for e in &b2.elements {
            assert!(e.norm() <= 5.0);
        }
        assert!(b2.growth_constant >= b2.elements.len() as f64 / 5f64.powi(nu) - 1e-12);
    }

    #[test]
    fn canonical_matches_brute_force() {
        for w in [&["1/2", "1/2"][..], &["2/5", "3/7"][..], &["1/2", "1/3"][..]] {
            let l = lat(w);
            for x in -5i64..=5 {
                for y in -5i64..=5 {
                    let e = l.canonicalize(&[x, y]).unwrap();
                    let (n, rep) = brute_norm(&l, e.label, 5).unwrap();
                    assert_eq!(e.norm_int(), n);
                    assert_eq!(e.rep, rep, "omega {w:?} n=({x},{y})");
                }
            }
        }
    }

    #[test]
    fn rescale_applies_when_l1_exceeds_one() {
        let l = lat(&["3/2", "1/3"]);
        assert_eq!(l.rescale_factor(), 2);
        for label in l.ball_labels(6.0) {
            let e = l.element(label);
            assert!(e.xi.abs() <= Rational::from_integer(i64::from(e.norm_int())));
        }
        let u = lat(&["1"]);
        assert_eq!(u.rescale_factor(), 1);
    }

    #[test]
    fn diophantine_examples() {
        let l = lat(&["3/7"]);
        let r = l.check_diophantine(0.1, 2.0, 10.0);
        assert!(r.satisfied);
        assert!((r.worst_pair.as_ref().unwrap().1 - (3.0 / 7.0) / 0.1).abs() < 1e-12);

        let l = lat(&["2/5", "3/7"]);
        let r = l.check_diophantine(0.01, 3.0, 20.0);
        // Independent scan: |14 m1 + 15 m2| / 35 over the integer box.
        let mut oracle = f64::INFINITY;
        for x in -20i64..=20 {
            for y in -20i64..=20 {
                let label = l.label_of(&[x, y]);
                if label == 0 {
                    continue;
                }
                let (n, _) = brute_norm(&l, label, 20).unwrap();
                if n > 20 {
                    continue;
                }
                let xi = (14 * x + 15 * y).abs() as f64 / 35.0;
                oracle = oracle.min(xi * f64::from(n).powi(3) / 0.01);
            }
        }
        assert!((r.worst_pair.as_ref().unwrap().1 - oracle).abs() < 1e-9 * oracle);
        assert!(r.satisfied);

        let l = lat(&["1/2", "1/2"]);
        let r = l.check_diophantine(0.9, 3.0, 2.0);
        assert!(!r.satisfied);
        let (e, m) = r.worst_pair.unwrap();
        assert_eq!(e.norm(), 1.0);
        assert_eq!(e.xi.abs(), Rational::new(1, 2));
        assert!(m < 1.0);
    }

    #[test]
    fn frequency_vector_serde_roundtrip() {
        let w = FrequencyVector::parse(&["1/2", "-3/7", "2"]).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"["1/2","-3/7","2"]"#);
        let back: FrequencyVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        assert!(FrequencyVector::parse(&["0", "0/3"]).is_err());
        assert!(FrequencyVector::parse(&["1/0"]).is_err());
    }

    fn lattices() -> Vec<Lattice> {
        vec![
            lat(&["1"]),
            lat(&["3/7"]),
            lat(&["1/2", "1/2"]),
            lat(&["2/5", "3/7"]),
        ]
    }

    #[test]
    fn norm_axioms_on_b6() {
        for l in lattices() {
            let b = l.ball_labels(6.0);
            for &x in &b {
                assert_eq!(l.norm_of_label(x) == 0, x == 0);
                for &y in &b {
                    let s = l.norm_of_label(x + y);
                    assert!(s <= l.norm_of_label(x) + l.norm_of_label(y));
                    assert_eq!(l.xi_of_label(x + y), l.xi_of_label(x) + l.xi_of_label(y));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn canonicalize_is_constant_on_cosets(x in -12i64..=12, y in -12i64..=12, t in -3i64..=3) {
            for w in [&["1/2", "1/2"][..], &["2/5", "3/7"][..]] {
                let l = lat(w);
                let base = l.canonicalize(&[x, y]).unwrap();
                for b in &l.null().basis {
                    let shifted = [x + t * b[0], y + t * b[1]];
                    prop_assert_eq!(&l.canonicalize(&shifted).unwrap(), &base);
                }
                let again = l.canonicalize(&base.rep).unwrap();
                prop_assert_eq!(again, base);
            }
        }

        #[test]
        fn xi_is_additive(a in -40i64..=40, b in -40i64..=40) {
            let l = lat(&["1/2", "1/3"]);
            let (ea, eb) = (l.element(a), l.element(b));
            let s = l.group_op(&ea, &eb, 1);
            let d = l.group_op(&ea, &eb, -1);
            prop_assert_eq!(s.xi, ea.xi + eb.xi);
            prop_assert_eq!(d.xi, ea.xi - eb.xi);
            prop_assert_eq!(l.omega().dot(&s.rep), s.xi);
        }
    }
}
