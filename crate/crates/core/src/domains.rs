//! Inductive domains `Λ⁽ˢ⁾_k(m)`, proper subtraction systems and their
//! stabilization, `𝒮`- and `T`-symmetrization, and nesting audits.
//!
//! Sets are stored as coset labels. Since the quotient is cyclic the label
//! map is a group isomorphism onto ℤ, so translation is label addition and
//! `𝒮(m) = −m` is negation.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::scales::ScaleSchedule;

pub type LabelSet = BTreeSet<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("k = {k} lies in the excluded interval ({lo}, {hi}) of m = {label}")]
    ExcludedK { k: f64, label: i64, lo: f64, hi: f64 },
    #[error("scale {s} is outside 1..={s_max}")]
    DepthExceeded { s: usize, s_max: usize },
    #[error("subtraction system is not proper: {0}")]
    NotProper(String),
    #[error("stabilization needed ℓ₀ = {ell0} ≥ 2^{s} steps")]
    StabilizationBound { ell0: usize, s: usize },
    #[error("|k| = {k} is not below δ₀⁽ˢ⁻²⁾ = {bound}")]
    NotSmallK { k: f64, bound: f64 },
    #[error("k = {k} is outside the resonance window ({lo}, {hi}) of n₀ = {n0}")]
    NotResonant { k: f64, n0: i64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Plain,
    Sym,
    TSym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainLabel {
    pub scale: usize,
    pub center: i64,
    pub kind: DomainKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub label: DomainLabel,
    pub elements: LabelSet,
}

impl Domain {
    pub fn new(label: DomainLabel, elements: LabelSet) -> Self {
        Self { label, elements }
    }

    pub fn plain(scale: usize, center: i64, elements: LabelSet) -> Self {
        Self::new(
            DomainLabel {
                scale,
                center,
                kind: DomainKind::Plain,
            },
            elements,
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, label: i64) -> bool {
        self.elements.contains(&label)
    }

    pub fn labels(&self) -> Vec<i64> {
        self.elements.iter().copied().collect()
    }

    /// `μ_Λ(m) = dist(m, 𝔗∖Λ)`; `None` when `m ∉ Λ`.
    pub fn boundary_distance(&self, lat: &Lattice, m: i64) -> Option<u32> {
        if !self.contains(m) {
            return None;
        }
        let reach = self
            .elements
            .iter()
            .map(|&e| lat.dist(e, m))
            .max()
            .unwrap_or(0)
            + 1;
        lat.offsets_up_to(reach)
            .into_iter()
            .find(|&(_, d)| !self.contains(m + d))
            .map(|(n, _)| n)
    }

    /// Whether `f(Λ) = Λ`.
    pub fn is_invariant(&self, f: impl Fn(i64) -> i64) -> bool {
        self.elements.iter().all(|&e| self.contains(f(e)))
    }

    /// Canonical representatives, for export.
    pub fn representatives(&self, lat: &Lattice) -> Vec<Vec<i64>> {
        self.elements.iter().map(|&l| lat.element(l).rep).collect()
    }

    pub fn to_json(&self, lat: &Lattice) -> serde_json::Value {
        serde_json::json!({
            "scale": self.label.scale,
            "center": lat.element(self.label.center).rep,
            "kind": self.label.kind,
            "elements": self.representatives(lat),
        })
    }
}

fn intersects(a: &LabelSet, b: &LabelSet) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().any(|x| large.contains(x))
}

/// `a` and `b` meet and `a ⊄ b`.
fn straddles(a: &LabelSet, b: &LabelSet) -> bool {
    let inside = a.iter().filter(|x| b.contains(x)).count();
    inside > 0 && inside < a.len()
}

/// `dist(A, B)` by exhaustive pairing.
pub fn set_distance(lat: &Lattice, a: &LabelSet, b: &LabelSet) -> u32 {
    let mut best = u32::MAX;
    for &x in a {
        for &y in b {
            best = best.min(lat.dist(x, y));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

/// First pair of indices whose sets intersect.
pub fn first_overlap(sets: &[&LabelSet]) -> Option<(usize, usize)> {
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if intersects(sets[i], sets[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Threshold on `|v(m,k) − v(0,k)|` defining `ℳ⁽ᵗ⁾_{k,s−1}`; negative means
/// the set is empty.
pub fn level_threshold(schedule: &ScaleSchedule, t: usize, s: usize) -> f64 {
    assert!(t >= 1 && t < s, "level {t} is not below scale {s}");
    let tail: f64 = (t + 1..s).map(|u| schedule.delta(u - 1)).sum();
    if s == 2 {
        schedule.delta_base() / 16.0
    } else if t == s - 1 {
        0.75 * schedule.delta(s - 2)
    } else if t == 1 {
        schedule.delta(0) / 16.0 - tail
    } else {
        0.75 * schedule.delta(t - 1) - tail
    }
}

/// Largest half-width of any `(k⁻_{m,s}, k⁺_{m,s})`.
fn widest_window(schedule: &ScaleSchedule, s: usize) -> f64 {
    let w = schedule.window;
    let pad: f64 = (0..s).map(|r| (0.5 * schedule.log_delta(r)).exp()).sum();
    w.sigma_const * (w.sigma_exp * schedule.log_delta(0)).exp() + w.inflate_const * pad
}

/// Checks `k ∉ (k⁻_{m',s−1}, k⁺_{m',s−1})` for `0 < |m'| ≤ 12R⁽ˢ⁾`,
/// skipping `skip`.
pub fn check_nonresonant(
    k: f64,
    s: usize,
    schedule: &ScaleSchedule,
    lat: &Lattice,
    skip: Option<i64>,
) -> Result<(), DomainError> {
    let unit = lat.xi_f64(1);
    let reach = 2.0 * widest_window(schedule, s - 1);
    let lo = ((-2.0 * k - reach) / unit).floor() as i64;
    let hi = ((-2.0 * k + reach) / unit).ceil() as i64;
    let r12 = 12.0 * schedule.r(s);
    for label in lo.min(hi)..=lo.max(hi) {
        if label == 0 || Some(label) == skip {
            continue;
        }
        if f64::from(lat.norm_of_label(label)) > r12 {
            continue;
        }
        if let Some((a, b)) = schedule.kpm(lat, label, s - 1) {
            if a < k && k < b {
                return Err(DomainError::ExcludedK { k, label, lo: a, hi: b });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSet {
    pub level: usize,
    pub center: i64,
    pub domain: Domain,
}

/// `ℳ⁽ᵗ⁾_{k,s−1}` for `t < s`, the translated sets `Λ⁽ᵗ⁾_k(m)`, and
/// `Λ⁽ˢ⁾_k(0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSets {
    pub k: f64,
    pub s: usize,
    /// Second resonant point when the centers were collected around
    /// `B(3R⁽ˢ⁾) ∪ T(B(3R⁽ˢ⁾))`.
    pub n0: Option<i64>,
    /// `centers[t − 1] = ℳ⁽ᵗ⁾_{k,s−1}`.
    pub centers: Vec<Vec<i64>>,
    pub sets: Vec<LevelSet>,
    /// Indices into `sets` subtracted from `B(3R⁽ˢ⁾)`.
    pub removed: Vec<usize>,
    pub domain: Domain,
}

impl LevelSets {
    pub fn nesting_audit(&self) -> NestingReport {
        let mut all: Vec<&Domain> = self.sets.iter().map(|l| &l.domain).collect();
        all.push(&self.domain);
        nesting_audit(&all)
    }

    /// Pieces of `Λ⁽ˢ⁾_k(0)`: the sets contained in it, plus the remainder.
    pub fn partition(&self) -> (Vec<&LevelSet>, LabelSet) {
        let mut inside: Vec<&LevelSet> = Vec::new();
        let mut rest = self.domain.elements.clone();
        for l in &self.sets {
            if l.domain.elements.is_subset(&self.domain.elements)
                && l.domain.elements.is_subset(&rest)
            {
                for e in &l.domain.elements {
                    rest.remove(e);
                }
                inside.push(l);
            }
        }
        (inside, rest)
    }
}

/// Per-`k` recursive builder with a memo keyed by `(level, center)`.
pub struct DomainBuilder<'a> {
    lat: &'a Lattice,
    schedule: &'a ScaleSchedule,
    k: f64,
    scale: f64,
    offsets: Vec<(u32, i64)>,
    memo: HashMap<(usize, i64), Rc<LabelSet>>,
}

impl<'a> DomainBuilder<'a> {
    /// `scale` is the diagonal factor in `v(m,k) = scale·(ξ(m)+k)²`.
    pub fn new(lat: &'a Lattice, schedule: &'a ScaleSchedule, k: f64, scale: f64) -> Self {
        Self {
            lat,
            schedule,
            k,
            scale,
            offsets: Vec::new(),
            memo: HashMap::new(),
        }
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    fn ensure_offsets(&mut self, r: u32) {
        let have = self.offsets.last().map_or(0, |o| o.0);
        if self.offsets.is_empty() || have < r {
            self.offsets = self.lat.offsets_up_to(r);
        }
    }

    fn ball(&mut self, center: i64, radius: f64) -> LabelSet {
        let r = radius.max(0.0).floor() as u32;
        self.ensure_offsets(r);
        self.offsets
            .iter()
            .take_while(|o| o.0 <= r)
            .map(|&(_, d)| center + d)
            .collect()
    }

    /// `v(m,k) − v(c,k)`, i.e. `v(m−c, k+ξ(c)) − v(0, k+ξ(c))`.
    pub fn v_diff(&self, m: i64, c: i64) -> f64 {
        let x = self.lat.xi_f64(m - c);
        let kc = self.k + self.lat.xi_f64(c);
        self.scale * x * (x + 2.0 * kc)
    }

    /// `c + Λ⁽ˢ⁾_{k+ξ(c)}(0)` in absolute labels.
    pub fn lambda(&mut self, s: usize, c: i64) -> Rc<LabelSet> {
        if let Some(v) = self.memo.get(&(s, c)) {
            return v.clone();
        }
        let set = if s == 1 {
            self.ball(c, 2.0 * self.schedule.r(1))
        } else {
            let centers = self.centers(s, c, 0.0);
            let mut ball = self.ball(c, 3.0 * self.schedule.r(s));
            let mut drop = Vec::new();
            for (t, ms) in centers.iter().enumerate() {
                for &m in ms {
                    let sub = self.lambda(t + 1, m);
                    if straddles(&sub, &ball) {
                        drop.push(sub);
                    }
                }
            }
            for sub in drop {
                for e in sub.iter() {
                    ball.remove(e);
                }
            }
            ball
        };
        let rc = Rc::new(set);
        self.memo.insert((s, c), rc.clone());
        rc
    }

    /// `ℳ⁽ᵗ⁾_{k+ξ(c),s−1}` translated by `c`, for `t = 1..s−1`, collected
    /// within reach of `c + B(3R⁽ˢ⁾ + extra)`; assignment is top-down.
    pub fn centers(&mut self, s: usize, c: i64, extra: f64) -> Vec<Vec<i64>> {
        let sch = self.schedule;
        let mut out = vec![Vec::new(); s - 1];
        let mut claimed: Vec<Rc<LabelSet>> = Vec::new();
        for t in (1..s).rev() {
            let thr = level_threshold(sch, t, s);
            if thr < 0.0 {
                continue;
            }
            let reach: f64 = 3.0 * sch.r(s) + extra + (1..=t).map(|u| 3.0 * sch.r(u)).sum::<f64>();
            let cand: Vec<i64> = self.ball(c, reach).into_iter().collect();
            let mut level = Vec::new();
            for m in cand {
                if self.v_diff(m, c).abs() > thr {
                    continue;
                }
                if claimed.iter().any(|set| set.contains(&m)) {
                    continue;
                }
                level.push(m);
            }
            for &m in &level {
                let set = self.lambda(t, m);
                claimed.push(set);
            }
            out[t - 1] = level;
        }
        out
    }
}

/// Builds `ℳ⁽ᵗ⁾_{k,s−1}`, `Λ⁽ᵗ⁾_k(m)` and `Λ⁽ˢ⁾_k(0)`.
///
/// Fails with [`DomainError::ExcludedK`] when `k` lies in a resonance window
/// of some `0 < |m'| ≤ 12R⁽ˢ⁾`; such `k` belong to the resonant pipeline.
pub fn build_level_sets(
    k: f64,
    s: usize,
    schedule: &ScaleSchedule,
    lat: &Lattice,
    scale: f64,
) -> Result<LevelSets, DomainError> {
    build_level_sets_with(k, s, schedule, lat, scale, None)
}

/// As [`build_level_sets`], with an optional resonant partner `n0` whose
/// window is tolerated and whose reflected ball is covered by the centers.
pub fn build_level_sets_with(
    k: f64,
    s: usize,
    schedule: &ScaleSchedule,
    lat: &Lattice,
    scale: f64,
    n0: Option<i64>,
) -> Result<LevelSets, DomainError> {
    if s == 0 || s > schedule.s_max {
        return Err(DomainError::DepthExceeded {
            s,
            s_max: schedule.s_max,
        });
    }
    check_nonresonant(k, s, schedule, lat, n0)?;
    let mut b = DomainBuilder::new(lat, schedule, k, scale);
    let extra = n0.map_or(0.0, |n| f64::from(lat.norm_of_label(n)));
    let centers = if s == 1 { Vec::new() } else { b.centers(s, 0, extra) };
    let ball = b.ball(0, 3.0 * schedule.r(s));
    let mut sets = Vec::new();
    let mut removed = Vec::new();
    for (t, ms) in centers.iter().enumerate() {
        for &m in ms {
            let set = b.lambda(t + 1, m);
            if straddles(&set, &ball) {
                removed.push(sets.len());
            }
            sets.push(LevelSet {
                level: t + 1,
                center: m,
                domain: Domain::plain(t + 1, m, (*set).clone()),
            });
        }
    }
    let elements = (*b.lambda(s, 0)).clone();
    Ok(LevelSets {
        k,
        s,
        n0,
        centers,
        sets,
        removed,
        domain: Domain::plain(s, 0, elements),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestingViolation {
    pub lower: DomainLabel,
    pub higher: DomainLabel,
    pub shared: usize,
    pub outside: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NestingReport {
    pub checked: usize,
    pub violations: Vec<NestingViolation>,
}

impl NestingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every pair of differing scales, the lower set is either inside the
/// higher one or disjoint from it.
pub fn nesting_audit(sets: &[&Domain]) -> NestingReport {
    let mut report = NestingReport::default();
    for a in sets {
        for b in sets {
            if a.label.scale >= b.label.scale {
                continue;
            }
            report.checked += 1;
            let shared = a.elements.iter().filter(|x| b.elements.contains(x)).count();
            if shared > 0 && shared < a.len() {
                report.violations.push(NestingViolation {
                    lower: a.label,
                    higher: b.label,
                    shared,
                    outside: a.len() - shared,
                });
            }
        }
    }
    report
}

/// One member `Λ` of a subtraction system with its level `t(Λ)` and the
/// centers whose class it represents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSet {
    pub level: usize,
    pub centers: Vec<i64>,
    pub elements: LabelSet,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SubtractionSystem {
    pub sets: Vec<SystemSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProperReport {
    /// `R_a` per level, `None` when fewer than two sets share the level.
    pub separation: Vec<(usize, Option<u32>)>,
    pub failures: Vec<String>,
}

impl ProperReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl SubtractionSystem {
    pub fn new(sets: Vec<SystemSet>) -> Self {
        Self { sets }
    }

    /// Classes `Λ(𝔪) = ∪ (Λ(m) ∪ F(Λ(m)))` merged over `{m, F(m)}` at equal
    /// level, for an involution `F`.
    pub fn symmetric(members: &[(usize, i64, &LabelSet)], f: impl Fn(i64) -> i64) -> Self {
        let mut classes: Vec<SystemSet> = Vec::new();
        let mut index: HashMap<(usize, i64), usize> = HashMap::new();
        for &(level, m, set) in members {
            let key = (level, m.min(f(m)));
            let pos = *index.entry(key).or_insert_with(|| {
                classes.push(SystemSet {
                    level,
                    centers: Vec::new(),
                    elements: LabelSet::new(),
                });
                classes.len() - 1
            });
            let class = &mut classes[pos];
            if !class.centers.contains(&m) {
                class.centers.push(m);
            }
            for &e in set {
                class.elements.insert(e);
                class.elements.insert(f(e));
            }
        }
        Self { sets: classes }
    }

    fn levels(&self) -> BTreeSet<usize> {
        self.sets.iter().map(|s| s.level).collect()
    }

    fn separation(&self, lat: &Lattice, level: usize) -> Option<u32> {
        let same: Vec<&SystemSet> = self.sets.iter().filter(|s| s.level == level).collect();
        let mut best: Option<u32> = None;
        for i in 0..same.len() {
            for j in i + 1..same.len() {
                if same[i].elements == same[j].elements {
                    continue;
                }
                let d = set_distance(lat, &same[i].elements, &same[j].elements);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    fn diameter(lat: &Lattice, set: &LabelSet) -> u32 {
        let mut d = 0;
        for &x in set {
            for &y in set {
                if x < y {
                    d = d.max(lat.dist(x, y));
                }
            }
        }
        d
    }

    /// Conditions (i) and (ii) of a proper subtraction system.
    ///
    /// (ii) is certified conservatively: with a single piece when
    /// `diam Λ < 2^{−a}R_a` (or `R_a` is vacuous), else with singletons,
    /// which needs every set meeting `Λ` to contain it.
    pub fn check(&self, lat: &Lattice) -> ProperReport {
        let mut failures = Vec::new();
        let mut separation = Vec::new();
        let mut sep_of: HashMap<usize, Option<u32>> = HashMap::new();
        let max_level = self.levels().into_iter().max().unwrap_or(0);
        for level in 1..=max_level + 1 {
            let r = self.separation(lat, level);
            if let Some(0) = r {
                failures.push(format!("two distinct level-{level} sets touch"));
            }
            sep_of.insert(level, r);
            if self.sets.iter().any(|s| s.level == level) {
                separation.push((level, r));
            }
        }
        for (i, set) in self.sets.iter().enumerate() {
            let a = set.level + 1;
            let single = match sep_of.get(&a).copied().flatten() {
                None => true,
                Some(ra) => {
                    let bound = f64::from(ra) * 0.5f64.powi(a as i32);
                    f64::from(Self::diameter(lat, &set.elements)) < bound
                }
            };
            if single {
                continue;
            }
            let ok = self.sets.iter().enumerate().all(|(j, other)| {
                j == i
                    || !intersects(&set.elements, &other.elements)
                    || set.elements.is_subset(&other.elements)
            });
            if !ok {
                failures.push(format!(
                    "no admissible cover for the level-{} set at {:?}",
                    set.level, set.centers
                ));
            }
        }
        ProperReport {
            separation,
            failures,
        }
    }
}

/// Iterates `Λ_{0,ℓ} = Λ_{0,ℓ−1} ∖ ∪{Λ : Λ ⊄ Λ_{0,ℓ−1}}` to its fixed point
/// and returns it with `ℓ₀`.
pub fn subtract_stabilize(
    start: &LabelSet,
    system: &SubtractionSystem,
    lat: &Lattice,
) -> Result<(LabelSet, usize), DomainError> {
    let report = system.check(lat);
    if !report.passed() {
        return Err(DomainError::NotProper(report.failures.join("; ")));
    }
    Ok(stabilize_unchecked(start, system))
}

fn stabilize_unchecked(start: &LabelSet, system: &SubtractionSystem) -> (LabelSet, usize) {
    let mut cur = start.clone();
    let mut ell = 0;
    loop {
        let mut next = cur.clone();
        for set in &system.sets {
            if straddles(&set.elements, &cur) {
                for e in &set.elements {
                    next.remove(e);
                }
            }
        }
        if next == cur {
            return (cur, ell);
        }
        cur = next;
        ell += 1;
    }
}

fn members(sets: &LevelSets) -> Vec<(usize, i64, &LabelSet)> {
    sets.sets
        .iter()
        .map(|l| (l.level, l.center, &l.domain.elements))
        .collect()
}

fn bounded(ell0: usize, s: usize) -> Result<(), DomainError> {
    if s < usize::BITS as usize && ell0 >= 1usize << s {
        return Err(DomainError::StabilizationBound { ell0, s });
    }
    Ok(())
}

/// `Λ⁽ˢ⁾_{k,sym}(0)`: stabilized subtraction of `𝒮`-classes from `B(3R⁽ˢ⁾)`.
pub fn symmetrize_s(
    sets: &LevelSets,
    schedule: &ScaleSchedule,
    lat: &Lattice,
) -> Result<Domain, DomainError> {
    let s = sets.s;
    if s >= 2 {
        let bound = schedule.delta(s - 2);
        if sets.k.abs() >= bound {
            return Err(DomainError::NotSmallK { k: sets.k, bound });
        }
    }
    let start: LabelSet = lat.ball_labels(3.0 * schedule.r(s)).into_iter().collect();
    let system = SubtractionSystem::symmetric(&members(sets), |m| -m);
    let domain = symmetrize_with(&start, &system, lat, s, 0, DomainKind::Sym)?;
    Ok(domain)
}

/// `Λ⁽ˢ'¹⁾_k(0)`: stabilized subtraction of `T`-classes, `T(n) = n₀ − n`,
/// from `B(3R⁽ˢ⁾) ∪ T(B(3R⁽ˢ⁾))`.
pub fn symmetrize_t(
    sets: &LevelSets,
    n0: i64,
    schedule: &ScaleSchedule,
    lat: &Lattice,
) -> Result<Domain, DomainError> {
    let s = sets.s;
    let norm = f64::from(lat.norm_of_label(n0));
    let sigma = schedule.sigma(norm).unwrap_or(f64::INFINITY);
    let kn0 = -lat.xi_f64(n0) / 2.0;
    let (lo, hi) = (kn0 - 2.0 * sigma, kn0 + 2.0 * sigma);
    if !(lo < sets.k && sets.k < hi) {
        return Err(DomainError::NotResonant {
            k: sets.k,
            n0,
            lo,
            hi,
        });
    }
    let ball = lat.ball_labels(3.0 * schedule.r(s));
    let start: LabelSet = ball.iter().flat_map(|&b| [b, n0 - b]).collect();
    let system = SubtractionSystem::symmetric(&members(sets), |m| n0 - m);
    symmetrize_with(&start, &system, lat, s, n0, DomainKind::TSym)
}

/// Shared tail of the symmetrizations for an explicit start and system.
pub fn symmetrize_with(
    start: &LabelSet,
    system: &SubtractionSystem,
    lat: &Lattice,
    s: usize,
    center: i64,
    kind: DomainKind,
) -> Result<Domain, DomainError> {
    let (elements, ell0) = subtract_stabilize(start, system, lat)?;
    bounded(ell0, s)?;
    Ok(Domain::new(DomainLabel { scale: s, center, kind }, elements))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationViolation {
    pub level: usize,
    pub first: Vec<i64>,
    pub second: Vec<i64>,
    pub distance: u32,
    pub required: f64,
}

/// Distinct same-level classes must be more than `6R⁽ᵗ⁾` apart.
pub fn separation_audit(
    system: &SubtractionSystem,
    schedule: &ScaleSchedule,
    lat: &Lattice,
) -> Vec<SeparationViolation> {
    let mut out = Vec::new();
    for i in 0..system.sets.len() {
        for j in i + 1..system.sets.len() {
            let (a, b) = (&system.sets[i], &system.sets[j]);
            if a.level != b.level {
                continue;
            }
            let required = 6.0 * schedule.r(a.level);
            let d = set_distance(lat, &a.elements, &b.elements);
            if f64::from(d) <= required {
                out.push(SeparationViolation {
                    level: a.level,
                    first: a.centers.clone(),
                    second: b.centers.clone(),
                    distance: d,
                    required,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::TWO_PI_SQ;
    use crate::scales::ScheduleConfig;
    use proptest::prelude::*;

    fn set(items: impl IntoIterator<Item = i64>) -> LabelSet {
        items.into_iter().collect()
    }

    fn ints() -> Lattice {
        Lattice::from_strs(&["1"]).unwrap()
    }

    fn practical(s_max: usize) -> ScaleSchedule {
        ScaleSchedule::build(&ScheduleConfig::practical(0.5, 2.5, s_max)).unwrap()
    }

    #[test]
    fn first_scale_is_the_double_ball() {
        let lat = ints();
        let sch = practical(2);
        let ls = build_level_sets(0.3, 1, &sch, &lat, TWO_PI_SQ).unwrap();
        let r = (2.0 * sch.r(1)).floor() as i64;
        assert_eq!(ls.domain.elements, set(-r..=r));
        assert!(ls.sets.is_empty());
    }

    #[test]
    fn nothing_to_subtract_leaves_the_ball() {
        // On ℤ with ξ(m) = m, only m = 0 is within δ₀/16 of v(0, k).
        let lat = ints();
        let sch = practical(2);
        let ls = build_level_sets(0.3, 2, &sch, &lat, TWO_PI_SQ).unwrap();
        let r = (3.0 * sch.r(2)).floor() as i64;
        assert_eq!(ls.centers, vec![vec![0]]);
        assert!(ls.removed.is_empty());
        assert_eq!(ls.domain.elements, set(-r..=r));
    }

    #[test]
    fn thresholds_agree_with_scalar_evaluation() {
        let lat = Lattice::from_strs(&["1/7"]).unwrap();
        let sch = practical(2);
        let k = 0.013;
        let scale = 1e-3;
        let ls = build_level_sets(k, 2, &sch, &lat, scale).unwrap();
        let thr = sch.delta_base() / 16.0;
        let got: BTreeSet<i64> = ls.centers[0].iter().copied().collect();
        for m in lat.ball_labels(3.0 * sch.r(2)) {
            let xi = lat.xi_of_label(m);
            let x = (*xi.numer() as f64) / (*xi.denom() as f64);
            let dv = scale * ((x + k).powi(2) - k * k);
            assert_eq!(dv.abs() <= thr, got.contains(&m), "m = {m}, dv = {dv}");
        }
        assert!(got.len() > 1);
    }

    #[test]
    fn level_thresholds_follow_the_schedule() {
        let sch = practical(3);
        assert_eq!(level_threshold(&sch, 1, 2), sch.delta_base() / 16.0);
        assert_eq!(level_threshold(&sch, 2, 3), 0.75 * sch.delta(1));
        let want = sch.delta(0) / 16.0 - sch.delta(1);
        assert!((level_threshold(&sch, 1, 3) - want).abs() < 1e-18);
    }

    #[test]
    fn excluded_k_is_reported() {
        let lat = ints();
        let sch = practical(2);
        // k_m = −m/2 puts k = 1/2 at the center of the window of m = −1.
        match build_level_sets(0.5, 2, &sch, &lat, TWO_PI_SQ) {
            Err(DomainError::ExcludedK { label, lo, hi, .. }) => {
                assert_eq!(label, -1);
                assert!(lo < 0.5 && 0.5 < hi);
            }
            other => panic!("expected ExcludedK, got {other:?}"),
        }
        assert!(build_level_sets_with(0.5, 2, &sch, &lat, TWO_PI_SQ, Some(-1)).is_ok());
    }

    #[test]
    fn depth_is_capped() {
        let lat = ints();
        let sch = practical(2);
        assert!(matches!(
            build_level_sets(0.3, 3, &sch, &lat, TWO_PI_SQ),
            Err(DomainError::DepthExceeded { .. })
        ));
    }

    #[test]
    fn resonant_lattice_subtracts_straddling_sets() {
        let lat = Lattice::from_strs(&["1/7"]).unwrap();
        let sch = practical(2);
        let ls = build_level_sets(0.013, 2, &sch, &lat, 1e-4).unwrap();
        assert!(!ls.removed.is_empty());
        let ball: LabelSet = lat.ball_labels(3.0 * sch.r(2)).into_iter().collect();
        for (i, l) in ls.sets.iter().enumerate() {
            let e = &l.domain.elements;
            let straddling = straddles(e, &ball);
            assert_eq!(straddling, ls.removed.contains(&i));
            if straddling {
                assert!(!intersects(e, &ls.domain.elements));
            }
        }
        assert!(ls.domain.elements.is_subset(&ball));
    }

    #[test]
    fn recursion_reuses_translated_sets() {
        let lat = ints();
        let sch = practical(3);
        let mut b = DomainBuilder::new(&lat, &sch, 0.21, TWO_PI_SQ);
        let first = b.lambda(3, 0);
        let n = b.memo_len();
        let again = b.lambda(3, 0);
        assert_eq!(first, again);
        assert_eq!(n, b.memo_len());
    }

    #[test]
    fn translated_sets_match_shifted_k() {
        // Λ⁽ˢ⁾_k(m) = m + Λ⁽ˢ⁾_{k+ξ(m)}(0).
        let lat = ints();
        let sch = practical(2);
        let mut a = DomainBuilder::new(&lat, &sch, 0.21, TWO_PI_SQ);
        let shifted = a.lambda(2, 3);
        let mut b = DomainBuilder::new(&lat, &sch, 3.21, TWO_PI_SQ);
        let base = b.lambda(2, 0);
        let moved: LabelSet = base.iter().map(|x| x + 3).collect();
        assert_eq!(*shifted, moved);
    }

    #[test]
    fn nesting_of_disjoint_balls_passes() {
        let a = Domain::plain(1, 0, set(-2..=2));
        let b = Domain::plain(2, 10, set(8..=12));
        let r = nesting_audit(&[&a, &b]);
        assert!(r.passed());
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn overlapping_pair_is_reported() {
        let a = Domain::plain(1, 3, set(1..=5));
        let b = Domain::plain(2, 0, set(-3..=3));
        let r = nesting_audit(&[&a, &b]);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].shared, 3);
        assert_eq!(r.violations[0].outside, 2);
    }

    #[test]
    fn built_sets_nest_on_a_nonresonant_lattice() {
        let lat = ints();
        let sch = practical(3);
        let ls = build_level_sets(0.21, 3, &sch, &lat, TWO_PI_SQ).unwrap();
        let report = ls.nesting_audit();
        assert!(report.passed(), "{:?}", report.violations);
        let r = sch.r(3);
        let inner: LabelSet = lat.ball_labels(r).into_iter().collect();
        assert!(inner.is_subset(&ls.domain.elements));
    }

    #[test]
    fn dense_resonances_nest() {
        let lat = Lattice::from_strs(&["1/7"]).unwrap();
        let sch = practical(2);
        let ls = build_level_sets(0.013, 2, &sch, &lat, 1.0).unwrap();
        assert!(ls.centers[0].len() > 1);
        assert!(ls.nesting_audit().passed());
    }

    #[test]
    fn empty_system_is_a_fixed_point() {
        let start = set(-3..=3);
        let (out, ell0) = subtract_stabilize(&start, &SubtractionSystem::default(), &ints()).unwrap();
        assert_eq!(out, start);
        assert_eq!(ell0, 0);
    }

    #[test]
    fn contained_set_is_kept() {
        let start = set(-5..=5);
        let sys = SubtractionSystem::new(vec![SystemSet {
            level: 1,
            centers: vec![1],
            elements: set(0..=2),
        }]);
        let (out, ell0) = subtract_stabilize(&start, &sys, &ints()).unwrap();
        assert_eq!(out, start);
        assert_eq!(ell0, 0);
    }

    #[test]
    fn straddling_set_is_removed_once() {
        let start = set(-5..=5);
        let sys = SubtractionSystem::new(vec![
            SystemSet {
                level: 1,
                centers: vec![5],
                elements: set(4..=7),
            },
            SystemSet {
                level: 1,
                centers: vec![-1],
                elements: set(-2..=0),
            },
        ]);
        let (out, ell0) = subtract_stabilize(&start, &sys, &ints()).unwrap();
        assert_eq!(out, set(-5..=3));
        assert_eq!(ell0, 1);
        for s in &sys.sets {
            assert!(!straddles(&s.elements, &out));
        }
    }

    #[test]
    fn cascading_removal_needs_two_steps() {
        // Removing the level-2 set exposes the level-1 set it overlapped.
        let start = set(-10..=10);
        let sys = SubtractionSystem::new(vec![
            SystemSet {
                level: 2,
                centers: vec![10],
                elements: set(7..=13),
            },
            SystemSet {
                level: 1,
                centers: vec![6],
                elements: set(6..=7),
            },
        ]);
        let (out, ell0) = subtract_stabilize(&start, &sys, &ints()).unwrap();
        assert_eq!(out, set(-10..=5));
        assert_eq!(ell0, 2);
    }

    #[test]
    fn touching_same_level_sets_are_not_proper() {
        let sys = SubtractionSystem::new(vec![
            SystemSet {
                level: 1,
                centers: vec![0],
                elements: set(0..=2),
            },
            SystemSet {
                level: 1,
                centers: vec![3],
                elements: set(2..=4),
            },
        ]);
        assert!(matches!(
            subtract_stabilize(&set(0..=1), &sys, &ints()),
            Err(DomainError::NotProper(_))
        ));
    }

    #[test]
    fn s_symmetrization_removes_mirror_pairs() {
        let lat = ints();
        let sets = [(1usize, 6i64, set(5..=8))];
        let members: Vec<(usize, i64, &LabelSet)> = sets.iter().map(|(l, m, s)| (*l, *m, s)).collect();
        let sys = SubtractionSystem::symmetric(&members, |m| -m);
        assert_eq!(sys.sets.len(), 1);
        let d = symmetrize_with(&set(-6..=6), &sys, &lat, 2, 0, DomainKind::Sym).unwrap();
        assert_eq!(d.elements, set(-4..=4));
        assert!(d.is_invariant(|m| -m));
    }

    #[test]
    fn s_classes_merge_mirror_centers() {
        let a = set(5..=7);
        let b = set(-7..=-5);
        let sys = SubtractionSystem::symmetric(&[(1, 6, &a), (1, -6, &b), (2, 6, &a)], |m| -m);
        assert_eq!(sys.sets.len(), 2);
        assert_eq!(sys.sets[0].centers, vec![6, -6]);
        assert_eq!(sys.sets[0].elements, a.union(&b).copied().collect());
    }

    #[test]
    fn t_symmetrization_with_fixed_center() {
        // n₀ = 4, start [−3, 7]; the set at the T-fixed point m = 2 straddles.
        let lat = ints();
        let n0 = 4;
        let start: LabelSet = (-3..=3).flat_map(|b| [b, n0 - b]).collect();
        assert_eq!(start, set(-3..=7));
        let lower = set([2, 9]);
        let sys = SubtractionSystem::symmetric(&[(1, 2, &lower)], |m| n0 - m);
        let d = symmetrize_with(&start, &sys, &lat, 2, n0, DomainKind::TSym).unwrap();
        let mut want = set(-3..=7);
        want.remove(&2);
        assert_eq!(d.elements, want);
        assert!(d.is_invariant(|m| n0 - m));
    }

    #[test]
    fn symmetrize_s_on_built_sets() {
        let lat = ints();
        let sch = practical(2);
        let ls = build_level_sets(0.001, 2, &sch, &lat, TWO_PI_SQ).unwrap();
        let d = symmetrize_s(&ls, &sch, &lat).unwrap();
        assert!(d.is_invariant(|m| -m));
        let r = (3.0 * sch.r(2)).floor() as i64;
        assert_eq!(d.elements, set(-r..=r));
        let far = build_level_sets(0.3, 2, &sch, &lat, TWO_PI_SQ).unwrap();
        assert!(matches!(symmetrize_s(&far, &sch, &lat), Err(DomainError::NotSmallK { .. })));
    }

    #[test]
    fn symmetrize_t_on_built_sets() {
        let lat = ints();
        let sch = practical(2);
        let n0 = -1;
        let k = 0.5 + 1e-4;
        let ls = build_level_sets_with(k, 2, &sch, &lat, TWO_PI_SQ, Some(n0)).unwrap();
        let d = symmetrize_t(&ls, n0, &sch, &lat).unwrap();
        assert!(d.is_invariant(|m| n0 - m));
        let r = sch.r(2);
        for b in lat.ball_labels(r) {
            assert!(d.contains(b) && d.contains(n0 + b));
        }
        assert!(symmetrize_t(&ls, 3, &sch, &lat).is_err());
    }

    #[test]
    fn boundary_distance_on_an_interval() {
        let lat = ints();
        let d = Domain::plain(1, 0, set(-3..=5));
        assert_eq!(d.boundary_distance(&lat, 0), Some(4));
        assert_eq!(d.boundary_distance(&lat, 5), Some(1));
        assert_eq!(d.boundary_distance(&lat, 6), None);
    }

    #[test]
    fn json_export_lists_representatives() {
        let lat = ints();
        let d = Domain::plain(1, 0, set(-1..=1));
        let v = d.to_json(&lat);
        assert_eq!(v["elements"], serde_json::json!([[-1], [0], [1]]));
    }

    proptest! {
        #[test]
        fn stabilized_sets_respect_every_member(
            raw in prop::collection::vec((1usize..3, -20i64..20, 0i64..4), 0..6),
        ) {
            let mut sets: Vec<SystemSet> = Vec::new();
            for (level, c, w) in raw {
                let el = set(c - w..=c + w);
                let clash = sets.iter().any(|s| s.level == level && intersects(&s.elements, &el));
                if !clash {
                    sets.push(SystemSet { level, centers: vec![c], elements: el });
                }
            }
            let sys = SubtractionSystem::new(sets);
            let start = set(-10..=10);
            let (out, ell0) = stabilize_unchecked(&start, &sys);
            prop_assert!(ell0 <= sys.sets.len());
            for s in &sys.sets {
                prop_assert!(!straddles(&s.elements, &out));
            }
            prop_assert!(out.is_subset(&start));
        }

        #[test]
        fn symmetric_start_and_system_give_symmetric_result(
            raw in prop::collection::vec((-15i64..15, 0i64..3), 0..5),
        ) {
            let pieces: Vec<(usize, i64, LabelSet)> =
                raw.iter().map(|&(c, w)| (1usize, c, set(c - w..=c + w))).collect();
            let members: Vec<(usize, i64, &LabelSet)> =
                pieces.iter().map(|(l, m, s)| (*l, *m, s)).collect();
            let sys = SubtractionSystem::symmetric(&members, |m| -m);
            let (out, _) = stabilize_unchecked(&set(-8..=8), &sys);
            prop_assert!(out.iter().all(|x| out.contains(&-x)));
        }
    }
}
