//! Excursion counts between nested sets and special-vertex classification.
//!
//! An excursion is counted each time the walk enters the inner set after
//! having visited the outer set since its last inner visit. The start
//! position counts as a visit, so a walk started in the outer set that
//! goes straight to the inner set has made one excursion; a walk started in
//! the inner set has to reach the outer set first.
//!
//! On trees the inner set is a vertex `w` and the outer set its ancestor `v`
//! at distance `ell`. On the torus the inner set is the closed disc
//! `D(x, r)` and the outer set is reached once the walk is at distance at
//! least `R` from `x`.

use crate::error::{LabError, PartialWalk, Result};
use crate::graph_models::{DiscSpec, TorusTopology, TreeTopology};
use crate::walker::TreeWalker;

/// Inner/outer pair between which excursions are counted.
pub trait NestedPair<P> {
    fn in_inner(&self, p: &P) -> bool;
    fn in_outer(&self, p: &P) -> bool;
    /// Sites counted by [`StopRule::AnchorVisits`].
    fn is_anchor(&self, _p: &P) -> bool {
        false
    }
}

/// Tree excursions from a vertex up to its ancestor and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeExcursionSpec {
    inner: usize,
    outer: usize,
    ell: u32,
}

impl TreeExcursionSpec {
    pub fn new(tree: &TreeTopology, inner: usize, outer: usize) -> Result<Self> {
        let n = tree.vertex_count();
        if inner >= n || outer >= n {
            return Err(LabError::usage("excursion vertex out of range"));
        }
        let (li, lo) = (tree.level(inner), tree.level(outer));
        if li <= lo || !tree.is_ancestor(outer, inner) {
            return Err(LabError::usage(format!(
                "vertex {outer} is not a strict ancestor of {inner}"
            )));
        }
        Ok(TreeExcursionSpec { inner, outer, ell: li - lo })
    }

    /// Pairs `inner` with its ancestor `ell` levels up.
    pub fn with_spacing(tree: &TreeTopology, inner: usize, ell: u32) -> Result<Self> {
        if ell == 0 {
            return Err(LabError::usage("level spacing ell must be >= 1"));
        }
        let outer = tree
            .ancestor(inner, ell)
            .ok_or_else(|| LabError::usage(format!("vertex {inner} has no ancestor at distance {ell}")))?;
        Self::new(tree, inner, outer)
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    pub fn outer(&self) -> usize {
        self.outer
    }

    pub fn spacing(&self) -> u32 {
        self.ell
    }
}

impl NestedPair<usize> for TreeExcursionSpec {
    fn in_inner(&self, p: &usize) -> bool {
        *p == self.inner
    }

    fn in_outer(&self, p: &usize) -> bool {
        *p == self.outer
    }

    fn is_anchor(&self, p: &usize) -> bool {
        *p == TreeTopology::ROOT
    }
}

/// Concentric disc pair on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscExcursionSpec {
    torus: TorusTopology,
    inner: DiscSpec,
    outer: DiscSpec,
}

impl DiscExcursionSpec {
    pub fn new(torus: TorusTopology, inner: DiscSpec, outer: DiscSpec) -> Result<Self> {
        if inner.center != outer.center {
            return Err(LabError::usage("excursion discs must share their centre"));
        }
        if inner.radius >= outer.radius {
            return Err(LabError::usage(format!(
                "inner radius {} must be below outer radius {}",
                inner.radius, outer.radius
            )));
        }
        Ok(DiscExcursionSpec { torus, inner, outer })
    }
}

impl NestedPair<(i64, i64)> for DiscExcursionSpec {
    fn in_inner(&self, p: &(i64, i64)) -> bool {
        self.inner.contains_on_torus(&self.torus, *p)
    }

    fn in_outer(&self, p: &(i64, i64)) -> bool {
        let (dx, dy) = self.torus.displacement(self.outer.center, *p);
        ((dx * dx + dy * dy) as f64) >= self.outer.radius * self.outer.radius
    }
}

/// When to stop counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Positions at times `0..=n`.
    Steps(u64),
    /// Up to and including the `m`-th anchor visit at a time `>= 1`.
    AnchorVisits(u64),
}

impl StopRule {
    /// `T_lambda`: the time of the `ceil(lambda b k^2)`-th root visit.
    pub fn t_lambda(lambda: f64, b: u32, k: u32) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(LabError::usage(format!("lambda must be positive, got {lambda}")));
        }
        Ok(StopRule::AnchorVisits(root_visit_target(lambda, b, k)))
    }
}

/// `ceil(lambda b k^2)`.
pub fn root_visit_target(lambda: f64, b: u32, k: u32) -> u64 {
    (lambda * b as f64 * (k as f64).powi(2)).ceil() as u64
}

/// Streaming excursion counter for one nested pair.
#[derive(Debug, Clone, Default)]
pub struct ExcursionCounter {
    armed: bool,
    count: u64,
}

impl ExcursionCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn observe<P, S: NestedPair<P>>(&mut self, spec: &S, p: &P) {
        if spec.in_inner(p) {
            if self.armed {
                self.count += 1;
                self.armed = false;
            }
        } else if spec.in_outer(p) {
            self.armed = true;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Folds the stopping rule over a position stream, calling `visit` on every
/// position up to and including the stopping time. Returns the stopping time.
fn drive<P, I, F>(source: I, until: StopRule, is_anchor: impl Fn(&P) -> bool, mut visit: F) -> Result<u64>
where
    I: IntoIterator<Item = P>,
    F: FnMut(u64, &P),
{
    let mut anchors = 0u64;
    let mut last = None;
    for (t, p) in source.into_iter().enumerate() {
        let t = t as u64;
        visit(t, &p);
        last = Some(t);
        match until {
            StopRule::Steps(n) if t == n => return Ok(t),
            StopRule::AnchorVisits(m) if t > 0 && is_anchor(&p) => {
                anchors += 1;
                if anchors == m {
                    return Ok(t);
                }
            }
            _ => {}
        }
    }
    let steps = last.unwrap_or(0);
    Err(LabError::CapExceeded {
        cap: steps,
        partial: PartialWalk { steps, returns_to_root: anchors, ..PartialWalk::default() },
    })
}

/// Number of excursions in `source` (positions at times 0, 1, 2, ...) until
/// the stopping rule fires.
pub fn count_excursions<P, S, I>(source: I, spec: &S, until: StopRule) -> Result<u64>
where
    S: NestedPair<P>,
    I: IntoIterator<Item = P>,
{
    if let StopRule::AnchorVisits(0) = until {
        return Err(LabError::usage("anchor visit target must be positive"));
    }
    let mut counter = ExcursionCounter::new();
    drive(source, until, |p| spec.is_anchor(p), |_, p| counter.observe(spec, p))?;
    Ok(counter.count())
}

/// Parameters of the special-vertex classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialVertexConfig {
    pub lambda: f64,
    pub r: f64,
    pub ell: u32,
    pub b: u32,
    pub k: u32,
}

impl SpecialVertexConfig {
    pub fn validate(&self) -> Result<TreeTopology> {
        let tree = TreeTopology::new(self.b, self.k)?;
        let log_b = (self.b as f64).ln();
        if !(self.lambda > 0.0 && self.lambda < self.r && self.r < log_b) {
            return Err(LabError::usage(format!(
                "need 0 < lambda < r < ln b, got lambda={}, r={}, ln b={log_b}",
                self.lambda, self.r
            )));
        }
        if self.ell == 0 || self.k <= 2 * self.ell {
            return Err(LabError::usage(format!(
                "need ell >= 1 and k > 2 ell, got ell={}, k={}",
                self.ell, self.k
            )));
        }
        Ok(tree)
    }

    /// Root visits defining `T_lambda`.
    pub fn root_visits(&self) -> u64 {
        root_visit_target(self.lambda, self.b, self.k)
    }

    /// Special-vertex threshold `r ell j^2`.
    pub fn threshold(&self, j: u32) -> f64 {
        self.r * self.ell as f64 * (j as f64).powi(2)
    }

    /// Number of classified levels: `j` with `k - (j+1) ell >= 0`.
    pub fn level_count(&self) -> u32 {
        self.k / self.ell
    }
}

/// One classified level `k - j ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialLevel {
    pub j: u32,
    pub level: u32,
    pub threshold: f64,
    /// Excursion count of each vertex on the level, in index order.
    pub counts: Vec<u64>,
    /// Indices of the special vertices, ascending.
    pub special: Vec<usize>,
}

impl SpecialLevel {
    pub fn total(&self) -> usize {
        self.counts.len()
    }

    pub fn special_fraction(&self) -> f64 {
        self.special.len() as f64 / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecialClassification {
    /// Time `T_lambda` at which counting stopped.
    pub stop_time: u64,
    /// Ordered by increasing `j` (leaves first).
    pub levels: Vec<SpecialLevel>,
}

impl SpecialClassification {
    /// Recomputes the special sets for another threshold rate `r`.
    pub fn reclassify(&self, cfg: &SpecialVertexConfig) -> SpecialClassification {
        let levels = self
            .levels
            .iter()
            .map(|lvl| {
                let threshold = cfg.threshold(lvl.j);
                let first = level_first_index(cfg.b, lvl.level);
                SpecialLevel {
                    threshold,
                    special: special_indices(&lvl.counts, threshold, first),
                    ..lvl.clone()
                }
            })
            .collect();
        SpecialClassification { stop_time: self.stop_time, levels }
    }
}

fn level_first_index(b: u32, level: u32) -> usize {
    ((b as usize).pow(level) - 1) / (b as usize - 1)
}

fn special_indices(counts: &[u64], threshold: f64, first: usize) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as f64 <= threshold)
        .map(|(i, _)| first + i)
        .collect()
}

/// Classifies special vertices on the trajectory `source` of a root-started
/// tree walk, stopped at `T_lambda`.
///
/// For each `j` with `k - (j+1) ell >= 0`, every `w` on level `k - j ell` is
/// paired with its ancestor `v` on level `k - (j+1) ell`; `w` is special when
/// its excursion count by `T_lambda` is at most `r ell j^2`. All pairs are
/// counted in one pass: `w` is entered after an excursion iff `v` was seen
/// more recently than `w`.
pub fn classify_special<I>(cfg: &SpecialVertexConfig, source: I) -> Result<SpecialClassification>
where
    I: IntoIterator<Item = usize>,
{
    let tree = cfg.validate()?;
    let n = tree.vertex_count();
    let k = cfg.k;
    let ell = cfg.ell;
    let mut inner_level = vec![false; k as usize + 1];
    for j in 0..cfg.level_count() {
        inner_level[(k - j * ell) as usize] = true;
    }
    let mut last_seen = vec![-1i64; n];
    let mut counts = vec![0u64; n];
    let stop_time = drive(
        source,
        StopRule::AnchorVisits(cfg.root_visits()),
        |&p| p == TreeTopology::ROOT,
        |t, &p| {
            if inner_level[tree.level(p) as usize] {
                let v = tree.ancestor(p, ell).expect("inner levels lie at depth >= ell");
                if last_seen[v] > last_seen[p] {
                    counts[p] += 1;
                }
            }
            last_seen[p] = t as i64;
        },
    )?;

    let levels = (0..cfg.level_count())
        .map(|j| {
            let level = k - j * ell;
            let range = tree.level_range(level);
            let threshold = cfg.threshold(j);
            let level_counts = counts[range.clone()].to_vec();
            let special = special_indices(&level_counts, threshold, range.start);
            SpecialLevel { j, level, threshold, counts: level_counts, special }
        })
        .collect();
    Ok(SpecialClassification { stop_time, levels })
}

/// Runs a root-started walk on the tree of `cfg` and classifies it.
pub fn classify_special_walk(cfg: &SpecialVertexConfig, seed: u64, step_cap: u64) -> Result<SpecialClassification> {
    let tree = cfg.validate()?;
    classify_special(cfg, TreeWalker::new(&tree, TreeTopology::ROOT, seed).positions(step_cap))
}

/// Empirical race between a descendant and an ancestor of `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryEstimate {
    pub descendant_first: u64,
    pub ancestor_first: u64,
}

impl SymmetryEstimate {
    pub fn trials(&self) -> u64 {
        self.descendant_first + self.ancestor_first
    }

    pub fn descendant_frequency(&self) -> f64 {
        self.descendant_first as f64 / self.trials() as f64
    }

    pub fn ancestor_frequency(&self) -> f64 {
        self.ancestor_first as f64 / self.trials() as f64
    }

    /// Standard error of the difference of the two frequencies.
    pub fn difference_std_error(&self) -> f64 {
        let p = self.descendant_frequency();
        2.0 * (p * (1.0 - p) / self.trials() as f64).sqrt()
    }
}

/// Targets of the symmetry race: the first-child-line descendant of `v` at
/// distance `ell` and the ancestor at distance `ell`.
pub fn symmetry_targets(t: &TreeTopology, v: usize, ell: u32) -> Result<(usize, usize)> {
    if ell == 0 || v >= t.vertex_count() {
        return Err(LabError::usage("need ell >= 1 and a vertex in range"));
    }
    let a = t
        .ancestor(v, ell)
        .ok_or_else(|| LabError::usage(format!("vertex {v} has no ancestor at distance {ell}")))?;
    let w = t
        .first_descendant(v, ell)
        .ok_or_else(|| LabError::usage(format!("vertex {v} has no descendant at distance {ell}")))?;
    Ok((w, a))
}

/// From `trials` independent starts at `v`, tallies whether the walk
/// reaches the descendant `w` or the ancestor `a` first.
pub fn excursion_symmetry_check(
    t: &TreeTopology,
    v: usize,
    ell: u32,
    trials: u64,
    seed: u64,
) -> Result<SymmetryEstimate> {
    let (w, a) = symmetry_targets(t, v, ell)?;
    let mut walker = TreeWalker::new(t, v, seed);
    let mut est = SymmetryEstimate { descendant_first: 0, ancestor_first: 0 };
    for _ in 0..trials {
        walker.restart_at(v);
        loop {
            let p = walker.step();
            if p == w {
                est.descendant_first += 1;
                break;
            }
            if p == a {
                est.ancestor_first += 1;
                break;
            }
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_models::hit_before_probabilities;
    use crate::walker::TorusWalker;

    #[test]
    fn single_out_and_back_is_one_excursion() {
        let tree = TreeTopology::new(2, 4).unwrap();
        let spec = TreeExcursionSpec::new(&tree, 1, 0).unwrap();
        assert_eq!(count_excursions([0usize, 1, 0], &spec, StopRule::Steps(2)).unwrap(), 1);
        // starting inside the inner set needs an outer visit first
        assert_eq!(count_excursions([1usize, 0, 2], &spec, StopRule::Steps(2)).unwrap(), 0);
        assert_eq!(count_excursions([1usize, 0, 1, 0, 1], &spec, StopRule::Steps(4)).unwrap(), 2);
    }

    #[test]
    fn exhausted_source_is_cap_exceeded() {
        let tree = TreeTopology::new(2, 4).unwrap();
        let spec = TreeExcursionSpec::new(&tree, 1, 0).unwrap();
        let err = count_excursions([0usize, 1, 0], &spec, StopRule::AnchorVisits(3)).unwrap_err();
        assert!(matches!(err, LabError::CapExceeded { .. }));
        let err = count_excursions([0usize, 1], &spec, StopRule::Steps(5)).unwrap_err();
        assert!(matches!(err, LabError::CapExceeded { .. }));
    }

    #[test]
    fn anchor_stop_includes_final_position() {
        let tree = TreeTopology::new(2, 4).unwrap();
        let spec = TreeExcursionSpec::new(&tree, 1, 0).unwrap();
        let path = [0usize, 1, 0, 1, 3, 1, 0, 2];
        assert_eq!(count_excursions(path, &spec, StopRule::AnchorVisits(1)).unwrap(), 1);
        assert_eq!(count_excursions(path, &spec, StopRule::AnchorVisits(2)).unwrap(), 2);
    }

    #[test]
    fn spec_validation() {
        let tree = TreeTopology::new(2, 4).unwrap();
        assert!(TreeExcursionSpec::new(&tree, 0, 1).is_err());
        assert!(TreeExcursionSpec::new(&tree, 3, 2).is_err());
        assert_eq!(TreeExcursionSpec::with_spacing(&tree, 7, 2).unwrap().outer(), 1);
        assert!(TreeExcursionSpec::with_spacing(&tree, 7, 4).is_err());
        let torus = TorusTopology::new(16).unwrap();
        let d = |r| DiscSpec::new((3, 3), r).unwrap();
        assert!(DiscExcursionSpec::new(torus, d(4.0), d(2.0)).is_err());
        assert!(DiscExcursionSpec::new(torus, d(2.0), DiscSpec::new((1, 1), 5.0).unwrap()).is_err());
    }

    #[test]
    fn disc_excursions_shrink_as_outer_radius_grows() {
        let torus = TorusTopology::new(64).unwrap();
        let inner = DiscSpec::new((20, 20), 4.0).unwrap();
        let path: Vec<(i64, i64)> = TorusWalker::new(&torus, torus.index(20, 20), 3).positions(200_000).collect();
        let mut prev = u64::MAX;
        for outer in [6.0, 10.0, 16.0, 24.0] {
            let spec = DiscExcursionSpec::new(torus, inner, DiscSpec::new((20, 20), outer).unwrap()).unwrap();
            let c = count_excursions(path.iter().copied(), &spec, StopRule::Steps(200_000)).unwrap();
            assert!(c <= prev, "outer={outer}: {c} > {prev}");
            prev = c;
        }
    }

    fn cfg() -> SpecialVertexConfig {
        let ln2 = 2f64.ln();
        SpecialVertexConfig { lambda: 0.4 * ln2, r: 0.55 * ln2, ell: 2, b: 2, k: 8 }
    }

    #[test]
    fn special_config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.r = 0.8;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.k = 4;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.lambda = c.r;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_count_vertices_are_special_for_positive_j() {
        let c = cfg();
        let cls = classify_special_walk(&c, 5, 10_000_000).unwrap();
        assert_eq!(cls.levels.len(), 4);
        for lvl in &cls.levels {
            for (i, &count) in lvl.counts.iter().enumerate() {
                if count == 0 {
                    let idx = level_first_index(c.b, lvl.level) + i;
                    assert!(lvl.special.contains(&idx));
                }
            }
        }
    }

    #[test]
    fn raising_r_only_adds_special_vertices() {
        let c = cfg();
        let base = classify_special_walk(&c, 8, 10_000_000).unwrap();
        let wider = base.reclassify(&SpecialVertexConfig { r: 0.65 * 2f64.ln(), ..c });
        for (lo, hi) in base.levels.iter().zip(&wider.levels) {
            assert!(lo.special.iter().all(|v| hi.special.contains(v)));
        }
        assert_eq!(base.reclassify(&c), base);
    }

    #[test]
    fn symmetry_preconditions() {
        let t = TreeTopology::new(2, 6).unwrap();
        assert!(excursion_symmetry_check(&t, 3, 3, 10, 1).is_err());
        assert!(excursion_symmetry_check(&t, t.first_leaf(), 1, 10, 1).is_err());
        assert!(excursion_symmetry_check(&t, 8, 0, 10, 1).is_err());
    }

    #[test]
    fn exact_symmetry_by_harmonic_solve() {
        let t = TreeTopology::new(2, 5).unwrap();
        for v in t.level_range(2) {
            let (w, a) = symmetry_targets(&t, v, 2).unwrap();
            let to_w = hit_before_probabilities(&t, w, a).unwrap()[v];
            let to_a = hit_before_probabilities(&t, a, w).unwrap()[v];
            assert!((to_w - to_a).abs() < 1e-9, "{to_w} vs {to_a}");
            assert!((to_w - 0.5).abs() < 1e-9);
        }
    }
}
