//! Seeded simple random walks on trees, tori and the unbounded lattice.
//!
//! Conventions shared by every walker:
//! - the start position is visited at time 0;
//! - each step makes one uniform draw over the canonical neighbor order of
//!   [`crate::graph_models`] (degree-one vertices consume no randomness);
//! - lattice and torus steps are 2-bit codes, see [`STEP_OFFSETS`].

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{LabError, PartialWalk, Result};
use crate::graph_models::{TorusTopology, TreeTopology, STEP_OFFSETS};
use crate::rng::WalkRng;

/// Steps below which a default cap is never set.
const MIN_STEP_CAP: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Tree(TreeTopology),
    Torus(TorusTopology),
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkConfig {
    pub topology: Topology,
    /// Vertex index (tree heap index or torus `y * n + x`); ignored on the
    /// unbounded lattice, which always starts at the origin.
    pub start: usize,
    pub seed: u64,
    pub step_cap: u64,
}

impl WalkConfig {
    /// Root-started tree walk with the default step cap.
    pub fn tree(tree: TreeTopology, seed: u64) -> Self {
        let step_cap = default_tree_step_cap(&tree);
        WalkConfig { topology: Topology::Tree(tree), start: TreeTopology::ROOT, seed, step_cap }
    }

    pub fn torus(torus: TorusTopology, start: usize, seed: u64) -> Self {
        let step_cap = default_torus_step_cap(&torus);
        WalkConfig { topology: Topology::Torus(torus), start, seed, step_cap }
    }

    pub fn with_step_cap(mut self, step_cap: u64) -> Self {
        self.step_cap = step_cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.step_cap == 0 {
            return Err(LabError::usage("step_cap must be positive"));
        }
        let limit = match &self.topology {
            Topology::Tree(t) => t.vertex_count(),
            Topology::Torus(t) => t.site_count(),
            Topology::Lattice => usize::MAX,
        };
        if self.start >= limit {
            return Err(LabError::usage(format!("start vertex {} out of range", self.start)));
        }
        Ok(())
    }
}

/// `100 * n_k * k^2 * ln b`, at least [`MIN_STEP_CAP`].
pub fn default_tree_step_cap(t: &TreeTopology) -> u64 {
    let k = t.height() as f64;
    let cap = 100.0 * t.vertex_count() as f64 * k * k * (t.branching() as f64).ln();
    (cap.ceil() as u64).max(MIN_STEP_CAP)
}

/// 100 times the leading-order cover time `(4/pi) (n ln n)^2`.
pub fn default_torus_step_cap(t: &TorusTopology) -> u64 {
    let n = t.side() as f64;
    let mean = 4.0 / PI * (n * n.ln()).powi(2);
    ((100.0 * mean).ceil() as u64).max(MIN_STEP_CAP)
}

/// Simple random walk on a [`TreeTopology`].
#[derive(Debug, Clone)]
pub struct TreeWalker<'a> {
    tree: &'a TreeTopology,
    pos: usize,
    rng: WalkRng,
}

impl<'a> TreeWalker<'a> {
    pub fn new(tree: &'a TreeTopology, start: usize, seed: u64) -> Self {
        assert!(start < tree.vertex_count(), "start vertex out of range");
        TreeWalker { tree, pos: start, rng: WalkRng::new(seed) }
    }

    #[inline]
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Moves the walker to `v` without consuming randomness.
    pub fn restart_at(&mut self, v: usize) {
        assert!(v < self.tree.vertex_count(), "vertex out of range");
        self.pos = v;
    }

    #[inline]
    pub fn step(&mut self) -> usize {
        let d = self.tree.tree_degree(self.pos);
        let i = if d == 1 { 0 } else { self.rng.below(d as u32) as usize };
        self.pos = self.tree.tree_neighbor(self.pos, i);
        self.pos
    }

    /// Positions at times `0..=steps`.
    pub fn positions(mut self, steps: u64) -> impl Iterator<Item = usize> + 'a {
        let start = self.pos;
        std::iter::once(start).chain((0..steps).map(move |_| self.step()))
    }
}

/// Simple random walk on a [`TorusTopology`].
#[derive(Debug, Clone)]
pub struct TorusWalker {
    n: u32,
    x: u32,
    y: u32,
    rng: WalkRng,
}

impl TorusWalker {
    pub fn new(torus: &TorusTopology, start: usize, seed: u64) -> Self {
        let (x, y) = torus.coords(start);
        TorusWalker { n: torus.side(), x, y, rng: WalkRng::new(seed) }
    }

    #[inline]
    pub fn position(&self) -> (u32, u32) {
        (self.x, self.y)
    }

    #[inline]
    pub fn vertex(&self) -> usize {
        self.y as usize * self.n as usize + self.x as usize
    }

    /// Takes one step and returns its code.
    #[inline]
    pub fn step(&mut self) -> u8 {
        let code = self.rng.step_code();
        let n = self.n;
        match code {
            0 => self.x = if self.x + 1 == n { 0 } else { self.x + 1 },
            1 => self.x = if self.x == 0 { n - 1 } else { self.x - 1 },
            2 => self.y = if self.y + 1 == n { 0 } else { self.y + 1 },
            _ => self.y = if self.y == 0 { n - 1 } else { self.y - 1 },
        }
        code
    }

    /// Positions at times `0..=steps` as lattice points.
    pub fn positions(mut self, steps: u64) -> impl Iterator<Item = (i64, i64)> {
        let start = (self.x as i64, self.y as i64);
        std::iter::once(start).chain((0..steps).map(move |_| {
            self.step();
            (self.x as i64, self.y as i64)
        }))
    }
}

/// Simple random walk on `Z^2` from the origin.
#[derive(Debug, Clone)]
pub struct LatticeWalker {
    x: i64,
    y: i64,
    rng: WalkRng,
}

impl LatticeWalker {
    pub fn new(seed: u64) -> Self {
        LatticeWalker { x: 0, y: 0, rng: WalkRng::new(seed) }
    }

    #[inline]
    pub fn position(&self) -> (i64, i64) {
        (self.x, self.y)
    }

    #[inline]
    pub fn step(&mut self) -> u8 {
        let code = self.rng.step_code();
        let (dx, dy) = STEP_OFFSETS[code as usize];
        self.x += dx;
        self.y += dy;
        code
    }
}

/// Cover statistics of one root-started tree walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeCoverRecord {
    /// First time every vertex has been visited (`C_k`).
    pub cover_time: u64,
    /// First return to the root after `cover_time` (`C_k^+`).
    pub cover_and_return_time: u64,
    /// Root visits in `(0, C_k^+]` (`R_k`), the final return included.
    pub returns_to_root: u64,
    /// First time every leaf has been visited.
    pub leaf_cover_time: u64,
}

pub fn run_tree_cover(cfg: &WalkConfig) -> Result<TreeCoverRecord> {
    cfg.validate()?;
    let Topology::Tree(tree) = &cfg.topology else {
        return Err(LabError::usage("run_tree_cover needs a tree topology"));
    };
    if cfg.start != TreeTopology::ROOT {
        return Err(LabError::usage("tree cover walks start at the root"));
    }
    let n = tree.vertex_count() as u64;
    let leaves = tree.leaf_count() as u64;
    let mut visited = vec![false; n as usize];
    visited[TreeTopology::ROOT] = true;
    let mut visited_count = 1u64;
    let mut leaves_visited = 0u64;
    let mut cover_time = None;
    let mut leaf_cover_time = None;
    let mut returns = 0u64;
    let mut walker = TreeWalker::new(tree, TreeTopology::ROOT, cfg.seed);

    for t in 1..=cfg.step_cap {
        let v = walker.step();
        if v == TreeTopology::ROOT {
            returns += 1;
            if let (Some(cover_time), Some(leaf_cover_time)) = (cover_time, leaf_cover_time) {
                return Ok(TreeCoverRecord {
                    cover_time,
                    cover_and_return_time: t,
                    returns_to_root: returns,
                    leaf_cover_time,
                });
            }
        } else if !visited[v] {
            visited[v] = true;
            visited_count += 1;
            if tree.is_leaf(v) {
                leaves_visited += 1;
                if leaves_visited == leaves {
                    leaf_cover_time = Some(t);
                }
            }
            if visited_count == n {
                cover_time = Some(t);
            }
        }
    }
    Err(LabError::CapExceeded {
        cap: cfg.step_cap,
        partial: PartialWalk {
            steps: cfg.step_cap,
            visited: visited_count,
            returns_to_root: returns,
            cover_time,
        },
    })
}

/// First time all `n^2` torus sites have been visited.
pub fn run_torus_cover(cfg: &WalkConfig) -> Result<u64> {
    run_torus_cover_observed(cfg, |_| {})
}

/// [`run_torus_cover`] reporting every step code to `on_step`.
pub fn run_torus_cover_observed(cfg: &WalkConfig, mut on_step: impl FnMut(u8)) -> Result<u64> {
    cfg.validate()?;
    let Topology::Torus(torus) = &cfg.topology else {
        return Err(LabError::usage("run_torus_cover needs a torus topology"));
    };
    let sites = torus.site_count() as u64;
    let mut visited = vec![false; sites as usize];
    visited[cfg.start] = true;
    let mut remaining = sites - 1;
    let mut walker = TorusWalker::new(torus, cfg.start, cfg.seed);
    for t in 1..=cfg.step_cap {
        on_step(walker.step());
        let v = walker.vertex();
        if !visited[v] {
            visited[v] = true;
            remaining -= 1;
            if remaining == 0 {
                return Ok(t);
            }
        }
    }
    Err(LabError::CapExceeded {
        cap: cfg.step_cap,
        partial: PartialWalk {
            steps: cfg.step_cap,
            visited: sites - remaining,
            ..PartialWalk::default()
        },
    })
}

/// `T_n / (n ln n)^2`.
pub fn normalized_torus_cover(n: u32, cover_time: u64) -> f64 {
    let n = n as f64;
    cover_time as f64 / (n * n.ln()).powi(2)
}

const CHUNK_SHIFT: u32 = 6;
const CHUNK_SIDE: i64 = 1 << CHUNK_SHIFT;
const CHUNK_AREA: usize = (CHUNK_SIDE * CHUNK_SIDE) as usize;

/// Sparse visit counts `T_n(x)` of a lattice walk.
///
/// Counts live in 64 x 64 blocks allocated on first touch; absent blocks
/// and absent entries mean zero.
#[derive(Debug, Clone, Default)]
pub struct VisitField {
    blocks: Vec<Box<[u32; CHUNK_AREA]>>,
    index: HashMap<(i64, i64), usize>,
    cached: Option<((i64, i64), usize)>,
    total_steps: u64,
    max_count: u32,
    distinct_sites: u64,
}

impl VisitField {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn split(p: (i64, i64)) -> ((i64, i64), usize) {
        let key = (p.0 >> CHUNK_SHIFT, p.1 >> CHUNK_SHIFT);
        let off = ((p.1 & (CHUNK_SIDE - 1)) * CHUNK_SIDE + (p.0 & (CHUNK_SIDE - 1))) as usize;
        (key, off)
    }

    #[inline]
    fn record(&mut self, p: (i64, i64)) {
        let (key, off) = Self::split(p);
        let block = match self.cached {
            Some((k, b)) if k == key => b,
            _ => {
                let next = self.blocks.len();
                let b = *self.index.entry(key).or_insert(next);
                if b == next {
                    self.blocks.push(Box::new([0; CHUNK_AREA]));
                }
                self.cached = Some((key, b));
                b
            }
        };
        let c = &mut self.blocks[block][off];
        if *c == 0 {
            self.distinct_sites += 1;
        }
        *c += 1;
        self.max_count = self.max_count.max(*c);
    }

    /// `T_n(p)`.
    pub fn count(&self, p: (i64, i64)) -> u32 {
        let (key, off) = Self::split(p);
        self.index.get(&key).map_or(0, |&b| self.blocks[b][off])
    }

    /// Nonzero entries in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), u32)> + '_ {
        self.index.iter().flat_map(move |(&(bx, by), &b)| {
            self.blocks[b].iter().enumerate().filter(|(_, &c)| c > 0).map(move |(off, &c)| {
                let off = off as i64;
                ((bx * CHUNK_SIDE + off % CHUNK_SIDE, by * CHUNK_SIDE + off / CHUNK_SIDE), c)
            })
        })
    }

    /// Number of steps `n`.
    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// `T_n^* = max_x T_n(x)`.
    pub fn max_count(&self) -> u32 {
        self.max_count
    }

    pub fn distinct_sites(&self) -> u64 {
        self.distinct_sites
    }

    pub fn sum_counts(&self) -> u64 {
        self.blocks.iter().flat_map(|b| b.iter()).map(|&c| u64::from(c)).sum()
    }

    /// `T_n^* / (ln n)^2`; undefined (NaN) for `n = 1`.
    pub fn normalized_max(&self) -> f64 {
        let ln = (self.total_steps as f64).ln();
        self.max_count as f64 / (ln * ln)
    }
}

/// Visit field of an `n`-step walk on `Z^2` from the origin.
pub fn run_thick_points(seed: u64, n: u64) -> Result<VisitField> {
    run_thick_points_observed(seed, n, |_| {})
}

pub fn run_thick_points_observed(seed: u64, n: u64, mut on_step: impl FnMut(u8)) -> Result<VisitField> {
    if n == 0 {
        return Err(LabError::usage("thick-point walks need at least one step"));
    }
    if n >= u32::MAX as u64 {
        return Err(LabError::capacity(format!("{n} steps overflow 32-bit visit counters")));
    }
    let mut field = VisitField::new();
    let mut walker = LatticeWalker::new(seed);
    field.record(walker.position());
    for _ in 0..n {
        on_step(walker.step());
        field.record(walker.position());
    }
    field.total_steps = n;
    Ok(field)
}

/// Outcome of an epsilon-cover proxy run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsCoverRecord {
    /// Lattice steps until every site lies within `eps * n` of the path.
    pub steps: u64,
    /// Brownian-time proxy `steps / (2 n^2)`.
    pub proxy_time: f64,
    /// `proxy_time / (ln eps)^2`.
    pub normalized: f64,
}

/// Lattice offsets `o` with `|o| <= r`.
fn disc_offsets(r: f64) -> Vec<(i64, i64)> {
    let reach = r.floor() as i64;
    let r2 = r * r;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Random walk on the `n x n` torus from `(0, 0)` until its `eps * n`
/// neighbourhood covers the torus.
pub fn run_eps_cover_proxy(n: u32, eps: f64, seed: u64) -> Result<EpsCoverRecord> {
    let torus = TorusTopology::new(n)?;
    run_eps_cover_proxy_observed(n, eps, seed, default_torus_step_cap(&torus), |_| {})
}

pub fn run_eps_cover_proxy_observed(
    n: u32,
    eps: f64,
    seed: u64,
    step_cap: u64,
    mut on_step: impl FnMut(u8),
) -> Result<EpsCoverRecord> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(LabError::usage(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    let torus = TorusTopology::new(n)?;
    let radius = eps * n as f64;
    if radius < 2.0 {
        return Err(LabError::usage(format!("eps * n = {radius} must be at least 2")));
    }
    let full = disc_offsets(radius);
    // Sites entering the disc when its centre moves by direction `c`.
    let crescents: Vec<Vec<(i64, i64)>> = STEP_OFFSETS
        .iter()
        .map(|&(sx, sy)| {
            full.iter()
                .copied()
                .filter(|&(dx, dy)| {
                    let (px, py) = (dx + sx, dy + sy);
                    ((px * px + py * py) as f64) > radius * radius
                })
                .collect()
        })
        .collect();

    let side = n as i64;
    let sites = torus.site_count();
    let mut covered = vec![false; sites];
    let mut visited = vec![false; sites];
    let mut uncovered = sites as u64;
    let mut mark = |covered: &mut [bool], x: i64, y: i64, offsets: &[(i64, i64)]| {
        for &(dx, dy) in offsets {
            let i = ((y + dy).rem_euclid(side) * side + (x + dx).rem_euclid(side)) as usize;
            if !covered[i] {
                covered[i] = true;
                uncovered -= 1;
            }
        }
        uncovered
    };

    let mut walker = TorusWalker::new(&torus, 0, seed);
    visited[0] = true;
    mark(&mut covered, 0, 0, &full);
    let finish = |steps: u64| {
        let proxy_time = steps as f64 / (2.0 * (n as f64).powi(2));
        EpsCoverRecord { steps, proxy_time, normalized: proxy_time / eps.ln().powi(2) }
    };
    for t in 1..=step_cap {
        let code = walker.step();
        on_step(code);
        let v = walker.vertex();
        if !visited[v] {
            visited[v] = true;
            let (x, y) = walker.position();
            // every visited site already has its whole disc covered, so only
            // the crescent ahead of the previous site can be new
            if mark(&mut covered, x as i64, y as i64, &crescents[code as usize]) == 0 {
                return Ok(finish(t));
            }
        }
    }
    Err(LabError::CapExceeded {
        cap: step_cap,
        partial: PartialWalk { steps: step_cap, ..PartialWalk::default() },
    })
}

/// Monte Carlo tally of root departures that reach a target first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitEstimate {
    pub hits: u64,
    pub departures: u64,
}

impl HitEstimate {
    pub fn frequency(&self) -> f64 {
        self.hits as f64 / self.departures as f64
    }

    /// Binomial standard error of [`Self::frequency`].
    pub fn std_error(&self) -> f64 {
        let p = self.frequency();
        (p * (1.0 - p) / self.departures as f64).sqrt()
    }
}

/// For `departures` consecutive root excursions, counts those that visit
/// `target` before returning to the root.
pub fn estimate_hit_before_return(
    tree: &TreeTopology,
    target: usize,
    departures: u64,
    seed: u64,
) -> Result<HitEstimate> {
    if target == TreeTopology::ROOT || target >= tree.vertex_count() {
        return Err(LabError::usage(format!("invalid target vertex {target}")));
    }
    if departures == 0 {
        return Err(LabError::usage("departures must be positive"));
    }
    let mut walker = TreeWalker::new(tree, TreeTopology::ROOT, seed);
    let mut hits = 0;
    for _ in 0..departures {
        let mut hit = false;
        loop {
            let v = walker.step();
            if v == target {
                hit = true;
            } else if v == TreeTopology::ROOT {
                break;
            }
        }
        hits += u64::from(hit);
    }
    Ok(HitEstimate { hits, departures })
}
