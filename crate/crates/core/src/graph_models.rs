//! State spaces for the walks and exact small-instance oracles.
//!
//! Trees use implicit heap numbering: vertices `0..n_k` in level order, the
//! children of `i` are `b*i + 1 ..= b*i + b` and the parent of `i > 0` is
//! `(i - 1) / b`. Nothing is materialised beyond the level offsets.
//!
//! The oracles (cover-time dynamic program, harmonic hitting probabilities and
//! hitting times) solve dense linear systems directly and are only meant for
//! small instances.

use std::ops::Range;

use crate::error::{LabError, Result};
use crate::linalg::solve_dense;

/// Largest graph accepted by [`exact_cover_time`].
pub const MAX_COVER_DP_VERTICES: usize = 16;
/// Largest graph accepted by the harmonic solvers.
pub const MAX_HARMONIC_VERTICES: usize = 4096;

/// Finite graph with a fixed neighbor order.
pub trait FiniteGraph {
    fn vertex_count(&self) -> usize;
    fn degree(&self, v: usize) -> usize;
    /// The `i`-th neighbor of `v` in the canonical order, `i < degree(v)`.
    fn neighbor(&self, v: usize, i: usize) -> usize;

    fn neighbor_list(&self, v: usize) -> Vec<usize> {
        (0..self.degree(v)).map(|i| self.neighbor(v, i)).collect()
    }
}

/// Balanced `b`-ary tree of height `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    b: u32,
    k: u32,
    n_k: usize,
    /// `level_start[l]` is the index of the first vertex at level `l`; one
    /// extra entry holds `n_k`.
    level_start: Vec<usize>,
}

impl TreeTopology {
    pub fn new(b: u32, k: u32) -> Result<Self> {
        if b < 2 {
            return Err(LabError::usage(format!("branching factor b must be >= 2, got {b}")));
        }
        if k < 1 {
            return Err(LabError::usage(format!("tree height k must be >= 1, got {k}")));
        }
        let mut level_start = Vec::with_capacity(k as usize + 2);
        let mut start: usize = 0;
        let mut width: usize = 1;
        for _ in 0..=k {
            level_start.push(start);
            start = start
                .checked_add(width)
                .ok_or_else(|| LabError::capacity("tree vertex count overflows usize"))?;
            width = width
                .checked_mul(b as usize)
                .ok_or_else(|| LabError::capacity("tree vertex count overflows usize"))?;
        }
        level_start.push(start);
        if start > u32::MAX as usize {
            return Err(LabError::capacity(format!("tree with b={b}, k={k} has {start} vertices")));
        }
        Ok(TreeTopology { b, k, n_k: start, level_start })
    }

    pub fn branching(&self) -> u32 {
        self.b
    }

    pub fn height(&self) -> u32 {
        self.k
    }

    /// `n_k = (b^(k+1) - 1) / (b - 1)`.
    pub fn vertex_count(&self) -> usize {
        self.n_k
    }

    pub fn edge_count(&self) -> usize {
        self.n_k - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.n_k - self.first_leaf()
    }

    pub fn first_leaf(&self) -> usize {
        self.level_start[self.k as usize]
    }

    pub const ROOT: usize = 0;

    #[inline]
    pub fn is_leaf(&self, v: usize) -> bool {
        v >= self.first_leaf()
    }

    /// Vertex index range of one level.
    pub fn level_range(&self, level: u32) -> Range<usize> {
        let l = level as usize;
        self.level_start[l]..self.level_start[l + 1]
    }

    #[inline]
    pub fn level(&self, v: usize) -> u32 {
        debug_assert!(v < self.n_k);
        (self.level_start.partition_point(|&s| s <= v) - 1) as u32
    }

    #[inline]
    pub fn parent(&self, v: usize) -> Option<usize> {
        (v > 0).then(|| (v - 1) / self.b as usize)
    }

    pub fn children(&self, v: usize) -> Range<usize> {
        if self.is_leaf(v) {
            return 0..0;
        }
        let first = self.b as usize * v + 1;
        first..first + self.b as usize
    }

    /// Ancestor `dist` levels above `v`, if it exists.
    pub fn ancestor(&self, mut v: usize, dist: u32) -> Option<usize> {
        for _ in 0..dist {
            v = self.parent(v)?;
        }
        Some(v)
    }

    /// Descendant reached by following first children `dist` times.
    pub fn first_descendant(&self, mut v: usize, dist: u32) -> Option<usize> {
        for _ in 0..dist {
            if self.is_leaf(v) {
                return None;
            }
            v = self.b as usize * v + 1;
        }
        Some(v)
    }

    pub fn is_ancestor(&self, ancestor: usize, mut v: usize) -> bool {
        while v > ancestor {
            v = (v - 1) / self.b as usize;
        }
        v == ancestor
    }

    #[inline]
    pub fn tree_degree(&self, v: usize) -> usize {
        if v == Self::ROOT {
            self.b as usize
        } else if self.is_leaf(v) {
            1
        } else {
            self.b as usize + 1
        }
    }

    /// Neighbor `i` of `v`: the parent first (unless `v` is the root), then
    /// the children in ascending order.
    #[inline]
    pub fn tree_neighbor(&self, v: usize, i: usize) -> usize {
        let b = self.b as usize;
        if v == Self::ROOT {
            1 + i
        } else if i == 0 {
            (v - 1) / b
        } else {
            b * v + i
        }
    }

    /// Neighbors of `v` in canonical order.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.n_k {
            return Err(LabError::usage(format!(
                "vertex {v} out of range for a tree with {} vertices",
                self.n_k
            )));
        }
        Ok(self.neighbor_list(v))
    }
}

impl FiniteGraph for TreeTopology {
    fn vertex_count(&self) -> usize {
        self.n_k
    }

    fn degree(&self, v: usize) -> usize {
        self.tree_degree(v)
    }

    fn neighbor(&self, v: usize, i: usize) -> usize {
        self.tree_neighbor(v, i)
    }
}

/// Neighbors of `v` in `t`: parent first, then children ascending.
pub fn tree_neighbors(t: &TreeTopology, v: usize) -> Result<Vec<usize>> {
    t.neighbors(v)
}

/// Lattice displacement of step code `c` (0: +x, 1: -x, 2: +y, 3: -y).
pub const STEP_OFFSETS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// The `n x n` discrete torus. Vertex `(x, y)` has index `y * n + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusTopology {
    n: u32,
}

impl TorusTopology {
    pub fn new(n: u32) -> Result<Self> {
        if n < 3 {
            return Err(LabError::usage(format!("torus side n must be >= 3, got {n}")));
        }
        if (n as u64) * (n as u64) > u32::MAX as u64 {
            return Err(LabError::capacity(format!("torus side {n} is too large")));
        }
        Ok(TorusTopology { n })
    }

    pub fn side(&self) -> u32 {
        self.n
    }

    pub fn site_count(&self) -> usize {
        self.n as usize * self.n as usize
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.n as usize + x as usize
    }

    #[inline]
    pub fn coords(&self, v: usize) -> (u32, u32) {
        ((v % self.n as usize) as u32, (v / self.n as usize) as u32)
    }

    /// Reduces an arbitrary lattice point to its torus representative.
    pub fn wrap(&self, p: (i64, i64)) -> (u32, u32) {
        let n = self.n as i64;
        (p.0.rem_euclid(n) as u32, p.1.rem_euclid(n) as u32)
    }

    /// Shortest wrapped displacement between two points.
    pub fn displacement(&self, a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
        let n = self.n as i64;
        let wrap = |d: i64| {
            let d = d.rem_euclid(n);
            if d > n / 2 {
                d - n
            } else {
                d
            }
        };
        (wrap(b.0 - a.0), wrap(b.1 - a.1))
    }

    /// Euclidean length of the shortest wrapped displacement.
    pub fn distance(&self, a: (i64, i64), b: (i64, i64)) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        ((dx * dx + dy * dy) as f64).sqrt()
    }
}

impl FiniteGraph for TorusTopology {
    fn vertex_count(&self) -> usize {
        self.site_count()
    }

    fn degree(&self, _v: usize) -> usize {
        4
    }

    fn neighbor(&self, v: usize, i: usize) -> usize {
        let (x, y) = self.coords(v);
        let (dx, dy) = STEP_OFFSETS[i];
        let (nx, ny) = self.wrap((x as i64 + dx, y as i64 + dy));
        self.index(nx, ny)
    }
}

/// Closed disc `D(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscSpec {
    pub center: (i64, i64),
    pub radius: f64,
}

impl DiscSpec {
    pub fn new(center: (i64, i64), radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(LabError::usage(format!("disc radius must be finite and >= 0, got {radius}")));
        }
        Ok(DiscSpec { center, radius })
    }

    /// Membership under the torus metric.
    pub fn contains_on_torus(&self, torus: &TorusTopology, p: (i64, i64)) -> bool {
        let (dx, dy) = torus.displacement(self.center, p);
        // compare squared integers against radius^2 to stay exact on the boundary
        ((dx * dx + dy * dy) as f64) <= self.radius * self.radius
    }

    /// Membership in the plane.
    pub fn contains(&self, p: (i64, i64)) -> bool {
        let dx = p.0 - self.center.0;
        let dy = p.1 - self.center.1;
        ((dx * dx + dy * dy) as f64) <= self.radius * self.radius
    }
}

/// Exact expected cover time from `start`, by dynamic programming over
/// (position, visited set) states.
///
/// Visited sets are processed from the full set downwards; for a fixed set
/// the expected remaining times of all positions inside it solve one small
/// linear system whose right-hand side refers only to strict supersets.
pub fn exact_cover_time<G: FiniteGraph>(graph: &G, start: usize) -> Result<f64> {
    let n = graph.vertex_count();
    if n > MAX_COVER_DP_VERTICES {
        return Err(LabError::capacity(format!(
            "exact cover time is limited to {MAX_COVER_DP_VERTICES} vertices, got {n}"
        )));
    }
    if start >= n {
        return Err(LabError::usage(format!("start vertex {start} out of range")));
    }
    let full: usize = (1 << n) - 1;
    let start_bit = 1usize << start;
    // remaining[mask * n + v]
    let mut remaining = vec![0.0f64; (full + 1) * n];
    let mut members = Vec::with_capacity(n);
    let mut slot = vec![usize::MAX; n];

    for mask in (0..full).rev() {
        if mask & start_bit == 0 {
            continue;
        }
        members.clear();
        members.extend((0..n).filter(|&v| mask >> v & 1 == 1));
        for (i, &v) in members.iter().enumerate() {
            slot[v] = i;
        }
        let m = members.len();
        let mut a = vec![0.0; m * m];
        let mut rhs = vec![1.0; m];
        for (i, &v) in members.iter().enumerate() {
            a[i * m + i] += 1.0;
            let d = graph.degree(v);
            let w = 1.0 / d as f64;
            for j in 0..d {
                let u = graph.neighbor(v, j);
                if mask >> u & 1 == 1 {
                    a[i * m + slot[u]] -= w;
                } else {
                    let next = mask | (1 << u);
                    rhs[i] += w * remaining[next * n + u];
                }
            }
        }
        let sol = solve_dense(a, rhs)?;
        for (i, &v) in members.iter().enumerate() {
            remaining[mask * n + v] = sol[i];
        }
    }
    Ok(remaining[start_bit * n + start])
}

fn check_harmonic_size<G: FiniteGraph>(graph: &G) -> Result<usize> {
    let n = graph.vertex_count();
    if n > MAX_HARMONIC_VERTICES {
        return Err(LabError::capacity(format!(
            "harmonic solver is limited to {MAX_HARMONIC_VERTICES} vertices, got {n}"
        )));
    }
    Ok(n)
}

/// Solves `f(v) = boundary(v)` on the boundary and
/// `f(v) = source + mean of f over neighbors` elsewhere.
fn solve_harmonic<G: FiniteGraph>(
    graph: &G,
    boundary: &[(usize, f64)],
    source: f64,
) -> Result<Vec<f64>> {
    let n = check_harmonic_size(graph)?;
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(v, value) in boundary {
        if v >= n {
            return Err(LabError::usage(format!("vertex {v} out of range")));
        }
        fixed[v] = Some(value);
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }
    let m = free.len();
    let mut a = vec![0.0; m * m];
    let mut rhs = vec![source; m];
    for (i, &v) in free.iter().enumerate() {
        a[i * m + i] += 1.0;
        let d = graph.degree(v);
        let w = 1.0 / d as f64;
        for j in 0..d {
            let u = graph.neighbor(v, j);
            match fixed[u] {
                Some(value) => rhs[i] += w * value,
                None => a[i * m + slot[u]] -= w,
            }
        }
    }
    let sol = solve_dense(a, rhs)?;
    Ok((0..n)
        .map(|v| fixed[v].unwrap_or_else(|| sol[slot[v]]))
        .collect())
}

/// `P_v[hit target before avoid]` for every vertex `v`.
pub fn hit_before_probabilities<G: FiniteGraph>(
    graph: &G,
    target: usize,
    avoid: usize,
) -> Result<Vec<f64>> {
    if target == avoid {
        return Err(LabError::usage("target and avoided vertex coincide"));
    }
    solve_harmonic(graph, &[(target, 1.0), (avoid, 0.0)], 0.0)
}

/// Expected hitting time of `target` from every vertex.
pub fn expected_hitting_times<G: FiniteGraph>(graph: &G, target: usize) -> Result<Vec<f64>> {
    solve_harmonic(graph, &[(target, 0.0)], 1.0)
}

/// Probability that the walk from the root reaches `target` before it
/// returns to the root.
pub fn exact_hit_before_return(t: &TreeTopology, target: usize) -> Result<f64> {
    if target == TreeTopology::ROOT {
        return Err(LabError::usage("target must differ from the root"));
    }
    if target >= t.vertex_count() {
        return Err(LabError::usage(format!("vertex {target} out of range")));
    }
    let h = hit_before_probabilities(t, target, TreeTopology::ROOT)?;
    let root = TreeTopology::ROOT;
    let d = t.tree_degree(root);
    Ok((0..d).map(|i| h[t.tree_neighbor(root, i)]).sum::<f64>() / d as f64)
}

/// Uniform bound `4 k n_k` on expected hitting times in the tree: effective
/// resistance at most `2k` times twice the edge count.
pub fn commute_time_bound(t: &TreeTopology) -> f64 {
    4.0 * t.height() as f64 * t.vertex_count() as f64
}
