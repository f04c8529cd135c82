//! Random walks on clusters and on finite samples of the continuum tree,
//! and displacement statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuum::DiscretizedCrt;
use crate::error::{Error, Result};
use crate::excursions::{least_squares_slope, quantile_sorted};
use crate::geometry::Graph;
use crate::model::ScalingConstants;
use crate::rng::uniform_open0;
use crate::stats::{ks_two_sample, KsResult};

/// Smallest ensemble accepted by [`displacement_stats`].
pub const MIN_TRACES: usize = 30;

/// Visited vertices, with jump times for continuous-time walks.
///
/// `times[i]` is the time at which `vertices[i]` is entered. For walks on
/// graphs the stamps are strictly increasing; on a spanned tree branch points
/// carry no mass, so the walk leaves them at once and stamps may repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTrace {
    pub start: u32,
    pub vertices: Vec<u32>,
    pub times: Option<Vec<f64>>,
    /// Time up to which the trace is known.
    pub end_time: f64,
}

impl WalkTrace {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Position at time `t`: the step index `floor(t)` for discrete walks,
    /// the last vertex entered by time `t` otherwise.
    pub fn position_at(&self, t: f64) -> Result<u32> {
        if !(t >= 0.0) || t > self.end_time {
            return Err(Error::Domain(format!("time {t} lies outside [0, {}]", self.end_time)));
        }
        match &self.times {
            None => Ok(self.vertices[t.floor() as usize]),
            Some(times) => {
                let i = times.partition_point(|&s| s <= t);
                Ok(self.vertices[i.max(1) - 1])
            }
        }
    }

    /// Consecutive vertices adjacent in `graph`, stamps strictly increasing.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        for (i, w) in self.vertices.windows(2).enumerate() {
            if !graph.neighbors(w[0] as usize).contains(&w[1]) {
                return Err(Error::InvalidPath {
                    index: i + 1,
                    reason: format!("{} and {} are not adjacent", w[0], w[1]),
                });
            }
        }
        if let Some(times) = &self.times {
            if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::InvalidPath { index: i + 1, reason: "time stamps must increase".into() });
            }
        }
        Ok(())
    }
}

fn check_start(graph: &Graph, start: usize) -> Result<()> {
    if start >= graph.num_vertices() {
        return Err(Error::Domain(format!("start {start} is not a vertex")));
    }
    if graph.degree(start) == 0 {
        return Err(Error::Domain(format!("start vertex {start} is isolated")));
    }
    Ok(())
}

/// Discrete-time simple random walk.
pub fn srw<R: Rng + ?Sized>(graph: &Graph, start: usize, steps: usize, rng: &mut R) -> Result<WalkTrace> {
    check_start(graph, start)?;
    let mut vertices = Vec::with_capacity(steps + 1);
    let mut x = start as u32;
    vertices.push(x);
    for _ in 0..steps {
        let nb = graph.neighbors(x as usize);
        x = nb[rng.random_range(0..nb.len())];
        vertices.push(x);
    }
    Ok(WalkTrace { start: start as u32, vertices, times: None, end_time: steps as f64 })
}

/// Continuous-time walk with unit-mean exponential holding times run up to
/// `horizon`; jump and holding draws come from separate generators seeded from `rng`.
pub fn ctrw<R: Rng + ?Sized>(graph: &Graph, start: usize, horizon: f64, rng: &mut R) -> Result<WalkTrace> {
    let mut jumps = ChaCha8Rng::seed_from_u64(rng.random());
    let mut holds = ChaCha8Rng::seed_from_u64(rng.random());
    ctrw_coupled(graph, start, horizon, &mut jumps, &mut holds)
}

/// As [`ctrw`], with the jump chain driven by `jumps` exactly as [`srw`] would be.
pub fn ctrw_coupled<J: Rng + ?Sized, H: Rng + ?Sized>(
    graph: &Graph,
    start: usize,
    horizon: f64,
    jumps: &mut J,
    holds: &mut H,
) -> Result<WalkTrace> {
    check_start(graph, start)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon {horizon} must be finite and non-negative")));
    }
    let mut x = start as u32;
    let mut vertices = vec![x];
    let mut times = vec![0.0];
    let mut t = 0.0;
    loop {
        t += -uniform_open0(holds).ln();
        if t > horizon {
            break;
        }
        let nb = graph.neighbors(x as usize);
        x = nb[jumps.random_range(0..nb.len())];
        vertices.push(x);
        times.push(t);
    }
    Ok(WalkTrace { start: start as u32, vertices, times: Some(times), end_time: horizon })
}

/// Tree spanned by the sampled points of a [`DiscretizedCrt`], with edge
/// lengths from the coding function and the point masses on its nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpannedTree {
    parent: Vec<Option<usize>>,
    length: Vec<f64>,
    mass: Vec<f64>,
    point_node: Vec<usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SpannedTree {
    /// Tree with the given parent pointers, edge lengths to the parent and
    /// node masses; node `i` stands for point `i`.
    pub fn from_parts(parent: Vec<Option<usize>>, length: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        if length.len() != n || mass.len() != n {
            return Err(Error::Domain("parent, length and mass must be aligned".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut roots = 0;
        for v in 0..n {
            match parent[v] {
                None => roots += 1,
                Some(p) => {
                    if p >= n || !(length[v] > 0.0) {
                        return Err(Error::InvalidTree(format!("node {v} has a bad parent or a non-positive edge")));
                    }
                    adjacency[v].push((p, 1.0 / length[v]));
                    adjacency[p].push((v, 1.0 / length[v]));
                }
            }
            if !(mass[v] >= 0.0) {
                return Err(Error::Domain(format!("node {v} has negative mass")));
            }
        }
        if roots != 1 {
            return Err(Error::InvalidTree(format!("{roots} roots")));
        }
        let tree = Self { parent, length, mass, point_node: (0..n).collect(), adjacency };
        let reach = tree.distances_from(0);
        if let Some(v) = reach.iter().position(|d| d.is_infinite()) {
            return Err(Error::InvalidTree(format!("node {v} is not connected")));
        }
        Ok(tree)
    }

    /// Branch points sit at the minima of the coding function between
    /// consecutive sampled times; zero-length edges are contracted.
    pub fn from_crt(crt: &DiscretizedCrt) -> Result<Self> {
        let k = crt.times.len();
        let scale = crt.heights.iter().fold(1.0f64, |a, &h| a.max(h.abs()));
        let eps = 1e-12 * scale;
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut height = Vec::new();
        let mut mass = Vec::new();
        let mut point_node = vec![usize::MAX; k];
        let first = crt.order[0];
        parent.push(None);
        height.push(crt.heights[first]);
        mass.push(crt.space.weights[first]);
        point_node[first] = 0;
        let mut stack = vec![0usize];
        for a in 1..k {
            let p = crt.order[a];
            let g = crt.gap_min[a - 1];
            let h = crt.heights[p];
            let mut popped = None;
            while let Some(&top) = stack.last() {
                if height[top] > g + eps {
                    popped = stack.pop();
                } else {
                    break;
                }
            }
            match (stack.last().copied(), popped) {
                (None, Some(low)) => {
                    let b = parent.len();
                    parent.push(None);
                    height.push(g);
                    mass.push(0.0);
                    parent[low] = Some(b);
                    stack.push(b);
                }
                (Some(top), Some(low)) if height[top] < g - eps => {
                    let b = parent.len();
                    parent.push(Some(top));
                    height.push(g);
                    mass.push(0.0);
                    parent[low] = Some(b);
                    stack.push(b);
                }
                _ => {}
            }
            let branch = *stack.last().expect("stack holds the current branch");
            let w = crt.space.weights[p];
            if h - g <= eps {
                point_node[p] = branch;
                mass[branch] += w;
            } else {
                let v = parent.len();
                parent.push(Some(branch));
                height.push(h);
                mass.push(w);
                point_node[p] = v;
                stack.push(v);
            }
        }
        let length: Vec<f64> = (0..parent.len()).map(|v| parent[v].map_or(0.0, |p| height[v] - height[p])).collect();
        let mut tree = Self::from_parts_unchecked(parent, length, mass);
        tree.point_node = point_node;
        Ok(tree)
    }

    fn from_parts_unchecked(parent: Vec<Option<usize>>, length: Vec<f64>, mass: Vec<f64>) -> Self {
        let n = parent.len();
        let mut adjacency = vec![Vec::new(); n];
        for v in 0..n {
            if let Some(p) = parent[v] {
                adjacency[v].push((p, 1.0 / length[v]));
                adjacency[p].push((v, 1.0 / length[v]));
            }
        }
        Self { parent, length, mass, point_node: (0..n).collect(), adjacency }
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn node_of_point(&self, point: usize) -> usize {
        self.point_node[point]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn edge_length(&self, v: usize) -> f64 {
        self.length[v]
    }

    pub fn mass(&self, v: usize) -> f64 {
        self.mass[v]
    }

    /// Tree distance from `source` to every node.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.num_nodes()];
        dist[source] = 0.0;
        let mut stack = vec![source];
        while let Some(v) = stack.pop() {
            for &(w, c) in &self.adjacency[v] {
                if dist[w].is_infinite() {
                    dist[w] = dist[v] + 1.0 / c;
                    stack.push(w);
                }
            }
        }
        dist
    }
}

/// Walk on the tree spanned by `crt`, started at sampled point `start`.
pub fn walk_on_crt<R: Rng + ?Sized>(
    crt: &DiscretizedCrt,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<(SpannedTree, WalkTrace)> {
    if crt.times.len() < 2 {
        return Err(Error::Domain("at least two sampled points are needed".into()));
    }
    let tree = SpannedTree::from_crt(crt)?;
    if tree.num_nodes() < 2 {
        return Err(Error::Domain("sampled points span a single point".into()));
    }
    let node = tree.node_of_point(start);
    let trace = walk_on_tree(&tree, node, steps, rng)?;
    Ok((tree, trace))
}

/// Jumps to a neighbour with probability proportional to the conductance
/// `1/length`, after an exponential holding time of rate `sum c / mass`.
pub fn walk_on_tree<R: Rng + ?Sized>(tree: &SpannedTree, start: usize, steps: usize, rng: &mut R) -> Result<WalkTrace> {
    if start >= tree.num_nodes() || tree.adjacency[start].is_empty() {
        return Err(Error::Domain(format!("start node {start} is missing or isolated")));
    }
    let totals: Vec<f64> = tree.adjacency.iter().map(|a| a.iter().map(|e| e.1).sum()).collect();
    let mut x = start;
    let mut vertices = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    vertices.push(x as u32);
    times.push(0.0);
    let mut t = 0.0;
    for _ in 0..steps {
        if tree.mass[x] > 0.0 {
            t += -uniform_open0(rng).ln() * tree.mass[x] / totals[x];
        }
        let mut u = rng.random::<f64>() * totals[x];
        let adj = &tree.adjacency[x];
        let mut next = adj[adj.len() - 1].0;
        for &(w, c) in adj {
            if u < c {
                next = w;
                break;
            }
            u -= c;
        }
        x = next;
        vertices.push(x as u32);
        times.push(t);
    }
    let end_time = t;
    Ok(WalkTrace { start: start as u32, vertices, times: Some(times), end_time })
}

/// Distances `dist(X_t)` along the grid; fails when the grid runs past the trace.
pub fn trace_displacements(trace: &WalkTrace, grid: &[f64], dist: impl Fn(u32) -> f64) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&t| {
            if trace.times.is_none() && t.floor() as usize >= trace.len() {
                return Err(Error::Domain(format!("time {t} is beyond the trace of {} steps", trace.steps())));
            }
            trace.position_at(t).map(&dist)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRow {
    pub t: f64,
    pub mean: f64,
    pub median: f64,
    /// Percentile bootstrap band for the mean.
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementTable {
    pub rows: Vec<DisplacementRow>,
    /// Slope of `ln mean` against `ln t` over rows with positive `t`.
    pub slope: f64,
    pub traces: usize,
}

/// Per-time summaries of `samples[trace][i]`, the displacement at `grid[i]`.
pub fn displacement_stats<R: Rng + ?Sized>(
    samples: &[Vec<f64>],
    grid: &[f64],
    bootstrap: usize,
    rng: &mut R,
) -> Result<DisplacementTable> {
    if samples.len() < MIN_TRACES {
        return Err(Error::InsufficientData(format!("{} traces, need {MIN_TRACES}", samples.len())));
    }
    if samples.iter().any(|s| s.len() != grid.len()) {
        return Err(Error::Domain("every trace needs one displacement per grid time".into()));
    }
    let n = samples.len();
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let mut boot: Vec<f64> =
            (0..bootstrap).map(|_| (0..n).map(|_| col[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
        boot.sort_by(f64::total_cmp);
        let (mean_lo, mean_hi) =
            if boot.is_empty() { (mean, mean) } else { (quantile_sorted(&boot, 0.025), quantile_sorted(&boot, 0.975)) };
        rows.push(DisplacementRow {
            t,
            mean,
            median: quantile_sorted(&sorted, 0.5),
            mean_lo,
            mean_hi,
            q10: quantile_sorted(&sorted, 0.1),
            q90: quantile_sorted(&sorted, 0.9),
        });
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.t > 0.0 && r.mean > 0.0).map(|r| (r.t.ln(), r.mean.ln())).collect();
    let slope = if pts.len() >= 2 { least_squares_slope(&pts) } else { f64::NAN };
    Ok(DisplacementTable { rows, slope, traces: n })
}

/// Space and time factors matching a cluster walk with the continuum walk:
/// step `time * t` corresponds to time `t`, and distances are multiplied by `space`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedScaling {
    pub space: f64,
    pub time: f64,
}

impl MatchedScaling {
    /// `space = 1 / (gamma sqrt n)`, `time = theta n^{3/2}`.
    pub fn new(n: f64, constants: Option<&ScalingConstants>) -> Result<Self> {
        let c = constants.ok_or_else(|| Error::InsufficientData("scaling constants are required".into()))?;
        if !(n > 0.0) {
            return Err(Error::Domain(format!("size {n} must be positive")));
        }
        Ok(Self { space: 1.0 / (c.gamma.value * n.sqrt()), time: c.theta.value * n.powf(1.5) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsAtTime {
    pub t: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS test of the displacement marginals at each matched time.
pub fn path_law_comparison(a: &[Vec<f64>], b: &[Vec<f64>], times: &[f64]) -> Result<Vec<KsAtTime>> {
    if a.iter().chain(b).any(|s| s.len() != times.len()) {
        return Err(Error::Domain("every trace needs one displacement per matched time".into()));
    }
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let x: Vec<f64> = a.iter().map(|s| s[i]).collect();
            let y: Vec<f64> = b.iter().map(|s| s[i]).collect();
            let KsResult { statistic, p_value } = ks_two_sample(&x, &y)?;
            Ok(KsAtTime { t, statistic, p_value })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_of_two_alternates() {
        let g = Graph::path(2);
        let mut rng = crate::rng::stream(3, 0);
        let w = srw(&g, 0, 9, &mut rng).unwrap();
        for (i, &v) in w.vertices.iter().enumerate() {
            assert_eq!(v as usize, i % 2);
        }
    }

    #[test]
    fn isolated_start_is_rejected() {
        let g = Graph::from_edges(1, []);
        let mut rng = crate::rng::stream(3, 0);
        assert!(srw(&g, 0, 5, &mut rng).is_err());
        assert!(ctrw(&g, 0, 5.0, &mut rng).is_err());
    }
}
