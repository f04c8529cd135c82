//! Experiment building blocks shared by the subcommands and the criteria.

use rand::Rng;
use serde::{Deserialize, Serialize};

use critperc::cluster::Cluster;
use critperc::coding::Colour;
use critperc::continuum::crt_from_function;
use critperc::geometry::{diameter, distortion, graph_distance, Correspondence, FiniteMetricMeasureSpace};
use critperc::model::ScalingConstants;
use critperc::Result;

/// Distortion of a cluster against the tree coded by its own height process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledGeometry {
    pub distortion: f64,
    pub rescaled_diameter: f64,
}

/// Cluster metric `sigma / (chi_d sqrt(beta n))` against the discretized tree
/// of `sigma / (2 sqrt(beta n)) H`, where `H` is the height process of the
/// coding tree. Points are `k` uniform depth-first positions plus the root;
/// a black tree vertex is paired with its cluster vertex and a white one with
/// its parent's.
pub fn coupled_geometry<R: Rng + ?Sized>(
    cluster: &Cluster,
    constants: &ScalingConstants,
    n: u64,
    k: usize,
    rng: &mut R,
) -> Result<CoupledGeometry> {
    let (beta, sigma, chi) = (constants.beta.value, constants.sigma.value, constants.chi_d.value);
    let scale = (beta * n as f64).sqrt();
    let s = &cluster.structures;
    let dfs = cluster.depth_first_vertices();
    let heights = cluster.height_process();
    let vertex = |u: usize| -> usize {
        if u == s.root_white {
            return cluster.root();
        }
        let black = if s.tree.colour(u) == Colour::Black { u } else { s.tree.parent(u).unwrap() };
        cluster.decorated.vertex_of_tree[black]
    };
    let mut positions = vec![0usize];
    positions.extend((0..k).map(|_| rng.random_range(0..dfs.len())));
    let points: Vec<usize> = positions.iter().map(|&j| vertex(dfs[j])).collect();
    let mut values: Vec<f64> = heights.iter().map(|&h| sigma / (2.0 * scale) * h as f64).collect();
    values.push(0.0);
    let times = positions.iter().map(|&j| j as f64).collect();
    let crt = crt_from_function(&values, 1.0, dfs.len() as f64, times, vec![1.0; positions.len()])?;
    let factor = sigma / (chi * scale);
    let x = FiniteMetricMeasureSpace::from_graph(cluster.graph(), &points, vec![1.0; points.len()], 0)?.scaled(factor);
    let distortion = distortion(&Correspondence::identity(positions.len()), &x, &crt.space)?;
    let rescaled_diameter = diameter(cluster.graph())? as f64 * factor;
    Ok(CoupledGeometry { distortion, rescaled_diameter })
}

/// Graph distance from the root at each grid time of a simple random walk.
pub fn root_walk_displacements<R: Rng + ?Sized>(cluster: &Cluster, grid: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let steps = grid.iter().fold(0.0f64, |a, &b| a.max(b)).floor() as usize;
    let dist = graph_distance(cluster.graph(), &[cluster.root()])?;
    let walk = critperc::dynamics::srw(cluster.graph(), cluster.root(), steps, rng)?;
    critperc::dynamics::trace_displacements(&walk, grid, |v| dist[v as usize] as f64)
}

/// `points_per_decade` log-spaced times from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let k = ((decades * points_per_decade as f64).round() as usize).max(1);
    (0..=k).map(|i| (lo * 10f64.powf(decades * i as f64 / k as f64)).round()).collect()
}
