//! Monte Carlo estimates of the scaling constants.
//!
//! `beta` and `beta_degree` come from the mean volume and degree mass of the
//! graph inserted at a down-step; `chi_d` and `chi_r` from graph distance and
//! resistance between two uniform boundary vertices of a graph inserted at a
//! size-biased white vertex; `sigma` from the mean rescaled height of
//! conditioned two-type trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::boltzmann::BoundaryCondition;
use crate::cluster::{sample_decoration, DecorationFamily};
use crate::coding::{sample_two_type_gw, GwSample};
use crate::error::{Error, Result};
use crate::geometry::effective_resistance;
use crate::rng::{stream, substream};

/// Relative standard error above which an estimate is flagged.
pub const FLAG_RELATIVE_STDERR: f64 = 0.10;

/// Smallest budget per constant.
pub const MIN_BUDGET: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub flagged: bool,
}

impl Estimate {
    fn new(value: f64, stderr: f64, samples: u64) -> Self {
        let flagged = !(stderr <= FLAG_RELATIVE_STDERR * value.abs());
        Self { value, stderr, samples, flagged }
    }

    /// Product of independent estimates raised to powers, with first-order error.
    fn combine(parts: &[(Estimate, f64)]) -> Self {
        let value: f64 = parts.iter().map(|(e, p)| e.value.powf(*p)).product();
        let rel2: f64 = parts.iter().map(|(e, p)| (p * e.stderr / e.value).powi(2)).sum();
        let samples = parts.iter().map(|(e, _)| e.samples).min().unwrap_or(0);
        Self::new(value, value.abs() * rel2.sqrt(), samples)
    }
}

/// Sample counts per constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingBudget {
    /// Decorations drawn for `beta` and `beta_degree`.
    pub volume: u64,
    /// Decorations drawn for `chi_d` and `chi_r`.
    pub through: u64,
    /// Conditioned trees drawn for `sigma`.
    pub trees: u64,
    /// Trees are conditioned on size in `[tree_size, 4 tree_size)`.
    pub tree_size: u64,
}

impl Default for ScalingBudget {
    fn default() -> Self {
        Self { volume: 20_000, through: 20_000, trees: 1000, tree_size: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub beta: Estimate,
    pub beta_degree: Estimate,
    pub chi_d: Estimate,
    pub chi_r: Estimate,
    pub sigma: Estimate,
    pub gamma: Estimate,
    pub delta: Estimate,
    pub kappa: Estimate,
    pub theta: Estimate,
}

/// Summary of one inserted graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecorationSample {
    pub boundary_len: usize,
    /// Kept vertices minus the parent boundary vertex.
    pub volume: u64,
    /// Twice the number of kept edges.
    pub degree_mass: u64,
    /// Graph distance and resistance between two distinct uniform boundary vertices.
    pub through_distance: u32,
    pub through_resistance: f64,
}

/// Draw a decoration of the `m`-gon with all-black boundary and summarise it.
pub fn sample_decoration_summary<R: Rng + ?Sized>(
    family: &DecorationFamily,
    m: usize,
    through: bool,
    rng: &mut R,
) -> Result<DecorationSample> {
    let dec = sample_decoration(family, m, &BoundaryCondition::AllBlack, true, rng)?;
    let g = dec.graph();
    let (mut through_distance, mut through_resistance) = (0, 0.0);
    if through {
        // Boundary vertices are kept and sit at local positions 0..m.
        let a = rng.random_range(0..m);
        let b = (a + rng.random_range(1..m)) % m;
        through_distance = g.bfs(&[a])[b];
        through_resistance = effective_resistance(&g, &[(a, b)])?[0];
    }
    Ok(DecorationSample {
        boundary_len: m,
        volume: dec.kept.len() as u64 - 1,
        degree_mass: 2 * g.num_edges() as u64,
        through_distance,
        through_resistance,
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Estimates for the critical decoration family.
pub fn estimate_scaling_constants(params: &ModelParams, budget: &ScalingBudget, seed: u64) -> Result<ScalingConstants> {
    estimate_scaling_constants_with(params, &DecorationFamily::critical(params), budget, seed)
}

pub fn estimate_scaling_constants_with(
    params: &ModelParams,
    family: &DecorationFamily,
    budget: &ScalingBudget,
    seed: u64,
) -> Result<ScalingConstants> {
    if budget.volume < MIN_BUDGET || budget.through < MIN_BUDGET || budget.trees < MIN_BUDGET / 10 {
        return Err(Error::InsufficientData(format!(
            "budgets must be at least {MIN_BUDGET} decorations and {} trees",
            MIN_BUDGET / 10
        )));
    }
    let law = params.step_law();
    let laws = params.offspring_laws();
    let down = law.down_probability();

    let mut rng = stream(seed, 0);
    let mut vol = Vec::with_capacity(budget.volume as usize);
    let mut deg = Vec::with_capacity(budget.volume as usize);
    for _ in 0..budget.volume {
        let m = law.sample_down_size(&mut rng) as usize + 1;
        let s = sample_decoration_summary(family, m, false, &mut rng)?;
        vol.push(s.volume as f64);
        deg.push(s.degree_mass as f64);
    }
    let (mv, sv) = mean_se(&vol);
    let (md, sd) = mean_se(&deg);
    let beta = Estimate::new(1.0 / (down * mv), sv / (down * mv * mv), budget.volume);
    let beta_degree = Estimate::new(1.0 / (down * md), sd / (down * md * md), budget.volume);
    // kappa is a ratio of means over the same draws.
    let ratio = md / mv;
    let n = vol.len() as f64;
    let resid: Vec<f64> = vol.iter().zip(&deg).map(|(v, d)| d - ratio * v).collect();
    let var_r = resid.iter().map(|r| r * r).sum::<f64>() / (n - 1.0);
    let kappa = Estimate::new(ratio, (var_r / n).sqrt() / mv, budget.volume);

    let mut rng = stream(seed, 1);
    let factor = laws.mean_bullet() * laws.mean_circ();
    let mut eta = Vec::with_capacity(budget.through as usize);
    let mut res = Vec::with_capacity(budget.through as usize);
    for _ in 0..budget.through {
        let m = laws.sample_circ_biased(&mut rng) as usize + 1;
        let s = sample_decoration_summary(family, m, true, &mut rng)?;
        eta.push(s.through_distance as f64);
        res.push(s.through_resistance);
    }
    let (me, se) = mean_se(&eta);
    let (mr, sr) = mean_se(&res);
    let chi_d = Estimate::new(factor * me, factor * se, budget.through);
    let chi_r = Estimate::new(factor * mr, factor * sr, budget.through);

    let sigma = estimate_sigma(params, budget.trees, budget.tree_size, seed)?;

    let gamma = Estimate::combine(&[(chi_d, 1.0), (beta, 0.5), (sigma, -1.0)]);
    let delta = Estimate::combine(&[(chi_r, 1.0), (chi_d, -1.0)]);
    let theta_value = delta.value * gamma.value * kappa.value;
    let theta_rel = ((delta.stderr / delta.value).powi(2)
        + (gamma.stderr / gamma.value).powi(2)
        + (kappa.stderr / kappa.value).powi(2))
    .sqrt();
    let theta = Estimate::new(theta_value, theta_value * theta_rel, gamma.samples.min(kappa.samples));
    Ok(ScalingConstants { beta, beta_degree, chi_d, chi_r, sigma, gamma, delta, kappa, theta })
}

/// `sqrt(pi/2) / E[mean height / sqrt(N)]` over two-type trees with
/// `size <= N < 4 size` vertices.
pub fn estimate_sigma(params: &ModelParams, trees: u64, size: u64, seed: u64) -> Result<Estimate> {
    let laws = params.offspring_laws();
    let mut heights = Vec::with_capacity(trees as usize);
    let cap = 4 * size as usize - 1;
    for t in 0..trees {
        let mut rng = substream(seed, 2, t);
        let tree = loop {
            if let GwSample::Complete(tree) = sample_two_type_gw(&laws, cap, &mut rng) {
                if tree.len() as u64 >= size {
                    break tree;
                }
            }
        };
        let n = tree.len() as f64;
        let mean_depth = (0..tree.len()).map(|u| tree.depth(u) as f64).sum::<f64>() / n;
        heights.push(mean_depth / n.sqrt());
    }
    let (m, s) = mean_se(&heights);
    let c = (std::f64::consts::PI / 2.0).sqrt();
    Ok(Estimate::new(c / m, c * s / (m * m), trees))
}
