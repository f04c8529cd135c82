//! Brownian excursions with lifetime at least one and finite samples of the
//! continuum random tree they code.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FiniteMetricMeasureSpace;
use crate::rng::uniform_open0;

/// Default grid: `zeta / 2^14`.
pub const DEFAULT_MESH_DIVISOR: f64 = 16384.0;
pub const DEFAULT_POINTS: usize = 1000;
/// Bridge resamples on a grid refined by 2 at most this many times.
pub const MAX_REFINEMENTS: u32 = 3;

/// Lifetime with `P(zeta >= t) = t^{-1/2}` for `t >= 1`.
pub fn sample_lifetime<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    uniform_open0(rng).powi(-2)
}

/// Excursion on the grid `0, mesh, .., zeta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianExcursionSample {
    pub zeta: f64,
    pub mesh: f64,
    pub values: Vec<f64>,
    /// Grid index of the bridge minimum that was rotated to time 0.
    pub bridge_argmin: usize,
    pub refinements: u32,
    /// Interior grid values that are not positive after the last refinement.
    pub violations: usize,
}

impl BrownianExcursionSample {
    /// Linear interpolation between grid values.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t / self.mesh).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Brownian bridge on `[0, zeta]` rotated at its minimum (Vervaat).
pub fn sample_excursion_fixed_lifetime<R: Rng + ?Sized>(
    zeta: f64,
    mesh: f64,
    rng: &mut R,
) -> Result<BrownianExcursionSample> {
    if !(zeta >= 1.0 && zeta.is_finite()) {
        return Err(Error::Domain(format!("lifetime {zeta} must be at least 1")));
    }
    if !(mesh > 0.0) || mesh > zeta / 100.0 {
        return Err(Error::Domain(format!("mesh {mesh} must lie in (0, zeta/100]")));
    }
    let mut n = (zeta / mesh).ceil() as usize;
    let mut refinements = 0;
    loop {
        let h = zeta / n as f64;
        let sd = h.sqrt();
        let mut w = Vec::with_capacity(n + 1);
        w.push(0.0);
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            acc += sd * z;
            w.push(acc);
        }
        let end = w[n];
        let bridge: Vec<f64> = w.iter().enumerate().map(|(i, x)| x - end * i as f64 / n as f64).collect();
        let mut m = 0;
        for i in 1..n {
            if bridge[i] < bridge[m] {
                m = i;
            }
        }
        let mut values: Vec<f64> = (0..n).map(|j| bridge[(m + j) % n] - bridge[m]).collect();
        values.push(0.0);
        let violations = values[1..n].iter().filter(|&&v| v <= 0.0).count();
        if violations == 0 || refinements == MAX_REFINEMENTS {
            return Ok(BrownianExcursionSample { zeta, mesh: h, values, bridge_argmin: m, refinements, violations });
        }
        n *= 2;
        refinements += 1;
    }
}

/// Lifetime drawn from the conditioned law, then the excursion on the default grid.
pub fn sample_excursion<R: Rng + ?Sized>(rng: &mut R) -> Result<BrownianExcursionSample> {
    let zeta = sample_lifetime(rng);
    sample_excursion_fixed_lifetime(zeta, zeta / DEFAULT_MESH_DIVISOR, rng)
}

/// Finite sample of the tree coded by a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedCrt {
    pub zeta: f64,
    /// Coding time of each point; point 0 is the root at time 0.
    pub times: Vec<f64>,
    /// Coding-function value at each point.
    pub heights: Vec<f64>,
    /// Points in increasing time.
    pub order: Vec<usize>,
    /// Minimum of the coding function between consecutive points of `order`.
    pub gap_min: Vec<f64>,
    pub space: FiniteMetricMeasureSpace,
    /// Set when the grid has fewer than ten cells per sampled point.
    pub coarse: bool,
}

/// `k` uniform times plus the root, each sampled point carrying mass `zeta / k`.
pub fn crt_from_excursion<R: Rng + ?Sized>(
    exc: &BrownianExcursionSample,
    k: usize,
    rng: &mut R,
) -> Result<DiscretizedCrt> {
    if k < 2 {
        return Err(Error::Domain("at least two sampled points are needed".into()));
    }
    let mut times = vec![0.0];
    times.extend((0..k).map(|_| rng.random::<f64>() * exc.zeta));
    let mut weights = vec![exc.zeta / k as f64; k + 1];
    weights[0] = 0.0;
    crt_from_function(&exc.values, exc.mesh, exc.zeta, times, weights)
}

/// Tree distances `f(s) + f(t) - 2 min_[s,t] f` between the given times, with
/// the function read on its grid (`values[i]` at time `i * mesh`, grid minima).
pub fn crt_from_function(
    values: &[f64],
    mesh: f64,
    zeta: f64,
    times: Vec<f64>,
    weights: Vec<f64>,
) -> Result<DiscretizedCrt> {
    let k = times.len();
    if k == 0 || weights.len() != k || values.is_empty() {
        return Err(Error::Domain("times, weights and values must be non-empty and aligned".into()));
    }
    let last = values.len() - 1;
    let index = |t: f64| ((t / mesh).floor().max(0.0) as usize).min(last);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let heights: Vec<f64> = times.iter().map(|&t| values[index(t)]).collect();
    let gap_min: Vec<f64> = order
        .windows(2)
        .map(|w| {
            let (a, b) = (index(times[w[0]]), index(times[w[1]]));
            values[a..=b].iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut dist = vec![0.0; k * k];
    for a in 0..k {
        let mut m = heights[order[a]];
        for b in a + 1..k {
            m = m.min(gap_min[b - 1]);
            let (i, j) = (order[a], order[b]);
            let d = (heights[i] + heights[j] - 2.0 * m).max(0.0);
            dist[i * k + j] = d;
            dist[j * k + i] = d;
        }
    }
    let space = FiniteMetricMeasureSpace::new(dist, weights, 0)?;
    let coarse = values.len() < 10 * k;
    Ok(DiscretizedCrt { zeta, times, heights, order, gap_min, space, coarse })
}
