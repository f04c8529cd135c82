//! Model parameters and the closed-form laws derived from `alpha`.
//!
//! The half-planar triangulation is parametrised by `alpha`, the probability
//! that peeling a boundary edge reveals an internal vertex. Everything else
//! (critical threshold, Boltzmann weight, step and offspring laws) follows.

mod constants;

pub use constants::{
    estimate_scaling_constants, estimate_scaling_constants_with, estimate_sigma, sample_decoration_summary,
    DecorationSample, Estimate, ScalingBudget, ScalingConstants, FLAG_RELATIVE_STDERR, MIN_BUDGET,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 2.0 / 3.0;
pub const ALPHA_MAX: f64 = 1.0;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > ALPHA_MIN && alpha < ALPHA_MAX {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Critical site-percolation threshold `(1 - sqrt(3 - 2/alpha)) / 2`.
pub fn critical_probability(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(0.5 * (1.0 - (3.0 - 2.0 / alpha).sqrt()))
}

/// Natural log of the peeling probability `p_m`, for any `alpha` in `[2/3, 1)`.
pub(crate) fn ln_peeling_unchecked(alpha: f64, m: u64) -> f64 {
    let mf = m as f64;
    std::f64::consts::LN_2 - mf * 4f64.ln() + ln_gamma(2.0 * mf - 1.0) - ln_gamma(mf) - ln_gamma(mf + 2.0)
        + mf * (2.0 / alpha - 2.0).ln()
        + ((3.0 * alpha - 2.0) * mf + 1.0).ln()
}

/// Probability `p_m` that peeling swallows `m` boundary edges on a given side
/// pair (left plus right), evaluated in log space.
pub fn peeling_probability(alpha: f64, m: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::Domain("peeling distance m must be at least 1".into()));
    }
    Ok(ln_peeling_unchecked(alpha, m).exp())
}

/// Parameters of the model at a fixed `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub p_c: f64,
    pub c_alpha: f64,
    /// Boltzmann weight per internal vertex.
    pub q: f64,
}

impl ModelParams {
    pub fn new(alpha: f64) -> Result<Self> {
        let p_c = critical_probability(alpha)?;
        let c_alpha = 2.0 / (1.0 - (alpha * (3.0 * alpha - 2.0)).sqrt());
        let q = alpha * alpha * (1.0 - alpha) / 2.0;
        Ok(Self { alpha, p_c, c_alpha, q })
    }

    pub fn peeling_probability(&self, m: u64) -> f64 {
        ln_peeling_unchecked(self.alpha, m).exp()
    }

    /// Weight per boundary edge of the half-plane model, `q / alpha`.
    pub fn boundary_weight(&self) -> f64 {
        self.q / self.alpha
    }

    pub fn step_law(&self) -> StepLaw {
        StepLaw::new(self)
    }

    pub fn offspring_laws(&self) -> OffspringLaws {
        OffspringLaws::new(self)
    }
}

/// Table of `weights[m-1]` for `m = 1..`, extended until the remaining mass
/// (known exactly) falls below `tol`, plus the closed form for on-demand terms.
#[derive(Debug, Clone)]
pub(crate) struct TailTable {
    alpha: f64,
    scale: f64,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    guide: Vec<u32>,
    total: f64,
}

const GUIDE_CELLS: usize = 1024;

impl TailTable {
    /// Weights `scale * p_m`; the full series sums to `scale * (1 - alpha)`.
    /// `tol` is relative to that total.
    pub(crate) fn new(alpha: f64, scale: f64, tol: f64) -> Self {
        let total = scale * (1.0 - alpha);
        let mut weights = Vec::new();
        let mut acc = 0.0;
        let mut m = 1u64;
        loop {
            let w = scale * ln_peeling_unchecked(alpha, m).exp();
            weights.push(w);
            acc += w;
            if total - acc < tol * total || m >= 1 << 16 {
                break;
            }
            m += 1;
        }
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut guide = Vec::with_capacity(GUIDE_CELLS);
        let mut i = 0;
        for j in 0..GUIDE_CELLS {
            let level = total * j as f64 / GUIDE_CELLS as f64;
            while i + 1 < cumulative.len() && cumulative[i] <= level {
                i += 1;
            }
            guide.push(i as u32);
        }
        Self { alpha, scale, weights, cumulative, guide, total }
    }

    pub(crate) fn weight(&self, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        match self.weights.get((m - 1) as usize) {
            Some(w) => *w,
            None => self.scale * ln_peeling_unchecked(self.alpha, m).exp(),
        }
    }

    /// Smallest `m` with `u < sum_{j<=m} w_j`, starting from a guide table.
    pub(crate) fn invert(&self, u: f64) -> u64 {
        let cell = ((u / self.total * GUIDE_CELLS as f64) as usize).min(GUIDE_CELLS - 1);
        let mut i = self.guide[cell] as usize;
        while i < self.cumulative.len() && u >= self.cumulative[i] {
            i += 1;
        }
        if i < self.cumulative.len() {
            return i as u64 + 1;
        }
        let mut u = u - self.cumulative[self.cumulative.len() - 1];
        let mut m = self.weights.len() as u64;
        loop {
            m += 1;
            let w = self.weight(m);
            if u < w || w == 0.0 {
                return m;
            }
            u -= w;
        }
    }
}

/// Increment law of the contour process:
/// `mu(1) = c alpha p_c` and `mu(-m) = c p_m / 2`.
#[derive(Debug, Clone)]
pub struct StepLaw {
    up: f64,
    down: TailTable,
}

impl StepLaw {
    pub fn new(params: &ModelParams) -> Self {
        let up = params.c_alpha * params.alpha * params.p_c;
        let down = TailTable::new(params.alpha, params.c_alpha / 2.0, 1e-15);
        Self { up, down }
    }

    /// `mu(i)` for any integer `i`.
    pub fn prob(&self, i: i64) -> f64 {
        match i {
            1 => self.up,
            i if i < 0 => self.down.weight(i.unsigned_abs()),
            _ => 0.0,
        }
    }

    pub fn up_probability(&self) -> f64 {
        self.up
    }

    pub fn down_probability(&self) -> f64 {
        self.down.total
    }

    /// Number of tabulated down-steps.
    pub fn table_len(&self) -> usize {
        self.down.weights.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        if u < self.up {
            1
        } else {
            -(self.down.invert(u - self.up) as i64)
        }
    }

    /// Size `m >= 1` of a down-step, conditionally on the step being down.
    pub fn sample_down_size<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.down.total;
        self.down.invert(u)
    }

    /// Partial sums of mass and first moment over `{1} ∪ {-1..=-k}`.
    pub fn truncated_moments(&self, k: u64) -> (f64, f64) {
        let mut mass = self.up;
        let mut mean = self.up;
        for m in 1..=k {
            let w = self.down.weight(m);
            mass += w;
            mean -= m as f64 * w;
        }
        (mass, mean)
    }
}

/// Offspring laws of the two-type Galton-Watson tree coded by the reversed
/// contour walk.
#[derive(Debug, Clone)]
pub struct OffspringLaws {
    /// `mu_bullet(k) = s (1-s)^k`.
    pub bullet_param: f64,
    circ: TailTable,
    circ_biased: Vec<f64>,
    circ_mean: f64,
    circ_second: f64,
}

impl OffspringLaws {
    pub fn new(params: &ModelParams) -> Self {
        let bullet_param = params.c_alpha * params.alpha * params.p_c;
        let circ = TailTable::new(params.alpha, 1.0 / (1.0 - params.alpha), 1e-15);
        let mut circ_mean = 0.0;
        let mut circ_second = 0.0;
        for (i, w) in circ.weights.iter().enumerate() {
            let m = (i + 1) as f64;
            circ_mean += m * w;
            circ_second += m * m * w;
        }
        let circ_biased = circ.weights.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w / circ_mean).collect();
        Self { bullet_param, circ, circ_biased, circ_mean, circ_second }
    }

    pub fn bullet_pmf(&self, k: u64) -> f64 {
        self.bullet_param * (1.0 - self.bullet_param).powi(k as i32)
    }

    pub fn circ_pmf(&self, k: u64) -> f64 {
        self.circ.weight(k)
    }

    pub fn ln_bullet_pmf(&self, k: u64) -> f64 {
        self.bullet_param.ln() + k as f64 * (1.0 - self.bullet_param).ln()
    }

    pub fn ln_circ_pmf(&self, k: u64) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.circ_pmf(k).ln()
        }
    }

    pub fn mean_bullet(&self) -> f64 {
        (1.0 - self.bullet_param) / self.bullet_param
    }

    pub fn var_bullet(&self) -> f64 {
        (1.0 - self.bullet_param) / (self.bullet_param * self.bullet_param)
    }

    /// Mean of `mu_circ` by summation of the tabulated law.
    pub fn mean_circ(&self) -> f64 {
        self.circ_mean
    }

    pub fn var_circ(&self) -> f64 {
        self.circ_second - self.circ_mean * self.circ_mean
    }

    /// Mean of the size-biased black law, `E[mu] + Var(mu)/E[mu]`.
    pub fn mean_bullet_biased(&self) -> f64 {
        let m = self.mean_bullet();
        m + self.var_bullet() / m
    }

    pub fn sample_bullet<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = crate::rng::uniform_open0(rng);
        (u.ln() / (1.0 - self.bullet_param).ln()).floor() as u64
    }

    pub fn sample_circ<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.circ.total;
        self.circ.invert(u)
    }

    /// Size-biased black law `k mu_bullet(k) / E[mu_bullet]`.
    pub fn sample_bullet_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        1 + self.sample_bullet(rng) + self.sample_bullet(rng)
    }

    /// Size-biased white law `k mu_circ(k) / E[mu_circ]`.
    pub fn sample_circ_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let mut u: f64 = rng.random();
        for (i, w) in self.circ_biased.iter().enumerate() {
            if u < *w {
                return i as u64 + 1;
            }
            u -= w;
        }
        self.circ_biased.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_validation() {
        assert!(matches!(critical_probability(0.5), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(critical_probability(1.0), Err(Error::AlphaOutOfRange(_))));
        assert!((critical_probability(2.0 / 3.0 + 1e-9).unwrap() - 0.5).abs() < 1e-4);
        assert!(critical_probability(1.0 - 1e-9).unwrap() < 1e-4);
        assert!(peeling_probability(0.8, 0).is_err());
    }

    #[test]
    fn step_law_samples_match_probabilities() {
        let params = ModelParams::new(0.8).unwrap();
        let law = params.step_law();
        let mut rng = crate::rng::stream(7, 0);
        let n = 200_000;
        let mut ups = 0;
        let mut minus_one = 0;
        for _ in 0..n {
            match law.sample(&mut rng) {
                1 => ups += 1,
                -1 => minus_one += 1,
                _ => {}
            }
        }
        for (count, p) in [(ups, law.prob(1)), (minus_one, law.prob(-1))] {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((count as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }
}
