//! Lattice excursions, the peeling chain and tail statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, StepLaw, TailTable};

/// Which family of lattice paths a [`LatticePath`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathKind {
    /// `Z_0 = Z_n = 1`, `Z >= 1`, steps in `{+1, -1, -2, ...}`.
    Tree,
    /// `Z_0 = 1`, `Z_i >= 1` for `i < n`, `Z_n <= 0`, steps in `{+1, -1, -2, ...}`.
    Peeling,
    /// Time reversal of a tree excursion: steps in `{-1, +1, +2, ...}`.
    ReversedTree,
}

/// Integer path `Z_0, ..., Z_n` together with its family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePath {
    values: Vec<i64>,
    kind: PathKind,
}

fn violation(index: usize, reason: impl Into<String>) -> Error {
    Error::InvalidPath { index, reason: reason.into() }
}

impl LatticePath {
    pub fn new(values: Vec<i64>, kind: PathKind) -> Result<Self> {
        validate(&values, kind)?;
        Ok(Self { values, kind })
    }

    pub fn tree(values: Vec<i64>) -> Result<Self> {
        Self::new(values, PathKind::Tree)
    }

    pub fn peeling(values: Vec<i64>) -> Result<Self> {
        Self::new(values, PathKind::Peeling)
    }

    pub(crate) fn from_trusted(values: Vec<i64>, kind: PathKind) -> Self {
        debug_assert!(validate(&values, kind).is_ok());
        Self { values, kind }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<i64> {
        self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hitting time of the non-positive integers (peeling excursions only).
    pub fn tau(&self) -> Option<usize> {
        (self.kind == PathKind::Peeling).then(|| self.len())
    }

    pub fn terminal(&self) -> i64 {
        *self.values.last().expect("paths are non-empty")
    }

    pub fn increments(&self) -> impl Iterator<Item = i64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

fn validate(values: &[i64], kind: PathKind) -> Result<()> {
    let Some(&first) = values.first() else {
        return Err(violation(0, "empty path"));
    };
    if first != 1 {
        return Err(violation(0, format!("path must start at 1, found {first}")));
    }
    let n = values.len() - 1;
    for i in 1..=n {
        let step = values[i] - values[i - 1];
        let step_ok = match kind {
            PathKind::Tree | PathKind::Peeling => step == 1 || step < 0,
            PathKind::ReversedTree => step == -1 || step > 0,
        };
        if !step_ok {
            return Err(violation(i, format!("increment {step} not allowed")));
        }
        let last = i == n;
        match kind {
            PathKind::Tree | PathKind::ReversedTree => {
                if values[i] < 1 {
                    return Err(violation(i, "tree excursions stay at or above 1"));
                }
            }
            PathKind::Peeling => {
                if !last && values[i] < 1 {
                    return Err(violation(i, "peeling excursion hit 0 before its end"));
                }
            }
        }
    }
    match kind {
        PathKind::Tree | PathKind::ReversedTree => {
            if values[n] != 1 {
                return Err(violation(n, "tree excursions end at 1"));
            }
        }
        PathKind::Peeling => {
            if n == 0 || values[n] > 0 {
                return Err(violation(n, "peeling excursions end at a non-positive value"));
            }
        }
    }
    Ok(())
}

/// Resource caps for heavy-tailed samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub step_cap: u64,
    pub rejection_cap: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self { step_cap: 1_000_000_000, rejection_cap: 10_000_000 }
    }
}

/// Walk from 1 with law `law` until it first hits the non-positive integers.
pub fn sample_excursion<R: Rng + ?Sized>(law: &StepLaw, caps: &Caps, rng: &mut R) -> Result<LatticePath> {
    let mut values = vec![1i64];
    run_until_killed(law, caps.step_cap, &mut values, rng)?;
    Ok(LatticePath::from_trusted(values, PathKind::Peeling))
}

fn run_until_killed<R: Rng + ?Sized>(law: &StepLaw, cap: u64, values: &mut Vec<i64>, rng: &mut R) -> Result<()> {
    let mut z = *values.last().unwrap();
    while z > 0 {
        if values.len() as u64 > cap {
            return Err(Error::StepCap { cap });
        }
        z += law.sample(rng);
        values.push(z);
    }
    Ok(())
}

/// Hitting time `tau`, observed up to `cap` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TauSample {
    pub tau: u64,
    /// `true` when the walk was still alive after `cap` steps; then `tau == cap`
    /// and the true value is at least `cap`.
    pub censored: bool,
}

pub fn sample_tau<R: Rng + ?Sized>(law: &StepLaw, cap: u64, rng: &mut R) -> TauSample {
    let mut z = 1i64;
    let mut t = 0u64;
    while z > 0 {
        if t == cap {
            return TauSample { tau: cap, censored: true };
        }
        z += law.sample(rng);
        t += 1;
    }
    TauSample { tau: t, censored: false }
}

/// Accepted path and the number of rejected attempts.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub path: LatticePath,
    pub rejections: u64,
}

/// Rejection sampling of an excursion with `tau >= n`.
pub fn sample_conditioned_excursion<R: Rng + ?Sized>(
    law: &StepLaw,
    n: u64,
    caps: &Caps,
    rng: &mut R,
) -> Result<Conditioned> {
    sample_excursion_in_window(law, n, None, caps, rng)
}

/// Rejection sampling of an excursion with `lower <= tau < upper`.
///
/// Attempts are abandoned as soon as they reach `upper` steps.
pub fn sample_excursion_in_window<R: Rng + ?Sized>(
    law: &StepLaw,
    lower: u64,
    upper: Option<u64>,
    caps: &Caps,
    rng: &mut R,
) -> Result<Conditioned> {
    if lower == 0 {
        return Err(Error::Domain("conditioning level must be at least 1".into()));
    }
    if let Some(u) = upper {
        if u <= lower {
            return Err(Error::Domain(format!("empty window [{lower}, {u})")));
        }
    }
    let limit = upper.unwrap_or(u64::MAX).min(caps.step_cap.saturating_add(1));
    let mut values = Vec::new();
    for attempt in 0..caps.rejection_cap {
        values.clear();
        values.push(1i64);
        let mut z = 1i64;
        let mut t = 0u64;
        while z > 0 && t < limit {
            z += law.sample(rng);
            values.push(z);
            t += 1;
        }
        if z > 0 {
            if upper.is_none() {
                return Err(Error::StepCap { cap: caps.step_cap });
            }
            continue;
        }
        if t >= lower && upper.is_none_or(|u| t < u) {
            return Ok(Conditioned {
                path: LatticePath::from_trusted(std::mem::take(&mut values), PathKind::Peeling),
                rejections: attempt,
            });
        }
    }
    Err(Error::RejectionCap { cap: caps.rejection_cap })
}

/// Reverse a tree excursion: `Z'_k = Z_{n-k}`.
pub fn reverse(path: &LatticePath) -> Result<LatticePath> {
    let kind = match path.kind {
        PathKind::Tree => PathKind::ReversedTree,
        PathKind::ReversedTree => PathKind::Tree,
        PathKind::Peeling => return Err(Error::Domain("only tree excursions (ending at 1) can be reversed".into())),
    };
    let mut values = path.values.clone();
    values.reverse();
    Ok(LatticePath::from_trusted(values, kind))
}

/// One step of the peeling exploration along the percolation interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeelEvent {
    InternalBlack,
    InternalWhite,
    /// Third vertex on the boundary, `m` edges to the right; swallows white boundary.
    BoundaryRight(u64),
    /// Third vertex on the boundary, `m` edges to the left; swallows black boundary.
    BoundaryLeft(u64),
}

impl PeelEvent {
    /// Signed change of the black boundary length.
    pub fn delta(self) -> i64 {
        match self {
            PeelEvent::InternalBlack => 1,
            PeelEvent::InternalWhite | PeelEvent::BoundaryRight(_) => 0,
            PeelEvent::BoundaryLeft(m) => -(m as i64),
        }
    }
}

/// Per-step law of peeling events.
#[derive(Debug, Clone)]
pub struct PeelingLaw {
    alpha: f64,
    black: f64,
    distance: TailTable,
}

impl PeelingLaw {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            alpha: params.alpha,
            black: params.alpha * params.p_c,
            distance: TailTable::new(params.alpha, 1.0 / (1.0 - params.alpha), 1e-15),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PeelEvent {
        let u: f64 = rng.random();
        if u < self.black {
            PeelEvent::InternalBlack
        } else if u < self.alpha {
            PeelEvent::InternalWhite
        } else {
            let m = self.distance.invert(rng.random::<f64>());
            if rng.random::<bool>() {
                PeelEvent::BoundaryLeft(m)
            } else {
                PeelEvent::BoundaryRight(m)
            }
        }
    }

    /// Probability of a single event.
    pub fn prob(&self, event: PeelEvent) -> f64 {
        match event {
            PeelEvent::InternalBlack => self.black,
            PeelEvent::InternalWhite => self.alpha - self.black,
            PeelEvent::BoundaryLeft(m) | PeelEvent::BoundaryRight(m) => {
                (1.0 - self.alpha) * self.distance.weight(m) / 2.0
            }
        }
    }
}

/// Boundary lengths `B_0..B_T` and the events between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeelingTrace {
    pub boundary: Vec<i64>,
    pub events: Vec<PeelEvent>,
}

impl PeelingTrace {
    /// Build a trace from explicit boundary lengths (events inferred as
    /// internal-black, internal-white or boundary-left).
    pub fn from_boundary(boundary: Vec<i64>) -> Result<Self> {
        if boundary.first() != Some(&1) {
            return Err(violation(0, "peeling starts with B_0 = 1"));
        }
        let mut events = Vec::with_capacity(boundary.len());
        for (i, w) in boundary.windows(2).enumerate() {
            if w[0] <= 0 {
                return Err(violation(i, "trace continues after termination"));
            }
            let d = w[1] - w[0];
            events.push(match d {
                1 => PeelEvent::InternalBlack,
                0 => PeelEvent::InternalWhite,
                d if d < 0 => PeelEvent::BoundaryLeft(d.unsigned_abs()),
                _ => return Err(violation(i + 1, format!("boundary jump {d} impossible"))),
            });
        }
        Ok(Self { boundary, events })
    }

    /// Index `T` of the first `B <= 0`, if reached.
    pub fn termination_index(&self) -> Option<usize> {
        self.boundary.iter().position(|&b| b <= 0)
    }

    pub fn is_terminated(&self) -> bool {
        self.termination_index().is_some()
    }
}

/// Run the peeling chain from `B_0 = 1` until the black boundary is swallowed.
pub fn simulate_peeling<R: Rng + ?Sized>(params: &ModelParams, caps: &Caps, rng: &mut R) -> Result<PeelingTrace> {
    let law = PeelingLaw::new(params);
    let trace = peel(&law, u64::MAX, caps.step_cap, rng);
    if trace.is_terminated() {
        Ok(trace)
    } else {
        Err(Error::StepCap { cap: caps.step_cap })
    }
}

/// Run the peeling chain until termination or until the boundary length has
/// changed `max_changes` times, whichever comes first.
pub fn simulate_peeling_prefix<R: Rng + ?Sized>(law: &PeelingLaw, max_changes: u64, rng: &mut R) -> PeelingTrace {
    peel(law, max_changes, u64::MAX, rng)
}

fn peel<R: Rng + ?Sized>(law: &PeelingLaw, max_changes: u64, step_cap: u64, rng: &mut R) -> PeelingTrace {
    let mut boundary = vec![1i64];
    let mut events = Vec::new();
    let mut b = 1i64;
    let mut changes = 0;
    while b > 0 && changes < max_changes && (events.len() as u64) < step_cap {
        let e = law.sample(rng);
        let d = e.delta();
        if d != 0 {
            changes += 1;
        }
        b += d;
        events.push(e);
        boundary.push(b);
    }
    PeelingTrace { boundary, events }
}

/// Values of `B` at its strict-change times (starting with `B_0`).
pub fn contract_prefix(trace: &PeelingTrace) -> Vec<i64> {
    let mut z = vec![trace.boundary[0]];
    for &b in &trace.boundary[1..] {
        if b != *z.last().unwrap() {
            z.push(b);
        }
        if b <= 0 {
            break;
        }
    }
    z
}

/// Contour process of a terminated peeling trace.
pub fn contract_to_jumps(trace: &PeelingTrace) -> Result<LatticePath> {
    if !trace.is_terminated() {
        return Err(Error::Domain("peeling trace has not terminated".into()));
    }
    LatticePath::peeling(contract_prefix(trace))
}

/// Result of a log-log survival regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    /// 95% bootstrap interval.
    pub ci: (f64, f64),
    pub x_min: f64,
    pub x_max: f64,
    /// `(x, P(X >= x))` at the regression points.
    pub survival: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFitOptions {
    pub x_min: f64,
    /// Samples at or above this value are censored (true value at least this).
    pub censor: Option<f64>,
    /// Largest regression point keeps at least this many samples above it.
    pub min_tail_count: usize,
    pub points_per_decade: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for TailFitOptions {
    fn default() -> Self {
        Self { x_min: 10.0, censor: None, min_tail_count: 50, points_per_decade: 8, bootstrap: 400, seed: 1 }
    }
}

pub const MIN_TAIL_SAMPLES: usize = 10_000;

/// Fit `P(X >= x) ~ C x^e` by least squares on log-spaced points.
pub fn tail_exponent_estimate(samples: &[f64], opts: &TailFitOptions) -> Result<TailFit> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, at least {MIN_TAIL_SAMPLES} required",
            samples.len()
        )));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must not be NaN"));
    let n = sorted.len();
    let count_ge = |x: f64| n - sorted.partition_point(|&v| v < x);

    let x_min = opts.x_min.max(sorted[0]);
    let mut x_max = sorted[n - opts.min_tail_count.min(n - 1) - 1];
    if let Some(c) = opts.censor {
        x_max = x_max.min(c);
    }
    if !(x_min > 0.0) || x_max < 100.0 * x_min {
        return Err(Error::InsufficientData(format!("support [{x_min}, {x_max}] spans fewer than two decades")));
    }
    let decades = (x_max / x_min).log10();
    let k = ((decades * opts.points_per_decade as f64).floor() as usize).max(2);
    let xs: Vec<f64> = (0..=k).map(|i| x_min * 10f64.powf(decades * i as f64 / k as f64)).collect();
    let counts: Vec<usize> = xs.iter().map(|&x| count_ge(x)).collect();
    let fit = |counts: &[usize]| -> f64 {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&x, &c)| (x.ln(), (c as f64 / n as f64).ln()))
            .collect();
        least_squares_slope(&pts)
    };
    let exponent = fit(&counts);

    // Bootstrap over the multinomial counts of the bins between regression points.
    let mut bins = Vec::with_capacity(k + 2);
    bins.push(n - counts[0]);
    for i in 0..k {
        bins.push(counts[i] - counts[i + 1]);
    }
    bins.push(counts[k]);
    let mut rng = crate::rng::stream(opts.seed, 0);
    let mut boots = Vec::with_capacity(opts.bootstrap);
    for _ in 0..opts.bootstrap {
        let resampled = multinomial(n, &bins, &mut rng);
        let mut c = vec![0usize; k + 1];
        let mut acc = 0;
        for i in (0..=k).rev() {
            acc += resampled[i + 1];
            c[i] = acc;
        }
        boots.push(fit(&c));
    }
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci = if boots.is_empty() {
        (exponent, exponent)
    } else {
        (quantile_sorted(&boots, 0.025), quantile_sorted(&boots, 0.975))
    };
    let survival = xs.iter().zip(&counts).map(|(&x, &c)| (x, c as f64 / n as f64)).collect();
    Ok(TailFit { exponent, ci, x_min, x_max: xs[k], survival })
}

fn multinomial<R: Rng + ?Sized>(n: usize, weights: &[usize], rng: &mut R) -> Vec<usize> {
    use rand_distr::{Binomial, Distribution};
    let total: usize = weights.iter().sum();
    let mut left = n as u64;
    let mut mass_left = total as f64;
    let mut out = Vec::with_capacity(weights.len());
    for &w in weights {
        if left == 0 || mass_left <= 0.0 {
            out.push(0);
            continue;
        }
        let p = (w as f64 / mass_left).clamp(0.0, 1.0);
        let draw = Binomial::new(left, p).expect("valid binomial").sample(rng);
        out.push(draw as usize);
        left -= draw;
        mass_left -= w as f64;
    }
    out
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_reports_first_violation() {
        let err = LatticePath::tree(vec![1, 2, 2, 1]).unwrap_err();
        assert_eq!(err, Error::InvalidPath { index: 2, reason: "increment 0 not allowed".into() });
        assert!(LatticePath::peeling(vec![1, 0, 1]).is_err());
        assert!(LatticePath::peeling(vec![1]).is_err());
        assert!(LatticePath::tree(vec![1]).is_ok());
    }

    #[test]
    fn window_sampler_respects_bounds() {
        let params = ModelParams::new(0.8).unwrap();
        let law = params.step_law();
        let mut rng = crate::rng::stream(3, 0);
        for _ in 0..50 {
            let c = sample_excursion_in_window(&law, 20, Some(40), &Caps::default(), &mut rng).unwrap();
            let tau = c.path.tau().unwrap();
            assert!((20..40).contains(&tau));
        }
    }
}
