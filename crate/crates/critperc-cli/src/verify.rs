//! Acceptance criteria, grouped into suites.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use critperc::boltzmann::{
    enumerate_triangulations, loopless_counts, partition_function, sample_boltzmann, PartitionFunction,
};
use critperc::cluster::{
    cross_condition, decompose_root_structure, sample_cluster_conditioned, ConditioningMode, ConditioningRequest,
    DecorationFamily,
};
use critperc::coding::{
    excursion_from_tree, excursion_quotient, looptree_from_tree, reversed_walk_log_probability, tree_from_excursion,
    tree_probability, TwoTypeTree,
};
use critperc::dynamics::displacement_stats;
use critperc::excursions::{
    contract_prefix, sample_excursion_in_window, simulate_peeling_prefix, tail_exponent_estimate, Caps, LatticePath,
    PeelingLaw, TailFitOptions,
};
use critperc::geometry::{effective_resistance, Graph};
use critperc::model::{estimate_scaling_constants, peeling_probability, ModelParams, ScalingBudget, ScalingConstants};
use critperc::rng::stream;
use critperc::stats::{chi_square, ks_two_sample, mean_and_se, median};

use crate::commands::{censor_level, tail_samples, TailKind};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiments::{coupled_geometry, log_grid, root_walk_displacements};
use crate::output::run_tasks;

pub const ALPHA_GRID: [f64; 6] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95];
/// Parameter of the statistical criteria.
pub const ALPHA: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
}

fn check(name: impl Into<String>, measured: f64, passed: bool, tolerance: impl Into<String>) -> Check {
    Check { name: name.into(), measured, tolerance: tolerance.into(), passed }
}

fn below(name: impl Into<String>, measured: f64, limit: f64) -> Check {
    check(name, measured, measured < limit, format!("< {limit:e}"))
}

fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Check {
    check(format!("{} ({err})", name.into()), f64::NAN, false, "no error")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: String,
    pub title: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
    pub passed: bool,
}

impl CriterionReport {
    /// One line: verdict, then the failing checks (or all checks when passing).
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let shown: Vec<&Check> =
            if self.passed { self.checks.iter().collect() } else { self.checks.iter().filter(|c| !c.passed).collect() };
        let detail: Vec<String> =
            shown.iter().map(|c| format!("{} = {} ({})", c.name, number(c.measured), c.tolerance)).collect();
        format!("{} {verdict} {} [{:.1} s]: {}", self.id, self.title, self.seconds, detail.join("; "))
    }
}

fn number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub budget: f64,
    pub seed: u64,
    pub criteria: Vec<CriterionReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Unit,
    Oracle,
    Statistical,
}

impl std::str::FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Suite::Unit),
            "oracle" => Ok(Suite::Oracle),
            "statistical" => Ok(Suite::Statistical),
            _ => Err(CliError::Usage(format!("unknown suite {s:?}; expected unit, oracle or statistical"))),
        }
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Unit => "unit",
            Suite::Oracle => "oracle",
            Suite::Statistical => "statistical",
        }
    }

    pub fn criteria(&self) -> &'static [Criterion] {
        match self {
            Suite::Unit => &[A1],
            Suite::Oracle => &[A2, A5, A9],
            Suite::Statistical => &[A3, A4, A6, A7, A8],
        }
    }
}

/// Shared state: sample budget multiplier and lazily estimated constants.
pub struct Context {
    pub seed: u64,
    pub budget: f64,
    pub workers: usize,
    constants: OnceLock<critperc::Result<ScalingConstants>>,
}

impl Context {
    pub fn new(seed: u64, budget: f64, workers: usize) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(CliError::Usage(format!("budget must be positive, got {budget}")));
        }
        Ok(Self { seed, budget, workers: workers.max(1), constants: OnceLock::new() })
    }

    /// `full` scaled by the budget, at least 1.
    pub fn count(&self, full: usize) -> usize {
        ((full as f64 * self.budget).round() as usize).max(1)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(ALPHA).expect("valid alpha")
    }

    pub fn constants(&self) -> critperc::Result<&ScalingConstants> {
        self.constants
            .get_or_init(|| estimate_scaling_constants(&self.params(), &ScalingBudget::default(), self.seed))
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn stream(&self, criterion: u64, task: usize) -> critperc::rng::SimRng {
        stream(self.seed ^ (criterion << 48), task as u64)
    }
}

pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    /// Runtime limit in seconds.
    pub limit: f64,
    run: fn(&Context) -> Vec<Check>,
}

impl Criterion {
    pub fn run(&self, ctx: &Context) -> CriterionReport {
        let t0 = Instant::now();
        let mut checks = (self.run)(ctx);
        let seconds = t0.elapsed().as_secs_f64();
        checks.push(below("runtime_s", seconds, self.limit));
        let passed = checks.iter().all(|c| c.passed);
        CriterionReport { id: self.id.into(), title: self.title.into(), checks, seconds, passed }
    }
}

pub const A1: Criterion = Criterion { id: "A1", title: "exact constants", limit: 1.0, run: exact_constants };
pub const A2: Criterion = Criterion { id: "A2", title: "coding bijection and tree law", limit: 60.0, run: bijection };
pub const A3: Criterion =
    Criterion { id: "A3", title: "peeling contour increments", limit: 120.0, run: peeling_contour };
pub const A4: Criterion = Criterion { id: "A4", title: "tail exponents", limit: 900.0, run: tail_exponents };
pub const A5: Criterion = Criterion { id: "A5", title: "Boltzmann oracle", limit: 600.0, run: boltzmann_oracle };
pub const A6: Criterion =
    Criterion { id: "A6", title: "root structure statistics", limit: 1800.0, run: structure_statistics };
pub const A7: Criterion =
    Criterion { id: "A7", title: "geometry convergence trend", limit: 7200.0, run: geometry_trend };
pub const A8: Criterion =
    Criterion { id: "A8", title: "walk exponent and resistance ratio", limit: 7200.0, run: walk_exponent };
pub const A9: Criterion =
    Criterion { id: "A9", title: "effective resistance oracle", limit: 60.0, run: resistance_oracle };

pub const ALL: [&Criterion; 9] = [&A1, &A2, &A3, &A4, &A5, &A6, &A7, &A8, &A9];

pub fn run_suite(suite: Suite, ctx: &Context) -> VerifyReport {
    let criteria: Vec<CriterionReport> = suite.criteria().iter().map(|c| c.run(ctx)).collect();
    let passed = criteria.iter().all(|c| c.passed);
    VerifyReport { suite: suite.name().into(), budget: ctx.budget, seed: ctx.seed, criteria, passed }
}

fn exact_constants(_: &Context) -> Vec<Check> {
    let mut out = Vec::new();
    for &a in &ALPHA_GRID {
        let p = match ModelParams::new(a) {
            Ok(p) => p,
            Err(e) => return vec![failed(format!("alpha={a:.2}"), e)],
        };
        let law = p.step_law();
        let laws = p.offspring_laws();
        let drift = law.truncated_moments(law.table_len() as u64).1.abs();
        out.push(below(format!("drift alpha={a:.2}"), drift, 1e-10));
        let product = (laws.mean_bullet() * laws.mean_circ() - 1.0).abs();
        out.push(below(format!("mean product alpha={a:.2}"), product, 1e-10));
        let c = (1.0 / p.c_alpha - a * p.p_c - (1.0 - a) / 2.0).abs();
        out.push(below(format!("c_alpha identity alpha={a:.2}"), c, 1e-12));
        let s: f64 = (1..=50).map(|m| peeling_probability(a, m).unwrap()).sum();
        out.push(below(format!("p_m sum to 50 alpha={a:.2}"), (s - (1.0 - a)).abs(), 1e-10));
    }
    out
}

/// Tree excursions with exactly `len` values.
pub fn tree_paths(len: usize) -> Vec<Vec<i64>> {
    fn go(cur: &mut Vec<i64>, len: usize, out: &mut Vec<Vec<i64>>) {
        let z = *cur.last().unwrap();
        if cur.len() == len {
            if z == 1 {
                out.push(cur.clone());
            }
            return;
        }
        for next in std::iter::once(z + 1).chain(1..z) {
            cur.push(next);
            go(cur, len, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut vec![1], len, &mut out);
    out
}

/// All plane trees with `n` vertices as child lists, built from preorder child counts.
fn plane_trees(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(cur: &mut Vec<usize>, open: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            if open == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if open == 0 {
            return;
        }
        for k in 0..=(n - cur.len()) {
            if open - 1 + k > n - cur.len() - 1 {
                break;
            }
            cur.push(k);
            go(cur, open - 1 + k, n, out);
            cur.pop();
        }
    }
    fn fill(u: usize, counts: &[usize], next: &mut usize, children: &mut Vec<Vec<usize>>) {
        for _ in 0..counts[u] {
            let c = *next;
            *next += 1;
            children[u].push(c);
            fill(c, counts, next, children);
        }
    }
    let mut seqs = Vec::new();
    go(&mut Vec::new(), 1, n, &mut seqs);
    seqs.iter()
        .map(|counts| {
            let mut children = vec![Vec::new(); n];
            fill(0, counts, &mut 1, &mut children);
            children
        })
        .collect()
}

fn bijection(ctx: &Context) -> Vec<Check> {
    let laws = ctx.params().offspring_laws();
    let mut round_trip_failures = 0usize;
    let mut quotient_failures = 0usize;
    for len in 1..=14 {
        for v in tree_paths(len) {
            let Ok(p) = LatticePath::tree(v) else {
                round_trip_failures += 1;
                continue;
            };
            let t = match tree_from_excursion(&p) {
                Ok(t) => t,
                Err(_) => {
                    round_trip_failures += 1;
                    continue;
                }
            };
            if t.len() != len || excursion_from_tree(&t).ok().as_ref() != Some(&p) {
                round_trip_failures += 1;
            }
            let Ok(lt) = looptree_from_tree(&t) else {
                quotient_failures += 1;
                continue;
            };
            let mut ours: Vec<(usize, usize)> =
                lt.edges().iter().map(|&(a, b)| (lt.vertices[a], lt.vertices[b])).collect();
            let (class, mut theirs) = excursion_quotient(&p);
            let classes: HashSet<usize> = class.iter().copied().collect();
            ours.sort_unstable();
            theirs.sort_unstable();
            if classes.len() != lt.len() || ours != theirs {
                quotient_failures += 1;
            }
        }
    }
    // Every admissible plane tree (no white leaf) is hit exactly once.
    let mut surjectivity_failures = 0usize;
    for n in 1..=8 {
        let mut seen = HashSet::new();
        for children in plane_trees(n) {
            let Ok(t) = TwoTypeTree::from_children(&children) else {
                surjectivity_failures += 1;
                continue;
            };
            if t.has_white_leaf() {
                continue;
            }
            match excursion_from_tree(&t) {
                Ok(p) if seen.insert(p.values().to_vec()) => {}
                _ => surjectivity_failures += 1,
            }
        }
        if seen.len() != tree_paths(n).len() {
            surjectivity_failures += 1;
        }
    }
    let mut deviation = 0.0;
    for n in 1..=8 {
        for v in tree_paths(n) {
            let p = LatticePath::tree(v).unwrap();
            let t = tree_from_excursion(&p).unwrap();
            let a = tree_probability(&t, &laws).value.exp();
            let b = reversed_walk_log_probability(&p, &laws).map(f64::exp).unwrap_or(f64::INFINITY);
            deviation += (a - b).abs();
        }
    }
    vec![
        check("round-trip failures up to 14", round_trip_failures as f64, round_trip_failures == 0, "= 0"),
        check("plane-tree coverage failures up to 8", surjectivity_failures as f64, surjectivity_failures == 0, "= 0"),
        below("tree law total deviation up to 8", deviation, 1e-10),
        check("looptree quotient mismatches up to 14", quotient_failures as f64, quotient_failures == 0, "= 0"),
    ]
}

fn peeling_contour(ctx: &Context) -> Vec<Check> {
    const CHUNK: usize = 100_000;
    let p = ctx.params();
    let law = PeelingLaw::new(&p);
    let step = p.step_law();
    let n = ctx.count(1_000_000);
    let tasks = n.div_ceil(CHUNK);
    let increments: Vec<Vec<i64>> = run_tasks(tasks, ctx.workers, |task| {
        let mut rng = ctx.stream(3, task);
        (0..CHUNK.min(n - task * CHUNK))
            .map(|_| {
                let z = contract_prefix(&simulate_peeling_prefix(&law, 1, &mut rng));
                z[1] - z[0]
            })
            .collect()
    });
    // bins: +1, then -1, ..., -k, then everything below -k
    let mut k = 1;
    while (n as f64) * step.prob(-(k as i64 + 1)) >= 5.0 {
        k += 1;
    }
    let mut probs = vec![step.prob(1)];
    probs.extend((1..=k).map(|m| step.prob(-(m as i64))));
    let tail = 1.0 - probs.iter().sum::<f64>();
    let mut counts = vec![0u64; k + 2];
    let mut other = 0u64;
    for &d in increments.iter().flatten() {
        match d {
            1 => counts[0] += 1,
            d if d < 0 && (-d as usize) <= k => counts[-d as usize] += 1,
            d if d < 0 => counts[k + 1] += 1,
            _ => other += 1,
        }
    }
    if (n as f64) * tail >= 5.0 {
        probs.push(tail);
    } else {
        counts[k] += counts[k + 1];
        *probs.last_mut().unwrap() += tail;
        counts.pop();
    }
    let mut out = vec![check("impossible increments", other as f64, other == 0, "= 0")];
    match chi_square(&counts, &probs) {
        Ok((_, pv)) => out.push(check("chi-square p", pv, pv > 0.01, "> 0.01")),
        Err(e) => out.push(failed("chi-square", e)),
    }
    out
}

fn tail_check(name: &str, samples: Vec<critperc::Result<Vec<(f64, bool)>>>, seed: u64) -> Vec<Check> {
    let mut values = Vec::new();
    for s in samples {
        match s {
            Ok(v) => values.extend(v),
            Err(e) => return vec![failed(name, e)],
        }
    }
    let censor = censor_level(&values);
    let xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    match tail_exponent_estimate(&xs, &TailFitOptions { censor, seed, ..Default::default() }) {
        Ok(fit) => {
            let decades = (fit.x_max / fit.x_min).log10();
            vec![
                check(
                    format!("{name} exponent"),
                    fit.exponent,
                    (-0.55..=-0.45).contains(&fit.exponent),
                    "in [-0.55, -0.45]",
                ),
                check(format!("{name} decades"), decades, decades >= 2.0, ">= 2"),
            ]
        }
        Err(e) => vec![failed(format!("{name} fit"), e)],
    }
}

fn tail_exponents(ctx: &Context) -> Vec<Check> {
    let cfg = RunConfig { seed: ctx.seed ^ (4 << 48), tail_cap: 100_000, workers: ctx.workers, ..RunConfig::default() };
    let mut out = tail_check("tau", tail_samples(&cfg, TailKind::Tau, ctx.count(1_000_000)), ctx.seed);
    let cfg = RunConfig { seed: cfg.seed ^ 1, ..cfg };
    out.extend(tail_check("cluster size", tail_samples(&cfg, TailKind::Volume, ctx.count(100_000)), ctx.seed));
    out
}

fn boltzmann_oracle(ctx: &Context) -> Vec<Check> {
    let pf = PartitionFunction::new(&ctx.params());
    let q = pf.weight();
    let mut out = Vec::new();

    // Z coefficients: enumeration counts against the counting recursion and
    // the closed form against the resulting series at small weights.
    let counts = loopless_counts(5, 30);
    let mut mismatches = 0;
    for m in 2..=5 {
        let max_n = if m == 5 { 2 } else { 3 };
        match enumerate_triangulations(m, max_n) {
            Ok(e) => {
                let c = e.counts();
                mismatches += (0..=max_n).filter(|&n| c[n] as u128 != counts[m][n]).count();
            }
            Err(e) => out.push(failed(format!("enumeration m={m}"), e)),
        }
    }
    out.push(check("coefficient mismatches", mismatches as f64, mismatches == 0, "= 0"));
    let mut worst: f64 = 0.0;
    for small in [1e-3f64, 5e-3] {
        for m in 2..=5 {
            let series: f64 = counts[m].iter().enumerate().map(|(n, &c)| c as f64 * small.powi(n as i32)).sum();
            match partition_function(m, small) {
                Ok(z) => worst = worst.max((z.value - series).abs() / series),
                Err(e) => out.push(failed(format!("closed form m={m}"), e)),
            }
        }
    }
    out.push(below("closed form vs series relative error", worst, 1e-9));

    let e = match enumerate_triangulations(3, 2) {
        Ok(e) => e,
        Err(err) => {
            out.push(failed("enumeration m=3", err));
            return out;
        }
    };
    let idx = e.index();
    let norm: f64 = e.counts().iter().enumerate().map(|(n, &c)| c as f64 * q.powi(n as i32)).sum();
    let total = ctx.count(100_000);
    let mut rng = ctx.stream(5, 0);
    let mut hits: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut kept = 0u64;
    let mut unknown = 0u64;
    for _ in 0..total {
        let t = match sample_boltzmann(3, &pf, &mut rng) {
            Ok(t) => t,
            Err(err) => {
                out.push(failed("sampler", err));
                return out;
            }
        };
        if t.num_internal() > 2 {
            continue;
        }
        let code = t.canonical_code();
        if !idx.contains_key(&code) {
            unknown += 1;
        }
        *hits.entry(code).or_default() += 1;
        kept += 1;
    }
    let tv = idx
        .iter()
        .map(|(code, &n)| {
            let p = q.powi(n as i32) / norm;
            let f = hits.get(code).copied().unwrap_or(0) as f64 / kept as f64;
            (p - f).abs()
        })
        .sum::<f64>()
        / 2.0
        + unknown as f64 / kept as f64 / 2.0;
    out.push(check("sampled maps missing from enumeration", unknown as f64, unknown == 0, "= 0"));
    out.push(check("conditional TV", tv, tv <= 0.01, "<= 0.01"));
    out
}

/// Conditional law of the final pair `(l, k)` given `l + k <= max_sum`: proportional to `l mu(-(l + k))`.
pub fn final_pair_law(law: &critperc::model::StepLaw, max_sum: usize) -> Vec<((usize, usize), f64)> {
    let mut out = Vec::new();
    for l in 1..=max_sum {
        for k in 0..=(max_sum - l) {
            out.push(((l, k), l as f64 * law.prob(-((l + k) as i64))));
        }
    }
    let z: f64 = out.iter().map(|x| x.1).sum();
    out.iter_mut().for_each(|x| x.1 /= z);
    out
}

fn structure_statistics(ctx: &Context) -> Vec<Check> {
    const CHUNK: usize = 2000;
    let p = ctx.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let caps = Caps::default();
    let n: u64 = 10_000;
    let mut out = Vec::new();

    // final pair
    let total = ctx.count(100_000);
    let pairs: Vec<critperc::Result<Vec<(usize, usize)>>> = run_tasks(total.div_ceil(CHUNK), ctx.workers, |task| {
        let mut rng = ctx.stream(6, task);
        (0..CHUNK.min(total - task * CHUNK))
            .map(|_| {
                let path = sample_excursion_in_window(&law, n, Some(10 * n), &caps, &mut rng)?.path;
                let v = path.values();
                let tau = path.len();
                Ok((v[tau - 1] as usize, (-v[tau]) as usize))
            })
            .collect()
    });
    let expected = final_pair_law(&law, 6);
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    let mut err = None;
    for r in pairs {
        match r {
            Ok(v) => v.into_iter().filter(|&(l, k)| l + k <= 6).for_each(|x| *counts.entry(x).or_default() += 1),
            Err(e) => err = Some(e),
        }
    }
    let kept: u64 = counts.values().sum();
    if let Some(e) = err {
        out.push(failed("final pair sampling", e));
    } else {
        let tv = expected
            .iter()
            .map(|(x, pr)| (counts.get(x).copied().unwrap_or(0) as f64 / kept as f64 - pr).abs())
            .sum::<f64>()
            / 2.0;
        out.push(check("final pair TV", tv, tv <= 0.05, "<= 0.05"));
    }

    let beta = match ctx.constants() {
        Ok(c) => c.beta.value,
        Err(e) => {
            out.push(failed("constants", e));
            return out;
        }
    };

    // cross conditioning
    let m = ctx.count(400);
    for (tag, mode) in
        [("size given tau", ConditioningMode::TauAtLeast), ("tau given size", ConditioningMode::SizeAtLeast)]
    {
        let req = ConditioningRequest { n, mode, beta, window: None };
        let res = run_tasks(m, ctx.workers, |i| {
            let mut rng = ctx.stream(60 + mode as u64, i);
            cross_condition(&req, &law, &family, &caps, &mut rng)
        });
        let mut hits = 0;
        let mut err = None;
        for r in &res {
            match r {
                Ok(c) => {
                    hits += match mode {
                        ConditioningMode::TauAtLeast => c.size_event as usize,
                        ConditioningMode::SizeAtLeast => c.tau_event as usize,
                    }
                }
                Err(e) => err = Some(e.clone()),
            }
        }
        match err {
            Some(e) => out.push(failed(format!("cross conditioning {tag}"), e)),
            None => {
                let f = hits as f64 / m as f64;
                out.push(check(format!("fraction {tag}"), f, f >= 0.9, ">= 0.9"));
            }
        }
    }

    // dominant excursion under tau >= beta n
    let lower = (beta * n as f64).ceil() as u64;
    let slack = (n as f64).powf(5.0 / 8.0);
    let m = ctx.count(2000);
    let res = run_tasks(m, ctx.workers, |i| {
        let mut rng = ctx.stream(62, i);
        let path = sample_excursion_in_window(&law, lower, Some(10 * lower), &caps, &mut rng)?.path;
        let r = decompose_root_structure(&path)?;
        Ok::<bool, critperc::Error>(r.largest() as f64 >= path.len() as f64 - slack)
    });
    match res.iter().find_map(|r| r.as_ref().err()) {
        Some(e) => out.push(failed("dominant excursion", e)),
        None => {
            let f = res.iter().filter(|r| matches!(r, Ok(true))).count() as f64 / m as f64;
            out.push(check("dominant excursion fraction", f, f >= 0.9, ">= 0.9"));
        }
    }
    out
}

/// Sizes and medians of the coupled geometry experiment.
pub const GEOMETRY_GRID: [u64; 3] = [1000, 4000, 16000];

fn geometry_trend(ctx: &Context) -> Vec<Check> {
    let c = match ctx.constants() {
        Ok(c) => *c,
        Err(e) => return vec![failed("constants", e)],
    };
    let p = ctx.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let caps = Caps::default();
    let per = ctx.count(200);
    let mut medians = Vec::new();
    let mut diameters = Vec::new();
    for (gi, &n) in GEOMETRY_GRID.iter().enumerate() {
        let req = ConditioningRequest { n, mode: ConditioningMode::TauAtLeast, beta: c.beta.value, window: Some(2.0) };
        let res = run_tasks(per, ctx.workers, |i| {
            let mut rng = ctx.stream(7, gi * per + i);
            let cl = sample_cluster_conditioned(&req, &law, &family, &caps, &mut rng)?.cluster;
            coupled_geometry(&cl, &c, n, 200, &mut rng)
        });
        let mut dis = Vec::new();
        let mut dia = Vec::new();
        for r in res {
            match r {
                Ok(g) => {
                    dis.push(g.distortion);
                    dia.push(g.rescaled_diameter);
                }
                Err(e) => return vec![failed(format!("n={n}"), e)],
            }
        }
        medians.push(median(&dis));
        diameters.push(dia);
    }
    let mut out: Vec<Check> = GEOMETRY_GRID
        .iter()
        .zip(&medians)
        .map(|(n, &m)| check(format!("median distortion n={n}"), m, true, "reported"))
        .collect();
    for (w, ns) in medians.windows(2).zip(GEOMETRY_GRID.windows(2)) {
        out.push(check(format!("median change n={} to n={}", ns[0], ns[1]), w[1] - w[0], w[1] <= w[0], "<= 0"));
    }
    match ks_two_sample(&diameters[1], &diameters[2]) {
        Ok(ks) => out.push(check("diameter KS p n=4000 vs n=16000", ks.p_value, ks.p_value > 0.01, "> 0.01")),
        Err(e) => out.push(failed("diameter KS", e)),
    }
    out
}

fn walk_exponent(ctx: &Context) -> Vec<Check> {
    let c = match ctx.constants() {
        Ok(c) => *c,
        Err(e) => return vec![failed("constants", e)],
    };
    let p = ctx.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let caps = Caps::default();
    let mut out = Vec::new();

    let grid = log_grid(100.0, 100_000.0, 4);
    let req =
        ConditioningRequest { n: 10_000, mode: ConditioningMode::SizeAtLeast, beta: c.beta.value, window: Some(10.0) };
    let res = run_tasks(ctx.count(40), ctx.workers, |i| {
        let mut rng = ctx.stream(8, i);
        let cl = sample_cluster_conditioned(&req, &law, &family, &caps, &mut rng)?.cluster;
        root_walk_displacements(&cl, &grid, &mut rng)
    });
    let traces: critperc::Result<Vec<Vec<f64>>> = res.into_iter().collect();
    match traces.and_then(|t| displacement_stats(&t, &grid, 0, &mut ctx.stream(8, usize::MAX))) {
        Ok(table) => {
            out.push(check("displacement slope", table.slope, (0.27..=0.40).contains(&table.slope), "in [0.27, 0.40]"))
        }
        Err(e) => out.push(failed("displacement slope", e)),
    }

    let req = ConditioningRequest { n: 16_000, ..req };
    let res = run_tasks(ctx.count(100), ctx.workers, |i| {
        let mut rng = ctx.stream(80, i);
        let cl = sample_cluster_conditioned(&req, &law, &family, &caps, &mut rng)?.cluster;
        let g = cl.graph();
        let v = loop {
            let v = rng.random_range(0..g.num_vertices());
            if v != cl.root() {
                break v;
            }
        };
        let d = g.bfs(&[cl.root()])[v] as f64;
        Ok::<f64, critperc::Error>(effective_resistance(g, &[(cl.root(), v)])?[0] / d)
    });
    match res.into_iter().collect::<critperc::Result<Vec<f64>>>() {
        Ok(r) if r.len() >= 2 => {
            let (m, _) = mean_and_se(&r);
            let sd = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
            out.push(check("R/d mean", m, true, "reported"));
            out.push(check("R/d coefficient of variation", sd / m, sd / m < 0.2, "< 0.2"));
        }
        Ok(_) => out.push(failed("R/d", "fewer than two clusters")),
        Err(e) => out.push(failed("R/d", e)),
    }
    out
}

/// Effective resistance from the Moore-Penrose inverse of the full Laplacian.
pub fn kirchhoff_resistance(n: usize, edges: &[(usize, usize)], a: usize, b: usize) -> f64 {
    let mut l = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in edges {
        if u == v {
            continue;
        }
        l[(u, u)] += 1.0;
        l[(v, v)] += 1.0;
        l[(u, v)] -= 1.0;
        l[(v, u)] -= 1.0;
    }
    let pinv = l.pseudo_inverse(1e-10).expect("eigen decomposition converges");
    pinv[(a, a)] + pinv[(b, b)] - 2.0 * pinv[(a, b)]
}

/// Connected multigraph: a random tree plus random extra edges, some repeated.
pub fn random_connected_edges<R: Rng + ?Sized>(n: usize, extra: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (order[rng.random_range(0..i)], order[i])).collect();
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    edges
}

fn resistance_oracle(ctx: &Context) -> Vec<Check> {
    let mut rng = ctx.stream(9, 0);
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let extra = rng.random_range(0..=2 * n);
        let edges = random_connected_edges(n, extra, &mut rng);
        let g = Graph::from_edges(n, edges.iter().copied());
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        match effective_resistance(&g, &pairs) {
            Ok(r) => {
                for (&(a, b), &x) in pairs.iter().zip(&r) {
                    worst = worst.max((x - kirchhoff_resistance(n, &edges, a, b)).abs());
                }
            }
            Err(e) => errors.push(e),
        }
    }
    // series and parallel closed forms
    let mut closed: f64 = 0.0;
    for m in 3..=12usize {
        let cycle = Graph::cycle(m);
        let r = effective_resistance(&cycle, &(1..m).map(|k| (0, k)).collect::<Vec<_>>()).unwrap_or_default();
        for (k, x) in (1..m).zip(r) {
            closed = closed.max((x - (k * (m - k)) as f64 / m as f64).abs());
        }
        let r = effective_resistance(&Graph::complete(m), &[(0, 1)]).map(|r| r[0]).unwrap_or(f64::NAN);
        closed = closed.max((r - 2.0 / m as f64).abs());
        let bundle = Graph::from_edges(2, std::iter::repeat_n((0, 1), m));
        let r = effective_resistance(&bundle, &[(0, 1)]).map(|r| r[0]).unwrap_or(f64::NAN);
        closed = closed.max((r - 1.0 / m as f64).abs());
    }
    let mut tree_mismatches = 0usize;
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let g = Graph::from_edges(n, random_connected_edges(n, 0, &mut rng));
        let d = g.bfs(&[0]);
        let pairs: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
        match effective_resistance(&g, &pairs) {
            Ok(r) => tree_mismatches += r.iter().zip(&d[1..]).filter(|(x, &y)| **x != y as f64).count(),
            Err(e) => errors.push(e),
        }
    }
    let mut out = vec![
        below("max deviation from Kirchhoff", worst, 1e-8),
        below("max deviation from closed forms", closed, 1e-8),
        check("tree pairs with R != d", tree_mismatches as f64, tree_mismatches == 0, "= 0"),
    ];
    if let Some(e) = errors.first() {
        out.push(failed("solver", e));
    }
    out
}
