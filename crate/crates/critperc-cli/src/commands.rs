//! Subcommand drivers. Each writes its files and a manifest into `out_dir`.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use critperc::cluster::{
    decompose_root_structure, sample_cluster_conditioned, Cluster, ConditioningRequest, DecorationFamily, VolumeWalk,
};
use critperc::continuum::{crt_from_excursion, sample_excursion_fixed_lifetime, sample_lifetime};
use critperc::dynamics::{displacement_stats, path_law_comparison, walk_on_crt, MatchedScaling};
use critperc::excursions::{
    contract_to_jumps, sample_excursion_in_window, sample_tau, simulate_peeling, simulate_peeling_prefix,
    tail_exponent_estimate, LatticePath, PeelingLaw, TailFitOptions,
};
use critperc::geometry::{diameter, gh_bounds, ghp_upper, FiniteMetricMeasureSpace};
use critperc::model::{estimate_scaling_constants, ScalingConstants};
use critperc::rng::{stream, substream};
use critperc::stats::{ks_two_sample, median};
use critperc::Error;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiments::{coupled_geometry, log_grid, root_walk_displacements};
use crate::output::{run_tasks, sha256_hex, Artifacts, Manifest};
use crate::schema::*;

/// Samples drawn per tail task.
const TAIL_CHUNK: usize = 10_000;

/// Matched times of the path-law comparison.
pub const COMPARE_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

pub fn estimate_constants(cfg: &RunConfig) -> Result<ScalingConstants> {
    Ok(estimate_scaling_constants(&cfg.params(), &cfg.constants, cfg.seed)?)
}

pub fn constants(cfg: &RunConfig) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "constants")?;
    let p = cfg.params();
    let c = estimate_scaling_constants(&p, &cfg.constants, cfg.seed);
    art.record("scaling", &c);
    if let Ok(c) = c {
        art.write_json("constants.json", &constants_json(cfg, &c))?;
    }
    art.finish(cfg)
}

pub fn constants_json(cfg: &RunConfig, c: &ScalingConstants) -> serde_json::Value {
    let p = cfg.params();
    let named = [
        ("beta", c.beta),
        ("beta_degree", c.beta_degree),
        ("chi_d", c.chi_d),
        ("chi_R", c.chi_r),
        ("sigma", c.sigma),
        ("gamma", c.gamma),
        ("delta", c.delta),
        ("kappa", c.kappa),
        ("theta", c.theta),
    ];
    let mut scaling = serde_json::Map::new();
    let mut stderr = serde_json::Map::new();
    let mut samples = serde_json::Map::new();
    for (name, e) in named {
        scaling.insert(name.into(), json!(e.value));
        stderr.insert(name.into(), json!(e.stderr));
        samples.insert(name.into(), json!(e.samples));
    }
    scaling.insert("stderr".into(), stderr.into());
    scaling.insert("samples".into(), samples.into());
    json!({
        "alpha": p.alpha,
        "p_c": p.p_c,
        "q": p.q,
        "c_alpha": p.c_alpha,
        "mu_bullet_param": p.offspring_laws().bullet_param,
        "scaling": scaling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Excursion,
    Peeling,
    Cluster,
}

impl std::str::FromStr for SampleKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excursion" => Ok(Self::Excursion),
            "peeling" => Ok(Self::Peeling),
            "cluster" => Ok(Self::Cluster),
            _ => Err(CliError::Usage(format!("--what must be excursion, peeling or cluster, got {s:?}"))),
        }
    }
}

fn excursion_row(id: String, path: &LatticePath) -> critperc::Result<ExcursionRow> {
    let r = decompose_root_structure(path)?;
    let v = path.values();
    let tau = path.len();
    Ok(ExcursionRow {
        sample_id: id,
        tau,
        z_tau: v[tau],
        z_tau_minus_1: v[tau - 1],
        gamma_max: r.largest(),
        n_subexcursions: r.gammas.len(),
    })
}

/// Peeling contour with `n <= tau < upper`, by rejection.
fn conditioned_peeling(cfg: &RunConfig, n: u64, rng: &mut critperc::rng::SimRng) -> critperc::Result<LatticePath> {
    let p = cfg.params();
    let law = PeelingLaw::new(&p);
    let upper = cfg.upper(n);
    for _ in 0..cfg.caps.rejection_cap {
        let trace = match upper {
            Some(u) => {
                let t = simulate_peeling_prefix(&law, u, rng);
                if !t.is_terminated() {
                    continue;
                }
                t
            }
            None => simulate_peeling(&p, &cfg.caps, rng)?,
        };
        let z = contract_to_jumps(&trace)?;
        if z.len() as u64 >= n && upper.is_none_or(|u| (z.len() as u64) < u) {
            return Ok(z);
        }
    }
    Err(Error::RejectionCap { cap: cfg.caps.rejection_cap })
}

/// Original peeling excursion of a cluster, recovered from the extended one.
pub fn source_path(cluster: &Cluster) -> critperc::Result<LatticePath> {
    let shift = cluster.k as i64 + 1;
    let v = cluster.structures.path.values()[cluster.k + 1..].iter().map(|x| x - shift).collect();
    LatticePath::peeling(v)
}

pub fn cluster_export(cluster: &Cluster) -> critperc::Result<ClusterExport> {
    let g = cluster.graph();
    let path = source_path(cluster)?;
    let text: Vec<String> = path.values().iter().map(|v| v.to_string()).collect();
    Ok(ClusterExport {
        n_vertices: g.num_vertices(),
        n_edges: g.num_edges(),
        root: cluster.root(),
        adjacency: (0..g.num_vertices()).map(|v| g.neighbors(v).to_vec()).collect(),
        provenance: cluster.provenance().iter().map(|p| p.code()).collect(),
        source_path_digest: sha256_hex(text.join(",").as_bytes()),
    })
}

fn request(cfg: &RunConfig, n: u64, beta: f64) -> ConditioningRequest {
    ConditioningRequest { n, mode: cfg.mode, beta, window: cfg.window }
}

pub fn sample(cfg: &RunConfig, kind: SampleKind, export: bool) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "sample")?;
    let p = cfg.params();
    let law = p.step_law();
    let per = cfg.samples;
    match kind {
        SampleKind::Excursion | SampleKind::Peeling => {
            let mut rows = Vec::new();
            for (gi, &n) in cfg.n_grid.iter().enumerate() {
                let results = run_tasks(per, cfg.workers, |i| {
                    let task = gi * per + i;
                    let mut rng = stream(cfg.seed, task as u64);
                    let path = match kind {
                        SampleKind::Excursion => {
                            sample_excursion_in_window(&law, n, cfg.upper(n), &cfg.caps, &mut rng).map(|c| c.path)
                        }
                        _ => conditioned_peeling(cfg, n, &mut rng),
                    };
                    path.and_then(|p| excursion_row(sample_id(cfg.seed, task), &p))
                });
                for (i, r) in results.into_iter().enumerate() {
                    art.record(sample_id(cfg.seed, gi * per + i), &r);
                    rows.extend(r.ok());
                }
            }
            let name = if kind == SampleKind::Excursion { "samples_excursion.csv" } else { "samples_peeling.csv" };
            art.write_csv(name, &rows)?;
        }
        SampleKind::Cluster => {
            let c = estimate_constants(cfg)?;
            let family = DecorationFamily::critical(&p);
            let mut rows = Vec::new();
            for (gi, &n) in cfg.n_grid.iter().enumerate() {
                let req = request(cfg, n, c.beta.value);
                let results = run_tasks(per, cfg.workers, |i| {
                    let task = gi * per + i;
                    let mut rng = stream(cfg.seed, task as u64);
                    let cl = sample_cluster_conditioned(&req, &law, &family, &cfg.caps, &mut rng)?.cluster;
                    let r = decompose_root_structure(&source_path(&cl)?)?;
                    let row = ClusterRow {
                        sample_id: sample_id(cfg.seed, task),
                        tau: cl.tau,
                        size: cl.num_vertices(),
                        diameter: diameter(cl.graph())?,
                        root_loop_size: cl.structures.root_loop_size(),
                        gamma_max: r.largest(),
                    };
                    let exported = if export { Some(cluster_export(&cl)?) } else { None };
                    Ok((row, exported))
                });
                for (i, r) in results.into_iter().enumerate() {
                    let id = sample_id(cfg.seed, gi * per + i);
                    art.record(id.clone(), &r);
                    if let Ok((row, exported)) = r {
                        rows.push(row);
                        if let Some(e) = exported {
                            art.write_json(&format!("clusters/{id}.json"), &e)?;
                        }
                    }
                }
            }
            art.write_csv("samples_cluster.csv", &rows)?;
        }
    }
    art.finish(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    Tau,
    Volume,
}

impl std::str::FromStr for TailKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Self::Tau),
            "volume" => Ok(Self::Volume),
            _ => Err(CliError::Usage(format!("--what must be tau or volume, got {s:?}"))),
        }
    }
}

/// Tail samples with a censoring flag each.
pub fn tail_samples(cfg: &RunConfig, kind: TailKind, count: usize) -> Vec<critperc::Result<Vec<(f64, bool)>>> {
    let p = cfg.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let tasks = count.div_ceil(TAIL_CHUNK);
    run_tasks(tasks, cfg.workers, |task| {
        let mut rng = stream(cfg.seed, task as u64);
        let len = TAIL_CHUNK.min(count - task * TAIL_CHUNK);
        let mut out = Vec::with_capacity(len);
        match kind {
            TailKind::Tau => {
                for _ in 0..len {
                    let s = sample_tau(&law, cfg.tail_cap, &mut rng);
                    out.push((s.tau as f64, s.censored));
                }
            }
            TailKind::Volume => {
                let mut deco = substream(cfg.seed, task as u64, 1);
                for _ in 0..len {
                    let mut walk = VolumeWalk::new(&law, &family, false);
                    while !walk.terminated() && walk.steps() < cfg.tail_cap {
                        walk.step(true, &mut rng, &mut deco)?;
                    }
                    match walk.volume() {
                        Some(v) => out.push((v as f64, false)),
                        None => out.push((walk.volume_lower_bound() as f64, true)),
                    }
                }
            }
        }
        Ok(out)
    })
}

/// Censoring level: every censored value is at least this.
pub fn censor_level(samples: &[(f64, bool)]) -> Option<f64> {
    samples.iter().filter(|s| s.1).map(|s| s.0).reduce(f64::min)
}

pub fn survival_rows(values: &[f64]) -> Vec<SurvivalRow> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted.last().copied().unwrap_or(1.0).max(1.0);
    let mut xs = log_grid(1.0, max, 8);
    xs.dedup();
    xs.into_iter()
        .map(|x| SurvivalRow { x, empirical_survival: (n - sorted.partition_point(|&v| v < x)) as f64 / n as f64 })
        .collect()
}

pub fn tails(cfg: &RunConfig, kind: TailKind) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "tails")?;
    let mut samples = Vec::with_capacity(cfg.tail_samples);
    for (task, r) in tail_samples(cfg, kind, cfg.tail_samples).into_iter().enumerate() {
        art.record(format!("chunk-{task}"), &r);
        samples.extend(r.unwrap_or_default());
    }
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let tag = if kind == TailKind::Tau { "tau" } else { "volume" };
    art.write_csv(&format!("tails_{tag}.csv"), &survival_rows(&values))?;
    let censor = censor_level(&samples);
    let fit = tail_exponent_estimate(&values, &TailFitOptions { censor, seed: cfg.seed, ..Default::default() });
    art.record("fit", &fit);
    let censored = samples.iter().filter(|s| s.1).count();
    art.write_json(
        &format!("tails_{tag}.json"),
        &json!({ "what": tag, "samples": values.len(), "censored": censored, "censor_level": censor, "fit": fit.ok() }),
    )?;
    art.finish(cfg)
}

#[derive(Debug, Clone, Serialize)]
struct ScalingSummary {
    n: u64,
    samples: usize,
    median_distortion: f64,
    median_rescaled_diameter: f64,
}

pub fn scaling(cfg: &RunConfig) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "scaling")?;
    let c = estimate_constants(cfg)?;
    let p = cfg.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let per = cfg.samples;
    let mut rows: Vec<ScalingRow> = Vec::new();
    let mut summaries = Vec::new();
    let mut diameters = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let req = request(cfg, n, c.beta.value);
        let results = run_tasks(per, cfg.workers, |i| {
            let task = gi * per + i;
            let mut rng = stream(cfg.seed, task as u64);
            let cl = sample_cluster_conditioned(&req, &law, &family, &cfg.caps, &mut rng)?.cluster;
            let geo = coupled_geometry(&cl, &c, n, cfg.crt_points, &mut rng)?;
            Ok(ScalingRow {
                sample_id: sample_id(cfg.seed, task),
                n,
                tau: cl.tau,
                size: cl.num_vertices(),
                rescaled_diameter: geo.rescaled_diameter,
                distortion: geo.distortion,
            })
        });
        let mut here = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            art.record(sample_id(cfg.seed, gi * per + i), &r);
            here.extend(r.ok());
        }
        let dis: Vec<f64> = here.iter().map(|r| r.distortion).collect();
        let dia: Vec<f64> = here.iter().map(|r| r.rescaled_diameter).collect();
        if !here.is_empty() {
            summaries.push(ScalingSummary {
                n,
                samples: here.len(),
                median_distortion: median(&dis),
                median_rescaled_diameter: median(&dia),
            });
        }
        diameters.push(dia);
        rows.extend(here);
    }
    art.write_csv("scaling.csv", &rows)?;
    let non_increasing = summaries.windows(2).all(|w| w[1].median_distortion <= w[0].median_distortion);
    let ks = match diameters.len() {
        0 | 1 => None,
        k => ks_two_sample(&diameters[k - 2], &diameters[k - 1])
            .ok()
            .map(|r| json!({ "statistic": r.statistic, "p_value": r.p_value })),
    };
    art.write_json(
        "scaling.json",
        &json!({ "per_n": summaries, "distortion_non_increasing": non_increasing, "last_pair_diameter_ks": ks }),
    )?;
    art.finish(cfg)
}

pub fn walk(cfg: &RunConfig) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "walk")?;
    let c = estimate_constants(cfg)?;
    let p = cfg.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let grid = log_grid(10.0f64.min(cfg.walk_steps as f64), cfg.walk_steps as f64, 4);
    let per = cfg.traces;
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let req = request(cfg, n, c.beta.value);
        let results = run_tasks(per, cfg.workers, |i| {
            let mut rng = stream(cfg.seed, (gi * per + i) as u64);
            let cl = sample_cluster_conditioned(&req, &law, &family, &cfg.caps, &mut rng)?.cluster;
            root_walk_displacements(&cl, &grid, &mut rng)
        });
        let mut traces = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            let id = sample_id(cfg.seed, gi * per + i);
            art.record(id.clone(), &r);
            if let Ok(d) = r {
                rows.extend(grid.iter().zip(&d).map(|(&t, &x)| WalkRow { trace_id: id.clone(), t, displacement: x }));
                traces.push(d);
            }
        }
        let mut rng = substream(cfg.seed, gi as u64, 2);
        let table = displacement_stats(&traces, &grid, 200, &mut rng);
        art.record(format!("stats-n{n}"), &table);
        tables.push(json!({ "n": n, "table": table.ok() }));
    }
    art.write_csv("walk.csv", &rows)?;
    art.write_json("walk.json", &tables)?;
    art.finish(cfg)
}

pub fn ghp(cfg: &RunConfig, x: &Path, y: &Path, exact: bool) -> Result<Manifest> {
    let read = |p: &Path| -> Result<FiniteMetricMeasureSpace> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read space {}: {e}", p.display())))?;
        Ok(FiniteMetricMeasureSpace::from_text(&text)?)
    };
    let (x, y) = (read(x)?, read(y)?);
    let mut art = Artifacts::create(&cfg.out_dir, "ghp")?;
    let gh = gh_bounds(&x, &y, exact)?;
    let up = ghp_upper(&x, &y, &gh.correspondence)?;
    art.write_json(
        "ghp.json",
        &json!({
            "gh_upper": gh.upper,
            "ghp_upper": up.total,
            "exact": gh.exact,
            "correspondence_size": gh.correspondence.pairs.len(),
            "distortion": up.distortion,
        }),
    )?;
    art.finish(cfg)
}

pub fn crt(cfg: &RunConfig, zeta: Option<f64>) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "crt")?;
    let mut rng = stream(cfg.seed, 0);
    let zeta = zeta.unwrap_or_else(|| sample_lifetime(&mut rng));
    let exc = sample_excursion_fixed_lifetime(zeta, zeta / cfg.crt_mesh_divisor, &mut rng)?;
    let tree = crt_from_excursion(&exc, cfg.crt_points, &mut rng)?;
    art.write_bytes("crt.txt", tree.space.to_text().as_bytes())?;
    art.finish(cfg)
}

/// Rescaled distances from the root of a discretized tree walk at `times`.
fn crt_walk_displacements(cfg: &RunConfig, rng: &mut critperc::rng::SimRng) -> critperc::Result<Vec<f64>> {
    let zeta = sample_lifetime(rng);
    let exc = sample_excursion_fixed_lifetime(zeta, zeta / cfg.crt_mesh_divisor, rng)?;
    let tree = crt_from_excursion(&exc, cfg.crt_points, rng)?;
    let horizon = COMPARE_TIMES[COMPARE_TIMES.len() - 1];
    let mut steps = 1024;
    loop {
        let (spanned, trace) = walk_on_crt(&tree, 0, steps, rng)?;
        if trace.end_time >= horizon {
            let dist = spanned.distances_from(spanned.node_of_point(0));
            return COMPARE_TIMES.iter().map(|&t| trace.position_at(t).map(|v| dist[v as usize])).collect();
        }
        if steps >= cfg.caps.step_cap as usize {
            return Err(Error::StepCap { cap: cfg.caps.step_cap });
        }
        steps = (steps * 4).min(cfg.caps.step_cap as usize);
    }
}

pub fn compare(cfg: &RunConfig) -> Result<Manifest> {
    let mut art = Artifacts::create(&cfg.out_dir, "compare")?;
    let c = estimate_constants(cfg)?;
    let p = cfg.params();
    let law = p.step_law();
    let family = DecorationFamily::critical(&p);
    let per = cfg.traces;
    let mut out = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let m = MatchedScaling::new(n as f64, Some(&c))?;
        let grid: Vec<f64> = COMPARE_TIMES.iter().map(|t| (t * m.time).ceil()).collect();
        let req = request(cfg, n, c.beta.value);
        let base = 2 * gi * per;
        let discrete = run_tasks(per, cfg.workers, |i| {
            let mut rng = stream(cfg.seed, (base + i) as u64);
            let cl = sample_cluster_conditioned(&req, &law, &family, &cfg.caps, &mut rng)?.cluster;
            let d = root_walk_displacements(&cl, &grid, &mut rng)?;
            Ok(d.iter().map(|x| x * m.space).collect::<Vec<f64>>())
        });
        let continuum = run_tasks(per, cfg.workers, |i| {
            let mut rng = stream(cfg.seed, (base + per + i) as u64);
            crt_walk_displacements(cfg, &mut rng)
        });
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, r) in discrete.into_iter().enumerate() {
            art.record(format!("cluster-{}", sample_id(cfg.seed, base + i)), &r);
            a.extend(r.ok());
        }
        for (i, r) in continuum.into_iter().enumerate() {
            art.record(format!("tree-{}", sample_id(cfg.seed, base + per + i)), &r);
            b.extend(r.ok());
        }
        let ks = path_law_comparison(&a, &b, &COMPARE_TIMES);
        art.record(format!("ks-n{n}"), &ks);
        out.push(json!({ "n": n, "space": m.space, "time": m.time, "traces": [a.len(), b.len()], "ks": ks.ok() }));
    }
    art.write_json("compare.json", &out)?;
    art.finish(cfg)
}
