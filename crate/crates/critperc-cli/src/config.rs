//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use critperc::cluster::ConditioningMode;
use critperc::excursions::Caps;
use critperc::model::{ModelParams, ScalingBudget, MIN_BUDGET};

use crate::error::{CliError, Result};

/// Documented keys, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("alpha", "model parameter in (2/3, 1)"),
    ("n_grid", "comma-separated conditioning sizes"),
    ("mode", "conditioning event: tau (tau >= beta n) or size (|C| >= n)"),
    ("window", "upper end of the conditioning window as a multiple of the lower end, or none"),
    ("samples", "samples per grid size for sample and scaling"),
    ("traces", "walk traces per grid size for walk and compare"),
    ("walk_steps", "steps per walk trace"),
    ("tail_samples", "samples for the tails subcommand"),
    ("tail_cap", "step cap per tail sample; longer samples are censored"),
    ("seed", "master seed"),
    ("crt_mesh_divisor", "excursion grid points per unit lifetime fraction (mesh = zeta / divisor)"),
    ("crt_points", "sampled points per discretized tree"),
    ("constants_volume", "decorations drawn for beta"),
    ("constants_through", "decorations drawn for chi_d and chi_R"),
    ("constants_trees", "conditioned trees drawn for sigma"),
    ("constants_tree_size", "size of the trees drawn for sigma"),
    ("step_cap", "hard cap on walk steps per attempt"),
    ("rejection_cap", "hard cap on rejection attempts per sample"),
    ("out_dir", "artifact directory, created when missing"),
    ("workers", "worker threads"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub n_grid: Vec<u64>,
    pub mode: ConditioningMode,
    pub window: Option<f64>,
    pub samples: usize,
    pub traces: usize,
    pub walk_steps: usize,
    pub tail_samples: usize,
    pub tail_cap: u64,
    pub seed: u64,
    pub crt_mesh_divisor: f64,
    pub crt_points: usize,
    pub constants: ScalingBudget,
    pub caps: Caps,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            n_grid: vec![1000, 4000, 16000],
            mode: ConditioningMode::TauAtLeast,
            window: Some(2.0),
            samples: 200,
            traces: 40,
            walk_steps: 100_000,
            tail_samples: 100_000,
            tail_cap: 100_000,
            seed: 1,
            crt_mesh_divisor: critperc::continuum::DEFAULT_MESH_DIVISOR,
            crt_points: 200,
            constants: ScalingBudget::default(),
            caps: Caps::default(),
            out_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_text(&text)?
            }
            None => Self::default(),
        };
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "alpha" => self.alpha = parse(key, value)?,
            "n_grid" => {
                self.n_grid = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "mode" => {
                self.mode = match value {
                    "tau" => ConditioningMode::TauAtLeast,
                    "size" => ConditioningMode::SizeAtLeast,
                    _ => return Err(CliError::Usage(format!("mode must be tau or size, got {value:?}"))),
                }
            }
            "window" => self.window = if value == "none" { None } else { Some(parse(key, value)?) },
            "samples" => self.samples = parse(key, value)?,
            "traces" => self.traces = parse(key, value)?,
            "walk_steps" => self.walk_steps = parse(key, value)?,
            "tail_samples" => self.tail_samples = parse(key, value)?,
            "tail_cap" => self.tail_cap = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "crt_mesh_divisor" => self.crt_mesh_divisor = parse(key, value)?,
            "crt_points" => self.crt_points = parse(key, value)?,
            "constants_volume" => self.constants.volume = parse(key, value)?,
            "constants_through" => self.constants.through = parse(key, value)?,
            "constants_trees" => self.constants.trees = parse(key, value)?,
            "constants_tree_size" => self.constants.tree_size = parse(key, value)?,
            "step_cap" => self.caps.step_cap = parse(key, value)?,
            "rejection_cap" => self.caps.rejection_cap = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "workers" => self.workers = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let mode = |m: ConditioningMode| match m {
            ConditioningMode::TauAtLeast => "tau",
            ConditioningMode::SizeAtLeast => "size",
        };
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "n_grid" => self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            "mode" => mode(self.mode).to_string(),
            "window" => self.window.map_or("none".to_string(), |w| w.to_string()),
            "samples" => self.samples.to_string(),
            "traces" => self.traces.to_string(),
            "walk_steps" => self.walk_steps.to_string(),
            "tail_samples" => self.tail_samples.to_string(),
            "tail_cap" => self.tail_cap.to_string(),
            "seed" => self.seed.to_string(),
            "crt_mesh_divisor" => self.crt_mesh_divisor.to_string(),
            "crt_points" => self.crt_points.to_string(),
            "constants_volume" => self.constants.volume.to_string(),
            "constants_through" => self.constants.through.to_string(),
            "constants_trees" => self.constants.trees.to_string(),
            "constants_tree_size" => self.constants.tree_size.to_string(),
            "step_cap" => self.caps.step_cap.to_string(),
            "rejection_cap" => self.caps.rejection_cap.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap());
        }
        out
    }

    /// Parse a config file; `#` starts a comment, missing keys keep defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ModelParams::new(self.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
        let positive = [
            ("samples", self.samples as u64),
            ("traces", self.traces as u64),
            ("walk_steps", self.walk_steps as u64),
            ("tail_samples", self.tail_samples as u64),
            ("tail_cap", self.tail_cap),
            ("crt_points", self.crt_points as u64),
            ("step_cap", self.caps.step_cap),
            ("rejection_cap", self.caps.rejection_cap),
            ("workers", self.workers as u64),
            ("constants_trees", self.constants.trees),
            ("constants_tree_size", self.constants.tree_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(CliError::Usage(format!("{k} must be positive")));
            }
        }
        for (k, v) in [("constants_volume", self.constants.volume), ("constants_through", self.constants.through)] {
            if v < MIN_BUDGET {
                return Err(CliError::Usage(format!("{k} must be at least {MIN_BUDGET}")));
            }
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(CliError::Usage("n_grid needs at least one positive size".into()));
        }
        if self.window.is_some_and(|w| !(w > 1.0 && w.is_finite())) {
            return Err(CliError::Usage("window must exceed 1".into()));
        }
        if !(self.crt_mesh_divisor >= 2.0 && self.crt_mesh_divisor.is_finite()) {
            return Err(CliError::Usage("crt_mesh_divisor must be at least 2".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.alpha).expect("validated alpha")
    }

    /// Upper end of the window over `lower`.
    pub fn upper(&self, lower: u64) -> Option<u64> {
        self.window.map(|w| ((w * lower as f64).ceil() as u64).max(lower + 1))
    }
}
