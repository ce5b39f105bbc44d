//! Experiment configuration: built-in presets, flat `key = value` files and
//! overrides, applied in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::ModelKind;
use crate::dynsys::{DEFAULT_KKT_TOL, DEFAULT_MAX_TIME, DEFAULT_XI};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Study {
    OlfactorySnrSweep,
    PruningSweep,
    SparseApproxComparison,
    SparsitySweep,
    ModelComparison,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Study::OlfactorySnrSweep,
        Study::PruningSweep,
        Study::SparseApproxComparison,
        Study::SparsitySweep,
        Study::ModelComparison,
    ];

    /// Name used on the command line and in output file names.
    pub fn as_str(self) -> &'static str {
        match self {
            Study::OlfactorySnrSweep => "olfactory",
            Study::PruningSweep => "pruning",
            Study::SparseApproxComparison => "sparse-comparison",
            Study::SparsitySweep => "sparsity-sweep",
            Study::ModelComparison => "model-comparison",
        }
    }

    /// Whether the study also runs the regularized reference solver.
    pub fn compares_nnbpdn(self) -> bool {
        matches!(
            self,
            Study::SparseApproxComparison | Study::SparsitySweep | Study::ModelComparison
        )
    }

    /// Square systems only.
    pub fn is_square(self) -> bool {
        matches!(self, Study::OlfactorySnrSweep | Study::PruningSweep)
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Study::ALL.iter().map(|s| s.as_str()).collect();
                Error::Config(format!("unknown study '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Minutes on a desktop.
    PaperDesk,
    /// 5000 instances at N = 200; hours.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-desk" => Ok(Preset::PaperDesk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected paper-desk or paper)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorChoice {
    Euler,
    Exact,
}

impl FromStr for IntegratorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(IntegratorChoice::Euler),
            "exact" => Ok(IntegratorChoice::Exact),
            other => Err(Error::Config(format!("unknown integrator '{other}' (expected euler or exact)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub study: Study,
    pub models: Vec<ModelKind>,
    /// Signal dimension N.
    pub n: usize,
    /// Measurement counts M; square studies use `[n]`.
    pub m_list: Vec<usize>,
    pub s_list: Vec<usize>,
    pub snr_db_list: Vec<f64>,
    pub prune_ratios: Vec<f64>,
    pub n_instances: usize,
    pub master_seed: u64,
    pub kkt_tol: f64,
    pub max_time: f64,
    pub integrator: IntegratorChoice,
    /// Euler step; `None` picks the stability-based default.
    pub dt: Option<f64>,
    pub xi: f64,
    pub n_alphas: usize,
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    pub out_dir: PathBuf,
    /// Worker threads; `None` defers to the environment.
    pub threads: Option<usize>,
    /// Also write per-row wall times to a separate file.
    pub write_timings: bool,
}

/// Environment variable read for the worker-thread count.
pub const THREADS_ENV: &str = "DISCNET_THREADS";

const SNR_GRID: [f64; 7] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0];

impl ExperimentConfig {
    /// Defaults of `study` at the given scale.
    pub fn preset(study: Study, preset: Preset) -> Self {
        let paper = preset == Preset::Paper;
        let mut cfg = Self {
            study,
            models: vec![ModelKind::Rect],
            n: 100,
            m_list: vec![50],
            s_list: vec![5],
            snr_db_list: vec![40.0],
            prune_ratios: vec![0.0],
            n_instances: if paper { 5000 } else { 200 },
            master_seed: 1,
            kkt_tol: DEFAULT_KKT_TOL,
            max_time: DEFAULT_MAX_TIME,
            integrator: IntegratorChoice::Euler,
            dt: None,
            xi: DEFAULT_XI,
            n_alphas: 50,
            prox_tol: 1e-10,
            prox_max_iter: 200_000,
            out_dir: PathBuf::from("results"),
            threads: None,
            write_timings: false,
        };
        let n = if paper { 200 } else { 50 };
        match study {
            Study::OlfactorySnrSweep => {
                cfg.models = vec![ModelKind::Rect, ModelKind::Gaussian];
                cfg.n = n;
                cfg.m_list = vec![n];
                cfg.s_list = vec![1, 3, 5, 10];
                cfg.snr_db_list = SNR_GRID.to_vec();
            }
            Study::PruningSweep => {
                cfg.n = n;
                cfg.m_list = vec![n];
                cfg.s_list = vec![3];
                cfg.prune_ratios = (0..10).map(|k| k as f64 / 10.0).collect();
            }
            Study::SparseApproxComparison => {
                cfg.n = if paper { 200 } else { 100 };
                cfg.m_list = if paper { vec![50, 100, 150] } else { vec![25, 50, 75] };
            }
            Study::SparsitySweep => {
                cfg.n = if paper { 200 } else { 100 };
                cfg.m_list = vec![cfg.n / 2];
                cfg.s_list = vec![1, 3, 5, 8, 12];
            }
            Study::ModelComparison => {
                cfg.models = vec![ModelKind::Rect, ModelKind::Gaussian];
                cfg.n = if paper { 200 } else { 100 };
                cfg.m_list = if paper { vec![50, 100, 150] } else { vec![25, 50, 75] };
            }
        }
        cfg
    }

    /// Applies one setting. Keys match the long command-line flags without
    /// dashes; list values are comma separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("invalid value '{value}' for {key}: {what}"));
        match key.trim().replace('_', "-").as_str() {
            "study" | "preset" => {} // resolved before overrides
            "model" | "models" => self.models = parse_list(value).map_err(|_| bad("expected rect or gaussian"))?,
            "n" => self.n = value.parse().map_err(|_| bad("expected a count"))?,
            "m" => self.m_list = parse_list(value).map_err(|_| bad("expected counts"))?,
            "s" => self.s_list = parse_list(value).map_err(|_| bad("expected counts"))?,
            "snr-db" => self.snr_db_list = parse_list(value).map_err(|_| bad("expected numbers"))?,
            "ratios" | "prune-ratios" => self.prune_ratios = parse_list(value).map_err(|_| bad("expected numbers"))?,
            "nn" | "instances" => self.n_instances = value.parse().map_err(|_| bad("expected a count"))?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "kkt-tol" => self.kkt_tol = value.parse().map_err(|_| bad("expected a number"))?,
            "max-time" => self.max_time = value.parse().map_err(|_| bad("expected a number"))?,
            "integrator" => self.integrator = value.parse()?,
            "dt" => {
                self.dt = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("expected a number or auto"))?)
                }
            }
            "xi" => self.xi = value.parse().map_err(|_| bad("expected a number"))?,
            "n-alphas" => self.n_alphas = value.parse().map_err(|_| bad("expected a count"))?,
            "prox-tol" => self.prox_tol = value.parse().map_err(|_| bad("expected a number"))?,
            "prox-max-iter" => self.prox_max_iter = value.parse().map_err(|_| bad("expected a count"))?,
            "out" => self.out_dir = PathBuf::from(value),
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("expected a count"))?),
            "timings" => self.write_timings = parse_bool(value).ok_or_else(|| bad("expected true or false"))?,
            other => return Err(Error::Config(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    /// Builds a configuration from settings: `study` is required, `preset`
    /// defaults to `paper-desk`, and the remaining keys override the preset
    /// in order.
    pub fn from_settings(settings: &[(String, String)]) -> Result<Self> {
        let lookup = |k: &str| settings.iter().rev().find(|(key, _)| key.trim() == k).map(|(_, v)| v.trim());
        let study: Study = lookup("study")
            .ok_or_else(|| Error::Config("no study given".into()))?
            .parse()?;
        let preset = lookup("preset").map(Preset::from_str).transpose()?.unwrap_or(Preset::PaperDesk);
        let mut cfg = Self::preset(study, preset);
        for (k, v) in settings {
            cfg.set(k, v)?;
        }
        if study.is_square() && !settings.iter().any(|(k, _)| k.trim() == "m") {
            cfg.m_list = vec![cfg.n];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_instances == 0 {
            return fail("at least one instance is required".into());
        }
        if self.n == 0 {
            return fail("n must be positive".into());
        }
        for (name, empty) in [
            ("models", self.models.is_empty()),
            ("m", self.m_list.is_empty()),
            ("s", self.s_list.is_empty()),
            ("snr-db", self.snr_db_list.is_empty()),
            ("ratios", self.prune_ratios.is_empty()),
        ] {
            if empty {
                return fail(format!("sweep list '{name}' is empty"));
            }
        }
        if let Some(&m) = self.m_list.iter().find(|&&m| m == 0) {
            return fail(format!("invalid measurement count {m}"));
        }
        if self.study.is_square() && self.m_list.iter().any(|&m| m != self.n) {
            return fail(format!("study {} needs m = n = {}", self.study, self.n));
        }
        if let Some(&s) = self.s_list.iter().find(|&&s| s == 0 || s >= self.n) {
            return fail(format!("sparsity {s} must lie in 1..{}", self.n));
        }
        if let Some(r) = self.prune_ratios.iter().find(|r| !(0.0..=0.9).contains(*r)) {
            return fail(format!("pruning ratio {r} outside [0, 0.9]"));
        }
        if self.snr_db_list.iter().any(|v| v.is_nan()) {
            return fail("SNR values must be numbers".into());
        }
        if !(self.kkt_tol > 0.0) || !(self.max_time > 0.0) || !(self.xi > 0.0) || !(self.prox_tol >= 0.0) {
            return fail("tolerances, max-time and xi must be positive".into());
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return fail("dt must be positive".into());
        }
        if self.study.compares_nnbpdn() && self.n_alphas < 2 {
            return fail("n-alphas must be at least 2".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        Ok(())
    }

    /// Flat `key = value` rendering that [`parse_settings`] reads back.
    pub fn to_settings_text(&self) -> String {
        let list = |v: &[String]| v.join(",");
        let mut map = BTreeMap::new();
        map.insert("models", list(&self.models.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        map.insert("n", self.n.to_string());
        map.insert("m", list(&self.m_list.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        map.insert("s", list(&self.s_list.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        map.insert("snr-db", list(&self.snr_db_list.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        map.insert("ratios", list(&self.prune_ratios.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        map.insert("instances", self.n_instances.to_string());
        map.insert("seed", self.master_seed.to_string());
        map.insert("kkt-tol", self.kkt_tol.to_string());
        map.insert("max-time", self.max_time.to_string());
        map.insert(
            "integrator",
            match self.integrator {
                IntegratorChoice::Euler => "euler".into(),
                IntegratorChoice::Exact => "exact".into(),
            },
        );
        map.insert("dt", self.dt.map_or("auto".into(), |d| d.to_string()));
        map.insert("xi", self.xi.to_string());
        map.insert("n-alphas", self.n_alphas.to_string());
        map.insert("prox-tol", self.prox_tol.to_string());
        map.insert("prox-max-iter", self.prox_max_iter.to_string());
        let mut out = format!("study = {}\n", self.study);
        for (k, v) in map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, ()> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| ()))
        .collect()
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
