//! Monte-Carlo studies over generated instances.
//!
//! A study is a grid of sweep points (model × M × s × input SNR × pruning
//! ratio) times `n_instances` instances. Instance `k` draws from stream `k`
//! of the master seed at every sweep point, so points differ only in the
//! swept quantity. Each (point, instance) solves the network NNLS and, for
//! the comparison studies, an NNBPDN regularization path whose best member
//! (smallest full-vector MSE against the ground truth) is reported.
//!
//! Results go to `<study>_instances.csv` (one row per point, instance and
//! solver) and `<study>_aggregate.csv` (one row per point and solver). Both
//! are pure functions of the configuration: rows are ordered by point,
//! instance and solver regardless of thread count, and wall-clock times are
//! kept out of them (see [`write_outputs`] for the optional timings file).

mod cli;
mod config;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::datagen::{self, DataModelSpec, InstanceSeed, ModelKind};
use crate::dynsys::{self, DiscSystem, Integrator, SolverOptions};
use crate::error::{Error, Result};
use crate::kkt;
use crate::metrics::{self, OutputSnr, RecoveryMetrics};
use crate::numerics::{self, RealVector};
use crate::solvers::{self, IterOptions};

pub use cli::cli_main;
pub use config::{parse_settings, ExperimentConfig, IntegratorChoice, Preset, Study, THREADS_ENV};

/// Studies abort when more than this fraction of instances fail.
pub const ABORT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub model: ModelKind,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub snr_db: f64,
    pub prune_ratio: f64,
}

impl SweepPoint {
    pub fn spec(&self) -> Result<DataModelSpec> {
        DataModelSpec::new(self.model, self.m, self.n, self.s, self.snr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SolverKind {
    /// Equilibrium of the network (NNLS).
    Nnls,
    /// Best member of the NNBPDN path.
    Nnbpdn,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Nnls => "nnls",
            SolverKind::Nnbpdn => "nnbpdn",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "nnls" => Ok(SolverKind::Nnls),
            "nnbpdn" => Ok(SolverKind::Nnbpdn),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub converged: bool,
    pub kkt_residual: f64,
    /// Network switch count; `None` for the path solver.
    pub switches: Option<usize>,
    pub steps: usize,
    /// Selected regularization parameter (path solver only).
    pub alpha: Option<f64>,
    pub metrics: RecoveryMetrics,
}

/// One row of the per-instance table.
#[derive(Debug, Clone, PartialEq)]
pub struct McRecord {
    pub point: SweepPoint,
    pub instance: u64,
    pub solver: SolverKind,
    pub outcome: std::result::Result<SolveSummary, String>,
    /// Seconds; not part of the deterministic tables.
    pub wall_time: f64,
}

/// One row of the aggregate table. Failed rows are excluded from every
/// statistic; output SNR means skip the infinite and undefined sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: SweepPoint,
    pub solver: SolverKind,
    pub instances: usize,
    pub failed: usize,
    pub converged: usize,
    pub mean_rel_err_support: Option<f64>,
    pub se_rel_err_support: Option<f64>,
    pub mean_mse_support: Option<f64>,
    pub se_mse_support: Option<f64>,
    pub mean_output_snr: Option<f64>,
    pub se_output_snr: Option<f64>,
    pub snr_finite: usize,
    pub snr_infinite: usize,
    pub snr_undefined: usize,
    pub recovery_fraction: Option<f64>,
    pub mean_switches: Option<f64>,
}

impl AggregateRow {
    /// Mean output SNR in decibels.
    pub fn mean_output_snr_db(&self) -> Option<f64> {
        self.mean_output_snr.map(datagen::linear_to_db)
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub records: Vec<McRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl StudyOutput {
    pub fn aggregate(&self, point: &SweepPoint, solver: SolverKind) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.point == *point && a.solver == solver)
    }
}

/// Sweep points in output order: model, M, s, SNR, pruning ratio.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &model in &cfg.models {
        for &m in &cfg.m_list {
            for &s in &cfg.s_list {
                for &snr_db in &cfg.snr_db_list {
                    for &prune_ratio in &cfg.prune_ratios {
                        out.push(SweepPoint {
                            model,
                            m,
                            n: cfg.n,
                            s,
                            snr_db,
                            prune_ratio,
                        });
                    }
                }
            }
        }
    }
    out
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        integrator: match cfg.integrator {
            IntegratorChoice::Euler => Integrator::ProjectedEuler { dt: cfg.dt },
            IntegratorChoice::Exact => Integrator::ExactSubsystem,
        },
        kkt_tol: cfg.kkt_tol,
        max_time: cfg.max_time,
        sample_every: 0,
        ..SolverOptions::default()
    }
}

fn run_instance(cfg: &ExperimentConfig, point: &SweepPoint, index: u64) -> Vec<McRecord> {
    let mut out = Vec::with_capacity(2);
    let solvers: &[SolverKind] = if cfg.study.compares_nnbpdn() {
        &[SolverKind::Nnls, SolverKind::Nnbpdn]
    } else {
        &[SolverKind::Nnls]
    };
    let instance = point.spec().map(|spec| datagen::generate(&spec, InstanceSeed::new(cfg.master_seed, index)));
    let instance = instance.and_then(|inst| {
        if inst.negative_entries > 0 {
            warn!("instance {index}: {} negative matrix entries", inst.negative_entries);
        }
        with_pruning(inst, point.prune_ratio)
    });
    for &solver in solvers {
        let start = std::time::Instant::now();
        let outcome = match &instance {
            Err(e) => Err(e.to_string()),
            Ok(inst) => match solver {
                SolverKind::Nnls => solve_network(cfg, inst),
                SolverKind::Nnbpdn => solve_path(cfg, inst),
            }
            .map_err(|e| e.to_string()),
        };
        if let Err(msg) = &outcome {
            warn!("instance {index} at {point:?}, {}: {msg}", solver.as_str());
        }
        out.push(McRecord {
            point: *point,
            instance: index,
            solver,
            outcome,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    out
}

/// Prunes the instance matrix and regenerates the measurements from the
/// pruned matrix with the same signal and noise draw, so the pruned network
/// is a consistent (if degraded) model of its own input. Ratio 0 leaves the
/// instance untouched.
fn with_pruning(mut inst: datagen::Instance, ratio: f64) -> Result<datagen::Instance> {
    if ratio == 0.0 {
        return Ok(inst);
    }
    inst.a = datagen::prune(&inst.a, ratio)?;
    inst.y0 = numerics::matvec(&inst.a, &inst.x0)?;
    let y: Vec<f64> = inst.y0.iter().zip(inst.eta.iter()).map(|(u, v)| u + v).collect();
    inst.y = RealVector::from_vec_unchecked(y);
    Ok(inst)
}

fn solve_network(cfg: &ExperimentConfig, inst: &datagen::Instance) -> Result<SolveSummary> {
    let a = &inst.a;
    let sys = DiscSystem::new(a.clone(), inst.y.clone(), cfg.xi)?;
    let (res, _) = dynsys::solve(&sys, &RealVector::zeros(a.cols()), &solver_options(cfg))?;
    Ok(SolveSummary {
        converged: res.converged,
        kkt_residual: res.kkt_residual,
        switches: Some(res.switches),
        steps: res.steps,
        alpha: None,
        metrics: RecoveryMetrics::evaluate(&res.x_eq, &inst.x0, &inst.support)?,
    })
}

fn solve_path(cfg: &ExperimentConfig, inst: &datagen::Instance) -> Result<SolveSummary> {
    let a = &inst.a;
    let opts = IterOptions {
        tol: cfg.prox_tol,
        max_iter: cfg.prox_max_iter,
    };
    let path = solvers::nnbpdn_path(a, &inst.y, cfg.n_alphas, &opts)?;
    // first minimum wins, so ties resolve to the larger alpha
    let mut best = 0;
    let mut best_mse = f64::INFINITY;
    for (k, x) in path.solutions.iter().enumerate() {
        let mse = metrics::mse_full(x, &inst.x0);
        if mse < best_mse {
            best_mse = mse;
            best = k;
        }
    }
    let x = &path.solutions[best];
    let alpha = path.alphas[best];
    Ok(SolveSummary {
        converged: path.converged[best],
        kkt_residual: kkt::nnbpdn_kkt(a, &inst.y, alpha, x)?.total,
        switches: None,
        steps: path.iterations.iter().sum(),
        alpha: Some(alpha),
        metrics: RecoveryMetrics::evaluate(x, &inst.x0, &inst.support)?,
    })
}

fn thread_count(cfg: &ExperimentConfig) -> Result<Option<usize>> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Runs every sweep point and instance of the study and aggregates.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let work: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..cfg.n_instances as u64).map(move |i| (p, i)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(cfg)? {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    info!(
        "{}: {} sweep points × {} instances on {} threads",
        cfg.study,
        points.len(),
        cfg.n_instances,
        pool.current_num_threads()
    );
    let per_item: Vec<Vec<McRecord>> = pool.install(|| {
        work.par_iter()
            .map(|&(p, i)| run_instance(cfg, &points[p], i))
            .collect()
    });
    let failed_items = per_item
        .iter()
        .filter(|recs| recs.iter().any(|r| r.outcome.is_err()))
        .count();
    check_abort(failed_items, work.len())?;
    let records: Vec<McRecord> = per_item.into_iter().flatten().collect();
    let aggregates = aggregate(&records);
    Ok(StudyOutput { records, aggregates })
}

fn check_abort(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > ABORT_FRACTION * total as f64 {
        Err(Error::AbortThreshold { failed, total })
    } else {
        Ok(())
    }
}

pub fn run_olfactory(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    expect_study(cfg, Study::OlfactorySnrSweep)?;
    run_study(cfg)
}

pub fn run_pruning(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    expect_study(cfg, Study::PruningSweep)?;
    run_study(cfg)
}

pub fn run_sparse_comparison(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    if !cfg.study.compares_nnbpdn() {
        return Err(Error::Config(format!("study {} does not compare solvers", cfg.study)));
    }
    run_study(cfg)
}

fn expect_study(cfg: &ExperimentConfig, study: Study) -> Result<()> {
    if cfg.study == study {
        Ok(())
    } else {
        Err(Error::Config(format!("expected study {study}, got {}", cfg.study)))
    }
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Groups records by (point, solver), keeping first-appearance order, and
/// computes the aggregate statistics in record order.
pub fn aggregate(records: &[McRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(SweepPoint, SolverKind)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(p, s)| *p == r.point && *s == r.solver) {
            keys.push((r.point, r.solver));
        }
    }
    keys.into_iter()
        .map(|(point, solver)| {
            let group: Vec<&McRecord> = records
                .iter()
                .filter(|r| r.point == point && r.solver == solver)
                .collect();
            let ok: Vec<&SolveSummary> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let rel: Vec<f64> = ok.iter().map(|s| s.metrics.rel_err_support).collect();
            let mse: Vec<f64> = ok.iter().map(|s| s.metrics.mse_support).collect();
            let snr: Vec<f64> = ok.iter().filter_map(|s| s.metrics.output_snr.finite()).collect();
            let switches: Vec<f64> = ok.iter().filter_map(|s| s.switches.map(|v| v as f64)).collect();
            let (mean_rel, se_rel) = mean_se(&rel);
            let (mean_mse, se_mse) = mean_se(&mse);
            let (mean_snr, se_snr) = mean_se(&snr);
            let recovered = ok.iter().filter(|s| s.metrics.support_recovered).count();
            AggregateRow {
                point,
                solver,
                instances: group.len(),
                failed: group.len() - ok.len(),
                converged: ok.iter().filter(|s| s.converged).count(),
                mean_rel_err_support: mean_rel,
                se_rel_err_support: se_rel,
                mean_mse_support: mean_mse,
                se_mse_support: se_mse,
                mean_output_snr: mean_snr,
                se_output_snr: se_snr,
                snr_finite: snr.len(),
                snr_infinite: ok.iter().filter(|s| s.metrics.output_snr == OutputSnr::Infinite).count(),
                snr_undefined: ok.iter().filter(|s| s.metrics.output_snr == OutputSnr::Undefined).count(),
                recovery_fraction: (!ok.is_empty()).then(|| recovered as f64 / ok.len() as f64),
                mean_switches: mean_se(&switches).0,
            }
        })
        .collect()
}

const POINT_HEADER: [&str; 6] = ["model", "m", "n", "s", "snr_db", "prune_ratio"];

const INSTANCE_HEADER: [&str; 14] = [
    "instance",
    "solver",
    "status",
    "converged",
    "kkt_residual",
    "switches",
    "steps",
    "alpha",
    "rel_err_support",
    "mse_support",
    "output_snr",
    "output_snr_kind",
    "support_recovered",
    "error",
];

const AGGREGATE_HEADER: [&str; 18] = [
    "solver",
    "instances",
    "failed",
    "converged",
    "mean_rel_err_support",
    "se_rel_err_support",
    "mean_mse_support",
    "se_mse_support",
    "mean_output_snr",
    "se_output_snr",
    "mean_output_snr_db",
    "snr_finite",
    "snr_infinite",
    "snr_undefined",
    "recovery_fraction",
    "mean_switches",
    "n_alpha_selected",
    "mean_alpha",
];

fn point_fields(p: &SweepPoint) -> Vec<String> {
    vec![
        p.model.to_string(),
        p.m.to_string(),
        p.n.to_string(),
        p.s.to_string(),
        p.snr_db.to_string(),
        p.prune_ratio.to_string(),
    ]
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_instances_csv<W: Write>(records: &[McRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POINT_HEADER.iter().chain(INSTANCE_HEADER.iter()))?;
    for r in records {
        let mut row = point_fields(&r.point);
        row.push(r.instance.to_string());
        row.push(r.solver.as_str().into());
        match &r.outcome {
            Ok(s) => {
                let (snr, kind) = match s.metrics.output_snr {
                    OutputSnr::Finite(v) => (v.to_string(), "finite"),
                    OutputSnr::Infinite => (String::new(), "infinite"),
                    OutputSnr::Undefined => (String::new(), "undefined"),
                };
                row.extend([
                    "ok".to_string(),
                    s.converged.to_string(),
                    s.kkt_residual.to_string(),
                    opt(s.switches),
                    s.steps.to_string(),
                    opt(s.alpha),
                    s.metrics.rel_err_support.to_string(),
                    s.metrics.mse_support.to_string(),
                    snr,
                    kind.to_string(),
                    s.metrics.support_recovered.to_string(),
                    String::new(),
                ]);
            }
            Err(msg) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(msg.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], records: &[McRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POINT_HEADER.iter().chain(AGGREGATE_HEADER.iter()))?;
    for a in rows {
        let alphas: Vec<f64> = records
            .iter()
            .filter(|r| r.point == a.point && r.solver == a.solver)
            .filter_map(|r| r.outcome.as_ref().ok().and_then(|s| s.alpha))
            .collect();
        let mut row = point_fields(&a.point);
        row.extend([
            a.solver.as_str().to_string(),
            a.instances.to_string(),
            a.failed.to_string(),
            a.converged.to_string(),
            opt(a.mean_rel_err_support),
            opt(a.se_rel_err_support),
            opt(a.mean_mse_support),
            opt(a.se_mse_support),
            opt(a.mean_output_snr),
            opt(a.se_output_snr),
            opt(a.mean_output_snr_db()),
            a.snr_finite.to_string(),
            a.snr_infinite.to_string(),
            a.snr_undefined.to_string(),
            opt(a.recovery_fraction),
            opt(a.mean_switches),
            alphas.len().to_string(),
            opt(mean_se(&alphas).0),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    rec.get(idx)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config(format!("bad or missing '{name}' in instances table")))
}

fn parse_opt<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<T>> {
    match rec.get(idx) {
        Some("") => Ok(None),
        _ => parse_field(rec, idx, name).map(Some),
    }
}

/// Reads a per-instance table written by [`write_instances_csv`]. Wall
/// times are not stored and come back as zero.
pub fn read_instances_csv<R: Read>(input: R) -> Result<Vec<McRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let point = SweepPoint {
            model: rec.get(0).unwrap_or("").parse()?,
            m: parse_field(&rec, 1, "m")?,
            n: parse_field(&rec, 2, "n")?,
            s: parse_field(&rec, 3, "s")?,
            snr_db: parse_field(&rec, 4, "snr_db")?,
            prune_ratio: parse_field(&rec, 5, "prune_ratio")?,
        };
        let instance = parse_field(&rec, 6, "instance")?;
        let solver = SolverKind::parse(rec.get(7).unwrap_or(""))?;
        let outcome = match rec.get(8) {
            Some("ok") => {
                let snr_value: Option<f64> = parse_opt(&rec, 16, "output_snr")?;
                let output_snr = match rec.get(17) {
                    Some("finite") => OutputSnr::Finite(
                        snr_value.ok_or_else(|| Error::Config("finite output SNR without value".into()))?,
                    ),
                    Some("infinite") => OutputSnr::Infinite,
                    Some("undefined") => OutputSnr::Undefined,
                    _ => return Err(Error::Config("bad output_snr_kind in instances table".into())),
                };
                Ok(SolveSummary {
                    converged: parse_field(&rec, 9, "converged")?,
                    kkt_residual: parse_field(&rec, 10, "kkt_residual")?,
                    switches: parse_opt(&rec, 11, "switches")?,
                    steps: parse_field(&rec, 12, "steps")?,
                    alpha: parse_opt(&rec, 13, "alpha")?,
                    metrics: RecoveryMetrics {
                        rel_err_support: parse_field(&rec, 14, "rel_err_support")?,
                        mse_support: parse_field(&rec, 15, "mse_support")?,
                        output_snr,
                        support_recovered: parse_field(&rec, 18, "support_recovered")?,
                    },
                })
            }
            Some("failed") => Err(rec.get(19).unwrap_or("").to_string()),
            _ => return Err(Error::Config("bad status in instances table".into())),
        };
        out.push(McRecord {
            point,
            instance,
            solver,
            outcome,
            wall_time: 0.0,
        });
    }
    Ok(out)
}

pub fn instances_path(dir: &Path, study: Study) -> PathBuf {
    dir.join(format!("{study}_instances.csv"))
}

pub fn aggregate_path(dir: &Path, study: Study) -> PathBuf {
    dir.join(format!("{study}_aggregate.csv"))
}

pub fn timings_path(dir: &Path, study: Study) -> PathBuf {
    dir.join(format!("{study}_timings.csv"))
}

/// Writes the per-instance and aggregate tables into `cfg.out_dir`, plus
/// `<study>_timings.csv` (point, instance, solver, seconds) when timings are
/// enabled. Returns the paths written.
pub fn write_outputs(cfg: &ExperimentConfig, output: &StudyOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.out_dir)?;
    let inst = instances_path(&cfg.out_dir, cfg.study);
    write_instances_csv(&output.records, fs::File::create(&inst)?)?;
    let agg = aggregate_path(&cfg.out_dir, cfg.study);
    write_aggregate_csv(&output.aggregates, &output.records, fs::File::create(&agg)?)?;
    let mut paths = vec![inst, agg];
    if cfg.write_timings {
        let path = timings_path(&cfg.out_dir, cfg.study);
        let mut w = csv::Writer::from_writer(fs::File::create(&path)?);
        w.write_record(POINT_HEADER.iter().chain(["instance", "solver", "wall_time"].iter()))?;
        for r in &output.records {
            let mut row = point_fields(&r.point);
            row.extend([r.instance.to_string(), r.solver.as_str().into(), r.wall_time.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
