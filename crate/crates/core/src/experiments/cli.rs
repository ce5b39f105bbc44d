use std::ffi::OsString;

use clap::Parser;

use super::{run_study, write_outputs, ExperimentConfig, StudyOutput};
use crate::error::Error;

/// Exit codes of [`cli_main`].
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const OUTPUT: i32 = 4;
    pub const ABORTED: i32 = 5;
}

/// Monte-Carlo studies of the non-negative least-squares network.
///
/// Settings are resolved as: study preset, then the config file, then flags.
#[derive(Parser, Debug)]
#[command(name = "discnet", version)]
struct Cli {
    /// olfactory | pruning | sparse-comparison | sparsity-sweep | model-comparison
    #[arg(long)]
    study: Option<String>,
    /// paper-desk (default) or paper
    #[arg(long)]
    preset: Option<String>,
    /// File of `key = value` lines using the flag names as keys
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Data models, comma separated: rect, gaussian
    #[arg(long, visible_alias = "models")]
    model: Option<String>,
    /// Signal dimension N
    #[arg(long)]
    n: Option<String>,
    /// Measurement counts M, comma separated
    #[arg(long)]
    m: Option<String>,
    /// Number of Monte-Carlo instances per sweep point
    #[arg(long, visible_alias = "instances")]
    nn: Option<String>,
    /// Sparsity levels, comma separated
    #[arg(long)]
    s: Option<String>,
    /// Input SNRs in dB, comma separated
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    /// Pruning ratios in [0, 0.9], comma separated
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "kkt-tol")]
    kkt_tol: Option<String>,
    /// Simulated-time budget per solve
    #[arg(long = "max-time")]
    max_time: Option<String>,
    /// euler (default) or exact
    #[arg(long)]
    integrator: Option<String>,
    /// Euler step, or `auto`
    #[arg(long)]
    dt: Option<String>,
    /// Recovery rate of negative states
    #[arg(long)]
    xi: Option<String>,
    #[arg(long = "n-alphas")]
    n_alphas: Option<String>,
    #[arg(long = "prox-tol")]
    prox_tol: Option<String>,
    #[arg(long = "prox-max-iter")]
    prox_max_iter: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: DISCNET_THREADS, else all cores)
    #[arg(long)]
    threads: Option<String>,
    /// Also write per-row wall times
    #[arg(long)]
    timings: bool,
    /// Print the resolved settings and exit
    #[arg(long = "print-config")]
    print_config: bool,
}

impl Cli {
    fn settings(&self) -> Vec<(String, String)> {
        let flags = [
            ("study", &self.study),
            ("preset", &self.preset),
            ("model", &self.model),
            ("n", &self.n),
            ("m", &self.m),
            ("nn", &self.nn),
            ("s", &self.s),
            ("snr-db", &self.snr_db),
            ("ratios", &self.ratios),
            ("seed", &self.seed),
            ("kkt-tol", &self.kkt_tol),
            ("max-time", &self.max_time),
            ("integrator", &self.integrator),
            ("dt", &self.dt),
            ("xi", &self.xi),
            ("n-alphas", &self.n_alphas),
            ("prox-tol", &self.prox_tol),
            ("prox-max-iter", &self.prox_max_iter),
            ("out", &self.out),
            ("threads", &self.threads),
        ];
        let mut out: Vec<(String, String)> = flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.timings {
            out.push(("timings".into(), "true".into()));
        }
        out
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => exit::CONFIG,
        Error::Io(_) | Error::Csv(_) => exit::OUTPUT,
        Error::AbortThreshold { .. } => exit::ABORTED,
        _ => exit::OTHER,
    }
}

fn print_summary(cfg: &ExperimentConfig, out: &StudyOutput) {
    println!("{}: {} rows", cfg.study, out.records.len());
    for a in &out.aggregates {
        let p = &a.point;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "  {} m={} s={} snr={}dB prune={} {:<6} rel_err={} mse={} out_snr={}dB recovered={} failed={}/{}",
            p.model,
            p.m,
            p.s,
            p.snr_db,
            p.prune_ratio,
            a.solver.as_str(),
            fmt(a.mean_rel_err_support),
            fmt(a.mean_mse_support),
            fmt(a.mean_output_snr_db()),
            fmt(a.recovery_fraction),
            a.failed,
            a.instances
        );
    }
}

/// Parses `args` (including the program name), runs the study and writes its
/// tables. Returns the process exit code; see [`exit`].
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let mut settings = Vec::new();
    if let Some(path) = &cli.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return exit::CONFIG;
            }
        };
        match super::parse_settings(&text) {
            Ok(s) => settings = s,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return exit::CONFIG;
            }
        }
    }
    settings.extend(cli.settings());
    let cfg = match ExperimentConfig::from_settings(&settings) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    if cli.print_config {
        print!("{}", cfg.to_settings_text());
        return exit::OK;
    }
    let output = match run_study(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match write_outputs(&cfg, &output) {
        Ok(paths) => {
            print_summary(&cfg, &output);
            for p in paths {
                println!("wrote {}", p.display());
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("error: cannot write results to {}: {e}", cfg.out_dir.display());
            exit::OUTPUT
        }
    }
}
