//! Command-line front end behind the `secsim` binary.
//!
//! Configuration comes from a flat TOML file (`--config`) with per-key flag
//! overrides. Keys: `alpha`, `noise_legit`, `noise_eav`, `p_tot`,
//! `lambda_legit`, `lambda_eav`, `gamma`, `delta`, `scheme`, `trials`,
//! `seed`, `n_l_list`, `p1_fraction`, `out`, `strict_geometry`.
//!
//! All output is comma-separated with a header line. Floats carry 12
//! significant digits; a missing rate is `nan`, an infinite cost `inf` and a
//! missing index `-1`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::geometry::{poisson_tail_bound, poisson_upper_tail};
use crate::rates::secrecy_cost;
use crate::scaling::{
    feasibility_probability, run_trial, sweep, Aggregate, FeasibilityEstimate, NetworkConfig, Regime, RegimeKind,
    SweepRow,
};

pub const TRIAL_COLUMNS: [&str; 15] = [
    "scheme",
    "seed",
    "n_l_actual",
    "n_e_actual",
    "feasible_relays",
    "feasible_eavfree",
    "direct_branch",
    "rate_bits",
    "raw_rate",
    "broadcast_term",
    "multiaccess_term",
    "cost",
    "limiting_rx",
    "limiting_eav",
    "reason",
];

pub const SWEEP_COLUMNS: [&str; 13] = [
    "n_l_target",
    "n_e_sched",
    "trial",
    "n_l_actual",
    "n_e_actual",
    "feasible_relays",
    "feasible_eavfree",
    "direct_branch",
    "rate_bits",
    "raw_rate",
    "cost",
    "limiting_rx",
    "limiting_eav",
];

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "n_l_target",
    "n_e_sched",
    "trials",
    "feasible",
    "feasible_fraction",
    "eav_free_fraction",
    "median_rate",
    "q1_rate",
    "q3_rate",
    "median_cost",
];

pub const FEASIBILITY_COLUMNS: [&str; 10] = [
    "n_l",
    "n_e",
    "trials",
    "required",
    "p_enough_relays",
    "se_enough_relays",
    "p_eav_free",
    "se_eav_free",
    "analytic_eav_free",
    "analytic_eav_free_clipped",
];

pub const BOUNDS_COLUMNS: [&str; 4] = ["lambda", "x", "exact_tail", "bound"];

#[derive(Debug, Parser)]
#[command(name = "secsim", version, about = "Secure cooperative relaying simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and print a one-row CSV.
    Trial(RunArgs),
    /// Run a Monte-Carlo sweep over n_l_list; writes rows and aggregates.
    Sweep(RunArgs),
    /// Estimate the square feasibility probabilities.
    Feasibility(RunArgs),
    /// Compare the Poisson tail bound with the exact tail.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Flat TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path (standard output when absent, except for sweeps).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise_legit: Option<f64>,
    #[arg(long)]
    pub noise_eav: Option<f64>,
    #[arg(long)]
    pub p_tot: Option<f64>,
    #[arg(long)]
    pub lambda_legit: Option<f64>,
    #[arg(long)]
    pub lambda_eav: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// parallel-zf, serial-zf or serial-colluding-zf.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated network sizes for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub n_l_list: Option<Vec<usize>>,
    #[arg(long)]
    pub p1_fraction: Option<f64>,
    /// Report rates only when the square conditions hold.
    #[arg(long)]
    pub strict_geometry: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Comma-separated Poisson means.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f64>,
    /// Comma-separated thresholds; may be empty.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub x: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a configuration file; every key optional.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub noise_legit: Option<f64>,
    pub noise_eav: Option<f64>,
    pub p_tot: Option<f64>,
    pub lambda_legit: Option<f64>,
    pub lambda_eav: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub scheme: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub n_l_list: Option<Vec<usize>>,
    pub p1_fraction: Option<f64>,
    pub out: Option<PathBuf>,
    pub strict_geometry: Option<bool>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub regime: Regime,
    pub n_l_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Merges file values and flag overrides over the defaults, then validates.
    pub fn resolve(file: FileConfig, args: &RunArgs) -> Result<Self> {
        let alpha = args.alpha.or(file.alpha).unwrap_or(2.0);
        let channel = ChannelParams {
            alpha,
            noise_legit: args.noise_legit.or(file.noise_legit).unwrap_or(1.0),
            noise_eav: args.noise_eav.or(file.noise_eav).unwrap_or(1.0),
            p_tot: args.p_tot.or(file.p_tot).unwrap_or(1.0),
        };
        let network = NetworkConfig {
            channel,
            lambda_legit: args.lambda_legit.or(file.lambda_legit).unwrap_or(1000.0),
            lambda_eav: args.lambda_eav.or(file.lambda_eav).unwrap_or(5.0),
            p1_fraction: args.p1_fraction.or(file.p1_fraction).unwrap_or(0.5),
            strict_geometry: args.strict_geometry || file.strict_geometry.unwrap_or(false),
        };
        network.validate()?;
        let kind: RegimeKind = args
            .scheme
            .clone()
            .or(file.scheme)
            .unwrap_or_else(|| "parallel-zf".into())
            .parse()?;
        let regime = Regime::new(
            kind,
            args.gamma.or(file.gamma).unwrap_or(1.0),
            args.delta.or(file.delta).unwrap_or(1.0),
            alpha,
        )?;
        let trials = args.trials.or(file.trials).unwrap_or(50);
        if trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        let n_l_list = args
            .n_l_list
            .clone()
            .or(file.n_l_list)
            .unwrap_or_else(|| vec![1_000, 10_000]);
        if let Some(&bad) = n_l_list.iter().find(|&&n| n < 100) {
            return Err(Error::config("n_l_list", format!("entries must be >= 100, got {bad}")));
        }
        Ok(RunConfig {
            network,
            regime,
            n_l_list,
            trials,
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out),
        })
    }

    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::resolve(file, args)
    }
}

/// Twelve significant digits; `nan` and `inf` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.11e}")
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    fmt_f64(v.unwrap_or(f64::NAN))
}

fn fmt_index(v: Option<usize>) -> String {
    v.map_or_else(|| "-1".into(), |i| i.to_string())
}

fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn sweep_row_record(row: &SweepRow) -> Vec<String> {
    let o = &row.outcome;
    let rate = o.rate.as_ref();
    vec![
        row.n_l_target.to_string(),
        row.n_e_sched.to_string(),
        row.trial.to_string(),
        o.n_l.to_string(),
        o.n_e.to_string(),
        fmt_flag(o.feasibility.enough_relays).into(),
        fmt_flag(o.feasibility.eav_free).into(),
        fmt_flag(o.direct).into(),
        fmt_opt_f64(rate.map(|r| r.rate_bits)),
        fmt_opt_f64(rate.map(|r| r.raw_rate)),
        fmt_f64(row.cost),
        fmt_index(rate.and_then(|r| r.limiting_receiver)),
        fmt_index(rate.and_then(|r| r.limiting_eavesdropper)),
    ]
}

pub fn aggregate_record(a: &Aggregate) -> Vec<String> {
    vec![
        a.n_l_target.to_string(),
        a.n_e_sched.to_string(),
        a.trials.to_string(),
        a.feasible.to_string(),
        fmt_f64(a.feasible_fraction),
        fmt_f64(a.eav_free_fraction),
        fmt_f64(a.median_rate),
        fmt_f64(a.q1_rate),
        fmt_f64(a.q3_rate),
        fmt_f64(a.median_cost),
    ]
}

fn feasibility_record(e: &FeasibilityEstimate) -> Vec<String> {
    vec![
        e.n_l.to_string(),
        e.n_e.to_string(),
        e.trials.to_string(),
        e.required.to_string(),
        fmt_f64(e.p_enough_relays),
        fmt_f64(e.se_enough_relays),
        fmt_f64(e.p_eav_free),
        fmt_f64(e.se_eav_free),
        fmt_f64(e.analytic_eav_free),
        fmt_f64(e.analytic_eav_free_clipped),
    ]
}

/// Writes a header and rows to `out`, or to `stdout` when `out` is absent.
fn emit(out: Option<&Path>, stdout: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    match out {
        Some(path) => fs::write(path, &buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => stdout.write_all(&buf)?,
    }
    Ok(())
}

/// Companion aggregate path: `<stem>_agg.csv` next to the row file.
pub fn aggregate_path(rows: &Path) -> PathBuf {
    let stem = rows
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    rows.with_file_name(format!("{stem}_agg.csv"))
}

pub fn cmd_trial(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let outcome = run_trial(&config.network, &config.regime, config.seed)?;
    let rate = outcome.rate.as_ref();
    let record = vec![
        rate.map_or_else(|| config.regime.kind.to_string(), |r| r.scheme.to_string()),
        config.seed.to_string(),
        outcome.n_l.to_string(),
        outcome.n_e.to_string(),
        fmt_flag(outcome.feasibility.enough_relays).into(),
        fmt_flag(outcome.feasibility.eav_free).into(),
        fmt_flag(outcome.direct).into(),
        fmt_opt_f64(rate.map(|r| r.rate_bits)),
        fmt_opt_f64(rate.map(|r| r.raw_rate)),
        fmt_opt_f64(rate.and_then(|r| r.broadcast_term)),
        fmt_opt_f64(rate.and_then(|r| r.multiaccess_term)),
        fmt_f64(rate.map_or(f64::NAN, |r| secrecy_cost(config.network.channel.p_tot, r.rate_bits))),
        fmt_index(rate.and_then(|r| r.limiting_receiver)),
        fmt_index(rate.and_then(|r| r.limiting_eavesdropper)),
        outcome
            .reason
            .as_deref()
            .map_or_else(String::new, |r| r.replace([',', '\n'], ";")),
    ];
    emit(config.out.as_deref(), stdout, &TRIAL_COLUMNS, &[record])
}

pub fn cmd_sweep(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let result = sweep(
        &config.n_l_list,
        &config.regime,
        config.trials,
        &config.network,
        config.seed,
    )?;
    let rows_path = config.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let agg_path = aggregate_path(&rows_path);
    let rows: Vec<Vec<String>> = result.rows.iter().map(sweep_row_record).collect();
    let aggs: Vec<Vec<String>> = result.aggregates.iter().map(aggregate_record).collect();
    emit(Some(&rows_path), stdout, &SWEEP_COLUMNS, &rows)?;
    emit(Some(&agg_path), stdout, &AGGREGATE_COLUMNS, &aggs)?;
    writeln!(stdout, "{}", rows_path.display())?;
    writeln!(stdout, "{}", agg_path.display())?;
    Ok(())
}

pub fn cmd_feasibility(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let est = feasibility_probability(
        config.network.lambda_legit,
        config.network.lambda_eav,
        &config.regime,
        config.trials,
        config.seed,
    )?;
    emit(config.out.as_deref(), stdout, &FEASIBILITY_COLUMNS, &[feasibility_record(&est)])
}

pub fn cmd_bounds(args: &BoundsArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut rows = Vec::new();
    for &lambda in &args.lambda {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::config("lambda", format!("must be positive, got {lambda}")));
        }
        for &x in &args.x {
            match poisson_tail_bound(lambda, x) {
                Ok(bound) => rows.push(vec![
                    fmt_f64(lambda),
                    fmt_f64(x),
                    fmt_f64(poisson_upper_tail(lambda, x)),
                    fmt_f64(bound),
                ]),
                Err(_) => writeln!(stderr, "warning: skipping x = {x} <= lambda = {lambda}")?,
            }
        }
    }
    emit(args.out.as_deref(), stdout, &BOUNDS_COLUMNS, &rows)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 1;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    let result = match &cli.command {
        Command::Trial(a) => RunConfig::from_args(a).and_then(|c| cmd_trial(&c, stdout)),
        Command::Sweep(a) => RunConfig::from_args(a).and_then(|c| cmd_sweep(&c, stdout)),
        Command::Feasibility(a) => RunConfig::from_args(a).and_then(|c| cmd_feasibility(&c, stdout)),
        Command::Bounds(a) => cmd_bounds(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}
