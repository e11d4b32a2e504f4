//! Subcommand implementations behind the `qlev` binary.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use qlev::bound_states::bound_states;
use qlev::hexagon::{hexagon_winding, q_limits, HexagonCase, HexagonSymbol};
use qlev::lattice::MIN_SITES;
use qlev::scattering::{all_threshold_limits, ThresholdClass};
use qlev::winding::{levinson_report, s_matrix_nudged, unwrap_phase, LevinsonOptions};
use qlev::{Model, ModelParams, QlevError, Theta};
use serde::Serialize;

use crate::io::{finite, fmt17, write_csv, write_json, F17};
use crate::report::{status, EigenEntry, LevinsonReportFile, ThresholdEntry, RESIDUAL_TOL};
use crate::sweep::{run_sweep, summarize, SweepConfig, VDistribution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_RESIDUAL: i32 = 2;
pub const EXIT_UNCLASSIFIED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "qlev", version, about = "Scattering, bound states and Levinson's theorem for a magnetic quasi-1D lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Levels, thresholds and point spectrum.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// S-matrix on a uniform energy grid, as CSV.
    Scattering {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of grid points across the spectrum hull.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// One-sided threshold limits and their classes.
    Thresholds {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Both sides of the Levinson identity.
    CheckLevinson {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Skip tracing the hexagon symbol in the intricate case.
        #[arg(long)]
        no_hexagon: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Unwrapped arg det S per interval.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// det Γ around the hexagon (θ = 0, N even).
    Hexagon {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Random-potential campaign with one report per trial.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        theta_grid: usize,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// unit, deep:SCALE or sparse:P_ZERO
        #[arg(long, default_value = "unit")]
        dist: String,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub n: usize,
    /// Radians, or a rational multiple of pi such as `pi/2` or `3pi/8`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub theta: String,
    /// Comma-separated potential, one entry per site of the first layer.
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Lattice size for the truncated-lattice cross-check.
    #[arg(long, default_value_t = MIN_SITES)]
    pub oracle_sites: usize,
    #[arg(long)]
    pub no_oracle: bool,
}

impl OracleArgs {
    fn sites(&self) -> Option<usize> {
        (!self.no_oracle).then_some(self.oracle_sites)
    }
}

/// Bad flags or inputs; maps to exit code 64.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn parse_v(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad potential entry {t:?}"))))
        .collect()
}

impl ModelArgs {
    pub fn build(&self) -> Result<Model> {
        let theta: Theta = self.theta.parse().map_err(|e: QlevError| usage(e.to_string()))?;
        let v = parse_v(&self.v)?;
        Model::new(ModelParams::new(self.n, theta, v)).map_err(|e| usage(e.to_string()))
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct LevelEntry {
    k: usize,
    lambda: F17,
    channels: Vec<usize>,
}

#[derive(Serialize)]
struct SpectrumFile {
    n: usize,
    theta: String,
    levels: Vec<LevelEntry>,
    thresholds: Vec<(usize, String, F17)>,
    discrete: Vec<EigenEntry>,
    embedded: Vec<EigenEntry>,
    total: usize,
    oracle_total: Option<usize>,
    agreement: bool,
}

fn spectrum(model: &Model, oracle_sites: Option<usize>, out: Option<&Path>) -> Result<i32> {
    let b = bound_states(model, oracle_sites)?;
    let file = SpectrumFile {
        n: model.n(),
        theta: model.theta().to_string(),
        levels: model
            .levels()
            .iter()
            .map(|l| LevelEntry { k: l.k, lambda: F17(l.lambda), channels: l.members.clone() })
            .collect(),
        thresholds: model.thresholds().iter().map(|t| (t.level_k, t.side.to_string(), F17(t.energy))).collect(),
        discrete: b.discrete.iter().map(EigenEntry::from).collect(),
        embedded: b.embedded.iter().map(EigenEntry::from).collect(),
        total: b.total,
        oracle_total: b.oracle_total,
        agreement: b.agreement,
    };
    emit_json(out, &file)?;
    Ok(EXIT_OK)
}

/// Header for the S-grid CSV: `lambda, dim`, `re/im` of all `N²` slots, `arg_det_unwrapped, unitarity`.
pub fn scattering_header(n: usize) -> Vec<String> {
    let mut h = vec!["lambda".to_string(), "dim".to_string()];
    for a in 1..=n {
        for b in 1..=n {
            h.push(format!("re_s{a}_{b}"));
            h.push(format!("im_s{a}_{b}"));
        }
    }
    h.push("arg_det_unwrapped".into());
    h.push("unitarity".into());
    h
}

pub fn scattering_rows(model: &Model, grid: usize) -> Result<Vec<Vec<String>>> {
    let (lo, hi) = model.spectrum_hull();
    let n = model.n();
    let mut samples = Vec::with_capacity(grid);
    for i in 0..grid {
        let lam = lo + (hi - lo) * (i as f64 + 0.5) / grid as f64;
        if model.is_threshold(lam) {
            continue;
        }
        samples.push(s_matrix_nudged(model, lam)?);
    }
    let dets: Vec<Complex64> = samples.iter().map(|s| s.det()).collect();
    let phases = unwrap_phase(&dets);
    Ok(samples
        .iter()
        .zip(phases)
        .map(|(s, ph)| {
            let d = s.dim();
            let mut r = vec![fmt17(s.lambda), d.to_string()];
            for a in 0..n {
                for b in 0..n {
                    if a < d && b < d {
                        let z = s.matrix[(a, b)];
                        r.push(fmt17(z.re));
                        r.push(fmt17(z.im));
                    } else {
                        r.push(String::new());
                        r.push(String::new());
                    }
                }
            }
            r.push(fmt17(ph));
            r.push(fmt17(s.unitarity_error()));
            r
        })
        .collect())
}

fn scattering(model: &Model, grid: usize, csv: Option<&Path>) -> Result<i32> {
    if grid == 0 {
        return Err(usage("--grid must be positive"));
    }
    let header = scattering_header(model.n());
    let rows = scattering_rows(model, grid)?;
    match csv {
        Some(p) => write_csv(p, &header, &rows)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ThresholdsFile {
    n: usize,
    theta: String,
    intricate: bool,
    thresholds: Vec<ThresholdEntry>,
    /// `(𝔮(0₊), 𝔮(0₋))` as `[re, im]` pairs, intricate models only.
    q_limits: Option<[[Option<F17>; 2]; 2]>,
}

fn unclassified(model: &Model, class: &ThresholdClass) -> bool {
    matches!(class, ThresholdClass::Unclassified) || (class.is_intricate() && !model.is_intricate())
}

fn thresholds(model: &Model, out: Option<&Path>) -> Result<i32> {
    let limits = all_threshold_limits(model)?;
    let q = if model.is_intricate() {
        let (a, b) = q_limits(model)?;
        Some([[finite(a.re), finite(a.im)], [finite(b.re), finite(b.im)]])
    } else {
        None
    };
    let file = ThresholdsFile {
        n: model.n(),
        theta: model.theta().to_string(),
        intricate: model.is_intricate(),
        thresholds: limits.iter().map(ThresholdEntry::from_limit).collect(),
        q_limits: q,
    };
    emit_json(out, &file)?;
    if limits.iter().any(|l| unclassified(model, &l.class)) {
        eprintln!("unclassified threshold limit");
        return Ok(EXIT_UNCLASSIFIED);
    }
    Ok(EXIT_OK)
}

fn check_levinson(
    model: &Model,
    oracle_sites: Option<usize>,
    hexagon: bool,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Result<i32> {
    let report = match levinson_report(model, LevinsonOptions { oracle_sites, hexagon }) {
        Ok(r) => r,
        Err(e @ QlevError::UnclassifiedThreshold { .. }) => {
            emit_json(out, &LevinsonReportFile::failed(model, &e))?;
            eprintln!("{e}");
            return Ok(EXIT_UNCLASSIFIED);
        }
        Err(e) => return Err(e.into()),
    };
    let file = LevinsonReportFile::from_report(model, &report);
    emit_json(out, &file)?;
    if let Some(p) = csv {
        let header = ["interval", "lambda", "arg_unwrapped"].map(String::from);
        let rows: Vec<Vec<String>> = report
            .var
            .traces
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.samples.iter().map(move |&(l, a)| vec![i.to_string(), fmt17(l), fmt17(a)]))
            .collect();
        write_csv(p, &header, &rows)?;
    }
    eprintln!(
        "lhs = {:.6}, bound states = {}, residual = {:.3e}, status = {}",
        report.lhs, report.bound_count, report.residual, file.status
    );
    Ok(match file.status.as_str() {
        status::RESIDUAL | status::ORACLE_MISMATCH => EXIT_RESIDUAL,
        _ if !(report.residual.abs() < RESIDUAL_TOL) => EXIT_RESIDUAL,
        _ => EXIT_OK,
    })
}

#[derive(Serialize)]
struct HexagonFile {
    alpha: F17,
    case: String,
    vertical_winding: F17,
    total_winding: F17,
    edge_windings: Vec<F17>,
    unimodular_defect: F17,
    vertex_gap: F17,
    pattern_error: F17,
}

fn hexagon(model: &Model, out: Option<&Path>, csv: Option<&Path>) -> Result<i32> {
    if !model.has_degenerate_zero() {
        return Err(usage("hexagon needs theta = 0 and even N"));
    }
    let sym = HexagonSymbol::new(model)?;
    let rep = hexagon_winding(&sym)?;
    let file = HexagonFile {
        alpha: F17(rep.alpha),
        case: rep.case.label(),
        vertical_winding: F17(rep.vertical_winding),
        total_winding: F17(rep.total_winding),
        edge_windings: rep.edges.iter().map(|e| F17(e.winding)).collect(),
        unimodular_defect: F17(rep.unimodular_defect),
        vertex_gap: F17(rep.vertex_gap),
        pattern_error: F17(rep.pattern_error),
    };
    emit_json(out, &file)?;
    if let Some(p) = csv {
        let header = ["edge", "param", "t", "re_det", "im_det", "arg_unwrapped"].map(String::from);
        let rows: Vec<Vec<String>> = rep
            .csv_rows()
            .into_iter()
            .map(|(e, p, t, d, a)| vec![e.to_string(), fmt17(p), fmt17(t), fmt17(d.re), fmt17(d.im), fmt17(a)])
            .collect();
        write_csv(p, &header, &rows)?;
    }
    Ok(if rep.case == HexagonCase::Unclassified { EXIT_UNCLASSIFIED } else { EXIT_OK })
}

/// Apply `QLEV_THREADS` to the global rayon pool.
fn configure_threads() -> Result<()> {
    if let Ok(s) = std::env::var("QLEV_THREADS") {
        let n: usize = s.parse().map_err(|_| usage(format!("QLEV_THREADS must be a positive integer, got {s:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn sweep(cfg: SweepConfig) -> Result<i32> {
    configure_threads()?;
    let rows = run_sweep(&cfg)?;
    let s = summarize(&rows);
    eprintln!(
        "{} trials: {} ok, {} flagged, {} failed; manifest at {}",
        s.total,
        s.ok,
        s.flagged,
        s.failed.len(),
        cfg.out_dir.join("manifest.csv").display()
    );
    for f in &s.failed {
        eprintln!("  {f}");
    }
    Ok(if s.failed.is_empty() { EXIT_OK } else { EXIT_RESIDUAL })
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Spectrum { model, oracle, out } => spectrum(&model.build()?, oracle.sites(), out.as_deref()),
        Command::Scattering { model, grid, csv } => scattering(&model.build()?, grid, csv.as_deref()),
        Command::Thresholds { model, out } => thresholds(&model.build()?, out.as_deref()),
        Command::CheckLevinson { model, oracle, no_hexagon, out, csv } => {
            check_levinson(&model.build()?, oracle.sites(), !no_hexagon, out.as_deref(), csv.as_deref())
        }
        Command::Hexagon { model, out, csv } => hexagon(&model.build()?, out.as_deref(), csv.as_deref()),
        Command::Sweep { n, theta_grid, trials, seed, dist, out, oracle } => {
            if n.is_empty() || theta_grid == 0 {
                return Err(usage("--n and --theta-grid must be non-empty"));
            }
            let v_distribution: VDistribution = dist.parse().map_err(|e: anyhow::Error| usage(e.to_string()))?;
            let mut cfg = SweepConfig::new(n, theta_grid, trials, seed, out);
            cfg.v_distribution = v_distribution;
            cfg.oracle_sites = oracle.sites();
            sweep(cfg)
        }
    }
}

/// Parse `argv`, run, and map every outcome to an exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
