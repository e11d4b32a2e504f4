//! Parameter sweeps over `(N, θ, v)` with one report file per trial.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qlev::lattice::MIN_SITES;
use qlev::winding::{levinson_report, LevinsonOptions};
use qlev::{Model, ModelParams, Theta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::io::{fmt17, write_csv};
use crate::report::{status, LevinsonReportFile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VDistribution {
    /// Uniform on the unit sphere of `R^N`.
    UnitSphere,
    /// Unit sphere scaled by the given factor.
    Deep(f64),
    /// Gaussian entries, each zeroed with probability `p_zero`.
    SparseWithZeros(f64),
}

impl std::str::FromStr for VDistribution {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |d: f64| -> Result<f64> {
            Ok(match arg {
                Some(a) => a.parse().with_context(|| format!("bad parameter in {s:?}"))?,
                None => d,
            })
        };
        match name {
            "unit" | "unit-sphere" => Ok(VDistribution::UnitSphere),
            "deep" => Ok(VDistribution::Deep(num(10.0)?)),
            "sparse" => {
                let p = num(0.5)?;
                if !(0.0..1.0).contains(&p) {
                    bail!("p_zero must lie in [0, 1)");
                }
                Ok(VDistribution::SparseWithZeros(p))
            }
            _ => bail!("unknown distribution {s:?} (unit, deep:SCALE, sparse:P)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub theta_grid: usize,
    pub trials_per_cell: usize,
    pub rng_seed: u64,
    pub v_distribution: VDistribution,
    pub out_dir: PathBuf,
    pub oracle_sites: Option<usize>,
}

impl SweepConfig {
    pub fn new(n_values: Vec<usize>, theta_grid: usize, trials_per_cell: usize, rng_seed: u64, out_dir: PathBuf) -> Self {
        SweepConfig {
            n_values,
            theta_grid,
            trials_per_cell,
            rng_seed,
            v_distribution: VDistribution::UnitSphere,
            out_dir,
            oracle_sites: Some(MIN_SITES),
        }
    }
}

/// `2πi/g` for `i < g`, plus `0` and `π` when the grid misses them.
pub fn theta_grid(g: usize) -> Vec<Theta> {
    let mut out: Vec<Theta> = (0..g as i64).map(|i| Theta::pi_frac(2 * i, g as i64).expect("g > 0")).collect();
    for extra in [Theta::zero(), Theta::pi()] {
        if !out.contains(&extra) {
            out.push(extra);
        }
    }
    out
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial seed; stable across platforms and releases.
pub fn trial_seed(seed: u64, n: usize, theta_idx: usize, trial: usize) -> u64 {
    [n as u64, theta_idx as u64, trial as u64].iter().fold(mix(seed), |h, &x| mix(h ^ x))
}

pub fn sample_v(dist: VDistribution, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sphere = |rng: &mut ChaCha8Rng| loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|x| x / norm).collect::<Vec<_>>();
        }
    };
    match dist {
        VDistribution::UnitSphere => sphere(rng),
        VDistribution::Deep(scale) => sphere(rng).into_iter().map(|x| scale * x).collect(),
        VDistribution::SparseWithZeros(p) => loop {
            let v: Vec<f64> = (0..n)
                .map(|_| {
                    let keep = rng.gen::<f64>() >= p;
                    let x: f64 = rng.sample(StandardNormal);
                    if keep {
                        x
                    } else {
                        0.0
                    }
                })
                .collect();
            if v.iter().any(|&x| x != 0.0) {
                return v;
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub trial_id: String,
    pub n: usize,
    pub theta_idx: usize,
    pub theta: Theta,
    pub trial: usize,
    pub v: Vec<f64>,
}

pub fn trial_specs(cfg: &SweepConfig) -> Vec<TrialSpec> {
    let grid = theta_grid(cfg.theta_grid);
    let mut out = Vec::new();
    for &n in &cfg.n_values {
        for (theta_idx, &theta) in grid.iter().enumerate() {
            for trial in 0..cfg.trials_per_cell {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.rng_seed, n, theta_idx, trial));
                out.push(TrialSpec {
                    trial_id: format!("trial_n{n}_t{theta_idx:02}_{trial:03}"),
                    n,
                    theta_idx,
                    theta,
                    trial,
                    v: sample_v(cfg.v_distribution, n, &mut rng),
                });
            }
        }
    }
    out
}

pub fn run_trial(spec: &TrialSpec, oracle_sites: Option<usize>) -> Result<LevinsonReportFile> {
    let model = Model::new(ModelParams::new(spec.n, spec.theta, spec.v.clone()))?;
    let opts = LevinsonOptions { oracle_sites, hexagon: true };
    Ok(match levinson_report(&model, opts) {
        Ok(r) => LevinsonReportFile::from_report(&model, &r),
        Err(e) => LevinsonReportFile::failed(&model, &e),
    })
}

#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub trial_id: String,
    pub report: LevinsonReportFile,
}

pub const MANIFEST_HEADER: [&str; 9] =
    ["trial_id", "n", "theta", "intricate", "C", "var_det_s", "bound_total", "residual", "status"];

impl ManifestRow {
    fn record(&self) -> Vec<String> {
        let r = &self.report;
        let opt = |x: Option<crate::io::F17>| x.map(|v| fmt17(v.0)).unwrap_or_default();
        vec![
            self.trial_id.clone(),
            r.params.n.to_string(),
            r.params.theta_symbolic.clone(),
            r.intricate.flag.to_string(),
            r.correction_c.map(|c| c.to_string()).unwrap_or_default(),
            opt(r.var_det_s),
            r.bound_total().map(|c| c.to_string()).unwrap_or_default(),
            opt(r.residual),
            r.status.clone(),
        ]
    }
}

fn trial_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Run (or resume) every trial, then write `manifest.csv` sorted by trial id.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ManifestRow>> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let specs = trial_specs(cfg);
    let mut rows: Vec<ManifestRow> = specs
        .par_iter()
        .map(|spec| -> Result<ManifestRow> {
            let path = trial_path(&cfg.out_dir, &spec.trial_id);
            let report = if path.exists() {
                LevinsonReportFile::read(&path)?
            } else {
                let r = match run_trial(spec, cfg.oracle_sites) {
                    Ok(r) => r,
                    Err(e) => bail!("{}: {e}", spec.trial_id),
                };
                r.write(&path)?;
                r
            };
            Ok(ManifestRow { trial_id: spec.trial_id.clone(), report })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    let header: Vec<String> = MANIFEST_HEADER.iter().map(|s| s.to_string()).collect();
    let records: Vec<Vec<String>> = rows.iter().map(ManifestRow::record).collect();
    write_csv(&cfg.out_dir.join("manifest.csv"), &header, &records)?;
    Ok(rows)
}

/// Counts for a finished sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSummary {
    pub total: usize,
    pub ok: usize,
    pub flagged: usize,
    pub failed: Vec<String>,
    pub with_plus_one: usize,
}

pub fn summarize(rows: &[ManifestRow]) -> SweepSummary {
    let mut s = SweepSummary { total: rows.len(), ..Default::default() };
    for r in rows {
        let rep = &r.report;
        if rep.status == status::OK {
            s.ok += 1;
        } else if rep.is_flagged() {
            s.flagged += 1;
        } else {
            s.failed.push(format!("{} ({})", r.trial_id, rep.status));
        }
        if rep.thresholds.iter().any(|t| t.class == "PlusOne" || t.class == "PlusIdentity2") {
            s.with_plus_one += 1;
        }
    }
    s
}
