//! JSON report files for a single model.

use std::path::Path;

use anyhow::{bail, Context, Result};
use qlev::bound_states::Eigenvalue;
use qlev::scattering::ThresholdLimit;
use qlev::winding::LevinsonReport;
use qlev::{Model, QlevError};
use serde::{Deserialize, Serialize};

use crate::io::{finite, write_json, F17};

pub const SCHEMA_VERSION: &str = "1";
pub const RESIDUAL_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub theta: F17,
    pub theta_symbolic: String,
    pub v: Vec<F17>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntricateEntry {
    pub flag: bool,
    pub alpha: Option<F17>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdEntry {
    pub level_k: usize,
    pub side: String,
    pub energy: F17,
    pub class: String,
    pub error_estimate: F17,
    pub matrix_re: Vec<Vec<F17>>,
    pub matrix_im: Vec<Vec<F17>>,
}

impl ThresholdEntry {
    pub fn from_limit(l: &ThresholdLimit) -> Self {
        let m = &l.matrix;
        let grid = |f: fn(num_complex::Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| F17(f(m[(i, j)]))).collect()).collect()
        };
        ThresholdEntry {
            level_k: l.threshold.level_k,
            side: l.threshold.side.to_string(),
            energy: F17(l.threshold.energy),
            class: l.class.name().to_string(),
            error_estimate: F17(l.error_estimate),
            matrix_re: grid(|z| z.re),
            matrix_im: grid(|z| z.im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenEntry {
    pub lambda: F17,
    pub multiplicity: usize,
    pub at_threshold: bool,
}

impl From<&Eigenvalue> for EigenEntry {
    fn from(e: &Eigenvalue) -> Self {
        EigenEntry { lambda: F17(e.lambda), multiplicity: e.multiplicity, at_threshold: e.at_threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundStatesEntry {
    pub discrete: Vec<EigenEntry>,
    pub embedded: Vec<EigenEntry>,
    pub total: usize,
    pub oracle_total: Option<usize>,
    /// Oracle counts at each lattice size tried.
    pub oracle_history: Vec<usize>,
    /// Sturm counts outside the band hull match the localized oracle states.
    pub oracle_envelope_ok: Option<bool>,
    pub agreement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HexagonEntry {
    pub case: String,
    pub vertical_winding: F17,
    pub total_winding: F17,
    pub unimodular_defect: F17,
    pub vertex_gap: F17,
    pub pattern_error: F17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevinsonReportFile {
    pub schema_version: String,
    pub params: Params,
    pub intricate: IntricateEntry,
    pub thresholds: Vec<ThresholdEntry>,
    pub var_det_s: Option<F17>,
    #[serde(rename = "correction_C")]
    pub correction_c: Option<usize>,
    pub bound_states: Option<BoundStatesEntry>,
    pub lhs: Option<F17>,
    pub lhs_contour: Option<F17>,
    pub lhs_channelwise: Option<F17>,
    pub residual: Option<F17>,
    pub max_unitarity_error: Option<F17>,
    pub hexagon: Option<HexagonEntry>,
    pub status: String,
    pub message: Option<String>,
}

/// Trial outcome labels. `flagged:*` trials are excluded from pass/fail statistics.
pub mod status {
    pub const OK: &str = "ok";
    pub const RESIDUAL: &str = "residual";
    pub const ORACLE_MISMATCH: &str = "oracle-mismatch";
    pub const UNCLASSIFIED: &str = "unclassified";
    pub const ERROR: &str = "error";
    pub const AT_THRESHOLD: &str = "flagged:at-threshold";
    pub const EXTRAPOLATION: &str = "flagged:extrapolation";
}

fn params_of(model: &Model) -> Params {
    Params {
        n: model.n(),
        theta: F17(model.theta().value()),
        theta_symbolic: model.theta().to_string(),
        v: model.v().iter().map(|&x| F17(x)).collect(),
    }
}

fn intricate_of(model: &Model) -> IntricateEntry {
    let info = model.intricate();
    IntricateEntry { flag: info.is_intricate, alpha: info.alpha.and_then(finite) }
}

impl LevinsonReportFile {
    pub fn from_report(model: &Model, r: &LevinsonReport) -> Self {
        let b = &r.bounds;
        let status = if b.at_threshold {
            status::AT_THRESHOLD
        } else if !b.agreement {
            status::ORACLE_MISMATCH
        } else if !(r.residual.abs() < RESIDUAL_TOL) {
            status::RESIDUAL
        } else {
            status::OK
        };
        LevinsonReportFile {
            schema_version: SCHEMA_VERSION.into(),
            params: params_of(model),
            intricate: intricate_of(model),
            thresholds: r.limits.iter().map(ThresholdEntry::from_limit).collect(),
            var_det_s: finite(r.var.total),
            correction_c: Some(r.correction_c),
            bound_states: Some(BoundStatesEntry {
                discrete: b.discrete.iter().map(EigenEntry::from).collect(),
                embedded: b.embedded.iter().map(EigenEntry::from).collect(),
                total: b.total,
                oracle_total: b.oracle_total,
                oracle_history: b.oracle.as_ref().map(|o| o.history.clone()).unwrap_or_default(),
                oracle_envelope_ok: b.oracle.as_ref().map(|o| o.envelope_ok),
                agreement: b.agreement,
            }),
            lhs: finite(r.lhs),
            lhs_contour: finite(r.lhs_contour),
            lhs_channelwise: r.lhs_channelwise.and_then(finite),
            residual: finite(r.residual),
            max_unitarity_error: finite(r.var.max_unitarity_error),
            hexagon: r.hexagon.as_ref().map(|h| HexagonEntry {
                case: h.case.label(),
                vertical_winding: F17(h.vertical_winding),
                total_winding: F17(h.total_winding),
                unimodular_defect: F17(h.unimodular_defect),
                vertex_gap: F17(h.vertex_gap),
                pattern_error: F17(h.pattern_error),
            }),
            status: status.into(),
            message: None,
        }
    }

    /// Report for a model whose computation stopped with `err`.
    pub fn failed(model: &Model, err: &QlevError) -> Self {
        let status = match err {
            QlevError::UnclassifiedThreshold { .. } => status::UNCLASSIFIED,
            QlevError::ExtrapolationDiverged { .. } => status::EXTRAPOLATION,
            _ => status::ERROR,
        };
        LevinsonReportFile {
            schema_version: SCHEMA_VERSION.into(),
            params: params_of(model),
            intricate: intricate_of(model),
            thresholds: Vec::new(),
            var_det_s: None,
            correction_c: None,
            bound_states: None,
            lhs: None,
            lhs_contour: None,
            lhs_channelwise: None,
            residual: None,
            max_unitarity_error: None,
            hexagon: None,
            status: status.into(),
            message: Some(err.to_string()),
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.status.starts_with("flagged")
    }

    pub fn bound_total(&self) -> Option<usize> {
        self.bound_states.as_ref().map(|b| b.total)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Parse and check the schema version.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: LevinsonReportFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if r.schema_version != SCHEMA_VERSION {
            bail!("{}: unsupported schema_version {:?}", path.display(), r.schema_version);
        }
        Ok(r)
    }
}
