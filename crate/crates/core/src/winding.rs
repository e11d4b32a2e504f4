//! Phase variations, the comb contour and the Levinson identity.
//!
//! Windings are counted clockwise: a unimodular function whose argument decreases by `2π`
//! along the oriented path has winding `+1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bound_states::{bound_states, BoundStateReport};
use crate::error::{QlevError, Result};
use crate::hexagon::{hexagon_winding, HexagonReport, HexagonSymbol};
use crate::lattice::MIN_SITES;
use crate::model::{Model, Side};
use crate::scattering::{
    all_threshold_limits, epsilon_ladder, extrapolate_limit, extrapolate_towards, s_matrix, ScatteringSample, ThresholdClass, ThresholdLimit, CLASS_TOL,
    EXTRAPOLATION_TOL,
};
use crate::resolvent::{bs_matrix, Energy};
use crate::special::{eta_minus, eta_plus};

/// Largest admissible increment between consecutive samples.
pub const MAX_JUMP: f64 = PI / 2.0;
/// Refinement target for phase increments.
pub const PHASE_STEP: f64 = 0.1;
/// Refinement target for `max |ΔS|` between samples.
pub const MATRIX_STEP: f64 = 0.25;
/// Closest approach to a threshold when tracing `det S`.
pub const THRESHOLD_GAP: f64 = 1e-9;
pub const MAX_SAMPLES: usize = 1_000_000;
const INITIAL_SAMPLES: usize = 128;
const UNIMODULAR_TOL: f64 = 1e-6;

/// Cumulative principal-branch argument.
pub fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let Some(first) = values.first() else { return out };
    let mut acc = first.arg();
    out.push(acc);
    for w in values.windows(2) {
        acc += (w[1] / w[0]).arg();
        out.push(acc);
    }
    out
}

/// Clockwise winding `−Σ Δarg / 2π` of a nonvanishing sampled path.
pub fn winding_of(values: &[Complex64]) -> Result<f64> {
    let mut total = 0.0;
    for w in values.windows(2) {
        let d = (w[1] / w[0]).arg();
        if !(d.abs() < MAX_JUMP) {
            return Err(QlevError::PhaseJumpTooLarge { jump: d });
        }
        total += d;
    }
    Ok(-total / (2.0 * PI))
}

/// [`winding_of`] restricted to unimodular samples.
pub fn arg_variation(values: &[Complex64]) -> Result<f64> {
    if let Some(z) = values.iter().find(|z| (z.norm() - 1.0).abs() > UNIMODULAR_TOL) {
        return Err(QlevError::NotUnimodular { modulus: z.norm() });
    }
    winding_of(values)
}

/// Samples `f` on `init` (ascending) and bisects every gap flagged by `refine`.
pub fn adaptive_trace<T, F, R>(init: &[f64], mut f: F, refine: R, max_samples: usize) -> Result<Vec<(f64, T)>>
where
    F: FnMut(f64) -> Result<T>,
    R: Fn(&T, &T) -> bool,
{
    let span = init.last().copied().unwrap_or(0.0) - init.first().copied().unwrap_or(0.0);
    let min_gap = 1e-13 * span.abs().max(1e-300);
    let mut out: Vec<(f64, T)> = Vec::with_capacity(init.len() * 2);
    let mut count = 0usize;
    for &t in init {
        let mut stack = vec![(t, f(t)?)];
        count += 1;
        while let Some(top) = stack.last() {
            let split = match out.last() {
                Some(left) if top.0 - left.0 > min_gap && refine(&left.1, &top.1) => Some(0.5 * (left.0 + top.0)),
                _ => None,
            };
            match split {
                Some(mid) => {
                    count += 1;
                    if count > max_samples {
                        return Err(QlevError::RefinementLimit(max_samples));
                    }
                    let v = f(mid)?;
                    stack.push((mid, v));
                }
                None => out.push(stack.pop().expect("nonempty")),
            }
        }
    }
    Ok(out)
}

/// `det S` along one inter-threshold interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub interval: (f64, f64),
    /// `(λ, unwrapped arg det S)`
    pub samples: Vec<(f64, f64)>,
    pub variation: f64,
    pub max_unitarity_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarReport {
    pub traces: Vec<PhaseTrace>,
    pub total: f64,
    pub max_unitarity_error: f64,
}

/// `λ = a + L(3u² − 2u³)`: flat at both ends so that `u` resolves `√(λ − a)` behaviour.
fn smoothstep(a: f64, len: f64, u: f64) -> f64 {
    a + len * u * u * (3.0 - 2.0 * u)
}

fn initial_u(len: f64) -> Vec<f64> {
    let u_min = (THRESHOLD_GAP / (3.0 * len)).sqrt();
    let mut u: Vec<f64> =
        (0..INITIAL_SAMPLES).map(|i| u_min + (1.0 - 2.0 * u_min) * i as f64 / (INITIAL_SAMPLES - 1) as f64).collect();
    let mut g = u_min;
    while g < 1.0 / INITIAL_SAMPLES as f64 {
        u.push(g);
        u.push(1.0 - g);
        g *= 2.0;
    }
    u.sort_by(f64::total_cmp);
    u.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    u
}

/// `S(λ)`, stepping off isolated points where the Birman-Schwinger matrix is singular.
pub fn s_matrix_nudged(model: &Model, lam: f64) -> Result<ScatteringSample> {
    let mut res = s_matrix(model, lam);
    for k in 1..8 {
        match res {
            Err(QlevError::NonInvertible { .. }) => {
                let h = 1e-10 * 4f64.powi(k) * (1.0 + lam.abs());
                res = s_matrix(model, if k % 2 == 0 { lam + h } else { lam - h });
            }
            _ => break,
        }
    }
    res
}

struct DetSample {
    det: Complex64,
    /// `det B(λ+i0)`; `det S = conj(D)/D`, so a narrow resonance moves `arg D` by `π` instead of `2π`.
    bs_det: Complex64,
    matrix: DMatrix<Complex64>,
    unitarity: f64,
    lambda: f64,
}

pub fn trace_interval(model: &Model, a: f64, b: f64) -> Result<PhaseTrace> {
    let len = b - a;
    let init = initial_u(len);
    let pts = adaptive_trace(
        &init,
        |u| {
            let s = s_matrix_nudged(model, smoothstep(a, len, u))?;
            let bs_det = bs_matrix(model, Energy::Plus(s.lambda))?.lu().determinant();
            Ok(DetSample { det: s.det(), bs_det, unitarity: s.unitarity_error(), lambda: s.lambda, matrix: s.matrix })
        },
        |x, y| {
            let dm = (&x.matrix - &y.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
            (y.det / x.det).arg().abs() >= PHASE_STEP
                || 2.0 * (y.bs_det / x.bs_det).arg().abs() >= PHASE_STEP
                || dm > MATRIX_STEP
        },
        MAX_SAMPLES,
    )?;
    let mut lams: Vec<f64> = pts.iter().map(|p| p.1.lambda).collect();
    let mut dets: Vec<Complex64> = pts.iter().map(|p| p.1.det).collect();
    if let Some(d) = endpoint_det(model, a, 1.0, len) {
        lams.insert(0, a);
        dets.insert(0, d);
    }
    if let Some(d) = endpoint_det(model, b, -1.0, len) {
        lams.push(b);
        dets.push(d);
    }
    let variation = arg_variation(&dets)?;
    let phases = unwrap_phase(&dets);
    let max_unitarity_error = pts.iter().map(|p| p.1.unitarity).fold(0.0, f64::max);
    let samples = lams.into_iter().zip(phases).collect();
    Ok(PhaseTrace { interval: (a, b), samples, variation, max_unitarity_error })
}

/// One-sided limit of `det S` at an interval end, when the extrapolation settles.
fn endpoint_det(model: &Model, at: f64, dir: f64, len: f64) -> Option<Complex64> {
    if epsilon_ladder()[0] * 4.0 > len {
        return None;
    }
    let (v, err) = extrapolate_towards(at, dir, |lam| Ok(vec![s_matrix_nudged(model, lam)?.det()])).ok()?;
    (err < EXTRAPOLATION_TOL).then(|| v[0] / v[0].norm())
}

/// `Var(λ ↦ det S(λ))` summed over all inter-threshold intervals.
pub fn var_det_s(model: &Model) -> Result<VarReport> {
    let traces: Vec<PhaseTrace> =
        model.intervals().into_iter().map(|(a, b)| trace_interval(model, a, b)).collect::<Result<_>>()?;
    let total = traces.iter().map(|t| t.variation).sum();
    let max_unitarity_error = traces.iter().map(|t| t.max_unitarity_error).fold(0.0, f64::max);
    Ok(VarReport { traces, total, max_unitarity_error })
}

/// Representative limit matrix of a threshold class.
pub fn canonical_matrix(class: &ThresholdClass) -> Option<DMatrix<Complex64>> {
    let c = |x: f64| Complex64::new(x, 0.0);
    Some(match *class {
        ThresholdClass::PlusOne => DMatrix::from_element(1, 1, c(1.0)),
        ThresholdClass::MinusOne => DMatrix::from_element(1, 1, c(-1.0)),
        ThresholdClass::PlusIdentity2 => DMatrix::identity(2, 2),
        ThresholdClass::MinusIdentity2 => -DMatrix::<Complex64>::identity(2, 2),
        ThresholdClass::Reflection { a, b_re, b_im } => {
            let b = Complex64::new(b_re, b_im);
            DMatrix::from_row_slice(2, 2, &[c(a), b, b.conj(), c(-a)])
        }
        _ => return None,
    })
}

/// Samples along a vertical comb edge.
pub const ETA_SAMPLES: usize = 2001;
pub const ETA_RANGE: f64 = 40.0;

/// `det(1 + ½(1 − η(s))(S̃ − 1))` along the edge at a threshold of the given side: `η_-` with
/// `s` from `+∞` to `−∞` for a channel opening, `η_+` with `s` from `−∞` to `+∞` for a closing.
pub fn eta_piece_values(limit: &DMatrix<Complex64>, side: Side) -> Vec<Complex64> {
    let d = limit.nrows();
    let id = DMatrix::<Complex64>::identity(d, d);
    (0..ETA_SAMPLES)
        .map(|i| {
            let tau = i as f64 / (ETA_SAMPLES - 1) as f64;
            let eta = match side {
                Side::Lower => eta_minus(ETA_RANGE * (1.0 - 2.0 * tau)),
                Side::Upper => eta_plus(ETA_RANGE * (2.0 * tau - 1.0)),
            };
            let m = &id + (limit - &id) * (0.5 * (Complex64::new(1.0, 0.0) - eta));
            m.determinant()
        })
        .collect()
}

pub fn eta_piece_winding(class: &ThresholdClass, side: Side) -> Result<f64> {
    if class.is_intricate() {
        return Err(QlevError::IntricateClass);
    }
    let m = canonical_matrix(class).ok_or(QlevError::UnclassifiedThreshold { level_k: 0, side })?;
    arg_variation(&eta_piece_values(&m, side))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Down,
    Right,
    RightUpper,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourEdge {
    pub kind: EdgeKind,
    pub level_k: usize,
    /// Energy interval for horizontal edges, threshold energy twice for vertical ones.
    pub range: (f64, f64),
}

/// Edges of the comb: `↓_k`, `↑_k` at every level, and the horizontal pieces between thresholds.
pub fn comb_edges(model: &Model) -> Vec<ContourEdge> {
    let mut edges = Vec::new();
    for l in model.levels() {
        let lo = model.threshold(l.k, Side::Lower).energy;
        edges.push(ContourEdge { kind: EdgeKind::Down, level_k: l.k, range: (lo, lo) });
    }
    let tol = crate::model::LEVEL_TOL;
    for (a, b) in model.intervals() {
        let upper = model.thresholds().iter().find(|t| t.side == Side::Upper && (t.energy - a).abs() < tol);
        let edge = match upper {
            Some(t) => ContourEdge { kind: EdgeKind::RightUpper, level_k: t.level_k + 1, range: (a, b) },
            None => {
                let t = model
                    .thresholds()
                    .iter()
                    .find(|t| t.side == Side::Lower && (t.energy - a).abs() < tol)
                    .expect("interval starts at a threshold");
                ContourEdge { kind: EdgeKind::Right, level_k: t.level_k, range: (a, b) }
            }
        };
        edges.push(edge);
    }
    for l in model.levels() {
        let hi = model.threshold(l.k, Side::Upper).energy;
        edges.push(ContourEdge { kind: EdgeKind::Up, level_k: l.k, range: (hi, hi) });
    }
    edges
}

/// `C`: +1 limits and reflections count once, `+I₂` twice.
pub fn correction_count(limits: &[ThresholdLimit]) -> usize {
    limits.iter().map(|l| l.class.correction_weight()).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct LevinsonOptions {
    /// Lattice sites for the oracle, `None` to skip it.
    pub oracle_sites: Option<usize>,
    /// Also trace the hexagon symbol in the intricate case.
    pub hexagon: bool,
}

impl Default for LevinsonOptions {
    fn default() -> Self {
        LevinsonOptions { oracle_sites: Some(MIN_SITES), hexagon: true }
    }
}

#[derive(Debug, Clone)]
pub struct LevinsonReport {
    pub var: VarReport,
    pub limits: Vec<ThresholdLimit>,
    pub correction_c: usize,
    pub intricate: bool,
    /// `Var + N − C/2 (− 1/2)`.
    pub lhs: f64,
    /// `Var` plus the numerically traced vertical windings.
    pub lhs_contour: f64,
    /// Per-channel form with `#{j | 𝔰_jj(λ_j ± 2) = 1}`; only for θ ∉ {0, π}.
    pub lhs_channelwise: Option<f64>,
    pub bounds: BoundStateReport,
    pub bound_count: usize,
    pub residual: f64,
    pub hexagon: Option<HexagonReport>,
}

impl LevinsonReport {
    /// Integer identity holds and the bound-state count is trustworthy.
    pub fn holds(&self) -> bool {
        self.residual.abs() < 0.01 && self.bounds.agreement
    }
}

fn hexagon_thresholds(model: &Model, k: usize) -> bool {
    model.is_intricate() && (k == 1 || k == model.num_levels())
}

/// Channelwise count of `+1` threshold values, one entry per channel and side.
pub fn channelwise_plus_one(model: &Model) -> Result<usize> {
    let mut count = 0;
    for ch in model.channels() {
        for side in [Side::Lower, Side::Upper] {
            let k = model
                .levels()
                .iter()
                .find(|l| l.members.contains(&ch.j))
                .expect("every channel has a level")
                .k;
            let t = *model.threshold(k, side);
            let (v, err) = extrapolate_limit(&t, |lam| Ok(vec![s_matrix(model, lam)?.entry(ch.j, ch.j).expect("open")]))?;
            if !(err < EXTRAPOLATION_TOL) {
                return Err(QlevError::ExtrapolationDiverged { level_k: k, side, err });
            }
            if (v[0] - 1.0).norm() < CLASS_TOL {
                count += 1;
            }
        }
    }
    Ok(count)
}

pub fn levinson_report(model: &Model, opts: LevinsonOptions) -> Result<LevinsonReport> {
    let limits = all_threshold_limits(model)?;
    let intricate = model.is_intricate();
    for l in &limits {
        let bad = matches!(l.class, ThresholdClass::Unclassified) || (l.class.is_intricate() && !intricate);
        if bad {
            return Err(QlevError::UnclassifiedThreshold { level_k: l.threshold.level_k, side: l.threshold.side });
        }
    }
    let var = var_det_s(model)?;
    let correction_c = correction_count(&limits);
    let n = model.n() as f64;
    let lhs = var.total + n - 0.5 * correction_c as f64 - if intricate { 0.5 } else { 0.0 };

    let mut vertical = 0.0;
    for l in &limits {
        if hexagon_thresholds(model, l.threshold.level_k) {
            continue;
        }
        vertical += eta_piece_winding(&l.class, l.threshold.side)?;
    }
    let hexagon = if intricate && opts.hexagon {
        let sym = HexagonSymbol::new(model)?;
        Some(hexagon_winding(&sym)?)
    } else {
        None
    };
    if intricate {
        vertical += match &hexagon {
            Some(h) => h.vertical_winding,
            None => {
                let sym = HexagonSymbol::new(model)?;
                crate::hexagon::classify_case(sym.alpha, &sym.boundary)
                    .vertical_winding()
                    .ok_or(QlevError::UnclassifiedThreshold { level_k: 1, side: Side::Upper })?
            }
        };
    }
    let lhs_contour = var.total + vertical;

    let th = model.theta();
    let lhs_channelwise = if !th.is_zero() && !th.is_pi() {
        Some(var.total + n - 0.5 * channelwise_plus_one(model)? as f64)
    } else {
        None
    };

    let bounds = bound_states(model, opts.oracle_sites)?;
    let bound_count = bounds.total;
    let residual = lhs - bound_count as f64;
    Ok(LevinsonReport {
        var,
        limits,
        correction_c,
        intricate,
        lhs,
        lhs_contour,
        lhs_channelwise,
        bounds,
        bound_count,
        residual,
        hexagon,
    })
}
