//! Scattering matrix on the open-channel fiber and its threshold limits.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QlevError, Result};
use crate::model::{Model, Side, ThresholdPoint};
use crate::resolvent::{bs_matrix, invert_checked, Energy};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone)]
pub struct ScatteringSample {
    pub lambda: f64,
    pub open_channels: Vec<usize>,
    /// In the basis `ξ_j/√N`, `j` open, ascending.
    pub matrix: DMatrix<Complex64>,
}

impl ScatteringSample {
    pub fn dim(&self) -> usize {
        self.open_channels.len()
    }

    pub fn det(&self) -> Complex64 {
        if self.dim() == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            self.matrix.determinant()
        }
    }

    /// `max |S S* - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        let e = &self.matrix * self.matrix.adjoint() - DMatrix::<Complex64>::identity(d, d);
        e.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Entry for channels `(j, j')`, if both are open.
    pub fn entry(&self, j: usize, jp: usize) -> Option<Complex64> {
        let a = self.open_channels.iter().position(|&c| c == j)?;
        let b = self.open_channels.iter().position(|&c| c == jp)?;
        Some(self.matrix[(a, b)])
    }
}

/// Scattering matrix with a custom coupling constant (default `-2i`).
pub fn s_matrix_with(model: &Model, lambda: f64, coupling: Complex64) -> Result<ScatteringSample> {
    let (lo, hi) = model.spectrum_hull();
    if lambda <= lo || lambda >= hi {
        return Err(QlevError::OutsideSpectrum(lambda));
    }
    if model.is_threshold(lambda) {
        return Err(QlevError::ThresholdEnergy(lambda));
    }
    let open = model.open_channels(lambda);
    let b = bs_matrix(model, Energy::Plus(lambda))?;
    let m = invert_checked(&b, lambda)?;
    let n = model.n() as f64;
    let d = open.len();
    // 𝔳 M 𝔳 ξ_j' for each open j'
    let cols: Vec<_> = open
        .iter()
        .map(|&j| {
            let mut v = &m * model.vxi(j);
            for (k, s) in model.v_sqrt().iter().enumerate() {
                v[k] *= *s;
            }
            v
        })
        .collect();
    let beta: Vec<f64> = open.iter().map(|&j| model.beta(j, lambda)).collect();
    let mut s = DMatrix::<Complex64>::identity(d, d);
    for a in 0..d {
        let xa = &model.channel(open[a]).xi;
        for b in 0..d {
            let amp = xa.dotc(&cols[b]) / n;
            s[(a, b)] += coupling * amp / (beta[a] * beta[b]);
        }
    }
    Ok(ScatteringSample { lambda, open_channels: open, matrix: s })
}

pub fn s_matrix(model: &Model, lambda: f64) -> Result<ScatteringSample> {
    s_matrix_with(model, lambda, -2.0 * I)
}

/// Offsets used for one-sided limits: `1e-3 * 4^{-m}`, `m = 0..6`.
pub fn epsilon_ladder() -> Vec<f64> {
    (0..7).map(|m| 1e-3 * 0.25f64.powi(m)).collect()
}

/// Richardson extrapolation in `h = √ε` for samples on the ladder (h halves each step).
///
/// Returns the estimate and an error bound from the two best diagonal entries.
pub fn richardson_sqrt(samples: &[Vec<Complex64>]) -> (Vec<Complex64>, f64) {
    let m = samples.len();
    let mut table: Vec<Vec<Vec<Complex64>>> = vec![samples.to_vec()];
    for k in 1..m {
        let prev = &table[k - 1];
        let f = 1.0 / (2f64.powi(k as i32) - 1.0);
        let col: Vec<Vec<Complex64>> = (1..prev.len())
            .map(|i| prev[i].iter().zip(&prev[i - 1]).map(|(a, b)| a + (a - b) * f).collect())
            .collect();
        table.push(col);
    }
    let diag: Vec<&Vec<Complex64>> = (0..m).map(|k| table[k].last().unwrap()).collect();
    let dist = |a: &Vec<Complex64>, b: &Vec<Complex64>| {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    };
    let mut best = (diag[m - 1].clone(), f64::INFINITY);
    for k in 2..m {
        let e = dist(diag[k], diag[k - 1]);
        if e < best.1 {
            best = (diag[k].clone(), e);
        }
    }
    best
}

/// Divergence threshold for extrapolated limits.
pub const EXTRAPOLATION_TOL: f64 = 1e-6;

/// Classification tolerance (entrywise).
pub const CLASS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdClass {
    PlusOne,
    MinusOne,
    PlusIdentity2,
    MinusIdentity2,
    Reflection { a: f64, b_re: f64, b_im: f64 },
    IntricatePlusI,
    IntricateMinusI,
    Unclassified,
}

impl ThresholdClass {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdClass::PlusOne => "PlusOne",
            ThresholdClass::MinusOne => "MinusOne",
            ThresholdClass::PlusIdentity2 => "PlusIdentity2",
            ThresholdClass::MinusIdentity2 => "MinusIdentity2",
            ThresholdClass::Reflection { .. } => "Reflection",
            ThresholdClass::IntricatePlusI => "IntricatePlusI",
            ThresholdClass::IntricateMinusI => "IntricateMinusI",
            ThresholdClass::Unclassified => "Unclassified",
        }
    }

    /// Contribution to the correction count `C`.
    pub fn correction_weight(&self) -> usize {
        match self {
            ThresholdClass::PlusOne | ThresholdClass::Reflection { .. } => 1,
            ThresholdClass::PlusIdentity2 => 2,
            _ => 0,
        }
    }

    pub fn is_intricate(&self) -> bool {
        matches!(self, ThresholdClass::IntricatePlusI | ThresholdClass::IntricateMinusI)
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdLimit {
    pub threshold: ThresholdPoint,
    pub matrix: DMatrix<Complex64>,
    pub class: ThresholdClass,
    pub error_estimate: f64,
}

/// Compression of `S` to the members of a level.
pub fn level_block(model: &Model, sample: &ScatteringSample, level_k: usize) -> DMatrix<Complex64> {
    let members = &model.level(level_k).members;
    let d = members.len();
    DMatrix::from_fn(d, d, |a, b| sample.entry(members[a], members[b]).expect("level member is open"))
}

/// Energy at distance `eps` from a threshold, on the side where its channels are open.
pub fn approach(t: &ThresholdPoint, eps: f64) -> f64 {
    match t.side {
        Side::Lower => t.energy + eps,
        Side::Upper => t.energy - eps,
    }
}

/// Ladder rescalings tried in turn when the standard ladder does not settle.
pub const LADDER_SCALES: [f64; 4] = [1.0, 1e-2, 1e-4, 1e-6];

/// Extrapolated limit of `f` along the ladder towards a threshold.
///
/// Falls back to rescaled ladders when the estimate does not settle; the best attempt is returned.
pub fn extrapolate_limit<F>(t: &ThresholdPoint, f: F) -> Result<(Vec<Complex64>, f64)>
where
    F: Fn(f64) -> Result<Vec<Complex64>>,
{
    extrapolate_towards(t.energy, approach(t, 1.0) - t.energy, f)
}

/// Same as [`extrapolate_limit`] for an arbitrary point approached along `dir = ±1`.
pub fn extrapolate_towards<F>(at: f64, dir: f64, f: F) -> Result<(Vec<Complex64>, f64)>
where
    F: Fn(f64) -> Result<Vec<Complex64>>,
{
    let mut best: Option<(Vec<Complex64>, f64)> = None;
    for scale in LADDER_SCALES {
        let samples: Vec<Vec<Complex64>> =
            epsilon_ladder().into_iter().map(|e| f(at + dir * e * scale)).collect::<Result<_>>()?;
        let r = richardson_sqrt(&samples);
        let done = r.1 < EXTRAPOLATION_TOL;
        if best.as_ref().map_or(true, |b| r.1 < b.1) {
            best = Some(r);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one ladder"))
}

pub fn threshold_limit(model: &Model, level_k: usize, side: Side) -> Result<ThresholdLimit> {
    let t = *model.threshold(level_k, side);
    let d = model.level(level_k).multiplicity();
    let (flat, err) = extrapolate_limit(&t, |lam| {
        let s = s_matrix(model, lam)?;
        Ok(level_block(model, &s, level_k).iter().copied().collect())
    })?;
    if !(err < EXTRAPOLATION_TOL) {
        return Err(QlevError::ExtrapolationDiverged { level_k, side, err });
    }
    let matrix = DMatrix::from_column_slice(d, d, &flat);
    let class = classify(&matrix, t.partner.is_some());
    Ok(ThresholdLimit { threshold: t, matrix, class, error_estimate: err })
}

pub fn all_threshold_limits(model: &Model) -> Result<Vec<ThresholdLimit>> {
    model.thresholds().iter().map(|t| threshold_limit(model, t.level_k, t.side)).collect()
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() < CLASS_TOL
}

/// Match a limit matrix against the canonical threshold forms.
pub fn classify(m: &DMatrix<Complex64>, degenerate: bool) -> ThresholdClass {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match m.nrows() {
        1 => {
            let s = m[(0, 0)];
            if close(s, one) {
                ThresholdClass::PlusOne
            } else if close(s, -one) {
                ThresholdClass::MinusOne
            } else if degenerate && close(s, I) {
                ThresholdClass::IntricatePlusI
            } else if degenerate && close(s, -I) {
                ThresholdClass::IntricateMinusI
            } else {
                ThresholdClass::Unclassified
            }
        }
        2 => {
            let (s11, s12, s21, s22) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            if close(s11, one) && close(s22, one) && close(s12, zero) && close(s21, zero) {
                return ThresholdClass::PlusIdentity2;
            }
            if close(s11, -one) && close(s22, -one) && close(s12, zero) && close(s21, zero) {
                return ThresholdClass::MinusIdentity2;
            }
            let a = s11.re;
            let refl = s11.im.abs() < CLASS_TOL
                && close(s22, -s11)
                && close(s21, s12.conj())
                && (a * a + s12.norm_sqr() - 1.0).abs() < CLASS_TOL;
            if refl {
                ThresholdClass::Reflection { a, b_re: s12.re, b_im: s12.im }
            } else {
                ThresholdClass::Unclassified
            }
        }
        _ => ThresholdClass::Unclassified,
    }
}

/// Diagnostics for the decay of off-diagonal blocks at the ends of band overlaps.
#[derive(Debug, Clone)]
pub struct ContinuityReport {
    /// `(j, j', endpoint, |S_{jj'}|)` at distance `1e-6` inside the overlap.
    pub offdiag_at_edges: Vec<(usize, usize, f64, f64)>,
    pub max_offdiag: f64,
    /// Level-block limit error estimates at each threshold.
    pub level_limits: Vec<(usize, Side, f64)>,
}

pub fn algebra_continuity_check(model: &Model) -> Result<ContinuityReport> {
    let mut offdiag = Vec::new();
    let chans = model.channels();
    for a in chans {
        for b in chans {
            if a.j >= b.j || (a.lambda - b.lambda).abs() < crate::model::LEVEL_TOL {
                continue;
            }
            let lo = a.band.0.max(b.band.0);
            let hi = a.band.1.min(b.band.1);
            if lo >= hi {
                continue;
            }
            for (edge, lam) in [(lo, lo + 1e-6), (hi, hi - 1e-6)] {
                let s = s_matrix(model, lam)?;
                let x = s.entry(a.j, b.j).expect("both open").norm();
                offdiag.push((a.j, b.j, edge, x));
            }
        }
    }
    let max_offdiag = offdiag.iter().map(|x| x.3).fold(0.0, f64::max);
    let mut level_limits = Vec::new();
    for t in model.thresholds() {
        let l = threshold_limit(model, t.level_k, t.side);
        level_limits.push((t.level_k, t.side, l.map(|l| l.error_estimate).unwrap_or(f64::INFINITY)));
    }
    Ok(ContinuityReport { offdiag_at_edges: offdiag, max_offdiag, level_limits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Theta};

    fn model(n: usize, theta: Theta, v: Vec<f64>) -> Model {
        Model::new(ModelParams::new(n, theta, v)).unwrap()
    }

    #[test]
    fn one_open_channel_formula() {
        // N=2, θ=0, v=(a,a): channels decouple; S_22 on (0,4) is (u - i a κ)/(u + i a κ)
        // with the closed channel 1 entering only through the u-block.
        let m = model(2, Theta::zero(), vec![0.7, 0.7]);
        let s = s_matrix(&m, 1.3).unwrap();
        assert_eq!(s.open_channels, vec![2]);
        assert!((s.matrix[(0, 0)].norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn unitary_on_random_models() {
        let cases = [
            (3, Theta::radians(1.0), vec![0.5, -1.0, 2.0]),
            (4, Theta::zero(), vec![0.1, -0.4, 3.0, 0.0]),
            (5, Theta::pi(), vec![1.0, 1.0, -2.0, 0.3, 0.0]),
        ];
        for (n, th, v) in cases {
            let m = model(n, th, v);
            let (lo, hi) = m.spectrum_hull();
            for i in 1..200 {
                let lam = lo + (hi - lo) * (i as f64 + 0.123) / 200.0;
                if m.is_threshold(lam) {
                    continue;
                }
                let s = s_matrix(&m, lam).unwrap();
                assert!(s.unitarity_error() < 1e-10, "{lam}: {}", s.unitarity_error());
            }
        }
    }

    #[test]
    fn generic_limits_are_minus_one() {
        let m = model(3, Theta::radians(1.0), vec![0.5, -0.7, 0.2]);
        for t in m.thresholds() {
            let l = threshold_limit(&m, t.level_k, t.side).unwrap();
            assert_eq!(l.class, ThresholdClass::MinusOne, "{t:?}: {}", l.matrix);
        }
    }

    #[test]
    fn richardson_recovers_sqrt_series() {
        let f = |e: f64| 0.3 + 2.0 * e.sqrt() - 5.0 * e + 7.0 * e.powf(1.5);
        let s: Vec<Vec<Complex64>> = epsilon_ladder().into_iter().map(|e| vec![Complex64::new(f(e), 0.0)]).collect();
        let (v, err) = richardson_sqrt(&s);
        assert!((v[0].re - 0.3).abs() < 1e-12 && err < 1e-10);
    }

    #[test]
    fn classification_forms() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let r = DMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, -0.8), c(-0.6, 0.0)]);
        assert!(matches!(classify(&r, false), ThresholdClass::Reflection { .. }));
        let mi = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(classify(&mi, false), ThresholdClass::MinusIdentity2);
        let ii = DMatrix::from_element(1, 1, c(0.0, 1.0));
        assert_eq!(classify(&ii, false), ThresholdClass::Unclassified);
        assert_eq!(classify(&ii, true), ThresholdClass::IntricatePlusI);
    }
}
