//! Doubly degenerate threshold at 0 (θ=0, N even): the `𝔮`-limits and the six-edge symbol
//! `Γ = (Γ¹, …, Γ⁶)` linking the energies −4, 0 and 4.
//!
//! Each `Γʲ` is 4×4 in the block layout `[[Γ_{N/2,N/2}, Γ_{N/2,N}], [Γ_{N,N/2}, Γ_{N,N}]]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QlevError, Result};
use crate::model::{Model, Side};
use crate::resolvent::{invert_checked, bs_matrix, Energy};
use crate::scattering::{extrapolate_limit, s_matrix, threshold_limit, EXTRAPOLATION_TOL};
use crate::special::{eta_minus, eta_plus, phi, psi};
use crate::winding::{adaptive_trace, unwrap_phase, winding_of};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Cut-off for the half-line parameters `ℓ, ξ` and for `|s|`.
pub const PARAM_MAX: f64 = 40.0;
/// Pointwise tolerance for matching the determinant tables.
pub const PATTERN_TOL: f64 = 1e-4;
/// Vertex continuity tolerance.
pub const VERTEX_TOL: f64 = 1e-6;

/// The matrix `(a b −c c; b a −c c; −d −d e f; d d f e)`.
pub fn structured_matrix(a: Complex64, b: Complex64, c: Complex64, d: Complex64, e: Complex64, f: Complex64) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[a, b, -c, c, b, a, -c, c, -d, -d, e, f, d, d, f, e],
    )
}

/// Closed-form determinant of [`structured_matrix`].
pub fn det4_structured(a: Complex64, b: Complex64, c: Complex64, d: Complex64, e: Complex64, f: Complex64) -> Complex64 {
    (b - a) * (f + e) * (4.0 * c * d + (b + a) * (f - e))
}

/// `(𝔮_{N/2,N}(0_+), 𝔮_{N,N/2}(0_-))`.
pub fn q_limits(model: &Model) -> Result<(Complex64, Complex64)> {
    if !model.is_intricate() {
        return Err(QlevError::NotIntricate);
    }
    let n = model.n();
    let (jh, jn) = (n / 2, n);
    let m = model.num_levels();
    let coef = |lam: f64, left: usize, right: usize| -> Result<Vec<Complex64>> {
        let b = bs_matrix(model, Energy::Plus(lam))?;
        let mm = invert_checked(&b, lam)?;
        let mut w = &mm * model.vxi(right);
        for (k, s) in model.v_sqrt().iter().enumerate() {
            w[k] *= *s;
        }
        let amp = model.channel(left).xi.dotc(&w) / n as f64;
        Ok(vec![amp / model.beta(left, lam).powi(2)])
    };
    let up = *model.threshold(m, Side::Lower);
    let (q1, e1) = extrapolate_limit(&up, |lam| coef(lam, jh, jn))?;
    if !(e1 < EXTRAPOLATION_TOL) {
        return Err(QlevError::LimitDiverged(e1));
    }
    let down = *model.threshold(1, Side::Upper);
    let (q2, e2) = extrapolate_limit(&down, |lam| coef(lam, jn, jh))?;
    if !(e2 < EXTRAPOLATION_TOL) {
        return Err(QlevError::LimitDiverged(e2));
    }
    Ok((q1[0], q2[0]))
}

/// Boundary values of the two distinguished diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    /// `𝔰_{N/2,N/2}(−4)`
    pub half_minus4: Complex64,
    /// `𝔰_{N/2,N/2}(0_-)`
    pub half_zero: Complex64,
    /// `𝔰_{N,N}(0_+)`
    pub full_zero: Complex64,
    /// `𝔰_{N,N}(4)`
    pub full_plus4: Complex64,
}

impl BoundaryValues {
    pub fn s_half(&self) -> (Complex64, Complex64) {
        ((self.half_zero + self.half_minus4) / 2.0, (self.half_zero - self.half_minus4) / 2.0)
    }

    pub fn s_full(&self) -> (Complex64, Complex64) {
        ((self.full_plus4 + self.full_zero) / 2.0, (self.full_plus4 - self.full_zero) / 2.0)
    }
}

/// Γ symbol of a θ=0, N even model; `alpha = 0` outside the intricate case.
pub struct HexagonSymbol<'a> {
    model: &'a Model,
    pub alpha: f64,
    pub boundary: BoundaryValues,
    /// `𝔰_{N/2,N/2}(−2)`, `𝔰_{N,N}(2)`
    pub mid: (Complex64, Complex64),
}

/// Evaluates `f`, stepping off singular points and off thresholds interior to `[−4, 4]`.
fn nudged<T>(lam: f64, f: impl Fn(f64) -> Result<T>) -> Result<T> {
    let mut last = f(lam);
    for k in 1..6 {
        match last {
            Err(QlevError::NonInvertible { .. }) | Err(QlevError::ThresholdEnergy(_)) => {
                let h = 1e-9 * 4f64.powi(k);
                last = f(lam + if k % 2 == 0 { h } else { -h });
            }
            _ => break,
        }
    }
    last
}

impl<'a> HexagonSymbol<'a> {
    pub fn new(model: &'a Model) -> Result<Self> {
        if !model.has_degenerate_zero() {
            return Err(QlevError::NotIntricate);
        }
        let m = model.num_levels();
        let lim = |k: usize, side: Side| -> Result<Complex64> { Ok(threshold_limit(model, k, side)?.matrix[(0, 0)]) };
        let boundary = BoundaryValues {
            half_minus4: lim(1, Side::Lower)?,
            half_zero: lim(1, Side::Upper)?,
            full_zero: lim(m, Side::Lower)?,
            full_plus4: lim(m, Side::Upper)?,
        };
        let alpha = model.intricate().alpha.unwrap_or(0.0);
        let mut sym = HexagonSymbol { model, alpha, boundary, mid: (ONE, ONE) };
        sym.mid = (sym.s_half(-2.0)?, sym.s_full(2.0)?);
        Ok(sym)
    }

    /// Same symbol with prescribed boundary values and no interior data.
    pub fn with_boundary(model: &'a Model, alpha: f64, boundary: BoundaryValues, mid: (Complex64, Complex64)) -> Self {
        HexagonSymbol { model, alpha, boundary, mid }
    }

    /// `𝔰_{N/2,N/2}(λ)`, `λ ∈ [−4, 0]`, with boundary values at the ends.
    pub fn s_half(&self, lam: f64) -> Result<Complex64> {
        if lam <= -4.0 + 1e-10 {
            return Ok(self.boundary.half_minus4);
        }
        if lam >= -1e-10 {
            return Ok(self.boundary.half_zero);
        }
        let j = self.model.n() / 2;
        nudged(lam, |x| Ok(s_matrix(self.model, x)?.entry(j, j).expect("channel N/2 open on (-4,0)")))
    }

    /// `𝔰_{N,N}(λ)`, `λ ∈ [0, 4]`.
    pub fn s_full(&self, lam: f64) -> Result<Complex64> {
        if lam <= 1e-10 {
            return Ok(self.boundary.full_zero);
        }
        if lam >= 4.0 - 1e-10 {
            return Ok(self.boundary.full_plus4);
        }
        let j = self.model.n();
        nudged(lam, |x| Ok(s_matrix(self.model, x)?.entry(j, j).expect("channel N open on (0,4)")))
    }

    /// `(a, b, c, d, e, f)` of the vertical edges with `η` standing for `η_+`, `−η_-` or `i`.
    fn vertical_entries(&self, eta: Complex64, psi_arg: f64) -> [Complex64; 6] {
        let (hp, hm) = self.boundary.s_half();
        let (fp, fm) = self.boundary.s_full();
        let a = 0.5 * (1.0 + hp - eta * hm);
        let b = 0.5 * (eta + hm - eta * hp);
        let e = 0.5 * (1.0 + fp - eta * fm);
        let f = 0.5 * (eta + fm - eta * fp);
        let pre = self.alpha / (2.0 * (2.0 * PI).sqrt());
        let ps = psi(psi_arg).conj();
        let c = pre * Complex64::new(1.0, 1.0) * ps;
        let d = pre * Complex64::new(1.0, -1.0) * ps;
        [a, b, c, d, e, f]
    }

    fn vertical(&self, eta: Complex64, psi_arg: f64) -> DMatrix<Complex64> {
        let [a, b, c, d, e, f] = self.vertical_entries(eta, psi_arg);
        structured_matrix(a, b, c, d, e, f)
    }

    fn block_diag(x: [[Complex64; 2]; 2], y: [[Complex64; 2]; 2]) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(4, 4);
        for p in 0..2 {
            for q in 0..2 {
                m[(p, q)] = x[p][q];
                m[(p + 2, q + 2)] = y[p][q];
            }
        }
        m
    }

    /// `½(1 ∓1; ∓1 1) + ½ s (1 ±1; ±1 1)`; `sign = +1` gives the Γ¹ form.
    fn lr_block(s: Complex64, sign: f64) -> [[Complex64; 2]; 2] {
        let diag = 0.5 * (1.0 + s);
        let off = 0.5 * (-sign + sign * s);
        [[diag, off], [off, diag]]
    }

    fn phi_block(s0: Complex64, p: Complex64) -> [[Complex64; 2]; 2] {
        [[0.5 * (1.0 + s0), 0.5 * p * (s0 - 1.0)], [0.5 * p.conj() * (s0 - 1.0), 0.5 * (1.0 + s0)]]
    }

    /// `Γ^edge` at its own parameter (`ℓ`, `ξ` or `s`).
    pub fn gamma(&self, edge: usize, t: f64) -> Result<DMatrix<Complex64>> {
        Ok(match edge {
            1 => {
                let x = 2.0 * t.tanh();
                Self::block_diag(Self::lr_block(self.s_half(-2.0 + x)?, 1.0), Self::lr_block(self.s_full(2.0 + x)?, 1.0))
            }
            2 => self.vertical(-eta_minus(t), t),
            3 => self.vertical(I, 0.0),
            4 => self.vertical(eta_plus(t), -t),
            5 => {
                let x = 2.0 * (-t).tanh();
                Self::block_diag(Self::lr_block(self.s_half(-2.0 + x)?, -1.0), Self::lr_block(self.s_full(2.0 + x)?, -1.0))
            }
            6 => {
                let p = phi(t);
                Self::block_diag(Self::phi_block(self.mid.0, p), Self::phi_block(self.mid.1, p))
            }
            _ => panic!("hexagon edge {edge} out of range"),
        })
    }

    /// `det Γ^edge(t)`, closed form on the structured edges.
    pub fn det(&self, edge: usize, t: f64) -> Result<Complex64> {
        Ok(match edge {
            1 => self.s_half(-2.0 + 2.0 * t.tanh())? * self.s_full(2.0 + 2.0 * t.tanh())?,
            5 => self.s_half(-2.0 - 2.0 * t.tanh())? * self.s_full(2.0 - 2.0 * t.tanh())?,
            6 => self.mid.0 * self.mid.1,
            2 | 3 | 4 => {
                let (eta, arg) = match edge {
                    2 => (-eta_minus(t), t),
                    3 => (I, 0.0),
                    _ => (eta_plus(t), -t),
                };
                let [a, b, c, d, e, f] = self.vertical_entries(eta, arg);
                det4_structured(a, b, c, d, e, f)
            }
            _ => panic!("hexagon edge {edge} out of range"),
        })
    }
}

/// Own parameter of an edge at traversal fraction `τ ∈ [0, 1]`.
pub fn edge_parameter(edge: usize, tau: f64) -> f64 {
    match edge {
        1 | 4 => PARAM_MAX * tau,
        2 | 5 => PARAM_MAX * (1.0 - tau),
        3 => -PARAM_MAX + 2.0 * PARAM_MAX * tau,
        6 => PARAM_MAX - 2.0 * PARAM_MAX * tau,
        _ => panic!("hexagon edge {edge} out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HexagonCase {
    /// α = 0, all four boundary values −1.
    Generic,
    /// α = 0, `𝔰_{N/2,N/2}(−4) = 1`.
    LeftResonant,
    /// α = 0, `𝔰_{N,N}(4) = 1`.
    RightResonant,
    /// Intricate, with `(𝔰_{N/2,N/2}(−4), 𝔰_{N,N}(4))`.
    Intricate { minus4: i8, plus4: i8 },
    Unclassified,
}

impl HexagonCase {
    pub fn label(&self) -> String {
        match self {
            HexagonCase::Generic => "generic".into(),
            HexagonCase::LeftResonant => "left-resonant".into(),
            HexagonCase::RightResonant => "right-resonant".into(),
            HexagonCase::Intricate { minus4, plus4 } => format!("intricate({minus4:+},{plus4:+})"),
            HexagonCase::Unclassified => "unclassified".into(),
        }
    }

    /// Expected `det Γ²(ξ)` and `det Γ⁴(ξ)`.
    pub fn expected(&self, xi: f64) -> Option<(Complex64, Complex64)> {
        let (em, ep) = (eta_minus(xi), eta_plus(xi));
        Some(match self {
            HexagonCase::Generic => (em.powi(4), ep.powi(4)),
            HexagonCase::LeftResonant => (em.powi(3), -ep.powi(3)),
            HexagonCase::RightResonant => (-em.powi(3), ep.powi(3)),
            HexagonCase::Intricate { minus4, plus4 } => match (minus4, plus4) {
                (1, 1) => (-I * em, I * ep),
                (1, -1) => (I * em.powi(2), I * ep.powi(2)),
                (-1, 1) => (-I * em.powi(2), -I * ep.powi(2)),
                _ => (I * em.powi(3), -I * ep.powi(3)),
            },
            HexagonCase::Unclassified => return None,
        })
    }

    /// Closed-form clockwise winding of `Γ² + Γ³ + Γ⁴`.
    pub fn vertical_winding(&self) -> Option<f64> {
        Some(match self {
            HexagonCase::Generic => 2.0,
            HexagonCase::LeftResonant | HexagonCase::RightResonant => 1.5,
            HexagonCase::Intricate { minus4, plus4 } => {
                1.5 - 0.5 * [minus4, plus4].iter().filter(|&&&x| x == 1).count() as f64
            }
            HexagonCase::Unclassified => return None,
        })
    }
}

fn sign_of(z: Complex64) -> Option<i8> {
    if (z - ONE).norm() < PATTERN_TOL {
        Some(1)
    } else if (z + ONE).norm() < PATTERN_TOL {
        Some(-1)
    } else {
        None
    }
}

pub fn classify_case(alpha: f64, bv: &BoundaryValues) -> HexagonCase {
    let (m4, z_half, z_full, p4) = (sign_of(bv.half_minus4), bv.half_zero, bv.full_zero, sign_of(bv.full_plus4));
    if alpha != 0.0 {
        let zero_ok = (z_half + I).norm() < PATTERN_TOL && (z_full - I).norm() < PATTERN_TOL;
        return match (m4, p4, zero_ok) {
            (Some(a), Some(b), true) => HexagonCase::Intricate { minus4: a, plus4: b },
            _ => HexagonCase::Unclassified,
        };
    }
    if sign_of(z_half) != Some(-1) || sign_of(z_full) != Some(-1) {
        return HexagonCase::Unclassified;
    }
    match (m4, p4) {
        (Some(-1), Some(-1)) => HexagonCase::Generic,
        (Some(1), Some(-1)) => HexagonCase::LeftResonant,
        (Some(-1), Some(1)) => HexagonCase::RightResonant,
        _ => HexagonCase::Unclassified,
    }
}

#[derive(Debug, Clone)]
pub struct EdgeTrace {
    pub edge: usize,
    /// `(own parameter, traversal fraction, det Γ)`
    pub samples: Vec<(f64, f64, Complex64)>,
    pub winding: f64,
    pub max_modulus_defect: f64,
}

#[derive(Debug, Clone)]
pub struct HexagonReport {
    pub alpha: f64,
    pub boundary: BoundaryValues,
    pub case: HexagonCase,
    pub edges: Vec<EdgeTrace>,
    /// Clockwise winding of `Γ² + Γ³ + Γ⁴`.
    pub vertical_winding: f64,
    pub total_winding: f64,
    /// Max `|det Γ| − 1` over all samples.
    pub unimodular_defect: f64,
    pub vertex_gap: f64,
    /// Max deviation of `det Γ²`, `det Γ³`, `det Γ⁴` from the table of `case`.
    pub pattern_error: f64,
}

impl HexagonReport {
    /// Rows `(edge, param, t, det)` with `t = edge − 1 + τ`.
    pub fn csv_rows(&self) -> Vec<(usize, f64, f64, Complex64, f64)> {
        let mut rows = Vec::new();
        let mut offset = 0.0;
        let mut prev: Option<f64> = None;
        for e in &self.edges {
            let dets: Vec<Complex64> = e.samples.iter().map(|s| s.2).collect();
            let phases = unwrap_phase(&dets);
            // continue the unwrapped phase across vertices
            if let (Some(p), Some(first)) = (prev, phases.first()) {
                let jump = first - p;
                offset -= (jump / (2.0 * PI)).round() * 2.0 * PI;
            }
            for (s, ph) in e.samples.iter().zip(&phases) {
                rows.push((e.edge, s.0, (e.edge - 1) as f64 + s.1, s.2, ph + offset));
            }
            prev = phases.last().map(|p| p + offset);
        }
        rows
    }
}

const EDGE_SAMPLES: usize = 2001;

fn trace_edge(sym: &HexagonSymbol<'_>, edge: usize) -> Result<EdgeTrace> {
    let init: Vec<f64> = (0..EDGE_SAMPLES).map(|i| i as f64 / (EDGE_SAMPLES - 1) as f64).collect();
    let pts = adaptive_trace(&init, |tau| sym.det(edge, edge_parameter(edge, tau)), |a, b| {
        let (a, b): (&Complex64, &Complex64) = (a, b);
        a.norm() > 0.0 && b.norm() > 0.0 && (b / a).arg().abs() >= 0.1
    }, 1_000_000)?;
    let dets: Vec<Complex64> = pts.iter().map(|p| p.1).collect();
    let winding = winding_of(&dets)?;
    let max_modulus_defect = dets.iter().map(|d| (d.norm() - 1.0).abs()).fold(0.0, f64::max);
    let samples = pts.into_iter().map(|(tau, d)| (edge_parameter(edge, tau), tau, d)).collect();
    Ok(EdgeTrace { edge, samples, winding, max_modulus_defect })
}

pub fn hexagon_winding(sym: &HexagonSymbol<'_>) -> Result<HexagonReport> {
    let edges: Vec<EdgeTrace> = (1..=6).map(|e| trace_edge(sym, e)).collect::<Result<_>>()?;
    let vertical_winding = edges[1].winding + edges[2].winding + edges[3].winding;
    let total_winding = edges.iter().map(|e| e.winding).sum();
    let unimodular_defect = edges.iter().map(|e| e.max_modulus_defect).fold(0.0, f64::max);

    let mut vertex_gap: f64 = 0.0;
    for e in 1..=6 {
        let next = e % 6 + 1;
        let end = sym.gamma(e, edge_parameter(e, 1.0))?;
        let start = sym.gamma(next, edge_parameter(next, 0.0))?;
        vertex_gap = vertex_gap.max((end - start).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    let case = classify_case(sym.alpha, &sym.boundary);
    let pattern_error = match case.expected(0.0) {
        None => f64::INFINITY,
        Some((_, g4_at_0)) => {
            let mut err = (sym.det(3, 0.0)? - g4_at_0).norm();
            for e in &edges[1..4] {
                for &(p, _, d) in &e.samples {
                    let (g2, g4) = case.expected(p).expect("classified");
                    let want = match e.edge {
                        2 => g2,
                        3 => g4_at_0,
                        _ => g4,
                    };
                    err = err.max((d - want).norm());
                }
            }
            err
        }
    };

    Ok(HexagonReport {
        alpha: sym.alpha,
        boundary: sym.boundary,
        case,
        edges,
        vertical_winding,
        total_winding,
        unimodular_defect,
        vertex_gap,
        pattern_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn structured_det_special_cases() {
        let (a, b, e, f) = (c(0.3, 1.0), c(-2.0, 0.5), c(1.5, -0.7), c(0.2, 0.9));
        let z = c(0.0, 0.0);
        let got = det4_structured(a, b, z, z, e, f);
        assert!((got - (a * a - b * b) * (e * e - f * f)).norm() < 1e-12);
        assert_eq!(det4_structured(a, a, c(1.0, 2.0), c(3.0, 0.0), e, f), z);
    }

    #[test]
    fn table_cases_are_unimodular() {
        let cases = [
            HexagonCase::Generic,
            HexagonCase::LeftResonant,
            HexagonCase::RightResonant,
            HexagonCase::Intricate { minus4: 1, plus4: 1 },
            HexagonCase::Intricate { minus4: -1, plus4: -1 },
        ];
        for case in cases {
            for xi in [0.0, 0.3, 2.0] {
                let (g2, g4) = case.expected(xi).unwrap();
                assert!((g2.norm() - 1.0).abs() < 1e-14 && (g4.norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
