use thiserror::Error;

use crate::model::Side;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QlevError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("threshold singularity at w = {0}")]
    ThresholdSingularity(f64),
    #[error("energy {0} is a threshold")]
    ThresholdEnergy(f64),
    #[error("energy {0} lies outside the continuous spectrum")]
    OutsideSpectrum(f64),
    #[error("real energy {0} on the cut needs a boundary mode")]
    OnCut(f64),
    #[error("Birman-Schwinger matrix not invertible at {energy} (condition {cond:e})")]
    NonInvertible { energy: f64, cond: f64 },
    #[error("extrapolation did not stabilise at level {level_k} {side} (error estimate {err:e})")]
    ExtrapolationDiverged { level_k: usize, side: Side, err: f64 },
    #[error("limit extrapolation did not stabilise (error estimate {0:e})")]
    LimitDiverged(f64),
    #[error("phase jump {jump} rad between consecutive samples")]
    PhaseJumpTooLarge { jump: f64 },
    #[error("value of modulus {modulus} where a unimodular one was expected")]
    NotUnimodular { modulus: f64 },
    #[error("phase refinement exceeded {0} samples on one interval")]
    RefinementLimit(usize),
    #[error("threshold at level {level_k} {side} is unclassified")]
    UnclassifiedThreshold { level_k: usize, side: Side },
    #[error("model is not in the intricate case")]
    NotIntricate,
    #[error("intricate limit routed to the hexagon machinery")]
    IntricateClass,
    #[error("lattice oracle did not converge: counts {0:?}")]
    NoConvergence(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, QlevError>;
