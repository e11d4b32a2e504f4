//! Model parameters, channels, levels and thresholds.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QlevError, Result};

/// Two channel eigenvalues closer than this are one level.
pub const LEVEL_TOL: f64 = 1e-10;
/// Distance below which an energy counts as sitting on a threshold.
pub const THRESHOLD_TOL: f64 = 1e-13;

/// Magnetic flux, kept exact when it is a rational multiple of pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Theta {
    /// `num/den * pi`, reduced, with `0 <= num/den < 2`.
    PiFrac { num: i64, den: i64 },
    Radians(f64),
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Theta {
    pub fn zero() -> Self {
        Theta::PiFrac { num: 0, den: 1 }
    }

    pub fn pi() -> Self {
        Theta::PiFrac { num: 1, den: 1 }
    }

    /// `num/den * pi`, reduced modulo `2 pi`.
    pub fn pi_frac(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(QlevError::InvalidModel("theta denominator is zero".into()));
        }
        let (mut num, mut den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(num, den).max(1);
        num /= g;
        den /= g;
        num = num.rem_euclid(2 * den);
        Ok(Theta::PiFrac { num, den })
    }

    pub fn radians(x: f64) -> Self {
        Theta::Radians(x)
    }

    pub fn value(&self) -> f64 {
        match *self {
            Theta::PiFrac { num, den } => PI * num as f64 / den as f64,
            Theta::Radians(x) => x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Theta::PiFrac { num, .. } => num == 0,
            Theta::Radians(x) => x == 0.0,
        }
    }

    pub fn is_pi(&self) -> bool {
        match *self {
            Theta::PiFrac { num, den } => num == den,
            Theta::Radians(x) => x == PI,
        }
    }

    /// Angle `(theta + 2 pi j) k / N` as `cos`, `sin`, exact at multiples of `pi/2`.
    fn phase(&self, j: usize, k: usize, n: usize) -> (f64, f64) {
        match *self {
            Theta::PiFrac { num, den } => {
                // angle = pi * a / (den * n), a taken mod 2*den*n
                let period = 2 * den * n as i64;
                let a = ((num + 2 * den * j as i64) * k as i64).rem_euclid(period);
                exact_cos_sin(a, den * n as i64)
            }
            Theta::Radians(x) => {
                let ang = (x + 2.0 * PI * j as f64) * k as f64 / n as f64;
                (ang.cos(), ang.sin())
            }
        }
    }
}

/// `cos`, `sin` of `pi * a / q` for `0 <= a < 2q`.
fn exact_cos_sin(a: i64, q: i64) -> (f64, f64) {
    if a == 0 {
        return (1.0, 0.0);
    }
    if 2 * a == q {
        return (0.0, 1.0);
    }
    if a == q {
        return (-1.0, 0.0);
    }
    if 2 * a == 3 * q {
        return (0.0, -1.0);
    }
    // fold to [0, q] so that conjugate angles share the same cosine bits
    let (folded, sign_sin) = if a > q { (2 * q - a, -1.0) } else { (a, 1.0) };
    let ang = PI * folded as f64 / q as f64;
    (ang.cos(), sign_sin * ang.sin())
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Theta::PiFrac { num: 0, .. } => write!(f, "0"),
            Theta::PiFrac { num, den: 1 } if num == 1 => write!(f, "pi"),
            Theta::PiFrac { num, den: 1 } => write!(f, "{num}pi"),
            Theta::PiFrac { num: 1, den } => write!(f, "pi/{den}"),
            Theta::PiFrac { num, den } => write!(f, "{num}pi/{den}"),
            Theta::Radians(x) => write!(f, "{x}"),
        }
    }
}

/// Accepts radians (`1.3`) or rational multiples of pi (`pi`, `pi/2`, `3pi/8`, `3*pi/8`, `-pi/4`).
impl std::str::FromStr for Theta {
    type Err = QlevError;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        let bad = || QlevError::InvalidModel(format!("cannot parse theta from {s:?}"));
        let Some(pos) = t.find("pi") else {
            let x: f64 = t.parse().map_err(|_| bad())?;
            return if x == 0.0 { Ok(Theta::zero()) } else { Ok(Theta::Radians(x)) };
        };
        let head = t[..pos].trim_end_matches('*');
        let tail = &t[pos + 2..];
        let num: i64 = match head {
            "" => 1,
            "-" => -1,
            h => h.parse().map_err(|_| bad())?,
        };
        let den: i64 = match tail {
            "" => 1,
            d => d.strip_prefix('/').ok_or_else(bad)?.parse().map_err(|_| bad())?,
        };
        Theta::pi_frac(num, den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub theta: Theta,
    pub v: Vec<f64>,
}

impl ModelParams {
    pub fn new(n: usize, theta: Theta, v: Vec<f64>) -> Self {
        ModelParams { n, theta, v }
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub j: usize,
    pub lambda: f64,
    /// Components `e^{i(theta + 2 pi j)k/N}`, `k = 1..N`.
    pub xi: DVector<Complex64>,
    pub band: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Level {
    pub k: usize,
    pub lambda: f64,
    /// Channel indices `j` (1-based), ascending.
    pub members: Vec<usize>,
}

impl Level {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Lower => write!(f, "lower"),
            Side::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub level_k: usize,
    pub side: Side,
    pub energy: f64,
    /// The other `(level, side)` at the same energy, if any.
    pub partner: Option<(usize, Side)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntricateInfo {
    pub is_intricate: bool,
    pub alpha: Option<f64>,
}

/// Validated model with all derived channel data.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    channels: Vec<Channel>,
    levels: Vec<Level>,
    thresholds: Vec<ThresholdPoint>,
    u_sign: Vec<f64>,
    v_sqrt: Vec<f64>,
    /// `𝔳 ξ_j` for each channel.
    vxi: Vec<DVector<Complex64>>,
    intricate: IntricateInfo,
}

pub fn build_model(params: ModelParams) -> Result<Model> {
    Model::new(params)
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let n = params.n;
        if n < 2 {
            return Err(QlevError::InvalidModel(format!("N = {n} < 2")));
        }
        if params.v.len() != n {
            return Err(QlevError::InvalidModel(format!(
                "v has {} entries, expected {n}",
                params.v.len()
            )));
        }
        if params.v.iter().any(|x| !x.is_finite()) {
            return Err(QlevError::InvalidModel("v has non-finite entries".into()));
        }
        if params.v.iter().all(|&x| x == 0.0) {
            return Err(QlevError::InvalidModel("v is the zero vector".into()));
        }
        let th = params.theta.value();
        if !(0.0..2.0 * PI).contains(&th) || !th.is_finite() {
            return Err(QlevError::InvalidModel(format!("theta = {th} outside [0, 2pi)")));
        }

        let channels: Vec<Channel> = (1..=n)
            .map(|j| {
                let (c, _) = params.theta.phase(j, 1, n);
                let lambda = 2.0 * c;
                let xi = DVector::from_iterator(
                    n,
                    (1..=n).map(|k| {
                        let (c, s) = params.theta.phase(j, k, n);
                        Complex64::new(c, s)
                    }),
                );
                Channel { j, lambda, xi, band: (lambda - 2.0, lambda + 2.0) }
            })
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| channels[a].lambda.total_cmp(&channels[b].lambda).then(a.cmp(&b)));
        let mut levels: Vec<Level> = Vec::new();
        for idx in order {
            let ch = &channels[idx];
            match levels.last_mut() {
                Some(l) if (ch.lambda - l.lambda).abs() < LEVEL_TOL => l.members.push(ch.j),
                _ => levels.push(Level { k: levels.len() + 1, lambda: ch.lambda, members: vec![ch.j] }),
            }
        }
        for l in &mut levels {
            l.members.sort_unstable();
        }

        let mut thresholds = Vec::with_capacity(2 * levels.len());
        for side in [Side::Lower, Side::Upper] {
            for l in &levels {
                let energy = match side {
                    Side::Lower => l.lambda - 2.0,
                    Side::Upper => l.lambda + 2.0,
                };
                thresholds.push(ThresholdPoint { level_k: l.k, side, energy, partner: None });
            }
        }
        for a in 0..thresholds.len() {
            for b in 0..thresholds.len() {
                if a != b && (thresholds[a].energy - thresholds[b].energy).abs() < LEVEL_TOL {
                    thresholds[a].partner = Some((thresholds[b].level_k, thresholds[b].side));
                }
            }
        }

        let u_sign = params.v.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
        let v_sqrt: Vec<f64> = params.v.iter().map(|x| x.abs().sqrt()).collect();
        let vxi = channels
            .iter()
            .map(|c| DVector::from_iterator(n, c.xi.iter().zip(&v_sqrt).map(|(x, s)| x * *s)))
            .collect();

        let mut model = Model {
            params,
            channels,
            levels,
            thresholds,
            u_sign,
            v_sqrt,
            vxi,
            intricate: IntricateInfo { is_intricate: false, alpha: None },
        };
        model.intricate = model.compute_intricate();
        Ok(model)
    }

    fn compute_intricate(&self) -> IntricateInfo {
        let n = self.n();
        let none = IntricateInfo { is_intricate: false, alpha: None };
        if !self.params.theta.is_zero() || n % 2 != 0 {
            return none;
        }
        let a = &self.vxi[n / 2 - 1];
        let b = &self.vxi[n - 1];
        let (na, nb) = (a.norm(), b.norm());
        let ab = b.dotc(a);
        let gram = (na * na * nb * nb - ab.norm_sqr()).abs();
        if gram < 1e-12 * na * nb {
            // a = alpha b with |a| = |b|, so alpha = <b,a>/<b,b> is real and +-1
            let alpha = (ab.re / (nb * nb)).signum();
            IntricateInfo { is_intricate: true, alpha: Some(alpha) }
        } else {
            none
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn theta(&self) -> Theta {
        self.params.theta
    }

    pub fn v(&self) -> &[f64] {
        &self.params.v
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Channel by 1-based index.
    pub fn channel(&self, j: usize) -> &Channel {
        &self.channels[j - 1]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Level by 1-based index.
    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k - 1]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn thresholds(&self) -> &[ThresholdPoint] {
        &self.thresholds
    }

    pub fn threshold(&self, k: usize, side: Side) -> &ThresholdPoint {
        let m = self.levels.len();
        match side {
            Side::Lower => &self.thresholds[k - 1],
            Side::Upper => &self.thresholds[m + k - 1],
        }
    }

    pub fn u_sign(&self) -> &[f64] {
        &self.u_sign
    }

    pub fn v_sqrt(&self) -> &[f64] {
        &self.v_sqrt
    }

    /// `𝔳 ξ_j` for 1-based `j`.
    pub fn vxi(&self, j: usize) -> &DVector<Complex64> {
        &self.vxi[j - 1]
    }

    pub fn intricate(&self) -> IntricateInfo {
        self.intricate
    }

    pub fn is_intricate(&self) -> bool {
        self.intricate.is_intricate
    }

    /// `theta = 0` and `N` even: a closing and an opening threshold meet at 0.
    pub fn has_degenerate_zero(&self) -> bool {
        self.params.theta.is_zero() && self.n() % 2 == 0
    }

    /// `[min lambda_j - 2, max lambda_j + 2]`.
    pub fn spectrum_hull(&self) -> (f64, f64) {
        (self.levels[0].lambda - 2.0, self.levels[self.levels.len() - 1].lambda + 2.0)
    }

    /// Distinct threshold energies, ascending.
    pub fn threshold_energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.thresholds.iter().map(|t| t.energy).collect();
        e.sort_by(f64::total_cmp);
        e.dedup_by(|a, b| (*a - *b).abs() < LEVEL_TOL);
        e
    }

    /// Consecutive threshold pairs covering the continuous spectrum.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.threshold_energies().windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn is_threshold(&self, lambda: f64) -> bool {
        self.thresholds.iter().any(|t| (t.energy - lambda).abs() < THRESHOLD_TOL)
    }

    /// Channels with `|lambda - lambda_j| < 2`, ascending in `j`.
    pub fn open_channels(&self, lambda: f64) -> Vec<usize> {
        self.channels.iter().filter(|c| (lambda - c.lambda).abs() < 2.0).map(|c| c.j).collect()
    }

    pub fn fiber_dim(&self, lambda: f64) -> usize {
        self.open_channels(lambda).len()
    }

    /// `β_j(λ) = |(λ-λ_j)^2 - 4|^{1/4}`.
    pub fn beta(&self, j: usize, lambda: f64) -> f64 {
        let w = lambda - self.channels[j - 1].lambda;
        ((w - 2.0) * (w + 2.0)).abs().sqrt().sqrt()
    }

    /// The matrix `A^θ` in the position basis.
    pub fn cycle_matrix(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.n();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for k in 0..n - 1 {
            a[(k, k + 1)] += Complex64::new(1.0, 0.0);
            a[(k + 1, k)] += Complex64::new(1.0, 0.0);
        }
        let th = self.params.theta.value();
        a[(0, n - 1)] += Complex64::from_polar(1.0, -th);
        a[(n - 1, 0)] += Complex64::from_polar(1.0, th);
        a
    }
}

/// Closed form for the number of distinct channel eigenvalues.
pub fn expected_level_count(n: usize, theta: Theta) -> usize {
    if theta.is_zero() {
        if n % 2 == 0 {
            n / 2 + 1
        } else {
            n.div_ceil(2)
        }
    } else if theta.is_pi() {
        if n % 2 == 0 {
            n / 2
        } else {
            n.div_ceil(2)
        }
    } else {
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize, theta: Theta, v: Vec<f64>) -> Model {
        Model::new(ModelParams::new(n, theta, v)).unwrap()
    }

    #[test]
    fn theta_parsing_round_trips() {
        for (txt, want) in [("pi/2", (1, 2)), ("3pi/8", (3, 8)), ("3*pi/8", (3, 8)), ("-pi/4", (7, 4)), ("2pi", (0, 1)), ("0", (0, 1))] {
            assert_eq!(txt.parse::<Theta>().unwrap(), Theta::PiFrac { num: want.0, den: want.1 });
        }
        for th in [Theta::pi(), Theta::pi_frac(3, 8).unwrap(), Theta::radians(1.3), Theta::zero()] {
            assert_eq!(th.to_string().parse::<Theta>().unwrap(), th);
        }
        assert!("pie".parse::<Theta>().is_err());
    }

    #[test]
    fn n2_theta0_levels_and_thresholds() {
        let m = model(2, Theta::zero(), vec![1.0, 1.0]);
        let l: Vec<f64> = m.levels().iter().map(|l| l.lambda).collect();
        assert_eq!(l, vec![-2.0, 2.0]);
        let mut e: Vec<f64> = m.thresholds().iter().map(|t| t.energy).collect();
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![-4.0, 0.0, 0.0, 4.0]);
        assert!(m.threshold(1, Side::Upper).partner == Some((2, Side::Lower)));
        assert_eq!(m.intervals(), vec![(-4.0, 0.0), (0.0, 4.0)]);
    }

    #[test]
    fn n4_pi_has_two_levels() {
        let m = model(4, Theta::pi(), vec![0.3, -1.0, 0.0, 2.0]);
        assert_eq!(m.num_levels(), 2);
        assert!((m.level(1).lambda + 2f64.sqrt()).abs() < 1e-14);
        assert!((m.level(2).lambda - 2f64.sqrt()).abs() < 1e-14);
        assert!(m.levels().iter().all(|l| l.multiplicity() == 2));
    }

    #[test]
    fn n3_zero_levels() {
        let m = model(3, Theta::zero(), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.num_levels(), 2);
        assert!((m.level(1).lambda + 1.0).abs() < 1e-14);
        assert_eq!(m.level(1).members, vec![1, 2]);
        assert_eq!(m.level(2).lambda, 2.0);
        assert_eq!(m.level(2).members, vec![3]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Model::new(ModelParams::new(1, Theta::zero(), vec![1.0])).is_err());
        assert!(Model::new(ModelParams::new(2, Theta::zero(), vec![0.0, 0.0])).is_err());
        assert!(Model::new(ModelParams::new(2, Theta::radians(7.0), vec![1.0, 0.0])).is_err());
        assert!(Model::new(ModelParams::new(2, Theta::radians(-0.1), vec![1.0, 0.0])).is_err());
        assert!(Model::new(ModelParams::new(3, Theta::zero(), vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn intricate_detection() {
        let m = model(2, Theta::zero(), vec![1.0, 0.0]);
        assert_eq!(m.intricate(), IntricateInfo { is_intricate: true, alpha: Some(-1.0) });
        let m = model(2, Theta::zero(), vec![0.0, 3.0]);
        assert_eq!(m.intricate().alpha, Some(1.0));
        assert!(!model(2, Theta::zero(), vec![1.0, 1.0]).is_intricate());
        assert!(!model(2, Theta::pi_frac(1, 2).unwrap(), vec![1.0, 0.0]).is_intricate());
        // support on even sites only, N = 6
        let m = model(6, Theta::zero(), vec![0.0, 1.5, 0.0, -0.2, 0.0, 0.7]);
        assert_eq!(m.intricate().alpha, Some(1.0));
        let m = model(4, Theta::zero(), vec![2.0, 0.0, -1.0, 0.0]);
        assert_eq!(m.intricate().alpha, Some(-1.0));
    }

    #[test]
    fn pi_frac_reduction() {
        assert_eq!(Theta::pi_frac(4, 2).unwrap(), Theta::zero());
        assert_eq!(Theta::pi_frac(3, 1).unwrap(), Theta::pi());
        assert_eq!(Theta::pi_frac(-1, 2).unwrap(), Theta::PiFrac { num: 3, den: 2 });
        assert!(Theta::pi_frac(1, 0).is_err());
    }

    #[test]
    fn conjugate_pairs_are_bit_equal() {
        for n in 2..=9 {
            for th in [Theta::zero(), Theta::pi()] {
                let m = model(n, th, vec![1.0; n]);
                assert_eq!(m.num_levels(), expected_level_count(n, th));
            }
        }
    }
}
