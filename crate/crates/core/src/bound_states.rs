//! Point spectrum from the Birman-Schwinger matrix.
//!
//! Below the continuum `B(E)` is Hermitian and increasing in `E`, and
//! `#{eigenvalues < E} = neg(𝔲) - neg(B(E))`; above it `#{eigenvalues > E} = neg(B(E)) - neg(𝔲)`.
//! Eigenvalues are bracketed by bisection on these counts.
//!
//! Inside an inter-threshold interval an eigenvector's kernel vector `φ` of `B(λ+i0)` satisfies
//! `⟨ξ_j, 𝔳φ⟩ = 0` for every open channel. On that subspace `B(λ+i0)` reduces to a Hermitian
//! increasing family, so candidate energies are crossings of its negative count; a candidate is
//! accepted when `B(λ+i0)` is singular there.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::{lattice_oracle_split, OracleReport};
use crate::linalg::{singular_values, smallest_right_singular_vectors};
use crate::model::{Model, Side, LEVEL_TOL};
use crate::resolvent::{bs_matrix, channel_resolvent, negative_count, Energy};

pub const ROOT_TOL: f64 = 1e-11;
/// Eigenvalues this close to a threshold are flagged.
pub const AT_THRESHOLD_TOL: f64 = 1e-8;
/// Relative singular-value cut for kernel dimensions.
pub const KERNEL_TOL: f64 = 1e-8;
/// Offset from interval ends when scanning counts.
const EDGE_OFFSET: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: usize,
    pub at_threshold: bool,
}

fn neg_u(model: &Model) -> usize {
    model.u_sign().iter().filter(|&&u| u < 0.0).count()
}

fn bs_real(model: &Model, e: f64) -> Result<DMatrix<Complex64>> {
    bs_matrix(model, Energy::Plus(e))
}

/// Number of eigenvalues below `e`, for `e` under the continuum.
pub fn count_below(model: &Model, e: f64) -> Result<usize> {
    Ok(neg_u(model).saturating_sub(negative_count(&bs_real(model, e)?)))
}

/// Number of eigenvalues above `e`, for `e` over the continuum.
pub fn count_above(model: &Model, e: f64) -> Result<usize> {
    Ok(negative_count(&bs_real(model, e)?).saturating_sub(neg_u(model)))
}

/// Number of singular values of `B` below `KERNEL_TOL * ‖B‖`.
pub fn kernel_dim(b: &DMatrix<Complex64>, rel: f64) -> usize {
    let sv = singular_values(b);
    let cut = rel * sv[0];
    sv.iter().filter(|&&s| s < cut).count()
}

fn spectral_bound(model: &Model) -> f64 {
    4.0 + model.v().iter().fold(0.0f64, |a, x| a.max(x.abs())) + 1.0
}

/// k-th crossing (1-based) of a monotone counting function on `[a, b]`.
fn bisect_count<F: Fn(f64) -> Result<usize>>(a: f64, b: f64, k: usize, count: &F) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    while b - a > ROOT_TOL * (1.0 + a.abs().max(b.abs())) {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if count(mid)? >= k {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn cluster(roots: Vec<f64>, edge: f64) -> Vec<Eigenvalue> {
    let mut out: Vec<Eigenvalue> = Vec::new();
    for r in roots {
        match out.last_mut() {
            Some(e) if (r - e.lambda).abs() < 1e-9 => e.multiplicity += 1,
            _ => out.push(Eigenvalue {
                lambda: r,
                multiplicity: 1,
                at_threshold: (r - edge).abs() < AT_THRESHOLD_TOL,
            }),
        }
    }
    out
}

pub fn find_discrete(model: &Model) -> Result<Vec<Eigenvalue>> {
    let (lo, hi) = model.spectrum_hull();
    let bound = spectral_bound(model);
    let below_edge = lo - EDGE_OFFSET;
    let above_edge = hi + EDGE_OFFSET;

    let n_below = count_below(model, below_edge)?;
    let cb = |x: f64| count_below(model, x);
    let mut roots = Vec::with_capacity(n_below);
    for k in 1..=n_below {
        roots.push(bisect_count(-bound, below_edge, k, &cb)?);
    }
    let mut out = cluster(roots, lo);

    let n_above = count_above(model, above_edge)?;
    // count of eigenvalues >= x, increasing as x decreases; bisect on the mirrored variable
    let ca = |y: f64| count_above(model, -y);
    let mut roots = Vec::with_capacity(n_above);
    for k in 1..=n_above {
        roots.push(-bisect_count(-bound, -above_edge, k, &ca)?);
    }
    roots.reverse();
    out.extend(cluster(roots, hi));
    Ok(out)
}

/// Orthonormal basis of the vectors `φ` with `⟨ξ_j, 𝔳φ⟩ = 0` for the given channels.
pub fn decoupled_subspace(model: &Model, open: &[usize]) -> DMatrix<Complex64> {
    let n = model.n();
    let mut p = DMatrix::<Complex64>::zeros(n, n);
    for &j in open {
        let w = model.vxi(j);
        p += w * w.adjoint();
    }
    let scale = p.trace().re.max(1e-300);
    let eig = SymmetricEigen::new(p);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] < 1e-10 * scale).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

fn compressed_neg(model: &Model, q: &DMatrix<Complex64>, lam: f64) -> Result<usize> {
    let b = bs_real(model, lam)?;
    let c = q.adjoint() * b * q;
    let h = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(negative_count(&h))
}

/// Open-channel leakage `max_j |⟨ξ_j, 𝔳φ⟩|/√N` over a kernel basis of `B(λ+i0)`.
pub fn open_channel_leak(model: &Model, lam: f64, b: &DMatrix<Complex64>, dim: usize) -> f64 {
    let n = model.n();
    let mut leak: f64 = 0.0;
    for phi in smallest_right_singular_vectors(b, dim) {
        for j in model.open_channels(lam) {
            let x = model.vxi(j).dotc(&phi).norm() / (n as f64).sqrt();
            leak = leak.max(x);
        }
    }
    leak
}

/// Crossing candidates per interval, with the verdict of the kernel test.
#[derive(Debug, Clone)]
pub struct EmbeddedCandidate {
    pub lambda: f64,
    pub crossings: usize,
    pub kernel_dim: usize,
    pub leak: f64,
    pub accepted: bool,
}

pub fn embedded_candidates(model: &Model) -> Result<Vec<EmbeddedCandidate>> {
    let mut out = Vec::new();
    for (a, b) in model.intervals() {
        let mid = 0.5 * (a + b);
        let open = model.open_channels(mid);
        let q = decoupled_subspace(model, &open);
        if q.ncols() == 0 {
            continue;
        }
        let (ea, eb) = (a + EDGE_OFFSET * (1.0 + a.abs()), b - EDGE_OFFSET * (1.0 + b.abs()));
        let n0 = compressed_neg(model, &q, ea)?;
        let n1 = compressed_neg(model, &q, eb)?;
        if n0 <= n1 {
            continue;
        }
        // negative count decreases through the interval; k-th drop
        let drops = |x: f64| compressed_neg(model, &q, x).map(|c| n0 - c);
        let mut roots = Vec::new();
        for k in 1..=(n0 - n1) {
            roots.push(bisect_count(ea, eb, k, &drops)?);
        }
        for e in cluster(roots, f64::NAN) {
            let bm = bs_matrix(model, Energy::Plus(e.lambda))?;
            let kd = kernel_dim(&bm, 1e-7).min(e.multiplicity);
            let leak = if kd > 0 { open_channel_leak(model, e.lambda, &bm, kd) } else { f64::INFINITY };
            out.push(EmbeddedCandidate {
                lambda: e.lambda,
                crossings: e.multiplicity,
                kernel_dim: kd,
                leak,
                accepted: kd > 0 && leak < 1e-6,
            });
        }
    }
    Ok(out)
}

pub fn find_embedded(model: &Model) -> Result<Vec<Eigenvalue>> {
    let thresholds = model.threshold_energies();
    Ok(embedded_candidates(model)?
        .into_iter()
        .filter(|c| c.accepted)
        .map(|c| Eigenvalue {
            lambda: c.lambda,
            multiplicity: c.kernel_dim,
            at_threshold: thresholds.iter().any(|t| (t - c.lambda).abs() < AT_THRESHOLD_TOL),
        })
        .collect())
}

/// Sign-changing function whose zeros mark a bound state entering the continuum at a hull edge.
///
/// Near the edge `B(E) = A₀ + g(E) U U*` with `g` diverging and `U` the touching channels; the
/// resonance condition is `det [[A₀, U], [U*, 0]] = 0`.
pub fn edge_discriminant(model: &Model, side: Side) -> Result<f64> {
    let (lo, hi) = model.spectrum_hull();
    let t = match side {
        Side::Lower => lo,
        Side::Upper => hi,
    };
    let n = model.n();
    let touching: Vec<usize> =
        model.channels().iter().filter(|c| ((t - c.lambda).abs() - 2.0).abs() < LEVEL_TOL).map(|c| c.j).collect();
    let k = touching.len();
    let mut big = DMatrix::<Complex64>::zeros(n + k, n + k);
    for ch in model.channels() {
        if touching.contains(&ch.j) {
            continue;
        }
        let r = channel_resolvent(Energy::Plus(t - ch.lambda))? / n as f64;
        let w = model.vxi(ch.j);
        for p in 0..n {
            for q in 0..n {
                big[(p, q)] += w[p] * w[q].conj() * r;
            }
        }
    }
    for (i, u) in model.u_sign().iter().enumerate() {
        big[(i, i)] += Complex64::new(*u, 0.0);
    }
    let norm = (n as f64).sqrt();
    for (c, &j) in touching.iter().enumerate() {
        let w = model.vxi(j);
        for p in 0..n {
            big[(p, n + c)] = w[p] / norm;
            big[(n + c, p)] = w[p].conj() / norm;
        }
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * big.lu().determinant().re)
}

/// Scale `s` in `[lo, hi]` where `make(s)` has a resonance at the given hull edge.
///
/// Scans `grid` points for a sign change of [`edge_discriminant`] and bisects to machine precision.
pub fn tune_resonance<F>(make: F, side: Side, lo: f64, hi: f64, grid: usize) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<Model>,
{
    let f = |s: f64| -> Result<f64> { edge_discriminant(&make(s)?, side) };
    let mut a = lo;
    let mut fa = f(a)?;
    for i in 1..=grid {
        let b = lo + (hi - lo) * i as f64 / grid as f64;
        let fb = f(b)?;
        if fa.signum() != fb.signum() {
            let (mut x, mut y, fx) = (a, b, fa);
            loop {
                let mid = 0.5 * (x + y);
                if mid == x || mid == y {
                    return Ok(Some(mid));
                }
                if f(mid)?.signum() == fx.signum() {
                    x = mid;
                } else {
                    y = mid;
                }
            }
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct BoundStateReport {
    pub discrete: Vec<Eigenvalue>,
    pub embedded: Vec<Eigenvalue>,
    pub total: usize,
    pub oracle: Option<OracleReport>,
    pub oracle_total: Option<usize>,
    pub agreement: bool,
    pub at_threshold: bool,
}

/// Chain length that lets the shallowest discrete state decay before the last 20% of sites.
/// Only the size is borrowed from the Birman-Schwinger side; the count stays independent.
fn sites_for_depth(model: &Model, discrete: &[Eigenvalue]) -> usize {
    let (lo, hi) = model.spectrum_hull();
    let depth = discrete
        .iter()
        .filter(|e| !e.at_threshold)
        .map(|e| (lo - e.lambda).max(e.lambda - hi))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !depth.is_finite() {
        return 0;
    }
    let kappa = (1.0 + depth / 2.0).acosh();
    ((12.0 / kappa).ceil() as usize).min(MAX_HINT_SITES)
}

const MAX_HINT_SITES: usize = 40_000;

/// Birman-Schwinger count, optionally reconciled with the lattice oracle.
pub fn bound_states(model: &Model, oracle_sites: Option<usize>) -> Result<BoundStateReport> {
    let discrete = find_discrete(model)?;
    let embedded = find_embedded(model)?;
    let total = discrete.iter().chain(&embedded).map(|e| e.multiplicity).sum();
    let at_threshold = discrete.iter().chain(&embedded).any(|e| e.at_threshold);
    let oracle = match oracle_sites {
        Some(n) => Some(lattice_oracle_split(model, n, sites_for_depth(model, &discrete))?),
        None => None,
    };
    let oracle_total = oracle.as_ref().map(|o| o.count);
    let agreement = oracle_total.map_or(true, |c| c == total);
    Ok(BoundStateReport { discrete, embedded, total, oracle, oracle_total, agreement, at_threshold })
}
