//! Constructive coefficient oracle and the probabilistic estimates around it.
//!
//! Frequencies `k_i` turn into Vandermonde nodes `x_i = -k_i^2`; solving the
//! two Vandermonde systems built from the even and odd Maclaurin coefficients
//! of `u` gives cosine and sine coefficients whose expansion matches `u`
//! through order `2N - 1` at the origin.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{arg_err, Result};
use crate::problem::ManufacturedSolution;
use crate::quadrature::GaussLegendre;
use crate::rng::{derive_seed, Stream};
use crate::spectra::McReport;

/// Error-free `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Coefficients `sigma_0..=sigma_n` of `prod_i (t + x_i)` (so `sigma_m` is the
/// `m`-th elementary symmetric function), accumulated in double-double.
fn expand(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut hi = vec![1.0];
    let mut lo = vec![0.0];
    for x in xs {
        hi.push(0.0);
        lo.push(0.0);
        for m in (1..hi.len()).rev() {
            let p = x * hi[m - 1];
            let pe = x.mul_add(hi[m - 1], -p) + x * lo[m - 1];
            let (s, e) = two_sum(hi[m], p);
            let tail = e + pe + lo[m];
            let (s2, e2) = two_sum(s, tail);
            hi[m] = s2;
            lo[m] = e2;
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTable {
    /// `sigma_0..=sigma_n` of all nodes.
    pub full: Vec<f64>,
    /// `leave_one_out[i][m]` is `sigma_m` of the nodes without `x_i`.
    pub leave_one_out: Vec<Vec<f64>>,
}

pub fn elementary_symmetric(xs: &[f64]) -> SymmetricTable {
    let full = expand(xs.iter().copied());
    let leave_one_out = (0..xs.len())
        .map(|i| expand(xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x)))
        .collect();
    SymmetricTable { full, leave_one_out }
}

/// Inverse of `V` with `V[j][i] = x_i^j`, from
/// `(V^-1)_{ij} = (-1)^j sigma^i_{n-1-j} / prod_{l != i} (x_l - x_i)` (0-based).
pub fn vandermonde_inverse(xs: &[f64]) -> Result<DMatrix<f64>> {
    let n = xs.len();
    for i in 0..n {
        for j in 0..i {
            if xs[i] == xs[j] {
                return arg_err(format!("repeated node {}", xs[i]));
            }
        }
    }
    let table = elementary_symmetric(xs);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let denom: f64 = (0..n).filter(|&l| l != i).map(|l| xs[l] - xs[i]).product();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * table.leave_one_out[i][n - 1 - j] / denom
    }))
}

/// Cosine and sine coefficients matching the Maclaurin expansion of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCoefficients {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

pub fn taylor_coefficients(k: &[f64], u: &ManufacturedSolution) -> Result<TaylorCoefficients> {
    let n = k.len();
    if n == 0 {
        return arg_err("no frequencies");
    }
    if k.iter().any(|v| !(*v > 0.0)) {
        return arg_err("frequencies must be positive");
    }
    let d = u.maclaurin_derivatives(2 * n - 1)?;
    let nodes: Vec<f64> = k.iter().map(|v| -v * v).collect();
    let vinv = vandermonde_inverse(&nodes)?;
    let even = DVector::from_fn(n, |i, _| d[2 * i]);
    let odd = DVector::from_fn(n, |i, _| d[2 * i + 1]);
    let x = &vinv * even;
    let y = &vinv * odd;
    Ok(TaylorCoefficients {
        cos: x.iter().copied().collect(),
        sin: y.iter().zip(k).map(|(v, ki)| v / ki).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// `prod_{j != i} (C_u^2 + k_j^2) / |k_i^2 - k_j^2|`.
pub fn separation_product(i: usize, k: &[f64], c_u: f64) -> f64 {
    let ki2 = k[i] * k[i];
    k.iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, kj)| (c_u * c_u + kj * kj) / (ki2 - kj * kj).abs())
        .product()
}

/// Bound for `|X_i|` (even) or `|Y_i|` (odd) given the envelope `(M_u, C_u, s)`.
pub fn taylor_coefficient_bound(i: usize, k: &[f64], m_u: f64, c_u: f64, s: f64, parity: Parity) -> Result<f64> {
    if i >= k.len() {
        return arg_err(format!("index {i} outside 0..{}", k.len()));
    }
    let n = k.len() as f64;
    let prod = separation_product(i, k, c_u);
    Ok(match parity {
        Parity::Even => m_u * (s * ln_gamma(2.0 * n - 1.0)).exp() * prod,
        Parity::Odd => m_u * c_u * (s * ln_gamma(2.0 * n)).exp() / k[i] * prod,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEvent {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs < rhs`.
    pub holds: bool,
}

/// The good event for coefficient `i`: the separation product stays below
/// `[2 e^c max(w^2 / k, (w^2 + 1) / (k + 1))]^(N - 1)` in units of `S`,
/// `w = C_u / S`.
pub fn coefficient_event(k: &[f64], i: usize, c_u: f64, band: f64, c: f64) -> Result<CoefficientEvent> {
    if i >= k.len() {
        return arg_err(format!("index {i} outside 0..{}", k.len()));
    }
    let n = k.len();
    let w2 = (c_u / band).powi(2);
    let kh = k[i] / band;
    let base = 2.0 * c.exp() * (w2 / kh).max((w2 + 1.0) / (kh + 1.0));
    let ln_rhs = (n - 1) as f64 * base.ln();
    let ki2 = k[i] * k[i];
    let ln_lhs: f64 = k
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, kj)| ((c_u * c_u + kj * kj) / (ki2 - kj * kj).abs()).ln())
        .sum();
    Ok(CoefficientEvent {
        lhs: ln_lhs.exp(),
        rhs: ln_rhs.exp(),
        holds: ln_lhs < ln_rhs,
    })
}

/// `e^{-(c - 1 - ln c)(N - 1)}`.
pub fn event_tail_bound(n: usize, c: f64) -> f64 {
    (-(c - 1.0 - c.ln()) * (n as f64 - 1.0)).exp()
}

/// Frequency of the complement of the good event for the first coefficient.
pub fn event_mc(n: usize, c: f64, c_u: f64, band: f64, trials: usize, seed: u64) -> Result<McReport> {
    if n == 0 || trials == 0 {
        return arg_err("need at least one frequency and one trial");
    }
    let fails = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = Stream::new(derive_seed(seed, t as u64));
            let k: Vec<f64> = (0..n).map(|_| s.open_uniform(band)).collect();
            coefficient_event(&k, 0, c_u, band, c).map(|e| !e.holds)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|f| *f)
        .count();
    Ok(McReport::new(fails, trials, event_tail_bound(n, c)))
}

/// `k^{4N} max(w^2 / k, (w^2 + 1) / (k + 1))^{2N - 2}` with `k`, `w` in units
/// of `S`, times `S^{4N}`.
pub fn moment_integrand(kh: f64, n: usize, w: f64, band: f64) -> f64 {
    let w2 = w * w;
    let m = (w2 / kh).max((w2 + 1.0) / (kh + 1.0));
    let ln = 4.0 * n as f64 * (band.ln() + kh.ln()) + (2 * n - 2) as f64 * m.ln();
    ln.exp()
}

/// `S^4 max(C_u, S)^{4N-4} / (2N + 3)`.
pub fn moment_bound(n: usize, band: f64, c_u: f64) -> f64 {
    band.powi(4) * c_u.max(band).powi(4 * n as i32 - 4) / (2 * n + 3) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub trials: usize,
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
}

impl MomentReport {
    /// Sample mean within three standard errors of the bound.
    pub fn holds(&self) -> bool {
        self.mean - 3.0 * self.std_err <= self.bound
    }
}

/// Monte-Carlo estimate of the weighted moment of one uniform frequency.
pub fn moment_check(n: usize, band: f64, c_u: f64, trials: usize, seed: u64) -> Result<MomentReport> {
    if n == 0 || trials < 2 {
        return arg_err("need at least one frequency and two trials");
    }
    let w = c_u / band;
    let vals: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = Stream::new(derive_seed(seed, t as u64));
            moment_integrand(s.open_uniform(1.0), n, w, band)
        })
        .collect();
    let m = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(MomentReport {
        trials,
        mean: m,
        std_err: (var / trials as f64).sqrt(),
        bound: moment_bound(n, band, c_u),
    })
}

/// `J(alpha) = int_0^1 exp(-lambda k^4 - lambda alpha^2 + 2 lambda delta alpha k^2) dk`
/// by an `nodes`-point Gauss-Legendre rule on each of 8 panels.
pub fn quartic_integral(alpha: f64, lambda: f64, delta: f64, nodes: usize) -> f64 {
    let rule = GaussLegendre::new(nodes);
    crate::quadrature::composite(&rule, &[0.0, 1.0], 8, |k| {
        let k2 = k * k;
        (-lambda * k2 * k2 - lambda * alpha * alpha + 2.0 * lambda * delta * alpha * k2).exp()
    })
}

/// Maximum of `J` over `alpha` in `[0, delta]` on a grid of spacing `step`;
/// returns `(argmax, max)`.
pub fn quartic_integral_max(lambda: f64, delta: f64, step: f64) -> (f64, f64) {
    let steps = (delta / step).round() as usize;
    (0..=steps)
        .map(|i| {
            let a = (i as f64 * step).min(delta);
            (a, quartic_integral(a, lambda, delta, 32))
        })
        .fold((0.0, f64::NEG_INFINITY), |b, v| if v.1 > b.1 { v } else { b })
}

/// `Gamma(5/4) [2 erf(pi Gamma(5/4)^-2 / 16) + 1]`.
pub fn quartic_integral_constant() -> f64 {
    let g = gamma(1.25);
    g * (2.0 * erf(std::f64::consts::PI / (16.0 * g * g)) + 1.0)
}

/// `c lambda^{-1/4} e^{2 lambda (delta^2 - 1)}`, an upper bound for `max J`.
pub fn quartic_integral_bound(lambda: f64, delta: f64) -> Result<f64> {
    if !(delta > 1.0) {
        return arg_err(format!("delta must exceed 1, got {delta}"));
    }
    if !(lambda > 0.0) {
        return arg_err(format!("lambda must be positive, got {lambda}"));
    }
    Ok(quartic_integral_constant() * lambda.powf(-0.25) * (2.0 * lambda * (delta * delta - 1.0)).exp())
}

/// Smallest pairwise gap of a sample.
pub fn min_gap(k: &[f64]) -> f64 {
    let mut v = k.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_functions() {
        let t = elementary_symmetric(&[1.0, 2.0, 3.0]);
        assert_eq!(t.full, vec![1.0, 6.0, 11.0, 6.0]);
        assert_eq!(t.leave_one_out[0], vec![1.0, 5.0, 6.0]);
        // sigma_m = sigma^i_m + x_i sigma^i_{m-1}
        let xs = [-0.3, -1.7, -0.05, -2.2, -0.9];
        let t = elementary_symmetric(&xs);
        for (i, x) in xs.iter().enumerate() {
            for m in 1..=xs.len() {
                let lo = t.leave_one_out[i].get(m).copied().unwrap_or(0.0);
                let rebuilt = lo + x * t.leave_one_out[i][m - 1];
                assert!((t.full[m] - rebuilt).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vandermonde_two_by_two() {
        let (a, b) = (0.3, -1.1);
        let inv = vandermonde_inverse(&[a, b]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[b, -1.0, -a, 1.0]) / (b - a);
        assert!((inv - want).abs().max() < 1e-15);
        assert!(vandermonde_inverse(&[1.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn vandermonde_inverse_is_inverse() {
        let xs: [f64; 5] = [-0.1, -0.5, -1.3, -2.0, -3.7];
        let v = DMatrix::from_fn(5, 5, |j, i| xs[i].powi(j as i32));
        let prod = v * vandermonde_inverse(&xs).unwrap();
        assert!((prod - DMatrix::identity(5, 5)).abs().max() < 1e-8);
    }

    #[test]
    fn single_mode_solutions() {
        let k = [0.4, 0.9, 1.6];
        let c = taylor_coefficients(&k, &ManufacturedSolution::parse("cos(0.4*x)").unwrap()).unwrap();
        for (i, v) in c.cos.iter().enumerate() {
            assert!((v - if i == 0 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
        assert!(c.sin.iter().all(|v| v.abs() < 1e-10));
        let s = taylor_coefficients(&k, &ManufacturedSolution::parse("sin(0.9*x)").unwrap()).unwrap();
        for (i, v) in s.sin.iter().enumerate() {
            assert!((v - if i == 1 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
        assert!(taylor_coefficients(&k, &ManufacturedSolution::parse("abs(x)^2.5").unwrap()).is_err());
    }

    #[test]
    fn bound_with_one_frequency() {
        assert_eq!(
            taylor_coefficient_bound(0, &[0.7], 2.5, 1.0, 0.0, Parity::Even).unwrap(),
            2.5
        );
        let e = coefficient_event(&[0.7], 0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!((e.lhs, e.rhs, e.holds), (1.0, 1.0, false));
    }

    #[test]
    fn quartic_integral_limits() {
        assert!((quartic_integral(0.0, 1e-12, 1.1, 32) - 1.0).abs() < 1e-9);
        assert!(quartic_integral_bound(1.0, 1.0).is_err());
    }
}
