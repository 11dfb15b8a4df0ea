//! Singular values of feature matrices and the bounds that describe them:
//! superexponential decay, a condition number lower bound, block sandwich
//! bounds for patched matrices, the `L2` error bound, and empirical rate fits.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::assembly::{FeatureMatrix, PumBlocks, RowTag};
use crate::error::{arg_err, Result};
use crate::problem::PdeProblem;
use crate::rng::{derive_seed, Stream};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Descending, `min(rows, cols)` values.
    pub sigma: Vec<f64>,
    pub kappa: f64,
    pub rcond: f64,
}

impl SpectralReport {
    pub fn sigma_1(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// `rcond * sigma_1`: values below this are numerical noise.
    pub fn floor(&self) -> f64 {
        self.rcond * self.sigma_1()
    }

    /// `10 * rcond * sigma_1`, the cut used before comparing with bounds.
    pub fn check_floor(&self) -> f64 {
        10.0 * self.floor()
    }

    /// Number of leading values at or above the check floor.
    pub fn above_floor(&self) -> usize {
        let f = self.check_floor();
        self.sigma.iter().take_while(|s| **s >= f && **s > 0.0).count()
    }

    /// `sigma_1 / sigma_m` with `m` the last index above the check floor.
    pub fn kappa_above_floor(&self) -> f64 {
        match self.above_floor() {
            0 => f64::INFINITY,
            m => self.sigma_1() / self.sigma[m - 1],
        }
    }
}

pub fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn singular_values(m: &DMatrix<f64>, rcond: f64) -> SpectralReport {
    let sigma = sorted_singular_values(m);
    let kappa = match (sigma.first(), sigma.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    };
    SpectralReport { sigma, kappa, rcond }
}

/// `S R Gamma(m - 2)^(-1/(m - 3))`; at `m = 3` the limit `S R e^gamma`.
pub fn crossover_scale(m: usize, band: f64, half_width: f64) -> Result<f64> {
    if m < 3 {
        return arg_err(format!("decay factor is defined for m >= 3, got {m}"));
    }
    let sr = band * half_width;
    if m == 3 {
        return Ok(sr * EULER_GAMMA.exp());
    }
    Ok(sr * (-ln_gamma((m - 2) as f64) / (m - 3) as f64).exp())
}

/// Problem and sampling constants entering the singular value bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub band: f64,
    pub half_width: f64,
    /// Sup bounds of `a`, `b`, `c`.
    pub lambda: [f64; 3],
    /// Boundary coefficient norms, already multiplied by `sqrt(gamma)`.
    pub g1_norm: f64,
    pub g2_norm: f64,
    /// Total rows, interior plus two boundary rows.
    pub rows: usize,
    pub n_freq: usize,
    pub frobenius: f64,
    /// `sqrt(sum a^2)`, `sum a c`, `sqrt(sum c^2)` over interior points.
    pub qa: f64,
    pub qb: f64,
    pub qc: f64,
}

impl BoundParams {
    pub fn from_matrix(problem: &PdeProblem, fm: &FeatureMatrix, band: f64, n_freq: usize) -> Self {
        let op = &problem.op;
        let sg = op.gamma.sqrt();
        let (mut saa, mut sac, mut scc) = (0.0, 0.0, 0.0);
        for tag in &fm.rows {
            if let RowTag::Interior { x } = *tag {
                let (a, c) = (op.a.value(x), op.c.value(x));
                saa += a * a;
                sac += a * c;
                scc += c * c;
            }
        }
        Self {
            band,
            half_width: problem.half_width(),
            lambda: [op.a.sup, op.b.sup, op.c.sup],
            g1_norm: sg * op.boundary.g1_norm(),
            g2_norm: sg * op.boundary.g2_norm(),
            rows: fm.matrix.nrows(),
            n_freq,
            frobenius: fm.frobenius(),
            qa: saa.sqrt(),
            qb: sac,
            qc: scc.sqrt(),
        }
    }
}

/// Upper bound for `sigma_m` of a global feature matrix.
pub fn sigma_upper_bound(m: usize, p: &BoundParams) -> Result<f64> {
    if m == 0 {
        return arg_err("singular value indices start at 1");
    }
    if m < 3 {
        return Ok(p.frobenius / (m as f64).sqrt());
    }
    let t = crossover_scale(m, p.band, p.half_width)?;
    let s = p.band;
    let [l1, l2, l3] = p.lambda;
    let interior = (3.0 * p.rows as f64 - 6.0).sqrt() * (l1 * s * s + l2 * s * t + l3 * t * t);
    let boundary = 2f64.sqrt() * (p.g1_norm * s + p.g2_norm * t) * t;
    Ok((p.n_freq as f64).sqrt() * (interior + boundary) * (1.0 + t) * t.powi(m as i32 - 3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    /// Exact ratio for the given frequencies.
    pub rho: f64,
    /// Frequency-free lower bound for the ratio; 0 when none applies.
    pub rho_bound: f64,
    /// Lower bound for the condition number built from `rho_bound`.
    pub kappa_lower: f64,
    pub m: usize,
}

/// `rho` for a frequency sample; `rho_bound` depends only on `(qa, qb, qc, S)`.
pub fn rho_exact(p: &BoundParams, k: &[f64]) -> f64 {
    let (a2, b, c2) = (p.qa * p.qa, p.qb, p.qc * p.qc);
    let (mut num, mut den) = (0.0, 0.0);
    for &kj in k {
        let k2 = kj * kj;
        num += a2 * k2 * k2 - 2.0 * b * k2 + c2;
        den += a2 * k2 * k2 + c2;
    }
    num / den
}

pub fn rho_bound(p: &BoundParams) -> f64 {
    let (a, b, c, s2) = (p.qa, p.qb, p.qc, p.band * p.band);
    if b <= 0.0 {
        1.0
    } else if (b - a * c).abs() > 1e-12 * (a * c) {
        1.0 - b / (a * c)
    } else if a * s2 < c {
        1.0 - 2.0 * b * s2 / (a * a * s2 * s2 + c * c)
    } else {
        0.0
    }
}

pub fn rho_and_kappa_lower(p: &BoundParams, k: &[f64]) -> Result<RhoReport> {
    if k.len() != p.n_freq {
        return arg_err(format!("expected {} frequencies, got {}", p.n_freq, k.len()));
    }
    let m = p.rows.min(2 * p.n_freq);
    let rho = rho_exact(p, k);
    let rb = rho_bound(p);
    let kappa_lower = if m < 3 {
        0.0
    } else {
        let t = crossover_scale(m, p.band, p.half_width)?;
        // the power is taken in logs since it underflows for large m
        let ln = 0.5 * (rb / (6.0 * m as f64)).ln() + (3.0 - m as f64) * t.ln() - 3.0 * t.ln().max(0.0);
        ln.exp()
    };
    Ok(RhoReport {
        rho,
        rho_bound: rb,
        kappa_lower,
        m,
    })
}

/// Spectra of the zone blocks of a patched matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichData {
    pub patches: usize,
    /// Union of plateau block spectra, descending.
    pub plateau: Vec<f64>,
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
    pub even_cols: usize,
    pub odd_cols: usize,
    pub plateau_blocks: Vec<Vec<f64>>,
    pub support_blocks: Vec<Vec<f64>>,
}

impl SandwichData {
    pub fn from_blocks(blocks: &PumBlocks) -> Self {
        let plateau_blocks: Vec<Vec<f64>> = blocks.plateau.iter().map(sorted_singular_values).collect();
        let support_blocks: Vec<Vec<f64>> = blocks.support.iter().map(sorted_singular_values).collect();
        let union = |it: &mut dyn Iterator<Item = &Vec<f64>>| {
            let mut v: Vec<f64> = it.flatten().copied().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        let cols = |skip: usize| blocks.support.iter().skip(skip).step_by(2).map(|b| b.ncols()).sum();
        Self {
            patches: blocks.plateau.len() - 1,
            plateau: union(&mut plateau_blocks.iter()),
            even: union(&mut support_blocks.iter().step_by(2)),
            odd: union(&mut support_blocks.iter().skip(1).step_by(2)),
            even_cols: cols(0),
            odd_cols: cols(1),
            plateau_blocks,
            support_blocks,
        }
    }

    pub fn columns(&self) -> usize {
        self.even_cols + self.odd_cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_simple: f64,
    pub upper_simple: f64,
}

/// `sigma_k` (1-based) of a descending list, zero past its end.
fn sigma_at(s: &[f64], k: usize) -> f64 {
    s.get(k - 1).copied().unwrap_or(0.0)
}

pub fn pum_sandwich(data: &SandwichData, m: usize) -> Result<SandwichBounds> {
    if m == 0 || m > data.columns() {
        return arg_err(format!("index {m} outside 1..={}", data.columns()));
    }
    let lower = sigma_at(&data.plateau, m);
    let lo = 1.max(m.saturating_sub(data.odd_cols));
    let hi = m.min(data.even_cols + 1);
    let upper = (lo..=hi)
        .map(|k| sigma_at(&data.even, k).hypot(sigma_at(&data.odd, m + 1 - k)))
        .fold(f64::INFINITY, f64::min);
    let q = m.div_ceil(data.patches + 1);
    let lower_simple = data
        .plateau_blocks
        .iter()
        .map(|s| sigma_at(s, q))
        .fold(f64::INFINITY, f64::min);
    let upper_simple = 2f64.sqrt() * data.support_blocks.iter().map(|s| sigma_at(s, q)).fold(0.0, f64::max);
    Ok(SandwichBounds {
        lower,
        upper,
        lower_simple,
        upper_simple,
    })
}

/// Inputs of the `L2` error bound for a Gevrey solution `(M_u, C_u, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundParams {
    pub m_u: f64,
    pub c_u: f64,
    pub s: f64,
    pub band: f64,
    pub half_width: f64,
    pub lambda: [f64; 3],
    pub g1_norm: f64,
    pub g2_norm: f64,
    pub gamma: f64,
    pub n_freq: usize,
    /// Tail parameter `c > 1` of the coefficient event.
    pub c: f64,
}

/// Expected loss bound with unit prefactor.
pub fn error_bound(p: &ErrorBoundParams) -> Result<f64> {
    if p.s > 1.0 {
        return arg_err(format!("Gevrey order {} exceeds 1", p.s));
    }
    if p.n_freq < 2 {
        return arg_err("the bound needs at least two frequencies");
    }
    if p.c <= 1.0 {
        return arg_err("tail parameter must exceed 1");
    }
    let n = p.n_freq as f64;
    let mx = p.c_u.max(p.band);
    let tau = p.half_width * mx * ((p.s - 1.0) * ln_gamma(2.0 * n - 1.0) / (2.0 * n - 2.0)).exp();
    let [l1, l2, l3] = p.lambda;
    let mu2 = p.m_u * p.m_u;
    let eta_in = |t: f64| {
        mu2 * p.half_width * (l1 * l1 * mx.powi(4) + l2 * l2 * mx * mx * t * t + l3 * l3 * t.powi(4)) * (1.0 + t * t)
    };
    let eta_bd =
        |t: f64| p.gamma * mu2 * (p.g1_norm.powi(2) * mx * mx + p.g2_norm.powi(2) * t * t) * (1.0 + t * t) * t * t;
    let tail = (eta_in(1.0) + eta_bd(1.0)) * n * (-(p.c - 1.0 - p.c.ln()) * (n - 1.0)).exp();
    let geometric = (2.0 * n - 2.0) * (2.0 * p.c.exp() * tau * tau).ln();
    let main = (eta_in(tau) + (1.0 + n.powf(1.0 - 2.0 * p.s)) * eta_bd(tau)) * geometric.exp();
    Ok(tail + main)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RateModel {
    /// `log e = a - rate * x`.
    Exponential,
    /// `log e = a - rate * x^(1/s)`.
    Stretched { s: f64 },
    /// `log e = a + rate * log x`.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    /// Decay rate for the exponential models, slope for the algebraic one.
    pub rate: f64,
    pub intercept: f64,
    /// Root mean square of the log-residuals.
    pub residual: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    (slope, icpt, (rss / n).sqrt())
}

/// Fits each candidate model to `(x, error)` records and returns the one with
/// the smallest residual.
pub fn rate_fit(records: &[(f64, f64)], candidates: &[RateModel]) -> Result<RateFit> {
    if records.len() < 4 {
        return arg_err(format!("a rate fit needs at least 4 records, got {}", records.len()));
    }
    if records.iter().any(|(x, e)| !(*e > 0.0) || !(*x > 0.0)) {
        return arg_err("rate fits need positive abscissae and errors");
    }
    if candidates.is_empty() {
        return arg_err("no candidate models");
    }
    let ys: Vec<f64> = records.iter().map(|(_, e)| e.ln()).collect();
    let mut best: Option<RateFit> = None;
    for &model in candidates {
        let xs: Vec<f64> = records
            .iter()
            .map(|(x, _)| match model {
                RateModel::Exponential => *x,
                RateModel::Stretched { s } => x.powf(1.0 / s),
                RateModel::Algebraic => x.ln(),
            })
            .collect();
        let (slope, intercept, residual) = linear_fit(&xs, &ys);
        let rate = if matches!(model, RateModel::Algebraic) {
            slope
        } else {
            -slope
        };
        let fit = RateFit {
            model,
            rate,
            intercept,
            residual,
        };
        if best.is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Outcome of a Monte-Carlo check of a tail probability claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: usize,
    pub hits: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard deviation at the bound.
    pub sigma: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McReport {
    pub fn new(hits: usize, trials: usize, bound: f64) -> Self {
        let (ci_low, ci_high) = wilson_interval(hits, trials, 1.96);
        Self {
            trials,
            hits,
            frequency: hits as f64 / trials as f64,
            bound,
            sigma: (bound * (1.0 - bound) / trials as f64).sqrt(),
            ci_low,
            ci_high,
        }
    }

    /// Frequency within three binomial standard deviations of the bound.
    pub fn holds(&self) -> bool {
        self.frequency <= self.bound + 3.0 * self.sigma
    }
}

/// Frequency of `rho <= threshold` over `trials` independent samples of
/// `n_freq` frequencies, against the claimed bound `claim^N`.
pub fn rho_tail_mc(p: &BoundParams, threshold: f64, claim: f64, trials: usize, seed: u64) -> McReport {
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut s = Stream::new(derive_seed(seed, t as u64));
            let k: Vec<f64> = (0..p.n_freq).map(|_| s.open_uniform(p.band)).collect();
            rho_exact(p, &k) <= threshold
        })
        .count();
    McReport::new(hits, trials, claim.powi(p.n_freq as i32))
}

/// One line per index: `m, sigma, upper_bound, sandwich_lower, sandwich_upper, floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub m: usize,
    pub sigma: f64,
    pub upper_bound: Option<f64>,
    pub sandwich: Option<SandwichBounds>,
    pub floor: f64,
}

pub fn write_spectrum_csv(rows: &[SpectrumRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "# rfm-spectrum v1")?;
    writeln!(w, "m,sigma,upper_bound,sandwich_lower,sandwich_upper,floor")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{:.17e},{},{},{},{:.17e}",
            r.m,
            r.sigma,
            opt(r.upper_bound),
            opt(r.sandwich.map(|s| s.lower)),
            opt(r.sandwich.map(|s| s.upper)),
            r.floor
        )?;
    }
    Ok(())
}
