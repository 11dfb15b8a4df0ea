//! Minimum-norm least squares by truncated SVD, loss and error integrals, and
//! the end-to-end solve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_plain, assemble_pum, equidistant_grid, FeatureMatrix};
use crate::error::{arg_err, Result};
use crate::expr::Expr;
use crate::features::{
    sample_frequencies, sample_patch_frequencies, PatchGrid, PumModel, RandomFeatureModel, TrialFunction,
};
use crate::problem::PdeProblem;
use crate::quadrature::{clip_breaks, composite, GaussLegendre, PANEL_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Singular values below `rcond * sigma_1` are dropped.
    pub rcond: f64,
    /// Gauss-Legendre panels per smooth piece of the integrand.
    pub quadrature_panels: usize,
    /// Scale interior rows by `sqrt(h)`.
    pub weighted_rows: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rcond: 1e-13,
            quadrature_panels: 32,
            weighted_rows: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub alpha: DVector<f64>,
    pub rank: usize,
    /// `||A alpha - b||_2`.
    pub residual: f64,
    /// All singular values of `A`, descending.
    pub singular_values: Vec<f64>,
}

/// `alpha = V_r Sigma_r^{-1} U_r^T b` keeping singular values above
/// `rcond * sigma_1`.
pub fn lstsq_svd(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return arg_err(format!("matrix has {} rows but rhs has {}", a.nrows(), b.len()));
    }
    if a.is_empty() {
        return arg_err("empty matrix");
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let cut = rcond * smax;
    let mut alpha = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            let coef = u.column(i).dot(b) / s;
            alpha.axpy(coef, &vt.row(i).transpose(), 1.0);
        }
    }
    let residual = (a * &alpha - b).norm();
    let mut singular_values: Vec<f64> = sigma.iter().copied().collect();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    Ok(LstsqSolution {
        alpha,
        rank,
        residual,
        singular_values,
    })
}

fn breaks_for(model: &dyn TrialFunction, half_width: f64) -> Vec<f64> {
    clip_breaks(-half_width, half_width, model.breakpoints())
}

/// `||L u_N - f||^2` over the domain plus `gamma` times the squared boundary
/// residuals at both ends.
pub fn loss_eval(problem: &PdeProblem, model: &dyn TrialFunction, panels: usize) -> f64 {
    let r = problem.half_width();
    let rule = GaussLegendre::new(PANEL_NODES);
    let interior = composite(&rule, &breaks_for(model, r), panels, |x| {
        let v = [model.eval(x, 0), model.eval(x, 1), model.eval(x, 2)];
        let res = problem.op.apply_at(x, v) - problem.f.value(x);
        res * res
    });
    let b = &problem.op.boundary;
    let boundary: f64 = [-r, r]
        .iter()
        .enumerate()
        .map(|(s, &x)| {
            let h = b.g1[s] * model.eval(x, 1) + b.g2[s] * model.eval(x, 0) - b.g[s];
            h * h
        })
        .sum();
    interior + problem.op.gamma * boundary
}

/// `L2` norms of the error and its first two derivatives.
pub fn error_norms(model: &dyn TrialFunction, exact: &Expr, half_width: f64, panels: usize) -> [f64; 3] {
    let rule = GaussLegendre::new(PANEL_NODES);
    let breaks = breaks_for(model, half_width);
    let mut out = [0.0; 3];
    for (l, o) in out.iter_mut().enumerate() {
        *o = composite(&rule, &breaks, panels, |x| {
            let e = model.eval(x, l) - exact.deriv(x, l);
            e * e
        })
        .sqrt();
    }
    out
}

pub fn l2_norm(f: &Expr, half_width: f64, panels: usize) -> f64 {
    let rule = GaussLegendre::new(PANEL_NODES);
    composite(&rule, &[-half_width, half_width], panels, |x| f.eval(x).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureConfig {
    Plain {
        features: usize,
        band: f64,
    },
    Pum {
        patches: usize,
        per_patch: usize,
        band: f64,
    },
}

impl FeatureConfig {
    pub fn columns(&self) -> usize {
        match *self {
            FeatureConfig::Plain { features, .. } => 2 * features,
            FeatureConfig::Pum { patches, per_patch, .. } => 2 * (patches + 1) * per_patch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Plain(RandomFeatureModel),
    Pum(PumModel),
}

impl TrialFunction for Model {
    fn eval(&self, x: f64, order: usize) -> f64 {
        match self {
            Model::Plain(m) => m.eval(x, order),
            Model::Pum(m) => m.eval(x, order),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Model::Plain(m) => m.breakpoints(),
            Model::Pum(m) => m.breakpoints(),
        }
    }
}

/// Flat, serializable summary of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub seed: u64,
    /// Total number of frequencies.
    #[serde(rename = "N")]
    pub n_freq: usize,
    #[serde(rename = "P")]
    pub patches: Option<usize>,
    #[serde(rename = "N_p")]
    pub per_patch: Option<usize>,
    #[serde(rename = "S")]
    pub band: f64,
    #[serde(rename = "R")]
    pub half_width: f64,
    pub n: usize,
    pub rcond: f64,
    pub loss: f64,
    pub e0: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub rel_e0: Option<f64>,
    pub rank: usize,
    pub kappa: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub model: Model,
    pub matrix: FeatureMatrix,
    pub solution: LstsqSolution,
    pub record: SolveRecord,
}

pub fn condition_number(sigma: &[f64]) -> f64 {
    match (sigma.first(), sigma.last()) {
        (Some(&s1), Some(&sm)) if sm > 0.0 => s1 / sm,
        _ => f64::INFINITY,
    }
}

pub fn solve_problem(
    problem: &PdeProblem,
    features: FeatureConfig,
    n: usize,
    seed: u64,
    options: &SolveOptions,
) -> Result<SolveResult> {
    let r = problem.half_width();
    let grid = equidistant_grid(n, r, problem.op.gamma)?;
    let (mut matrix, build): (FeatureMatrix, Box<dyn Fn(Vec<f64>) -> Result<Model>>) = match features {
        FeatureConfig::Plain { features, band } => {
            let freq = sample_frequencies(features, band, seed)?;
            let fm = assemble_plain(problem, &freq, &grid)?;
            (
                fm,
                Box::new(move |a| Ok(Model::Plain(RandomFeatureModel::new(freq.clone(), a)?))),
            )
        }
        FeatureConfig::Pum {
            patches,
            per_patch,
            band,
        } => {
            let pg = PatchGrid::new(r, patches)?;
            let locals = sample_patch_frequencies(patches, per_patch, band, seed)?;
            let fm = assemble_pum(problem, &pg, &locals, &grid)?;
            (
                fm,
                Box::new(move |a: Vec<f64>| {
                    let w = 2 * per_patch;
                    let models = locals
                        .iter()
                        .enumerate()
                        .map(|(p, f)| RandomFeatureModel::new(f.clone(), a[p * w..(p + 1) * w].to_vec()))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Model::Pum(PumModel::new(pg, models)?))
                }),
            )
        }
    };
    if options.weighted_rows {
        matrix.apply_row_weights(grid.spacing());
    }
    let solution = lstsq_svd(&matrix.matrix, &matrix.rhs, options.rcond)?;
    let model = build(solution.alpha.iter().copied().collect())?;
    let panels = options.quadrature_panels;
    let loss = loss_eval(problem, &model, panels);
    let errors = problem.exact.as_ref().map(|u| error_norms(&model, &u.expr, r, panels));
    let rel_e0 = match (&errors, &problem.exact) {
        (Some(e), Some(u)) => Some(e[0] / l2_norm(&u.expr, r, panels)),
        _ => None,
    };
    let (n_freq, patches, per_patch, band) = match features {
        FeatureConfig::Plain { features, band } => (features, None, None, band),
        FeatureConfig::Pum {
            patches,
            per_patch,
            band,
        } => ((patches + 1) * per_patch, Some(patches), Some(per_patch), band),
    };
    let record = SolveRecord {
        seed,
        n_freq,
        patches,
        per_patch,
        band,
        half_width: r,
        n,
        rcond: options.rcond,
        loss,
        e0: errors.map(|e| e[0]),
        e1: errors.map(|e| e[1]),
        e2: errors.map(|e| e[2]),
        rel_e0,
        rank: solution.rank,
        kappa: condition_number(&solution.singular_values),
        residual: solution.residual,
    };
    Ok(SolveResult {
        model,
        matrix,
        solution,
        record,
    })
}

/// Solves once per seed in parallel; records come back in seed order.
pub fn seed_sweep(
    problem: &PdeProblem,
    features: FeatureConfig,
    n: usize,
    seeds: &[u64],
    options: &SolveOptions,
) -> Result<Vec<SolveRecord>> {
    seeds
        .par_iter()
        .map(|&s| solve_problem(problem, features, n, s, options).map(|r| r.record))
        .collect()
}

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrequencySample;
    use crate::problem::{make_manufactured, ManufacturedSolution, OperatorSpec};

    #[test]
    fn lstsq_small_cases() {
        let s = lstsq_svd(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 2.0]), 1e-13).unwrap();
        assert!((s.alpha[0] - 1.0).abs() < 1e-15 && (s.alpha[1] - 2.0).abs() < 1e-15);
        assert_eq!(s.rank, 2);

        let a = DMatrix::from_element(2, 2, 1.0);
        let s = lstsq_svd(&a, &DVector::from_element(2, 1.0), 1e-13).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-14 && (s.alpha[1] - 0.5).abs() < 1e-14);
        assert_eq!(s.rank, 1);

        let s = lstsq_svd(&DMatrix::zeros(3, 2), &DVector::from_element(3, 1.0), 1e-13).unwrap();
        assert_eq!(s.rank, 0);
        assert!(s.alpha.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn median_of_small_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn error_norms_of_zero_model() {
        let freq = FrequencySample {
            k: vec![1.0],
            band: 2.0,
            seed: 0,
        };
        let zero = RandomFeatureModel::new(freq, vec![0.0, 0.0]).unwrap();
        let e = error_norms(&zero, &Expr::Sin(1.0), 1.0, 8);
        let want = (1.0 - 1f64.sin() * 1f64.cos()).sqrt();
        assert!((e[0] - want).abs() < 1e-14);
        let want1 = (1.0 + 1f64.sin() * 1f64.cos()).sqrt();
        assert!((e[1] - want1).abs() < 1e-14);
    }

    #[test]
    fn solves_analytic_problem() {
        let op = OperatorSpec::constant_coefficients(0.5, 1.0, 0.0, -1.0).unwrap();
        let p = make_manufactured(&op, ManufacturedSolution::parse("sin(3*x)").unwrap());
        let r = solve_problem(
            &p,
            FeatureConfig::Plain {
                features: 20,
                band: 6.0,
            },
            200,
            1,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.record.rel_e0.unwrap() <= 1e-6, "{:?}", r.record);
    }

    #[test]
    fn loss_quadrature_is_converged() {
        let op = OperatorSpec::constant_coefficients(1.0, 1.0, 0.0, -1.0).unwrap();
        let p = make_manufactured(&op, ManufacturedSolution::parse("sin(3*x) + exp(x)").unwrap());
        let cfg = FeatureConfig::Pum {
            patches: 4,
            per_patch: 2,
            band: 1.0,
        };
        let r = solve_problem(&p, cfg, 300, 2, &SolveOptions::default()).unwrap();
        let (a, b) = (loss_eval(&p, &r.model, 4), loss_eval(&p, &r.model, 8));
        assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
    }
}
