//! Cross-checks between independent computations of the same quantity.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rfm_core::assembly::{blockdiag_compare, extract_blocks, reassemble, RowTag, Side};
use rfm_core::features::TrialFunction;
use rfm_core::oracle::{moment_bound, moment_integrand, quartic_integral_constant};
use rfm_core::problem::{make_manufactured, ManufacturedSolution, OperatorSpec};
use rfm_core::quadrature::{composite, GaussLegendre};
use rfm_core::rng::Stream;
use rfm_core::solver::{lstsq_svd, solve_problem, FeatureConfig, SolveOptions};
use rfm_core::spectra::sorted_singular_values;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut s = Stream::new(seed);
    DMatrix::from_fn(rows, cols, |_, _| 2.0 * s.uniform() - 1.0)
}

#[test]
fn pum_matrix_times_coefficients_is_the_pointwise_residual() {
    let mut op = OperatorSpec::constant_coefficients(1.0, 1.0, 0.5, -1.0).unwrap();
    op.boundary.g1 = [0.3, -0.7];
    op.gamma = 4.0;
    let problem = make_manufactured(&op, ManufacturedSolution::parse("sin(3*x) + exp(x)").unwrap());
    let cfg = FeatureConfig::Pum {
        patches: 4,
        per_patch: 6,
        band: 1.0,
    };
    let res = solve_problem(&problem, cfg, 300, 5, &SolveOptions::default()).unwrap();
    let phi_alpha = &res.matrix.matrix * &res.solution.alpha;
    let r = problem.half_width();
    for (i, tag) in res.matrix.rows.iter().enumerate() {
        let x = tag.x(r);
        let v = [res.model.eval(x, 0), res.model.eval(x, 1), res.model.eval(x, 2)];
        let want = match tag {
            RowTag::Interior { .. } => op.apply_at(x, v),
            RowTag::Boundary { side } => {
                let j = if *side == Side::Left { 0 } else { 1 };
                op.gamma.sqrt() * (op.boundary.g1[j] * v[1] + op.boundary.g2[j] * v[0])
            }
        };
        // rounding scale of the row product, since the coefficients cancel heavily
        let scale: f64 = res
            .matrix
            .matrix
            .row(i)
            .iter()
            .zip(res.solution.alpha.iter())
            .map(|(a, b)| (a * b).abs())
            .sum();
        assert!(
            (phi_alpha[i] - want).abs() <= 1e-12 * scale.max(1.0),
            "row {i}: {} vs {want}",
            phi_alpha[i]
        );
    }
}

#[test]
fn zone_blocks_reassemble_to_the_full_matrix() {
    let op = OperatorSpec::constant_coefficients(4.0, 1.0, 0.0, 0.0).unwrap();
    let problem = make_manufactured(&op, ManufacturedSolution::parse("sin(x)").unwrap());
    let cfg = FeatureConfig::Pum {
        patches: 5,
        per_patch: 4,
        band: 1.0,
    };
    let fm = solve_problem(&problem, cfg, 201, 1, &SolveOptions::default())
        .unwrap()
        .matrix;
    let blocks = extract_blocks(&fm).unwrap();
    let back = reassemble(fm.blocks.as_ref().unwrap(), &blocks, fm.matrix.nrows());
    assert_eq!(back, fm.matrix);
}

#[test]
fn block_diagonal_spectrum_is_the_union_of_block_spectra() {
    let op = OperatorSpec::constant_coefficients(4.0, 1.0, 0.0, 0.0).unwrap();
    let problem = make_manufactured(&op, ManufacturedSolution::parse("sin(x)").unwrap());
    let cfg = FeatureConfig::Pum {
        patches: 5,
        per_patch: 4,
        band: 1.0,
    };
    let fm = solve_problem(&problem, cfg, 201, 2, &SolveOptions::default())
        .unwrap()
        .matrix;
    let blocks = extract_blocks(&fm).unwrap();
    let diag = blockdiag_compare(&blocks);
    let mut union: Vec<f64> = blocks.plateau.iter().flat_map(sorted_singular_values).collect();
    union.sort_by(|a, b| b.total_cmp(a));
    let whole = sorted_singular_values(&diag.plateau);
    assert_eq!(whole.len(), union.len());
    for (a, b) in whole.iter().zip(&union) {
        assert!((a - b).abs() <= 1e-10 * union[0]);
    }
}

#[test]
fn lstsq_matches_normal_equations() {
    let a = random_matrix(50, 20, 11);
    let mut s = Stream::new(12);
    let b = DVector::from_fn(50, |_, _| s.uniform());
    let got = lstsq_svd(&a, &b, 1e-13).unwrap();
    let ata = a.transpose() * &a;
    let want = ata.cholesky().unwrap().solve(&(a.transpose() * &b));
    assert_eq!(got.rank, 20);
    for (g, w) in got.alpha.iter().zip(want.iter()) {
        assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()));
    }
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let a = random_matrix(100, 40, 21);
    let sigma = sorted_singular_values(&a);
    let mut eig: Vec<f64> = (a.transpose() * &a)
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    for (s, e) in sigma.iter().zip(&eig) {
        assert!((s - e).abs() <= 1e-10 * sigma[0]);
    }
}

#[test]
fn moment_integral_has_closed_form_when_weight_is_at_least_one() {
    // For w >= 1 the integrand reduces to S^{4N} w^{4N-4} k^{2N+2}.
    let rule = GaussLegendre::new(16);
    for (n, band, c_u) in [(2, 1.0, 1.0), (4, 1.0, 1.5), (3, 0.5, 2.0)] {
        let w = c_u / band;
        let integral = composite(&rule, &[0.0, 1.0], 4, |k| moment_integrand(k, n, w, band));
        assert_relative_eq!(integral, moment_bound(n, band, c_u), max_relative = 1e-12);
    }
}

#[test]
fn quartic_constant_matches_independent_quadrature() {
    let rule = GaussLegendre::new(16);
    // Gamma(5/4) = int_0^inf exp(-x^4) dx; the tail past 6 is below 1e-500.
    let g = composite(&rule, &[0.0, 6.0], 64, |x| (-x.powi(4)).exp());
    let z = std::f64::consts::PI / (16.0 * g * g);
    let erf = 2.0 / std::f64::consts::PI.sqrt() * composite(&rule, &[0.0, z], 4, |t| (-t * t).exp());
    assert_relative_eq!(quartic_integral_constant(), g * (2.0 * erf + 1.0), max_relative = 1e-13);
}
