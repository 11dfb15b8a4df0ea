//! Random trigonometric features, the partition-of-unity bump and the global
//! and patched trial functions built from them.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{arg_err, Result};
use crate::rng::Stream;

/// Frequencies drawn i.i.d. uniform on `(0, band)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub k: Vec<f64>,
    pub band: f64,
    pub seed: u64,
}

impl FrequencySample {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn has_duplicates(&self) -> bool {
        let mut v = self.k.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).any(|w| w[0] == w[1])
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# rfm-frequencies v1 band={} seed={}", self.band, self.seed)?;
        writeln!(w, "index,k")?;
        for (i, k) in self.k.iter().enumerate() {
            writeln!(w, "{i},{k:.17e}")?;
        }
        Ok(())
    }
}

fn draw_distinct(stream: &mut Stream, n: usize, band: f64) -> Vec<f64> {
    let mut k = Vec::with_capacity(n);
    while k.len() < n {
        let v = stream.open_uniform(band);
        if !k.contains(&v) {
            k.push(v);
        }
    }
    k
}

pub fn sample_frequencies(n: usize, band: f64, seed: u64) -> Result<FrequencySample> {
    if n == 0 {
        return arg_err("at least one frequency is required");
    }
    if !(band > 0.0 && band.is_finite()) {
        return arg_err(format!("frequency band must be positive, got {band}"));
    }
    let mut stream = Stream::new(seed);
    Ok(FrequencySample {
        k: draw_distinct(&mut stream, n, band),
        band,
        seed,
    })
}

/// Local frequency sets for `patches + 1` local models, drawn in patch order
/// from one stream.
pub fn sample_patch_frequencies(
    patches: usize,
    per_patch: usize,
    band: f64,
    seed: u64,
) -> Result<Vec<FrequencySample>> {
    if per_patch == 0 {
        return arg_err("at least one frequency per patch is required");
    }
    if !(band > 0.0 && band.is_finite()) {
        return arg_err(format!("frequency band must be positive, got {band}"));
    }
    let mut stream = Stream::new(seed);
    Ok((0..=patches)
        .map(|_| FrequencySample {
            k: draw_distinct(&mut stream, per_patch, band),
            band,
            seed,
        })
        .collect())
}

/// `d^order/dt^order` of `cos(k t)` (or `sin(k t)` when `sine`).
pub fn trig_derivative(sine: bool, k: f64, t: f64, order: usize) -> f64 {
    let (s, c) = (k * t).sin_cos();
    let base = match (sine, order % 4) {
        (false, 0) | (true, 1) => c,
        (false, 1) | (true, 2) => -s,
        (false, 2) | (true, 3) => -c,
        _ => s,
    };
    k.powi(order as i32) * base
}

/// Anything that can be evaluated with derivatives and integrated panelwise.
pub trait TrialFunction: Sync {
    fn eval(&self, x: f64, order: usize) -> f64;

    /// Points where the function is only piecewise smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `sum_j alpha_j cos(k_j x) + alpha_{N+j} sin(k_j x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureModel {
    pub freq: FrequencySample,
    pub alpha: Vec<f64>,
}

impl RandomFeatureModel {
    pub fn new(freq: FrequencySample, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != 2 * freq.len() {
            return arg_err(format!("expected {} coefficients, got {}", 2 * freq.len(), alpha.len()));
        }
        Ok(Self { freq, alpha })
    }

    /// Derivative of order `order` with respect to the model's own variable.
    pub fn eval_local(&self, t: f64, order: usize) -> f64 {
        let n = self.freq.len();
        self.freq
            .k
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                self.alpha[j] * trig_derivative(false, k, t, order)
                    + self.alpha[n + j] * trig_derivative(true, k, t, order)
            })
            .sum()
    }
}

impl TrialFunction for RandomFeatureModel {
    fn eval(&self, x: f64, order: usize) -> f64 {
        self.eval_local(x, order)
    }
}

/// The bump `phi(t)`: one on `[-3/4, 3/4]`, sine ramps down to zero at
/// `|t| = 5/4`, `C^1` overall.
pub fn pou_bump(t: f64, order: usize) -> f64 {
    let w = 2.0 * PI * t;
    if (-1.25..-0.75).contains(&t) {
        match order {
            0 => 0.5 * (1.0 + w.sin()),
            1 => PI * w.cos(),
            2 => -2.0 * PI * PI * w.sin(),
            _ => panic!("bump derivatives are available up to order 2"),
        }
    } else if (-0.75..0.75).contains(&t) {
        if order == 0 {
            1.0
        } else {
            0.0
        }
    } else if (0.75..1.25).contains(&t) {
        match order {
            0 => 0.5 * (1.0 - w.sin()),
            1 => -PI * w.cos(),
            2 => 2.0 * PI * PI * w.sin(),
            _ => panic!("bump derivatives are available up to order 2"),
        }
    } else {
        0.0
    }
}

/// Patch centers `x_p = -R + 2 r p`, `p = 0..=patches`, with `r = R / patches`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGrid {
    pub half_width: f64,
    pub patches: usize,
}

impl PatchGrid {
    pub fn new(half_width: f64, patches: usize) -> Result<Self> {
        if patches == 0 {
            return arg_err("at least one patch is required");
        }
        if !(half_width > 0.0) {
            return arg_err("half-width must be positive");
        }
        Ok(Self { half_width, patches })
    }

    pub fn radius(&self) -> f64 {
        self.half_width / self.patches as f64
    }

    pub fn center(&self, p: usize) -> f64 {
        -self.half_width + 2.0 * self.radius() * p as f64
    }

    pub fn local(&self, p: usize, x: f64) -> f64 {
        (x - self.center(p)) / self.radius()
    }

    /// `d^order phi_p / dx^order` at `x`.
    pub fn weight(&self, p: usize, x: f64, order: usize) -> f64 {
        pou_bump(self.local(p, x), order) / self.radius().powi(order as i32)
    }

    /// Patches whose bump may be nonzero at `x` (at most three candidates).
    pub fn candidates(&self, x: f64) -> std::ops::RangeInclusive<usize> {
        let q = ((x + self.half_width) / (2.0 * self.radius())).round();
        let q = q.clamp(0.0, self.patches as f64) as usize;
        q.saturating_sub(1)..=(q + 1).min(self.patches)
    }

    /// Zone ends `x_p +- 3r/4` and `x_p +- 5r/4` inside the domain.
    pub fn breakpoints(&self) -> Vec<f64> {
        let r = self.radius();
        (0..=self.patches)
            .flat_map(|p| {
                let c = self.center(p);
                [c - 1.25 * r, c - 0.75 * r, c + 0.75 * r, c + 1.25 * r]
            })
            .collect()
    }
}

/// `max |sum_p phi_p(x) - 1|` over `n_points` equidistant points of `[-R, R]`.
pub fn partition_check(half_width: f64, patches: usize, n_points: usize) -> Result<f64> {
    let grid = PatchGrid::new(half_width, patches)?;
    if n_points < 2 {
        return arg_err("need at least two check points");
    }
    let mut worst: f64 = 0.0;
    for i in 0..n_points {
        let x = -half_width + 2.0 * half_width * i as f64 / (n_points - 1) as f64;
        let s: f64 = grid.candidates(x).map(|p| grid.weight(p, x, 0)).sum();
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// `sum_p phi_p(x) v_p(l_p(x))` with one local model per patch center.
#[derive(Debug, Clone, PartialEq)]
pub struct PumModel {
    pub grid: PatchGrid,
    pub locals: Vec<RandomFeatureModel>,
}

impl PumModel {
    pub fn new(grid: PatchGrid, locals: Vec<RandomFeatureModel>) -> Result<Self> {
        if locals.len() != grid.patches + 1 {
            return arg_err(format!(
                "expected {} local models, got {}",
                grid.patches + 1,
                locals.len()
            ));
        }
        Ok(Self { grid, locals })
    }

    /// Derivative of order `order` of the local model `p` in `x`.
    pub fn local_value(&self, p: usize, x: f64, order: usize) -> f64 {
        self.locals[p].eval_local(self.grid.local(p, x), order) / self.grid.radius().powi(order as i32)
    }
}

impl TrialFunction for PumModel {
    fn eval(&self, x: f64, order: usize) -> f64 {
        assert!(order <= 2, "patched models support derivatives up to order 2");
        let binom = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]];
        let mut acc = 0.0;
        for p in self.grid.candidates(x) {
            if self.grid.weight(p, x, 0) == 0.0 && pou_bump(self.grid.local(p, x), 1) == 0.0 {
                continue;
            }
            for j in 0..=order {
                acc += binom[order][j] * self.grid.weight(p, x, j) * self.local_value(p, x, order - j);
            }
        }
        acc
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.grid.breakpoints()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_sampling() {
        assert!(sample_frequencies(0, 1.0, 1).is_err());
        let a = sample_frequencies(50, 2.0, 11).unwrap();
        assert!(a.k.iter().all(|&k| k > 0.0 && k < 2.0));
        assert_eq!(a, sample_frequencies(50, 2.0, 11).unwrap());
        assert_ne!(a.k, sample_frequencies(50, 2.0, 12).unwrap().k);
        let big = sample_frequencies(10_000, 1.0, 7).unwrap();
        let mean = big.k.iter().sum::<f64>() / 1e4;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        assert!(!big.has_duplicates());
    }

    #[test]
    fn model_examples() {
        let freq = FrequencySample {
            k: vec![0.5],
            band: 1.0,
            seed: 0,
        };
        let m = RandomFeatureModel::new(freq, vec![1.0, 0.0]).unwrap();
        assert_eq!(m.eval(0.0, 0), 1.0);
        assert!((m.eval(0.0, 2) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn model_derivatives_match_finite_differences() {
        let freq = sample_frequencies(6, 3.0, 5).unwrap();
        let alpha: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let m = RandomFeatureModel::new(freq, alpha).unwrap();
        let h = 1e-4;
        for x in [-0.9, -0.1, 0.4, 0.8] {
            let d1 = (m.eval(x + h, 0) - m.eval(x - h, 0)) / (2.0 * h);
            let d2 = (m.eval(x + h, 0) - 2.0 * m.eval(x, 0) + m.eval(x - h, 0)) / (h * h);
            assert!((m.eval(x, 1) - d1).abs() < 1e-6);
            assert!((m.eval(x, 2) - d2).abs() < 1e-6);
        }
    }

    #[test]
    fn bump_values() {
        assert_eq!(pou_bump(0.0, 0), 1.0);
        assert!((pou_bump(1.0, 0) - 0.5).abs() < 1e-15);
        assert!(pou_bump(-1.25, 0).abs() < 1e-15);
        assert!((pou_bump(0.75, 0) - 1.0).abs() < 1e-15);
        assert_eq!(pou_bump(2.0, 0), 0.0);
    }

    #[test]
    fn bump_is_c1_at_branch_points() {
        for t in [-1.25f64, -0.75, 0.75, 1.25] {
            for order in 0..=1 {
                let jump = pou_bump(t.next_down(), order) - pou_bump(t.next_up(), order);
                assert!(jump.abs() < 1e-12, "t={t} order={order}: {jump}");
            }
        }
    }

    #[test]
    fn partition_sums_to_one() {
        for (r, p, n) in [(1.0, 4, 1001), (4.0, 5, 501), (1.0, 1, 11)] {
            assert!(partition_check(r, p, n).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn support_and_overlap() {
        let g = PatchGrid::new(1.0, 4).unwrap();
        let r = g.radius();
        for i in 0..=2000 {
            let x = -1.0 + i as f64 * 1e-3;
            let nonzero = (0..=4).filter(|&p| g.weight(p, x, 0) != 0.0).count();
            assert!(nonzero <= 2);
            for p in 0..=4 {
                if (x - g.center(p)).abs() >= 1.25 * r {
                    assert_eq!(g.weight(p, x, 0), 0.0);
                }
                if g.weight(p, x, 0) != 0.0 {
                    assert!(g.candidates(x).contains(&p));
                }
            }
        }
    }

    #[test]
    fn patched_model_plateau_and_derivatives() {
        let g = PatchGrid::new(3.0, 3).unwrap();
        let freqs = sample_patch_frequencies(3, 4, 1.0, 9).unwrap();
        let locals: Vec<_> = freqs
            .into_iter()
            .enumerate()
            .map(|(p, f)| {
                let a = (0..8).map(|i| ((i + 3 * p) as f64).cos()).collect();
                RandomFeatureModel::new(f, a).unwrap()
            })
            .collect();
        let m = PumModel::new(g, locals).unwrap();
        let x = g.center(1) + 0.5 * g.radius();
        assert!((m.eval(x, 0) - m.local_value(1, x, 0)).abs() < 1e-14);

        let mut s = Stream::new(4);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = -3.0 + h + s.uniform() * (6.0 - 2.0 * h);
            // the second difference straddling a ramp end sees the jump in phi''
            if g.breakpoints().iter().any(|b| (x - b).abs() < 2.0 * h) {
                continue;
            }
            let fd = (m.eval(x + h, 0) - 2.0 * m.eval(x, 0) + m.eval(x - h, 0)) / (h * h);
            worst = worst.max((m.eval(x, 2) - fd).abs());
        }
        assert!(worst <= 1e-4, "{worst}");
    }
}
