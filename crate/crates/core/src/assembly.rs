//! Collocation grids and the feature matrix `Phi`: row `i` applies the
//! differential operator (interior points) or the scaled boundary operator
//! (the two end points) to every feature column.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, Result, RfmError};
use crate::features::{pou_bump, trig_derivative, FrequencySample, PatchGrid};
use crate::problem::PdeProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    /// Interior points in increasing order.
    pub interior: Vec<f64>,
    pub half_width: f64,
    /// Boundary penalty; boundary rows carry `sqrt(gamma)`.
    pub gamma: f64,
}

impl CollocationGrid {
    /// Total row count: interior points plus the two ends.
    pub fn rows(&self) -> usize {
        self.interior.len() + 2
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.rows() - 1) as f64
    }
}

/// `n - 2` interior points `-R + 2 R i / (n - 1)`, plus both ends.
pub fn equidistant_grid(n: usize, half_width: f64, gamma: f64) -> Result<CollocationGrid> {
    if n < 3 {
        return arg_err(format!("a collocation grid needs at least 3 points, got {n}"));
    }
    if !(half_width > 0.0) || !(gamma > 0.0) {
        return arg_err("half-width and boundary penalty must be positive");
    }
    let h = 2.0 * half_width / (n - 1) as f64;
    let interior = (1..n - 1).map(|i| -half_width + h * i as f64).collect();
    Ok(CollocationGrid {
        interior,
        half_width,
        gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowTag {
    Interior { x: f64 },
    Boundary { side: Side },
}

impl RowTag {
    pub fn x(&self, half_width: f64) -> f64 {
        match *self {
            RowTag::Interior { x } => x,
            RowTag::Boundary { side: Side::Left } => -half_width,
            RowTag::Boundary { side: Side::Right } => half_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColTag {
    /// Patch index; always 0 for the global model.
    pub patch: usize,
    pub index: usize,
    pub sine: bool,
}

/// The three overlap zones of a patch in its local coordinate: left ramp
/// `(-5/4, -3/4)`, plateau `[-3/4, 3/4]`, right ramp `(3/4, 5/4)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    LeftRamp = 0,
    Plateau = 1,
    RightRamp = 2,
}

impl Zone {
    pub fn of(t: f64) -> Option<Zone> {
        if t > -1.25 && t < -0.75 {
            Some(Zone::LeftRamp)
        } else if (-0.75..=0.75).contains(&t) {
            Some(Zone::Plateau)
        } else if t > 0.75 && t < 1.25 {
            Some(Zone::RightRamp)
        } else {
            None
        }
    }
}

/// Row indices of every patch's zones. All rows whose point lies in the open
/// support of `phi_p` appear in exactly one zone of patch `p`, the two end
/// rows included (they sit on the plateaus of the first and last patch).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMap {
    pub patches: usize,
    pub per_patch: usize,
    pub zones: Vec<[Vec<usize>; 3]>,
}

impl BlockMap {
    pub fn support_rows(&self, p: usize) -> Vec<usize> {
        self.zones[p].iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub rows: Vec<RowTag>,
    pub cols: Vec<ColTag>,
    pub half_width: f64,
    pub blocks: Option<BlockMap>,
}

impl FeatureMatrix {
    pub fn frobenius(&self) -> f64 {
        self.matrix.norm()
    }

    /// Scales interior rows (and their data) by `sqrt(h)`, `h` the grid
    /// spacing, so the interior residual approximates an `L2` integral.
    pub fn apply_row_weights(&mut self, spacing: f64) {
        let w = spacing.sqrt();
        for (i, tag) in self.rows.iter().enumerate() {
            if matches!(tag, RowTag::Interior { .. }) {
                self.matrix.row_mut(i).scale_mut(w);
                self.rhs[i] *= w;
            }
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# rfm-matrix v1 rows={} cols={}",
            self.matrix.nrows(),
            self.matrix.ncols()
        )?;
        for row in self.matrix.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Nonzero pattern as `row,col,value` triplets.
    pub fn write_triplets(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# rfm-sparsity v1 rows={} cols={}",
            self.matrix.nrows(),
            self.matrix.ncols()
        )?;
        writeln!(w, "row,col,value")?;
        for j in 0..self.matrix.ncols() {
            for i in 0..self.matrix.nrows() {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    writeln!(w, "{i},{j},{v:.17e}")?;
                }
            }
        }
        Ok(())
    }
}

fn row_tags(grid: &CollocationGrid) -> Vec<RowTag> {
    grid.interior
        .iter()
        .map(|&x| RowTag::Interior { x })
        .chain([
            RowTag::Boundary { side: Side::Left },
            RowTag::Boundary { side: Side::Right },
        ])
        .collect()
}

fn boundary_data(problem: &PdeProblem, side: Side) -> (f64, f64, f64) {
    let s = side as usize;
    let b = &problem.op.boundary;
    (b.g1[s], b.g2[s], b.g[s])
}

fn check_grid(problem: &PdeProblem, grid: &CollocationGrid) -> Result<()> {
    if (grid.half_width - problem.half_width()).abs() > 1e-15 * problem.half_width() {
        return arg_err("collocation grid and problem use different domains");
    }
    Ok(())
}

/// Global model: column `j < N` is `cos(k_j x)`, column `N + j` is `sin(k_j x)`.
pub fn assemble_plain(problem: &PdeProblem, freq: &FrequencySample, grid: &CollocationGrid) -> Result<FeatureMatrix> {
    check_grid(problem, grid)?;
    if freq.has_duplicates() {
        return Err(RfmError::Assembly(
            "duplicate frequencies make Phi rank deficient".into(),
        ));
    }
    let rows = row_tags(grid);
    let n = freq.len();
    let cols: Vec<ColTag> = (0..2 * n)
        .map(|j| ColTag {
            patch: 0,
            index: j % n,
            sine: j >= n,
        })
        .collect();
    let sg = grid.gamma.sqrt();
    let r = grid.half_width;
    let mut matrix = DMatrix::zeros(rows.len(), cols.len());
    let mut rhs = DVector::zeros(rows.len());
    for (i, tag) in rows.iter().enumerate() {
        let x = tag.x(r);
        match *tag {
            RowTag::Interior { .. } => {
                let (a, b, c) = coefficients(problem, x);
                for (j, col) in cols.iter().enumerate() {
                    let k = freq.k[col.index];
                    let d = |o| trig_derivative(col.sine, k, x, o);
                    matrix[(i, j)] = a * d(2) + b * d(1) + c * d(0);
                }
                rhs[i] = problem.f.value(x);
            }
            RowTag::Boundary { side } => {
                let (g1, g2, g) = boundary_data(problem, side);
                for (j, col) in cols.iter().enumerate() {
                    let k = freq.k[col.index];
                    matrix[(i, j)] =
                        sg * (g1 * trig_derivative(col.sine, k, x, 1) + g2 * trig_derivative(col.sine, k, x, 0));
                }
                rhs[i] = sg * g;
            }
        }
    }
    Ok(FeatureMatrix {
        matrix,
        rhs,
        rows,
        cols,
        half_width: r,
        blocks: None,
    })
}

fn coefficients(problem: &PdeProblem, x: f64) -> (f64, f64, f64) {
    (problem.op.a.value(x), problem.op.b.value(x), problem.op.c.value(x))
}

/// Patched model: columns grouped by patch, each group holding `N_p` cosines
/// then `N_p` sines of the local coordinate.
pub fn assemble_pum(
    problem: &PdeProblem,
    patches: &PatchGrid,
    locals: &[FrequencySample],
    grid: &CollocationGrid,
) -> Result<FeatureMatrix> {
    check_grid(problem, grid)?;
    if locals.len() != patches.patches + 1 {
        return arg_err(format!(
            "expected {} local frequency sets, got {}",
            patches.patches + 1,
            locals.len()
        ));
    }
    let per_patch = locals[0].len();
    if locals.iter().any(|l| l.len() != per_patch) {
        return arg_err("all patches must carry the same number of frequencies");
    }
    if locals.iter().any(FrequencySample::has_duplicates) {
        return Err(RfmError::Assembly("duplicate frequencies within a patch".into()));
    }
    let rows = row_tags(grid);
    let cols: Vec<ColTag> = (0..=patches.patches)
        .flat_map(|p| {
            (0..2 * per_patch).map(move |j| ColTag {
                patch: p,
                index: j % per_patch,
                sine: j >= per_patch,
            })
        })
        .collect();
    let r = grid.half_width;
    let rad = patches.radius();
    let sg = grid.gamma.sqrt();
    let mut zones: Vec<[Vec<usize>; 3]> = vec![Default::default(); patches.patches + 1];
    let mut matrix = DMatrix::zeros(rows.len(), cols.len());
    let mut rhs = DVector::zeros(rows.len());

    for (i, tag) in rows.iter().enumerate() {
        let x = tag.x(r);
        rhs[i] = match *tag {
            RowTag::Interior { .. } => problem.f.value(x),
            RowTag::Boundary { side } => sg * boundary_data(problem, side).2,
        };
        for p in patches.candidates(x) {
            let t = patches.local(p, x);
            let Some(zone) = Zone::of(t) else { continue };
            zones[p][zone as usize].push(i);
            let w = [pou_bump(t, 0), pou_bump(t, 1) / rad, pou_bump(t, 2) / (rad * rad)];
            for (q, &k) in locals[p].k.iter().enumerate() {
                for sine in [false, true] {
                    let v: Vec<f64> = (0..3)
                        .map(|o| trig_derivative(sine, k, t, o) / rad.powi(o as i32))
                        .collect();
                    let value = match *tag {
                        RowTag::Interior { .. } => {
                            let (a, b, c) = coefficients(problem, x);
                            a * (w[0] * v[2] + 2.0 * w[1] * v[1] + w[2] * v[0])
                                + b * (w[0] * v[1] + w[1] * v[0])
                                + c * w[0] * v[0]
                        }
                        RowTag::Boundary { side } => {
                            let (g1, g2, _) = boundary_data(problem, side);
                            sg * (g1 * (w[0] * v[1] + w[1] * v[0]) + g2 * w[0] * v[0])
                        }
                    };
                    let j = p * 2 * per_patch + q + if sine { per_patch } else { 0 };
                    matrix[(i, j)] = value;
                }
            }
        }
    }

    for (p, z) in zones.iter().enumerate() {
        if z.iter().all(Vec::is_empty) {
            return Err(RfmError::Assembly(format!("patch {p} contains no collocation point")));
        }
        if z[Zone::Plateau as usize].len() < 2 * per_patch {
            log::warn!(
                "patch {p}: plateau holds {} points for {} local columns",
                z[Zone::Plateau as usize].len(),
                2 * per_patch
            );
        }
    }
    let blocks = BlockMap {
        patches: patches.patches,
        per_patch,
        zones,
    };
    Ok(FeatureMatrix {
        matrix,
        rhs,
        rows,
        cols,
        half_width: r,
        blocks: Some(blocks),
    })
}

/// Per-patch submatrices restricted to the patch's own columns.
#[derive(Debug, Clone)]
pub struct PumBlocks {
    pub left: Vec<DMatrix<f64>>,
    pub plateau: Vec<DMatrix<f64>>,
    pub right: Vec<DMatrix<f64>>,
    /// Left ramp, plateau and right ramp stacked in that order.
    pub support: Vec<DMatrix<f64>>,
}

pub fn extract_blocks(fm: &FeatureMatrix) -> Result<PumBlocks> {
    let map = fm
        .blocks
        .as_ref()
        .ok_or_else(|| RfmError::Unsupported("block extraction needs a patched matrix".into()))?;
    let w = 2 * map.per_patch;
    let take = |rows: &[usize], p: usize| fm.matrix.select_rows(rows).columns(p * w, w).into_owned();
    let mut out = PumBlocks {
        left: vec![],
        plateau: vec![],
        right: vec![],
        support: vec![],
    };
    for p in 0..=map.patches {
        out.left.push(take(&map.zones[p][0], p));
        out.plateau.push(take(&map.zones[p][1], p));
        out.right.push(take(&map.zones[p][2], p));
        out.support.push(take(&map.support_rows(p), p));
    }
    Ok(out)
}

/// Scatters the zone blocks back into a full matrix of `nrows` rows.
pub fn reassemble(map: &BlockMap, blocks: &PumBlocks, nrows: usize) -> DMatrix<f64> {
    let w = 2 * map.per_patch;
    let mut m = DMatrix::zeros(nrows, w * (map.patches + 1));
    for p in 0..=map.patches {
        for (z, block) in [&blocks.left[p], &blocks.plateau[p], &blocks.right[p]]
            .into_iter()
            .enumerate()
        {
            for (bi, &row) in map.zones[p][z].iter().enumerate() {
                m.view_mut((row, p * w), (1, w)).copy_from(&block.row(bi));
            }
        }
    }
    m
}

/// Block-diagonal comparison matrices: all plateau blocks, the support blocks
/// of even patches, and those of odd patches.
#[derive(Debug, Clone)]
pub struct BlockDiagonals {
    pub plateau: DMatrix<f64>,
    pub even: DMatrix<f64>,
    pub odd: DMatrix<f64>,
}

impl BlockDiagonals {
    pub fn even_cols(&self) -> usize {
        self.even.ncols()
    }

    pub fn odd_cols(&self) -> usize {
        self.odd.ncols()
    }
}

pub fn block_diag<'a>(blocks: impl IntoIterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let blocks: Vec<_> = blocks.into_iter().collect();
    let (r, c) = blocks.iter().fold((0, 0), |(r, c), b| (r + b.nrows(), c + b.ncols()));
    let mut m = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        m.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    m
}

pub fn blockdiag_compare(blocks: &PumBlocks) -> BlockDiagonals {
    BlockDiagonals {
        plateau: block_diag(&blocks.plateau),
        even: block_diag(blocks.support.iter().step_by(2)),
        odd: block_diag(blocks.support.iter().skip(1).step_by(2)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_frequencies, sample_patch_frequencies};
    use crate::problem::{make_manufactured, ManufacturedSolution, OperatorSpec};

    fn problem(r: f64, a: f64, b: f64, c: f64) -> PdeProblem {
        let op = OperatorSpec::constant_coefficients(r, a, b, c).unwrap();
        make_manufactured(&op, ManufacturedSolution::parse("sin(3*x) + exp(x)").unwrap())
    }

    #[test]
    fn grid_layout() {
        assert!(equidistant_grid(2, 1.0, 1.0).is_err());
        let g = equidistant_grid(5, 1.0, 1.0).unwrap();
        assert_eq!(g.interior, vec![-0.5, 0.0, 0.5]);
        assert_eq!(g.rows(), 5);
    }

    #[test]
    fn plain_entries_match_pointwise_operator() {
        let p = problem(0.5, 1.0, 0.3, -1.0);
        let freq = sample_frequencies(18, 1.0, 3).unwrap();
        let g = equidistant_grid(200, 0.5, 1.0).unwrap();
        let fm = assemble_plain(&p, &freq, &g).unwrap();
        assert_eq!(fm.matrix.shape(), (200, 36));
        let mut sq = 0.0;
        for i in 0..198 {
            let x = g.interior[i];
            for j in 0..36 {
                let (k, sine) = (freq.k[j % 18], j >= 18);
                let f = |o| trig_derivative(sine, k, x, o);
                let want = f(2) + 0.3 * f(1) - f(0);
                assert!((fm.matrix[(i, j)] - want).abs() <= 1e-13);
                sq += want * want;
            }
        }
        for j in 0..36 {
            for (row, x) in [(198, -0.5), (199, 0.5)] {
                let want = trig_derivative(j >= 18, freq.k[j % 18], x, 0);
                assert!((fm.matrix[(row, j)] - want).abs() <= 1e-15);
                sq += want * want;
            }
        }
        assert!((fm.frobenius() - sq.sqrt()).abs() <= 1e-12 * sq.sqrt());
    }

    #[test]
    fn duplicate_frequencies_rejected() {
        let p = problem(0.5, 1.0, 0.0, 0.0);
        let freq = FrequencySample {
            k: vec![0.3, 0.3],
            band: 1.0,
            seed: 0,
        };
        let g = equidistant_grid(20, 0.5, 1.0).unwrap();
        assert!(matches!(assemble_plain(&p, &freq, &g), Err(RfmError::Assembly(_))));
    }

    #[test]
    fn patched_layout_and_blocks() {
        let p = problem(4.0, 1.0, 0.0, 0.0);
        let pg = PatchGrid::new(4.0, 5).unwrap();
        let locals = sample_patch_frequencies(5, 10, 1.0, 1).unwrap();
        let g = equidistant_grid(501, 4.0, 1.0).unwrap();
        let fm = assemble_pum(&p, &pg, &locals, &g).unwrap();
        assert_eq!(fm.matrix.shape(), (501, 120));
        let map = fm.blocks.as_ref().unwrap();
        for pidx in 0..=5 {
            let support: Vec<usize> = (0..501)
                .filter(|&i| {
                    let x = fm.rows[i].x(4.0);
                    (x - pg.center(pidx)).abs() < 1.25 * pg.radius()
                })
                .collect();
            let mut got = map.support_rows(pidx);
            got.sort_unstable();
            assert_eq!(got, support, "patch {pidx}");
            // every nonzero of the patch's columns lies in its support rows
            for i in 0..501 {
                if !support.contains(&i) {
                    assert!(fm.matrix.row(i).columns(pidx * 20, 20).iter().all(|v| *v == 0.0));
                }
            }
        }
        let blocks = extract_blocks(&fm).unwrap();
        assert_eq!(reassemble(map, &blocks, 501), fm.matrix);
        let bd = blockdiag_compare(&blocks);
        assert_eq!(bd.even_cols(), 60);
        assert_eq!(bd.odd_cols(), 60);
    }

    #[test]
    fn plain_matrix_has_no_blocks() {
        let p = problem(0.5, 1.0, 0.0, 0.0);
        let freq = sample_frequencies(4, 1.0, 3).unwrap();
        let g = equidistant_grid(20, 0.5, 1.0).unwrap();
        let fm = assemble_plain(&p, &freq, &g).unwrap();
        assert!(matches!(extract_blocks(&fm), Err(RfmError::Unsupported(_))));
    }

    #[test]
    fn empty_patch_rejected() {
        let p = problem(1.0, 1.0, 0.0, 0.0);
        let pg = PatchGrid::new(1.0, 20).unwrap();
        let locals = sample_patch_frequencies(20, 2, 1.0, 1).unwrap();
        let g = equidistant_grid(5, 1.0, 1.0).unwrap();
        assert!(matches!(assemble_pum(&p, &pg, &locals, &g), Err(RfmError::Assembly(_))));
    }

    #[test]
    fn triplets_list_nonzeros() {
        let p = problem(1.0, 1.0, 0.0, 0.0);
        let pg = PatchGrid::new(1.0, 2).unwrap();
        let locals = sample_patch_frequencies(2, 2, 1.0, 1).unwrap();
        let g = equidistant_grid(41, 1.0, 1.0).unwrap();
        let fm = assemble_pum(&p, &pg, &locals, &g).unwrap();
        let mut buf = Vec::new();
        fm.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let nnz = fm.matrix.iter().filter(|v| **v != 0.0).count();
        assert_eq!(text.lines().count(), nnz + 2);
        assert!(text.starts_with("# rfm-sparsity v1"));
    }
}
