//! Dense and cell-blocked 1D operators applied along one axis of a flattened
//! row-major tensor.
//!
//! Every space-time field in this crate is a flat `Vec<f64>` viewed as a
//! row-major tensor with shape `[time, (z,) (y,) x]`, x fastest. Operators on
//! the full field are tensor products of small 1D matrices, applied axis by
//! axis. Outputs are written by disjoint tasks, so parallel runs are
//! bit-identical to sequential ones.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Small dense row-major matrix.
#[derive(Debug, Clone)]
pub struct DenseMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *t.at_mut(c, r) = self.at(r, c);
            }
        }
        t
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.at(i, i)).collect()
    }
}

/// Splits `shape` at `axis` into (outer, len, inner) block sizes.
fn blocking(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `out = (I ⊗ mat ⊗ I) x` along `axis`; `mat.cols` must equal `shape[axis]`.
/// The output tensor has `shape[axis]` replaced by `mat.rows`.
pub fn apply_axis(mat: &DenseMat, x: &[f64], shape: &[usize], axis: usize, out: &mut [f64]) {
    let (outer, len, inner) = blocking(shape, axis);
    debug_assert_eq!(mat.cols, len);
    debug_assert_eq!(x.len(), outer * len * inner);
    debug_assert_eq!(out.len(), outer * mat.rows * inner);

    let kernel = |o: usize, chunk: &mut [f64]| {
        let x_block = &x[o * len * inner..(o + 1) * len * inner];
        for r in 0..mat.rows {
            let row = &mat.data[r * mat.cols..(r + 1) * mat.cols];
            let dst = &mut chunk[r * inner..(r + 1) * inner];
            dst.fill(0.0);
            for (c, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let src = &x_block[c * inner..(c + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += m * s;
                }
            }
        }
    };

    let block = mat.rows * inner;
    #[cfg(feature = "parallel")]
    if outer > 1 {
        out.par_chunks_mut(block)
            .enumerate()
            .for_each(|(o, chunk)| kernel(o, chunk));
        return;
    }
    for (o, chunk) in out.chunks_mut(block).enumerate() {
        kernel(o, chunk);
    }
}

/// One identical `rows_per_cell x cols_per_cell` block per mesh cell, with
/// adjacent cells overlapping by one column (shared continuous node).
///
/// Models the per-axis evaluation of a continuous nodal basis at the
/// quadrature points of each cell: `n_cells * rows_per_cell` point rows,
/// `n_cells * (cols_per_cell - 1) + 1` node columns.
#[derive(Debug, Clone)]
pub struct CellBlocks {
    pub n_cells: usize,
    pub block: DenseMat,
}

impl CellBlocks {
    pub fn point_count(&self) -> usize {
        self.n_cells * self.block.rows
    }

    pub fn node_count(&self) -> usize {
        self.n_cells * (self.block.cols - 1) + 1
    }
}

/// Blocked forward application (nodes -> points) along `axis`.
pub fn apply_axis_blocked(
    blocks: &CellBlocks,
    x: &[f64],
    shape: &[usize],
    axis: usize,
    out: &mut [f64],
) {
    let (outer, len, inner) = blocking(shape, axis);
    debug_assert_eq!(len, blocks.node_count());
    let rows = blocks.block.rows;
    let cols = blocks.block.cols;
    let out_len = blocks.point_count();
    debug_assert_eq!(out.len(), outer * out_len * inner);

    let kernel = |o: usize, chunk: &mut [f64]| {
        let x_block = &x[o * len * inner..(o + 1) * len * inner];
        for cell in 0..blocks.n_cells {
            let node0 = cell * (cols - 1);
            for r in 0..rows {
                let dst = &mut chunk[(cell * rows + r) * inner..(cell * rows + r + 1) * inner];
                dst.fill(0.0);
                for c in 0..cols {
                    let m = blocks.block.at(r, c);
                    if m == 0.0 {
                        continue;
                    }
                    let src = &x_block[(node0 + c) * inner..(node0 + c + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += m * s;
                    }
                }
            }
        }
    };

    let block = out_len * inner;
    #[cfg(feature = "parallel")]
    if outer > 1 {
        out.par_chunks_mut(block)
            .enumerate()
            .for_each(|(o, chunk)| kernel(o, chunk));
        return;
    }
    for (o, chunk) in out.chunks_mut(block).enumerate() {
        kernel(o, chunk);
    }
}

/// Blocked transposed application (points -> nodes) along `axis`, accumulating
/// overlapping shared-node contributions. `shape` is the shape of `x` (points
/// along `axis`).
pub fn apply_axis_blocked_t(
    blocks: &CellBlocks,
    x: &[f64],
    shape: &[usize],
    axis: usize,
    out: &mut [f64],
) {
    let (outer, len, inner) = blocking(shape, axis);
    debug_assert_eq!(len, blocks.point_count());
    let rows = blocks.block.rows;
    let cols = blocks.block.cols;
    let out_len = blocks.node_count();
    debug_assert_eq!(out.len(), outer * out_len * inner);

    let kernel = |o: usize, chunk: &mut [f64]| {
        let x_block = &x[o * len * inner..(o + 1) * len * inner];
        chunk.fill(0.0);
        for cell in 0..blocks.n_cells {
            let node0 = cell * (cols - 1);
            for r in 0..rows {
                let src = &x_block[(cell * rows + r) * inner..(cell * rows + r + 1) * inner];
                for c in 0..cols {
                    let m = blocks.block.at(r, c);
                    if m == 0.0 {
                        continue;
                    }
                    let dst = &mut chunk[(node0 + c) * inner..(node0 + c + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += m * s;
                    }
                }
            }
        }
    };

    let block = out_len * inner;
    #[cfg(feature = "parallel")]
    if outer > 1 {
        out.par_chunks_mut(block)
            .enumerate()
            .for_each(|(o, chunk)| kernel(o, chunk));
        return;
    }
    for (o, chunk) in out.chunks_mut(block).enumerate() {
        kernel(o, chunk);
    }
}

/// `y += a * x`, elementwise.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    #[cfg(feature = "parallel")]
    if y.len() >= 1 << 14 {
        y.par_iter_mut().zip(x).for_each(|(yv, &xv)| *yv += a * xv);
        return;
    }
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Sequential dot product (kept sequential so results do not depend on the
/// thread count).
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
