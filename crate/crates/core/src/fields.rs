//! Field containers and the discrete operators connecting continuous
//! multipliers to quadrature-point data.
//!
//! Physical fields are stored purely as their values at the space-time
//! Gauss-Legendre quadrature points (the nodal coefficients of the
//! discontinuous space coincide with those values). Multipliers are stored as
//! coefficients on the continuous Gauss-Lobatto lattice. `DOperator` evaluates
//! exact derivatives of the multiplier polynomials on the quadrature lattice
//! and provides the transposed scatters used in right-hand-side assembly.

use crate::error::{Error, Result};
use crate::mesh::SpaceTimeMesh;
use crate::quadrature::NodalBasis1D;
use crate::tensor::{apply_axis_blocked, apply_axis_blocked_t, CellBlocks, DenseMat};

/// Values of one species' discontinuous field at every space-time quadrature
/// point, flattened time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    pub values: Vec<f64>,
}

impl DGField {
    pub fn zeros(mesh: &SpaceTimeMesh) -> Self {
        Self {
            values: vec![0.0; mesh.dg_total_points()],
        }
    }

    pub fn from_fn(mesh: &SpaceTimeMesh, f: impl Fn(f64, [f64; 3]) -> f64) -> Self {
        let (nt, ns) = mesh.dg_point_count();
        let mut values = Vec::with_capacity(nt * ns);
        for it in 0..nt {
            let t = mesh.time_quad.coords[it];
            for is in 0..ns {
                values.push(f(t, mesh.spatial_point(is)));
            }
        }
        Self { values }
    }
}

/// Coefficients of a continuous space-time polynomial on the global
/// Gauss-Lobatto lattice, flattened time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CGField {
    pub coeffs: Vec<f64>,
}

impl CGField {
    pub fn zeros(mesh: &SpaceTimeMesh) -> Self {
        Self {
            coeffs: vec![0.0; mesh.cg_dof_count()],
        }
    }

    /// Nodal interpolation: sets each lattice coefficient to `f` at the node.
    pub fn interpolate(mesh: &SpaceTimeMesh, f: impl Fn(f64, [f64; 3]) -> f64) -> Self {
        let nt = mesh.time_nodes.coords.len();
        let spatial: usize = mesh.cg_space_shape().iter().product();
        let mut coeffs = Vec::with_capacity(nt * spatial);
        for it in 0..nt {
            let t = mesh.time_nodes.coords[it];
            for is in 0..spatial {
                coeffs.push(f(t, cg_spatial_node(mesh, is)));
            }
        }
        Self { coeffs }
    }
}

/// Spatial coordinates of continuous lattice node `is` (flat spatial index).
pub fn cg_spatial_node(mesh: &SpaceTimeMesh, is: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    let mut rem = is;
    for a in 0..mesh.dim() {
        let n = mesh.space_nodes[a].coords.len();
        out[a] = mesh.space_nodes[a].coords[rem % n];
        rem /= n;
    }
    out
}

/// Values over the spatial quadrature lattice only (terminal densities,
/// initial data samples, traces).
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalField {
    pub values: Vec<f64>,
}

impl TerminalField {
    pub fn zeros(mesh: &SpaceTimeMesh) -> Self {
        Self {
            values: vec![0.0; mesh.dg_point_count().1],
        }
    }

    pub fn constant(mesh: &SpaceTimeMesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.dg_point_count().1],
        }
    }

    pub fn from_fn(mesh: &SpaceTimeMesh, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self {
            values: (0..mesh.dg_point_count().1)
                .map(|j| f(mesh.spatial_point(j)))
                .collect(),
        }
    }
}

/// Which time face a trace lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFace {
    Initial,
    Terminal,
}

/// Per-mesh evaluation/scatter kernels between the continuous lattice and the
/// quadrature lattice.
pub struct DOperator {
    dim: usize,
    time_val: CellBlocks,
    time_der: CellBlocks,
    /// Per spatial axis (x, y, z), value and derivative blocks.
    space_val: Vec<CellBlocks>,
    space_der: Vec<CellBlocks>,
    cg_shape: Vec<usize>,
    dg_shape: Vec<usize>,
}

fn basis_blocks(
    basis: &NodalBasis1D,
    points: &[f64],
    n_cells: usize,
    jacobian: f64,
) -> Result<(CellBlocks, CellBlocks)> {
    let k = points.len();
    let mut val = DenseMat::zeros(k, basis.nodes.len());
    let mut der = DenseMat::zeros(k, basis.nodes.len());
    for (q, &x) in points.iter().enumerate() {
        for j in 0..basis.nodes.len() {
            *val.at_mut(q, j) = basis.eval(j, x)?;
            *der.at_mut(q, j) = basis.deriv(j, x)? * jacobian;
        }
    }
    Ok((
        CellBlocks {
            n_cells,
            block: val,
        },
        CellBlocks {
            n_cells,
            block: der,
        },
    ))
}

impl DOperator {
    pub fn new(mesh: &SpaceTimeMesh) -> Result<Self> {
        let basis = NodalBasis1D::new(mesh.ref_lobatto.clone())?;
        let (time_val, time_der) = basis_blocks(
            &basis,
            &mesh.ref_rule.points,
            mesh.spec.n_t,
            1.0 / mesh.time_nodes.cell_size,
        )?;
        let mut space_val = Vec::new();
        let mut space_der = Vec::new();
        for a in 0..mesh.dim() {
            let (v, d) = basis_blocks(
                &basis,
                &mesh.ref_rule.points,
                mesh.spec.n_cells[a],
                1.0 / mesh.space_nodes[a].cell_size,
            )?;
            space_val.push(v);
            space_der.push(d);
        }
        Ok(Self {
            dim: mesh.dim(),
            time_val,
            time_der,
            space_val,
            space_der,
            cg_shape: mesh.cg_shape(),
            dg_shape: mesh.dg_shape(),
        })
    }

    /// Shape position of spatial axis `a` in the `[t, (z,) (y,) x]` layout.
    #[inline]
    fn axis_pos(&self, a: usize) -> usize {
        self.dim - a
    }

    fn check_cg(&self, coeffs: &[f64]) -> Result<()> {
        let want: usize = self.cg_shape.iter().product();
        if coeffs.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "continuous field has {} coefficients, mesh wants {want}",
                coeffs.len()
            )));
        }
        Ok(())
    }

    /// Chain of blocked applies over every axis; `deriv_pos` selects which
    /// axis gets the derivative block (None = plain evaluation).
    fn forward_chain(&self, coeffs: &[f64], deriv_pos: Option<usize>) -> Vec<f64> {
        let mut shape = self.cg_shape.clone();
        let mut cur: Vec<f64> = coeffs.to_vec();
        let mut next: Vec<f64> = Vec::new();
        for pos in 0..shape.len() {
            let blocks = self.blocks_at(pos, deriv_pos == Some(pos));
            let out_len: usize =
                shape.iter().product::<usize>() / shape[pos] * blocks.point_count();
            next.resize(out_len, 0.0);
            apply_axis_blocked(blocks, &cur, &shape, pos, &mut next);
            shape[pos] = blocks.point_count();
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn transposed_chain(&self, values: &[f64], deriv_pos: Option<usize>) -> Vec<f64> {
        let mut shape = self.dg_shape.clone();
        let mut cur: Vec<f64> = values.to_vec();
        let mut next: Vec<f64> = Vec::new();
        for pos in 0..shape.len() {
            let blocks = self.blocks_at(pos, deriv_pos == Some(pos));
            let out_len: usize =
                shape.iter().product::<usize>() / shape[pos] * blocks.node_count();
            next.resize(out_len, 0.0);
            apply_axis_blocked_t(blocks, &cur, &shape, pos, &mut next);
            shape[pos] = blocks.node_count();
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn blocks_at(&self, pos: usize, deriv: bool) -> &CellBlocks {
        if pos == 0 {
            if deriv {
                &self.time_der
            } else {
                &self.time_val
            }
        } else {
            let a = self.dim - pos;
            if deriv {
                &self.space_der[a]
            } else {
                &self.space_val[a]
            }
        }
    }

    /// Values of the polynomial at every quadrature point.
    pub fn eval_values(&self, coeffs: &[f64]) -> Vec<f64> {
        self.forward_chain(coeffs, None)
    }

    /// Exact time derivative at every quadrature point.
    pub fn eval_dt(&self, coeffs: &[f64]) -> Vec<f64> {
        self.forward_chain(coeffs, Some(0))
    }

    /// Exact spatial derivative along axis `a` at every quadrature point.
    pub fn eval_grad(&self, a: usize, coeffs: &[f64]) -> Vec<f64> {
        self.forward_chain(coeffs, Some(self.axis_pos(a)))
    }

    /// Transposes of the three evaluations: accumulate weighted quadrature
    /// values against every continuous basis function.
    pub fn scatter_values(&self, weighted: &[f64]) -> Vec<f64> {
        self.transposed_chain(weighted, None)
    }

    pub fn scatter_dt(&self, weighted: &[f64]) -> Vec<f64> {
        self.transposed_chain(weighted, Some(0))
    }

    pub fn scatter_grad(&self, a: usize, weighted: &[f64]) -> Vec<f64> {
        self.transposed_chain(weighted, Some(self.axis_pos(a)))
    }

    /// Spatial-only evaluation of one time slab of coefficients at the
    /// spatial quadrature points.
    fn spatial_chain(&self, slab: &[f64]) -> Vec<f64> {
        let mut shape: Vec<usize> = self.cg_shape[1..].to_vec();
        let mut cur = slab.to_vec();
        let mut next: Vec<f64> = Vec::new();
        for pos in 0..shape.len() {
            let a = (self.dim - 1) - pos;
            let blocks = &self.space_val[a];
            let out_len: usize =
                shape.iter().product::<usize>() / shape[pos] * blocks.point_count();
            next.resize(out_len, 0.0);
            apply_axis_blocked(blocks, &cur, &shape, pos, &mut next);
            shape[pos] = blocks.point_count();
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn spatial_chain_t(&self, weighted: &[f64], dg_space_shape: &[usize]) -> Vec<f64> {
        let mut shape: Vec<usize> = dg_space_shape.to_vec();
        let mut cur = weighted.to_vec();
        let mut next: Vec<f64> = Vec::new();
        for pos in 0..shape.len() {
            let a = (self.dim - 1) - pos;
            let blocks = &self.space_val[a];
            let out_len: usize =
                shape.iter().product::<usize>() / shape[pos] * blocks.node_count();
            next.resize(out_len, 0.0);
            apply_axis_blocked_t(blocks, &cur, &shape, pos, &mut next);
            shape[pos] = blocks.node_count();
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Number of continuous spatial nodes per time slab.
    fn slab_len(&self) -> usize {
        self.cg_shape[1..].iter().product()
    }

    fn slab_range(&self, face: TimeFace) -> std::ops::Range<usize> {
        let s = self.slab_len();
        match face {
            TimeFace::Initial => 0..s,
            TimeFace::Terminal => {
                let total: usize = self.cg_shape.iter().product();
                total - s..total
            }
        }
    }

    /// Trace of a continuous field on a time face, evaluated at the spatial
    /// quadrature points. Exact: the Lobatto lattice contains both endpoints,
    /// so the trace is a lattice restriction.
    pub fn trace(&self, coeffs: &[f64], face: TimeFace) -> Vec<f64> {
        self.spatial_chain(&coeffs[self.slab_range(face)])
    }

    /// Transpose of `trace`: embeds the weighted spatial scatter into the
    /// matching time slab of an otherwise zero coefficient vector.
    pub fn scatter_trace(&self, weighted_spatial: &[f64], face: TimeFace) -> Vec<f64> {
        let dg_space: Vec<usize> = self.dg_shape[1..].to_vec();
        let slab = self.spatial_chain_t(weighted_spatial, &dg_space);
        let total: usize = self.cg_shape.iter().product();
        let mut out = vec![0.0; total];
        out[self.slab_range(face)].copy_from_slice(&slab);
        out
    }

    /// Adds `scale * Ms_slab` into the matching slab of `target`, where
    /// `slab` holds spatially scattered coefficients. Used for exact-mass
    /// terminal couplings.
    pub fn add_into_slab(&self, target: &mut [f64], slab: &[f64], face: TimeFace, scale: f64) {
        let range = self.slab_range(face);
        for (t, s) in target[range].iter_mut().zip(slab) {
            *t += scale * s;
        }
    }

    /// Extracts the coefficients of a time slab (spatial continuous lattice).
    pub fn slab(&self, coeffs: &[f64], face: TimeFace) -> Vec<f64> {
        coeffs[self.slab_range(face)].to_vec()
    }
}

/// Spec-shaped wrapper: exact `(d/dt, grad)` of a multiplier at every
/// quadrature point.
pub fn eval_d(dop: &DOperator, mesh: &SpaceTimeMesh, phi: &CGField) -> Result<(DGField, Vec<DGField>)> {
    dop.check_cg(&phi.coeffs)?;
    let dt = DGField {
        values: dop.eval_dt(&phi.coeffs),
    };
    let grad = (0..mesh.dim())
        .map(|a| DGField {
            values: dop.eval_grad(a, &phi.coeffs),
        })
        .collect();
    Ok((dt, grad))
}

/// Reaction-weighted multiplier combinations at every quadrature point:
/// output `p` is `sum_i gamma[i][p] * phi_i`.
pub fn apply_gamma_t(
    dop: &DOperator,
    phis: &[CGField],
    gamma: &DenseMat,
) -> Result<Vec<DGField>> {
    if phis.len() != gamma.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} multipliers for a {}-species reaction matrix",
            phis.len(),
            gamma.rows
        )));
    }
    let vals: Vec<Vec<f64>> = phis
        .iter()
        .map(|phi| {
            dop.check_cg(&phi.coeffs)?;
            Ok(dop.eval_values(&phi.coeffs))
        })
        .collect::<Result<_>>()?;
    let len = vals.first().map_or(0, |v| v.len());
    let mut out = Vec::with_capacity(gamma.cols);
    for p in 0..gamma.cols {
        let mut acc = vec![0.0; len];
        for (i, vi) in vals.iter().enumerate() {
            let g = gamma.at(i, p);
            if g != 0.0 {
                for (o, &v) in acc.iter_mut().zip(vi) {
                    *o += g * v;
                }
            }
        }
        out.push(DGField { values: acc });
    }
    Ok(out)
}

/// Spec-shaped trace wrapper.
pub fn trace_at_time(dop: &DOperator, phi: &CGField, face: TimeFace) -> Result<TerminalField> {
    dop.check_cg(&phi.coeffs)?;
    Ok(TerminalField {
        values: dop.trace(&phi.coeffs, face),
    })
}

/// Discrete space-time inner product: `sum_q theta lambda a(q) b(q)`.
pub fn inner_dg(mesh: &SpaceTimeMesh, a: &DGField, b: &DGField) -> Result<f64> {
    let total = mesh.dg_total_points();
    if a.values.len() != total || b.values.len() != total {
        return Err(Error::ShapeMismatch("space-time quadrature field".into()));
    }
    let (nt, ns) = mesh.dg_point_count();
    let mut sum = 0.0;
    for it in 0..nt {
        let theta = mesh.time_quad.weights[it];
        let row_a = &a.values[it * ns..(it + 1) * ns];
        let row_b = &b.values[it * ns..(it + 1) * ns];
        let mut inner = 0.0;
        for j in 0..ns {
            inner += mesh.spatial_weights[j] * row_a[j] * row_b[j];
        }
        sum += theta * inner;
    }
    Ok(sum)
}

fn spatial_inner(mesh: &SpaceTimeMesh, a: &TerminalField, b: &TerminalField) -> Result<f64> {
    let ns = mesh.dg_point_count().1;
    if a.values.len() != ns || b.values.len() != ns {
        return Err(Error::ShapeMismatch("spatial quadrature field".into()));
    }
    Ok((0..ns)
        .map(|j| mesh.spatial_weights[j] * a.values[j] * b.values[j])
        .sum())
}

/// Weighted spatial pairing against a trace at `t = T`.
pub fn terminal_inner(mesh: &SpaceTimeMesh, a: &TerminalField, phi_at_t: &TerminalField) -> Result<f64> {
    spatial_inner(mesh, a, phi_at_t)
}

/// Weighted spatial pairing against a trace at `t = 0`.
pub fn initial_inner(mesh: &SpaceTimeMesh, a: &TerminalField, phi_at_0: &TerminalField) -> Result<f64> {
    spatial_inner(mesh, a, phi_at_0)
}

/// `sum_j lambda_j |a_j|`.
pub fn l1_norm_spatial(mesh: &SpaceTimeMesh, a: &TerminalField) -> f64 {
    a.values
        .iter()
        .zip(&mesh.spatial_weights)
        .map(|(&v, &w)| w * v.abs())
        .sum()
}

/// Pointwise multiply by the space-time quadrature weights.
pub fn weighted_st(mesh: &SpaceTimeMesh, values: &[f64]) -> Vec<f64> {
    let (nt, ns) = mesh.dg_point_count();
    debug_assert_eq!(values.len(), nt * ns);
    let mut out = Vec::with_capacity(values.len());
    for it in 0..nt {
        let theta = mesh.time_quad.weights[it];
        for j in 0..ns {
            out.push(theta * mesh.spatial_weights[j] * values[it * ns + j]);
        }
    }
    out
}

/// Pointwise multiply by the spatial quadrature weights.
pub fn weighted_spatial(mesh: &SpaceTimeMesh, values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(&mesh.spatial_weights)
        .map(|(&v, &w)| v * w)
        .collect()
}

/// Polynomial point sampler for discontinuous fields (snapshots, probes).
/// Cell ownership is half-open; the domain's far faces belong to the last cell.
pub struct DgSampler<'a> {
    mesh: &'a SpaceTimeMesh,
    basis: NodalBasis1D,
}

impl<'a> DgSampler<'a> {
    pub fn new(mesh: &'a SpaceTimeMesh) -> Result<Self> {
        Ok(Self {
            mesh,
            basis: NodalBasis1D::new(mesh.ref_rule.points.clone())?,
        })
    }

    fn axis_basis(&self, coord: f64, n_cells: usize, h: f64) -> (usize, Vec<f64>) {
        let c = ((coord / h).floor() as usize).min(n_cells - 1);
        let xi = (coord - c as f64 * h) / h;
        let k = self.basis.nodes.len();
        let vals = (0..k).map(|j| self.basis.eval(j, xi).unwrap()).collect();
        (c, vals)
    }

    /// Evaluates a space-time quadrature field at `(t, point)`.
    pub fn eval(&self, field: &DGField, t: f64, point: [f64; 3]) -> f64 {
        let mesh = self.mesh;
        let k = mesh.spec.degree;
        let (ct, bt) = self.axis_basis(t, mesh.spec.n_t, mesh.time_quad.cell_size);
        let mut axes: Vec<(usize, Vec<f64>)> = Vec::with_capacity(mesh.dim());
        for a in 0..mesh.dim() {
            axes.push(self.axis_basis(
                point[a],
                mesh.spec.n_cells[a],
                mesh.space_quad[a].cell_size,
            ));
        }
        let ns = mesh.dg_point_count().1;
        let mut sum = 0.0;
        // Odometer over the k^(d+1) local tensor basis.
        let mut idx = vec![0usize; mesh.dim() + 1];
        loop {
            let mut w = bt[idx[0]];
            let mut spatial = 0usize;
            let mut stride = 1usize;
            for a in 0..mesh.dim() {
                let (cell, ref bv) = axes[a];
                w *= bv[idx[a + 1]];
                spatial += (cell * k + idx[a + 1]) * stride;
                stride *= mesh.space_quad[a].coords.len();
            }
            sum += w * field.values[(ct * k + idx[0]) * ns + spatial];
            let mut pos = mesh.dim();
            loop {
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
                if pos == 0 {
                    return sum;
                }
                pos -= 1;
            }
        }
    }

    /// Evaluates a spatial quadrature field at `point`.
    pub fn eval_terminal(&self, field: &TerminalField, point: [f64; 3]) -> f64 {
        let mesh = self.mesh;
        let k = mesh.spec.degree;
        let mut axes: Vec<(usize, Vec<f64>)> = Vec::with_capacity(mesh.dim());
        for a in 0..mesh.dim() {
            axes.push(self.axis_basis(
                point[a],
                mesh.spec.n_cells[a],
                mesh.space_quad[a].cell_size,
            ));
        }
        let mut sum = 0.0;
        let mut idx = vec![0usize; mesh.dim()];
        loop {
            let mut w = 1.0;
            let mut spatial = 0usize;
            let mut stride = 1usize;
            for a in 0..mesh.dim() {
                let (cell, ref bv) = axes[a];
                w *= bv[idx[a]];
                spatial += (cell * k + idx[a]) * stride;
                stride *= mesh.space_quad[a].coords.len();
            }
            sum += w * field.values[spatial];
            let mut pos = mesh.dim() - 1;
            loop {
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
                if pos == 0 {
                    return sum;
                }
                pos -= 1;
            }
        }
    }
}
