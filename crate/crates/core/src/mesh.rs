//! Structured tensor-product space-time mesh over `[0, T] x [0, L_1] x ... x [0, L_d]`.
//!
//! The mesh owns two lattices:
//! - the quadrature lattice (Gauss-Legendre, `k` points per axis per cell)
//!   carrying the discontinuous physical fields, and
//! - the continuous node lattice (Gauss-Lobatto, `k + 1` nodes per axis per
//!   cell, shared across cell interfaces) carrying the multipliers.
//!
//! Flat indices are time-major, then lexicographic in space with the x axis
//! fastest: a quadrature point is `it * n_space_points + is`, with
//! `is = ix + nx * (iy + ny * iz)`, and analogously for continuous nodes.
//! Homogeneous Neumann boundary conditions are natural in every weak form used
//! here, so the mesh carries no boundary data at all.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_rule, gauss_lobatto_nodes, Rule1D};

/// User-facing mesh description.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    /// Spatial dimension, 1 to 3.
    pub dim: usize,
    /// Spatial cells per axis (`dim` entries).
    pub n_cells: Vec<usize>,
    /// Domain edge lengths per axis (`dim` entries).
    pub lengths: Vec<f64>,
    /// Time cells.
    pub n_t: usize,
    /// Terminal time `T`.
    pub t_final: f64,
    /// Polynomial degree `k >= 1` of the continuous space; the physical
    /// fields use degree `k - 1` collocated at the quadrature points.
    pub degree: usize,
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!(
                "spatial dimension must be 1..=3, got {}",
                self.dim
            )));
        }
        if self.n_cells.len() != self.dim || self.lengths.len() != self.dim {
            return Err(Error::InvalidArgument(
                "n_cells/lengths must have one entry per spatial axis".into(),
            ));
        }
        if self.n_cells.iter().any(|&n| n == 0) || self.n_t == 0 {
            return Err(Error::InvalidArgument("cell counts must be >= 1".into()));
        }
        if self.lengths.iter().any(|&l| !(l > 0.0)) || !(self.t_final > 0.0) {
            return Err(Error::InvalidArgument(
                "domain lengths and final time must be positive".into(),
            ));
        }
        if self.degree == 0 {
            return Err(Error::InvalidArgument("degree must be >= 1".into()));
        }
        Ok(())
    }
}

/// 1D lattice of mapped quadrature points with physical weights.
#[derive(Debug, Clone)]
pub struct AxisQuad {
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_cells: usize,
    pub cell_size: f64,
}

/// 1D lattice of continuous (Gauss-Lobatto) nodes, shared at cell interfaces.
#[derive(Debug, Clone)]
pub struct AxisNodes {
    pub coords: Vec<f64>,
    pub n_cells: usize,
    pub cell_size: f64,
}

fn build_axis_quad(rule: &Rule1D, n_cells: usize, length: f64) -> AxisQuad {
    let h = length / n_cells as f64;
    let k = rule.points.len();
    let mut coords = Vec::with_capacity(n_cells * k);
    let mut weights = Vec::with_capacity(n_cells * k);
    for c in 0..n_cells {
        let x0 = c as f64 * h;
        for q in 0..k {
            coords.push(x0 + h * rule.points[q]);
            weights.push(h * rule.weights[q]);
        }
    }
    AxisQuad {
        coords,
        weights,
        n_cells,
        cell_size: h,
    }
}

fn build_axis_nodes(lobatto: &[f64], n_cells: usize, length: f64) -> AxisNodes {
    let h = length / n_cells as f64;
    let k = lobatto.len() - 1;
    let mut coords = Vec::with_capacity(n_cells * k + 1);
    coords.push(0.0);
    for c in 0..n_cells {
        let x0 = c as f64 * h;
        for node in lobatto.iter().skip(1) {
            coords.push(x0 + h * node);
        }
    }
    // Snap the final shared node exactly onto the domain edge.
    *coords.last_mut().unwrap() = length;
    AxisNodes {
        coords,
        n_cells,
        cell_size: h,
    }
}

/// The built mesh with all lattices and cached counts.
#[derive(Debug, Clone)]
pub struct SpaceTimeMesh {
    pub spec: MeshSpec,
    /// Temporal quadrature lattice (coords `tau`, weights `theta`).
    pub time_quad: AxisQuad,
    /// Spatial quadrature lattices per axis (x, y, z order).
    pub space_quad: Vec<AxisQuad>,
    /// Product weights `lambda_j` over the flattened spatial lattice.
    pub spatial_weights: Vec<f64>,
    /// Temporal continuous node lattice.
    pub time_nodes: AxisNodes,
    /// Spatial continuous node lattices per axis.
    pub space_nodes: Vec<AxisNodes>,
    /// Reference `k`-point Gauss-Legendre rule on `[0, 1]`.
    pub ref_rule: Rule1D,
    /// Reference Gauss-Lobatto nodes on `[0, 1]` (`k + 1` of them).
    pub ref_lobatto: Vec<f64>,
    n_space_qpts: usize,
    n_time_qpts: usize,
    cg_dofs: usize,
}

/// Builds the mesh lattices and index maps for a validated spec.
pub fn build_mesh(spec: &MeshSpec) -> Result<SpaceTimeMesh> {
    spec.validate()?;
    let k = spec.degree;

    // Reject oversized index spaces before any lattice is allocated.
    let overflow = || Error::ResourceLimit("quadrature index space overflow".into());
    let axis_pts = |n: usize| n.checked_mul(k).ok_or_else(overflow);
    let mut space_total: usize = 1;
    for &n in &spec.n_cells {
        space_total = space_total
            .checked_mul(axis_pts(n)?.checked_add(1).ok_or_else(overflow)?)
            .ok_or_else(overflow)?;
    }
    axis_pts(spec.n_t)?
        .checked_add(1)
        .ok_or_else(overflow)?
        .checked_mul(space_total)
        .ok_or_else(overflow)?;

    let rule = gauss_legendre_rule(k)?;
    let lobatto = gauss_lobatto_nodes(k)?;

    let time_quad = build_axis_quad(&rule, spec.n_t, spec.t_final);
    let time_nodes = build_axis_nodes(&lobatto, spec.n_t, spec.t_final);
    let mut space_quad = Vec::with_capacity(spec.dim);
    let mut space_nodes = Vec::with_capacity(spec.dim);
    for a in 0..spec.dim {
        space_quad.push(build_axis_quad(&rule, spec.n_cells[a], spec.lengths[a]));
        space_nodes.push(build_axis_nodes(&lobatto, spec.n_cells[a], spec.lengths[a]));
    }

    let mut n_space_qpts: usize = 1;
    let mut cg_space: usize = 1;
    for a in 0..spec.dim {
        n_space_qpts = n_space_qpts
            .checked_mul(space_quad[a].coords.len())
            .ok_or_else(|| Error::ResourceLimit("spatial quadrature index overflow".into()))?;
        cg_space = cg_space
            .checked_mul(space_nodes[a].coords.len())
            .ok_or_else(|| Error::ResourceLimit("continuous node index overflow".into()))?;
    }
    let n_time_qpts = time_quad.coords.len();
    n_time_qpts
        .checked_mul(n_space_qpts)
        .ok_or_else(|| Error::ResourceLimit("space-time quadrature index overflow".into()))?;
    let cg_dofs = cg_space
        .checked_mul(time_nodes.coords.len())
        .ok_or_else(|| Error::ResourceLimit("continuous dof index overflow".into()))?;

    // lambda_j as a flattened product over [z, y, x] (x fastest).
    let mut spatial_weights = vec![1.0; n_space_qpts];
    let dims: Vec<usize> = (0..spec.dim).map(|a| space_quad[a].coords.len()).collect();
    for j in 0..n_space_qpts {
        let mut rem = j;
        let mut w = 1.0;
        for (a, dim_len) in dims.iter().enumerate() {
            let ia = rem % dim_len;
            rem /= dim_len;
            w *= space_quad[a].weights[ia];
        }
        spatial_weights[j] = w;
    }

    Ok(SpaceTimeMesh {
        spec: spec.clone(),
        time_quad,
        space_quad,
        spatial_weights,
        time_nodes,
        space_nodes,
        ref_rule: rule,
        ref_lobatto: lobatto,
        n_space_qpts,
        n_time_qpts,
        cg_dofs,
    })
}

impl SpaceTimeMesh {
    /// `(n_time_points, n_space_points)` of the discontinuous quadrature lattice.
    pub fn dg_point_count(&self) -> (usize, usize) {
        (self.n_time_qpts, self.n_space_qpts)
    }

    /// Total space-time quadrature points.
    pub fn dg_total_points(&self) -> usize {
        self.n_time_qpts * self.n_space_qpts
    }

    /// Number of continuous (multiplier) degrees of freedom.
    pub fn cg_dof_count(&self) -> usize {
        self.cg_dofs
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Domain volume.
    pub fn volume(&self) -> f64 {
        self.spec.lengths.iter().product()
    }

    /// Row-major shape of a continuous coefficient tensor: `[t, (z,) (y,) x]`.
    pub fn cg_shape(&self) -> Vec<usize> {
        let mut shape = vec![self.time_nodes.coords.len()];
        for a in (0..self.spec.dim).rev() {
            shape.push(self.space_nodes[a].coords.len());
        }
        shape
    }

    /// Row-major shape of a quadrature-value tensor: `[t, (z,) (y,) x]`.
    pub fn dg_shape(&self) -> Vec<usize> {
        let mut shape = vec![self.n_time_qpts];
        for a in (0..self.spec.dim).rev() {
            shape.push(self.space_quad[a].coords.len());
        }
        shape
    }

    /// Row-major shape of the spatial quadrature lattice alone.
    pub fn dg_space_shape(&self) -> Vec<usize> {
        (0..self.spec.dim)
            .rev()
            .map(|a| self.space_quad[a].coords.len())
            .collect()
    }

    /// Row-major shape of the spatial continuous lattice alone.
    pub fn cg_space_shape(&self) -> Vec<usize> {
        (0..self.spec.dim)
            .rev()
            .map(|a| self.space_nodes[a].coords.len())
            .collect()
    }

    /// Coordinates of spatial quadrature point `j`, padded with zeros beyond `dim`.
    pub fn spatial_point(&self, j: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut rem = j;
        for a in 0..self.spec.dim {
            let n = self.space_quad[a].coords.len();
            out[a] = self.space_quad[a].coords[rem % n];
            rem /= n;
        }
        out
    }

    /// All spatial quadrature coordinates in lattice order.
    pub fn spatial_quad_coords(&self) -> Vec<[f64; 3]> {
        (0..self.n_space_qpts).map(|j| self.spatial_point(j)).collect()
    }

    /// All temporal quadrature coordinates.
    pub fn temporal_quad_coords(&self) -> &[f64] {
        &self.time_quad.coords
    }

    /// Space-time quadrature weight `theta_i * lambda_j`.
    #[inline]
    pub fn st_weight(&self, it: usize, is: usize) -> f64 {
        self.time_quad.weights[it] * self.spatial_weights[is]
    }

    /// Global continuous-node indices of one space-time element, local indices
    /// row-major `[t, (z,) (y,) x]`. `cells` holds the per-axis spatial cell
    /// indices (x first); used by the dense assembly oracle and conformity tests.
    pub fn cg_element_nodes(&self, t_cell: usize, cells: &[usize]) -> Vec<usize> {
        let k = self.spec.degree;
        let d = self.spec.dim;
        let mut strides = vec![0usize; d];
        let mut stride = 1;
        for a in 0..d {
            strides[a] = stride;
            stride *= self.space_nodes[a].coords.len();
        }
        let space_total = stride;

        let mut locals: Vec<usize> = Vec::with_capacity((k + 1).pow((d + 1) as u32));
        let per_axis = k + 1;
        let mut idx = vec![0usize; d + 1];
        loop {
            // idx[0] is time-local; idx[1..] are (x, y, z)-local.
            let mut spatial = 0usize;
            for a in 0..d {
                spatial += (cells[a] * k + idx[1 + a]) * strides[a];
            }
            let t_node = t_cell * k + idx[0];
            locals.push(t_node * space_total + spatial);

            // Odometer increment, x fastest, then y, z, then time.
            let mut carry = true;
            for a in (1..=d).rev() {
                if carry {
                    idx[a] += 1;
                    if idx[a] < per_axis {
                        carry = false;
                    } else {
                        idx[a] = 0;
                    }
                }
            }
            if carry {
                idx[0] += 1;
                if idx[0] >= per_axis {
                    break;
                }
            }
        }
        // Reorder to row-major [t, z, y, x]: the odometer above produced
        // x-slowest within space; rebuild in the documented order instead.
        let mut ordered = Vec::with_capacity(locals.len());
        let mut midx = vec![0usize; d + 1]; // [t, z, y, x]
        loop {
            let t_node = t_cell * k + midx[0];
            let mut spatial = 0usize;
            for a in 0..d {
                // axis a = x is position d, y is d-1, ...
                let local = midx[d - a];
                spatial += (cells[a] * k + local) * strides[a];
            }
            ordered.push(t_node * space_total + spatial);
            let mut pos = d;
            loop {
                midx[pos] += 1;
                if midx[pos] < per_axis {
                    break;
                }
                midx[pos] = 0;
                if pos == 0 {
                    return ordered;
                }
                pos -= 1;
            }
        }
    }
}
