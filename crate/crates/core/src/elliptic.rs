//! The step-1 space-time elliptic problem: one fixed SPD operator shared by
//! all species and all iterations, solved by preconditioned conjugate
//! gradients.
//!
//! On a tensor-product mesh the bilinear form
//! `(du/dt, dv/dt) + (grad u, grad v) + c (u, v) + <u, v>_{t=T}`
//! is a sum of Kronecker products of small 1D mass/stiffness matrices, so the
//! operator is applied axis by axis and never materialized. The same
//! structure yields an exact inverse by simultaneous diagonalization of the
//! 1D pencils (`TensorSolver`), used as a preconditioner; a plain Jacobi
//! preconditioner is also provided.
//!
//! The multiplier-multiplier terms are integrated exactly (the collocation
//! rule with `k` points per axis is rank-deficient on products of two
//! degree-`k` polynomials, which would make the operator singular). Every
//! pairing against quadrature-point data keeps the collocation rule, which is
//! exact for those integrands.

use crate::error::{Error, Result};
use crate::fields::{DOperator, TimeFace};
use crate::mesh::SpaceTimeMesh;
use crate::quadrature::{gauss_legendre_rule, NodalBasis1D};
use crate::tensor::{apply_axis, dot, DenseMat};
use nalgebra::DMatrix;

/// Exact 1D mass and stiffness matrices on one global continuous lattice.
fn assemble_axis(lobatto_ref: &[f64], n_cells: usize, h: f64) -> Result<(DenseMat, DenseMat)> {
    let k = lobatto_ref.len() - 1;
    let basis = NodalBasis1D::new(lobatto_ref.to_vec())?;
    // k+2 points integrate the degree-2k mass integrand exactly.
    let rule = gauss_legendre_rule(k + 2)?;
    let mut local_m = DenseMat::zeros(k + 1, k + 1);
    let mut local_a = DenseMat::zeros(k + 1, k + 1);
    for (q, &x) in rule.points.iter().enumerate() {
        let w = rule.weights[q];
        for i in 0..=k {
            let vi = basis.eval(i, x)?;
            let di = basis.deriv(i, x)?;
            for j in 0..=k {
                let vj = basis.eval(j, x)?;
                let dj = basis.deriv(j, x)?;
                *local_m.at_mut(i, j) += w * vi * vj * h;
                *local_a.at_mut(i, j) += w * di * dj / h;
            }
        }
    }
    let n = n_cells * k + 1;
    let mut mass = DenseMat::zeros(n, n);
    let mut stiff = DenseMat::zeros(n, n);
    for cell in 0..n_cells {
        let base = cell * k;
        for i in 0..=k {
            for j in 0..=k {
                *mass.at_mut(base + i, base + j) += local_m.at(i, j);
                *stiff.at_mut(base + i, base + j) += local_a.at(i, j);
            }
        }
    }
    Ok((mass, stiff))
}

/// The assembled operator in Kronecker form.
pub struct EllipticOperator {
    dim: usize,
    shape: Vec<usize>,
    time_mass: DenseMat,
    /// Time block `A_t + c M_t (+ e_T e_T^t)`.
    b_time: DenseMat,
    space_mass: Vec<DenseMat>,
    space_stiff: Vec<DenseMat>,
    pub c: f64,
    /// Whether the terminal pairing `<u, v>_{t=T}` is part of the form.
    pub terminal: bool,
    diag: Vec<f64>,
}

/// Assembles the operator for mass coefficient `c > 0`; `terminal` adds the
/// `t = T` face pairing (present in barycenter mode, dropped in fixed-endpoint
/// mode).
pub fn assemble_operator(mesh: &SpaceTimeMesh, c: f64, terminal: bool) -> Result<EllipticOperator> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(
            "mass coefficient must be positive".into(),
        ));
    }
    let (time_mass, time_stiff) = assemble_axis(
        &mesh.ref_lobatto,
        mesh.spec.n_t,
        mesh.time_nodes.cell_size,
    )?;
    let nt = time_mass.rows;
    let mut b_time = DenseMat::zeros(nt, nt);
    for i in 0..nt {
        for j in 0..nt {
            *b_time.at_mut(i, j) = time_stiff.at(i, j) + c * time_mass.at(i, j);
        }
    }
    if terminal {
        *b_time.at_mut(nt - 1, nt - 1) += 1.0;
    }

    let mut space_mass = Vec::new();
    let mut space_stiff = Vec::new();
    for a in 0..mesh.dim() {
        let (m, s) = assemble_axis(
            &mesh.ref_lobatto,
            mesh.spec.n_cells[a],
            mesh.space_nodes[a].cell_size,
        )?;
        space_mass.push(m);
        space_stiff.push(s);
    }

    let mut op = EllipticOperator {
        dim: mesh.dim(),
        shape: mesh.cg_shape(),
        time_mass,
        b_time,
        space_mass,
        space_stiff,
        c,
        terminal,
        diag: Vec::new(),
    };
    op.diag = op.build_diagonal();
    Ok(op)
}

impl EllipticOperator {
    pub fn dofs(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    fn axis_pos(&self, a: usize) -> usize {
        self.dim - a
    }

    /// Applies square matrices along the listed shape positions in turn.
    fn chain(&self, x: &[f64], mats: &[(usize, &DenseMat)]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; x.len()];
        for &(pos, mat) in mats {
            apply_axis(mat, &cur, &self.shape, pos, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// `A x` for the full space-time form.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dofs());
        // (A_t + c M_t + E_T) (x) M_s-in-space
        let mut mats: Vec<(usize, &DenseMat)> = vec![(0, &self.b_time)];
        for a in 0..self.dim {
            mats.push((self.axis_pos(a), &self.space_mass[a]));
        }
        let mut out = self.chain(x, &mats);
        // M_t (x) [sum over axes of stiffness on that axis, mass elsewhere]
        for stiff_axis in 0..self.dim {
            let mut mats: Vec<(usize, &DenseMat)> = vec![(0, &self.time_mass)];
            for a in 0..self.dim {
                let m = if a == stiff_axis {
                    &self.space_stiff[a]
                } else {
                    &self.space_mass[a]
                };
                mats.push((self.axis_pos(a), m));
            }
            let term = self.chain(x, &mats);
            for (o, t) in out.iter_mut().zip(&term) {
                *o += t;
            }
        }
        out
    }

    /// Exact space-time mass application `M_t (x) M_s` (species coupling).
    pub fn apply_mass(&self, x: &[f64]) -> Vec<f64> {
        let mut mats: Vec<(usize, &DenseMat)> = vec![(0, &self.time_mass)];
        for a in 0..self.dim {
            mats.push((self.axis_pos(a), &self.space_mass[a]));
        }
        self.chain(x, &mats)
    }

    /// Exact spatial mass application on one time-slab coefficient vector.
    pub fn apply_spatial_mass(&self, slab: &[f64]) -> Vec<f64> {
        let shape: Vec<usize> = self.shape[1..].to_vec();
        let mut cur = slab.to_vec();
        let mut next = vec![0.0; slab.len()];
        for pos in 0..shape.len() {
            let a = (self.dim - 1) - pos;
            apply_axis(&self.space_mass[a], &cur, &shape, pos, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn build_diagonal(&self) -> Vec<f64> {
        let bt: Vec<f64> = self.b_time.diagonal();
        let mt: Vec<f64> = self.time_mass.diagonal();
        let sm: Vec<Vec<f64>> = self.space_mass.iter().map(|m| m.diagonal()).collect();
        let ss: Vec<Vec<f64>> = self.space_stiff.iter().map(|m| m.diagonal()).collect();
        let mut diag = vec![0.0; self.dofs()];
        let spatial_total: usize = self.shape[1..].iter().product();
        for (g, dv) in diag.iter_mut().enumerate() {
            let it = g / spatial_total;
            let mut rem = g % spatial_total;
            // Decompose x-fastest.
            let mut mass_prod = 1.0;
            let mut stiff_sum = 0.0;
            let mut axis_mass = [0.0; 3];
            let mut axis_stiff = [0.0; 3];
            for a in 0..self.dim {
                let n = sm[a].len();
                let ia = rem % n;
                rem /= n;
                axis_mass[a] = sm[a][ia];
                axis_stiff[a] = ss[a][ia];
                mass_prod *= sm[a][ia];
            }
            for a in 0..self.dim {
                let mut term = axis_stiff[a];
                for b in 0..self.dim {
                    if b != a {
                        term *= axis_mass[b];
                    }
                }
                stiff_sum += term;
            }
            *dv = bt[it] * mass_prod + mt[it] * stiff_sum;
        }
        diag
    }

    pub fn jacobi_diagonal(&self) -> &[f64] {
        &self.diag
    }
}

/// Exact inverse by simultaneous diagonalization of the per-axis pencils
/// (`B_t`, `M_t`) and (`A_a`, `M_a`): in the transformed basis the operator
/// is diagonal with entries `lambda_t + sum_a lambda_a`.
pub struct TensorSolver {
    /// Forward transforms `Z^t` per shape position.
    fwd: Vec<DenseMat>,
    /// Backward transforms `Z` per shape position.
    bwd: Vec<DenseMat>,
    inv_diag: Vec<f64>,
    shape: Vec<usize>,
}

/// Solves the symmetric-definite generalized eigenproblem `S z = lambda M z`
/// with `M` SPD; returns eigenvalues and `Z` with `Z^t M Z = I`.
fn generalized_eig(s: &DenseMat, m: &DenseMat) -> Result<(Vec<f64>, DenseMat)> {
    let n = s.rows;
    let sm = DMatrix::from_row_slice(n, n, &s.data);
    let mm = DMatrix::from_row_slice(n, n, &m.data);
    let chol = mm
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let a1 = l
        .solve_lower_triangular(&sm)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let a2 = l
        .solve_lower_triangular(&a1.transpose())
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let sym = 0.5 * (&a2 + a2.transpose());
    let eig = sym.symmetric_eigen();
    let z = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let mut zd = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            *zd.at_mut(r, c) = z[(r, c)];
        }
    }
    Ok((eig.eigenvalues.iter().copied().collect(), zd))
}

impl TensorSolver {
    pub fn new(op: &EllipticOperator) -> Result<Self> {
        let (lam_t, z_t) = generalized_eig(&op.b_time, &op.time_mass)?;
        let mut axis_lams: Vec<Vec<f64>> = vec![lam_t];
        let mut fwd = vec![z_t.transpose()];
        let mut bwd = vec![z_t];
        // Positions 1.. hold spatial axes in [z, y, x] order.
        for pos in 1..op.shape.len() {
            let a = op.dim - pos;
            let (lam, z) = generalized_eig(&op.space_stiff[a], &op.space_mass[a])?;
            axis_lams.push(lam);
            fwd.push(z.transpose());
            bwd.push(z);
        }
        let mut inv_diag = vec![0.0; op.dofs()];
        let shape = op.shape.clone();
        for (g, dv) in inv_diag.iter_mut().enumerate() {
            let mut rem = g;
            let mut lam = 0.0;
            for pos in (0..shape.len()).rev() {
                let n = shape[pos];
                lam += axis_lams[pos][rem % n];
                rem /= n;
            }
            if lam <= 0.0 {
                return Err(Error::Numerical(format!(
                    "nonpositive operator eigenvalue {lam}"
                )));
            }
            *dv = 1.0 / lam;
        }
        Ok(Self {
            fwd,
            bwd,
            inv_diag,
            shape,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut cur = rhs.to_vec();
        let mut next = vec![0.0; rhs.len()];
        for pos in 0..self.shape.len() {
            apply_axis(&self.fwd[pos], &cur, &self.shape, pos, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        for (v, d) in cur.iter_mut().zip(&self.inv_diag) {
            *v *= d;
        }
        for pos in 0..self.shape.len() {
            apply_axis(&self.bwd[pos], &cur, &self.shape, pos, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

/// Preconditioner choices for the conjugate-gradient solve.
pub enum Preconditioner {
    Jacobi(Vec<f64>),
    Tensor(Box<TensorSolver>),
}

impl Preconditioner {
    pub fn jacobi(op: &EllipticOperator) -> Self {
        Self::Jacobi(op.jacobi_diagonal().iter().map(|d| 1.0 / d).collect())
    }

    pub fn tensor(op: &EllipticOperator) -> Result<Self> {
        Ok(Self::Tensor(Box::new(TensorSolver::new(op)?)))
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Self::Jacobi(inv_diag) => r.iter().zip(inv_diag).map(|(&v, &d)| v * d).collect(),
            Self::Tensor(ts) => ts.solve(r),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients; stops at relative residual `tol` or
/// after `max_iter` iterations (reported, not fatal). All reductions are
/// sequential so results do not depend on the thread count.
pub fn pcg_solve(
    op: &EllipticOperator,
    pre: &Preconditioner,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveStats) {
    let n = rhs.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                converged: true,
                rel_residual: 0.0,
            },
        );
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = pre.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut stats = SolveStats {
        iterations: 0,
        converged: false,
        rel_residual: 1.0,
    };
    for it in 1..=max_iter {
        let ap = op.apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Lost positive definiteness to roundoff; bail with what we have.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / rhs_norm;
        stats.iterations = it;
        stats.rel_residual = rel;
        if rel <= tol {
            stats.converged = true;
            break;
        }
        z = pre.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    (x, stats)
}

/// Direct dense solve for tiny problems; the operator is materialized
/// column-by-column and factored by Cholesky.
pub fn dense_solve_oracle(op: &EllipticOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = op.dofs();
    if n > 2000 {
        return Err(Error::ResourceLimit(format!(
            "dense solve limited to 2000 dofs, got {n}"
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            a[(i, j)] = col[i];
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("operator is not positive definite".into()))?;
    let sol = chol.solve(&nalgebra::DVector::from_column_slice(rhs));
    Ok(sol.iter().copied().collect())
}

/// Everything the per-species right-hand side of the step-1 solve depends on.
/// All quadrature inputs are plain (unweighted) point values; weighting
/// happens inside the assembly.
pub struct RhsInputs<'a> {
    pub sigma_phi: f64,
    /// Species density at every space-time quadrature point.
    pub rho: &'a [f64],
    /// Flux components (d entries).
    pub flux: Vec<&'a [f64]>,
    /// Net reaction source for this species, `sum_p gamma[i][p] s_p`.
    pub source_net: &'a [f64],
    /// Spatial values paired at `t = T` (barycenter iterate or fixed target).
    pub terminal: &'a [f64],
    /// Initial data paired at `t = 0`.
    pub initial: &'a [f64],
    /// Pre-combined Gauss-Seidel mass coupling
    /// `sum_{j != i} -(Gamma Gamma^t)_{ij} delta_phi_j`, if any.
    pub mass_coupling: Option<&'a [f64]>,
    /// Terminal-face coupling slab `sum_{j != i} delta_phi_j(T)` (continuous
    /// spatial coefficients), barycenter mode only.
    pub terminal_coupling: Option<&'a [f64]>,
}

/// Assembles the step-1 right-hand side functional against every continuous
/// basis function via the transposed quadrature scatters.
pub fn assemble_rhs(
    op: &EllipticOperator,
    dop: &DOperator,
    mesh: &SpaceTimeMesh,
    inputs: &RhsInputs<'_>,
) -> Result<Vec<f64>> {
    let total = mesh.dg_total_points();
    let ns = mesh.dg_point_count().1;
    if inputs.rho.len() != total
        || inputs.source_net.len() != total
        || inputs.flux.len() != mesh.dim()
        || inputs.flux.iter().any(|f| f.len() != total)
        || inputs.terminal.len() != ns
        || inputs.initial.len() != ns
    {
        return Err(Error::ShapeMismatch("right-hand side inputs".into()));
    }
    let sp = inputs.sigma_phi;
    let n = op.dofs();
    let mut rhs = vec![0.0; n];

    let sub = |rhs: &mut [f64], v: Vec<f64>, scale: f64| {
        for (r, x) in rhs.iter_mut().zip(v) {
            *r += scale * x;
        }
    };

    sub(&mut rhs, dop.scatter_dt(&crate::fields::weighted_st(mesh, inputs.rho)), -sp);
    for (a, flux) in inputs.flux.iter().enumerate() {
        sub(&mut rhs, dop.scatter_grad(a, &crate::fields::weighted_st(mesh, flux)), -sp);
    }
    sub(
        &mut rhs,
        dop.scatter_values(&crate::fields::weighted_st(mesh, inputs.source_net)),
        -sp,
    );
    sub(
        &mut rhs,
        dop.scatter_trace(
            &crate::fields::weighted_spatial(mesh, inputs.terminal),
            TimeFace::Terminal,
        ),
        sp,
    );
    sub(
        &mut rhs,
        dop.scatter_trace(
            &crate::fields::weighted_spatial(mesh, inputs.initial),
            TimeFace::Initial,
        ),
        -sp,
    );
    if let Some(w) = inputs.mass_coupling {
        if w.len() != n {
            return Err(Error::ShapeMismatch("mass coupling coefficients".into()));
        }
        sub(&mut rhs, op.apply_mass(w), 1.0);
    }
    if let Some(tc) = inputs.terminal_coupling {
        let slab = op.apply_spatial_mass(tc);
        dop.add_into_slab(&mut rhs, &slab, TimeFace::Terminal, -1.0);
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CGField;
    use crate::mesh::{build_mesh, MeshSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh_1d(n: usize, n_t: usize, k: usize) -> SpaceTimeMesh {
        build_mesh(&MeshSpec {
            dim: 1,
            n_cells: vec![n],
            lengths: vec![1.0],
            n_t,
            t_final: 1.0,
            degree: k,
        })
        .unwrap()
    }

    /// Independent dense assembly for 1D meshes: explicit per-element loops
    /// over basis products with an exact quadrature rule.
    fn dense_oracle_1d(mesh: &SpaceTimeMesh, c: f64, terminal: bool) -> DMatrix<f64> {
        let k = mesh.spec.degree;
        let basis = NodalBasis1D::new(mesh.ref_lobatto.clone()).unwrap();
        let rule = gauss_legendre_rule(k + 2).unwrap();
        let n = mesh.cg_dof_count();
        let nxn = mesh.space_nodes[0].coords.len();
        let h_t = mesh.time_nodes.cell_size;
        let h_x = mesh.space_nodes[0].cell_size;
        let mut a = DMatrix::zeros(n, n);
        for t_cell in 0..mesh.spec.n_t {
            for x_cell in 0..mesh.spec.n_cells[0] {
                for (qt, &xt) in rule.points.iter().enumerate() {
                    for (qx, &xx) in rule.points.iter().enumerate() {
                        let w = h_t * rule.weights[qt] * h_x * rule.weights[qx];
                        for lt in 0..=k {
                            for lx in 0..=k {
                                let gi = (t_cell * k + lt) * nxn + x_cell * k + lx;
                                let vt_i = basis.eval(lt, xt).unwrap();
                                let dt_i = basis.deriv(lt, xt).unwrap() / h_t;
                                let vx_i = basis.eval(lx, xx).unwrap();
                                let dx_i = basis.deriv(lx, xx).unwrap() / h_x;
                                for mt in 0..=k {
                                    for mx in 0..=k {
                                        let gj = (t_cell * k + mt) * nxn + x_cell * k + mx;
                                        let vt_j = basis.eval(mt, xt).unwrap();
                                        let dt_j = basis.deriv(mt, xt).unwrap() / h_t;
                                        let vx_j = basis.eval(mx, xx).unwrap();
                                        let dx_j = basis.deriv(mx, xx).unwrap() / h_x;
                                        a[(gi, gj)] += w
                                            * (dt_i * vx_i * dt_j * vx_j
                                                + vt_i * dx_i * vt_j * dx_j
                                                + c * vt_i * vx_i * vt_j * vx_j);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if terminal {
            // Spatial mass over the t = T lattice slab.
            let t_top = mesh.spec.n_t * k; // global index of the last time node
            for x_cell in 0..mesh.spec.n_cells[0] {
                for (qx, &xx) in rule.points.iter().enumerate() {
                    let w = h_x * rule.weights[qx];
                    for lx in 0..=k {
                        let gi = t_top * nxn + x_cell * k + lx;
                        let vi = basis.eval(lx, xx).unwrap();
                        for mx in 0..=k {
                            let gj = t_top * nxn + x_cell * k + mx;
                            let vj = basis.eval(mx, xx).unwrap();
                            a[(gi, gj)] += w * vi * vj;
                        }
                    }
                }
            }
        }
        a
    }

    #[test]
    fn constant_field_sees_mass_and_terminal_terms() {
        let mesh = mesh_1d(2, 2, 1);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let ones = vec![1.0; op.dofs()];
        let au = op.apply(&ones);
        // <A 1, 1> = c T |domain| + |domain| = 2 + 1 = 3 on the unit square.
        assert_abs_diff_eq!(dot(&au, &ones), 3.0, epsilon = 1e-12);

        let zeros = vec![0.0; op.dofs()];
        assert!(op.apply(&zeros).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kronecker_apply_matches_per_element_dense_assembly() {
        for (k, n_t) in [(1usize, 5usize), (2, 2)] {
            let mesh = mesh_1d(2, n_t, k);
            let op = assemble_operator(&mesh, 2.0, true).unwrap();
            let n = op.dofs();
            if k == 1 {
                assert_eq!(n, 18);
            }
            let oracle = dense_oracle_1d(&mesh, 2.0, true);
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                let col = op.apply(&e);
                e[j] = 0.0;
                for i in 0..n {
                    assert!(
                        (col[i] - oracle[(i, j)]).abs() <= 1e-12,
                        "k={k} ({i},{j}): {} vs {}",
                        col[i],
                        oracle[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn bilinear_form_matches_analytic_integrals_2d() {
        // f = t + x + y and g = x y are represented exactly for k = 2, and
        // every term of a(f, g) has a closed form on the unit domain:
        // time term 0, gradient term 1, mass term c (1/3 + 1/8),
        // terminal term 1/4 + 1/3.
        let mesh = build_mesh(&MeshSpec {
            dim: 2,
            n_cells: vec![2, 3],
            lengths: vec![1.0, 1.0],
            n_t: 2,
            t_final: 1.0,
            degree: 2,
        })
        .unwrap();
        let c = 2.0;
        let op = assemble_operator(&mesh, c, true).unwrap();
        let f = CGField::interpolate(&mesh, |t, p| t + p[0] + p[1]);
        let g = CGField::interpolate(&mesh, |_, p| p[0] * p[1]);
        let af = op.apply(&f.coeffs);
        let got = dot(&af, &g.coeffs);
        let expect = 1.0 + c * (1.0 / 3.0 + 1.0 / 8.0) + (1.0 / 4.0 + 1.0 / 3.0);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn operator_is_symmetric_positive_definite() {
        let mesh = build_mesh(&MeshSpec {
            dim: 2,
            n_cells: vec![2, 2],
            lengths: vec![1.0, 1.3],
            n_t: 2,
            t_final: 0.8,
            degree: 2,
        })
        .unwrap();
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let au = op.apply(&u);
            let av = op.apply(&v);
            let nu = dot(&u, &u).sqrt();
            let nv = dot(&v, &v).sqrt();
            assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-12 * nu * nv);
            assert!(dot(&au, &u) > 0.0);
        }
    }

    #[test]
    fn geodesic_variant_drops_terminal_term() {
        let mesh = mesh_1d(2, 2, 1);
        let op = assemble_operator(&mesh, 1.0, false).unwrap();
        let ones = vec![1.0; op.dofs()];
        let au = op.apply(&ones);
        assert_abs_diff_eq!(dot(&au, &ones), 1.0, epsilon = 1e-12);
        let oracle = dense_oracle_1d(&mesh, 1.0, false);
        let mut e = vec![0.0; op.dofs()];
        for j in 0..op.dofs() {
            e[j] = 1.0;
            let col = op.apply(&e);
            e[j] = 0.0;
            for i in 0..op.dofs() {
                assert!((col[i] - oracle[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pcg_zero_rhs_returns_zero_in_zero_iterations() {
        let mesh = mesh_1d(2, 2, 1);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let pre = Preconditioner::jacobi(&op);
        let (x, stats) = pcg_solve(&op, &pre, &vec![0.0; op.dofs()], 1e-10, 100);
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
        assert!(stats.converged);
    }

    #[test]
    fn pcg_recovers_manufactured_solution() {
        let mesh = mesh_1d(3, 3, 2);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = op.apply(&y);
        for pre in [
            Preconditioner::jacobi(&op),
            Preconditioner::tensor(&op).unwrap(),
        ] {
            let (x, stats) = pcg_solve(&op, &pre, &rhs, 1e-12, 2000);
            assert!(stats.converged);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn tensor_preconditioner_is_an_exact_inverse() {
        let mesh = build_mesh(&MeshSpec {
            dim: 2,
            n_cells: vec![3, 2],
            lengths: vec![1.0, 1.0],
            n_t: 3,
            t_final: 1.0,
            degree: 2,
        })
        .unwrap();
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let pre = Preconditioner::tensor(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rhs: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, stats) = pcg_solve(&op, &pre, &rhs, 1e-10, 50);
        assert!(stats.converged);
        assert!(stats.iterations <= 2, "took {} iterations", stats.iterations);
        let r: Vec<f64> = op.apply(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(dot(&r, &r).sqrt() <= 1e-10 * dot(&rhs, &rhs).sqrt());
    }

    #[test]
    fn dense_oracle_contract() {
        let mesh = mesh_1d(2, 2, 1);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let ones = vec![1.0; op.dofs()];
        let rhs = op.apply(&ones);
        let x = dense_solve_oracle(&op, &rhs).unwrap();
        for v in &x {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let rhs: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xd = dense_solve_oracle(&op, &rhs).unwrap();
            let r: Vec<f64> = op.apply(&xd).iter().zip(&rhs).map(|(a, b)| a - b).collect();
            assert!(dot(&r, &r).sqrt() <= 1e-12 * dot(&rhs, &rhs).sqrt().max(1.0));
            let pre = Preconditioner::jacobi(&op);
            let (xp, stats) = pcg_solve(&op, &pre, &rhs, 1e-12, 5000);
            assert!(stats.converged);
            for (a, b) in xp.iter().zip(&xd) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn cg_error_a_norm_is_monotone() {
        let mesh = mesh_1d(2, 3, 1);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let pre = Preconditioner::jacobi(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let y: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = op.apply(&y);
        let mut prev = f64::INFINITY;
        for it in 1..=op.dofs() {
            let (x, _) = pcg_solve(&op, &pre, &rhs, 0.0, it);
            let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let ae = op.apply(&e);
            let norm = dot(&e, &ae).max(0.0).sqrt();
            assert!(norm <= prev + 1e-10, "A-norm rose at iteration {it}");
            prev = norm;
        }
    }

    #[test]
    fn rhs_all_zero_state_is_zero() {
        let mesh = mesh_1d(2, 2, 1);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let dop = DOperator::new(&mesh).unwrap();
        let total = mesh.dg_total_points();
        let ns = mesh.dg_point_count().1;
        let zero_st = vec![0.0; total];
        let zero_sp = vec![0.0; ns];
        let rhs = assemble_rhs(
            &op,
            &dop,
            &mesh,
            &RhsInputs {
                sigma_phi: 1.0,
                rho: &zero_st,
                flux: vec![&zero_st],
                source_net: &zero_st,
                terminal: &zero_sp,
                initial: &zero_sp,
                mass_coupling: None,
                terminal_coupling: None,
            },
        )
        .unwrap();
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn consistent_state_is_a_fixed_point_of_step_one() {
        // rho constant in time equal to the initial data, the terminal
        // iterate equal as well, everything else zero: the right-hand side
        // vanishes by discrete integration by parts in time.
        let mesh = mesh_1d(3, 2, 2);
        let op = assemble_operator(&mesh, 1.0, true).unwrap();
        let dop = DOperator::new(&mesh).unwrap();
        let (nt, ns) = mesh.dg_point_count();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho0: Vec<f64> = (0..ns).map(|_| rng.gen_range(0.5..2.0)).collect();
        let rho_st: Vec<f64> = (0..nt).flat_map(|_| rho0.iter().copied()).collect();
        let zero_st = vec![0.0; mesh.dg_total_points()];
        let rhs = assemble_rhs(
            &op,
            &dop,
            &mesh,
            &RhsInputs {
                sigma_phi: 1.0,
                rho: &rho_st,
                flux: vec![&zero_st],
                source_net: &zero_st,
                terminal: &rho0,
                initial: &rho0,
                mass_coupling: None,
                terminal_coupling: None,
            },
        )
        .unwrap();
        let scale = dot(&rhs, &rhs).sqrt();
        assert!(scale <= 1e-13, "residual functional norm {scale}");
        let pre = Preconditioner::tensor(&op).unwrap();
        let (delta, _) = pcg_solve(&op, &pre, &rhs, 1e-10, 100);
        assert!(delta.iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn gradient_flux_rhs_matches_first_principles_functional() {
        // With m = grad(psi0) sampled at the quadrature points and all other
        // state zero, the right-hand side entries are
        // -sigma_phi sum_q w_q m(q) d/dx basis_g(q); the oracle evaluates the
        // global basis functions directly.
        let mesh = mesh_1d(3, 2, 2);
        let op = assemble_operator(&mesh, 2.0, true).unwrap();
        let dop = DOperator::new(&mesh).unwrap();
        let psi0 = CGField::interpolate(&mesh, |t, p| (1.0 + t) * p[0] * p[0]);
        let gx = dop.eval_grad(0, &psi0.coeffs);
        let zero_st = vec![0.0; mesh.dg_total_points()];
        let zero_sp = vec![0.0; mesh.dg_point_count().1];
        let sigma = 0.7;
        let rhs = assemble_rhs(
            &op,
            &dop,
            &mesh,
            &RhsInputs {
                sigma_phi: sigma,
                rho: &zero_st,
                flux: vec![&gx],
                source_net: &zero_st,
                terminal: &zero_sp,
                initial: &zero_sp,
                mass_coupling: None,
                terminal_coupling: None,
            },
        )
        .unwrap();

        let basis = NodalBasis1D::new(mesh.ref_lobatto.clone()).unwrap();
        let k = mesh.spec.degree;
        let (nt, ns) = mesh.dg_point_count();
        let nxn = mesh.space_nodes[0].coords.len();
        let h_x = mesh.space_nodes[0].cell_size;
        let local = |node: usize, cell: usize| -> Option<usize> {
            let lo = cell * k;
            (lo..=lo + k).contains(&node).then(|| node - lo)
        };
        for g in 0..op.dofs() {
            let (g_t, g_x) = (g / nxn, g % nxn);
            let mut sum = 0.0;
            for it in 0..nt {
                let Some(lt) = local(g_t, it / k) else { continue };
                let vt = basis.eval(lt, mesh.ref_rule.points[it % k]).unwrap();
                for is in 0..ns {
                    let Some(lx) = local(g_x, is / k) else { continue };
                    let dx = basis.deriv(lx, mesh.ref_rule.points[is % k]).unwrap() / h_x;
                    sum += mesh.st_weight(it, is) * gx[it * ns + is] * vt * dx;
                }
            }
            let expect = -sigma * sum;
            assert!(
                (rhs[g] - expect).abs() <= 1e-12,
                "dof {g}: {} vs {expect}",
                rhs[g]
            );
        }
        assert!(dot(&rhs, &rhs).sqrt() > 1e-3);
    }
}
