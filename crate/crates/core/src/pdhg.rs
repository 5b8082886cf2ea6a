//! The outer primal-dual loop: per-species elliptic ascent with Gauss-Seidel
//! splitting, multiplier extrapolation, and the pointwise primal descent
//! (terminal density update, proximal density solves, flux/source recovery),
//! plus stopping and diagnostics.
//!
//! Step 1 is sequential over species (each solve uses the newest neighbor
//! updates); step 3 is data-parallel over quadrature points. All reductions
//! are sequential over fixed-size chunks, so the iteration history is
//! bit-identical across thread counts.

use crate::elliptic::{
    assemble_operator, assemble_rhs, pcg_solve, EllipticOperator, Preconditioner, RhsInputs,
};
use crate::error::{Error, Result};
use crate::fields::{DOperator, TerminalField, TimeFace};
use crate::mesh::SpaceTimeMesh;
use crate::model::{
    log_mean_pos, prox_density_sweep_into, recover_flux_source_into, ModelParams, PointBars,
};
use crate::tensor::dot;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Points per work chunk in the primal update. Fixed (not thread-derived) so
/// accumulation order does not depend on the worker count.
const PROX_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Free shared terminal density (the barycenter).
    Barycenter,
    /// Fixed terminal targets per species; computes the squared distance.
    Geodesic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    /// Conjugate gradients with the exact tensor-diagonalization preconditioner.
    Tensor,
    /// Conjugate gradients with the Jacobi preconditioner.
    Jacobi,
}

#[derive(Debug, Clone)]
pub struct PdhgConfig {
    /// Dual proximal step size.
    pub sigma_phi: f64,
    /// Stopping tolerance on the L1 change of the terminal density
    /// (barycenter) or of the densities (geodesic).
    pub tol: f64,
    pub max_iter: usize,
    /// Full KKT diagnostics every this many iterations; the cheap error
    /// indicator is recorded every iteration.
    pub diag_every: usize,
    pub mode: Mode,
    /// Optional clamp of the terminal density at zero after its update.
    pub clamp_varrho: bool,
    pub linear_solver: LinearSolver,
    pub lin_tol: f64,
    pub lin_max_iter: usize,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        Self {
            sigma_phi: 1.0,
            tol: 1e-5,
            max_iter: 20_000,
            diag_every: 10,
            mode: Mode::Barycenter,
            clamp_varrho: false,
            linear_solver: LinearSolver::Tensor,
            lin_tol: 1e-10,
            lin_max_iter: 5000,
        }
    }
}

/// A solve instance: mesh, model, initial data (sampled at the spatial
/// quadrature points) and, in geodesic mode, the fixed terminal targets.
pub struct Problem {
    pub mesh: SpaceTimeMesh,
    pub params: ModelParams,
    pub rho0: Vec<TerminalField>,
    pub targets: Option<Vec<TerminalField>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    /// Value of the kinetic-plus-interaction objective.
    pub objective: f64,
    /// Quadrature L2 norm of `m_i/V1_i - grad phi_i` over all species.
    pub kkt_flux: f64,
    /// Quadrature L2 norm of `s_p/V2_p - (Gamma^t phi)_p`; absent when the
    /// reaction mobility is identically zero.
    pub kkt_source: Option<f64>,
    /// Max over quadrature times of the total-mass deviation from `t = 0`.
    pub mass_drift: f64,
    /// Quadrature L2 norm of `sum_i phi_i(T, .)`.
    pub phi_terminal_sum: f64,
    /// Euclidean norm of the step-1 right-hand sides at unit step size,
    /// couplings included; vanishes at a fixed point of step 1.
    pub step1_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HistoryRecord {
    pub iter: usize,
    pub err: f64,
    pub diag: Option<Diagnostics>,
}

/// All iterates. Packed layouts: densities `[q * n + i]`, fluxes
/// `[q * n * 3 + i * 3 + c]` (trailing components zero below 3 dimensions),
/// sources `[q * r + p]`, with `q` the flat space-time quadrature index.
pub struct SolverState {
    pub rho: Vec<f64>,
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    /// Terminal density iterate (barycenter mode; empty otherwise).
    pub varrho: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub delta_phi: Vec<Vec<f64>>,
    pub phi_tilde: Vec<Vec<f64>>,
    pub iter: usize,
    pub history: Vec<HistoryRecord>,
    pub converged: bool,
    /// Linear solves that hit their iteration cap.
    pub lin_failures: usize,
    rho_bar: Vec<f64>,
    m_bar: Vec<f64>,
    s_bar: Vec<f64>,
}

impl SolverState {
    pub fn final_err(&self) -> Option<f64> {
        self.history.last().map(|h| h.err)
    }

    pub fn last_diagnostics(&self) -> Option<Diagnostics> {
        self.history.iter().rev().find_map(|h| h.diag)
    }

    /// Extracts one species' density as a per-point array.
    pub fn species_density(&self, i: usize, n_species: usize) -> Vec<f64> {
        let points = self.rho.len() / n_species;
        (0..points).map(|q| self.rho[q * n_species + i]).collect()
    }
}

pub struct Solver {
    pub problem: Problem,
    pub config: PdhgConfig,
    dop: DOperator,
    op: EllipticOperator,
    pre: Preconditioner,
    /// Space-time quadrature weights per flat point index.
    w_st: Vec<f64>,
}

impl Solver {
    pub fn new(problem: Problem, config: PdhgConfig) -> Result<Self> {
        let params = &problem.params;
        params.validate()?;
        if !(config.sigma_phi > 0.0) || !(config.tol > 0.0) || config.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "need sigma_phi > 0, tol > 0, max_iter >= 1".into(),
            ));
        }
        let ns = problem.mesh.dg_point_count().1;
        if problem.rho0.len() != params.n_species {
            return Err(Error::ShapeMismatch(format!(
                "{} initial densities for {} species",
                problem.rho0.len(),
                params.n_species
            )));
        }
        if problem.rho0.iter().any(|f| f.values.len() != ns) {
            return Err(Error::ShapeMismatch("initial density sampling".into()));
        }
        match config.mode {
            Mode::Barycenter => {
                if problem.targets.is_some() {
                    return Err(Error::InvalidArgument(
                        "terminal targets are only used in geodesic mode".into(),
                    ));
                }
                if !params.conserves_mass() {
                    return Err(Error::InvalidArgument(
                        "barycenter mode needs a mass-conserving reaction matrix \
                         (columns summing to zero)"
                            .into(),
                    ));
                }
            }
            Mode::Geodesic => {
                let targets = problem.targets.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("geodesic mode needs terminal targets".into())
                })?;
                if targets.len() != params.n_species
                    || targets.iter().any(|f| f.values.len() != ns)
                {
                    return Err(Error::ShapeMismatch("terminal target sampling".into()));
                }
            }
        }
        // One fixed operator for every species: the splitting coefficient is
        // the diagonal of Gamma Gamma^t, which must be uniform.
        let c = params.gram().at(0, 0);
        for i in 1..params.n_species {
            if (params.gram().at(i, i) - c).abs() > 1e-14 {
                return Err(Error::InvalidArgument(
                    "reaction matrix must give every species the same self-coupling".into(),
                ));
            }
        }
        let op = assemble_operator(&problem.mesh, c, config.mode == Mode::Barycenter)?;
        let pre = match config.linear_solver {
            LinearSolver::Tensor => Preconditioner::tensor(&op)?,
            LinearSolver::Jacobi => Preconditioner::jacobi(&op),
        };
        let dop = DOperator::new(&problem.mesh)?;
        let (nt, nsq) = problem.mesh.dg_point_count();
        let mut w_st = Vec::with_capacity(nt * nsq);
        for it in 0..nt {
            for is in 0..nsq {
                w_st.push(problem.mesh.st_weight(it, is));
            }
        }
        Ok(Self {
            problem,
            config,
            dop,
            op,
            pre,
            w_st,
        })
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.problem.mesh
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    /// Zero multipliers and fluxes; densities extended constant in time from
    /// the (clipped) initial data; terminal iterate set to their average.
    pub fn initialize(&self) -> SolverState {
        let params = &self.problem.params;
        let mesh = &self.problem.mesh;
        let n = params.n_species;
        let r = params.n_reactions;
        let (nt, ns) = mesh.dg_point_count();
        let total = nt * ns;
        let dofs = mesh.cg_dof_count();

        let mut rho = vec![0.0; total * n];
        for it in 0..nt {
            for is in 0..ns {
                let q = it * ns + is;
                for i in 0..n {
                    rho[q * n + i] = self.problem.rho0[i].values[is].max(params.rho_min);
                }
            }
        }
        let varrho = match self.config.mode {
            Mode::Barycenter => (0..ns)
                .map(|is| {
                    let sum: f64 = (0..n)
                        .map(|i| self.problem.rho0[i].values[is].max(params.rho_min))
                        .sum();
                    sum / n as f64
                })
                .collect(),
            Mode::Geodesic => Vec::new(),
        };
        SolverState {
            rho,
            m: vec![0.0; total * n * 3],
            s: vec![0.0; total * r],
            varrho,
            phi: vec![vec![0.0; dofs]; n],
            delta_phi: vec![vec![0.0; dofs]; n],
            phi_tilde: vec![vec![0.0; dofs]; n],
            iter: 0,
            history: Vec::new(),
            converged: false,
            lin_failures: 0,
            rho_bar: vec![0.0; total * n],
            m_bar: vec![0.0; total * n * 3],
            s_bar: vec![0.0; total * r],
        }
    }

    /// Right-hand side of the step-1 solve for species `i` at step size
    /// `sigma_phi`, using whatever deltas are currently in the state (mixed
    /// new/old during the Gauss-Seidel sweep).
    fn rhs_for_species(&self, state: &SolverState, i: usize, sigma_phi: f64) -> Result<Vec<f64>> {
        let params = &self.problem.params;
        let mesh = &self.problem.mesh;
        let n = params.n_species;
        let r = params.n_reactions;
        let d = mesh.dim();
        let total = mesh.dg_total_points();

        let mut rho_i = vec![0.0; total];
        for q in 0..total {
            rho_i[q] = state.rho[q * n + i];
        }
        let mut flux: Vec<Vec<f64>> = Vec::with_capacity(d);
        for c in 0..d {
            flux.push((0..total).map(|q| state.m[(q * n + i) * 3 + c]).collect());
        }
        let mut source_net = vec![0.0; total];
        for p in 0..r {
            let g = params.gamma.at(i, p);
            if g != 0.0 {
                for q in 0..total {
                    source_net[q] += g * state.s[q * r + p];
                }
            }
        }
        // Gauss-Seidel couplings from the reaction Gram matrix and, in
        // barycenter mode, from the terminal proximal term.
        let mut mass_coupling: Option<Vec<f64>> = None;
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = -params.gram().at(i, j);
            if w != 0.0 {
                let acc = mass_coupling.get_or_insert_with(|| vec![0.0; state.phi[i].len()]);
                for (a, &dv) in acc.iter_mut().zip(&state.delta_phi[j]) {
                    *a += w * dv;
                }
            }
        }
        let terminal_coupling: Option<Vec<f64>> =
            if self.config.mode == Mode::Barycenter && n > 1 {
                let mut acc = vec![0.0; self.dop.slab(&state.phi[i], TimeFace::Terminal).len()];
                for (j, delta) in state.delta_phi.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let slab = self.dop.slab(delta, TimeFace::Terminal);
                    for (a, v) in acc.iter_mut().zip(slab) {
                        *a += v;
                    }
                }
                Some(acc)
            } else {
                None
            };
        let terminal: &[f64] = match self.config.mode {
            Mode::Barycenter => &state.varrho,
            Mode::Geodesic => &self.problem.targets.as_ref().unwrap()[i].values,
        };
        let rho0 = &self.problem.rho0[i].values;

        assemble_rhs(
            &self.op,
            &self.dop,
            mesh,
            &RhsInputs {
                sigma_phi,
                rho: &rho_i,
                flux: flux.iter().map(|f| f.as_slice()).collect(),
                source_net: &source_net,
                terminal,
                initial: rho0,
                mass_coupling: mass_coupling.as_deref(),
                terminal_coupling: terminal_coupling.as_deref(),
            },
        )
    }

    /// Step 1 and step 2: species-by-species elliptic ascent with the newest
    /// neighbor deltas, then extrapolation.
    pub fn step_phi(&self, state: &mut SolverState) -> Result<()> {
        let n = self.problem.params.n_species;
        for i in 0..n {
            let rhs = self.rhs_for_species(state, i, self.config.sigma_phi)?;
            let (delta, stats) =
                pcg_solve(&self.op, &self.pre, &rhs, self.config.lin_tol, self.config.lin_max_iter);
            if !stats.converged {
                state.lin_failures += 1;
            }
            for (p, dv) in state.phi[i].iter_mut().zip(&delta) {
                *p += dv;
            }
            state.delta_phi[i] = delta;
        }
        for i in 0..n {
            for ((t, p), dv) in state.phi_tilde[i]
                .iter_mut()
                .zip(&state.phi[i])
                .zip(&state.delta_phi[i])
            {
                *t = p + dv;
            }
        }
        Ok(())
    }

    /// Shifts the previous primal iterate by the extrapolated dual drift at
    /// every quadrature point: `rho_bar = rho + sigma_u d/dt phi_tilde`,
    /// `m_bar = m + sigma_u grad phi_tilde`,
    /// `s_bar_p = s_p + sigma_u (Gamma^t phi_tilde)_p`, written into the
    /// state's bar arrays.
    pub fn compute_ubar(&self, state: &mut SolverState) {
        let params = &self.problem.params;
        let sigma = params.sigma_u;
        let n = params.n_species;
        let r = params.n_reactions;
        let d = self.problem.mesh.dim();
        let total = self.problem.mesh.dg_total_points();

        for i in 0..n {
            let dt = self.dop.eval_dt(&state.phi_tilde[i]);
            for q in 0..total {
                state.rho_bar[q * n + i] = state.rho[q * n + i] + sigma * dt[q];
            }
            for c in 0..d {
                let g = self.dop.eval_grad(c, &state.phi_tilde[i]);
                for q in 0..total {
                    let idx = (q * n + i) * 3 + c;
                    state.m_bar[idx] = state.m[idx] + sigma * g[q];
                }
            }
            for c in d..3 {
                for q in 0..total {
                    let idx = (q * n + i) * 3 + c;
                    state.m_bar[idx] = state.m[idx];
                }
            }
        }
        let vals: Vec<Vec<f64>> = state
            .phi_tilde
            .iter()
            .map(|phi| self.dop.eval_values(phi))
            .collect();
        for p in 0..r {
            for q in 0..total {
                let mut acc = 0.0;
                for (i, vi) in vals.iter().enumerate() {
                    let g = params.gamma.at(i, p);
                    if g != 0.0 {
                        acc += g * vi[q];
                    }
                }
                state.s_bar[q * r + p] = state.s[q * r + p] + sigma * acc;
            }
        }
    }

    /// Step 3: terminal density update, dual drift, pointwise proximal
    /// solves, closed-form flux/source recovery. Returns the stopping error.
    pub fn step_primal(&self, state: &mut SolverState) -> Result<f64> {
        let params = &self.problem.params;
        let mesh = &self.problem.mesh;
        let sigma = params.sigma_u;
        let n = params.n_species;
        let r = params.n_reactions;
        let ns = mesh.dg_point_count().1;

        let mut err = 0.0;
        if self.config.mode == Mode::Barycenter {
            let mut tr_sum = vec![0.0; ns];
            for phi_t in &state.phi_tilde {
                let tr = self.dop.trace(phi_t, TimeFace::Terminal);
                for (acc, v) in tr_sum.iter_mut().zip(tr) {
                    *acc += v;
                }
            }
            for j in 0..ns {
                let mut new = state.varrho[j] - sigma * tr_sum[j];
                if self.config.clamp_varrho {
                    new = new.max(0.0);
                }
                err += mesh.spatial_weights[j] * (new - state.varrho[j]).abs();
                state.varrho[j] = new;
            }
        }

        self.compute_ubar(state);

        // Pointwise proximal solves and recovery, chunked over points.
        let want_err = self.config.mode == Mode::Geodesic;
        let rho_bar = &state.rho_bar;
        let m_bar = &state.m_bar;
        let s_bar = &state.s_bar;
        let w_st = &self.w_st;

        let kernel = |(chunk_idx, ((rho_c, m_c), s_c)): (
            usize,
            ((&mut [f64], &mut [f64]), &mut [f64]),
        )|
         -> Result<f64> {
            let q0 = chunk_idx * PROX_CHUNK;
            let points = rho_c.len() / n;
            let mut bars = PointBars::zeros(n, r);
            let mut rho_new = vec![0.0; n];
            let mut m_new = vec![[0.0; 3]; n];
            let mut s_new = vec![0.0; r];
            let mut chunk_err = 0.0;
            for ql in 0..points {
                let q = q0 + ql;
                for i in 0..n {
                    bars.rho_prev[i] = rho_c[ql * n + i];
                    bars.rho_bar[i] = rho_bar[q * n + i];
                    for c in 0..3 {
                        bars.m_bar[i][c] = m_bar[(q * n + i) * 3 + c];
                    }
                }
                for p in 0..r {
                    bars.s_bar[p] = s_bar[q * r + p];
                }
                prox_density_sweep_into(&bars, params, &mut rho_new)?;
                recover_flux_source_into(&rho_new, &bars, params, &mut m_new, &mut s_new);
                for i in 0..n {
                    assert!(
                        (params.rho_min..=params.rho_max).contains(&rho_new[i]),
                        "density left its bounds"
                    );
                    if want_err {
                        chunk_err += w_st[q] * (rho_new[i] - rho_c[ql * n + i]).abs();
                    }
                    rho_c[ql * n + i] = rho_new[i];
                    for c in 0..3 {
                        m_c[(ql * n + i) * 3 + c] = m_new[i][c];
                    }
                }
                for p in 0..r {
                    s_c[ql * r + p] = s_new[p];
                }
            }
            Ok(chunk_err)
        };

        #[cfg(feature = "parallel")]
        let chunk_errs: Result<Vec<f64>> = state
            .rho
            .par_chunks_mut(PROX_CHUNK * n)
            .zip(state.m.par_chunks_mut(PROX_CHUNK * n * 3))
            .zip(state.s.par_chunks_mut(PROX_CHUNK * r))
            .enumerate()
            .map(kernel)
            .collect();
        #[cfg(not(feature = "parallel"))]
        let chunk_errs: Result<Vec<f64>> = state
            .rho
            .chunks_mut(PROX_CHUNK * n)
            .zip(state.m.chunks_mut(PROX_CHUNK * n * 3))
            .zip(state.s.chunks_mut(PROX_CHUNK * r))
            .enumerate()
            .map(kernel)
            .collect();
        let chunk_errs = chunk_errs?;
        if want_err {
            err = chunk_errs.iter().sum();
        }
        Ok(err)
    }

    /// Runs the loop until the error indicator drops below the tolerance or
    /// the iteration cap is reached (reported via the convergence flag).
    pub fn iterate(&self, state: &mut SolverState) -> Result<()> {
        loop {
            state.iter += 1;
            self.step_phi(state)?;
            let err = self.step_primal(state)?;
            let converged = err < self.config.tol;
            let stopping = converged || state.iter >= self.config.max_iter;
            let diag = if state.iter % self.config.diag_every == 0 || stopping {
                Some(self.diagnostics(state)?)
            } else {
                None
            };
            state.history.push(HistoryRecord {
                iter: state.iter,
                err,
                diag,
            });
            if stopping {
                state.converged = converged;
                return Ok(());
            }
        }
    }

    /// Objective value, KKT residuals, mass drift, and the terminal
    /// multiplier residual for the current iterates.
    pub fn diagnostics(&self, state: &SolverState) -> Result<Diagnostics> {
        let params = &self.problem.params;
        let mesh = &self.problem.mesh;
        let n = params.n_species;
        let r = params.n_reactions;
        let d = mesh.dim();
        let (nt, ns) = mesh.dg_point_count();
        let total = nt * ns;

        // Objective: kinetic + reaction + interaction terms.
        let mut objective = 0.0;
        for q in 0..total {
            let w = self.w_st[q];
            let mut v = 0.0;
            for i in 0..n {
                let rho = state.rho[q * n + i];
                let mut msq = 0.0;
                for c in 0..3 {
                    let mc = state.m[(q * n + i) * 3 + c];
                    msq += mc * mc;
                }
                v += msq / (2.0 * rho);
                if params.beta[i] > 0.0 {
                    v += params.beta[i] * rho * rho.ln();
                }
            }
            if params.alpha > 0.0 {
                for p in 0..r {
                    let (i, j) = params.pair_of(p);
                    let v2 =
                        params.alpha * log_mean_pos(state.rho[q * n + i], state.rho[q * n + j]);
                    let sv = state.s[q * r + p];
                    if v2 > 0.0 {
                        v += sv * sv / (2.0 * v2);
                    }
                }
            }
            objective += w * v;
        }

        // KKT residual of the flux optimality condition.
        let mut kkt_flux_sq = 0.0;
        for i in 0..n {
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(d);
            for c in 0..d {
                grads.push(self.dop.eval_grad(c, &state.phi[i]));
            }
            for q in 0..total {
                let rho = state.rho[q * n + i];
                for c in 0..d {
                    let res = state.m[(q * n + i) * 3 + c] / rho - grads[c][q];
                    kkt_flux_sq += self.w_st[q] * res * res;
                }
            }
        }

        // KKT residual of the source optimality condition (when defined).
        let kkt_source = if params.alpha > 0.0 {
            let vals: Vec<Vec<f64>> = state
                .phi
                .iter()
                .map(|phi| self.dop.eval_values(phi))
                .collect();
            let mut acc = 0.0;
            for p in 0..r {
                let (i, j) = params.pair_of(p);
                for q in 0..total {
                    let v2 =
                        params.alpha * log_mean_pos(state.rho[q * n + i], state.rho[q * n + j]);
                    let mut hat = 0.0;
                    for (sp, vi) in vals.iter().enumerate() {
                        let g = params.gamma.at(sp, p);
                        if g != 0.0 {
                            hat += g * vi[q];
                        }
                    }
                    let res = state.s[q * r + p] / v2 - hat;
                    acc += self.w_st[q] * res * res;
                }
            }
            Some(acc.sqrt())
        } else {
            None
        };

        // Total mass at each quadrature time against the initial data.
        let mass0: f64 = (0..ns)
            .map(|is| {
                mesh.spatial_weights[is]
                    * (0..n)
                        .map(|i| self.problem.rho0[i].values[is].max(params.rho_min))
                        .sum::<f64>()
            })
            .sum();
        let mut mass_drift: f64 = 0.0;
        for it in 0..nt {
            let mut mass = 0.0;
            for is in 0..ns {
                let q = it * ns + is;
                let mut tot = 0.0;
                for i in 0..n {
                    tot += state.rho[q * n + i];
                }
                mass += mesh.spatial_weights[is] * tot;
            }
            mass_drift = mass_drift.max((mass - mass0).abs());
        }

        // Terminal multiplier residual.
        let mut tr_sum = vec![0.0; ns];
        for phi in &state.phi {
            let tr = self.dop.trace(phi, TimeFace::Terminal);
            for (acc, v) in tr_sum.iter_mut().zip(tr) {
                *acc += v;
            }
        }
        let phi_terminal_sum = (0..ns)
            .map(|is| mesh.spatial_weights[is] * tr_sum[is] * tr_sum[is])
            .sum::<f64>()
            .sqrt();

        // Weak constraint residual: the step-1 functional at unit step size.
        let mut step1_sq = 0.0;
        for i in 0..n {
            let rhs = self.rhs_for_species(state, i, 1.0)?;
            step1_sq += dot(&rhs, &rhs);
        }

        Ok(Diagnostics {
            objective,
            kkt_flux: kkt_flux_sq.sqrt(),
            kkt_source,
            mass_drift,
            phi_terminal_sum,
            step1_residual: step1_sq.sqrt(),
        })
    }

    /// Distance estimate in geodesic mode at zero interaction weight:
    /// the objective equals half the squared distance.
    pub fn distance_estimate(&self, state: &SolverState) -> Result<Option<f64>> {
        if self.config.mode != Mode::Geodesic {
            return Ok(None);
        }
        let diag = self.diagnostics(state)?;
        Ok(Some((2.0 * diag.objective).max(0.0).sqrt()))
    }

    /// Total mass of the (clipped) initial data.
    pub fn initial_mass(&self) -> f64 {
        let params = &self.problem.params;
        let mesh = &self.problem.mesh;
        let ns = mesh.dg_point_count().1;
        (0..ns)
            .map(|is| {
                mesh.spatial_weights[is]
                    * (0..params.n_species)
                        .map(|i| self.problem.rho0[i].values[is].max(params.rho_min))
                        .sum::<f64>()
            })
            .sum()
    }
}
