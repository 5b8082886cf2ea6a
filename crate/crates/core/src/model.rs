//! Pointwise model pieces: reaction matrix, mobilities, potential, the
//! closed-form flux/source recovery, and the per-point density objective
//! solved by coordinate descent with Brent's method.
//!
//! Everything here acts on the values of the fields at a single space-time
//! quadrature point; the driver maps these functions over the whole lattice.

use crate::brent::brent_minimize;
use crate::error::{Error, Result};
use crate::tensor::DenseMat;

/// Model parameters shared by every quadrature point.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub n_species: usize,
    pub n_reactions: usize,
    /// Reaction coefficients, `n_species x n_reactions`.
    pub gamma: DenseMat,
    /// Reaction strength scaling the log-mean mobility.
    pub alpha: f64,
    /// Per-species entropy weights in the potential `F_i(r) = -beta_i r ln r`.
    pub beta: Vec<f64>,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Primal proximal step size.
    pub sigma_u: f64,
    /// Coordinate-descent passes per primal update.
    pub prox_sweeps: usize,
    /// Absolute argument tolerance of the scalar solves.
    pub brent_tol: f64,
    /// Cached Gram matrix `Gamma Gamma^T`.
    gram: DenseMat,
}

pub const DEFAULT_RHO_MIN: f64 = 1e-6;
pub const DEFAULT_RHO_MAX: f64 = 40.0;
pub const DEFAULT_BRENT_TOL: f64 = 1e-8;

/// Cyclic reaction matrix: `+1` on the diagonal, `-1` on the cyclic
/// subdiagonal, so reaction `p` converts species `p+1` into species `p`
/// reversibly and every column sums to zero.
pub fn gamma_cyclic(n: usize) -> Result<DenseMat> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "cyclic reaction matrix needs at least 2 species".into(),
        ));
    }
    let mut g = DenseMat::zeros(n, n);
    for i in 0..n {
        *g.at_mut(i, i) = 1.0;
        *g.at_mut(i, (i + n - 1) % n) = -1.0;
    }
    Ok(g)
}

fn gram_of(gamma: &DenseMat) -> DenseMat {
    let n = gamma.rows;
    let r = gamma.cols;
    let mut gram = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..r {
                s += gamma.at(i, p) * gamma.at(j, p);
            }
            *gram.at_mut(i, j) = s;
        }
    }
    gram
}

impl ModelParams {
    /// Barycenter-style model: `n >= 2` species on a reaction ring.
    pub fn cyclic(n: usize, alpha: f64, beta: Vec<f64>) -> Result<Self> {
        let gamma = gamma_cyclic(n)?;
        Self::with_gamma(gamma, alpha, beta)
    }

    /// Single species with a single self-reaction (`Gamma = [1]`), giving the
    /// unbalanced scalar mode where the reaction mobility reduces to
    /// `alpha * rho`.
    pub fn single_species(alpha: f64, beta: f64) -> Result<Self> {
        let mut gamma = DenseMat::zeros(1, 1);
        *gamma.at_mut(0, 0) = 1.0;
        Self::with_gamma(gamma, alpha, vec![beta])
    }

    /// General reaction matrix hook. With `alpha > 0` the pairwise log-mean
    /// mobility is only defined when `n_reactions == n_species` (ring
    /// pairing); other couplings need `alpha = 0`.
    pub fn with_gamma(gamma: DenseMat, alpha: f64, beta: Vec<f64>) -> Result<Self> {
        let n = gamma.rows;
        let r = gamma.cols;
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument("empty reaction matrix".into()));
        }
        if beta.len() != n {
            return Err(Error::InvalidArgument(format!(
                "beta must have {n} entries, got {}",
                beta.len()
            )));
        }
        if alpha < 0.0 {
            return Err(Error::InvalidArgument("alpha must be >= 0".into()));
        }
        if beta.iter().any(|&b| b < 0.0) {
            return Err(Error::InvalidArgument("beta entries must be >= 0".into()));
        }
        if alpha > 0.0 && r != n {
            return Err(Error::InvalidArgument(
                "ring mobility pairing needs n_reactions == n_species; use alpha = 0 otherwise"
                    .into(),
            ));
        }
        let gram = gram_of(&gamma);
        Ok(Self {
            n_species: n,
            n_reactions: r,
            gamma,
            alpha,
            beta,
            rho_min: DEFAULT_RHO_MIN,
            rho_max: DEFAULT_RHO_MAX,
            sigma_u: 1.0,
            prox_sweeps: 1,
            brent_tol: DEFAULT_BRENT_TOL,
            gram,
        })
    }

    pub fn gram(&self) -> &DenseMat {
        &self.gram
    }

    /// True when every column of `Gamma` sums to zero (total mass conserved).
    pub fn conserves_mass(&self) -> bool {
        (0..self.n_reactions).all(|p| {
            let s: f64 = (0..self.n_species).map(|i| self.gamma.at(i, p)).sum();
            s.abs() < 1e-14
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0) || !(self.rho_max > self.rho_min) {
            return Err(Error::InvalidArgument(
                "density bounds need 0 < rho_min < rho_max".into(),
            ));
        }
        if !(self.sigma_u > 0.0) {
            return Err(Error::InvalidArgument("sigma_u must be positive".into()));
        }
        if self.prox_sweeps == 0 {
            return Err(Error::InvalidArgument("prox_sweeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Species paired by reaction `p` in the ring mobility.
    #[inline]
    pub fn pair_of(&self, p: usize) -> (usize, usize) {
        (p, (p + 1) % self.n_species)
    }
}

/// Logarithmic mean `(a - b) / (ln a - ln b)` with the continuous limit at
/// `a = b`. Defined for positive arguments; lies between `min(a, b)` and
/// `max(a, b)`.
pub fn log_mean(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!(
            "log_mean needs positive arguments, got ({a}, {b})"
        )));
    }
    Ok(log_mean_pos(a, b))
}

/// `log_mean` for arguments already known positive. Evaluated as
/// `(a - b) / ln(1 + (a - b)/b)`: the difference of nearby floats is exact,
/// so this form stays accurate where `ln a - ln b` would cancel.
#[inline]
pub(crate) fn log_mean_pos(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    let d = a - b;
    d / (d / b).ln_1p()
}

/// Drift and reaction mobilities at one point: `V1_i = rho_i`,
/// `V2_p = alpha * log_mean(rho_p, rho_{p+1})` on the ring.
pub fn mobilities(rho: &[f64], params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if rho.len() != params.n_species {
        return Err(Error::ShapeMismatch(format!(
            "expected {} densities, got {}",
            params.n_species,
            rho.len()
        )));
    }
    for &r in rho {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("nonpositive density {r}")));
        }
    }
    let v1 = rho.to_vec();
    let mut v2 = vec![0.0; params.n_reactions];
    if params.alpha > 0.0 {
        for (p, v) in v2.iter_mut().enumerate() {
            let (i, j) = params.pair_of(p);
            *v = params.alpha * log_mean_pos(rho[i], rho[j]);
        }
    }
    Ok((v1, v2))
}

/// Per-point proximal data: previous primal values shifted by the dual drift.
#[derive(Debug, Clone, Default)]
pub struct PointBars {
    pub rho_bar: Vec<f64>,
    /// Flux bars per species; unused trailing components stay zero.
    pub m_bar: Vec<[f64; 3]>,
    pub s_bar: Vec<f64>,
    /// Densities from the previous iterate (coordinate-descent start).
    pub rho_prev: Vec<f64>,
}

impl PointBars {
    pub fn zeros(n_species: usize, n_reactions: usize) -> Self {
        Self {
            rho_bar: vec![0.0; n_species],
            m_bar: vec![[0.0; 3]; n_species],
            s_bar: vec![0.0; n_reactions],
            rho_prev: vec![0.0; n_species],
        }
    }
}

#[inline]
fn norm_sq(v: &[f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Closed-form minimizers of the flux/source proximal problems given the
/// updated densities: `m = V1/(sigma+V1) m_bar`, `s = V2/(sigma+V2) s_bar`.
pub fn recover_flux_source(
    rho: &[f64],
    bars: &PointBars,
    params: &ModelParams,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut m = vec![[0.0; 3]; params.n_species];
    let mut s = vec![0.0; params.n_reactions];
    recover_flux_source_into(rho, bars, params, &mut m, &mut s);
    (m, s)
}

pub fn recover_flux_source_into(
    rho: &[f64],
    bars: &PointBars,
    params: &ModelParams,
    m_out: &mut [[f64; 3]],
    s_out: &mut [f64],
) {
    let sigma = params.sigma_u;
    for i in 0..params.n_species {
        let f = rho[i] / (sigma + rho[i]);
        for c in 0..3 {
            m_out[i][c] = f * bars.m_bar[i][c];
        }
    }
    for p in 0..params.n_reactions {
        if params.alpha > 0.0 {
            let (i, j) = params.pair_of(p);
            let v2 = params.alpha * log_mean_pos(rho[i], rho[j]);
            s_out[p] = v2 / (sigma + v2) * bars.s_bar[p];
        } else {
            s_out[p] = 0.0;
        }
    }
}

/// The per-point density objective after eliminating fluxes and sources:
/// sum over species of
/// `|m_bar|^2 / (2(sigma+V1)) + s_bar^2 / (2(sigma+V2)) + (rho-rho_bar)^2 / (2 sigma) + beta rho ln rho`.
pub fn pointwise_objective(rho: &[f64], bars: &PointBars, params: &ModelParams) -> Result<f64> {
    if rho.len() != params.n_species {
        return Err(Error::ShapeMismatch("density count".into()));
    }
    for &r in rho {
        if !(params.rho_min..=params.rho_max).contains(&r) {
            return Err(Error::Domain(format!(
                "density {r} outside [{}, {}]",
                params.rho_min, params.rho_max
            )));
        }
    }
    Ok(objective_unchecked(rho, bars, params))
}

fn objective_unchecked(rho: &[f64], bars: &PointBars, params: &ModelParams) -> f64 {
    let sigma = params.sigma_u;
    let mut total = 0.0;
    for i in 0..params.n_species {
        let d = rho[i] - bars.rho_bar[i];
        total += norm_sq(&bars.m_bar[i]) / (2.0 * (sigma + rho[i]));
        total += d * d / (2.0 * sigma);
        if params.beta[i] > 0.0 {
            total += params.beta[i] * rho[i] * rho[i].ln();
        }
    }
    for p in 0..params.n_reactions {
        let v2 = if params.alpha > 0.0 {
            let (i, j) = params.pair_of(p);
            params.alpha * log_mean_pos(rho[i], rho[j])
        } else {
            0.0
        };
        total += bars.s_bar[p] * bars.s_bar[p] / (2.0 * (sigma + v2));
    }
    total
}

/// Analytic gradient of `pointwise_objective` with respect to the densities.
pub fn pointwise_objective_gradient(
    rho: &[f64],
    bars: &PointBars,
    params: &ModelParams,
) -> Vec<f64> {
    let sigma = params.sigma_u;
    let n = params.n_species;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let sp = sigma + rho[i];
        g[i] += -norm_sq(&bars.m_bar[i]) / (2.0 * sp * sp);
        g[i] += (rho[i] - bars.rho_bar[i]) / sigma;
        if params.beta[i] > 0.0 {
            g[i] += params.beta[i] * (rho[i].ln() + 1.0);
        }
    }
    if params.alpha > 0.0 {
        for p in 0..params.n_reactions {
            let (i, j) = params.pair_of(p);
            let v2 = params.alpha * log_mean_pos(rho[i], rho[j]);
            let coeff = -bars.s_bar[p] * bars.s_bar[p] / (2.0 * (sigma + v2) * (sigma + v2));
            let (da, db) = log_mean_partials(rho[i], rho[j]);
            g[i] += coeff * params.alpha * da;
            // A self-pairing (single species) collects both partials.
            g[j] += coeff * params.alpha * db;
        }
    }
    g
}

/// Partial derivatives of `log_mean(a, b)`.
fn log_mean_partials(a: f64, b: f64) -> (f64, f64) {
    let u = if a == b { 0.0 } else { ((a - b) / b).ln_1p() };
    if u.abs() < 1e-5 {
        // Series about a = b, O(u^2) accurate and cancellation-free.
        return (0.5 - u / 6.0, 0.5 + u / 6.0);
    }
    let lm = (a - b) / u;
    ((1.0 - lm / a) / u, (lm / b - 1.0) / u)
}

/// The single-coordinate restriction of the objective: only the terms that
/// depend on `rho_i = x` (same minimizer, cheaper inside Brent).
fn coord_objective(x: f64, i: usize, rho: &[f64], bars: &PointBars, params: &ModelParams) -> f64 {
    let sigma = params.sigma_u;
    let d = x - bars.rho_bar[i];
    let mut val =
        norm_sq(&bars.m_bar[i]) / (2.0 * (sigma + x)) + d * d / (2.0 * sigma);
    if params.beta[i] > 0.0 {
        val += params.beta[i] * x * x.ln();
    }
    if params.alpha > 0.0 {
        let n = params.n_species;
        let p_fwd = i; // reaction pairing (i, i+1)
        let p_bwd = (i + n - 1) % n; // reaction pairing (i-1, i)
        let rho_at = |idx: usize| if idx == i { x } else { rho[idx] };
        let (a, b) = params.pair_of(p_fwd);
        let v2 = params.alpha * log_mean_pos(rho_at(a), rho_at(b));
        val += bars.s_bar[p_fwd] * bars.s_bar[p_fwd] / (2.0 * (sigma + v2));
        if p_bwd != p_fwd {
            let (a, b) = params.pair_of(p_bwd);
            let v2 = params.alpha * log_mean_pos(rho_at(a), rho_at(b));
            val += bars.s_bar[p_bwd] * bars.s_bar[p_bwd] / (2.0 * (sigma + v2));
        }
    }
    val
}

/// One-at-a-time coordinate descent over the species densities: for each of
/// `prox_sweeps` passes, species `1..N` in order are minimized over
/// `[rho_min, rho_max]` by Brent's method with the other densities held at
/// their latest values. Never increases the objective.
pub fn prox_density_sweep(bars: &PointBars, params: &ModelParams) -> Result<Vec<f64>> {
    let mut rho = vec![0.0; params.n_species];
    prox_density_sweep_into(bars, params, &mut rho)?;
    Ok(rho)
}

pub fn prox_density_sweep_into(
    bars: &PointBars,
    params: &ModelParams,
    rho_out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(rho_out.len(), params.n_species);
    for (r, &p) in rho_out.iter_mut().zip(&bars.rho_prev) {
        *r = p.clamp(params.rho_min, params.rho_max);
    }
    for _ in 0..params.prox_sweeps {
        for i in 0..params.n_species {
            let f_old = coord_objective(rho_out[i], i, rho_out, bars, params);
            let (x, f_new) = brent_minimize(
                |x| coord_objective(x, i, rho_out, bars, params),
                params.rho_min,
                params.rho_max,
                params.brent_tol,
            )?;
            debug_assert!(
                f_new <= f_old + 1e-12 * (1.0 + f_old.abs()),
                "scalar solve increased the objective: {f_old} -> {f_new}"
            );
            if f_new <= f_old {
                rho_out[i] = x;
            }
        }
    }
    Ok(())
}
