//! One-dimensional Gauss-Legendre quadrature rules and nodal Lagrange bases.
//!
//! All rules and node sets live on the reference interval `[0, 1]`; meshes map
//! them into physical cells with affine jacobians. Nodes and weights are
//! computed at startup by Newton iteration on the Legendre polynomials, so any
//! polynomial degree is supported without tables.

use crate::error::{Error, Result};

/// Newton convergence threshold for node computation.
const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// An n-point quadrature rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule1D {
    /// Quadrature points, strictly increasing.
    pub points: Vec<f64>,
    /// Quadrature weights; they sum to 1 (the reference interval length).
    pub weights: Vec<f64>,
}

/// Evaluates the Legendre polynomial `P_n` and its derivative at `x` in `[-1, 1]`
/// by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for j in 1..n {
        let jf = j as f64;
        let p_next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // Derivative identity: (1 - x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x)).
    let dp = if (1.0 - x * x).abs() < f64::EPSILON {
        // Only hit at the endpoints, where |P_n| = 1.
        0.5 * x * (n * (n + 1)) as f64 * p
    } else {
        (n as f64) * (p_prev - x * p) / (1.0 - x * x)
    };
    (p, dp)
}

/// The n-point Gauss-Legendre rule on `[0, 1]`, exact for polynomials of
/// degree `<= 2n - 1`.
pub fn gauss_legendre_rule(n: usize) -> Result<Rule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "quadrature rule needs at least one point".into(),
        ));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess for the i-th root of P_n on [-1, 1].
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        // Weight on [-1, 1] is 2 / ((1 - x^2) P_n'(x)^2); halve for [0, 1].
        points[i] = 0.5 * (x + 1.0);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    // Enforce exact symmetry of the rule about 0.5.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let p = 0.5 * (points[i] + 1.0 - points[j]);
        points[i] = p;
        points[j] = 1.0 - p;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.5;
    }
    Ok(Rule1D { points, weights })
}

/// The `k + 1` Gauss-Lobatto nodes on `[0, 1]` (endpoints included), i.e. the
/// endpoints plus the roots of `P_k'`.
pub fn gauss_lobatto_nodes(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "Lobatto node set needs degree >= 1".into(),
        ));
    }
    let mut nodes = vec![0.0; k + 1];
    nodes[0] = 0.0;
    nodes[k] = 1.0;
    for i in 1..k {
        // Interior nodes: roots of P_k'. Chebyshev-Lobatto initial guess.
        let mut x = -(std::f64::consts::PI * i as f64 / k as f64).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(k, x);
            // P_k'' from the Legendre ODE: (1-x^2) P'' = 2x P' - k(k+1) P.
            let ddp = (2.0 * x * dp - (k * (k + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        nodes[i] = 0.5 * (x + 1.0);
    }
    // Symmetrize about 0.5.
    for i in 0..(k + 1) / 2 {
        let j = k - i;
        let p = 0.5 * (nodes[i] + 1.0 - nodes[j]);
        nodes[i] = p;
        nodes[j] = 1.0 - p;
    }
    if k % 2 == 0 {
        nodes[k / 2] = 0.5;
    }
    Ok(nodes)
}

/// Nodal Lagrange basis on an arbitrary strictly increasing node set in `[0, 1]`.
///
/// Basis function `j` is 1 at node `j` and 0 at every other node.
#[derive(Debug, Clone)]
pub struct NodalBasis1D {
    pub nodes: Vec<f64>,
    pub degree: usize,
    /// Barycentric weights `1 / prod_{m != j} (x_j - x_m)`.
    bary: Vec<f64>,
}

impl NodalBasis1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("empty node set".into()));
        }
        let n = nodes.len();
        let mut bary = vec![1.0; n];
        for j in 0..n {
            for m in 0..n {
                if m != j {
                    bary[j] *= nodes[j] - nodes[m];
                }
            }
            if bary[j] == 0.0 {
                return Err(Error::InvalidArgument("repeated nodes".into()));
            }
            bary[j] = 1.0 / bary[j];
        }
        Ok(Self {
            degree: n - 1,
            nodes,
            bary,
        })
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j > self.degree {
            return Err(Error::InvalidArgument(format!(
                "basis index {j} out of range for degree {}",
                self.degree
            )));
        }
        Ok(())
    }

    /// Value of basis function `j` at `x`.
    pub fn eval(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        let mut prod = self.bary[j];
        for m in 0..self.nodes.len() {
            if m != j {
                prod *= x - self.nodes[m];
            }
        }
        Ok(prod)
    }

    /// Derivative of basis function `j` at `x`.
    pub fn deriv(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        let n = self.nodes.len();
        let mut sum = 0.0;
        for l in 0..n {
            if l == j {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..n {
                if m != j && m != l {
                    prod *= x - self.nodes[m];
                }
            }
            sum += prod;
        }
        Ok(self.bary[j] * sum)
    }
}

/// Free-function forms used throughout the crate.
pub fn lagrange_eval(basis: &NodalBasis1D, j: usize, x: f64) -> Result<f64> {
    basis.eval(j, x)
}

pub fn lagrange_deriv(basis: &NodalBasis1D, j: usize, x: f64) -> Result<f64> {
    basis.deriv(j, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_point_rule_is_midpoint() {
        let r = gauss_legendre_rule(1).unwrap();
        assert_abs_diff_eq!(r.points[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_rule() {
        let r = gauss_legendre_rule(2).unwrap();
        let off = 1.0 / (2.0 * 3.0_f64.sqrt());
        assert_abs_diff_eq!(r.points[0], 0.5 - off, epsilon = 1e-14);
        assert_abs_diff_eq!(r.points[1], 0.5 + off, epsilon = 1e-14);
        assert_abs_diff_eq!(r.weights[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cubic_exact_with_two_points() {
        let r = gauss_legendre_rule(2).unwrap();
        let integral: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(&x, &w)| w * x * x * x)
            .sum();
        assert_abs_diff_eq!(integral, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn monomial_exactness_up_to_degree() {
        for n in 1..=8 {
            let r = gauss_legendre_rule(n).unwrap();
            for p in 0..=(2 * n - 1) {
                let integral: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(&x, &w)| w * x.powi(p as i32))
                    .sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!(
                    (integral - exact).abs() <= 1e-13,
                    "n={n} p={p}: {integral} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn rule_invariants() {
        for n in 1..=10 {
            let r = gauss_legendre_rule(n).unwrap();
            let wsum: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 1.0, epsilon = 1e-14);
            for i in 0..n {
                assert!(r.points[i] > 0.0 && r.points[i] < 1.0);
                if i > 0 {
                    assert!(r.points[i] > r.points[i - 1]);
                }
            }
        }
    }

    #[test]
    fn zero_point_rule_rejected() {
        assert!(matches!(
            gauss_legendre_rule(0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            gauss_lobatto_nodes(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn lobatto_nodes_low_order() {
        assert_eq!(gauss_lobatto_nodes(1).unwrap(), vec![0.0, 1.0]);
        let l2 = gauss_lobatto_nodes(2).unwrap();
        assert_abs_diff_eq!(l2[1], 0.5, epsilon = 1e-15);
        let l3 = gauss_lobatto_nodes(3).unwrap();
        let inner = 1.0 / 5.0_f64.sqrt();
        assert_abs_diff_eq!(l3[1], 0.5 * (1.0 - inner), epsilon = 1e-14);
        assert_abs_diff_eq!(l3[2], 0.5 * (1.0 + inner), epsilon = 1e-14);
        assert_eq!(l3[0], 0.0);
        assert_eq!(l3[3], 1.0);
    }

    #[test]
    fn lobatto_symmetric_about_half() {
        for k in 1..=8 {
            let nodes = gauss_lobatto_nodes(k).unwrap();
            assert_eq!(nodes.len(), k + 1);
            for i in 0..=k {
                assert_abs_diff_eq!(nodes[i], 1.0 - nodes[k - i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn lagrange_nodal_property_and_examples() {
        let lin = NodalBasis1D::new(vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(lin.eval(0, 0.25).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(lin.deriv(1, 0.3).unwrap(), 1.0, epsilon = 1e-15);

        let quad = NodalBasis1D::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_abs_diff_eq!(quad.eval(1, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        for j in 0..3 {
            for jp in 0..3 {
                let expect = if j == jp { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(
                    quad.eval(j, quad.nodes[jp]).unwrap(),
                    expect,
                    epsilon = 1e-13
                );
            }
        }
        assert!(quad.eval(3, 0.5).is_err());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [1usize, 2, 3, 4] {
            let basis = NodalBasis1D::new(gauss_lobatto_nodes(k).unwrap()).unwrap();
            for _ in 0..20 {
                let x: f64 = rng.gen();
                for j in 0..=k {
                    let h = 1e-6;
                    let fd =
                        (basis.eval(j, x + h).unwrap() - basis.eval(j, x - h).unwrap()) / (2.0 * h);
                    assert!((basis.deriv(j, x).unwrap() - fd).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [1usize, 2, 4, 6] {
            let basis = NodalBasis1D::new(gauss_lobatto_nodes(k).unwrap()).unwrap();
            for _ in 0..20 {
                let x: f64 = rng.gen();
                let vsum: f64 = (0..=k).map(|j| basis.eval(j, x).unwrap()).sum();
                let dsum: f64 = (0..=k).map(|j| basis.deriv(j, x).unwrap()).sum();
                assert_abs_diff_eq!(vsum, 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(dsum, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn high_order_rules_stay_accurate() {
        // Newton-computed nodes for a "large" rule still integrate exactly.
        let r = gauss_legendre_rule(16).unwrap();
        let integral: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(&x, &w)| w * x.powi(31))
            .sum();
        assert_abs_diff_eq!(integral, 1.0 / 32.0, epsilon = 1e-14);
    }
}
