//! Brent scalar minimization on a bracket.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt(5)) / 2

/// Minimizes `f` on `[lo, hi]` to absolute argument tolerance `tol`.
///
/// Returns `(argmin, f(argmin))`. The endpoints are always evaluated, so the
/// returned value never exceeds `min(f(lo), f(hi))` even for functions that
/// are not unimodal on the bracket. Non-finite evaluations abort the solve.
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "invalid bracket [{lo}, {hi}]"
        )));
    }
    let eval = |x: f64, f: &mut F| -> Result<f64> {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "objective evaluated to {v} at x = {x}"
            )));
        }
        Ok(v)
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = eval(x, &mut f)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let tol1 = tol.max(f64::EPSILON * x.abs());
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabolic interpolation through (x, w, v).
            let r = (x - w) * (fx - fv);
            let q2 = (x - v) * (fx - fw);
            let mut p = (x - v) * q2 - (x - w) * r;
            let mut q = 2.0 * (q2 - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if mid > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = eval(u, &mut f)?;

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    // Endpoint sweep keeps the boundary-minimizer contract exact.
    let flo = eval(lo, &mut f)?;
    let fhi = eval(hi, &mut f)?;
    if flo <= fx && flo <= fhi {
        return Ok((lo, flo));
    }
    if fhi < fx {
        return Ok((hi, fhi));
    }
    Ok((x, fx))
}
