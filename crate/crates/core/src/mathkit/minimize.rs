//! Brent's derivative-free scalar minimizer on a closed interval.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` over [lo, hi] to absolute tolerance `tol` in x.
pub fn minimize_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Minimum> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "minimization interval must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "minimizer tolerance",
            value: tol,
        });
    }
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for it in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = f64::EPSILON.sqrt() * x.abs() * 1e-4 + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            if fx.is_nan() {
                return Err(Error::MinimizerNonConvergence(format!(
                    "objective is NaN at {x}"
                )));
            }
            return Ok(Minimum {
                x,
                value: fx,
                iterations: it,
            });
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let mut fu = f(u);
        if fu.is_nan() {
            fu = f64::INFINITY;
        }
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
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
    Err(Error::MinimizerNonConvergence(format!(
        "no convergence after {max_iter} iterations (best x = {x}, f = {fx})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let m = minimize_scalar(|x| (x - 0.7).powi(2) + 3.0, -4.0, 5.0, 1e-10, 200).unwrap();
        assert!((m.x - 0.7).abs() < 1e-8);
        assert!((m.value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_minimum() {
        let m = minimize_scalar(|x| x, 1.0, 2.0, 1e-10, 200).unwrap();
        assert!((m.x - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_smooth_minimum() {
        let m = minimize_scalar(|x| (x - 0.25).abs(), -1.0, 1.0, 1e-10, 500).unwrap();
        assert!((m.x - 0.25).abs() < 1e-8);
    }

    #[test]
    fn invalid_interval() {
        assert!(minimize_scalar(|x| x, 1.0, 1.0, 1e-8, 10).is_err());
    }
}
