//! Brent's bracketing root finder.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Interval [lo, hi] with absolute tolerance on the root location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl RootBracket {
    pub fn new(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "root bracket must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::Domain {
                what: "root tolerance",
                value: tol,
            });
        }
        Ok(RootBracket { lo, hi, tol })
    }
}

pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, bracket: RootBracket) -> Result<f64> {
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Domain {
            what: "root function value",
            value: f64::NAN,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * bracket.tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Domain {
                what: "root function value",
                value: b,
            });
        }
    }
    Err(Error::RootNonConvergence {
        best: b,
        iterations: MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let r = find_root(|x| x * x * x - 2.0, RootBracket::new(0.0, 3.0, 1e-14).unwrap()).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn no_sign_change_reported() {
        let e = find_root(|x| x * x + 1.0, RootBracket::new(-1.0, 1.0, 1e-10).unwrap()).unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
    }

    #[test]
    fn endpoint_root() {
        let r = find_root(|x| x - 1.0, RootBracket::new(1.0, 2.0, 1e-12).unwrap()).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn bracket_validation() {
        assert!(RootBracket::new(1.0, 0.0, 1e-8).is_err());
        assert!(RootBracket::new(0.0, 1.0, 0.0).is_err());
        assert!(RootBracket::new(f64::NEG_INFINITY, 1.0, 1e-8).is_err());
    }

    #[test]
    fn steep_function() {
        let r = find_root(|x| (x - 0.3).tanh() * 1e6, RootBracket::new(-5.0, 5.0, 1e-13).unwrap())
            .unwrap();
        assert!((r - 0.3).abs() < 1e-12);
    }
}
