//! Nonnegative mixing laws Z: densities, moments and samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, InverseGaussian as IgDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mathkit::bessel::ln_bessel_k;
use crate::mathkit::quadrature::{integrate_upper_tail_detailed, Quadrature, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MixingLaw {
    Gig { lambda: f64, chi: f64, psi: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGaussian { delta: f64, gamma_ig: f64 },
    Exponential,
    Degenerate,
}

/// Raw and central moments of Z. `m3` and `m4` are central.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingMoments {
    pub ez: f64,
    pub ez2: f64,
    pub ez3: f64,
    pub var: f64,
    pub m3: f64,
    pub m4: Option<f64>,
}

impl MixingMoments {
    fn from_central(ez: f64, var: f64, m3: f64, m4: Option<f64>) -> Self {
        let ez2 = var + ez * ez;
        let ez3 = m3 + 3.0 * ez2 * ez - 2.0 * ez * ez * ez;
        MixingMoments {
            ez,
            ez2,
            ez3,
            var,
            m3,
            m4,
        }
    }

    fn from_raw(ez: f64, ez2: f64, ez3: f64, ez4: Option<f64>) -> Self {
        let var = (ez2 - ez * ez).max(0.0);
        let m3 = ez3 - 3.0 * ez2 * ez + 2.0 * ez.powi(3);
        let m4 = ez4.map(|e4| e4 - 4.0 * ez3 * ez + 6.0 * ez2 * ez * ez - 3.0 * ez.powi(4));
        MixingMoments {
            ez,
            ez2,
            ez3,
            var,
            m3,
            m4,
        }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {v}")))
    }
}

fn validate_gig(lambda: f64, chi: f64, psi: f64) -> Result<()> {
    if !(lambda.is_finite() && chi.is_finite() && psi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "GIG parameters must be finite (lambda {lambda}, chi {chi}, psi {psi})"
        )));
    }
    let ok = if lambda < 0.0 {
        chi > 0.0 && psi >= 0.0
    } else if lambda == 0.0 {
        chi > 0.0 && psi > 0.0
    } else {
        chi >= 0.0 && psi > 0.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "GIG parameters outside the admissible domain (lambda {lambda}, chi {chi}, psi {psi})"
        )))
    }
}

impl MixingLaw {
    pub fn gig(lambda: f64, chi: f64, psi: f64) -> Result<Self> {
        let law = MixingLaw::Gig { lambda, chi, psi };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MixingLaw::Gig { lambda, chi, psi } => validate_gig(lambda, chi, psi),
            MixingLaw::Gamma { shape, rate } => {
                positive("Gamma shape", shape)?;
                positive("Gamma rate", rate)
            }
            MixingLaw::InverseGaussian { delta, gamma_ig } => {
                positive("inverse Gaussian delta", delta)?;
                positive("inverse Gaussian gamma", gamma_ig)
            }
            MixingLaw::Exponential | MixingLaw::Degenerate => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MixingLaw::Gig { .. } => "gig",
            MixingLaw::Gamma { .. } => "gamma",
            MixingLaw::InverseGaussian { .. } => "inverse_gaussian",
            MixingLaw::Exponential => "exponential",
            MixingLaw::Degenerate => "degenerate",
        }
    }

    /// The same law written as GIG(λ, χ, ψ); `None` for the point mass.
    pub fn as_gig(&self) -> Option<(f64, f64, f64)> {
        match *self {
            MixingLaw::Gig { lambda, chi, psi } => Some((lambda, chi, psi)),
            MixingLaw::Gamma { shape, rate } => Some((shape, 0.0, 2.0 * rate)),
            MixingLaw::InverseGaussian { delta, gamma_ig } => {
                Some((-0.5, delta * delta, gamma_ig * gamma_ig))
            }
            MixingLaw::Exponential => Some((1.0, 0.0, 2.0)),
            MixingLaw::Degenerate => None,
        }
    }

    /// Law of c·Z for c > 0.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale factor", c)?;
        self.validate()?;
        Ok(match *self {
            MixingLaw::Gig { lambda, chi, psi } => MixingLaw::Gig {
                lambda,
                chi: chi * c,
                psi: psi / c,
            },
            MixingLaw::Gamma { shape, rate } => MixingLaw::Gamma {
                shape,
                rate: rate / c,
            },
            MixingLaw::InverseGaussian { delta, gamma_ig } => MixingLaw::InverseGaussian {
                delta: delta * c.sqrt(),
                gamma_ig: gamma_ig / c.sqrt(),
            },
            MixingLaw::Exponential => MixingLaw::Gamma {
                shape: 1.0,
                rate: 1.0 / c,
            },
            MixingLaw::Degenerate => {
                if c == 1.0 {
                    MixingLaw::Degenerate
                } else {
                    return Err(Error::InvalidParameter(
                        "a point mass at 1 cannot be rescaled".into(),
                    ));
                }
            }
        })
    }

    /// Log-density at w > 0; −∞ for w ≤ 0.
    pub fn ln_density(&self, w: f64) -> Result<f64> {
        if w <= 0.0 {
            self.validate()?;
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.density_evaluator()?.ln_density(w))
    }

    /// Log-density with its normalizing constant computed once.
    pub fn density_evaluator(&self) -> Result<DensityEvaluator> {
        self.validate()?;
        let (lambda, chi, psi) = self.as_gig().ok_or_else(|| {
            Error::InvalidParameter("the degenerate law has no density".into())
        })?;
        let log_const = if chi == 0.0 {
            lambda * (psi / 2.0).ln() - ln_gamma(lambda)
        } else if psi == 0.0 {
            -lambda * (chi / 2.0).ln() - ln_gamma(-lambda)
        } else {
            0.5 * lambda * (psi / chi).ln() - std::f64::consts::LN_2 - ln_bessel_k(lambda, (chi * psi).sqrt())?
        };
        Ok(DensityEvaluator {
            lambda,
            chi,
            psi,
            log_const,
        })
    }

    pub fn density(&self, w: f64) -> Result<f64> {
        if w <= 0.0 {
            self.validate()?;
            return Ok(0.0);
        }
        self.ln_density(w).map(f64::exp)
    }

    /// E[Z^r] for real r, or a nonexistent-moment error.
    pub fn raw_moment(&self, r: f64) -> Result<f64> {
        self.validate()?;
        if r == 0.0 {
            return Ok(1.0);
        }
        let missing = || Error::NonexistentMoment {
            order: r.abs().ceil() as u32,
            law: self.name().to_string(),
        };
        match *self {
            MixingLaw::Degenerate => Ok(1.0),
            MixingLaw::Exponential => MixingLaw::Gamma {
                shape: 1.0,
                rate: 1.0,
            }
            .raw_moment(r),
            MixingLaw::Gamma { shape, rate } => {
                if shape + r <= 0.0 {
                    return Err(missing());
                }
                Ok((ln_gamma(shape + r) - ln_gamma(shape) - r * rate.ln()).exp())
            }
            MixingLaw::InverseGaussian { .. } => {
                let (l, c, p) = self.as_gig().expect("IG embeds in GIG");
                MixingLaw::Gig {
                    lambda: l,
                    chi: c,
                    psi: p,
                }
                .raw_moment(r)
            }
            MixingLaw::Gig { lambda, chi, psi } => {
                if chi == 0.0 {
                    // Gamma(λ, ψ/2)
                    if lambda + r <= 0.0 {
                        return Err(missing());
                    }
                    Ok((ln_gamma(lambda + r) - ln_gamma(lambda) + r * (2.0 / psi).ln()).exp())
                } else if psi == 0.0 {
                    // inverse Gamma(−λ, χ/2)
                    let alpha = -lambda;
                    if alpha - r <= 0.0 {
                        return Err(missing());
                    }
                    Ok((ln_gamma(alpha - r) - ln_gamma(alpha) + r * (chi / 2.0).ln()).exp())
                } else {
                    let omega = (chi * psi).sqrt();
                    let ln =
                        0.5 * r * (chi / psi).ln() + ln_bessel_k(lambda + r, omega)? - ln_bessel_k(lambda, omega)?;
                    Ok(ln.exp())
                }
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match *self {
            MixingLaw::Gamma { shape, rate } => {
                self.validate()?;
                Ok(shape / rate)
            }
            MixingLaw::InverseGaussian { delta, gamma_ig } => {
                self.validate()?;
                Ok(delta / gamma_ig)
            }
            _ => self.raw_moment(1.0),
        }
    }

    /// Moments up to order three; the fourth central moment when it exists.
    pub fn moments(&self) -> Result<MixingMoments> {
        self.validate()?;
        Ok(match *self {
            MixingLaw::Degenerate => MixingMoments::from_central(1.0, 0.0, 0.0, Some(0.0)),
            MixingLaw::Exponential => {
                return MixingLaw::Gamma {
                    shape: 1.0,
                    rate: 1.0,
                }
                .moments()
            }
            MixingLaw::Gamma { shape, rate } => MixingMoments::from_central(
                shape / rate,
                shape / (rate * rate),
                2.0 * shape / rate.powi(3),
                Some(3.0 * shape * (shape + 2.0) / rate.powi(4)),
            ),
            MixingLaw::InverseGaussian { delta, gamma_ig: g } => MixingMoments::from_central(
                delta / g,
                delta / g.powi(3),
                3.0 * delta / g.powi(5),
                Some(15.0 * delta / g.powi(7) + 3.0 * delta * delta / g.powi(6)),
            ),
            MixingLaw::Gig { .. } => {
                let ez = self.raw_moment(1.0)?;
                let ez2 = self.raw_moment(2.0)?;
                let ez3 = self.raw_moment(3.0)?;
                let ez4 = self.raw_moment(4.0).ok();
                MixingMoments::from_raw(ez, ez2, ez3, ez4)
            }
        })
    }

    /// m₃(Z)·EZ − 2·Var²(Z); nonnegative values make skewness increase with
    /// the alignment of the portfolio with the skewness direction.
    pub fn skew_condition(&self) -> Result<f64> {
        let m = self.moments()?;
        Ok(m.m3 * m.ez - 2.0 * m.var * m.var)
    }

    /// A natural length scale of the law, used to map quadrature nodes.
    pub fn scale_hint(&self) -> f64 {
        match *self {
            MixingLaw::Gig { chi, psi, lambda } => {
                if chi > 0.0 && psi > 0.0 {
                    (chi / psi).sqrt()
                } else if chi == 0.0 {
                    (2.0 * lambda / psi).max(1e-300)
                } else {
                    chi / 2.0 / (1.0 - lambda)
                }
            }
            MixingLaw::Gamma { shape, rate } => shape / rate,
            MixingLaw::InverseGaussian { delta, gamma_ig } => delta / gamma_ig,
            MixingLaw::Exponential | MixingLaw::Degenerate => 1.0,
        }
    }

    /// E[f(Z)] by quadrature against the density (exact for the point mass).
    pub fn expectation<F: FnMut(f64) -> f64>(&self, f: F, spec: &QuadratureSpec) -> Result<f64> {
        self.expectation_detailed(f, spec).map(|q| q.value)
    }

    pub fn expectation_detailed<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        spec: &QuadratureSpec,
    ) -> Result<Quadrature> {
        self.validate()?;
        if let MixingLaw::Degenerate = self {
            return Ok(Quadrature {
                value: f(1.0),
                error_estimate: 0.0,
                evaluations: 1,
                subdivisions: 0,
            });
        }
        let c = self.scale_hint();
        let dens = self.density_evaluator()?;
        integrate_upper_tail_detailed(
            |u| {
                let w = c * u;
                if w <= 0.0 {
                    return 0.0;
                }
                let ld = dens.ln_density(w);
                if ld == f64::NEG_INFINITY {
                    return 0.0;
                }
                let v = f(w);
                if v == 0.0 {
                    0.0
                } else {
                    v * ld.exp() * c
                }
            },
            0.0,
            spec,
        )
    }

    /// n i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let sampler = Sampler::new(self)?;
        Ok((0..n).map(|_| sampler.draw(rng)).collect())
    }
}

/// Log-density of GIG(λ, χ, ψ), covering the Gamma and inverse Gamma limits.
#[derive(Debug, Clone, Copy)]
pub struct DensityEvaluator {
    lambda: f64,
    chi: f64,
    psi: f64,
    log_const: f64,
}

impl DensityEvaluator {
    pub fn ln_density(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_const + (self.lambda - 1.0) * w.ln() - 0.5 * (self.chi / w + self.psi * w)
    }

    pub fn density(&self, w: f64) -> f64 {
        self.ln_density(w).exp()
    }
}

/// Prepared sampler for one law.
#[derive(Debug, Clone)]
pub enum Sampler {
    Point,
    Gamma(GammaDist<f64>),
    InverseGamma(GammaDist<f64>),
    InverseGaussian(IgDist<f64>),
    Gig(GigSampler),
}

impl Sampler {
    pub fn new(law: &MixingLaw) -> Result<Self> {
        law.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match *law {
            MixingLaw::Degenerate => Sampler::Point,
            MixingLaw::Exponential => Sampler::Gamma(GammaDist::new(1.0, 1.0).map_err(|e| bad(&e))?),
            MixingLaw::Gamma { shape, rate } => {
                Sampler::Gamma(GammaDist::new(shape, 1.0 / rate).map_err(|e| bad(&e))?)
            }
            MixingLaw::InverseGaussian { delta, gamma_ig } => Sampler::InverseGaussian(
                IgDist::new(delta / gamma_ig, delta * delta).map_err(|e| bad(&e))?,
            ),
            MixingLaw::Gig { lambda, chi, psi } => {
                if chi == 0.0 {
                    Sampler::Gamma(GammaDist::new(lambda, 2.0 / psi).map_err(|e| bad(&e))?)
                } else if psi == 0.0 {
                    Sampler::InverseGamma(GammaDist::new(-lambda, 2.0 / chi).map_err(|e| bad(&e))?)
                } else {
                    Sampler::Gig(GigSampler::new(lambda, chi, psi))
                }
            }
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Point => 1.0,
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::InverseGamma(g) => 1.0 / g.sample(rng),
            Sampler::InverseGaussian(ig) => ig.sample(rng),
            Sampler::Gig(s) => s.draw(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum GigMethod {
    RouShift { uminus: f64, uplus: f64 },
    RouNoShift { vmax: f64 },
    SmallOmega {
        x0: f64,
        k0: f64,
        k1: f64,
        k2: f64,
        a0: f64,
        a1: f64,
        total: f64,
    },
}

/// Sampler for GIG with χ, ψ > 0. Draws X from the standardized density
/// x^{λ-1} exp(-ω(x + 1/x)/2) with ω = √(χψ), using |λ| and a reciprocal for
/// λ < 0, and returns √(χ/ψ)·X.
#[derive(Debug, Clone, Copy)]
pub struct GigSampler {
    lambda: f64,
    omega: f64,
    scale: f64,
    invert: bool,
    mode: f64,
    log_norm: f64,
    method: GigMethod,
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0).hypot(omega) + (lambda - 1.0)) / omega
    } else {
        omega / ((1.0 - lambda).hypot(omega) + (1.0 - lambda))
    }
}

impl GigSampler {
    pub fn new(lambda: f64, chi: f64, psi: f64) -> Self {
        let omega = (chi * psi).sqrt();
        let lam = lambda.abs();
        let mode = gig_mode(lam, omega);
        let t = 0.5 * (lam - 1.0);
        let s = 0.25 * omega;
        let log_norm = t * mode.ln() - s * (mode + 1.0 / mode);
        let half_log_g = |x: f64| t * x.ln() - s * (x + 1.0 / x) - log_norm;
        let method = if lam > 1.0 || omega > 1.0 {
            // extremes of (x - mode)·√g(x) solve a cubic
            let a = -(2.0 * (lam + 1.0) / omega + mode);
            let b = 2.0 * (lam - 1.0) * mode / omega - 1.0;
            let c = mode;
            let p = b - a * a / 3.0;
            let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
            let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
            let fak = 2.0 * (-p / 3.0).sqrt();
            let y1 = fak * (fi / 3.0).cos() - a / 3.0;
            let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
            GigMethod::RouShift {
                uplus: (y1 - mode) * half_log_g(y1).exp(),
                uminus: (y2 - mode) * half_log_g(y2).exp(),
            }
        } else if omega >= 0.5f64.min(2.0 / 3.0 * (1.0 - lam).sqrt()) {
            let ym = ((lam + 1.0) + (lam + 1.0).hypot(omega)) / omega;
            GigMethod::RouNoShift {
                vmax: (0.5 * (lam + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - log_norm).exp(),
            }
        } else {
            let x0 = omega / (1.0 - lam);
            let k0 = ((lam - 1.0) * mode.ln() - 0.5 * omega * (mode + 1.0 / mode)).exp();
            let a0 = k0 * x0;
            let (k1, a1, k2, a2);
            if x0 >= 2.0 / omega {
                k1 = 0.0;
                a1 = 0.0;
                k2 = x0.powf(lam - 1.0);
                a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
            } else {
                k1 = (-omega).exp();
                a1 = if lam == 0.0 {
                    k1 * (2.0 / (omega * omega)).ln()
                } else {
                    k1 / lam * ((2.0 / omega).powf(lam) - x0.powf(lam))
                };
                k2 = (2.0 / omega).powf(lam - 1.0);
                a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
            }
            GigMethod::SmallOmega {
                x0,
                k0,
                k1,
                k2,
                a0,
                a1,
                total: a0 + a1 + a2,
            }
        };
        GigSampler {
            lambda: lam,
            omega,
            scale: (chi / psi).sqrt(),
            invert: lambda < 0.0,
            mode,
            log_norm,
            method,
        }
    }

    fn standardized<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lam = self.lambda;
        let omega = self.omega;
        let t = 0.5 * (lam - 1.0);
        let s = 0.25 * omega;
        let accept = |x: f64, v: f64| v.ln() <= t * x.ln() - s * (x + 1.0 / x) - self.log_norm;
        match self.method {
            GigMethod::RouShift { uminus, uplus } => loop {
                let u = uminus + rng.random::<f64>() * (uplus - uminus);
                let v: f64 = 1.0 - rng.random::<f64>();
                let x = u / v + self.mode;
                if x > 0.0 && accept(x, v) {
                    return x;
                }
            },
            GigMethod::RouNoShift { vmax } => loop {
                let u = vmax * rng.random::<f64>();
                let v: f64 = 1.0 - rng.random::<f64>();
                let x = u / v;
                if x > 0.0 && accept(x, v) {
                    return x;
                }
            },
            GigMethod::SmallOmega {
                x0,
                k0,
                k1,
                k2,
                a0,
                a1,
                total,
            } => loop {
                let mut v = total * rng.random::<f64>();
                let (x, hx);
                if v <= a0 {
                    x = x0 * v / a0;
                    hx = k0;
                } else {
                    v -= a0;
                    if v <= a1 {
                        if lam == 0.0 {
                            x = omega * (omega.exp() * v).exp();
                            hx = k1 / x;
                        } else {
                            x = (x0.powf(lam) + lam * v / k1).powf(1.0 / lam);
                            hx = k1 * x.powf(lam - 1.0);
                        }
                    } else {
                        v -= a1;
                        let a = x0.max(2.0 / omega);
                        x = -2.0 / omega * ((-omega * a / 2.0).exp() - omega * v / (2.0 * k2)).ln();
                        hx = k2 * (-omega * x / 2.0).exp();
                    }
                }
                let u = rng.random::<f64>() * hx;
                if x > 0.0 && x.is_finite() && u.ln() <= (lam - 1.0) * x.ln() - 0.5 * omega * (x + 1.0 / x) {
                    return x;
                }
            },
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.standardized(rng);
        let x = if self.invert { 1.0 / x } else { x };
        self.scale * x
    }
}
