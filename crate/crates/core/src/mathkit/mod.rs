//! Special functions and scalar numerics.

pub mod bessel;
pub mod minimize;
pub mod normal;
pub mod quadrature;
pub mod roots;

pub use bessel::{bessel_k, bessel_k_ratio, bessel_k_scaled, bessel_k_triple, ln_bessel_k, BesselTriple};
pub use minimize::{minimize_scalar, Minimum};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use quadrature::{
    integrate, integrate_detailed, integrate_lower_tail_detailed, integrate_real_line,
    integrate_semi_infinite, integrate_semi_infinite_detailed, integrate_upper_tail_detailed,
    Quadrature, QuadratureSpec,
};
pub use roots::{find_root, RootBracket};
