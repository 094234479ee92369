//! Smooth cutoff profiles built from one exponential mollifier family.
//!
//! `rho` is the standard smooth step e^{-L/t} / (e^{-L/t} + e^{-L/(1-t)}):
//! identically 0 for t <= 0, identically 1 for t >= 1, all derivatives vanish
//! at both ends, and rho(t) + rho(1-t) = 1. Every other profile in the
//! collapse construction (the cube smoothstep `a`, the lambda cutoff, the
//! capsule decay, the radial sigma plateau) is a rescaling of it.

use crate::error::{Error, Result};

/// Default mollifier sharpness. At this value |a(t) - t| <= 1e-12 on
/// [0.4, 0.6] and the one-sided derivatives of `a` at 0 and 1 underflow to 0.
pub const DEFAULT_LAMBDA_CAP: f64 = 30.0;

/// Smooth step: 0 for t <= 0, 1 for t >= 1, flat to all orders at both ends.
pub fn rho(t: f64, lambda_cap: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (lambda_cap / t - lambda_cap / (1.0 - t)).exp())
    }
}

/// Monotone smooth reparametrization of [0,1]: a(0) = 0, a(1) = 1, all
/// derivatives vanish at the endpoints, a(t) = t to within 1e-12 on a band
/// around 1/2, and a(t) + a(1-t) = 1 exactly.
///
/// Realized as t * rho(2t) mirrored about 1/2; the halves agree to infinite
/// order at 1/2 because rho is flat at its endpoints.
pub fn smoothstep_a(t: f64, lambda_cap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("smoothstep argument {t} outside [0,1]")));
    }
    Ok(a_unchecked(t, lambda_cap))
}

pub(crate) fn a_unchecked(t: f64, lambda_cap: f64) -> f64 {
    if t <= 0.5 {
        t * rho(2.0 * t, lambda_cap)
    } else {
        1.0 - (1.0 - t) * rho(2.0 * (1.0 - t), lambda_cap)
    }
}

/// Radial cutoff for the cube collapse: 0 for r <= eps, 1 for r >= 2 eps.
pub fn lambda_cutoff(r: f64, eps: f64, lambda_cap: f64) -> f64 {
    rho((r - eps) / eps, lambda_cap)
}

/// Capsule decay for a clearing field: 1 within distance 2 eps of the
/// transport segment, 0 beyond 3 eps.
pub fn capsule_weight(dist: f64, eps: f64, lambda_cap: f64) -> f64 {
    1.0 - rho((dist - 2.0 * eps) / eps, lambda_cap)
}

/// Radial speed profile of the full-cube contraction: 0 on [0, 1/10],
/// 1 on [1/9, sqrt(n)+1], 0 on [sqrt(n)+2, infinity).
pub fn sigma_profile(r: f64, n: usize, lambda_cap: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    if r < 1.0 / 9.0 {
        rho((r - 0.1) / (1.0 / 9.0 - 0.1), lambda_cap)
    } else if r <= sqrt_n + 1.0 {
        1.0
    } else {
        1.0 - rho(r - (sqrt_n + 1.0), lambda_cap)
    }
}
