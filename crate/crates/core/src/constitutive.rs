//! Scalar constitutive laws of the model.
//!
//! * `psi`: the effective volume density, quadratic up to `c0/2` and affine
//!   beyond, obtained by relaxing the elastic energy against the
//!   eigendeformation cost `c0 |g|`.
//! * `f_surface`: the cohesive surface law, linear with slope `c0` for small
//!   openings and saturating at `c0`.
//! * `g_star`: the pointwise optimal eigendeformation density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material constants: the stress scale `c0` and the displacement cap `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ConstitutiveParams {
    c0: f64,
    k: f64,
}

#[derive(Deserialize)]
struct RawParams {
    c0: f64,
    k: f64,
}

impl TryFrom<RawParams> for ConstitutiveParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.c0, raw.k)
    }
}

impl ConstitutiveParams {
    pub fn new(c0: f64, k: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::InvalidParams(format!("c0 must be positive and finite, got {c0}")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParams(format!("K must be positive and finite, got {k}")));
        }
        Ok(Self { c0, k })
    }

    #[inline]
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Cap on the sup-norm of admissible displacements.
    #[inline]
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Slope of `f_surface` used when linearizing at `t`.
    ///
    /// On the kink `t == 1` the linear-branch slope `c0` is returned.
    #[inline]
    pub fn f_slope(&self, t: f64) -> f64 {
        if t <= 1.0 {
            self.c0
        } else {
            0.0
        }
    }
}

fn check_nonnegative(t: f64) -> Result<()> {
    if t.is_nan() {
        return Err(Error::NonFinite("constitutive argument"));
    }
    if t < 0.0 {
        return Err(Error::NegativeArgument(t));
    }
    Ok(())
}

/// Volume density: `t^2` below `c0/2`, `c0 t - c0^2/4` above.
pub fn psi(t: f64, p: &ConstitutiveParams) -> Result<f64> {
    check_nonnegative(t)?;
    Ok(psi_unchecked(t, p))
}

#[inline]
pub(crate) fn psi_unchecked(t: f64, p: &ConstitutiveParams) -> f64 {
    let c0 = p.c0;
    if t < 0.5 * c0 {
        t * t
    } else {
        c0 * t - 0.25 * c0 * c0
    }
}

/// Cohesive surface law: `c0 t` below 1, `c0` above.
pub fn f_surface(t: f64, p: &ConstitutiveParams) -> Result<f64> {
    check_nonnegative(t)?;
    Ok(f_unchecked(t, p))
}

#[inline]
pub(crate) fn f_unchecked(t: f64, p: &ConstitutiveParams) -> f64 {
    if t < 1.0 {
        p.c0 * t
    } else {
        p.c0
    }
}

/// Unique minimizer of `g -> (up - g)^2 + c0 |g|` (soft thresholding at `c0/2`).
#[inline]
pub fn g_star(up: f64, p: &ConstitutiveParams) -> f64 {
    let half = 0.5 * p.c0;
    if up.abs() > half {
        up - up.signum() * half
    } else {
        0.0
    }
}
