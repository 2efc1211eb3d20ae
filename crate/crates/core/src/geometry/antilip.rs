use nalgebra::dvector;

use super::{gbd, loop_integral, GeometryContext, TrianglePath};
use crate::error::{check_dim, Error, Result};
use crate::operator::VectorField;

/// `(∮_{abc} F - ω_F(a, c)) / (ω_H(a, b) + ω_H(b, c))`.
///
/// Any `L` and `m` for which `F` is `L`-relatively Lipschitz and
/// `m`-relatively strongly monotone with respect to `H` must satisfy
/// `L - m ≥` this ratio.
pub fn anti_lipschitz_ratio(
    ctx: &GeometryContext,
    field_f: &VectorField,
    field_h: &VectorField,
    path: &TrianglePath,
) -> Result<f64> {
    check_dim(field_f.dim(), field_h.dim())?;
    let TrianglePath { a, b, c } = path;
    let denom = gbd(ctx, field_h, a, b)? + gbd(ctx, field_h, b, c)?;
    if !(denom > 1e-300) {
        return Err(Error::DegenerateTriangle(denom));
    }
    let num = loop_integral(ctx, field_f, path)? - gbd(ctx, field_f, a, c)?;
    Ok(num / denom)
}

/// `(B θ² - E⁴ θ⁴) / (5θ⁴/4)`.
pub fn d_theta(b: f64, e: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    let t2 = theta * theta;
    let t4 = t2 * t2;
    Ok((b * t2 - e.powi(4) * t4) / (1.25 * t4))
}

/// The planar triangle `a = (θ, θ)`, `b = (0, 0)`, `c = (0, θ)`.
pub fn norelip_triangle(theta: f64) -> TrianglePath {
    TrianglePath {
        a: dvector![theta, theta],
        b: dvector![0.0, 0.0],
        c: dvector![0.0, theta],
    }
}
