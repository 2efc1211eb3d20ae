//! Sampled certificates for relative smoothness, relative strong
//! monotonicity and conservativeness.
//!
//! Every check here is empirical: it reports the worst value over the
//! sampled points, which bounds the global quantity from one side only.

use rayon::prelude::*;

use super::{gbd, loop_integral, BoxSampler, GeometryContext, TrianglePath};
use crate::error::{check_dim, Error, Result};
use crate::operator::{symmetric_min_eig, Point, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub holds: bool,
    /// Smallest eigenvalue of the tested symmetric matrix over all samples.
    pub worst_margin: f64,
    pub worst_point: Point,
    pub samples: usize,
    pub tolerance: f64,
}

/// Worst `λ_min(sym(a ∇H(z) + b ∇F(z)))` over the sampled points. Points
/// are drawn sequentially and reduced in sample order, so the report does
/// not depend on thread scheduling.
fn jacobian_certificate(
    field_f: &VectorField,
    field_h: &VectorField,
    a: f64,
    b: f64,
    sampler: &BoxSampler,
    n: usize,
    tol: f64,
) -> Result<CertificateReport> {
    check_dim(field_f.dim(), field_h.dim())?;
    check_dim(field_f.dim(), sampler.dim)?;
    if n == 0 {
        return Err(Error::InvalidParameter("certificate needs at least one sample".into()));
    }
    let points = sampler.points(n);
    let margins: Vec<Result<f64>> = points
        .par_iter()
        .map(|z| {
            let m = field_h.jacobian(z)? * a + field_f.jacobian(z)? * b;
            symmetric_min_eig(&m)
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0;
    for (i, m) in margins.into_iter().enumerate() {
        let m = m?;
        if m < worst {
            worst = m;
            worst_idx = i;
        }
    }
    Ok(CertificateReport {
        holds: worst >= -tol,
        worst_margin: worst,
        worst_point: points[worst_idx].clone(),
        samples: n,
        tolerance: tol,
    })
}

/// Checks `hᵀ(L ∇H(z) - ∇F(z))h ≥ 0` at sampled `z`, i.e. that `F` is
/// `L`-smooth relative to `H`.
pub fn rel_smooth_certificate(
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    sampler: &BoxSampler,
    n: usize,
    tol: f64,
) -> Result<CertificateReport> {
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("relative smoothness constant {l}")));
    }
    jacobian_certificate(field_f, field_h, l, -1.0, sampler, n, tol)
}

/// Checks `hᵀ(∇F(z) - m ∇H(z))h ≥ 0` at sampled `z`, i.e. that `F` is
/// `m`-strongly monotone relative to `H`.
pub fn rel_strong_mono_certificate(
    field_f: &VectorField,
    field_h: &VectorField,
    m: f64,
    sampler: &BoxSampler,
    n: usize,
    tol: f64,
) -> Result<CertificateReport> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("strong monotonicity constant {m}")));
    }
    jacobian_certificate(field_f, field_h, -m, 1.0, sampler, n, tol)
}

/// Checks that the symmetric part of `∇F` is positive semidefinite.
pub fn monotonicity_certificate(
    field: &VectorField,
    sampler: &BoxSampler,
    n: usize,
    tol: f64,
) -> Result<CertificateReport> {
    jacobian_certificate(field, field, 0.0, 1.0, sampler, n, tol)
}

fn max_abs_loop(ctx: &GeometryContext, field: &VectorField, tris: &[TrianglePath]) -> Result<f64> {
    let vals: Vec<Result<f64>> = tris.par_iter().map(|t| loop_integral(ctx, field, t)).collect();
    let mut worst: f64 = 0.0;
    for v in vals {
        worst = worst.max(v?.abs());
    }
    Ok(worst)
}

/// Largest `|∮ F|` over sampled triangles: a lower bound on the smallest
/// `δ` for which `F` is `δ`-conservative.
pub fn conservativeness_estimate(
    ctx: &GeometryContext,
    field: &VectorField,
    sampler: &BoxSampler,
    n_loops: usize,
) -> Result<f64> {
    check_dim(field.dim(), sampler.dim)?;
    if n_loops == 0 {
        return Err(Error::InvalidParameter("n_loops must be at least 1".into()));
    }
    max_abs_loop(ctx, field, &sampler.triangles(n_loops))
}

/// Largest `|∮ (E - F)|` over sampled triangles.
pub fn co_conservativeness_estimate(
    ctx: &GeometryContext,
    field_e: &VectorField,
    field_f: &VectorField,
    sampler: &BoxSampler,
    n_loops: usize,
) -> Result<f64> {
    let delta = field_e.sub(field_f)?;
    conservativeness_estimate(ctx, &delta, sampler, n_loops)
}

/// `L ω_H(z_b, z_a) - ω_F(z_b, z_a)`, nonnegative for relatively smooth
/// pairs.
pub fn relative_gbd_margin(
    ctx: &GeometryContext,
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    z_a: &Point,
    z_b: &Point,
) -> Result<f64> {
    Ok(l * gbd(ctx, field_h, z_b, z_a)? - gbd(ctx, field_f, z_b, z_a)?)
}

/// `L(ω_H(b, c) + ω_H(a, b)) - ∮_{abc} F - ⟨F(c) - F(b), a - b⟩`,
/// nonnegative for relatively smooth pairs.
pub fn relative_lipschitz_slack(
    ctx: &GeometryContext,
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    path: &TrianglePath,
) -> Result<f64> {
    let TrianglePath { a, b, c } = path;
    let dist = gbd(ctx, field_h, b, c)? + gbd(ctx, field_h, a, b)?;
    let cross = (field_f.eval(c)? - field_f.eval(b)?).dot(&(a - b));
    Ok(l * dist - loop_integral(ctx, field_f, path)? - cross)
}
