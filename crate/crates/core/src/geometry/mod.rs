//! Line integrals, generalized Bregman divergences and loop integrals.
//!
//! All paths are straight segments, integrated with a fixed Gauss–Legendre
//! rule on `[0, 1]`. With the default 16 nodes every polynomial field of
//! degree at most 31 along a segment is integrated exactly up to roundoff.

use crate::error::{check_dim, Error, Result};
use crate::operator::{Point, VectorField};

mod antilip;
mod certificate;
mod sampling;

pub use antilip::{anti_lipschitz_ratio, d_theta, norelip_triangle};
pub use certificate::{
    co_conservativeness_estimate, conservativeness_estimate, monotonicity_certificate, rel_smooth_certificate,
    rel_strong_mono_certificate, relative_gbd_margin, relative_lipschitz_slack, CertificateReport,
};
pub use sampling::{halton, BoxSampler};

pub const DEFAULT_QUADRATURE_NODES: usize = 16;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryContext {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for GeometryContext {
    fn default() -> Self {
        Self::new(DEFAULT_QUADRATURE_NODES).expect("default quadrature")
    }
}

impl GeometryContext {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
        }
        let (x, w) = gauss_legendre(n);
        let nodes = x.iter().map(|xi| 0.5 * (xi + 1.0)).collect();
        let weights = w.iter().map(|wi| 0.5 * wi).collect();
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫₀¹ g(t) dt` for a scalar integrand.
    pub fn integrate<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(t)).sum()
    }
}

/// Nodes and weights on `[-1, 1]`, by Newton iteration on the Legendre
/// three-term recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Closed triangle path `a → b → c → a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrianglePath {
    pub a: Point,
    pub b: Point,
    pub c: Point,
}

impl TrianglePath {
    pub fn new(a: Point, b: Point, c: Point) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        check_dim(a.len(), c.len())?;
        Ok(Self { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// `∫₀¹ ⟨F(z_a + t(z_b - z_a)), z_b - z_a⟩ dt`.
pub fn line_integral(ctx: &GeometryContext, field: &VectorField, z_a: &Point, z_b: &Point) -> Result<f64> {
    check_dim(field.dim(), z_a.len())?;
    check_dim(field.dim(), z_b.len())?;
    let delta = z_b - z_a;
    if delta.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (&t, &w) in ctx.nodes.iter().zip(&ctx.weights) {
        let p = z_a + &delta * t;
        acc += w * field.eval(&p)?.dot(&delta);
    }
    if !acc.is_finite() {
        return Err(Error::NonFinite("line integral"));
    }
    Ok(acc)
}

/// Generalized Bregman divergence
/// `ω(to, from) = ∫_{from}^{to} F·dr - ⟨F(from), to - from⟩`.
pub fn gbd(ctx: &GeometryContext, field: &VectorField, to: &Point, from: &Point) -> Result<f64> {
    let li = line_integral(ctx, field, from, to)?;
    Ok(li - field.eval(from)?.dot(&(to - from)))
}

/// `∮` over `a → b → c → a`.
pub fn loop_integral(ctx: &GeometryContext, field: &VectorField, path: &TrianglePath) -> Result<f64> {
    Ok(line_integral(ctx, field, &path.a, &path.b)?
        + line_integral(ctx, field, &path.b, &path.c)?
        + line_integral(ctx, field, &path.c, &path.a)?)
}

/// Absolute defect of the three-point identity
/// `ω(a,c) + ω(c,b) - ω(a,b) = ∮_{abc} F + ⟨F(b) - F(c), a - c⟩`.
pub fn three_point_residual(
    ctx: &GeometryContext,
    field: &VectorField,
    z_a: &Point,
    z_b: &Point,
    z_c: &Point,
) -> Result<f64> {
    let path = TrianglePath::new(z_a.clone(), z_b.clone(), z_c.clone())?;
    let lhs = gbd(ctx, field, z_a, z_c)? + gbd(ctx, field, z_c, z_b)? - gbd(ctx, field, z_a, z_b)?;
    let cross = (field.eval(z_b)? - field.eval(z_c)?).dot(&(z_a - z_c));
    Ok((lhs - loop_integral(ctx, field, &path)? - cross).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::fields;
    use crate::operator::MinMaxSplit;
    use nalgebra::dvector;

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 2, 5, 16, 33] {
            let ctx = GeometryContext::new(n).unwrap();
            let s: f64 = ctx.weights().iter().sum();
            assert!((s - 1.0).abs() <= 1e-14, "n={n}: {s}");
            assert!(ctx.nodes().windows(2).all(|w| w[0] < w[1]));
        }
        assert!(GeometryContext::new(0).is_err());
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_31() {
        let ctx = GeometryContext::default();
        for k in 0..=31 {
            let v = ctx.integrate(|t| t.powi(k));
            let exact = 1.0 / (k as f64 + 1.0);
            assert!((v - exact).abs() <= 1e-14, "degree {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn line_integral_examples() {
        let ctx = GeometryContext::default();
        let id = fields::identity(3).unwrap();
        let v = dvector![1.0, -2.0, 0.5];
        assert_eq!(line_integral(&ctx, &id, &v, &v).unwrap(), 0.0);
        let z0 = Point::zeros(3);
        let li = line_integral(&ctx, &id, &z0, &v).unwrap();
        assert!((li - v.norm_squared() / 2.0).abs() < 1e-14);

        let h = fields::block_cubic(MinMaxSplit::new(1, 1).unwrap(), 1.0).unwrap();
        for theta in [1.0, 0.3, 2.0] {
            let li = line_integral(&ctx, &h, &dvector![0.0, 0.0], &dvector![theta, theta]).unwrap();
            let expect = 2.0 * theta.powi(4) / 4.0;
            assert!((li - expect).abs() <= 1e-14 * expect.max(1.0));
        }
    }

    #[test]
    fn gbd_examples() {
        let ctx = GeometryContext::default();
        let id = fields::identity(2).unwrap();
        let a = dvector![0.3, 1.0];
        let b = dvector![-1.0, 2.5];
        assert_eq!(gbd(&ctx, &id, &a, &a).unwrap(), 0.0);
        assert!((gbd(&ctx, &id, &b, &a).unwrap() - (&b - &a).norm_squared() / 2.0).abs() < 1e-14);

        let h = fields::block_cubic(MinMaxSplit::new(1, 1).unwrap(), 1.0).unwrap();
        let theta: f64 = 0.7;
        let w = gbd(&ctx, &h, &dvector![0.0, 0.0], &dvector![0.0, theta]).unwrap();
        assert!((w - 0.75 * theta.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn loop_integral_examples() {
        let ctx = GeometryContext::default();
        let rot = fields::rotation();
        for theta in [1.0, 0.5, 3.0] {
            let p = norelip_triangle(theta);
            let v = loop_integral(&ctx, &rot, &p).unwrap();
            assert!((v - theta * theta).abs() <= 1e-14 * theta * theta);
        }
        let id = fields::identity(2).unwrap();
        let p = TrianglePath::new(dvector![1.0, 0.0], dvector![-0.2, 3.0], dvector![0.4, -1.0]).unwrap();
        assert!(loop_integral(&ctx, &id, &p).unwrap().abs() < 1e-14);
        let pt = dvector![0.3, 0.3];
        let deg = TrianglePath::new(pt.clone(), pt.clone(), pt).unwrap();
        assert_eq!(loop_integral(&ctx, &rot, &deg).unwrap(), 0.0);
        assert!(TrianglePath::new(dvector![1.0], dvector![1.0, 2.0], dvector![0.0]).is_err());
    }

    #[test]
    fn three_point_identity_examples() {
        let ctx = GeometryContext::default();
        let id = fields::identity(3).unwrap();
        let z = dvector![0.1, 0.2, 0.3];
        assert_eq!(three_point_residual(&ctx, &id, &z, &z, &z).unwrap(), 0.0);
        let s = BoxSampler::new(3, -2.0, 2.0, 11).unwrap();
        for t in s.triangles(50) {
            assert!(three_point_residual(&ctx, &id, &t.a, &t.b, &t.c).unwrap() <= 1e-12);
        }
        let rot = fields::rotation();
        let s = BoxSampler::new(2, -2.0, 2.0, 12).unwrap();
        for t in s.triangles(50) {
            assert!(three_point_residual(&ctx, &rot, &t.a, &t.b, &t.c).unwrap() <= 1e-12);
        }
    }
}
