//! Vector fields `Z -> R^d` with optional analytic derivatives.
//!
//! A [`VectorField`] is a shared closure plus optional closures for its
//! Jacobian and its second directional derivative `∇²Φ(z)[h,h]`. Missing
//! derivatives fall back to central finite differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

pub mod fields;

pub type Point = DVector<f64>;

type EvalFn = dyn Fn(&Point) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&Point) -> DMatrix<f64> + Send + Sync;
type SecondFn = dyn Fn(&Point, &Point) -> DVector<f64> + Send + Sync;

/// An operator on `R^d`. Cheap to clone; all closures are shared.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<EvalFn>,
    jac: Option<Arc<JacFn>>,
    second: Option<Arc<SecondFn>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jac.is_some())
            .field("analytic_second", &self.second.is_some())
            .finish()
    }
}

/// Default central-difference step: `cbrt(eps) * max(1, ‖z‖)`.
pub fn default_fd_step(z: &Point) -> f64 {
    f64::EPSILON.cbrt() * z.norm().max(1.0)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl VectorField {
    pub fn new<F>(dim: usize, eval: F) -> Result<Self>
    where
        F: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            dim,
            eval: Arc::new(eval),
            jac: None,
            second: None,
        })
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn with_second_directional<S>(mut self, second: S) -> Self
    where
        S: Fn(&Point, &Point) -> DVector<f64> + Send + Sync + 'static,
    {
        self.second = Some(Arc::new(second));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn has_analytic_second(&self) -> bool {
        self.second.is_some()
    }

    /// Evaluates the field, rejecting wrong dimensions and non-finite output.
    pub fn eval(&self, z: &Point) -> Result<DVector<f64>> {
        check_dim(self.dim, z.len())?;
        let v = (self.eval)(z);
        check_dim(self.dim, v.len())?;
        if !all_finite(v.as_slice()) {
            return Err(Error::NonFinite("field evaluation"));
        }
        Ok(v)
    }

    /// Analytic Jacobian when available, otherwise central differences with
    /// [`default_fd_step`].
    pub fn jacobian(&self, z: &Point) -> Result<DMatrix<f64>> {
        check_dim(self.dim, z.len())?;
        match &self.jac {
            Some(j) => {
                let m = j(z);
                if m.nrows() != self.dim || m.ncols() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                if !all_finite(m.as_slice()) {
                    return Err(Error::NonFinite("jacobian"));
                }
                Ok(m)
            }
            None => self.jacobian_fd(z, default_fd_step(z)),
        }
    }

    /// Central-difference Jacobian; column `j` is
    /// `(F(z + s e_j) - F(z - s e_j)) / 2s`.
    pub fn jacobian_fd(&self, z: &Point, step: f64) -> Result<DMatrix<f64>> {
        check_dim(self.dim, z.len())?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("finite-difference step {step}")));
        }
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        let mut zp = z.clone();
        for j in 0..d {
            let orig = zp[j];
            zp[j] = orig + step;
            let fp = self.eval(&zp)?;
            zp[j] = orig - step;
            let fm = self.eval(&zp)?;
            zp[j] = orig;
            out.set_column(j, &((fp - fm) / (2.0 * step)));
        }
        Ok(out)
    }

    /// Jacobian-vector product `∇F(z) h`.
    pub fn jvp(&self, z: &Point, h: &Point) -> Result<DVector<f64>> {
        check_dim(self.dim, h.len())?;
        Ok(self.jacobian(z)? * h)
    }

    /// `∇²F(z)[h, h]`. Without an analytic form this differences the
    /// Jacobian-vector product (or the field itself when no Jacobian is
    /// available) along `h`, with the step scaled by `1/‖h‖`.
    pub fn second_directional(&self, z: &Point, h: &Point) -> Result<DVector<f64>> {
        check_dim(self.dim, z.len())?;
        check_dim(self.dim, h.len())?;
        if let Some(s) = &self.second {
            let v = s(z, h);
            check_dim(self.dim, v.len())?;
            if !all_finite(v.as_slice()) {
                return Err(Error::NonFinite("second directional derivative"));
            }
            return Ok(v);
        }
        let hn = h.norm();
        if hn == 0.0 {
            return Ok(DVector::zeros(self.dim));
        }
        let scale = z.norm().max(1.0) / hn;
        let v = if self.jac.is_some() {
            let t = f64::EPSILON.cbrt() * scale;
            let jp = self.jvp(&(z + h * t), h)?;
            let jm = self.jvp(&(z - h * t), h)?;
            (jp - jm) / (2.0 * t)
        } else {
            let t = f64::EPSILON.powf(0.25) * scale;
            let fp = self.eval(&(z + h * t))?;
            let f0 = self.eval(z)?;
            let fm = self.eval(&(z - h * t))?;
            (fp - f0 * 2.0 + fm) / (t * t)
        };
        if !all_finite(v.as_slice()) {
            return Err(Error::NonFinite("second directional derivative"));
        }
        Ok(v)
    }

    /// `c · F`, keeping derivative information.
    pub fn scaled(&self, c: f64) -> VectorField {
        self.combine(c, None, 0.0)
    }

    /// `a · self + b · other`.
    pub fn linear_combination(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField> {
        check_dim(self.dim, other.dim)?;
        Ok(self.combine(a, Some(other), b))
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.linear_combination(1.0, other, -1.0)
    }

    fn combine(&self, a: f64, other: Option<&VectorField>, b: f64) -> VectorField {
        let f1 = self.eval.clone();
        let f2 = other.map(|o| o.eval.clone());
        let eval = move |z: &Point| {
            let mut v = f1(z) * a;
            if let Some(f2) = &f2 {
                v += f2(z) * b;
            }
            v
        };
        let jac = match (&self.jac, other.map(|o| &o.jac)) {
            (Some(j1), None) => {
                let j1 = j1.clone();
                Some(Arc::new(move |z: &Point| j1(z) * a) as Arc<JacFn>)
            }
            (Some(j1), Some(Some(j2))) => {
                let (j1, j2) = (j1.clone(), j2.clone());
                Some(Arc::new(move |z: &Point| j1(z) * a + j2(z) * b) as Arc<JacFn>)
            }
            _ => None,
        };
        let second = match (&self.second, other.map(|o| &o.second)) {
            (Some(s1), None) => {
                let s1 = s1.clone();
                Some(Arc::new(move |z: &Point, h: &Point| s1(z, h) * a) as Arc<SecondFn>)
            }
            (Some(s1), Some(Some(s2))) => {
                let (s1, s2) = (s1.clone(), s2.clone());
                Some(Arc::new(move |z: &Point, h: &Point| s1(z, h) * a + s2(z, h) * b) as Arc<SecondFn>)
            }
            _ => None,
        };
        VectorField {
            dim: self.dim,
            eval: Arc::new(eval),
            jac,
            second,
        }
    }

    /// The field in offset coordinates, `h ↦ F(center + h)`.
    pub fn recentered(&self, center: &Point) -> Result<VectorField> {
        check_dim(self.dim, center.len())?;
        let c = center.clone();
        let f = self.eval.clone();
        let mut out = VectorField {
            dim: self.dim,
            eval: Arc::new(move |h: &Point| f(&(&c + h))),
            jac: None,
            second: None,
        };
        if let Some(j) = &self.jac {
            let (j, c) = (j.clone(), center.clone());
            out.jac = Some(Arc::new(move |h: &Point| j(&(&c + h))));
        }
        if let Some(s) = &self.second {
            let (s, c) = (s.clone(), center.clone());
            out.second = Some(Arc::new(move |h: &Point, u: &Point| s(&(&c + h), u)));
        }
        Ok(out)
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn symmetric_min_eig(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::ZeroDimension);
    }
    if !all_finite(m.as_slice()) {
        return Err(Error::NonFinite("symmetric_min_eig input"));
    }
    let eig = SymmetricEigen::try_new(symmetric_part(m), f64::EPSILON, 0).ok_or(Error::EigenFailure)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `max|a - b| / max(1, max|b|)`, the error metric used to compare
/// derivatives against their finite-difference oracles.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_relative_error: length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Contiguous split `z = (x, y)` of the coordinates of a min-max problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinMaxSplit {
    pub dim_x: usize,
    pub dim_y: usize,
}

impl MinMaxSplit {
    pub fn new(dim_x: usize, dim_y: usize) -> Result<Self> {
        if dim_x == 0 || dim_y == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self { dim_x, dim_y })
    }

    /// Equal blocks of size `n`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn x(&self, z: &Point) -> DVector<f64> {
        z.rows(0, self.dim_x).into_owned()
    }

    pub fn y(&self, z: &Point) -> DVector<f64> {
        z.rows(self.dim_x, self.dim_y).into_owned()
    }

    pub fn join(&self, x: &DVector<f64>, y: &DVector<f64>) -> Point {
        let mut z = DVector::zeros(self.dim());
        z.rows_mut(0, self.dim_x).copy_from(x);
        z.rows_mut(self.dim_x, self.dim_y).copy_from(y);
        z
    }

    /// `(x, y) ↦ (y, x)`; only defined for equal blocks.
    pub fn swap(&self, z: &Point) -> Result<Point> {
        check_dim(self.dim_x, self.dim_y)?;
        check_dim(self.dim(), z.len())?;
        Ok(self.join(&self.y(z), &self.x(z)))
    }
}

/// `F(x, y) = (∇_x f(x, y), -∇_y f(x, y))` from the two partial gradients.
///
/// The Jacobian is left to finite differences; attach an analytic one with
/// [`VectorField::with_jacobian`] when it is known.
pub fn build_minmax_field<GX, GY>(grad_x: GX, grad_y: GY, split: MinMaxSplit) -> Result<VectorField>
where
    GX: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    GY: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
{
    let split = MinMaxSplit::new(split.dim_x, split.dim_y)?;
    VectorField::new(split.dim(), move |z| {
        let (x, y) = (split.x(z), split.y(z));
        let gx = grad_x(&x, &y);
        let gy = grad_y(&x, &y);
        if gx.len() != split.dim_x || gy.len() != split.dim_y {
            // Surfaces as a dimension mismatch in `eval`.
            return DVector::zeros(gx.len() + gy.len() + 1);
        }
        split.join(&gx, &(-gy))
    })
}
