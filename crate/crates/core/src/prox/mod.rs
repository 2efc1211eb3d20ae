//! Proximal sub-problems of the mirror-free methods.
//!
//! In the unconstrained setting both `Prox_H(z_a, z_b)` and its strongly
//! monotone variant reduce to the nonlinear equation
//!
//! ```text
//! R(z') = F(z_b) + L (H(z') - H(z_a)) + m (H(z') - H(z_b)) = 0
//! ```
//!
//! with `m = 0` for the plain step. [`prox_generic`] solves it by damped
//! Newton; [`third_order`] has the closed-form route for the regularized
//! Taylor model.

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::operator::{Point, VectorField};

pub mod third_order;

pub use third_order::{
    lambda_rootfind, third_order_prox, third_order_prox_sm, third_order_prox_step, LambdaSolve, MirrorVariant,
    ShiftedResolvent, ThirdOrderModel,
};

/// Maximum number of step halvings before the gradient fallback.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct ProxSpec<'a> {
    pub field_f: &'a VectorField,
    pub field_h: &'a VectorField,
    pub l: f64,
    /// Zero for the plain step.
    pub m: f64,
    pub anchor: &'a Point,
    pub query: &'a Point,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Newton starting point; defaults to the anchor.
    pub initial: Option<&'a Point>,
}

impl<'a> ProxSpec<'a> {
    pub fn new(
        field_f: &'a VectorField,
        field_h: &'a VectorField,
        l: f64,
        anchor: &'a Point,
        query: &'a Point,
    ) -> Self {
        Self {
            field_f,
            field_h,
            l,
            m: 0.0,
            anchor,
            query,
            tolerance: 1e-10,
            max_iter: 100,
            initial: None,
        }
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_initial(mut self, z0: &'a Point) -> Self {
        self.initial = Some(z0);
        self
    }

    fn validate(&self) -> Result<()> {
        let d = self.field_f.dim();
        check_dim(d, self.field_h.dim())?;
        check_dim(d, self.anchor.len())?;
        check_dim(d, self.query.len())?;
        if let Some(z0) = self.initial {
            check_dim(d, z0.len())?;
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidParameter(format!("L must be positive, got {}", self.l)));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "m must be nonnegative, got {}",
                self.m
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    /// `F(z_b) + L (H(z) - H(z_a)) + m (H(z) - H(z_b))`.
    pub fn residual(&self, z: &Point) -> Result<DVector<f64>> {
        let hz = self.field_h.eval(z)?;
        let mut r = self.field_f.eval(self.query)? + (&hz - self.field_h.eval(self.anchor)?) * self.l;
        if self.m != 0.0 {
            r += (hz - self.field_h.eval(self.query)?) * self.m;
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub z_prime: Point,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton on the prox residual, with Jacobian `(L + m) ∇H(z')`.
///
/// A full Newton step is halved until the residual norm decreases. If 30
/// halvings do not help, or the Newton system cannot be solved, a
/// steepest-descent step on `½‖R‖²` is tried instead. Running out of
/// iterations returns the best iterate with `converged = false`.
pub fn prox_generic(spec: &ProxSpec<'_>) -> Result<ProxResult> {
    spec.validate()?;
    let scale = spec.l + spec.m;
    let h_anchor = spec.field_h.eval(spec.anchor)?;
    let mut c0 = spec.field_f.eval(spec.query)? - h_anchor * spec.l;
    if spec.m != 0.0 {
        c0 -= spec.field_h.eval(spec.query)? * spec.m;
    }
    let residual = |z: &Point| -> Result<DVector<f64>> { Ok(&c0 + spec.field_h.eval(z)? * scale) };

    let mut z = spec.initial.unwrap_or(spec.anchor).clone();
    let mut r = residual(&z)?;
    let mut rn = r.norm();
    let mut iterations = 0;
    while iterations < spec.max_iter {
        if rn <= spec.tolerance {
            break;
        }
        iterations += 1;
        let jac = spec.field_h.jacobian(&z)? * scale;
        let newton = jac
            .clone()
            .lu()
            .solve(&(-&r))
            .filter(|dz| dz.iter().all(|v| v.is_finite()));
        let newton_failed = newton.is_none();
        let mut accepted = newton.and_then(|dz| backtrack(&residual, &z, &dz, 1.0, rn));
        if accepted.is_none() {
            trace!("prox_generic: Newton step rejected at iteration {iterations}, residual {rn:e}");
            accepted = gradient_step(&residual, &jac, &z, &r, rn);
        }
        match accepted {
            Some((z_new, r_new, rn_new)) => {
                z = z_new;
                r = r_new;
                rn = rn_new;
            }
            None if newton_failed => return Err(Error::SingularSystem("prox Newton system")),
            // No descent is possible from here; report the stagnated iterate.
            None => break,
        }
    }
    Ok(ProxResult {
        z_prime: z,
        residual_norm: rn,
        iterations,
        converged: rn <= spec.tolerance,
    })
}

type Step = (Point, DVector<f64>, f64);

fn backtrack<R>(residual: &R, z: &Point, dz: &DVector<f64>, alpha0: f64, rn: f64) -> Option<Step>
where
    R: Fn(&Point) -> Result<DVector<f64>>,
{
    let mut alpha = alpha0;
    for _ in 0..=MAX_HALVINGS {
        let z_try = z + dz * alpha;
        if let Ok(r_try) = residual(&z_try) {
            let n = r_try.norm();
            if n < rn {
                return Some((z_try, r_try, n));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Cauchy step along `-Jᵀ R` for the linearized least-squares problem.
fn gradient_step<R>(residual: &R, jac: &DMatrix<f64>, z: &Point, r: &DVector<f64>, rn: f64) -> Option<Step>
where
    R: Fn(&Point) -> Result<DVector<f64>>,
{
    let g = jac.transpose() * r;
    let jg = jac * &g;
    let denom = jg.norm_squared();
    if !(denom > 0.0 && denom.is_finite()) {
        return None;
    }
    let alpha = g.norm_squared() / denom;
    backtrack(residual, z, &(-g), alpha, rn)
}
