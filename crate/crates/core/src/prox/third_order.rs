//! The regularized second-order Taylor model of a monotone operator `Φ` and
//! its closed-form proximal steps.
//!
//! In the offset variable `h = z - z_a`, with `J = ∇Φ(z_a)`,
//! `Q[h, h] = ∇²Φ(z_a)[h, h]`, `s = 1 - 1/τ` and `κ = M - τ L₃`:
//!
//! ```text
//! F(h)  = Φ(z_a) + J h + c₂ Q[h, h] + (M/2) ‖h‖² h
//! H(h)  =          s J h            + (κ/2) ‖h‖² h      (standard)
//! H'(h) = Φ(z_a) + s S h            + (κ/2) ‖h‖² h      (conservative)
//! ```
//!
//! where `S = (J + Jᵀ)/2` and `c₂ = ½` by default. For `M ≥ τ² L₃`, `F` is
//! `(τ+1)/(τ-1)`-smooth and 1-strongly monotone relative to either mirror.
//!
//! Because `H` is linear plus a multiple of `∇d₄`, every prox equation takes
//! the form `(G + c ‖z'‖²) z' = -U`. Writing `λ = c ‖z'‖²` gives
//! `z' = -(G + λI)⁻¹ U` and the scalar fixed point
//! `λ = c ‖(G + λI)⁻¹ U‖²`, solved by [`lambda_rootfind`].

use log::debug;
use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::ProxResult;
use crate::error::{check_dim, Error, Result};
use crate::operator::fields::{cubic_jacobian, cubic_second};
use crate::operator::{symmetric_part, Point, VectorField};

const MAX_DOUBLINGS: usize = 200;
const MAX_REFINEMENTS: usize = 100;
/// Relative tolerance on the scalar fixed point inside the prox solvers.
const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MirrorVariant {
    /// `H(h) = s J h + (κ/2)‖h‖² h`.
    Standard,
    /// `H'(h) = Φ(z_a) + s S h + (κ/2)‖h‖² h`, a gradient field.
    Conservative,
}

#[derive(Debug, Clone)]
pub struct ThirdOrderModel {
    phi: VectorField,
    z_a: Point,
    m_reg: f64,
    tau: f64,
    l3: f64,
    second_order_coeff: f64,
    phi_at_za: DVector<f64>,
    jac_phi_at_za: DMatrix<f64>,
    /// `slices[j]` has columns `∇²Φ(z_a)[e_j, e_k]`.
    slices: Vec<DMatrix<f64>>,
}

impl ThirdOrderModel {
    /// Builds the model of `phi` at `z_a` with regularization `M = m_reg`.
    ///
    /// Requires `τ > 1`, `L₃ ≥ 0` and `M > τ L₃`. The relative constants are
    /// only guaranteed for `M ≥ τ² L₃`; see
    /// [`ThirdOrderModel::meets_sufficient_condition`].
    pub fn new(phi: VectorField, z_a: Point, m_reg: f64, tau: f64, l3: f64) -> Result<Self> {
        check_dim(phi.dim(), z_a.len())?;
        if !(tau > 1.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must exceed 1, got {tau}")));
        }
        if !(l3 >= 0.0 && l3.is_finite()) {
            return Err(Error::InvalidParameter(format!("L3 must be nonnegative, got {l3}")));
        }
        if !(m_reg > tau * l3 && m_reg.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "M = {m_reg} must exceed tau * L3 = {}",
                tau * l3
            )));
        }
        let d = phi.dim();
        let phi_at_za = phi.eval(&z_a)?;
        let jac_phi_at_za = phi.jacobian(&z_a)?;
        let mut slices = vec![DMatrix::zeros(d, d); d];
        let mut e = DVector::zeros(d);
        for j in 0..d {
            for k in j..d {
                e.fill(0.0);
                e[j] += 1.0;
                e[k] += 1.0;
                let plus = phi.second_directional(&z_a, &e)?;
                e[k] -= 2.0;
                let minus = phi.second_directional(&z_a, &e)?;
                // Polarization: Q[e_j, e_k] = (Q[e_j+e_k] - Q[e_j-e_k]) / 4.
                let col = (plus - minus) * 0.25;
                slices[j].set_column(k, &col);
                slices[k].set_column(j, &col);
            }
        }
        Ok(Self {
            phi,
            z_a,
            m_reg,
            tau,
            l3,
            second_order_coeff: 0.5,
            phi_at_za,
            jac_phi_at_za,
            slices,
        })
    }

    /// Overrides the coefficient of `∇²Φ(z_a)[h, h]` in the model operator.
    pub fn with_second_order_coeff(mut self, c2: f64) -> Self {
        self.second_order_coeff = c2;
        self
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn phi(&self) -> &VectorField {
        &self.phi
    }

    pub fn z_a(&self) -> &Point {
        &self.z_a
    }

    pub fn m_reg(&self) -> f64 {
        self.m_reg
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn l3(&self) -> f64 {
        self.l3
    }

    pub fn second_order_coeff(&self) -> f64 {
        self.second_order_coeff
    }

    pub fn phi_at_za(&self) -> &DVector<f64> {
        &self.phi_at_za
    }

    pub fn jac_phi_at_za(&self) -> &DMatrix<f64> {
        &self.jac_phi_at_za
    }

    /// `κ = M - τ L₃`.
    pub fn kappa(&self) -> f64 {
        self.m_reg - self.tau * self.l3
    }

    /// `s = 1 - 1/τ`.
    pub fn mirror_scale(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }

    /// `(τ + 1)/(τ - 1)`.
    pub fn relative_smoothness(&self) -> f64 {
        (self.tau + 1.0) / (self.tau - 1.0)
    }

    /// `M ≥ τ² L₃`, under which both Jacobian certificates hold.
    pub fn meets_sufficient_condition(&self) -> bool {
        self.m_reg >= self.tau * self.tau * self.l3
    }

    /// `∇²Φ(z_a)[h, h]`.
    pub fn second_dir_at_za(&self, h: &Point) -> DVector<f64> {
        self.bilinear(h, h)
    }

    /// `∇²Φ(z_a)[h, u]`.
    pub fn bilinear(&self, h: &Point, u: &Point) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (j, sl) in self.slices.iter().enumerate() {
            if h[j] != 0.0 {
                out += sl * u * h[j];
            }
        }
        out
    }

    /// The matrix `u ↦ ∇²Φ(z_a)[h, u]`.
    fn contracted(&self, h: &Point) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (j, sl) in self.slices.iter().enumerate() {
            if h[j] != 0.0 {
                out += sl * h[j];
            }
        }
        out
    }

    fn mirror_linear_part(&self, variant: MirrorVariant) -> DMatrix<f64> {
        match variant {
            MirrorVariant::Standard => self.jac_phi_at_za.clone(),
            MirrorVariant::Conservative => symmetric_part(&self.jac_phi_at_za),
        }
    }

    fn mirror_offset(&self, variant: MirrorVariant) -> DVector<f64> {
        match variant {
            MirrorVariant::Standard => DVector::zeros(self.dim()),
            MirrorVariant::Conservative => self.phi_at_za.clone(),
        }
    }

    /// The model operator `F` in the offset variable.
    pub fn model_operator(&self) -> VectorField {
        let model = self.clone();
        let jm = self.clone();
        let sm = self.clone();
        let half_m = 0.5 * self.m_reg;
        let c2 = self.second_order_coeff;
        VectorField::new(self.dim(), move |h: &Point| {
            &model.phi_at_za + &model.jac_phi_at_za * h + model.bilinear(h, h) * c2 + h * (half_m * h.norm_squared())
        })
        .expect("model dimension is positive")
        .with_jacobian(move |h: &Point| &jm.jac_phi_at_za + jm.contracted(h) * (2.0 * c2) + cubic_jacobian(h) * half_m)
        .with_second_directional(move |h: &Point, u: &Point| {
            sm.bilinear(u, u) * (2.0 * c2) + cubic_second(h, u) * half_m
        })
    }

    /// The mirror operator `H` or `H'` in the offset variable.
    pub fn mirror_operator(&self, variant: MirrorVariant) -> VectorField {
        let g = self.mirror_linear_part(variant) * self.mirror_scale();
        let gj = g.clone();
        let offset = self.mirror_offset(variant);
        let half_k = 0.5 * self.kappa();
        VectorField::new(self.dim(), move |h: &Point| {
            &offset + &g * h + h * (half_k * h.norm_squared())
        })
        .expect("model dimension is positive")
        .with_jacobian(move |h: &Point| &gj + cubic_jacobian(h) * half_k)
        .with_second_directional(move |h: &Point, u: &Point| cubic_second(h, u) * half_k)
    }

    /// Potential of the conservative mirror,
    /// `φ(h) = ⟨Φ(z_a), h⟩ + (s/2) hᵀ S h + (κ/8) ‖h‖⁴`.
    pub fn mirror_potential(&self, h: &Point) -> f64 {
        let s = symmetric_part(&self.jac_phi_at_za);
        let n2 = h.norm_squared();
        self.phi_at_za.dot(h) + 0.5 * self.mirror_scale() * h.dot(&(&s * h)) + 0.125 * self.kappa() * n2 * n2
    }
}

/// `λ ↦ (G + λI)⁻¹ U` for a fixed matrix `G` and right-hand side `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedResolvent {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl ShiftedResolvent {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        check_dim(matrix.nrows(), rhs.len())?;
        Ok(Self { matrix, rhs })
    }

    fn factor(&self, lambda: f64) -> LU<f64, Dyn, Dyn> {
        let n = self.matrix.nrows();
        (&self.matrix + DMatrix::identity(n, n) * lambda).lu()
    }

    /// `(G + λI)⁻¹ U`.
    pub fn apply(&self, lambda: f64) -> Result<DVector<f64>> {
        self.factor(lambda)
            .solve(&self.rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularSystem("shifted resolvent"))
    }

    /// `x = (G + λI)⁻¹ U` together with `xᵀ (G + λI)⁻¹ x`, which gives the
    /// derivative `d‖x‖²/dλ = -2 xᵀ (G + λI)⁻¹ x`.
    fn apply_with_slope(&self, lambda: f64) -> Result<(DVector<f64>, f64)> {
        let lu = self.factor(lambda);
        let x = lu
            .solve(&self.rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularSystem("shifted resolvent"))?;
        let y = lu.solve(&x).ok_or(Error::SingularSystem("shifted resolvent"))?;
        Ok((x.clone(), x.dot(&y)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolve {
    pub lambda_star: f64,
    /// `-(G + λ*I)⁻¹ U`.
    pub z_prime: Point,
    /// Newton and bisection steps after bracketing.
    pub newton_iters: usize,
    pub bracket_doublings: usize,
    pub bracket: (f64, f64),
    /// `|λ* - c ‖z'‖²|`.
    pub residual: f64,
    /// `g(0) = -c ‖G⁻¹U‖²`, or `None` when `G` is singular.
    pub g_at_zero: Option<f64>,
    /// `g'(λ*) = 1 + 2c xᵀ(G + λ*I)⁻¹x`.
    pub slope_at_root: f64,
    /// Whether `|g|` decreased at every refinement step.
    pub monotone_residual: bool,
}

impl LambdaSolve {
    /// Total steps, doublings included.
    pub fn iterations(&self) -> usize {
        self.newton_iters + self.bracket_doublings
    }
}

/// Solves `λ = c ‖(G + λI)⁻¹ U‖²` for `λ ≥ 0`.
///
/// `g(λ) = λ - c ‖x(λ)‖²` is increasing whenever the symmetric part of `G`
/// is positive semidefinite. The root is bracketed starting from `[0, 1]`
/// by doubling the upper end, then refined by Newton steps that fall back
/// to bisection whenever they leave the bracket. Stops when
/// `|g(λ)| ≤ tol · max(1, λ)`.
pub fn lambda_rootfind(resolvent: &ShiftedResolvent, c: f64, tol: f64) -> Result<LambdaSolve> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = resolvent.rhs.len();
    if resolvent.rhs.iter().all(|v| *v == 0.0) {
        return Ok(LambdaSolve {
            lambda_star: 0.0,
            z_prime: DVector::zeros(n),
            newton_iters: 0,
            bracket_doublings: 0,
            bracket: (0.0, 0.0),
            residual: 0.0,
            g_at_zero: Some(0.0),
            slope_at_root: 1.0,
            monotone_residual: true,
        });
    }
    let g = |lambda: f64| -> Result<(f64, f64, DVector<f64>)> {
        let (x, q) = resolvent.apply_with_slope(lambda)?;
        Ok((lambda - c * x.norm_squared(), 1.0 + 2.0 * c * q, x))
    };
    let g_at_zero = g(0.0).ok().map(|(v, _, _)| v);

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    let mut at_hi = g(hi)?;
    while at_hi.0 <= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::BracketFailure(doublings));
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        at_hi = g(hi)?;
    }

    let mut lambda = if lo == 0.0 && g_at_zero.is_none() { hi } else { lo };
    let mut current = if lambda == hi { at_hi } else { g(lambda)? };
    let mut iters = 0;
    let mut last_abs = f64::INFINITY;
    let mut monotone = true;
    loop {
        let (gv, gp, _) = &current;
        let abs = gv.abs();
        if abs > last_abs {
            monotone = false;
        }
        last_abs = abs;
        if abs <= tol * lambda.max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi || iters == MAX_REFINEMENTS {
            break;
        }
        if *gv < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let step = lambda - gv / gp;
        lambda = if step > lo && step < hi && step.is_finite() {
            step
        } else {
            0.5 * (lo + hi)
        };
        iters += 1;
        current = g(lambda)?;
    }
    let (gv, gp, x) = current;
    debug!(
        "lambda_rootfind: lambda*={lambda:e} g(0)={g_at_zero:?} g'(lambda*)={gp:e} \
         doublings={doublings} refinements={iters}"
    );
    Ok(LambdaSolve {
        lambda_star: lambda,
        z_prime: -x,
        newton_iters: iters,
        bracket_doublings: doublings,
        bracket: (lo, hi),
        residual: gv.abs(),
        g_at_zero,
        slope_at_root: gp,
        monotone_residual: monotone,
    })
}

/// Closed-form solution of
/// `F(q) + L (H(z') - H(a)) + m (H(z') - H(q)) = 0` for the model operators,
/// with anchor `a` and query `q` in the offset variable.
///
/// Writing `H(h) = H₀ + s G h + (κ/2)‖h‖² h`, the equation becomes
/// `(G + c‖z'‖²) z' = -U` with `c = κ / (2s)` and
/// `U = (F(q) - L(H(a) - H₀) - m(H(q) - H₀)) / ((L + m) s)`.
pub fn third_order_prox_step(
    model: &ThirdOrderModel,
    variant: MirrorVariant,
    l: f64,
    m: f64,
    anchor: &Point,
    query: &Point,
    tol: f64,
) -> Result<(ProxResult, LambdaSolve)> {
    check_dim(model.dim(), anchor.len())?;
    check_dim(model.dim(), query.len())?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {l}")));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("m must be nonnegative, got {m}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let f = model.model_operator();
    let h = model.mirror_operator(variant);
    let h0 = model.mirror_offset(variant);
    let s = model.mirror_scale();
    let f_q = f.eval(query)?;
    let h_a = h.eval(anchor)?;
    let h_q = h.eval(query)?;
    let w = &f_q - (&h_a - &h0) * l - (&h_q - &h0) * m;
    let u = w / ((l + m) * s);
    let c = model.kappa() / (2.0 * s);
    let resolvent = ShiftedResolvent::new(model.mirror_linear_part(variant), u)?;
    let solve = lambda_rootfind(&resolvent, c, ROOT_TOL)?;

    let z = solve.z_prime.clone();
    let h_z = h.eval(&z)?;
    let residual = &f_q + (&h_z - &h_a) * l + (&h_z - &h_q) * m;
    let rn = residual.norm();
    if !(rn <= tol) {
        return Err(Error::NonConvergence {
            iterations: solve.iterations(),
            residual: rn,
        });
    }
    Ok((
        ProxResult {
            z_prime: z,
            residual_norm: rn,
            iterations: solve.iterations(),
            converged: true,
        },
        solve,
    ))
}

/// `Prox_H(z_k, z_k)` for the model.
pub fn third_order_prox(
    model: &ThirdOrderModel,
    variant: MirrorVariant,
    l: f64,
    z_k: &Point,
    tol: f64,
) -> Result<(ProxResult, LambdaSolve)> {
    third_order_prox_step(model, variant, l, 0.0, z_k, z_k, tol)
}

/// `Prox_H^SM(z_k, z_half)` for the model.
pub fn third_order_prox_sm(
    model: &ThirdOrderModel,
    variant: MirrorVariant,
    l: f64,
    m: f64,
    z_k: &Point,
    z_half: &Point,
    tol: f64,
) -> Result<(ProxResult, LambdaSolve)> {
    third_order_prox_step(model, variant, l, m, z_k, z_half, tol)
}
