//! Worked problem instances.
//!
//! - The quartic saddle family `f_s(x, y) = f(x) - f(y) + xᵀ B y` with
//!   `f(x) = ¼‖Ex‖⁴ + ¼‖Ax - b‖₄⁴ + ½‖Cx - d‖²` and the cubic mirror
//!   `H(x, y) = (‖x‖²x + x, ‖y‖²y + y)`.
//! - The operator `Φ(x, y) = (∇α(x) + Ay, ∇β(y) - Aᵀx)` of
//!   `f(x, y) = α(x) - β(y) + xᵀAy`, with `α = β = ‖·‖⁴` by default.
//! - Pairs built from a [`ThirdOrderModel`], and the competitive-gradient
//!   pair `Φ_α`, `Φ_0`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{rel_smooth_certificate, rel_strong_mono_certificate, BoxSampler, CertificateReport};
use crate::operator::fields::{self, cubic_jacobian, cubic_second};
use crate::operator::{MinMaxSplit, Point, VectorField};
use crate::prox::{MirrorVariant, ThirdOrderModel};

/// Bound on `‖∇³Φ‖` for the quartic blocks: the third derivative of
/// `4‖x‖²x` is `24‖h‖²h` along `h`.
pub const EG2_L3: f64 = 24.0;

/// Default certificate sample count.
pub const DEFAULT_CERT_SAMPLES: usize = 200;

/// Default certificate tolerance.
pub const DEFAULT_CERT_TOL: f64 = 1e-9;

/// A certified operator pair.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub label: String,
    pub field_f: VectorField,
    pub field_h: VectorField,
    pub l: f64,
    pub m: f64,
    pub h_is_conservative: bool,
    pub z_star: Option<Point>,
    /// Operator whose norm is reported in traces; `F` when absent.
    pub monitor: Option<VectorField>,
    /// Enables the closed-form prox for model pairs.
    pub third_order: Option<(ThirdOrderModel, MirrorVariant)>,
    pub smooth_params: Option<SmoothExampleParams>,
}

impl ProblemInstance {
    pub fn new(label: impl Into<String>, field_f: VectorField, field_h: VectorField, l: f64, m: f64) -> Result<Self> {
        check_dim(field_f.dim(), field_h.dim())?;
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("L must be positive, got {l}")));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("m must be nonnegative, got {m}")));
        }
        Ok(Self {
            label: label.into(),
            field_f,
            field_h,
            l,
            m,
            h_is_conservative: false,
            z_star: None,
            monitor: None,
            third_order: None,
            smooth_params: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.field_f.dim()
    }

    pub fn monitor(&self) -> &VectorField {
        self.monitor.as_ref().unwrap_or(&self.field_f)
    }

    /// Both Jacobian certificates for `(L, m)` on `[-2, 2]^d`.
    pub fn certify(&self, samples: usize, seed: u64, tol: f64) -> Result<(CertificateReport, CertificateReport)> {
        let s = BoxSampler::default_box(self.dim(), seed)?;
        Ok((
            rel_smooth_certificate(&self.field_f, &self.field_h, self.l, &s, samples, tol)?,
            rel_strong_mono_certificate(&self.field_f, &self.field_h, self.m, &s, samples, tol)?,
        ))
    }

    /// Keeps `m` if its certificate passes, otherwise replaces it by the
    /// largest value found by bisection on `[0, m]` that passes. Returns
    /// whether the fallback was used.
    pub fn certify_m_or_fallback(&mut self, samples: usize, seed: u64, tol: f64) -> Result<bool> {
        let s = BoxSampler::default_box(self.dim(), seed)?;
        let passes = |m: f64| -> Result<bool> {
            Ok(rel_strong_mono_certificate(&self.field_f, &self.field_h, m, &s, samples, tol)?.holds)
        };
        if passes(self.m)? {
            return Ok(false);
        }
        let (mut lo, mut hi) = (0.0, self.m);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if passes(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        warn!(
            "{}: m = {:e} fails its certificate; falling back to m = {:e}",
            self.label, self.m, lo
        );
        self.m = lo;
        Ok(true)
    }
}

/// Parameters of the quartic saddle family.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothExampleParams {
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub b: DVector<f64>,
    pub d: DVector<f64>,
}

impl SmoothExampleParams {
    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        for m in [&self.a, &self.b_mat, &self.c, &self.e] {
            check_dim(n, m.nrows())?;
            check_dim(n, m.ncols())?;
        }
        check_dim(n, self.b.len())?;
        check_dim(n, self.d.len())?;
        let finite = [&self.a, &self.b_mat, &self.c, &self.e]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.b.iter().chain(self.d.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("smooth example parameters"));
        }
        Ok(())
    }

    /// `E = C = I`, `A = B = 0`, `b = d = 0`.
    pub fn canonical(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b_mat: DMatrix::zeros(n, n),
            c: DMatrix::identity(n, n),
            e: DMatrix::identity(n, n),
            b: DVector::zeros(n),
            d: DVector::zeros(n),
        }
    }

    /// `f(x) = ¼‖Ex‖⁴ + ¼‖Ax - b‖₄⁴ + ½‖Cx - d‖²`.
    pub fn f(&self, x: &DVector<f64>) -> f64 {
        let ex = (&self.e * x).norm_squared();
        let r = &self.a * x - &self.b;
        let q = &self.c * x - &self.d;
        0.25 * ex * ex + 0.25 * r.iter().map(|v| v.powi(4)).sum::<f64>() + 0.5 * q.norm_squared()
    }

    /// `f_s(x, y) = f(x) - f(y) + xᵀ B y`.
    pub fn saddle(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.f(x) - self.f(y) + x.dot(&(&self.b_mat * y))
    }

    pub fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = self.e.transpose() * &self.e;
        let px = &p * x;
        let r = &self.a * x - &self.b;
        px * x.dot(&(&p * x)) + self.a.transpose() * r.map(|v| v * v * v) + self.c.transpose() * (&self.c * x - &self.d)
    }

    pub fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = self.e.transpose() * &self.e;
        let px = &p * x;
        let r = &self.a * x - &self.b;
        let w = DMatrix::from_diagonal(&r.map(|v| 3.0 * v * v));
        &p * x.dot(&px) + &px * px.transpose() * 2.0 + self.a.transpose() * w * &self.a + self.c.transpose() * &self.c
    }

    /// `∇³f(x)[h, h]`.
    pub fn third_f(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        let p = self.e.transpose() * &self.e;
        let (px, ph) = (&p * x, &p * h);
        let r = &self.a * x - &self.b;
        let ah = &self.a * h;
        let hpx = h.dot(&px);
        px * (2.0 * h.dot(&ph)) + ph * (4.0 * hpx) + self.a.transpose() * r.zip_map(&ah, |ri, ai| 6.0 * ri * ai * ai)
    }

    /// `L = 3‖E‖⁴ + 3‖A‖⁴ + 6‖A‖³‖b‖² + 3‖A‖²‖b‖² + ‖C‖²` with spectral
    /// norms.
    pub fn smoothness_constant(&self) -> f64 {
        let (e, a, c) = (spectral_norm(&self.e), spectral_norm(&self.a), spectral_norm(&self.c));
        let b2 = self.b.norm_squared();
        3.0 * e.powi(4) + 3.0 * a.powi(4) + 6.0 * a.powi(3) * b2 + 3.0 * a * a * b2 + c * c
    }

    /// `m = min{σ_E⁴/3, σ_C²}` with `σ_E = λ_min(EᵀE)` and
    /// `σ_C = λ_min(CᵀC)`.
    pub fn strong_monotonicity_constant(&self) -> f64 {
        let se = min_gram_eig(&self.e);
        let sc = min_gram_eig(&self.c);
        (se.powi(4) / 3.0).min(sc * sc)
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

fn min_gram_eig(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values().iter().copied().fold(f64::INFINITY, f64::min);
    s * s
}

/// The quartic saddle instance with its closed-form constants.
pub fn build_example_smooth(params: SmoothExampleParams) -> Result<ProblemInstance> {
    params.validate()?;
    let n = params.n();
    let split = MinMaxSplit::square(n)?;
    let (pe, pj, ps) = (params.clone(), params.clone(), params.clone());
    let field_f = VectorField::new(2 * n, move |z: &Point| {
        let (x, y) = (split.x(z), split.y(z));
        let gx = pe.grad_f(&x) + &pe.b_mat * &y;
        let gy = pe.grad_f(&y) - pe.b_mat.transpose() * &x;
        split.join(&gx, &gy)
    })?
    .with_jacobian(move |z: &Point| {
        let (x, y) = (split.x(z), split.y(z));
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&pj.hess_f(&x));
        j.view_mut((n, n), (n, n)).copy_from(&pj.hess_f(&y));
        j.view_mut((0, n), (n, n)).copy_from(&pj.b_mat);
        j.view_mut((n, 0), (n, n)).copy_from(&(-pj.b_mat.transpose()));
        j
    })
    .with_second_directional(move |z: &Point, h: &Point| {
        split.join(
            &ps.third_f(&split.x(z), &split.x(h)),
            &ps.third_f(&split.y(z), &split.y(h)),
        )
    });
    let field_h = smooth_mirror(n)?;
    let mut inst = ProblemInstance::new(
        format!("smooth-n{n}"),
        field_f,
        field_h,
        params.smoothness_constant(),
        params.strong_monotonicity_constant(),
    )?;
    inst.h_is_conservative = true;
    inst.smooth_params = Some(params);
    Ok(inst)
}

/// `H(x, y) = (‖x‖²x + x, ‖y‖²y + y)`.
pub fn smooth_mirror(n: usize) -> Result<VectorField> {
    fields::block_cubic(MinMaxSplit::square(n)?, 1.0)?.add(&fields::identity(2 * n)?)
}

/// A convex function of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexTerm {
    /// `‖x‖⁴`.
    Quartic,
    /// `(‖x‖² + ε)²`.
    SmoothedQuartic { eps: f64 },
}

impl ConvexTerm {
    fn shift(&self) -> f64 {
        match *self {
            ConvexTerm::Quartic => 0.0,
            ConvexTerm::SmoothedQuartic { eps } => eps,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let s = x.norm_squared() + self.shift();
        s * s
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        x * (4.0 * (x.norm_squared() + self.shift()))
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (cubic_jacobian(x) + DMatrix::identity(x.len(), x.len()) * self.shift()) * 4.0
    }

    /// `∇³α(x)[h, h]`; the shift only adds a quadratic term.
    pub fn third(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        cubic_second(x, h) * 4.0
    }
}

/// `f(x, y) = α(x) - β(y) + xᵀ A y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBlockSpec {
    pub alpha: ConvexTerm,
    pub beta: ConvexTerm,
    pub a: DMatrix<f64>,
}

impl ConvexBlockSpec {
    pub fn quartic(a: DMatrix<f64>) -> Self {
        Self {
            alpha: ConvexTerm::Quartic,
            beta: ConvexTerm::Quartic,
            a,
        }
    }

    pub fn split(&self) -> Result<MinMaxSplit> {
        MinMaxSplit::new(self.a.nrows(), self.a.ncols())
    }

    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.alpha.value(x) - self.beta.value(y) + x.dot(&(&self.a * y))
    }

    /// `Φ(x, y) = (∇α(x) + Ay, ∇β(y) - Aᵀx)` with analytic derivatives.
    pub fn operator(&self) -> Result<VectorField> {
        let split = self.split()?;
        let (nx, ny) = (split.dim_x, split.dim_y);
        let (se, sj, ss) = (self.clone(), self.clone(), self.clone());
        Ok(VectorField::new(split.dim(), move |z: &Point| {
            let (x, y) = (split.x(z), split.y(z));
            split.join(
                &(se.alpha.grad(&x) + &se.a * &y),
                &(se.beta.grad(&y) - se.a.transpose() * &x),
            )
        })?
        .with_jacobian(move |z: &Point| {
            let (x, y) = (split.x(z), split.y(z));
            let mut j = DMatrix::zeros(nx + ny, nx + ny);
            j.view_mut((0, 0), (nx, nx)).copy_from(&sj.alpha.hessian(&x));
            j.view_mut((nx, nx), (ny, ny)).copy_from(&sj.beta.hessian(&y));
            j.view_mut((0, nx), (nx, ny)).copy_from(&sj.a);
            j.view_mut((nx, 0), (ny, nx)).copy_from(&(-sj.a.transpose()));
            j
        })
        .with_second_directional(move |z: &Point, h: &Point| {
            split.join(
                &ss.alpha.third(&split.x(z), &split.x(h)),
                &ss.beta.third(&split.y(z), &split.y(h)),
            )
        }))
    }
}

/// `Φ(z) = (4‖x‖²x + Ay, 4‖y‖²y - Aᵀx)`.
pub fn build_example_eg2(a: &DMatrix<f64>) -> Result<VectorField> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("eg2 coupling matrix"));
    }
    ConvexBlockSpec::quartic(a.clone()).operator()
}

/// `κ(z_a) = min(‖x_a‖, ‖y_a‖)`.
pub fn kappa(split: MinMaxSplit, z: &Point) -> f64 {
    split.x(z).norm().min(split.y(z).norm())
}

/// Largest sampled `‖∇Φ(z+Δ) - ∇Φ(z) - ∇²Φ(z)[Δ, ·]‖₂ / (‖Δ‖²/2)`, an
/// empirical lower bound on `L₃`.
pub fn l3_sanity_check(phi: &VectorField, sampler: &BoxSampler, n: usize) -> Result<f64> {
    check_dim(phi.dim(), sampler.dim)?;
    let d = phi.dim();
    let mut worst: f64 = 0.0;
    for (z, zb) in sampler.pairs(n) {
        let delta = &zb - &z;
        let dn2 = delta.norm_squared();
        if dn2 == 0.0 {
            continue;
        }
        let mut q = DMatrix::zeros(d, d);
        let mut e = DVector::zeros(d);
        for k in 0..d {
            e.fill(0.0);
            e[k] = 1.0;
            let plus = phi.second_directional(&z, &(&delta + &e))?;
            let minus = phi.second_directional(&z, &(&delta - &e))?;
            q.set_column(k, &((plus - minus) * 0.25));
        }
        let err = phi.jacobian(&zb)? - phi.jacobian(&z)? - q;
        worst = worst.max(spectral_norm(&err) / (0.5 * dn2));
    }
    Ok(worst)
}

/// The model pair of a [`ThirdOrderModel`], with `L = (τ+1)/(τ-1)` and
/// `m = 1`. The norm of `Φ(z_a + h)` is monitored.
pub fn build_third_order_pair(model: ThirdOrderModel, which: MirrorVariant) -> Result<ProblemInstance> {
    if !model.meets_sufficient_condition() {
        warn!(
            "M = {} is below tau^2 * L3 = {}; the relative constants are not guaranteed",
            model.m_reg(),
            model.tau() * model.tau() * model.l3()
        );
    }
    let label = match which {
        MirrorVariant::Standard => "third-order",
        MirrorVariant::Conservative => "third-order-conservative",
    };
    let mut inst = ProblemInstance::new(
        label,
        model.model_operator(),
        model.mirror_operator(which),
        model.relative_smoothness(),
        1.0,
    )?;
    inst.h_is_conservative = which == MirrorVariant::Conservative;
    inst.monitor = Some(model.phi().recentered(model.z_a())?);
    inst.third_order = Some((model, which));
    Ok(inst)
}

/// A min-max objective exposing its operator and cross Hessian.
pub trait MinMaxObjective {
    fn split(&self) -> Result<MinMaxSplit>;
    /// `(∇_x f, -∇_y f)` at `z`.
    fn operator_at(&self, z: &Point) -> Result<DVector<f64>>;
    /// `∇_{xy} f(z)`, of shape `dim_x × dim_y`.
    fn cross_hessian(&self, z: &Point) -> Result<DMatrix<f64>>;
}

impl MinMaxObjective for ConvexBlockSpec {
    fn split(&self) -> Result<MinMaxSplit> {
        ConvexBlockSpec::split(self)
    }

    fn operator_at(&self, z: &Point) -> Result<DVector<f64>> {
        self.operator()?.eval(z)
    }

    fn cross_hessian(&self, _z: &Point) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
}

/// `f(x, y) = ½xᵀPx + pᵀx - ½yᵀQy - qᵀy + xᵀCy` with `P, Q` PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub p_vec: DVector<f64>,
    pub q_vec: DVector<f64>,
}

impl QuadraticGame {
    /// Seeded instance with `P = GᵀG/n_x`, `Q = KᵀK/n_y` and normal `C`, `p`,
    /// `q`.
    pub fn random(nx: usize, ny: usize, seed: u64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = normal_matrix(&mut rng, nx, nx);
        let k = normal_matrix(&mut rng, ny, ny);
        Ok(Self {
            p: g.transpose() * &g / nx as f64,
            q: k.transpose() * &k / ny as f64,
            c: normal_matrix(&mut rng, nx, ny),
            p_vec: normal_vector(&mut rng, nx),
            q_vec: normal_vector(&mut rng, ny),
        })
    }
}

impl MinMaxObjective for QuadraticGame {
    fn split(&self) -> Result<MinMaxSplit> {
        MinMaxSplit::new(self.c.nrows(), self.c.ncols())
    }

    fn operator_at(&self, z: &Point) -> Result<DVector<f64>> {
        let s = MinMaxObjective::split(self)?;
        check_dim(s.dim(), z.len())?;
        let (x, y) = (s.x(z), s.y(z));
        Ok(s.join(
            &(&self.p * &x + &self.p_vec + &self.c * &y),
            &(&self.q * &y + &self.q_vec - self.c.transpose() * &x),
        ))
    }

    fn cross_hessian(&self, _z: &Point) -> Result<DMatrix<f64>> {
        Ok(self.c.clone())
    }
}

/// `Φ_α(h) = F(z_a) + (α/η)(∇_{xy}f h_y, -∇_{yx}f h_x) + h/η` and
/// `Φ_0(h) = F(z_a) + h/η`.
pub fn build_cgo_pair(
    f: &dyn MinMaxObjective,
    z_a: &Point,
    alpha: f64,
    eta: f64,
) -> Result<(VectorField, VectorField)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let split = f.split()?;
    check_dim(split.dim(), z_a.len())?;
    let f_a = f.operator_at(z_a)?;
    let cross = f.cross_hessian(z_a)?;
    let d = split.dim();
    let mut skew = DMatrix::zeros(d, d);
    skew.view_mut((0, split.dim_x), (split.dim_x, split.dim_y))
        .copy_from(&cross);
    skew.view_mut((split.dim_x, 0), (split.dim_y, split.dim_x))
        .copy_from(&(-cross.transpose()));
    let eye = DMatrix::identity(d, d) / eta;
    let phi_alpha = fields::affine(skew * (alpha / eta) + &eye, f_a.clone())?;
    let phi_0 = fields::affine(eye, f_a)?;
    Ok((phi_alpha, phi_0))
}

/// `F = (4E⁴‖x‖²x + By, 4E⁴‖y‖²y - Bx)` and `H = (‖x‖²x, ‖y‖²y)` on
/// `R × R`. On [`crate::geometry::norelip_triangle`] the anti-Lipschitz
/// ratio of this pair is exactly [`crate::geometry::d_theta`].
pub fn norelip_pair(b: f64, e: f64) -> Result<(VectorField, VectorField)> {
    let split = MinMaxSplit::square(1)?;
    let cubic = fields::block_cubic(split, 1.0)?;
    let f = fields::block_cubic(split, 4.0 * e.powi(4))?.add(&fields::bilinear(&DMatrix::from_element(1, 1, b))?)?;
    Ok((f, cubic))
}

/// Instance families addressable by label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    /// Quartic saddle with a coupling matrix `B`.
    SmoothInseparable,
    /// Quartic saddle with `B = 0`.
    SmoothSeparable,
    /// Third-order model of the quartic game at a random center.
    Eg2Subproblem,
    /// `F(x, y) = (By, -Bᵀx)` with the identity mirror.
    Bilinear,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 4] = [
        InstanceKind::SmoothInseparable,
        InstanceKind::SmoothSeparable,
        InstanceKind::Eg2Subproblem,
        InstanceKind::Bilinear,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            InstanceKind::SmoothInseparable => "smooth-inseparable",
            InstanceKind::SmoothSeparable => "smooth-separable",
            InstanceKind::Eg2Subproblem => "eg2-subproblem",
            InstanceKind::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" | "smooth-inseparable" => Ok(InstanceKind::SmoothInseparable),
            "smooth-separable" => Ok(InstanceKind::SmoothSeparable),
            "eg2-subproblem" => Ok(InstanceKind::Eg2Subproblem),
            "bilinear" => Ok(InstanceKind::Bilinear),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// Options for the random third-order sub-problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemOptions {
    pub tau: f64,
    pub l3: f64,
    /// Defaults to `τ² L₃` when `None`.
    pub m_reg: Option<f64>,
    pub variant: MirrorVariant,
    pub kappa_min: f64,
    pub second_order_coeff: f64,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        Self {
            tau: 3.0,
            l3: EG2_L3,
            m_reg: None,
            variant: MirrorVariant::Conservative,
            kappa_min: 0.25,
            second_order_coeff: 0.5,
        }
    }
}

const MAX_REJECTIONS: usize = 10_000;

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Seeded standard-normal parameters for the quartic saddle, drawn in the
/// order `A, B, C, E, b, d`.
pub fn random_smooth_params(n: usize, seed: u64, separable: bool) -> Result<SmoothExampleParams> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = normal_matrix(&mut rng, n, n);
    let b_mat = normal_matrix(&mut rng, n, n);
    let c = normal_matrix(&mut rng, n, n);
    let e = normal_matrix(&mut rng, n, n);
    let b = normal_vector(&mut rng, n);
    let d = normal_vector(&mut rng, n);
    Ok(SmoothExampleParams {
        a,
        b_mat: if separable { DMatrix::zeros(n, n) } else { b_mat },
        c,
        e,
        b,
        d,
    })
}

/// Random coupling `A` and center `z_a` with `κ(z_a) ≥ kappa_min`, by
/// rejection sampling. Returns the center and the number of draws.
pub fn random_subproblem_center(n: usize, seed: u64, kappa_min: f64) -> Result<(DMatrix<f64>, Point, usize)> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let split = MinMaxSplit::square(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = normal_matrix(&mut rng, n, n);
    for draws in 1..=MAX_REJECTIONS {
        let z = normal_vector(&mut rng, 2 * n);
        if kappa(split, &z) >= kappa_min {
            return Ok((a, z, draws));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no center with kappa >= {kappa_min} after {MAX_REJECTIONS} draws"
    )))
}

/// The random third-order sub-problem on `R^n × R^n`.
pub fn eg2_subproblem(n: usize, seed: u64, opts: &SubproblemOptions) -> Result<ProblemInstance> {
    let (a, z_a, _) = random_subproblem_center(n, seed, opts.kappa_min)?;
    let phi = build_example_eg2(&a)?;
    let m_reg = opts.m_reg.unwrap_or(opts.tau * opts.tau * opts.l3);
    let model =
        ThirdOrderModel::new(phi, z_a, m_reg, opts.tau, opts.l3)?.with_second_order_coeff(opts.second_order_coeff);
    let mut inst = build_third_order_pair(model, opts.variant)?;
    inst.label = format!("{}-n{n}", InstanceKind::Eg2Subproblem);
    Ok(inst)
}

/// Seeded instance of the given kind on `R^n × R^n`.
pub fn random_instance(kind: InstanceKind, n: usize, seed: u64) -> Result<ProblemInstance> {
    let mut inst = match kind {
        InstanceKind::SmoothInseparable | InstanceKind::SmoothSeparable => {
            let params = random_smooth_params(n, seed, kind == InstanceKind::SmoothSeparable)?;
            build_example_smooth(params)?
        }
        InstanceKind::Eg2Subproblem => eg2_subproblem(n, seed, &SubproblemOptions::default())?,
        InstanceKind::Bilinear => {
            if n == 0 {
                return Err(Error::ZeroDimension);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = normal_matrix(&mut rng, n, n);
            bilinear_instance(&b)?
        }
    };
    inst.label = format!("{kind}-n{n}");
    Ok(inst)
}

/// `F(x, y) = (By, -Bᵀx)`, `H = I`, `L = ‖B‖₂`, `m = 0`, `z* = 0`.
pub fn bilinear_instance(b: &DMatrix<f64>) -> Result<ProblemInstance> {
    let f = fields::bilinear(b)?;
    let d = f.dim();
    let mut inst = ProblemInstance::new("bilinear", f, fields::identity(d)?, spectral_norm(b), 0.0)?;
    inst.h_is_conservative = true;
    inst.z_star = Some(DVector::zeros(d));
    Ok(inst)
}

/// Solves `F(z) = 0` by damped Newton from the origin.
pub fn solve_reference(field: &VectorField, tol: f64, max_iter: usize) -> Result<Point> {
    let mut z = DVector::zeros(field.dim());
    let mut r = field.eval(&z)?;
    let mut rn = r.norm();
    for _ in 0..max_iter {
        if rn <= tol {
            return Ok(z);
        }
        let dz = field
            .jacobian(&z)?
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularSystem("reference point Newton system"))?;
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let zt = &z + &dz * alpha;
            if let Ok(rt) = field.eval(&zt) {
                let nt = rt.norm();
                if nt < rn {
                    z = zt;
                    r = rt;
                    rn = nt;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if rn <= tol {
        Ok(z)
    } else {
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: rn,
        })
    }
}
