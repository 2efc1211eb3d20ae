//! Mirror-free mirror prox and its strongly monotone variant.
//!
//! Each iteration takes two prox steps,
//!
//! ```text
//! z_{k+½} = Prox_H(z_k, z_k)
//! z_{k+1} = Prox_H(z_k, z_{k+½})        (MFMP)
//! z_{k+1} = Prox_H^SM(z_k, z_{k+½})     (MFMP-SM)
//! ```
//!
//! MFMP returns the average of the `z_{k+½}`; MFMP-SM returns `z_K`. Runs
//! use a fixed iteration count with no early stopping.

use std::fmt;
use std::time::Instant;

use log::debug;
use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{gbd, halton, loop_integral, GeometryContext, TrianglePath};
use crate::operator::{Point, VectorField};
use crate::problems::ProblemInstance;
use crate::prox::{prox_generic, third_order_prox_step, ProxResult, ProxSpec};

/// Quasi-random comparison set for the gap: `count` Halton directions
/// scaled to `radius` around the initial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSpec {
    pub radius: f64,
    pub count: usize,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        Self { radius: 1.0, count: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxBackend {
    /// Closed form for third-order model pairs, Newton otherwise.
    #[default]
    Auto,
    /// Always Newton.
    Generic,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub z_1: Point,
    pub iterations: usize,
    pub prox_tolerance: f64,
    pub prox_max_iter: usize,
    pub seed: u64,
    pub use_sm: bool,
    /// Overrides the instance's reference point.
    pub z_star: Option<Point>,
    pub comparison: ComparisonSpec,
    pub quadrature: GeometryContext,
    pub backend: ProxBackend,
    /// Abort once `‖z_k‖` exceeds this.
    pub divergence_guard: f64,
}

impl RunConfig {
    pub fn new(z_1: Point, iterations: usize) -> Self {
        Self {
            z_1,
            iterations,
            prox_tolerance: 1e-10,
            prox_max_iter: 100,
            seed: 0,
            use_sm: false,
            z_star: None,
            comparison: ComparisonSpec::default(),
            quadrature: GeometryContext::default(),
            backend: ProxBackend::Auto,
            divergence_guard: 1e6,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.z_1.len())?;
        if let Some(z) = &self.z_star {
            check_dim(dim, z.len())?;
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
        }
        if !self.z_1.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("initial point"));
        }
        if !(self.prox_tolerance > 0.0) {
            return Err(Error::InvalidParameter("prox tolerance must be positive".into()));
        }
        if !(self.comparison.radius >= 0.0) {
            return Err(Error::InvalidParameter("comparison radius must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub z_k: Point,
    pub z_half: Point,
    pub z_next: Point,
    /// Norm of the monitored operator at `z_{k+½}`.
    pub op_norm_half: f64,
    /// Norm of the monitored operator at `z_{k+1}`.
    pub op_norm_next: f64,
    /// `‖F(z_{k+1})‖` for the operator being solved.
    pub model_norm_next: f64,
    /// `ω_H(z*, z_k)`.
    pub omega_to_ref: Option<f64>,
    pub e_k: Option<f64>,
    pub prox_residuals: [f64; 2],
    pub prox_iterations: [usize; 2],
    /// Slack of the per-iteration MFMP inequality at the reference point
    /// (or `z_1`); MFMP runs only.
    pub lemma_mfmp_slack: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub z_1: Point,
    pub z_out: Point,
    pub use_sm: bool,
    pub l: f64,
    pub m: f64,
    pub z_star: Option<Point>,
    pub comparison: Vec<Point>,
    pub gap_estimate: Option<f64>,
    /// Norm of the monitored operator at `z_1`.
    pub initial_op_norm: f64,
}

impl RunTrace {
    fn empty(cfg: &RunConfig, instance: &ProblemInstance, use_sm: bool) -> Self {
        Self {
            records: Vec::new(),
            z_1: cfg.z_1.clone(),
            z_out: cfg.z_1.clone(),
            use_sm,
            l: instance.l,
            m: if use_sm { instance.m } else { 0.0 },
            z_star: cfg.z_star.clone().or_else(|| instance.z_star.clone()),
            comparison: Vec::new(),
            gap_estimate: None,
            initial_op_norm: f64::NAN,
        }
    }

    /// Norm of the monitored operator at `z_j`, `1 ≤ j ≤ K + 1`.
    pub fn op_norm_at(&self, j: usize) -> Option<f64> {
        match j {
            0 => None,
            1 => Some(self.initial_op_norm),
            _ => self.records.get(j - 2).map(|r| r.op_norm_next),
        }
    }

    /// The last iterate `z_{K+1}`.
    pub fn last_iterate(&self) -> &Point {
        self.records.last().map(|r| &r.z_next).unwrap_or(&self.z_1)
    }
}

/// A run stopped early; `partial` holds the completed iterations.
#[derive(Debug, Clone)]
pub struct RunAbort {
    pub error: Error,
    pub partial: RunTrace,
}

impl fmt::Display for RunAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run aborted after {} iterations: {}",
            self.partial.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunAbort {}

pub fn run_mfmp(instance: &ProblemInstance, cfg: &RunConfig) -> std::result::Result<RunTrace, RunAbort> {
    run(instance, cfg, false)
}

pub fn run_mfmp_sm(instance: &ProblemInstance, cfg: &RunConfig) -> std::result::Result<RunTrace, RunAbort> {
    run(instance, cfg, true)
}

/// Dispatches on [`RunConfig::use_sm`].
pub fn run_configured(instance: &ProblemInstance, cfg: &RunConfig) -> std::result::Result<RunTrace, RunAbort> {
    run(instance, cfg, cfg.use_sm)
}

fn prox_step(instance: &ProblemInstance, cfg: &RunConfig, anchor: &Point, query: &Point, m: f64) -> Result<ProxResult> {
    if let (ProxBackend::Auto, Some((model, variant))) = (cfg.backend, &instance.third_order) {
        let (res, _) = third_order_prox_step(model, *variant, instance.l, m, anchor, query, cfg.prox_tolerance)?;
        return Ok(res);
    }
    let spec = ProxSpec::new(&instance.field_f, &instance.field_h, instance.l, anchor, query)
        .with_m(m)
        .with_tolerance(cfg.prox_tolerance)
        .with_max_iter(cfg.prox_max_iter);
    let res = prox_generic(&spec)?;
    if !res.converged {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            residual: res.residual_norm,
        });
    }
    Ok(res)
}

fn run(instance: &ProblemInstance, cfg: &RunConfig, use_sm: bool) -> std::result::Result<RunTrace, RunAbort> {
    let mut trace = RunTrace::empty(cfg, instance, use_sm);
    macro_rules! tryr {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => {
                    return Err(RunAbort {
                        error,
                        partial: trace,
                    })
                }
            }
        };
    }
    tryr!(cfg.validate(instance.dim()));
    let (f, h, l) = (&instance.field_f, &instance.field_h, instance.l);
    let m_sm = if use_sm { instance.m } else { 0.0 };
    let monitor = instance.monitor();
    let ctx = &cfg.quadrature;
    let z_star = trace.z_star.clone();
    let probe = z_star.clone().unwrap_or_else(|| cfg.z_1.clone());
    trace.initial_op_norm = tryr!(monitor.eval(&cfg.z_1)).norm();

    let mut z_k = cfg.z_1.clone();
    for k in 1..=cfg.iterations {
        let start = Instant::now();
        let half = tryr!(prox_step(instance, cfg, &z_k, &z_k, 0.0));
        let next = tryr!(prox_step(instance, cfg, &z_k, &half.z_prime, m_sm));
        let (z_half, z_next) = (half.z_prime, next.z_prime);

        let op_norm_half = tryr!(monitor.eval(&z_half)).norm();
        let op_norm_next = tryr!(monitor.eval(&z_next)).norm();
        let model_norm_next = tryr!(f.eval(&z_next)).norm();
        let omega_to_ref = match &z_star {
            Some(s) => Some(tryr!(gbd(ctx, h, s, &z_k))),
            None => None,
        };
        let e_k = match (&z_star, use_sm) {
            (Some(s), true) => Some(tryr!(error_term(ctx, f, h, l, m_sm, s, &z_k, &z_half, &z_next))),
            _ => None,
        };
        let wall_time_s = start.elapsed().as_secs_f64();
        let mut record = IterRecord {
            k,
            z_k: z_k.clone(),
            z_half,
            z_next: z_next.clone(),
            op_norm_half,
            op_norm_next,
            model_norm_next,
            omega_to_ref,
            e_k,
            prox_residuals: [half.residual_norm, next.residual_norm],
            prox_iterations: [half.iterations, next.iterations],
            lemma_mfmp_slack: None,
            wall_time_s,
        };
        if !use_sm {
            record.lemma_mfmp_slack = Some(tryr!(lemma_mfmp_slack(&record, f, h, l, &probe)));
        }
        trace.records.push(record);

        let norm = z_next.norm();
        if !(norm <= cfg.divergence_guard) {
            return Err(RunAbort {
                error: Error::Divergence { k, norm },
                partial: trace,
            });
        }
        z_k = z_next;
    }

    trace.z_out = if use_sm {
        trace.records[cfg.iterations - 1].z_k.clone()
    } else {
        let sum = trace
            .records
            .iter()
            .fold(DVector::zeros(instance.dim()), |acc, r| acc + &r.z_half);
        sum / cfg.iterations as f64
    };
    trace.comparison = comparison_points(&cfg.z_1, &cfg.comparison, z_star.as_ref());
    if !trace.comparison.is_empty() {
        trace.gap_estimate = Some(tryr!(gap_estimate(&trace.z_out, f, &trace.comparison)));
    }
    debug!(
        "{} ({}): K={} final op norm {:e}",
        instance.label,
        if use_sm { "mfmp-sm" } else { "mfmp" },
        cfg.iterations,
        trace.records.last().map(|r| r.op_norm_next).unwrap_or(f64::NAN)
    );
    Ok(trace)
}

/// `count` Halton directions in `[-1, 1]^d`, normalized to `radius` around
/// `center`, followed by `z_star` when given.
pub fn comparison_points(center: &Point, spec: &ComparisonSpec, z_star: Option<&Point>) -> Vec<Point> {
    let d = center.len();
    let mut out = Vec::with_capacity(spec.count + 1);
    let mut index = 1u64;
    while out.len() < spec.count {
        let u = DVector::from_vec(halton(index, d)).map(|v| 2.0 * v - 1.0);
        index += 1;
        let n = u.norm();
        if n > 1e-12 {
            out.push(center + u * (spec.radius / n));
        }
    }
    if let Some(s) = z_star {
        out.push(s.clone());
    }
    out
}

/// `max_z ⟨F(z), z_out - z⟩` over the comparison points.
pub fn gap_estimate(z_out: &Point, field_f: &VectorField, comparison: &[Point]) -> Result<f64> {
    if comparison.is_empty() {
        return Err(Error::InvalidParameter("comparison set is empty".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for z in comparison {
        best = best.max(field_f.eval(z)?.dot(&(z_out - z)));
    }
    Ok(best)
}

/// `E_k = L∮_{z_{k+1} z_k z_{k+½}} H + L∮_{z* z_k z_{k+½}} H
///      + m∮_{z* z_{k+½} z_{k+1}} H - L∮_{z_k z_{k+½} z_{k+1}} F`.
#[allow(clippy::too_many_arguments)]
pub fn error_term(
    ctx: &GeometryContext,
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    m: f64,
    z_star: &Point,
    z_k: &Point,
    z_half: &Point,
    z_next: &Point,
) -> Result<f64> {
    let tri = |a: &Point, b: &Point, c: &Point| TrianglePath::new(a.clone(), b.clone(), c.clone());
    let h1 = loop_integral(ctx, field_h, &tri(z_next, z_k, z_half)?)?;
    let h2 = loop_integral(ctx, field_h, &tri(z_star, z_k, z_half)?)?;
    let h3 = loop_integral(ctx, field_h, &tri(z_star, z_half, z_next)?)?;
    let f1 = loop_integral(ctx, field_f, &tri(z_k, z_half, z_next)?)?;
    Ok(l * h1 + l * h2 + m * h3 - l * f1)
}

/// [`error_term`] for every record of a trace.
pub fn error_terms(
    trace: &RunTrace,
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    m: f64,
    z_star: &Point,
    ctx: &GeometryContext,
) -> Result<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| error_term(ctx, field_f, field_h, l, m, z_star, &r.z_k, &r.z_half, &r.z_next))
        .collect()
}

/// Per-iteration slack
/// `L/(m+L) ω(z_k) + E_k/(m+L) - ω(z_{k+1})`, with `ω = ω_H(z*, ·)` supplied
/// by the caller.
pub fn contraction_slacks<W>(trace: &RunTrace, l: f64, m: f64, omega_fn: W) -> Result<Vec<f64>>
where
    W: Fn(&Point) -> Result<f64>,
{
    let s = l + m;
    trace
        .records
        .iter()
        .map(|r| {
            let e = r
                .e_k
                .ok_or_else(|| Error::InvalidParameter(format!("record {} has no error term", r.k)))?;
            Ok(l / s * omega_fn(&r.z_k)? + e / s - omega_fn(&r.z_next)?)
        })
        .collect()
}

/// Worst per-iteration slack; nonnegative when the one-step contraction
/// held at every iteration.
pub fn contraction_check<W>(trace: &RunTrace, l: f64, m: f64, omega_fn: W) -> Result<f64>
where
    W: Fn(&Point) -> Result<f64>,
{
    Ok(contraction_slacks(trace, l, m, omega_fn)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Slack of the cumulative bound after `K` iterations,
/// `(L/(m+L))^K ω(z_1) + Σ_{j=0}^{K-1} E_j/(m+L)^j - ω(z_{K+1})`,
/// where `E_j` is the error term of the `(j+1)`-th iteration.
pub fn corollary_check<W>(trace: &RunTrace, l: f64, m: f64, omega_fn: W) -> Result<f64>
where
    W: Fn(&Point) -> Result<f64>,
{
    let s = l + m;
    let k = trace.records.len();
    let mut rhs = (l / s).powi(k as i32) * omega_fn(&trace.z_1)?;
    for (j, r) in trace.records.iter().enumerate() {
        let e = r
            .e_k
            .ok_or_else(|| Error::InvalidParameter(format!("record {} has no error term", r.k)))?;
        rhs += e / s.powi(j as i32);
    }
    Ok(rhs - omega_fn(trace.last_iterate())?)
}

/// Slack of the bound obtained by chaining the one-step contraction,
/// `ρ^K ω(z_1) + Σ_{j=0}^{K-1} ρ^{K-1-j} E_j/(m+L) - ω(z_{K+1})` with
/// `ρ = L/(m+L)`. Nonnegative whenever every per-step slack is.
pub fn unrolled_corollary_check<W>(trace: &RunTrace, l: f64, m: f64, omega_fn: W) -> Result<f64>
where
    W: Fn(&Point) -> Result<f64>,
{
    let s = l + m;
    let rho = l / s;
    let mut rhs = omega_fn(&trace.z_1)?;
    for r in &trace.records {
        let e = r
            .e_k
            .ok_or_else(|| Error::InvalidParameter(format!("record {} has no error term", r.k)))?;
        rhs = rho * rhs + e / s;
    }
    Ok(rhs - omega_fn(trace.last_iterate())?)
}

/// Right side minus left side of
/// `⟨F(z_{k+½}), z_{k+½} - z⟩ ≤ L⟨H(z_k) - H(z_{k+1}), z_{k+1} - z⟩
///   - ⟨F(z_k) - F(z_{k+½}), z_{k+½} - z_{k+1}⟩
///   + L⟨H(z_k) - H(z_{k+½}), z_{k+½} - z_{k+1}⟩`.
pub fn lemma_mfmp_slack(
    record: &IterRecord,
    field_f: &VectorField,
    field_h: &VectorField,
    l: f64,
    z: &Point,
) -> Result<f64> {
    let (zk, zh, zn) = (&record.z_k, &record.z_half, &record.z_next);
    let (fk, fh) = (field_f.eval(zk)?, field_f.eval(zh)?);
    let (hk, hh, hn) = (field_h.eval(zk)?, field_h.eval(zh)?, field_h.eval(zn)?);
    let lhs = fh.dot(&(zh - z));
    let rhs = l * (&hk - hn).dot(&(zn - z)) - (fk - fh).dot(&(zh - zn)) + l * (hk - hh).dot(&(zh - zn));
    Ok(rhs - lhs)
}

/// The two readings of the relative-smoothness gap bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub value: f64,
    /// `L ω/K + δ₁/L + 3δ₂`.
    pub stated: f64,
    /// `L ω/K + δ₂ + 3Lδ₁`.
    pub derived: f64,
    pub stated_holds: bool,
    pub derived_holds: bool,
}

/// Compares a gap value against both forms of the relative-smoothness bound.
pub fn theorem1_check(value: f64, l: f64, k: usize, omega: f64, delta1: f64, delta2: f64) -> BoundCheck {
    let base = l * omega / k as f64;
    let stated = base + delta1 / l + 3.0 * delta2;
    let derived = base + delta2 + 3.0 * l * delta1;
    BoundCheck {
        value,
        stated,
        derived,
        stated_holds: value <= stated,
        derived_holds: value <= derived,
    }
}

/// `L ω/K + 2Lδ`, the relative-Lipschitz gap bound.
pub fn theorem2_bound(l: f64, k: usize, omega: f64, delta: f64) -> f64 {
    l * omega / k as f64 + 2.0 * l * delta
}
