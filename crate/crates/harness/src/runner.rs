//! Builds instances from a config, runs every seed and writes the outputs.

use std::path::{Path, PathBuf};

use log::{info, warn};
use mirrorfree::geometry::{
    anti_lipschitz_ratio, co_conservativeness_estimate, conservativeness_estimate, gbd, three_point_residual,
    BoxSampler, CertificateReport, GeometryContext, TrianglePath,
};
use mirrorfree::mfmp::{
    contraction_check, corollary_check, lemma_mfmp_slack, run_configured, unrolled_corollary_check, ProxBackend,
    RunConfig, RunTrace,
};
use mirrorfree::problems::{
    eg2_subproblem, norelip_pair, random_instance, solve_reference, InstanceKind, ProblemInstance,
};
use mirrorfree::{Error as CoreError, Point};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, Backend, Check, ExperimentConfig};
use crate::error::{exit_code, HarnessError, Result};
use crate::trace::{fmt_real, write_trace};

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const CERTIFY_FILE: &str = "certify.json";

/// Stream of the initial-point generator; instance parameters use stream 0.
const INIT_STREAM: u64 = 1;
/// Stream of the lemma probe points.
const PROBE_STREAM: u64 = 2;
const LEMMA_PROBES: usize = 50;
const REFERENCE_MAX_ITER: usize = 500;
const ANTILIP_THETAS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged,
    ProxFailure,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Ok => exit_code::OK,
            RunStatus::Diverged => exit_code::DIVERGENCE,
            RunStatus::ProxFailure => exit_code::PROX_FAILURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub tolerance: f64,
}

impl From<&CertificateReport> for CertificateSummary {
    fn from(r: &CertificateReport) -> Self {
        Self {
            holds: r.holds,
            worst_margin: r.worst_margin,
            worst_point: r.worst_point.iter().copied().collect(),
            samples: r.samples,
            tolerance: r.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificatePair {
    pub l: f64,
    pub m: f64,
    pub smoothness: CertificateSummary,
    pub strong_monotonicity: CertificateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePointSummary {
    pub max_residual_f: f64,
    pub max_residual_h: f64,
    pub triples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionSummary {
    pub worst_step_slack: f64,
    /// Cumulative bound with weights `1/(m+L)^j` on `E_j`.
    pub corollary_slack: f64,
    /// Cumulative bound obtained by chaining the per-step inequality.
    pub unrolled_corollary_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    /// Smallest slack divided by `max(1, ‖z - z_{k+1}‖)`.
    pub worst_scaled_slack: f64,
    pub probes: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiLipschitzSummary {
    pub thetas: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `L - m`.
    pub gap: f64,
    /// Whether `L - m` dominates every sampled ratio.
    pub dominated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckResults {
    pub certificates: Option<CertificatePair>,
    pub three_point: Option<ThreePointSummary>,
    pub contraction: Option<ContractionSummary>,
    pub lemma_mfmp: Option<LemmaSummary>,
    pub anti_lipschitz: Option<AntiLipschitzSummary>,
}

impl CheckResults {
    pub fn passed(&self) -> bool {
        self.certificates
            .as_ref()
            .map_or(true, |c| c.smoothness.holds && c.strong_monotonicity.holds)
            && self.three_point.as_ref().map_or(true, |c| c.passed)
            && self.contraction.as_ref().map_or(true, |c| c.passed)
            && self.lemma_mfmp.as_ref().map_or(true, |c| c.passed)
            && self.anti_lipschitz.as_ref().map_or(true, |c| c.dominated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub instance: String,
    pub trace_file: String,
    pub timing_file: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub iterations_completed: usize,
    pub l: f64,
    pub m: f64,
    /// Whether `m` was lowered to pass its certificate.
    pub m_fallback: bool,
    pub z_star_known: bool,
    pub initial_op_norm: f64,
    pub final_op_norm: Option<f64>,
    pub final_model_norm: Option<f64>,
    pub gap_estimate: Option<f64>,
    pub checks: CheckResults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub label: String,
    pub instance_kind: String,
    pub n: usize,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub runs: Vec<SeedSummary>,
    pub all_runs_ok: bool,
    pub all_checks_passed: bool,
}

impl ExperimentSummary {
    /// Exit code of the first seed that did not finish.
    pub fn exit_code(&self) -> i32 {
        self.runs
            .iter()
            .map(|r| r.status.exit_code())
            .find(|&c| c != exit_code::OK)
            .unwrap_or(exit_code::OK)
    }
}

/// A built instance plus what happened while certifying it.
pub struct PreparedInstance {
    pub instance: ProblemInstance,
    pub m_fallback: bool,
}

/// Builds the instance for one seed, applies constant overrides, lowers a
/// failing `m` when allowed and solves for `z*` when it is not known.
pub fn prepare_instance(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedInstance> {
    let kind = cfg.kind()?;
    let n = cfg.instance.n;
    let mut inst = match kind {
        InstanceKind::Eg2Subproblem => {
            let mut i = eg2_subproblem(n, seed, &cfg.subproblem_options())?;
            i.label = format!("{kind}-n{n}");
            i
        }
        _ => random_instance(kind, n, seed)?,
    };
    if let Some(l) = cfg.instance.l {
        inst.l = l;
    }
    if let Some(m) = cfg.instance.m {
        inst.m = m;
    }
    let mut m_fallback = false;
    if cfg.instance.certify_fallback && cfg.run.algorithm == Algorithm::MfmpSm && inst.m > 0.0 {
        m_fallback = inst.certify_m_or_fallback(cfg.checks.samples, seed, cfg.checks.certificate_tolerance)?;
    }
    if inst.z_star.is_none() {
        match solve_reference(&inst.field_f, cfg.run.reference_tolerance, REFERENCE_MAX_ITER) {
            Ok(z) => inst.z_star = Some(z),
            Err(e) => warn!("{} seed {seed}: no reference point ({e})", inst.label),
        }
    }
    Ok(PreparedInstance {
        instance: inst,
        m_fallback,
    })
}

/// `z_1`, uniform on the sphere of radius `radius` around the origin.
pub fn initial_point(dim: usize, seed: u64, radius: f64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        if n > 1e-12 {
            return v * (radius / n);
        }
    }
}

pub fn run_config_for(cfg: &ExperimentConfig, seed: u64, dim: usize) -> RunConfig {
    let mut rc = RunConfig::new(initial_point(dim, seed, cfg.run.init_radius), cfg.run.iterations);
    rc.prox_tolerance = cfg.run.prox_tolerance;
    rc.prox_max_iter = cfg.run.prox_max_iter;
    rc.seed = seed;
    rc.use_sm = cfg.run.algorithm == Algorithm::MfmpSm;
    rc.comparison.radius = cfg.run.comparison_radius;
    rc.comparison.count = cfg.run.comparison_count;
    rc.divergence_guard = cfg.run.divergence_guard;
    rc.backend = match cfg.run.backend {
        Backend::Auto => ProxBackend::Auto,
        Backend::Generic => ProxBackend::Generic,
    };
    rc
}

fn classify(e: &CoreError) -> RunStatus {
    match e {
        CoreError::Divergence { .. } | CoreError::NonFinite(_) => RunStatus::Diverged,
        _ => RunStatus::ProxFailure,
    }
}

fn certificates(inst: &ProblemInstance, cfg: &ExperimentConfig, seed: u64) -> Result<CertificatePair> {
    let (s, m) = inst.certify(cfg.checks.samples, seed, cfg.checks.certificate_tolerance)?;
    Ok(CertificatePair {
        l: inst.l,
        m: inst.m,
        smoothness: (&s).into(),
        strong_monotonicity: (&m).into(),
    })
}

fn three_point(
    inst: &ProblemInstance,
    cfg: &ExperimentConfig,
    seed: u64,
    ctx: &GeometryContext,
) -> Result<ThreePointSummary> {
    let tris = BoxSampler::default_box(inst.dim(), seed)?.triangles(cfg.checks.samples);
    let mut worst = [0.0f64; 2];
    for t in &tris {
        worst[0] = worst[0].max(three_point_residual(ctx, &inst.field_f, &t.a, &t.b, &t.c)?);
        worst[1] = worst[1].max(three_point_residual(ctx, &inst.field_h, &t.a, &t.b, &t.c)?);
    }
    let tol = cfg.checks.three_point_tolerance;
    Ok(ThreePointSummary {
        max_residual_f: worst[0],
        max_residual_h: worst[1],
        triples: tris.len(),
        tolerance: tol,
        passed: worst[0] <= tol && worst[1] <= tol,
    })
}

fn contraction(
    inst: &ProblemInstance,
    trace: &RunTrace,
    cfg: &ExperimentConfig,
    ctx: &GeometryContext,
) -> Result<Option<ContractionSummary>> {
    let Some(z_star) = &trace.z_star else {
        return Ok(None);
    };
    if !trace.use_sm || trace.records.is_empty() {
        return Ok(None);
    }
    let omega = |z: &Point| gbd(ctx, &inst.field_h, z_star, z);
    let step = contraction_check(trace, trace.l, trace.m, omega)?;
    let cumulative = corollary_check(trace, trace.l, trace.m, omega)?;
    let unrolled = unrolled_corollary_check(trace, trace.l, trace.m, omega)?;
    let tol = cfg.checks.slack_tolerance;
    Ok(Some(ContractionSummary {
        worst_step_slack: step,
        corollary_slack: cumulative,
        unrolled_corollary_slack: unrolled,
        tolerance: tol,
        passed: step >= -tol && cumulative >= -tol,
    }))
}

fn lemma(inst: &ProblemInstance, trace: &RunTrace, cfg: &ExperimentConfig, seed: u64) -> Result<Option<LemmaSummary>> {
    if trace.use_sm || trace.records.is_empty() {
        return Ok(None);
    }
    let sampler = BoxSampler::default_box(inst.dim(), seed ^ (PROBE_STREAM << 32))?;
    let mut probes = sampler.points(LEMMA_PROBES);
    probes.push(trace.z_star.clone().unwrap_or_else(|| trace.z_1.clone()));
    let mut worst = f64::INFINITY;
    for r in &trace.records {
        for z in &probes {
            let s = lemma_mfmp_slack(r, &inst.field_f, &inst.field_h, trace.l, z)?;
            worst = worst.min(s / (z - &r.z_next).norm().max(1.0));
        }
    }
    let tol = cfg.checks.slack_tolerance;
    Ok(Some(LemmaSummary {
        worst_scaled_slack: worst,
        probes: probes.len(),
        tolerance: tol,
        passed: worst >= -tol,
    }))
}

/// Ratios on the triangles `a = θ(e_1 + e_{n+1})`, `b = 0`, `c = θ e_{n+1}`
/// of the first coordinate pair.
fn anti_lipschitz(inst: &ProblemInstance, ctx: &GeometryContext) -> Result<Option<AntiLipschitzSummary>> {
    let d = inst.dim();
    if d < 2 || d % 2 != 0 {
        return Ok(None);
    }
    let n = d / 2;
    let mut ratios = Vec::new();
    for &theta in &ANTILIP_THETAS {
        let mut a = DVector::zeros(d);
        a[0] = theta;
        a[n] = theta;
        let mut c = DVector::zeros(d);
        c[n] = theta;
        let path = TrianglePath::new(a, DVector::zeros(d), c)?;
        ratios.push(anti_lipschitz_ratio(ctx, &inst.field_f, &inst.field_h, &path)?);
    }
    let gap = inst.l - inst.m;
    let dominated = ratios.iter().all(|&r| gap >= r);
    Ok(Some(AntiLipschitzSummary {
        thetas: ANTILIP_THETAS.to_vec(),
        ratios,
        gap,
        dominated,
    }))
}

/// Runs one seed and writes its trace files into `dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(SeedSummary, RunTrace)> {
    let label = cfg.label();
    let PreparedInstance {
        instance: inst,
        m_fallback,
    } = prepare_instance(cfg, seed)?;
    let rc = run_config_for(cfg, seed, inst.dim());
    let ctx = rc.quadrature.clone();
    let (trace, status, error) = match run_configured(&inst, &rc) {
        Ok(t) => (t, RunStatus::Ok, None),
        Err(abort) => {
            warn!("{label} seed {seed}: {abort}");
            (abort.partial, classify(&abort.error), Some(abort.error.to_string()))
        }
    };
    let (trace_path, timing_path) = write_trace(dir, &label, seed, &trace)?;

    let mut checks = CheckResults::default();
    if cfg.check_enabled(Check::Certificates) {
        checks.certificates = Some(certificates(&inst, cfg, seed)?);
    }
    if cfg.check_enabled(Check::ThreePoint) {
        checks.three_point = Some(three_point(&inst, cfg, seed, &ctx)?);
    }
    if cfg.check_enabled(Check::Contraction) {
        checks.contraction = contraction(&inst, &trace, cfg, &ctx)?;
    }
    if cfg.check_enabled(Check::LemmaMfmp) {
        checks.lemma_mfmp = lemma(&inst, &trace, cfg, seed)?;
    }
    if cfg.check_enabled(Check::AntiLipschitz) {
        checks.anti_lipschitz = anti_lipschitz(&inst, &ctx)?;
    }

    let file_name = |p: &PathBuf| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let summary = SeedSummary {
        seed,
        instance: inst.label.clone(),
        trace_file: file_name(&trace_path),
        timing_file: file_name(&timing_path),
        status,
        error,
        iterations_completed: trace.records.len(),
        l: trace.l,
        m: trace.m,
        m_fallback,
        z_star_known: trace.z_star.is_some(),
        initial_op_norm: trace.initial_op_norm,
        final_op_norm: trace.records.last().map(|r| r.op_norm_next),
        final_model_norm: trace.records.last().map(|r| r.model_norm_next),
        gap_estimate: trace.gap_estimate,
        checks,
    };
    Ok((summary, trace))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Validates `cfg`, runs every seed in parallel and writes the traces and
/// `summary.json` under `cfg.output_dir(root)`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir(root);
    create_dir(&dir)?;
    let runs: Vec<SeedSummary> = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed, &dir).map(|(s, _)| s))
        .collect::<Result<_>>()?;
    for r in &runs {
        info!(
            "{} seed {}: {:?}, {} iterations, final op norm {}",
            cfg.label(),
            r.seed,
            r.status,
            r.iterations_completed,
            r.final_op_norm.map(fmt_real).unwrap_or_else(|| "-".into())
        );
    }
    let summary = ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        label: cfg.label(),
        instance_kind: cfg.instance.kind.clone(),
        n: cfg.instance.n,
        algorithm: cfg.run.algorithm,
        iterations: cfg.run.iterations,
        all_runs_ok: runs.iter().all(|r| r.status == RunStatus::Ok),
        all_checks_passed: runs.iter().all(|r| r.checks.passed()),
        runs,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCertificate {
    pub seed: u64,
    pub instance: String,
    pub m_fallback: bool,
    pub certificates: CertificatePair,
    /// Sampled lower bounds on the conservativeness constants.
    pub delta_f: f64,
    pub delta_h: f64,
    /// Of `F` with respect to `L·H`.
    pub co_delta: f64,
    pub h_is_conservative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySummary {
    pub schema_version: u32,
    pub label: String,
    pub seeds: Vec<SeedCertificate>,
    pub all_hold: bool,
}

pub fn certify_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedCertificate> {
    let PreparedInstance {
        instance: inst,
        m_fallback,
    } = prepare_instance(cfg, seed)?;
    let ctx = GeometryContext::default();
    let sampler = BoxSampler::default_box(inst.dim(), seed)?;
    let n = cfg.checks.samples;
    let scaled_h = inst.field_h.scaled(inst.l);
    Ok(SeedCertificate {
        seed,
        instance: inst.label.clone(),
        m_fallback,
        certificates: certificates(&inst, cfg, seed)?,
        delta_f: conservativeness_estimate(&ctx, &inst.field_f, &sampler, n)?,
        delta_h: conservativeness_estimate(&ctx, &inst.field_h, &sampler, n)?,
        co_delta: co_conservativeness_estimate(&ctx, &scaled_h, &inst.field_f, &sampler, n)?,
        h_is_conservative: inst.h_is_conservative,
    })
}

/// Certificates and conservativeness estimates for every seed, saved to
/// `certify.json`.
pub fn certify_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<CertifySummary> {
    cfg.validate()?;
    let dir = cfg.output_dir(root);
    create_dir(&dir)?;
    let seeds: Vec<SeedCertificate> = cfg
        .run
        .seeds
        .par_iter()
        .map(|&s| certify_seed(cfg, s))
        .collect::<Result<_>>()?;
    let all_hold = seeds
        .iter()
        .all(|s| s.certificates.smoothness.holds && s.certificates.strong_monotonicity.holds);
    let summary = CertifySummary {
        schema_version: SCHEMA_VERSION,
        label: cfg.label(),
        seeds,
        all_hold,
    };
    write_json(&dir.join(CERTIFY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiLipschitzRow {
    pub theta: f64,
    pub ratio: f64,
    pub closed_form: f64,
    /// `|ratio - closed_form| / max(1, |closed_form|)`.
    pub relative_difference: f64,
}

/// Numeric ratio against the closed form on the planar triangle family.
pub fn antilip_table(b: f64, e: f64, thetas: &[f64]) -> Result<Vec<AntiLipschitzRow>> {
    if thetas.is_empty() {
        return Err(HarnessError::InvalidInput("no theta values".into()));
    }
    let ctx = GeometryContext::default();
    let (f, h) = norelip_pair(b, e)?;
    thetas
        .iter()
        .map(|&theta| {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(HarnessError::InvalidInput(format!(
                    "theta must be positive, got {theta}"
                )));
            }
            let ratio = anti_lipschitz_ratio(&ctx, &f, &h, &mirrorfree::geometry::norelip_triangle(theta))?;
            let closed_form = mirrorfree::geometry::d_theta(b, e, theta)?;
            let relative_difference = (ratio - closed_form).abs() / closed_form.abs().max(1.0);
            Ok(AntiLipschitzRow {
                theta,
                ratio,
                closed_form,
                relative_difference,
            })
        })
        .collect()
}

pub fn write_antilip_csv(path: &Path, rows: &[AntiLipschitzRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["theta", "ratio", "closed_form", "relative_difference"])?;
    for r in rows {
        w.write_record([
            fmt_real(r.theta),
            fmt_real(r.ratio),
            fmt_real(r.closed_form),
            fmt_real(r.relative_difference),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
