//! Experiment configuration files.
//!
//! A config is a TOML document with four tables. Unknown keys are rejected
//! and every value is validated before any run starts; see
//! `docs/schemas.md` for the full schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mirrorfree::problems::{InstanceKind, SubproblemOptions, DEFAULT_CERT_SAMPLES, DEFAULT_CERT_TOL, EG2_L3};
use mirrorfree::prox::third_order::MirrorVariant;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of every output file. Defaults to `<kind>-n<n>`.
    #[serde(default)]
    pub label: Option<String>,
    pub instance: InstanceSection,
    pub run: RunSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub kind: String,
    pub n: usize,
    /// Overrides the instance's relative smoothness constant.
    #[serde(default)]
    pub l: Option<f64>,
    /// Overrides the instance's strong monotonicity constant.
    #[serde(default)]
    pub m: Option<f64>,
    /// Replace a failing `m` by the largest value whose certificate passes.
    #[serde(default = "default_true")]
    pub certify_fallback: bool,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_l3")]
    pub l3: f64,
    /// Defaults to `tau² · l3`.
    #[serde(default)]
    pub m_reg: Option<f64>,
    #[serde(default)]
    pub mirror: MirrorChoice,
    #[serde(default = "default_kappa_min")]
    pub kappa_min: f64,
    #[serde(default = "default_second_order_coeff")]
    pub second_order_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorChoice {
    Standard,
    #[default]
    Conservative,
}

impl From<MirrorChoice> for MirrorVariant {
    fn from(c: MirrorChoice) -> Self {
        match c {
            MirrorChoice::Standard => MirrorVariant::Standard,
            MirrorChoice::Conservative => MirrorVariant::Conservative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Mfmp,
    MfmpSm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Mfmp => "mfmp",
            Algorithm::MfmpSm => "mfmp-sm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Auto,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_prox_tolerance")]
    pub prox_tolerance: f64,
    #[serde(default = "default_prox_max_iter")]
    pub prox_max_iter: usize,
    /// `z_1` is drawn uniformly on the sphere of this radius.
    #[serde(default = "default_one")]
    pub init_radius: f64,
    #[serde(default = "default_one")]
    pub comparison_radius: f64,
    #[serde(default = "default_comparison_count")]
    pub comparison_count: usize,
    /// Residual tolerance of the Newton solve for `z*`.
    #[serde(default = "default_reference_tolerance")]
    pub reference_tolerance: f64,
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
    #[serde(default)]
    pub backend: Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    ThreePoint,
    Certificates,
    Contraction,
    LemmaMfmp,
    AntiLipschitz,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::ThreePoint,
        Check::Certificates,
        Check::Contraction,
        Check::LemmaMfmp,
        Check::AntiLipschitz,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub enabled: Vec<Check>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_cert_tol")]
    pub certificate_tolerance: f64,
    #[serde(default = "default_three_point_tol")]
    pub three_point_tolerance: f64,
    #[serde(default = "default_slack_tol")]
    pub slack_tolerance: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            enabled: Vec::new(),
            samples: default_samples(),
            certificate_tolerance: default_cert_tol(),
            three_point_tolerance: default_three_point_tol(),
            slack_tolerance: default_slack_tol(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the output root; defaults to the label.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}
fn default_tau() -> f64 {
    3.0
}
fn default_l3() -> f64 {
    EG2_L3
}
fn default_kappa_min() -> f64 {
    0.25
}
fn default_second_order_coeff() -> f64 {
    0.5
}
fn default_prox_tolerance() -> f64 {
    1e-10
}
fn default_prox_max_iter() -> usize {
    100
}
fn default_one() -> f64 {
    1.0
}
fn default_comparison_count() -> usize {
    64
}
fn default_reference_tolerance() -> f64 {
    1e-12
}
fn default_guard() -> f64 {
    1e6
}
fn default_samples() -> usize {
    DEFAULT_CERT_SAMPLES
}
fn default_cert_tol() -> f64 {
    DEFAULT_CERT_TOL
}
fn default_three_point_tol() -> f64 {
    1e-10
}
fn default_slack_tol() -> f64 {
    1e-8
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::InvalidConfig(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Result<InstanceKind> {
        InstanceKind::from_str(&self.instance.kind).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => format!("{}-n{}", self.instance.kind, self.instance.n),
        }
    }

    pub fn subproblem_options(&self) -> SubproblemOptions {
        SubproblemOptions {
            tau: self.instance.tau,
            l3: self.instance.l3,
            m_reg: self.instance.m_reg,
            variant: self.instance.mirror.into(),
            kappa_min: self.instance.kappa_min,
            second_order_coeff: self.instance.second_order_coeff,
        }
    }

    pub fn output_dir(&self, root: &Path) -> PathBuf {
        match &self.output.dir {
            Some(d) => root.join(d),
            None => root.join(self.label()),
        }
    }

    pub fn check_enabled(&self, c: Check) -> bool {
        self.checks.enabled.contains(&c)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let inst = &self.instance;
        if inst.n == 0 {
            return Err(HarnessError::InvalidConfig("instance.n must be at least 1".into()));
        }
        if let Some(l) = inst.l {
            positive("instance.l", l)?;
        }
        if let Some(m) = inst.m {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "instance.m must be nonnegative, got {m}"
                )));
            }
        }
        if kind == InstanceKind::Eg2Subproblem {
            if !(inst.tau > 1.0 && inst.tau.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "instance.tau must exceed 1, got {}",
                    inst.tau
                )));
            }
            if !(inst.l3 >= 0.0 && inst.l3.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "instance.l3 must be nonnegative, got {}",
                    inst.l3
                )));
            }
            if let Some(m) = inst.m_reg {
                if !(m > inst.tau * inst.l3 && m.is_finite()) {
                    return Err(HarnessError::InvalidConfig(format!(
                        "instance.m_reg = {m} must exceed tau * l3 = {}",
                        inst.tau * inst.l3
                    )));
                }
            }
            if !(inst.kappa_min >= 0.0 && inst.kappa_min.is_finite()) {
                return Err(HarnessError::InvalidConfig(
                    "instance.kappa_min must be nonnegative".into(),
                ));
            }
            if !inst.second_order_coeff.is_finite() {
                return Err(HarnessError::InvalidConfig(
                    "instance.second_order_coeff must be finite".into(),
                ));
            }
        }
        let run = &self.run;
        if run.iterations == 0 {
            return Err(HarnessError::InvalidConfig("run.iterations must be at least 1".into()));
        }
        if run.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("run.seeds must not be empty".into()));
        }
        let mut sorted = run.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != run.seeds.len() {
            return Err(HarnessError::InvalidConfig("run.seeds contains duplicates".into()));
        }
        positive("run.prox_tolerance", run.prox_tolerance)?;
        positive("run.reference_tolerance", run.reference_tolerance)?;
        positive("run.divergence_guard", run.divergence_guard)?;
        if run.prox_max_iter == 0 {
            return Err(HarnessError::InvalidConfig(
                "run.prox_max_iter must be at least 1".into(),
            ));
        }
        if !(run.init_radius >= 0.0 && run.init_radius.is_finite()) {
            return Err(HarnessError::InvalidConfig(
                "run.init_radius must be nonnegative".into(),
            ));
        }
        if !(run.comparison_radius >= 0.0 && run.comparison_radius.is_finite()) {
            return Err(HarnessError::InvalidConfig(
                "run.comparison_radius must be nonnegative".into(),
            ));
        }
        let ch = &self.checks;
        if ch.samples == 0 {
            return Err(HarnessError::InvalidConfig("checks.samples must be at least 1".into()));
        }
        positive("checks.certificate_tolerance", ch.certificate_tolerance)?;
        positive("checks.three_point_tolerance", ch.three_point_tolerance)?;
        positive("checks.slack_tolerance", ch.slack_tolerance)?;
        if let Some(l) = &self.label {
            if l.is_empty() || l.contains(['/', '\\']) {
                return Err(HarnessError::InvalidConfig(format!("label `{l}` is not a file name")));
            }
        }
        Ok(())
    }
}

/// Parses seed lists such as `0,3,7` or `0..5` (half-open) or a mix.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || HarnessError::InvalidInput(format!("cannot parse seed list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn suite_config(label: &str, kind: InstanceKind, n: usize, iterations: usize, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        label: Some(label.to_string()),
        instance: InstanceSection {
            kind: kind.label().to_string(),
            n,
            l: None,
            m: None,
            certify_fallback: true,
            tau: default_tau(),
            l3: default_l3(),
            m_reg: None,
            mirror: MirrorChoice::Conservative,
            kappa_min: default_kappa_min(),
            second_order_coeff: default_second_order_coeff(),
        },
        run: RunSection {
            algorithm: Algorithm::MfmpSm,
            iterations,
            seeds,
            prox_tolerance: default_prox_tolerance(),
            prox_max_iter: default_prox_max_iter(),
            init_radius: default_one(),
            comparison_radius: default_one(),
            comparison_count: default_comparison_count(),
            reference_tolerance: default_reference_tolerance(),
            divergence_guard: default_guard(),
            backend: Backend::Auto,
        },
        checks: ChecksSection {
            enabled: vec![Check::Certificates, Check::Contraction],
            ..ChecksSection::default()
        },
        output: OutputSection::default(),
    }
}

/// The three default experiments: the quartic saddle with and without
/// coupling (`n = 10`, `K = 200`, five seeds) and the third-order
/// sub-problem (`n = 2`, `K = 100`, ten seeds).
pub fn default_suite() -> Vec<ExperimentConfig> {
    vec![
        suite_config(
            "smooth-inseparable",
            InstanceKind::SmoothInseparable,
            10,
            200,
            (0..5).collect(),
        ),
        suite_config(
            "smooth-separable",
            InstanceKind::SmoothSeparable,
            10,
            200,
            (0..5).collect(),
        ),
        suite_config("eg2-subproblem", InstanceKind::Eg2Subproblem, 2, 100, (0..10).collect()),
    ]
}
