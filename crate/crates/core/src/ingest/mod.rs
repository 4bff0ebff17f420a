//! Evidence base: trials, trial-level estimands, contrast estimates and arm summaries.
//!
//! Contrast uncertainty comes from the best available source, in order: a reported
//! standard error, the contrast's reported confidence interval, or the two arms'
//! confidence intervals combined by root-sum-square. Every interval is treated as a
//! large-sample normal (Wald) interval.

mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimand::{normalize_text, Estimand, EstimandError, IntercurrentEventStrategy};
use crate::stats::z_for_level;
use crate::Treatment;

pub use format::{EvidenceFile, Format};

pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot infer evidence format from '{0}' (expected .csv or .json)")]
    UnknownFormat(String),
    #[error("{locator}: {message}")]
    Schema { locator: String, message: String },
    #[error("{locator}: {message}")]
    Invalid { locator: String, message: String },
    #[error("{locator}: {source}")]
    Estimand { locator: String, source: EstimandError },
    #[error("{locator}: duplicate contrast {key}")]
    DuplicateContrast { locator: String, key: String },
    #[error("confidence interval bounds must be finite with lower < upper (got {lower}, {upper})")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("confidence level must lie in (0, 1) (got {0})")]
    InvalidLevel(f64),
    #[error("cannot derive a contrast from arms: {0}")]
    ArmMismatch(String),
}

impl IngestError {
    fn invalid(locator: &str, message: impl Into<String>) -> Self {
        IngestError::Invalid { locator: locator.to_string(), message: message.into() }
    }
}

/// Standard error implied by a normal-theory confidence interval.
pub fn se_from_ci(lower: f64, upper: f64, level: f64) -> Result<f64, IngestError> {
    if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
        return Err(IngestError::InvalidInterval { lower, upper });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(IngestError::InvalidLevel(level));
    }
    Ok((upper - lower) / (2.0 * z_for_level(level)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn se(&self) -> Result<f64, IngestError> {
        se_from_ci(self.lower, self.upper, self.level)
    }
}

/// Mean change from baseline in one arm, under one estimand and endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub trial_id: String,
    pub treatment: Treatment,
    pub n_randomized: u32,
    /// Normalized endpoint key.
    pub endpoint: String,
    pub estimand_label: String,
    pub mean_change: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_level: f64,
}

impl ArmSummary {
    pub fn se(&self) -> Result<f64, IngestError> {
        se_from_ci(self.ci_lower, self.ci_upper, self.ci_level)
    }

    pub fn variance(&self) -> Result<f64, IngestError> {
        self.se().map(|s| s * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySource {
    ReportedSe,
    FromCi,
    FromArms,
}

impl fmt::Display for UncertaintySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UncertaintySource::ReportedSe => "reported_se",
            UncertaintySource::FromCi => "from_ci",
            UncertaintySource::FromArms => "from_arms",
        })
    }
}

/// Relative effect `treatment - comparator` from one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub trial_id: String,
    pub treatment: Treatment,
    pub comparator: Treatment,
    /// Normalized endpoint key.
    pub endpoint: String,
    pub estimand_label: String,
    pub md: f64,
    pub se: f64,
    pub source: UncertaintySource,
    /// Confidence interval as reported for the contrast, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_ci: Option<ConfidenceInterval>,
}

impl ContrastEstimate {
    pub fn variance(&self) -> f64 {
        self.se * self.se
    }

    /// Identity of the contrast up to treatment order.
    fn unordered_key(&self) -> (String, String, String, Treatment, Treatment) {
        let (a, b) = if self.treatment <= self.comparator {
            (self.treatment.clone(), self.comparator.clone())
        } else {
            (self.comparator.clone(), self.treatment.clone())
        };
        (self.trial_id.clone(), self.endpoint.clone(), self.estimand_label.clone(), a, b)
    }
}

/// Contrast `a - b` from two arm summaries of the same trial, endpoint and estimand.
pub fn contrast_from_arms(a: &ArmSummary, b: &ArmSummary) -> Result<ContrastEstimate, IngestError> {
    if a.trial_id != b.trial_id {
        return Err(IngestError::ArmMismatch(format!("trials {} and {}", a.trial_id, b.trial_id)));
    }
    if a.endpoint != b.endpoint {
        return Err(IngestError::ArmMismatch(format!("endpoints {} and {}", a.endpoint, b.endpoint)));
    }
    if a.estimand_label != b.estimand_label {
        return Err(IngestError::ArmMismatch(format!(
            "estimands {} and {}",
            a.estimand_label, b.estimand_label
        )));
    }
    if a.treatment == b.treatment {
        return Err(IngestError::ArmMismatch(format!("both arms are {}", a.treatment)));
    }
    let se = (a.variance()? + b.variance()?).sqrt();
    Ok(ContrastEstimate {
        trial_id: a.trial_id.clone(),
        treatment: a.treatment.clone(),
        comparator: b.treatment.clone(),
        endpoint: a.endpoint.clone(),
        estimand_label: a.estimand_label.clone(),
        md: a.mean_change - b.mean_change,
        se,
        source: UncertaintySource::FromArms,
        reported_ci: None,
    })
}

/// `(estimand label, endpoint key)`.
pub type EstimandKey = (String, String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub arms: BTreeSet<Treatment>,
    pub estimands: BTreeMap<EstimandKey, Estimand>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBase {
    pub trials: BTreeMap<String, Trial>,
    pub contrasts: Vec<ContrastEstimate>,
    pub arm_summaries: Vec<ArmSummary>,
}

impl EvidenceBase {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        parse_evidence(path)
    }

    pub fn estimand_for(&self, contrast: &ContrastEstimate) -> Option<&Estimand> {
        self.trials
            .get(&contrast.trial_id)?
            .estimands
            .get(&(contrast.estimand_label.clone(), contrast.endpoint.clone()))
    }

    /// Trial-level estimands for one endpoint, in trial then label order.
    pub fn estimands_for_endpoint(&self, endpoint: &str) -> Vec<(&str, &Estimand)> {
        let key = normalize_text(endpoint);
        self.trials
            .iter()
            .flat_map(|(id, t)| {
                t.estimands
                    .iter()
                    .filter(|((_, ep), _)| *ep == key)
                    .map(move |(_, e)| (id.as_str(), e))
            })
            .collect()
    }

    /// Endpoint keys in first-appearance order over trials and estimands.
    pub fn endpoints(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for trial in self.trials.values() {
            for (_, ep) in trial.estimands.keys() {
                if !seen.contains(ep) {
                    seen.push(ep.clone());
                }
            }
        }
        seen
    }

    pub fn treatments(&self) -> BTreeSet<Treatment> {
        self.trials.values().flat_map(|t| t.arms.iter().cloned()).collect()
    }

    pub fn arm(&self, trial_id: &str, label: &str, endpoint: &str, treatment: &Treatment) -> Option<&ArmSummary> {
        self.arm_summaries.iter().find(|a| {
            a.trial_id == trial_id
                && a.estimand_label == label
                && a.endpoint == endpoint
                && &a.treatment == treatment
        })
    }

    /// Copy keeping only the given contrasts (by index) and the arms of their slices.
    pub fn with_contrasts(&self, indices: &[usize]) -> EvidenceBase {
        let contrasts: Vec<ContrastEstimate> = indices.iter().map(|&i| self.contrasts[i].clone()).collect();
        let slices: BTreeSet<(&str, &str, &str)> = contrasts
            .iter()
            .map(|c| (c.trial_id.as_str(), c.estimand_label.as_str(), c.endpoint.as_str()))
            .collect();
        let arm_summaries = self
            .arm_summaries
            .iter()
            .filter(|a| slices.contains(&(a.trial_id.as_str(), a.estimand_label.as_str(), a.endpoint.as_str())))
            .cloned()
            .collect();
        EvidenceBase { trials: self.trials.clone(), contrasts, arm_summaries }
    }

    /// Copy without the named trials and everything that refers to them.
    pub fn without_trials(&self, trial_ids: &[&str]) -> EvidenceBase {
        let keep = |id: &str| !trial_ids.contains(&id);
        EvidenceBase {
            trials: self.trials.iter().filter(|(id, _)| keep(id)).map(|(k, v)| (k.clone(), v.clone())).collect(),
            contrasts: self.contrasts.iter().filter(|c| keep(&c.trial_id)).cloned().collect(),
            arm_summaries: self.arm_summaries.iter().filter(|a| keep(&a.trial_id)).cloned().collect(),
        }
    }

    pub fn to_file(&self) -> EvidenceFile {
        EvidenceFile::from_base(self)
    }

    pub fn write(&self, format: Format) -> String {
        self.to_file().write(format)
    }
}

/// Reads and validates an evidence file; the format follows the extension.
pub fn parse_evidence(path: impl AsRef<Path>) -> Result<EvidenceBase, IngestError> {
    let path = path.as_ref();
    let format = Format::from_path(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_evidence_str(&text, format)
}

pub fn parse_evidence_str(text: &str, format: Format) -> Result<EvidenceBase, IngestError> {
    EvidenceFile::parse(text, format)?.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    InvariantViolation,
    SharedArmVarianceUnidentifiable,
    TimepointSpread,
    EndpointCoverage,
    StrategyCoverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}", self.message)
    }
}

fn error_issue(message: String) -> Issue {
    Issue { severity: Severity::Error, code: IssueCode::InvariantViolation, message }
}

fn warning(code: IssueCode, message: String) -> Issue {
    Issue { severity: Severity::Warning, code, message }
}

/// Re-checks every invariant and reports feasibility warnings. Never fails.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN bounds must fail
pub fn validate_evidence(base: &EvidenceBase) -> Vec<Issue> {
    let mut issues = Vec::new();

    let mut seen = BTreeSet::new();
    for (i, c) in base.contrasts.iter().enumerate() {
        let at = format!("contrast {i} ({} {} vs {})", c.trial_id, c.treatment, c.comparator);
        let Some(trial) = base.trials.get(&c.trial_id) else {
            issues.push(error_issue(format!("{at}: unknown trial")));
            continue;
        };
        for t in [&c.treatment, &c.comparator] {
            if !trial.arms.contains(t) {
                issues.push(error_issue(format!("{at}: treatment {t} is not an arm of the trial")));
            }
        }
        if c.treatment == c.comparator {
            issues.push(error_issue(format!("{at}: treatment equals comparator")));
        }
        if base.estimand_for(c).is_none() {
            issues.push(error_issue(format!("{at}: no estimand '{}' for endpoint {}", c.estimand_label, c.endpoint)));
        }
        if !(c.se.is_finite() && c.se > 0.0) || !c.md.is_finite() {
            issues.push(error_issue(format!("{at}: md and se must be finite with se > 0")));
        }
        if !seen.insert(c.unordered_key()) {
            issues.push(error_issue(format!("{at}: duplicate contrast")));
        }
    }
    for a in &base.arm_summaries {
        if !(a.ci_lower < a.ci_upper) || a.n_randomized == 0 {
            issues.push(error_issue(format!(
                "arm {} {} ({}, {}): invalid interval or sample size",
                a.trial_id, a.treatment, a.estimand_label, a.endpoint
            )));
        }
    }

    // Multi-arm slices whose shared-arm variance cannot be recovered.
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&ContrastEstimate>> = BTreeMap::new();
    for c in &base.contrasts {
        groups.entry((&c.trial_id, &c.endpoint, &c.estimand_label)).or_default().push(c);
    }
    for ((trial, endpoint, label), contrasts) in &groups {
        if contrasts.len() < 2 {
            continue;
        }
        let arms: BTreeSet<&Treatment> =
            contrasts.iter().flat_map(|c| [&c.treatment, &c.comparator]).collect();
        let missing: Vec<&str> = arms
            .iter()
            .filter(|t| base.arm(trial, label, endpoint, t).is_none())
            .map(|t| t.as_str())
            .collect();
        if !missing.is_empty() {
            issues.push(warning(
                IssueCode::SharedArmVarianceUnidentifiable,
                format!(
                    "{trial} ({label}, {endpoint}): shared-arm variance unidentifiable; no arm summaries for {}",
                    missing.join(", ")
                ),
            ));
        }
    }

    for endpoint in base.endpoints() {
        let estimands = base.estimands_for_endpoint(&endpoint);
        let timepoints: BTreeSet<u32> = estimands.iter().map(|(_, e)| e.endpoint.timepoint_weeks).collect();
        if timepoints.len() > 1 {
            let list: Vec<String> = timepoints.iter().map(u32::to_string).collect();
            issues.push(warning(
                IssueCode::TimepointSpread,
                format!("endpoint timepoints differ: {} ({endpoint})", list.join(", ")),
            ));
        }

        let covering: BTreeSet<&str> = estimands.iter().map(|(t, _)| *t).collect();
        let missing: Vec<&str> =
            base.trials.keys().map(String::as_str).filter(|t| !covering.contains(t)).collect();
        if !missing.is_empty() {
            issues.push(warning(
                IssueCode::EndpointCoverage,
                format!("endpoint {endpoint} has no estimand in trials: {}", missing.join(", ")),
            ));
        }

        // Strategy profiles over the events every estimand of this endpoint declares.
        let mut common: Option<BTreeSet<String>> = None;
        for (_, e) in &estimands {
            let names: BTreeSet<String> = e.ie_handlings.iter().map(|h| h.event.to_string()).collect();
            common = Some(match common {
                None => names,
                Some(prev) => prev.intersection(&names).cloned().collect(),
            });
        }
        let common = common.unwrap_or_default();
        if common.is_empty() {
            continue;
        }
        let mut profiles: BTreeMap<Vec<IntercurrentEventStrategy>, BTreeSet<&str>> = BTreeMap::new();
        for (trial, e) in &estimands {
            let profile = common
                .iter()
                .map(|ev| e.strategy_of(ev).ok().flatten().expect("common event is declared"))
                .collect();
            profiles.entry(profile).or_default().insert(trial);
        }
        for (profile, trials) in &profiles {
            if trials.len() < covering.len() {
                let absent: Vec<&str> = covering.difference(trials).copied().collect();
                let names: Vec<String> = profile.iter().map(|s| s.to_string()).collect();
                issues.push(warning(
                    IssueCode::StrategyCoverage,
                    format!(
                        "endpoint {endpoint}: strategy profile [{}] present in {} but not in {}",
                        names.join(", "),
                        trials.iter().copied().collect::<Vec<_>>().join(", "),
                        absent.join(", ")
                    ),
                ));
            }
        }
    }

    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(treatment: &str, mean: f64, lower: f64, upper: f64) -> ArmSummary {
        ArmSummary {
            trial_id: "T".into(),
            treatment: treatment.into(),
            n_randomized: 100,
            endpoint: "hba1c".into(),
            estimand_label: "e".into(),
            mean_change: mean,
            ci_lower: lower,
            ci_upper: upper,
            ci_level: 0.95,
        }
    }

    #[test]
    fn se_from_symmetric_unit_interval() {
        let se = se_from_ci(-1.959964, 1.959964, 0.95).unwrap();
        assert!((se - 1.0).abs() < 1e-6);
    }

    #[test]
    fn se_from_reported_interval() {
        let se = se_from_ci(-0.70, -0.23, 0.95).unwrap();
        assert!((se - 0.11990).abs() < 1e-5, "{se}");
    }

    #[test]
    fn se_from_ci_rejects_bad_input() {
        assert!(se_from_ci(1.0, 1.0, 0.95).is_err());
        assert!(se_from_ci(2.0, 1.0, 0.95).is_err());
        assert!(se_from_ci(f64::NAN, 1.0, 0.95).is_err());
        assert!(se_from_ci(0.0, f64::INFINITY, 0.95).is_err());
        assert!(se_from_ci(0.0, 1.0, 1.0).is_err());
        assert!(se_from_ci(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn contrast_from_two_arms() {
        let a = arm("A", -1.0, -1.196, -0.804);
        let b = arm("B", 0.0, -0.196, 0.196);
        let c = contrast_from_arms(&a, &b).unwrap();
        assert!((c.md + 1.0).abs() < 1e-12);
        assert!((c.se - 0.141421).abs() < 1e-5, "{}", c.se);
        assert_eq!(c.source, UncertaintySource::FromArms);

        let b2 = ArmSummary { treatment: "B".into(), ..a.clone() };
        let same = contrast_from_arms(&a, &b2).unwrap();
        assert_eq!(same.md, 0.0);
        assert!((same.se - 2f64.sqrt() * a.se().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn contrast_from_arms_rejects_mismatches() {
        let a = arm("A", -1.0, -1.2, -0.8);
        let other_trial = ArmSummary { trial_id: "U".into(), treatment: "B".into(), ..a.clone() };
        assert!(contrast_from_arms(&a, &other_trial).is_err());
        assert!(contrast_from_arms(&a, &a).is_err());
        let other_ep = ArmSummary { endpoint: "weight".into(), treatment: "B".into(), ..a.clone() };
        assert!(contrast_from_arms(&a, &other_ep).is_err());
    }
}
