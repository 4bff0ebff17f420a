//! Restriction by a target meta-estimand, feasibility checks, per-slice analyses and
//! side-by-side comparison of intercurrent-event strategies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimand::{
    heterogeneity_matrix, matches_meta, normalize_text, AlignmentReport, Attribute, EndpointSpec,
    IntercurrentEventHandling, IntercurrentEventStrategy, MatchingMode, MetaEstimand, SummaryMeasure,
};
use crate::ingest::{ContrastEstimate, EvidenceBase, UncertaintySource, DEFAULT_CI_LEVEL};
use crate::network::{build_network, NetworkError};
use crate::nma::{
    assemble_with, solve_fixed_effects, trial_covariance, CovarianceInput, NmaError, NmaResult,
};
use crate::Treatment;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{meta_label} / {endpoint}: analysis infeasible: {}", reasons.join("; "))]
    Infeasible { meta_label: String, endpoint: String, reasons: Vec<String>, disconnected: bool },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("strategy comparison needs at least two results")]
    TooFewResults,
    #[error("results '{0}' and '{1}' cover different treatment sets")]
    MismatchedTreatments(String, String),
    #[error(transparent)]
    Nma(#[from] NmaError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn default_level() -> f64 {
    DEFAULT_CI_LEVEL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub meta_estimands: Vec<MetaEstimand>,
    pub endpoints: Vec<String>,
    #[serde(default)]
    pub reference: Option<Treatment>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub force: bool,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: AnalysisConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.meta_estimands.is_empty() {
            return Err(PipelineError::Config("no meta-estimands".into()));
        }
        if self.endpoints.is_empty() {
            return Err(PipelineError::Config("no endpoints".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(PipelineError::Config(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        let mut labels = BTreeSet::new();
        for m in &self.meta_estimands {
            m.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            if !labels.insert(m.label.as_str()) {
                return Err(PipelineError::Config(format!("duplicate meta-estimand '{}'", m.label)));
            }
        }
        Ok(())
    }

    pub fn meta(&self, label: &str) -> Option<&MetaEstimand> {
        let key = normalize_text(label);
        self.meta_estimands.iter().find(|m| normalize_text(&m.label) == key)
    }
}

/// Builds a target from a strategy name when no configuration is supplied.
///
/// The strategy is applied to every event that all trial estimands of the requested
/// endpoints declare. Each endpoint takes the most common trial timepoint (ties go to
/// the later one).
pub fn derive_meta_estimand(
    base: &EvidenceBase,
    label: &str,
    endpoints: &[String],
    tolerance_weeks: u32,
    mode: MatchingMode,
) -> Result<MetaEstimand, PipelineError> {
    let strategy: IntercurrentEventStrategy = label.parse().map_err(|_| {
        PipelineError::Config(format!("'{label}' is not a strategy name; supply a meta-estimand via --config"))
    })?;
    let keys: Vec<String> = if endpoints.is_empty() {
        base.endpoints()
    } else {
        endpoints.iter().map(|e| normalize_text(e)).collect()
    };

    let mut specs = Vec::new();
    let mut common: Option<BTreeSet<String>> = None;
    for key in &keys {
        let estimands = base.estimands_for_endpoint(key);
        let Some((_, first)) = estimands.first() else {
            return Err(PipelineError::Config(format!("no trial estimand reports endpoint '{key}'")));
        };
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for (_, e) in &estimands {
            *counts.entry(e.endpoint.timepoint_weeks).or_default() += 1;
            let events: BTreeSet<String> = e.ie_handlings.iter().map(|h| h.event.to_string()).collect();
            common = Some(match common {
                None => events,
                Some(c) => c.intersection(&events).cloned().collect(),
            });
        }
        let timepoint = counts.iter().max_by_key(|(t, n)| (**n, **t)).map(|(t, _)| *t).unwrap_or(1);
        specs.push(EndpointSpec { timepoint_weeks: timepoint, ..first.endpoint.clone() });
    }
    let ie_handlings = common
        .unwrap_or_default()
        .iter()
        .map(|e| IntercurrentEventHandling::new(e, strategy))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let meta = MetaEstimand {
        label: strategy.token().to_string(),
        population: String::new(),
        treatments: BTreeSet::new(),
        endpoints: specs,
        summary_measure: SummaryMeasure::MeanDifference,
        ie_handlings,
        endpoint_timepoint_tolerance_weeks: tolerance_weeks,
        matching_mode: mode,
    };
    meta.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedContrast {
    /// Index into the unrestricted base.
    pub index: usize,
    pub trial_id: String,
    pub treatment: Treatment,
    pub comparator: Treatment,
    pub estimand_label: String,
    pub endpoint: String,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsedContrast {
    pub index: usize,
    pub trial_id: String,
    pub treatment: Treatment,
    pub comparator: Treatment,
    pub estimand_label: String,
    pub md: f64,
    pub se: f64,
    pub source: UncertaintySource,
}

/// A slice of the evidence base together with the fate of every input contrast.
#[derive(Clone, Debug, PartialEq)]
pub struct Restriction {
    pub meta_label: String,
    pub endpoint: String,
    pub slice: EvidenceBase,
    /// Indices into the unrestricted base, in base order.
    pub used: Vec<usize>,
    pub excluded: Vec<ExcludedContrast>,
    /// Non-blocking matching notes per used trial estimand, `"trial (label): note"`.
    pub warnings: Vec<(Attribute, String)>,
}

impl Restriction {
    pub fn provenance(&self, base: &EvidenceBase) -> Provenance {
        let used = self
            .used
            .iter()
            .map(|&i| {
                let c = &base.contrasts[i];
                UsedContrast {
                    index: i,
                    trial_id: c.trial_id.clone(),
                    treatment: c.treatment.clone(),
                    comparator: c.comparator.clone(),
                    estimand_label: c.estimand_label.clone(),
                    md: c.md,
                    se: c.se,
                    source: c.source,
                }
            })
            .collect();
        Provenance { used, excluded: self.excluded.clone() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub used: Vec<UsedContrast>,
    pub excluded: Vec<ExcludedContrast>,
}

/// Keeps the contrasts of `endpoint` whose trial estimand is compatible with `meta`.
///
/// A trial contributes under one estimand only: when several of its estimands match,
/// the one with the smallest label is used and the others are excluded.
pub fn restrict_evidence(base: &EvidenceBase, meta: &MetaEstimand, endpoint: &str) -> Restriction {
    let key = normalize_text(endpoint);
    let targeted = meta.endpoint(&key).is_some();

    let mut chosen: BTreeMap<&str, &str> = BTreeMap::new();
    let mut verdicts = BTreeMap::new();
    for c in base.contrasts.iter().filter(|c| c.endpoint == key) {
        if let Some(e) = base.estimand_for(c) {
            let v = verdicts
                .entry((c.trial_id.as_str(), c.estimand_label.as_str()))
                .or_insert_with(|| matches_meta(e, meta));
            if v.compatible && targeted {
                let slot = chosen.entry(c.trial_id.as_str()).or_insert(c.estimand_label.as_str());
                if c.estimand_label.as_str() < *slot {
                    *slot = c.estimand_label.as_str();
                }
            }
        }
    }

    let mut used = Vec::new();
    let mut excluded = Vec::new();
    let mut warned = BTreeSet::new();
    let mut warnings = Vec::new();
    for (i, c) in base.contrasts.iter().enumerate() {
        let exclude = |reasons: Vec<String>| ExcludedContrast {
            index: i,
            trial_id: c.trial_id.clone(),
            treatment: c.treatment.clone(),
            comparator: c.comparator.clone(),
            estimand_label: c.estimand_label.clone(),
            endpoint: c.endpoint.clone(),
            reasons,
        };
        if c.endpoint != key {
            excluded.push(exclude(vec![format!("endpoint {} not requested", c.endpoint)]));
            continue;
        }
        if !targeted {
            excluded.push(exclude(vec![format!("endpoint {key} not targeted by '{}'", meta.label)]));
            continue;
        }
        let Some(v) = verdicts.get(&(c.trial_id.as_str(), c.estimand_label.as_str())) else {
            excluded.push(exclude(vec![format!("no estimand '{}' declared", c.estimand_label)]));
            continue;
        };
        if !v.compatible {
            excluded.push(exclude(v.blocking().map(|r| r.message.clone()).collect()));
            continue;
        }
        let pick = chosen[c.trial_id.as_str()];
        if pick != c.estimand_label {
            excluded.push(exclude(vec![format!("trial already contributes under estimand '{pick}'")]));
            continue;
        }
        used.push(i);
        if warned.insert((c.trial_id.as_str(), c.estimand_label.as_str())) {
            for r in v.warnings() {
                warnings.push((r.attribute, format!("{} ({}): {}", c.trial_id, c.estimand_label, r.message)));
            }
        }
    }

    Restriction {
        meta_label: meta.label.clone(),
        endpoint: key,
        slice: base.with_contrasts(&used),
        used,
        excluded,
        warnings,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityVerdict {
    Feasible,
    FeasibleWithWarnings,
    Infeasible,
}

impl std::fmt::Display for FeasibilityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeasibilityVerdict::Feasible => "feasible",
            FeasibilityVerdict::FeasibleWithWarnings => "feasible_with_warnings",
            FeasibilityVerdict::Infeasible => "infeasible",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    NoEvidence,
    Disconnected,
    CovarianceUnidentifiable,
    CovarianceInvalid,
    TimepointSpread,
    ExtraEvent,
    PopulationDifference,
    TreatmentDifference,
    EndpointDifference,
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReason {
    pub code: ReasonCode,
    pub blocking: bool,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub meta_label: String,
    pub endpoint: String,
    pub verdict: FeasibilityVerdict,
    pub reasons: Vec<FeasibilityReason>,
    /// Absent when no trial reports the endpoint.
    pub alignment: Option<AlignmentReport>,
    pub used: Vec<usize>,
    pub excluded: Vec<ExcludedContrast>,
    /// Connected components of the restricted network, in node order.
    pub components: Vec<Vec<Treatment>>,
}

impl FeasibilityReport {
    pub fn has_reason(&self, code: ReasonCode) -> bool {
        self.reasons.iter().any(|r| r.code == code)
    }
}

pub fn feasibility_report(base: &EvidenceBase, meta: &MetaEstimand, endpoint: &str) -> FeasibilityReport {
    assess(base, meta, &restrict_evidence(base, meta, endpoint))
}

fn assess(base: &EvidenceBase, meta: &MetaEstimand, r: &Restriction) -> FeasibilityReport {
    let mut reasons = Vec::new();
    let mut block = |code, message: String| reasons.push(FeasibilityReason { code, blocking: true, message });
    let mut components = Vec::new();

    if r.used.is_empty() {
        block(ReasonCode::NoEvidence, format!("no contrast for {} matches '{}'", r.endpoint, meta.label));
    } else {
        match build_network(&r.slice.contrasts) {
            Err(e) => block(ReasonCode::NoEvidence, e.to_string()),
            Ok(net) => {
                components = net.connected_components();
                if components.len() > 1 {
                    let parts: Vec<String> = components
                        .iter()
                        .map(|c| format!("{{{}}}", c.iter().map(Treatment::as_str).collect::<Vec<_>>().join(", ")))
                        .collect();
                    block(ReasonCode::Disconnected, format!("disconnected: {}", parts.join(" | ")));
                }
            }
        }
        let mut by_trial: BTreeMap<&str, Vec<&ContrastEstimate>> = BTreeMap::new();
        for c in &r.slice.contrasts {
            by_trial.entry(c.trial_id.as_str()).or_default().push(c);
        }
        for (trial, mut contrasts) in by_trial {
            contrasts.sort_by(|a, b| (&a.treatment, &a.comparator).cmp(&(&b.treatment, &b.comparator)));
            let arms: Vec<_> = r.slice.arm_summaries.iter().filter(|a| a.trial_id == trial).collect();
            match trial_covariance(&contrasts, CovarianceInput::Arms(&arms)) {
                Ok(_) => {}
                Err(e @ NmaError::SharedArmVarianceUnidentifiable { .. }) => {
                    block(ReasonCode::CovarianceUnidentifiable, e.to_string())
                }
                Err(e) => block(ReasonCode::CovarianceInvalid, e.to_string()),
            }
        }
    }

    let timepoints: BTreeSet<u32> = r
        .slice
        .contrasts
        .iter()
        .filter_map(|c| r.slice.estimand_for(c))
        .map(|e| e.endpoint.timepoint_weeks)
        .collect();
    if timepoints.len() > 1 {
        let list: Vec<String> = timepoints.iter().map(u32::to_string).collect();
        reasons.push(FeasibilityReason {
            code: ReasonCode::TimepointSpread,
            blocking: false,
            message: format!("timepoints differ across trials: {} weeks", list.join(", ")),
        });
    }
    for (attribute, message) in &r.warnings {
        let code = match attribute {
            Attribute::IntercurrentEvents => ReasonCode::ExtraEvent,
            Attribute::Population => ReasonCode::PopulationDifference,
            Attribute::Treatments => ReasonCode::TreatmentDifference,
            Attribute::Endpoint if timepoints.len() > 1 => continue,
            _ => ReasonCode::EndpointDifference,
        };
        reasons.push(FeasibilityReason { code, blocking: false, message: message.clone() });
    }

    let verdict = if reasons.iter().any(|x| x.blocking) {
        FeasibilityVerdict::Infeasible
    } else if reasons.is_empty() {
        FeasibilityVerdict::Feasible
    } else {
        FeasibilityVerdict::FeasibleWithWarnings
    };
    FeasibilityReport {
        meta_label: meta.label.clone(),
        endpoint: r.endpoint.clone(),
        verdict,
        reasons,
        alignment: heterogeneity_matrix(base.estimands_for_endpoint(&r.endpoint), meta).ok(),
        used: r.used.clone(),
        excluded: r.excluded.clone(),
        components,
    }
}

/// One analysed slice with its feasibility report and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceAnalysis {
    pub result: NmaResult,
    pub feasibility: FeasibilityReport,
    pub provenance: Provenance,
}

/// Restrict, build, assemble and solve one (meta-estimand, endpoint) slice.
///
/// An infeasible slice is refused unless `force` is set. Forcing analyses the
/// component that holds the reference when the network is disconnected, and treats
/// multi-arm rows as independent when their shared-arm variance is unknown; each such
/// step leaves a warning on the result. Empty slices fail regardless.
pub fn run_analysis(
    base: &EvidenceBase,
    meta: &MetaEstimand,
    endpoint: &str,
    reference: Option<&Treatment>,
    level: f64,
    force: bool,
) -> Result<SliceAnalysis, PipelineError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(NmaError::InvalidLevel(level).into());
    }
    let restriction = restrict_evidence(base, meta, endpoint);
    let feasibility = assess(base, meta, &restriction);
    let infeasible = |report: &FeasibilityReport| PipelineError::Infeasible {
        meta_label: meta.label.clone(),
        endpoint: report.endpoint.clone(),
        reasons: report.reasons.iter().filter(|r| r.blocking).map(|r| r.message.clone()).collect(),
        disconnected: report.has_reason(ReasonCode::Disconnected),
    };
    if feasibility.verdict == FeasibilityVerdict::Infeasible
        && (!force || feasibility.has_reason(ReasonCode::NoEvidence))
    {
        return Err(infeasible(&feasibility));
    }

    let mut warnings = Vec::new();
    let mut used = restriction.used.clone();
    let mut net = build_network(&restriction.slice.contrasts)?;
    let reference = match reference {
        Some(r) => r.clone(),
        None => net.nodes.iter().min().cloned().ok_or(NmaError::Empty)?,
    };
    if net.node_index(&reference).is_none() {
        return Err(NmaError::UnknownTreatment(reference.to_string()).into());
    }
    if !net.is_connected() {
        let component: BTreeSet<Treatment> = net
            .connected_components()
            .into_iter()
            .find(|c| c.contains(&reference))
            .unwrap_or_default()
            .into_iter()
            .collect();
        let (keep, dropped): (Vec<usize>, Vec<usize>) = used.iter().partition(|&&i| {
            let c = &base.contrasts[i];
            component.contains(&c.treatment) && component.contains(&c.comparator)
        });
        let names: Vec<&str> = component.iter().map(Treatment::as_str).collect();
        warnings.push(format!(
            "forced: network disconnected; analysed the component of {reference} ({}), dropped {} contrasts",
            names.join(", "),
            dropped.len()
        ));
        used = keep;
    }
    let slice = base.with_contrasts(&used);
    net = build_network(&slice.contrasts)?;

    let (sys, fallback) = assemble_with(&net, &slice, &reference, force)?;
    for trial in fallback {
        warnings.push(format!("forced: {trial}: shared-arm variance unknown, rows treated as independent"));
    }
    let fit = solve_fixed_effects(&sys)?;
    let mut result = NmaResult::from_fit(&sys, &fit, &net.endpoint, &meta.label, level)?;
    result.warnings.extend(warnings);

    let mut provenance = restriction.provenance(base);
    if used.len() != restriction.used.len() {
        let kept: BTreeSet<usize> = used.iter().copied().collect();
        let (keep, drop): (Vec<_>, Vec<_>) = provenance.used.into_iter().partition(|u| kept.contains(&u.index));
        provenance.used = keep;
        for u in drop {
            provenance.excluded.push(ExcludedContrast {
                index: u.index,
                trial_id: u.trial_id,
                treatment: u.treatment,
                comparator: u.comparator,
                estimand_label: u.estimand_label,
                endpoint: net.endpoint.clone(),
                reasons: vec!["outside the analysed component".into()],
            });
        }
        provenance.excluded.sort_by_key(|e| e.index);
    }
    Ok(SliceAnalysis { result, feasibility, provenance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEstimate {
    pub label: String,
    pub md: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attenuation {
    pub label: String,
    /// `|md(label)| < |md(baseline)|`.
    pub attenuated: bool,
    /// `md(label) - md(baseline)`.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub treatment: Treatment,
    pub comparator: Treatment,
    pub estimates: Vec<StrategyEstimate>,
    pub attenuation: Vec<Attenuation>,
}

/// Side-by-side table over one endpoint; the first label is the baseline for attenuation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub endpoint: String,
    pub baseline: String,
    pub labels: Vec<String>,
    pub rows: Vec<StrategyRow>,
}

impl StrategyComparison {
    pub fn row(&self, treatment: &str, comparator: &str) -> Option<&StrategyRow> {
        self.rows
            .iter()
            .find(|r| r.treatment.as_str() == treatment && r.comparator.as_str() == comparator)
    }
}

pub fn compare_strategies(results: &[(String, NmaResult)], endpoint: &str) -> Result<StrategyComparison, PipelineError> {
    let [(baseline, first), rest @ ..] = results else {
        return Err(PipelineError::TooFewResults);
    };
    if rest.is_empty() {
        return Err(PipelineError::TooFewResults);
    }
    let set = |r: &NmaResult| r.treatments.iter().cloned().collect::<BTreeSet<_>>();
    for (label, r) in rest {
        if set(r) != set(first) {
            return Err(PipelineError::MismatchedTreatments(baseline.clone(), label.clone()));
        }
    }

    let mut rows = Vec::with_capacity(first.comparisons.len());
    for base_cmp in &first.comparisons {
        let (t, c) = (base_cmp.treatment.as_str(), base_cmp.comparator.as_str());
        let mut estimates = Vec::with_capacity(results.len());
        let mut attenuation = Vec::with_capacity(rest.len());
        for (label, r) in results {
            let cmp = r.get(t, c).ok_or_else(|| NmaError::UnknownTreatment(format!("{t} vs {c}")))?;
            estimates.push(StrategyEstimate {
                label: label.clone(),
                md: cmp.md,
                se: cmp.se,
                ci_lower: cmp.ci_lower,
                ci_upper: cmp.ci_upper,
            });
            if label != baseline {
                attenuation.push(Attenuation {
                    label: label.clone(),
                    attenuated: cmp.md.abs() < base_cmp.md.abs(),
                    difference: cmp.md - base_cmp.md,
                });
            }
        }
        rows.push(StrategyRow {
            treatment: base_cmp.treatment.clone(),
            comparator: base_cmp.comparator.clone(),
            estimates,
            attenuation,
        });
    }
    Ok(StrategyComparison {
        endpoint: normalize_text(endpoint),
        baseline: baseline.clone(),
        labels: results.iter().map(|(l, _)| l.clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimand::{Direction, Estimand};
    use crate::ingest::{ArmSummary, Trial};
    use IntercurrentEventStrategy::*;

    fn estimand(label: &str, weeks: u32, strategy: IntercurrentEventStrategy) -> Estimand {
        Estimand::new(
            label,
            "adults",
            ["A", "B", "C"].into_iter().map(Treatment::from),
            EndpointSpec::new("y", "u", weeks, Direction::LowerIsBetter).unwrap(),
            SummaryMeasure::MeanDifference,
            vec![IntercurrentEventHandling::new("dropout", strategy).unwrap()],
        )
        .unwrap()
    }

    fn contrast(trial: &str, label: &str, t: &str, c: &str, md: f64) -> ContrastEstimate {
        ContrastEstimate {
            trial_id: trial.into(),
            treatment: t.into(),
            comparator: c.into(),
            endpoint: "y".into(),
            estimand_label: label.into(),
            md,
            se: 0.5,
            source: UncertaintySource::ReportedSe,
            reported_ci: None,
        }
    }

    fn trial(arms: &[&str], estimands: Vec<Estimand>) -> Trial {
        Trial {
            arms: arms.iter().map(|a| Treatment::from(*a)).collect(),
            estimands: estimands.into_iter().map(|e| ((e.label.clone(), e.endpoint.key()), e)).collect(),
        }
    }

    fn base() -> EvidenceBase {
        let mut trials = BTreeMap::new();
        trials.insert("T1".to_string(), trial(&["A", "B"], vec![estimand("hyp", 40, Hypothetical), estimand("tp", 40, TreatmentPolicy)]));
        trials.insert("T2".to_string(), trial(&["B", "C"], vec![estimand("eff", 36, Hypothetical), estimand("reg", 36, TreatmentPolicy)]));
        EvidenceBase {
            trials,
            contrasts: vec![
                contrast("T1", "hyp", "A", "B", -1.0),
                contrast("T1", "tp", "A", "B", -0.8),
                contrast("T2", "eff", "B", "C", -0.5),
                contrast("T2", "reg", "B", "C", -0.4),
            ],
            arm_summaries: Vec::<ArmSummary>::new(),
        }
    }

    fn meta(strategy: IntercurrentEventStrategy) -> MetaEstimand {
        MetaEstimand::from_estimand(&estimand(strategy.token(), 40, strategy), 4, MatchingMode::Lenient)
    }

    #[test]
    fn restriction_partitions_contrasts() {
        let b = base();
        let r = restrict_evidence(&b, &meta(Hypothetical), "y");
        assert_eq!(r.used, vec![0, 2]);
        assert_eq!(r.excluded.iter().map(|e| e.index).collect::<Vec<_>>(), vec![1, 3]);
        assert!(r.excluded[0].reasons[0].contains("strategy mismatch"));
        let again = restrict_evidence(&r.slice, &meta(Hypothetical), "y");
        assert_eq!(again.slice.contrasts, r.slice.contrasts);
    }

    #[test]
    fn unmatched_endpoint_gives_empty_slice() {
        let r = restrict_evidence(&base(), &meta(Hypothetical), "z");
        assert!(r.used.is_empty());
        assert_eq!(r.excluded.len(), 4);
        let report = feasibility_report(&base(), &meta(Hypothetical), "z");
        assert_eq!(report.verdict, FeasibilityVerdict::Infeasible);
        assert!(report.has_reason(ReasonCode::NoEvidence));
    }

    #[test]
    fn timepoint_spread_is_a_warning() {
        let report = feasibility_report(&base(), &meta(TreatmentPolicy), "y");
        assert_eq!(report.verdict, FeasibilityVerdict::FeasibleWithWarnings);
        assert!(report.has_reason(ReasonCode::TimepointSpread));
    }

    #[test]
    fn disconnected_slice_is_refused_unless_forced() {
        let b = base().without_trials(&["T2"]);
        let mut b2 = b.clone();
        b2.trials.insert("T3".into(), trial(&["C", "D"], vec![estimand("hyp", 40, Hypothetical)]));
        b2.contrasts.push(contrast("T3", "hyp", "C", "D", 0.3));
        let err = run_analysis(&b2, &meta(Hypothetical), "y", None, 0.95, false).unwrap_err();
        assert!(matches!(err, PipelineError::Infeasible { disconnected: true, .. }));
        let forced = run_analysis(&b2, &meta(Hypothetical), "y", Some(&"A".into()), 0.95, true).unwrap();
        assert_eq!(forced.result.treatments.len(), 2);
        assert!(forced.result.warnings.iter().any(|w| w.contains("disconnected")));
        assert_eq!(forced.provenance.used.len() + forced.provenance.excluded.len(), b2.contrasts.len());
    }

    #[test]
    fn single_trial_identity() {
        let b = base().without_trials(&["T2"]);
        let s = run_analysis(&b, &meta(Hypothetical), "y", None, 0.95, false).unwrap();
        let c = s.result.get("A", "B").unwrap();
        assert!((c.md + 1.0).abs() < 1e-12);
        assert!((c.se - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strategy_comparison_flags() {
        let b = base();
        let h = run_analysis(&b, &meta(Hypothetical), "y", None, 0.95, false).unwrap().result;
        let t = run_analysis(&b, &meta(TreatmentPolicy), "y", None, 0.95, false).unwrap().result;
        let cmp = compare_strategies(&[("hyp".into(), h.clone()), ("tp".into(), t)], "y").unwrap();
        assert_eq!(cmp.rows.len(), 6);
        assert!(cmp.row("A", "C").unwrap().attenuation[0].attenuated);

        let same = compare_strategies(&[("a".into(), h.clone()), ("b".into(), h.clone())], "y").unwrap();
        assert!(same.rows.iter().all(|r| !r.attenuation[0].attenuated && r.attenuation[0].difference == 0.0));
        assert!(matches!(compare_strategies(&[("a".into(), h)], "y"), Err(PipelineError::TooFewResults)));
    }

    #[test]
    fn derived_meta_uses_common_events_and_modal_timepoint() {
        let m = derive_meta_estimand(&base(), "hypothetical", &[], 4, MatchingMode::Lenient).unwrap();
        assert_eq!(m.label, "hypothetical");
        assert_eq!(m.ie_handlings.len(), 1);
        assert_eq!(m.endpoints[0].timepoint_weeks, 40);
        assert!(derive_meta_estimand(&base(), "efficacy", &[], 4, MatchingMode::Lenient).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = AnalysisConfig {
            meta_estimands: vec![meta(Hypothetical)],
            endpoints: vec![],
            reference: None,
            ci_level: 0.95,
            force: false,
        };
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&AnalysisConfig { endpoints: vec!["y".into()], ..cfg }).unwrap();
        let back = AnalysisConfig::from_json(&json).unwrap();
        assert!(back.meta("HYPOTHETICAL").is_some());
    }
}
