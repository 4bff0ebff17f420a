//! ICH E9 (R1) estimands and the rules for aligning them.
//!
//! An [`Estimand`] describes the treatment effect targeted by one trial analysis:
//! population, treatments, endpoint, population-level summary measure and the
//! strategies used for intercurrent events. A [`MetaEstimand`] is the target of a
//! synthesis; [`matches_meta`] decides whether a trial-level estimand may be pooled
//! under it, and [`heterogeneity_matrix`] tabulates that decision across trials.
//!
//! Event names are canonicalized (lowercase, trimmed, internal whitespace collapsed)
//! when constructed, so every verdict depends on the canonical form only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Treatment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimandError {
    #[error("intercurrent event name is empty")]
    EmptyEventName,
    #[error("unknown intercurrent event strategy '{0}' (expected one of treatment_policy, hypothetical, composite, while_on_treatment, principal_stratum)")]
    UnknownStrategy(String),
    #[error("unknown summary measure '{0}'")]
    UnknownSummaryMeasure(String),
    #[error("unknown endpoint direction '{0}'")]
    UnknownDirection(String),
    #[error("endpoint name is empty")]
    EmptyEndpointName,
    #[error("endpoint '{0}' has empty units")]
    EmptyUnits(String),
    #[error("endpoint '{0}' has non-positive timepoint")]
    NonPositiveTimepoint(String),
    #[error("estimand '{label}' has {count} treatment(s); a comparative estimand needs at least 2")]
    TooFewTreatments { label: String, count: usize },
    #[error("estimand '{label}' declares intercurrent event '{event}' more than once")]
    DuplicateEvent { label: String, event: String },
    #[error("meta-estimand '{0}' targets no endpoint")]
    NoEndpoints(String),
    #[error("meta-estimand '{label}' targets endpoint '{endpoint}' more than once")]
    DuplicateEndpoint { label: String, endpoint: String },
    #[error("alignment report needs at least one estimand")]
    EmptyEstimandList,
}

/// Lowercase, trim, collapse internal whitespace.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntercurrentEventStrategy {
    TreatmentPolicy,
    Hypothetical,
    CompositeVariable,
    WhileOnTreatment,
    PrincipalStratum,
}

impl IntercurrentEventStrategy {
    pub const ALL: [IntercurrentEventStrategy; 5] = [
        IntercurrentEventStrategy::TreatmentPolicy,
        IntercurrentEventStrategy::Hypothetical,
        IntercurrentEventStrategy::CompositeVariable,
        IntercurrentEventStrategy::WhileOnTreatment,
        IntercurrentEventStrategy::PrincipalStratum,
    ];

    /// File-format token.
    pub fn token(self) -> &'static str {
        match self {
            IntercurrentEventStrategy::TreatmentPolicy => "treatment_policy",
            IntercurrentEventStrategy::Hypothetical => "hypothetical",
            IntercurrentEventStrategy::CompositeVariable => "composite",
            IntercurrentEventStrategy::WhileOnTreatment => "while_on_treatment",
            IntercurrentEventStrategy::PrincipalStratum => "principal_stratum",
        }
    }
}

impl fmt::Display for IntercurrentEventStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for IntercurrentEventStrategy {
    type Err = EstimandError;

    /// Accepts the five tokens case-insensitively; spaces and hyphens count as underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = normalize_text(s).replace([' ', '-'], "_");
        IntercurrentEventStrategy::ALL
            .into_iter()
            .find(|st| st.token() == token)
            .ok_or_else(|| EstimandError::UnknownStrategy(s.trim().to_string()))
    }
}

impl Serialize for IntercurrentEventStrategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for IntercurrentEventStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical intercurrent event name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EventName(String);

impl EventName {
    pub fn new(raw: &str) -> Result<Self, EstimandError> {
        let canonical = normalize_text(raw);
        if canonical.is_empty() {
            return Err(EstimandError::EmptyEventName);
        }
        Ok(EventName(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EventName {
    type Error = EstimandError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        EventName::new(&s)
    }
}

impl From<EventName> for String {
    fn from(e: EventName) -> String {
        e.0
    }
}

impl fmt::Display for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntercurrentEventHandling {
    pub event: EventName,
    pub strategy: IntercurrentEventStrategy,
}

impl IntercurrentEventHandling {
    pub fn new(event: &str, strategy: IntercurrentEventStrategy) -> Result<Self, EstimandError> {
        Ok(IntercurrentEventHandling { event: EventName::new(event)?, strategy })
    }

    /// Parses a semicolon-separated `event:strategy` list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, EstimandError> {
        s.split(';')
            .filter(|item| !item.trim().is_empty())
            .map(|item| {
                let (event, strategy) = item
                    .rsplit_once(':')
                    .ok_or_else(|| EstimandError::UnknownStrategy(item.trim().to_string()))?;
                IntercurrentEventHandling::new(event, strategy.parse()?)
            })
            .collect()
    }

    pub fn format_list(items: &[Self]) -> String {
        items
            .iter()
            .map(|h| format!("{}:{}", h.event, h.strategy))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LowerIsBetter,
    HigherIsBetter,
}

impl FromStr for Direction {
    type Err = EstimandError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_text(s).replace([' ', '-'], "_").as_str() {
            "lower_is_better" | "lower" => Ok(Direction::LowerIsBetter),
            "higher_is_better" | "higher" => Ok(Direction::HigherIsBetter),
            _ => Err(EstimandError::UnknownDirection(s.to_string())),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LowerIsBetter => "lower_is_better",
            Direction::HigherIsBetter => "higher_is_better",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub name: String,
    pub units: String,
    pub timepoint_weeks: u32,
    #[serde(default)]
    pub direction: Direction,
}

impl EndpointSpec {
    pub fn new(
        name: &str,
        units: &str,
        timepoint_weeks: u32,
        direction: Direction,
    ) -> Result<Self, EstimandError> {
        let spec = EndpointSpec {
            name: name.trim().to_string(),
            units: units.trim().to_string(),
            timepoint_weeks,
            direction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EstimandError> {
        if self.key().is_empty() {
            return Err(EstimandError::EmptyEndpointName);
        }
        if self.units.trim().is_empty() {
            return Err(EstimandError::EmptyUnits(self.name.clone()));
        }
        if self.timepoint_weeks == 0 {
            return Err(EstimandError::NonPositiveTimepoint(self.name.clone()));
        }
        Ok(())
    }

    /// Normalized name used to join endpoints across records.
    pub fn key(&self) -> String {
        normalize_text(&self.name)
    }

    fn same_measure(&self, other: &EndpointSpec) -> bool {
        self.key() == other.key() && self.units.trim() == other.units.trim()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMeasure {
    #[default]
    MeanDifference,
}

impl FromStr for SummaryMeasure {
    type Err = EstimandError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_text(s).replace([' ', '-'], "_").as_str() {
            "mean_difference" | "md" | "mean_difference_between_treatment_conditions" => {
                Ok(SummaryMeasure::MeanDifference)
            }
            _ => Err(EstimandError::UnknownSummaryMeasure(s.to_string())),
        }
    }
}

impl fmt::Display for SummaryMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("mean_difference")
    }
}

fn check_unique_events(label: &str, items: &[IntercurrentEventHandling]) -> Result<(), EstimandError> {
    let mut seen = BTreeSet::new();
    for h in items {
        if !seen.insert(&h.event) {
            return Err(EstimandError::DuplicateEvent {
                label: label.to_string(),
                event: h.event.to_string(),
            });
        }
    }
    Ok(())
}

/// One trial-level estimand.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimand {
    pub label: String,
    pub population: String,
    pub treatments: BTreeSet<Treatment>,
    pub endpoint: EndpointSpec,
    pub summary_measure: SummaryMeasure,
    pub ie_handlings: Vec<IntercurrentEventHandling>,
}

impl Estimand {
    pub fn new(
        label: &str,
        population: &str,
        treatments: impl IntoIterator<Item = Treatment>,
        endpoint: EndpointSpec,
        summary_measure: SummaryMeasure,
        ie_handlings: Vec<IntercurrentEventHandling>,
    ) -> Result<Self, EstimandError> {
        let estimand = Estimand {
            label: label.trim().to_string(),
            population: population.trim().to_string(),
            treatments: treatments.into_iter().collect(),
            endpoint,
            summary_measure,
            ie_handlings,
        };
        estimand.validate()?;
        Ok(estimand)
    }

    pub fn validate(&self) -> Result<(), EstimandError> {
        self.endpoint.validate()?;
        if self.treatments.len() < 2 {
            return Err(EstimandError::TooFewTreatments {
                label: self.label.clone(),
                count: self.treatments.len(),
            });
        }
        check_unique_events(&self.label, &self.ie_handlings)
    }

    /// Declared strategy for an event, `None` when the event is not declared.
    pub fn strategy_of(&self, event_name: &str) -> Result<Option<IntercurrentEventStrategy>, EstimandError> {
        let event = EventName::new(event_name)?;
        Ok(self.ie_handlings.iter().find(|h| h.event == event).map(|h| h.strategy))
    }

    pub fn events(&self) -> BTreeMap<&EventName, IntercurrentEventStrategy> {
        self.ie_handlings.iter().map(|h| (&h.event, h.strategy)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    Strict,
    #[default]
    Lenient,
}

impl FromStr for MatchingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_text(s).as_str() {
            "strict" => Ok(MatchingMode::Strict),
            "lenient" => Ok(MatchingMode::Lenient),
            other => Err(format!("unknown matching mode '{other}'")),
        }
    }
}

/// Default allowed endpoint timepoint difference, in weeks.
pub const DEFAULT_TOLERANCE_WEEKS: u32 = 4;

fn default_tolerance() -> u32 {
    DEFAULT_TOLERANCE_WEEKS
}

/// Target estimand of a synthesis.
///
/// Unlike a trial-level [`Estimand`] it may target several endpoints; matching
/// looks up the target endpoint with the same normalized name as the trial's.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaEstimand {
    pub label: String,
    #[serde(default)]
    pub population: String,
    #[serde(default)]
    pub treatments: BTreeSet<Treatment>,
    pub endpoints: Vec<EndpointSpec>,
    #[serde(default)]
    pub summary_measure: SummaryMeasure,
    pub ie_handlings: Vec<IntercurrentEventHandling>,
    #[serde(default = "default_tolerance")]
    pub endpoint_timepoint_tolerance_weeks: u32,
    #[serde(default)]
    pub matching_mode: MatchingMode,
}

impl MetaEstimand {
    /// Target mirroring a trial-level estimand.
    pub fn from_estimand(estimand: &Estimand, tolerance_weeks: u32, mode: MatchingMode) -> Self {
        MetaEstimand {
            label: estimand.label.clone(),
            population: estimand.population.clone(),
            treatments: estimand.treatments.clone(),
            endpoints: vec![estimand.endpoint.clone()],
            summary_measure: estimand.summary_measure,
            ie_handlings: estimand.ie_handlings.clone(),
            endpoint_timepoint_tolerance_weeks: tolerance_weeks,
            matching_mode: mode,
        }
    }

    pub fn validate(&self) -> Result<(), EstimandError> {
        if self.endpoints.is_empty() {
            return Err(EstimandError::NoEndpoints(self.label.clone()));
        }
        let mut keys = BTreeSet::new();
        for ep in &self.endpoints {
            ep.validate()?;
            if !keys.insert(ep.key()) {
                return Err(EstimandError::DuplicateEndpoint {
                    label: self.label.clone(),
                    endpoint: ep.name.clone(),
                });
            }
        }
        check_unique_events(&self.label, &self.ie_handlings)
    }

    pub fn endpoint(&self, name: &str) -> Option<&EndpointSpec> {
        let key = normalize_text(name);
        self.endpoints.iter().find(|ep| ep.key() == key)
    }

    pub fn strategies(&self) -> BTreeSet<IntercurrentEventStrategy> {
        self.ie_handlings.iter().map(|h| h.strategy).collect()
    }

    pub fn with_mode(mut self, mode: MatchingMode) -> Self {
        self.matching_mode = mode;
        self
    }

    pub fn with_tolerance(mut self, weeks: u32) -> Self {
        self.endpoint_timepoint_tolerance_weeks = weeks;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeVerdict {
    Identical,
    Overlapping,
    Disjoint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventDifference {
    OnlyInA { event: EventName, strategy: IntercurrentEventStrategy },
    OnlyInB { event: EventName, strategy: IntercurrentEventStrategy },
    StrategyMismatch { event: EventName, a: IntercurrentEventStrategy, b: IntercurrentEventStrategy },
}

impl EventDifference {
    fn swapped(&self) -> Self {
        match self.clone() {
            EventDifference::OnlyInA { event, strategy } => EventDifference::OnlyInB { event, strategy },
            EventDifference::OnlyInB { event, strategy } => EventDifference::OnlyInA { event, strategy },
            EventDifference::StrategyMismatch { event, a, b } => {
                EventDifference::StrategyMismatch { event, a: b, b: a }
            }
        }
    }
}

/// Attribute-by-attribute comparison of two trial-level estimands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDiff {
    pub population: AttributeVerdict,
    pub treatments: AttributeVerdict,
    pub endpoint: AttributeVerdict,
    /// `a.timepoint - b.timepoint`; zero when the endpoints are different measures.
    pub timepoint_difference_weeks: i64,
    pub summary_measure: AttributeVerdict,
    pub intercurrent_events: AttributeVerdict,
    pub event_differences: Vec<EventDifference>,
}

impl AttributeDiff {
    pub fn is_identical(&self) -> bool {
        [
            self.population,
            self.treatments,
            self.endpoint,
            self.summary_measure,
            self.intercurrent_events,
        ]
        .iter()
        .all(|v| *v == AttributeVerdict::Identical)
            && self.event_differences.is_empty()
    }

    /// The same diff seen from the other side.
    pub fn swapped(&self) -> Self {
        AttributeDiff {
            timepoint_difference_weeks: -self.timepoint_difference_weeks,
            event_differences: self.event_differences.iter().map(EventDifference::swapped).collect(),
            ..self.clone()
        }
    }
}

fn text_verdict(a: &str, b: &str) -> AttributeVerdict {
    let (na, nb) = (normalize_text(a), normalize_text(b));
    if na == nb {
        return AttributeVerdict::Identical;
    }
    let ta: BTreeSet<&str> = na.split(' ').filter(|t| !t.is_empty()).collect();
    let tb: BTreeSet<&str> = nb.split(' ').filter(|t| !t.is_empty()).collect();
    if ta.intersection(&tb).next().is_some() {
        AttributeVerdict::Overlapping
    } else {
        AttributeVerdict::Disjoint
    }
}

fn set_verdict<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> AttributeVerdict {
    if a == b {
        AttributeVerdict::Identical
    } else if a.intersection(b).next().is_some() {
        AttributeVerdict::Overlapping
    } else {
        AttributeVerdict::Disjoint
    }
}

pub fn compare_estimands(a: &Estimand, b: &Estimand) -> AttributeDiff {
    let (endpoint, timepoint_difference_weeks) = if a.endpoint.same_measure(&b.endpoint) {
        let delta = i64::from(a.endpoint.timepoint_weeks) - i64::from(b.endpoint.timepoint_weeks);
        let verdict = if delta == 0 { AttributeVerdict::Identical } else { AttributeVerdict::Overlapping };
        (verdict, delta)
    } else {
        (AttributeVerdict::Disjoint, 0)
    };

    let ea = a.events();
    let eb = b.events();
    let mut event_differences = Vec::new();
    let mut shared_same = 0usize;
    let all: BTreeSet<&EventName> = ea.keys().chain(eb.keys()).copied().collect();
    for event in all {
        match (ea.get(event), eb.get(event)) {
            (Some(&sa), Some(&sb)) if sa == sb => shared_same += 1,
            (Some(&sa), Some(&sb)) => event_differences.push(EventDifference::StrategyMismatch {
                event: event.clone(),
                a: sa,
                b: sb,
            }),
            (Some(&strategy), None) => {
                event_differences.push(EventDifference::OnlyInA { event: event.clone(), strategy })
            }
            (None, Some(&strategy)) => {
                event_differences.push(EventDifference::OnlyInB { event: event.clone(), strategy })
            }
            (None, None) => unreachable!(),
        }
    }
    let intercurrent_events = if event_differences.is_empty() {
        AttributeVerdict::Identical
    } else if shared_same > 0 {
        AttributeVerdict::Overlapping
    } else {
        AttributeVerdict::Disjoint
    };

    AttributeDiff {
        population: text_verdict(&a.population, &b.population),
        treatments: set_verdict(&a.treatments, &b.treatments),
        endpoint,
        timepoint_difference_weeks,
        summary_measure: if a.summary_measure == b.summary_measure {
            AttributeVerdict::Identical
        } else {
            AttributeVerdict::Disjoint
        },
        intercurrent_events,
        event_differences,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Population,
    Treatments,
    Endpoint,
    SummaryMeasure,
    IntercurrentEvents,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Population => "population",
            Attribute::Treatments => "treatments",
            Attribute::Endpoint => "endpoint",
            Attribute::SummaryMeasure => "summary_measure",
            Attribute::IntercurrentEvents => "intercurrent_events",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVerdict {
    #[default]
    Match,
    Warning,
    Mismatch,
}

impl fmt::Display for CellVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellVerdict::Match => "match",
            CellVerdict::Warning => "warn",
            CellVerdict::Mismatch => "MISMATCH",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReason {
    pub attribute: Attribute,
    pub blocking: bool,
    pub message: String,
}

impl fmt::Display for MatchReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.blocking { "blocking" } else { "warning" };
        write!(f, "[{tag}] {}", self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub compatible: bool,
    pub reasons: Vec<MatchReason>,
    pub cells: BTreeMap<Attribute, CellVerdict>,
}

impl MatchVerdict {
    pub fn warnings(&self) -> impl Iterator<Item = &MatchReason> {
        self.reasons.iter().filter(|r| !r.blocking)
    }

    pub fn blocking(&self) -> impl Iterator<Item = &MatchReason> {
        self.reasons.iter().filter(|r| r.blocking)
    }
}

struct VerdictBuilder {
    reasons: Vec<MatchReason>,
    cells: BTreeMap<Attribute, CellVerdict>,
}

impl VerdictBuilder {
    fn new() -> Self {
        let cells = [
            Attribute::Population,
            Attribute::Treatments,
            Attribute::Endpoint,
            Attribute::SummaryMeasure,
            Attribute::IntercurrentEvents,
        ]
        .into_iter()
        .map(|a| (a, CellVerdict::Match))
        .collect();
        VerdictBuilder { reasons: Vec::new(), cells }
    }

    fn push(&mut self, attribute: Attribute, blocking: bool, message: String) {
        let level = if blocking { CellVerdict::Mismatch } else { CellVerdict::Warning };
        let cell = self.cells.entry(attribute).or_default();
        *cell = (*cell).max(level);
        self.reasons.push(MatchReason { attribute, blocking, message });
    }

    fn finish(self) -> MatchVerdict {
        let compatible = !self.reasons.iter().any(|r| r.blocking);
        MatchVerdict { compatible, reasons: self.reasons, cells: self.cells }
    }
}

/// Decides whether a trial-level estimand can be pooled under `meta`.
///
/// Blocking: different summary measure; endpoint not targeted, different units, or
/// timepoint outside tolerance; a target event undeclared or handled with another
/// strategy; in strict mode, an extra trial event whose strategy the target does not
/// use. Everything else that differs (population, treatments, extra events in lenient
/// mode, a timepoint shift inside tolerance) is reported as a warning.
pub fn matches_meta(trial: &Estimand, meta: &MetaEstimand) -> MatchVerdict {
    let mut out = VerdictBuilder::new();

    if trial.summary_measure != meta.summary_measure {
        out.push(
            Attribute::SummaryMeasure,
            true,
            format!("summary measure {} vs target {}", trial.summary_measure, meta.summary_measure),
        );
    }

    match meta.endpoint(&trial.endpoint.name) {
        None => out.push(
            Attribute::Endpoint,
            true,
            format!("endpoint '{}' not targeted", trial.endpoint.name),
        ),
        Some(target) => {
            if trial.endpoint.units.trim() != target.units.trim() {
                out.push(
                    Attribute::Endpoint,
                    true,
                    format!("units '{}' vs target '{}'", trial.endpoint.units, target.units),
                );
            }
            let (t, m) = (trial.endpoint.timepoint_weeks, target.timepoint_weeks);
            let tol = meta.endpoint_timepoint_tolerance_weeks;
            if t.abs_diff(m) > tol {
                out.push(
                    Attribute::Endpoint,
                    true,
                    format!("timepoint {t} vs {m} exceeds tolerance {tol}"),
                );
            } else if t != m {
                out.push(
                    Attribute::Endpoint,
                    false,
                    format!("timepoint {t} vs {m} within tolerance {tol}"),
                );
            }
        }
    }

    let trial_events = trial.events();
    for target in &meta.ie_handlings {
        match trial_events.get(&target.event) {
            None => out.push(
                Attribute::IntercurrentEvents,
                true,
                format!("event not declared: {}", target.event),
            ),
            Some(&s) if s != target.strategy => out.push(
                Attribute::IntercurrentEvents,
                true,
                format!("strategy mismatch on {}: {:?} vs target {:?}", target.event, s, target.strategy),
            ),
            Some(_) => {}
        }
    }

    let meta_strategies = meta.strategies();
    for h in &trial.ie_handlings {
        if meta.ie_handlings.iter().any(|m| m.event == h.event) {
            continue;
        }
        let blocking =
            meta.matching_mode == MatchingMode::Strict && !meta_strategies.contains(&h.strategy);
        let suffix = if blocking { " not permitted in strict mode" } else { "" };
        out.push(
            Attribute::IntercurrentEvents,
            blocking,
            format!("extra event: {} ({}){suffix}", h.event, h.strategy),
        );
    }

    if !trial.population.trim().is_empty()
        && !meta.population.trim().is_empty()
        && normalize_text(&trial.population) != normalize_text(&meta.population)
    {
        out.push(
            Attribute::Population,
            false,
            format!("population differs from target: '{}'", trial.population),
        );
    }

    if !meta.treatments.is_empty() {
        let outside: Vec<&str> = trial
            .treatments
            .iter()
            .filter(|t| !meta.treatments.contains(*t))
            .map(Treatment::as_str)
            .collect();
        if !outside.is_empty() {
            out.push(
                Attribute::Treatments,
                false,
                format!("treatments outside target: {}", outside.join(", ")),
            );
        }
    }

    out.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub trial_id: String,
    pub estimand_label: String,
    pub endpoint: String,
    pub timepoint_weeks: u32,
    pub compatible: bool,
    pub cells: BTreeMap<Attribute, CellVerdict>,
    pub reasons: Vec<MatchReason>,
}

/// Trial estimands tabulated against one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub meta_label: String,
    pub rows: Vec<AlignmentRow>,
    /// True when every row is compatible.
    pub feasible: bool,
}

impl AlignmentReport {
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "alignment against '{}'", self.meta_label);
        let _ = writeln!(
            s,
            "{:<16} {:<20} {:<12} {:>4}  {:<8} {:<8} {:<8} {:<8} {:<8}  verdict",
            "trial", "estimand", "endpoint", "wk", "pop", "trt", "endpt", "summary", "events"
        );
        for row in &self.rows {
            let c = |a| row.cells.get(&a).copied().unwrap_or_default().to_string();
            let _ = writeln!(
                s,
                "{:<16} {:<20} {:<12} {:>4}  {:<8} {:<8} {:<8} {:<8} {:<8}  {}",
                row.trial_id,
                row.estimand_label,
                row.endpoint,
                row.timepoint_weeks,
                c(Attribute::Population),
                c(Attribute::Treatments),
                c(Attribute::Endpoint),
                c(Attribute::SummaryMeasure),
                c(Attribute::IntercurrentEvents),
                if row.compatible { "compatible" } else { "incompatible" }
            );
        }
        let _ = writeln!(s, "all compatible: {}", self.feasible);
        s
    }
}

pub fn heterogeneity_matrix<'a>(
    estimands: impl IntoIterator<Item = (&'a str, &'a Estimand)>,
    meta: &MetaEstimand,
) -> Result<AlignmentReport, EstimandError> {
    let rows: Vec<AlignmentRow> = estimands
        .into_iter()
        .map(|(trial_id, e)| {
            let verdict = matches_meta(e, meta);
            AlignmentRow {
                trial_id: trial_id.to_string(),
                estimand_label: e.label.clone(),
                endpoint: e.endpoint.name.clone(),
                timepoint_weeks: e.endpoint.timepoint_weeks,
                compatible: verdict.compatible,
                cells: verdict.cells,
                reasons: verdict.reasons,
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(EstimandError::EmptyEstimandList);
    }
    let feasible = rows.iter().all(|r| r.compatible);
    Ok(AlignmentReport { meta_label: meta.label.clone(), rows, feasible })
}
