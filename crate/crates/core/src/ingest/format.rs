//! Evidence file formats.
//!
//! Tabular files are UTF-8 CSV split into sections by tag lines (`#trials`,
//! `#estimands`, `#contrasts`, `#arms`); each section starts with a header row and
//! columns are matched by name. Structured files are JSON objects with one array per
//! section and the same field names. Lists inside a CSV cell are semicolon-separated;
//! intercurrent events are written `event:strategy`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ArmSummary, ConfidenceInterval, ContrastEstimate, EvidenceBase, IngestError, Trial,
    UncertaintySource, DEFAULT_CI_LEVEL,
};
use crate::estimand::{normalize_text, Direction, EndpointSpec, Estimand, IntercurrentEventHandling};
use crate::Treatment;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            _ => Err(IngestError::UnknownFormat(path.display().to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub arms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: String,
    pub strategy: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimandRecord {
    pub trial_id: String,
    pub label: String,
    #[serde(default)]
    pub population: String,
    pub endpoint_name: String,
    pub units: String,
    pub timepoint_weeks: u32,
    pub summary_measure: String,
    #[serde(default)]
    pub ie_events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastRecord {
    pub trial_id: String,
    pub estimand_label: String,
    pub endpoint_name: String,
    pub treatment: String,
    pub comparator: String,
    #[serde(default)]
    pub md: Option<f64>,
    #[serde(default)]
    pub se: Option<f64>,
    #[serde(default)]
    pub ci_lower: Option<f64>,
    #[serde(default)]
    pub ci_upper: Option<f64>,
    #[serde(default)]
    pub ci_level: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub trial_id: String,
    pub estimand_label: String,
    pub endpoint_name: String,
    pub treatment: String,
    pub n: u32,
    pub mean_change: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    #[serde(default)]
    pub ci_level: Option<f64>,
}

/// Raw records of an evidence file, before derivation and validation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceFile {
    #[serde(default)]
    pub trials: Vec<TrialRecord>,
    #[serde(default)]
    pub estimands: Vec<EstimandRecord>,
    #[serde(default)]
    pub contrasts: Vec<ContrastRecord>,
    #[serde(default)]
    pub arms: Vec<ArmRecord>,
    /// Record locators (`line 12`, `contrasts[3]`), parallel to the vectors above.
    #[serde(skip)]
    locators: Locators,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Locators {
    trials: Vec<String>,
    estimands: Vec<String>,
    contrasts: Vec<String>,
    arms: Vec<String>,
}

impl Locators {
    fn indexed(file: &EvidenceFile) -> Self {
        let idx = |name: &str, n: usize| (0..n).map(|i| format!("{name}[{i}]")).collect();
        Locators {
            trials: idx("trials", file.trials.len()),
            estimands: idx("estimands", file.estimands.len()),
            contrasts: idx("contrasts", file.contrasts.len()),
            arms: idx("arms", file.arms.len()),
        }
    }
}

// CSV row shapes: list-valued fields are plain strings in a cell.
#[derive(Serialize, Deserialize)]
struct CsvTrial {
    trial_id: String,
    arms: String,
}

#[derive(Serialize, Deserialize)]
struct CsvEstimand {
    trial_id: String,
    label: String,
    #[serde(default)]
    population: String,
    endpoint_name: String,
    units: String,
    timepoint_weeks: u32,
    summary_measure: String,
    #[serde(default)]
    ie_events: String,
    #[serde(default)]
    direction: Option<String>,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect()
}

fn parse_events(s: &str, locator: &str) -> Result<Vec<EventRecord>, IngestError> {
    split_list(s)
        .into_iter()
        .map(|item| {
            let (event, strategy) = item.rsplit_once(':').ok_or_else(|| IngestError::Schema {
                locator: locator.to_string(),
                message: format!("ie_events entry '{item}' is not of the form event:strategy"),
            })?;
            Ok(EventRecord { event: event.trim().to_string(), strategy: strategy.trim().to_string() })
        })
        .collect()
}

const SECTIONS: [&str; 4] = ["trials", "estimands", "contrasts", "arms"];

struct Section {
    name: String,
    /// (1-based file line number, text)
    lines: Vec<(usize, String)>,
}

fn read_section<T: DeserializeOwned>(section: &Section) -> Result<Vec<(String, T)>, IngestError> {
    let text: String = section.lines.iter().map(|(_, l)| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().cloned().map_err(|e| IngestError::Schema {
        locator: format!("line {}", section.lines[0].0),
        message: format!("#{} header: {e}", section.name),
    })?;
    let mut out = Vec::new();
    for record in reader.records() {
        let file_line = |pos: Option<&csv::Position>| {
            pos.and_then(|p| section.lines.get(p.line() as usize - 1)).map(|(n, _)| *n).unwrap_or(0)
        };
        let record = record.map_err(|e| IngestError::Schema {
            locator: format!("line {}", file_line(e.position())),
            message: format!("#{}: {e}", section.name),
        })?;
        let locator = format!("line {}", file_line(record.position()));
        let row: T = record.deserialize(Some(&headers)).map_err(|e| IngestError::Schema {
            locator: locator.clone(),
            message: format!("#{}: {}", section.name, describe_csv_error(&e, &headers)),
        })?;
        out.push((locator, row));
    }
    Ok(out)
}

fn describe_csv_error(e: &csv::Error, headers: &csv::StringRecord) -> String {
    if let csv::ErrorKind::Deserialize { err, .. } = e.kind() {
        let field = err.field().and_then(|i| headers.get(i as usize));
        match field {
            Some(name) => format!("field '{name}': {}", err.kind()),
            None => err.kind().to_string(),
        }
    } else {
        e.to_string()
    }
}

impl EvidenceFile {
    pub fn parse(text: &str, format: Format) -> Result<Self, IngestError> {
        match format {
            Format::Csv => Self::parse_csv(text),
            Format::Json => Self::parse_json(text),
        }
    }

    fn parse_json(text: &str) -> Result<Self, IngestError> {
        let mut file: EvidenceFile = serde_json::from_str(text).map_err(|e| IngestError::Schema {
            locator: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        file.locators = Locators::indexed(&file);
        Ok(file)
    }

    fn parse_csv(text: &str) -> Result<Self, IngestError> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_start_matches('\u{feff}').trim();
            if line.is_empty() {
                continue;
            }
            if let Some(tag) = line.strip_prefix('#') {
                let name = tag.trim().trim_end_matches(',').trim().to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(IngestError::Schema {
                        locator: format!("line {line_no}"),
                        message: format!("unknown section tag '#{}'", tag.trim()),
                    });
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(IngestError::Schema {
                        locator: format!("line {line_no}"),
                        message: format!("section #{name} appears twice"),
                    });
                }
                sections.push(Section { name, lines: Vec::new() });
                continue;
            }
            match sections.last_mut() {
                Some(section) => section.lines.push((line_no, raw.to_string())),
                None => {
                    return Err(IngestError::Schema {
                        locator: format!("line {line_no}"),
                        message: "data before the first section tag".into(),
                    })
                }
            }
        }

        let mut file = EvidenceFile::default();
        for section in sections.iter().filter(|s| !s.lines.is_empty()) {
            match section.name.as_str() {
                "trials" => {
                    for (loc, row) in read_section::<CsvTrial>(section)? {
                        file.trials.push(TrialRecord { trial_id: row.trial_id, arms: split_list(&row.arms) });
                        file.locators.trials.push(loc);
                    }
                }
                "estimands" => {
                    for (loc, row) in read_section::<CsvEstimand>(section)? {
                        let ie_events = parse_events(&row.ie_events, &loc)?;
                        file.estimands.push(EstimandRecord {
                            trial_id: row.trial_id,
                            label: row.label,
                            population: row.population,
                            endpoint_name: row.endpoint_name,
                            units: row.units,
                            timepoint_weeks: row.timepoint_weeks,
                            summary_measure: row.summary_measure,
                            ie_events,
                            direction: row.direction.filter(|d| !d.trim().is_empty()),
                        });
                        file.locators.estimands.push(loc);
                    }
                }
                "contrasts" => {
                    for (loc, row) in read_section::<ContrastRecord>(section)? {
                        file.contrasts.push(row);
                        file.locators.contrasts.push(loc);
                    }
                }
                "arms" => {
                    for (loc, row) in read_section::<ArmRecord>(section)? {
                        file.arms.push(row);
                        file.locators.arms.push(loc);
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(file)
    }

    fn locator<'a>(list: &'a [String], i: usize, fallback: &'a str) -> String {
        list.get(i).cloned().unwrap_or_else(|| format!("{fallback}[{i}]"))
    }

    /// Derives uncertainty, checks every invariant and returns the evidence base.
    pub fn build(&self) -> Result<EvidenceBase, IngestError> {
        let loc = &self.locators;
        let mut trials: BTreeMap<String, Trial> = BTreeMap::new();
        for (i, r) in self.trials.iter().enumerate() {
            let at = Self::locator(&loc.trials, i, "trials");
            let id = r.trial_id.trim().to_string();
            if id.is_empty() {
                return Err(IngestError::invalid(&at, "empty trial_id"));
            }
            let arms: BTreeSet<Treatment> = r.arms.iter().map(Treatment::new).collect();
            if arms.len() != r.arms.len() || arms.iter().any(|a| a.as_str().is_empty()) {
                return Err(IngestError::invalid(&at, format!("trial {id}: arm list has empty or repeated entries")));
            }
            if arms.len() < 2 {
                return Err(IngestError::invalid(&at, format!("trial {id} needs at least two arms")));
            }
            if trials.insert(id.clone(), Trial { arms, estimands: BTreeMap::new() }).is_some() {
                return Err(IngestError::invalid(&at, format!("trial {id} declared twice")));
            }
        }

        for (i, r) in self.estimands.iter().enumerate() {
            let at = Self::locator(&loc.estimands, i, "estimands");
            let wrap = |source| IngestError::Estimand { locator: at.clone(), source };
            let trial = trials
                .get_mut(r.trial_id.trim())
                .ok_or_else(|| IngestError::invalid(&at, format!("unknown trial '{}'", r.trial_id)))?;
            let direction = match &r.direction {
                Some(d) => d.parse::<Direction>().map_err(wrap)?,
                None => Direction::default(),
            };
            let endpoint = EndpointSpec::new(&r.endpoint_name, &r.units, r.timepoint_weeks, direction).map_err(wrap)?;
            let handlings = r
                .ie_events
                .iter()
                .map(|e| IntercurrentEventHandling::new(&e.event, e.strategy.parse().map_err(wrap)?).map_err(wrap))
                .collect::<Result<Vec<_>, _>>()?;
            let estimand = Estimand::new(
                &r.label,
                &r.population,
                trial.arms.iter().cloned(),
                endpoint,
                r.summary_measure.parse().map_err(wrap)?,
                handlings,
            )
            .map_err(wrap)?;
            let key = (estimand.label.clone(), estimand.endpoint.key());
            if trial.estimands.insert(key, estimand).is_some() {
                return Err(IngestError::invalid(
                    &at,
                    format!("estimand '{}' for endpoint '{}' declared twice in trial {}", r.label.trim(), r.endpoint_name.trim(), r.trial_id.trim()),
                ));
            }
        }

        let check_slice = |at: &str, trial_id: &str, label: &str, endpoint: &str, treatments: &[&Treatment]| {
            let trial = trials
                .get(trial_id)
                .ok_or_else(|| IngestError::invalid(at, format!("unknown trial '{trial_id}'")))?;
            for t in treatments {
                if !trial.arms.contains(*t) {
                    return Err(IngestError::invalid(at, format!("treatment '{t}' is not an arm of trial {trial_id}")));
                }
            }
            if !trial.estimands.contains_key(&(label.to_string(), endpoint.to_string())) {
                return Err(IngestError::invalid(
                    at,
                    format!("trial {trial_id} has no estimand '{label}' for endpoint '{endpoint}'"),
                ));
            }
            Ok(())
        };

        let mut arm_summaries: Vec<ArmSummary> = Vec::new();
        for (i, r) in self.arms.iter().enumerate() {
            let at = Self::locator(&loc.arms, i, "arms");
            let arm = ArmSummary {
                trial_id: r.trial_id.trim().to_string(),
                treatment: Treatment::new(&r.treatment),
                n_randomized: r.n,
                endpoint: normalize_text(&r.endpoint_name),
                estimand_label: r.estimand_label.trim().to_string(),
                mean_change: r.mean_change,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                ci_level: r.ci_level.unwrap_or(DEFAULT_CI_LEVEL),
            };
            check_slice(&at, &arm.trial_id, &arm.estimand_label, &arm.endpoint, &[&arm.treatment])?;
            if arm.n_randomized == 0 {
                return Err(IngestError::invalid(&at, "n must be at least 1"));
            }
            if !arm.mean_change.is_finite() {
                return Err(IngestError::invalid(&at, "mean_change must be finite"));
            }
            arm.se().map_err(|e| IngestError::invalid(&at, e.to_string()))?;
            let dup = arm_summaries.iter().any(|a| {
                a.trial_id == arm.trial_id
                    && a.treatment == arm.treatment
                    && a.endpoint == arm.endpoint
                    && a.estimand_label == arm.estimand_label
            });
            if dup {
                return Err(IngestError::invalid(&at, format!("duplicate arm summary for {}", arm.treatment)));
            }
            arm_summaries.push(arm);
        }

        let mut contrasts: Vec<ContrastEstimate> = Vec::new();
        let mut keys = BTreeSet::new();
        for (i, r) in self.contrasts.iter().enumerate() {
            let at = Self::locator(&loc.contrasts, i, "contrasts");
            let trial_id = r.trial_id.trim().to_string();
            let label = r.estimand_label.trim().to_string();
            let endpoint = normalize_text(&r.endpoint_name);
            let treatment = Treatment::new(&r.treatment);
            let comparator = Treatment::new(&r.comparator);
            check_slice(&at, &trial_id, &label, &endpoint, &[&treatment, &comparator])?;
            if treatment == comparator {
                return Err(IngestError::invalid(&at, "treatment equals comparator"));
            }
            let find_arm = |t: &Treatment| {
                arm_summaries.iter().find(|a| {
                    a.trial_id == trial_id && a.estimand_label == label && a.endpoint == endpoint && &a.treatment == t
                })
            };
            let from_arms = match (find_arm(&treatment), find_arm(&comparator)) {
                (Some(a), Some(b)) => Some(super::contrast_from_arms(a, b)?),
                _ => None,
            };

            let reported_ci = match (r.ci_lower, r.ci_upper) {
                (Some(lower), Some(upper)) => {
                    let ci = ConfidenceInterval { lower, upper, level: r.ci_level.unwrap_or(DEFAULT_CI_LEVEL) };
                    ci.se().map_err(|e| IngestError::invalid(&at, e.to_string()))?;
                    Some(ci)
                }
                (None, None) => None,
                _ => return Err(IngestError::invalid(&at, "ci_lower and ci_upper must be given together")),
            };
            let (se, source) = if let Some(se) = r.se {
                if !(se.is_finite() && se > 0.0) {
                    return Err(IngestError::invalid(&at, format!("se must be finite and positive (got {se})")));
                }
                (se, UncertaintySource::ReportedSe)
            } else if let Some(ci) = &reported_ci {
                (ci.se()?, UncertaintySource::FromCi)
            } else if let Some(c) = &from_arms {
                (c.se, UncertaintySource::FromArms)
            } else {
                return Err(IngestError::invalid(
                    &at,
                    "no se, confidence interval or arm summaries to derive uncertainty from",
                ));
            };
            let md = match (r.md, &from_arms) {
                (Some(md), _) => md,
                (None, Some(c)) => c.md,
                (None, None) => return Err(IngestError::invalid(&at, "md missing and no arm summaries to derive it")),
            };
            if !md.is_finite() {
                return Err(IngestError::invalid(&at, "md must be finite"));
            }
            let contrast = ContrastEstimate {
                trial_id,
                treatment,
                comparator,
                endpoint,
                estimand_label: label,
                md,
                se,
                source,
                reported_ci,
            };
            if !keys.insert(contrast.unordered_key()) {
                return Err(IngestError::DuplicateContrast {
                    locator: at,
                    key: format!(
                        "({}, {} vs {}, {}, {})",
                        contrast.trial_id, contrast.treatment, contrast.comparator, contrast.endpoint, contrast.estimand_label
                    ),
                });
            }
            contrasts.push(contrast);
        }

        Ok(EvidenceBase { trials, contrasts, arm_summaries })
    }

    pub fn from_base(base: &EvidenceBase) -> Self {
        let trials = base
            .trials
            .iter()
            .map(|(id, t)| TrialRecord { trial_id: id.clone(), arms: t.arms.iter().map(|a| a.to_string()).collect() })
            .collect();
        let estimands = base
            .trials
            .iter()
            .flat_map(|(id, t)| {
                t.estimands.values().map(move |e| EstimandRecord {
                    trial_id: id.clone(),
                    label: e.label.clone(),
                    population: e.population.clone(),
                    endpoint_name: e.endpoint.name.clone(),
                    units: e.endpoint.units.clone(),
                    timepoint_weeks: e.endpoint.timepoint_weeks,
                    summary_measure: e.summary_measure.to_string(),
                    ie_events: e
                        .ie_handlings
                        .iter()
                        .map(|h| EventRecord { event: h.event.to_string(), strategy: h.strategy.to_string() })
                        .collect(),
                    direction: Some(e.endpoint.direction.to_string()),
                })
            })
            .collect();
        let contrasts = base
            .contrasts
            .iter()
            .map(|c| ContrastRecord {
                trial_id: c.trial_id.clone(),
                estimand_label: c.estimand_label.clone(),
                endpoint_name: c.endpoint.clone(),
                treatment: c.treatment.to_string(),
                comparator: c.comparator.to_string(),
                md: Some(c.md),
                se: (c.source == UncertaintySource::ReportedSe).then_some(c.se),
                ci_lower: c.reported_ci.map(|ci| ci.lower),
                ci_upper: c.reported_ci.map(|ci| ci.upper),
                ci_level: c.reported_ci.map(|ci| ci.level),
            })
            .collect();
        let arms = base
            .arm_summaries
            .iter()
            .map(|a| ArmRecord {
                trial_id: a.trial_id.clone(),
                estimand_label: a.estimand_label.clone(),
                endpoint_name: a.endpoint.clone(),
                treatment: a.treatment.to_string(),
                n: a.n_randomized,
                mean_change: a.mean_change,
                ci_lower: a.ci_lower,
                ci_upper: a.ci_upper,
                ci_level: Some(a.ci_level),
            })
            .collect();
        let mut file = EvidenceFile { trials, estimands, contrasts, arms, locators: Locators::default() };
        file.locators = Locators::indexed(&file);
        file
    }

    pub fn write(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("evidence records serialize") + "\n",
            Format::Csv => self.write_csv(),
        }
    }

    fn write_csv(&self) -> String {
        fn section<T: Serialize>(out: &mut String, name: &str, header: &[&str], rows: impl IntoIterator<Item = T>) {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(header).expect("write to memory");
            for row in rows {
                w.serialize(row).expect("write to memory");
            }
            out.push('#');
            out.push_str(name);
            out.push('\n');
            out.push_str(&String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8"));
        }

        let mut out = String::new();
        section(
            &mut out,
            "trials",
            &["trial_id", "arms"],
            self.trials.iter().map(|t| CsvTrial { trial_id: t.trial_id.clone(), arms: t.arms.join(";") }),
        );
        section(
            &mut out,
            "estimands",
            &[
                "trial_id",
                "label",
                "population",
                "endpoint_name",
                "units",
                "timepoint_weeks",
                "summary_measure",
                "ie_events",
                "direction",
            ],
            self.estimands.iter().map(|e| CsvEstimand {
                trial_id: e.trial_id.clone(),
                label: e.label.clone(),
                population: e.population.clone(),
                endpoint_name: e.endpoint_name.clone(),
                units: e.units.clone(),
                timepoint_weeks: e.timepoint_weeks,
                summary_measure: e.summary_measure.clone(),
                ie_events: e
                    .ie_events
                    .iter()
                    .map(|ev| format!("{}:{}", ev.event, ev.strategy))
                    .collect::<Vec<_>>()
                    .join(";"),
                direction: e.direction.clone(),
            }),
        );
        section(
            &mut out,
            "contrasts",
            &[
                "trial_id",
                "estimand_label",
                "endpoint_name",
                "treatment",
                "comparator",
                "md",
                "se",
                "ci_lower",
                "ci_upper",
                "ci_level",
            ],
            &self.contrasts,
        );
        section(
            &mut out,
            "arms",
            &[
                "trial_id",
                "estimand_label",
                "endpoint_name",
                "treatment",
                "n",
                "mean_change",
                "ci_lower",
                "ci_upper",
                "ci_level",
            ],
            &self.arms,
        );
        out
    }
}
