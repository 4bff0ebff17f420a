//! Text, CSV and JSON rendering. Text rounds to two decimals; csv and json keep full precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use estnma_core::ingest::Issue;
use estnma_core::network::EvidenceNetwork;
use estnma_core::pipeline::{SliceAnalysis, StrategyComparison};
use estnma_core::{EvidenceBase, NetworkEdge, Treatment};
use serde::Serialize;

use crate::args::OutputFormat;

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn level_label(level: f64) -> String {
    format!("{}% CI", (level * 1000.0).round() / 10.0)
}

#[derive(Serialize)]
struct ValidationSummary<'a> {
    trials: usize,
    contrasts: usize,
    arm_summaries: usize,
    issues: &'a [Issue],
}

pub fn validation(base: &EvidenceBase, issues: &[Issue], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(&ValidationSummary {
            trials: base.trials.len(),
            contrasts: base.contrasts.len(),
            arm_summaries: base.arm_summaries.len(),
            issues,
        }),
        OutputFormat::Csv => {
            let mut rows = vec![vec!["severity".into(), "code".into(), "message".into()]];
            for i in issues {
                rows.push(vec![
                    serde_json::to_value(i.severity).unwrap().as_str().unwrap_or_default().to_string(),
                    serde_json::to_value(i.code).unwrap().as_str().unwrap_or_default().to_string(),
                    i.message.clone(),
                ]);
            }
            csv_string(rows)
        }
        OutputFormat::Text => {
            let mut s = format!(
                "{} trials, {} contrasts, {} arm summaries\n",
                base.trials.len(),
                base.contrasts.len(),
                base.arm_summaries.len()
            );
            for i in issues {
                let _ = writeln!(s, "{i}");
            }
            if issues.is_empty() {
                s.push_str("no issues\n");
            }
            s
        }
    }
}

#[derive(Serialize)]
pub struct NetworkView {
    pub estimand: Option<String>,
    pub endpoint: String,
    pub nodes: Vec<Treatment>,
    pub edges: Vec<NetworkEdge>,
    pub trial_designs: BTreeMap<String, BTreeSet<Treatment>>,
    pub connected: bool,
    pub components: Vec<Vec<Treatment>>,
}

impl NetworkView {
    pub fn new(estimand: Option<&str>, endpoint: &str, net: Option<EvidenceNetwork>) -> Self {
        let estimand = estimand.map(str::to_string);
        match net {
            Some(net) => NetworkView {
                estimand,
                endpoint: endpoint.to_string(),
                connected: net.is_connected(),
                components: net.connected_components(),
                nodes: net.nodes,
                edges: net.edges,
                trial_designs: net.trial_designs,
            },
            None => NetworkView {
                estimand,
                endpoint: endpoint.to_string(),
                nodes: Vec::new(),
                edges: Vec::new(),
                trial_designs: BTreeMap::new(),
                connected: false,
                components: Vec::new(),
            },
        }
    }

    pub fn title(&self) -> String {
        match &self.estimand {
            Some(e) => format!("{e} / {}", self.endpoint),
            None => self.endpoint.clone(),
        }
    }
}

fn join(ts: &[Treatment]) -> String {
    ts.iter().map(Treatment::as_str).collect::<Vec<_>>().join(", ")
}

pub fn networks(views: &[NetworkView], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(views),
        OutputFormat::Csv => {
            let mut rows = vec![["estimand", "endpoint", "trial_id", "treatment", "comparator", "weight"]
                .map(String::from)
                .to_vec()];
            for v in views {
                for e in &v.edges {
                    rows.push(vec![
                        v.estimand.clone().unwrap_or_default(),
                        v.endpoint.clone(),
                        e.trial_id.clone(),
                        e.treatment.to_string(),
                        e.comparator.to_string(),
                        e.weight.to_string(),
                    ]);
                }
            }
            csv_string(rows)
        }
        OutputFormat::Text => {
            let mut s = String::new();
            for v in views {
                let _ = writeln!(s, "{}", v.title());
                let _ = writeln!(s, "  treatments: {}", join(&v.nodes));
                for (trial, design) in &v.trial_designs {
                    let arms: Vec<Treatment> = design.iter().cloned().collect();
                    let _ = writeln!(s, "  {trial}: {}", join(&arms));
                }
                let _ = writeln!(s, "  edges: {}", v.edges.len());
                if v.connected {
                    s.push_str("  connected\n");
                } else if v.nodes.is_empty() {
                    s.push_str("  no evidence\n");
                } else {
                    let parts: Vec<String> = v.components.iter().map(|c| format!("{{{}}}", join(c))).collect();
                    let _ = writeln!(s, "  disconnected: {}", parts.join(" | "));
                }
            }
            s
        }
    }
}

pub fn analyses(slices: &[SliceAnalysis], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(slices),
        OutputFormat::Csv => {
            let mut rows = vec![[
                "estimand", "endpoint", "treatment", "comparator", "md", "ci_lower", "ci_upper", "se", "ci_level",
            ]
            .map(String::from)
            .to_vec()];
            for a in slices {
                let r = &a.result;
                for c in &r.comparisons {
                    rows.push(vec![
                        r.estimand_label.clone(),
                        r.endpoint.clone(),
                        c.treatment.to_string(),
                        c.comparator.to_string(),
                        c.md.to_string(),
                        c.ci_lower.to_string(),
                        c.ci_upper.to_string(),
                        c.se.to_string(),
                        c.ci_level.to_string(),
                    ]);
                }
            }
            csv_string(rows)
        }
        OutputFormat::Text => {
            let mut s = String::new();
            for a in slices {
                let r = &a.result;
                let f = &a.feasibility;
                let _ = writeln!(s, "{} / {}: {}", r.estimand_label, r.endpoint, f.verdict);
                for reason in &f.reasons {
                    let tag = if reason.blocking { "blocking" } else { "warning" };
                    let _ = writeln!(s, "  {tag} [{}]: {}", reason.code, reason.message);
                }
                for w in &r.warnings {
                    let _ = writeln!(s, "  warning: {w}");
                }
                let _ = writeln!(
                    s,
                    "  {} contrasts used, {} excluded; reference {}, {}",
                    a.provenance.used.len(),
                    a.provenance.excluded.len(),
                    r.reference,
                    level_label(r.ci_level)
                );
                let _ = writeln!(s, "  {:<14} {:<14} {:>8}  {:>18}  {:>6}", "treatment", "comparator", "md", "ci", "se");
                for c in &r.comparisons {
                    let _ = writeln!(
                        s,
                        "  {:<14} {:<14} {:>8.2}  {:>18}  {:>6.2}",
                        c.treatment.as_str(),
                        c.comparator.as_str(),
                        c.md,
                        format!("({:.2}, {:.2})", c.ci_lower, c.ci_upper),
                        c.se
                    );
                }
                s.push('\n');
            }
            s
        }
    }
}

pub fn comparisons(tables: &[StrategyComparison], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(tables),
        OutputFormat::Csv => {
            let mut rows = vec![[
                "endpoint", "treatment", "comparator", "estimand", "md", "ci_lower", "ci_upper", "se", "attenuated",
                "difference",
            ]
            .map(String::from)
            .to_vec()];
            for t in tables {
                for row in &t.rows {
                    for e in &row.estimates {
                        let att = row.attenuation.iter().find(|a| a.label == e.label);
                        rows.push(vec![
                            t.endpoint.clone(),
                            row.treatment.to_string(),
                            row.comparator.to_string(),
                            e.label.clone(),
                            e.md.to_string(),
                            e.ci_lower.to_string(),
                            e.ci_upper.to_string(),
                            e.se.to_string(),
                            att.map(|a| a.attenuated.to_string()).unwrap_or_default(),
                            att.map(|a| a.difference.to_string()).unwrap_or_default(),
                        ]);
                    }
                }
            }
            csv_string(rows)
        }
        OutputFormat::Text => {
            let mut s = String::new();
            for t in tables {
                let _ = writeln!(s, "{}: baseline {}", t.endpoint, t.baseline);
                let mut header = format!("  {:<14} {:<14}", "treatment", "comparator");
                for l in &t.labels {
                    let _ = write!(header, " {:>24}", l);
                }
                for l in t.labels.iter().skip(1) {
                    let name = if t.labels.len() > 2 { format!("attenuated ({l})") } else { "attenuated".into() };
                    let _ = write!(header, " {name:>12}");
                }
                let _ = writeln!(s, "{header}");
                for row in &t.rows {
                    let _ = write!(s, "  {:<14} {:<14}", row.treatment.as_str(), row.comparator.as_str());
                    for e in &row.estimates {
                        let _ = write!(s, " {:>24}", format!("{:.2} ({:.2}, {:.2})", e.md, e.ci_lower, e.ci_upper));
                    }
                    for a in &row.attenuation {
                        let _ = write!(s, " {:>12}", if a.attenuated { "yes" } else { "no" });
                    }
                    s.push('\n');
                }
                s.push('\n');
            }
            s
        }
    }
}
