//! `estnma` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 infeasible analysis
//! or disconnected network, 4 numerical failure. Diagnostics go to standard error.

mod args;
mod render;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use estnma_core::estimand::MatchingMode;
use estnma_core::ingest::{parse_evidence, validate_evidence};
use estnma_core::network::build_network;
use estnma_core::pipeline::{
    compare_strategies, derive_meta_estimand, restrict_evidence, run_analysis, AnalysisConfig, SliceAnalysis,
};
use estnma_core::{EvidenceBase, MetaEstimand, NmaError, PipelineError, Severity, Treatment, DEFAULT_TOLERANCE_WEEKS};
use thiserror::Error;

use args::{Cli, Command, FitArgs, IoArgs, SliceArgs};
use render::NetworkView;

const USAGE: u8 = 1;
const DATA: u8 = 2;
const INFEASIBLE: u8 = 3;
const NUMERICAL: u8 = 4;

#[derive(Debug, Error)]
#[error("{message}")]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

fn nma_code(e: &NmaError) -> u8 {
    match e {
        NmaError::Disconnected { .. } | NmaError::SharedArmVarianceUnidentifiable { .. } | NmaError::Empty => {
            INFEASIBLE
        }
        NmaError::UnknownTreatment(_) | NmaError::InvalidLevel(_) => USAGE,
        NmaError::RankDeficient
        | NmaError::IllConditioned { .. }
        | NmaError::NotPositiveDefinite { .. }
        | NmaError::RedundantContrasts { .. }
        | NmaError::CovarianceShape { .. } => NUMERICAL,
        NmaError::Ingest(_) | NmaError::Network(_) => DATA,
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Infeasible { .. } => INFEASIBLE,
            PipelineError::Config(_) => USAGE,
            PipelineError::TooFewResults => USAGE,
            PipelineError::MismatchedTreatments(..) => INFEASIBLE,
            PipelineError::Nma(n) => nma_code(n),
            PipelineError::Network(_) => DATA,
        };
        CliError::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { io } => validate(&io),
        Command::Network { io, slice } => network(&io, &slice),
        Command::Analyze { io, slice, fit } => analyze(&io, &slice, &fit),
        Command::Compare { io, slice, fit } => compare(&io, &slice, &fit),
    }
}

fn load(path: &Path) -> Result<EvidenceBase, CliError> {
    parse_evidence(path).map_err(|e| CliError::new(DATA, format!("{}: {e}", path.display())))
}

fn emit(io: &IoArgs, data: &str) -> Result<(), CliError> {
    match &io.output {
        Some(path) => std::fs::write(path, data)
            .map_err(|e| CliError::new(DATA, format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(data.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::new(DATA, e.to_string()))
        }
    }
}

fn validate(io: &IoArgs) -> Result<u8, CliError> {
    let base = load(&io.input)?;
    let issues = validate_evidence(&base);
    emit(io, &render::validation(&base, &issues, io.format))?;
    Ok(if issues.iter().any(|i| i.severity == Severity::Error) { DATA } else { 0 })
}

struct Plan {
    metas: Vec<MetaEstimand>,
    endpoints: Vec<String>,
    reference: Option<Treatment>,
    level: f64,
    force: bool,
}

fn plan(base: &EvidenceBase, slice: &SliceArgs, fit: Option<&FitArgs>) -> Result<Plan, CliError> {
    let config = match &slice.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new(DATA, format!("cannot read {}: {e}", path.display())))?;
            Some(AnalysisConfig::from_json(&text).map_err(|e| CliError::new(DATA, format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let mode = if slice.strict { Some(MatchingMode::Strict) } else { None };

    let endpoints: Vec<String> = if !slice.endpoint.is_empty() {
        slice.endpoint.clone()
    } else if let Some(cfg) = &config {
        cfg.endpoints.clone()
    } else {
        base.endpoints()
    };

    let mut metas = Vec::new();
    match &config {
        Some(cfg) => {
            if slice.estimand.is_empty() {
                metas = cfg.meta_estimands.clone();
            }
            for label in &slice.estimand {
                let m = cfg
                    .meta(label)
                    .ok_or_else(|| CliError::new(USAGE, format!("estimand '{label}' is not in the configuration")))?;
                metas.push(m.clone());
            }
        }
        None => {
            for label in &slice.estimand {
                let tol = slice.tolerance.unwrap_or(DEFAULT_TOLERANCE_WEEKS);
                metas.push(derive_meta_estimand(base, label, &endpoints, tol, mode.unwrap_or_default())?);
            }
        }
    }
    for m in &mut metas {
        if let Some(mode) = mode {
            m.matching_mode = mode;
        }
        if let Some(t) = slice.tolerance {
            m.endpoint_timepoint_tolerance_weeks = t;
        }
    }

    let reference = fit
        .and_then(|f| f.reference.as_deref())
        .map(Treatment::new)
        .or_else(|| config.as_ref().and_then(|c| c.reference.clone()));
    let level = fit.and_then(|f| f.ci_level).or(config.as_ref().map(|c| c.ci_level)).unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::new(USAGE, format!("--ci-level must lie in (0, 1), got {level}")));
    }
    let force = fit.is_some_and(|f| f.force) || config.as_ref().is_some_and(|c| c.force);
    Ok(Plan { metas, endpoints, reference, level, force })
}

fn network(io: &IoArgs, slice: &SliceArgs) -> Result<u8, CliError> {
    let base = load(&io.input)?;
    let plan = plan(&base, slice, None)?;
    let mut views = Vec::new();
    for endpoint in &plan.endpoints {
        if plan.metas.is_empty() {
            let key = estnma_core::estimand::normalize_text(endpoint);
            let contrasts: Vec<_> = base.contrasts.iter().filter(|c| c.endpoint == key).cloned().collect();
            views.push(NetworkView::new(None, &key, build_network(&contrasts).ok()));
        } else {
            for meta in &plan.metas {
                let r = restrict_evidence(&base, meta, endpoint);
                views.push(NetworkView::new(Some(&meta.label), &r.endpoint, build_network(&r.slice.contrasts).ok()));
            }
        }
    }
    emit(io, &render::networks(&views, io.format))?;
    let mut code = 0;
    for v in views.iter().filter(|v| !v.connected) {
        eprintln!("error: {}: network is {}", v.title(), if v.nodes.is_empty() { "empty" } else { "disconnected" });
        code = INFEASIBLE;
    }
    Ok(code)
}

/// Runs every slice in plan order; failures are reported and the worst exit code kept.
fn analyse_all(base: &EvidenceBase, plan: &Plan) -> (Vec<SliceAnalysis>, u8) {
    let mut out = Vec::new();
    let mut code = 0;
    for meta in &plan.metas {
        for endpoint in &plan.endpoints {
            match run_analysis(base, meta, endpoint, plan.reference.as_ref(), plan.level, plan.force) {
                Ok(a) => out.push(a),
                Err(e) => {
                    let e = CliError::from(e);
                    eprintln!("error: {e}");
                    code = code.max(e.code);
                }
            }
        }
    }
    (out, code)
}

fn analyze(io: &IoArgs, slice: &SliceArgs, fit: &FitArgs) -> Result<u8, CliError> {
    let base = load(&io.input)?;
    let plan = plan(&base, slice, Some(fit))?;
    if plan.metas.is_empty() {
        return Err(CliError::new(USAGE, "analyze needs --estimand or --config"));
    }
    let (analyses, code) = analyse_all(&base, &plan);
    for a in &analyses {
        for w in &a.result.warnings {
            eprintln!("warning: {} / {}: {w}", a.result.estimand_label, a.result.endpoint);
        }
    }
    emit(io, &render::analyses(&analyses, io.format))?;
    Ok(code)
}

fn compare(io: &IoArgs, slice: &SliceArgs, fit: &FitArgs) -> Result<u8, CliError> {
    let base = load(&io.input)?;
    let plan = plan(&base, slice, Some(fit))?;
    if plan.metas.len() < 2 {
        return Err(CliError::new(USAGE, "compare needs at least two estimands"));
    }
    let mut tables = Vec::new();
    let mut code = 0;
    for endpoint in &plan.endpoints {
        let mut results = Vec::new();
        for meta in &plan.metas {
            match run_analysis(&base, meta, endpoint, plan.reference.as_ref(), plan.level, plan.force) {
                Ok(a) => results.push((meta.label.clone(), a.result)),
                Err(e) => {
                    let e = CliError::from(e);
                    eprintln!("error: {e}");
                    code = code.max(e.code);
                }
            }
        }
        if results.len() == plan.metas.len() {
            match compare_strategies(&results, endpoint) {
                Ok(t) => tables.push(t),
                Err(e) => {
                    let e = CliError::from(e);
                    eprintln!("error: {endpoint}: {e}");
                    code = code.max(e.code);
                }
            }
        }
    }
    emit(io, &render::comparisons(&tables, io.format))?;
    Ok(code)
}
