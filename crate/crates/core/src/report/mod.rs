//! Configuration, orchestration and rendering for the command-line audit.

pub mod config;
mod render;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{load_half_widths, parse_half_widths, Format, HalfWidthSource, Overrides, Settings};
pub use render::{Cell, Rendered, Table};

use crate::biastest::{
    bias_table, compute_differences, corrected_intervals, sign_test, BiasError, BiasReport, CorrectedIntervalReport,
    SignTestOptions, SignTestResult,
};
use crate::census::{
    load_census, load_received, load_schema, Census, CensusError, Contender, ContenderKind, ContenderSchema,
    ReceivedSample, PARTICIPATION_ID,
};
use crate::estimator::{EstimatorError, HalfWidths};
use crate::montecarlo::{
    coverage_study, precision_study, winner_gap_study, CoverageOptions, CoverageReport, MonteCarloError,
    PrecisionReport, RunConfig, WinnerGapReport,
};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Census(#[from] CensusError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl AuditError {
    /// Every error is an input or configuration problem.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Loaded inputs plus the run id derived from them.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub census: Census,
    pub received: Option<ReceivedSample>,
    pub given_half_widths: Option<HalfWidths>,
    pub run_id: String,
}

fn read(path: &Path) -> Result<Vec<u8>, AuditError> {
    std::fs::read(path).map_err(|source| AuditError::Io { path: path.to_path_buf(), source })
}

/// Contender columns from a census header when no schema file is given.
fn schema_from_header(path: &Path) -> Result<ContenderSchema, AuditError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => AuditError::Io { path: path.to_path_buf(), source },
        other => AuditError::Config(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers().map_err(|e| AuditError::Config(format!("{}: {e}", path.display())))?;
    let contenders = headers.iter().skip(3).map(Contender::candidate).collect();
    Ok(ContenderSchema::new(contenders)?)
}

impl Inputs {
    pub fn load(settings: &Settings) -> Result<Inputs, AuditError> {
        let census_path =
            settings.census.as_deref().ok_or_else(|| AuditError::Config("a census file is required (--census)".into()))?;
        let mut hasher = Sha256::new();
        let mut absorb = |tag: &str, bytes: &[u8]| {
            hasher.update((tag.len() as u64).to_le_bytes());
            hasher.update(tag.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        };
        absorb("census", &read(census_path)?);
        let schema = match &settings.schema {
            Some(p) => {
                absorb("schema", &read(p)?);
                load_schema(p)?
            }
            None => schema_from_header(census_path)?,
        };
        let census = load_census(census_path, &schema)?;
        let received = match &settings.received {
            Some(p) => {
                absorb("received", &read(p)?);
                Some(load_received(p, &census)?)
            }
            None => None,
        };
        let given_half_widths = match &settings.half_widths {
            Some(p) => {
                absorb("half_widths", &read(p)?);
                Some(load_half_widths(p)?)
            }
            None => None,
        };
        absorb("settings", serde_json::to_string(settings).expect("settings serialize").as_bytes());
        let digest = hasher.finalize();
        let run_id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Inputs { census, received, given_half_widths, run_id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub run_id: String,
    pub seed: u64,
    pub replicates: usize,
    pub version: &'static str,
    pub settings: Settings,
}

fn meta(settings: &Settings, inputs: &Inputs) -> RunMeta {
    RunMeta {
        run_id: inputs.run_id.clone(),
        seed: settings.seed,
        replicates: settings.replicates,
        version: env!("CARGO_PKG_VERSION"),
        settings: settings.clone(),
    }
}

fn run_config(settings: &Settings) -> RunConfig {
    RunConfig { replicates: settings.replicates, seed: settings.seed, workers: settings.workers }
}

/// Outcome of one command: rendered output and whether it found something.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub rendered: Rendered,
    pub finding: bool,
}

impl CommandOutput {
    pub fn exit_code(&self) -> i32 {
        self.finding as i32
    }
}

fn label(census: &Census, id: &str) -> String {
    census.contenders().iter().find(|c| c.id == id).map_or_else(|| "Participation".into(), |c| c.label.clone())
}

pub fn run_precision(settings: &Settings, inputs: &Inputs) -> Result<Vec<PrecisionReport>, AuditError> {
    let run = run_config(settings);
    settings
        .sample_sizes
        .iter()
        .map(|&c| Ok(precision_study(&inputs.census, c, settings.target_margin, settings.quantile, &run)?))
        .collect()
}

fn precision_table(reports: &[PrecisionReport], inputs: &Inputs, settings: &Settings) -> Table {
    let mut headers = vec!["id".to_string(), "contender".into(), "truth (%)".into()];
    for r in reports {
        headers.push(format!("eps c={} (%)", r.sample_size));
        headers.push(format!("se c={} (%)", r.sample_size));
    }
    if inputs.given_half_widths.is_some() {
        headers.push("given (%)".into());
    }
    headers.push("meets target".into());
    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut t = Table::new("precision", "Achievable precision", &h);
    let first = &reports[0];
    for row in first.rows.iter().chain(first.participation.as_ref()) {
        let mut cells = vec![Cell::text(&row.id), Cell::text(label(&inputs.census, &row.id)), Cell::Pct(row.truth, 2)];
        let mut meets = true;
        for r in reports {
            let x = r.row(&row.id).expect("same census");
            cells.push(Cell::Pct(x.epsilon, 2));
            cells.push(Cell::Pct(x.epsilon_se, 3));
            meets &= x.meets_target;
        }
        if let Some(g) = &inputs.given_half_widths {
            cells.push(Cell::opt_pct(g.get(&row.id).copied(), 2));
        }
        cells.push(if row.id == PARTICIPATION_ID { Cell::Empty } else { Cell::Flag(meets) });
        t.row(cells);
    }
    t.note(format!(
        "eps = {:.0}% quantile of |truth - estimate| over {} replicates; target {:.2}%.",
        settings.quantile * 100.0,
        settings.replicates,
        settings.target_margin * 100.0
    ));
    t
}

fn precision_finding(reports: &[PrecisionReport]) -> bool {
    reports.iter().any(|r| !r.all_meet_target())
}

pub fn cmd_precision(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let reports = run_precision(settings, inputs)?;
    let json = json!({ "run": meta(settings, inputs), "precision": reports });
    let tables = vec![precision_table(&reports, inputs, settings)];
    Ok(CommandOutput { finding: precision_finding(&reports), rendered: Rendered { name: "precision".into(), json, tables } })
}

/// Half-widths for the coverage study, reusing `precision` when it already
/// covers the main sample size.
fn coverage_half_widths(
    settings: &Settings,
    inputs: &Inputs,
    precision: Option<&[PrecisionReport]>,
) -> Result<HalfWidths, AuditError> {
    let c = settings.main_sample_size();
    match settings.coverage_half_widths {
        HalfWidthSource::Given => inputs
            .given_half_widths
            .clone()
            .ok_or_else(|| AuditError::Config("coverage from given half-widths needs --half-widths".into())),
        HalfWidthSource::Precision => {
            if let Some(r) = precision.and_then(|p| p.iter().find(|r| r.sample_size == c)) {
                return Ok(r.half_widths());
            }
            Ok(precision_study(&inputs.census, c, settings.target_margin, settings.quantile, &run_config(settings))?
                .half_widths())
        }
    }
}

pub fn run_coverage(
    settings: &Settings,
    inputs: &Inputs,
    precision: Option<&[PrecisionReport]>,
) -> Result<CoverageReport, AuditError> {
    let hw = coverage_half_widths(settings, inputs, precision)?;
    let options = CoverageOptions { confidence: settings.confidence, include_participation: settings.include_participation };
    Ok(coverage_study(&inputs.census, settings.main_sample_size(), &hw, &options, &run_config(settings))?)
}

fn coverage_tables(r: &CoverageReport, inputs: &Inputs) -> Vec<Table> {
    let mut t = Table::new(
        "coverage",
        &format!("Joint coverage of {} intervals (c={})", r.binomial.r, r.sample_size),
        &["event", "simulated (%)", "se (%)", "binomial (%)"],
    );
    let s = &r.simulated;
    let b = &r.binomial;
    for (name, est, bin) in [
        ("P(X=0)", s.p_none, b.p_none),
        ("P(X>=1)", s.p_at_least_one, b.p_at_least_one),
        ("P(X>=2)", s.p_at_least_two, b.p_at_least_two),
    ] {
        t.row(vec![Cell::text(name), Cell::Pct(est.value, 1), Cell::Pct(est.se, 2), Cell::Pct(bin, 1)]);
    }
    t.note(format!("binomial: r = {}, p = {:.2}; X = number of intervals missing the truth.", b.r, b.p));

    let mut hist = Table::new("coverage_histogram", "Distribution of X", &["X", "count", "probability (%)"]);
    for (x, (&n, &p)) in r.miss_counts.iter().zip(&r.histogram).enumerate() {
        hist.row(vec![Cell::Int(x as i64), Cell::Int(n as i64), Cell::Pct(p, 2)]);
    }

    let mut marg = Table::new(
        "coverage_marginal",
        "Per-interval hit rates",
        &["id", "contender", "half-width (%)", "hit rate (%)", "se (%)"],
    );
    for m in &r.marginal {
        marg.row(vec![
            Cell::text(&m.id),
            Cell::text(label(&inputs.census, &m.id)),
            Cell::Pct(m.half_width, 2),
            Cell::Pct(m.hit_rate.value, 1),
            Cell::Pct(m.hit_rate.se, 2),
        ]);
    }
    vec![t, hist, marg]
}

pub fn cmd_coverage(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let report = run_coverage(settings, inputs, None)?;
    let json = json!({ "run": meta(settings, inputs), "coverage": report });
    let tables = coverage_tables(&report, inputs);
    Ok(CommandOutput { finding: false, rendered: Rendered { name: "coverage".into(), json, tables } })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSection {
    pub table: BiasReport,
    pub sign_tests: Vec<SignTestResult>,
    pub rejection_level: f64,
    pub rejected: Vec<String>,
    /// Absent when no half-widths file was given.
    pub corrected: Option<CorrectedIntervalReport>,
}

pub fn run_bias(settings: &Settings, inputs: &Inputs) -> Result<BiasSection, AuditError> {
    let received = inputs
        .received
        .as_ref()
        .ok_or_else(|| AuditError::Config("the bias study needs a received sample (--received)".into()))?;
    let diffs = compute_differences(received, &inputs.census)?;
    let options = SignTestOptions {
        replicates: settings.replicates,
        seed: settings.seed,
        exhaustive: settings.exhaustive,
        workers: settings.workers,
    };
    let sign_tests = diffs.series.iter().map(|s| sign_test(s, &options)).collect::<Result<Vec<_>, _>>()?;
    let rejected = sign_tests
        .iter()
        .filter(|t| t.p_value < settings.rejection_level)
        .map(|t| t.contender_id.clone())
        .collect();
    let corrected = inputs
        .given_half_widths
        .as_ref()
        .map(|hw| corrected_intervals(received, &inputs.census, hw, settings.confidence))
        .transpose()?;
    Ok(BiasSection { table: bias_table(&diffs), sign_tests, rejection_level: settings.rejection_level, rejected, corrected })
}

fn bias_tables(b: &BiasSection, inputs: &Inputs) -> Vec<Table> {
    let census = &inputs.census;
    let mut t = Table::new(
        "bias",
        &format!("Capture differences, received minus census ({} casillas)", b.table.casillas),
        &["id", "contender", "no error (%)", "positive (%)", "negative (%)", "mean difference (votes)"],
    );
    for r in &b.table.rows {
        t.row(vec![
            Cell::text(&r.contender_id),
            Cell::text(label(census, &r.contender_id)),
            Cell::Pct(r.pct_zero / 100.0, 1),
            Cell::Pct(r.pct_positive / 100.0, 1),
            Cell::Pct(r.pct_negative / 100.0, 1),
            Cell::Num(r.d_prom, 2),
        ]);
    }
    t.note(format!("net difference over all contenders: {} votes", b.table.net_difference));

    let mut s = Table::new(
        "sign_test",
        "Sign randomization test",
        &["id", "contender", "p-value (%)", "se (%)", "rejected", "sd under null", "nonzero", "mode"],
    );
    for r in &b.sign_tests {
        s.row(vec![
            Cell::text(&r.contender_id),
            Cell::text(label(census, &r.contender_id)),
            Cell::PValue(r.p_value),
            Cell::Pct(r.p_value_se, 2),
            Cell::Flag(r.p_value < b.rejection_level),
            Cell::Num(r.analytic_sd, 3),
            Cell::Int(r.nonzero as i64),
            Cell::text(match r.mode {
                crate::biastest::SignTestMode::MonteCarlo => "monte_carlo",
                crate::biastest::SignTestMode::Exhaustive => "exhaustive",
            }),
        ]);
    }
    s.note(format!("rejection at p < {:.0}%; {}", b.rejection_level * 100.0, crate::biastest::P_VALUE_CONVENTION));
    let mut out = vec![t, s];

    if let Some(c) = &b.corrected {
        let mut ct = Table::new(
            "corrected_intervals",
            "Intervals from received votes and from census votes on the same casillas",
            &[
                "id",
                "contender",
                "truth (%)",
                "received lower (%)",
                "received upper (%)",
                "received hit",
                "corrected lower (%)",
                "corrected upper (%)",
                "corrected hit",
            ],
        );
        for r in &c.rows {
            ct.row(vec![
                Cell::text(&r.id),
                Cell::text(label(census, &r.id)),
                Cell::Pct(r.truth, 2),
                Cell::Pct(r.as_received.lower, 2),
                Cell::Pct(r.as_received.upper, 2),
                Cell::Flag(r.as_received_hit),
                Cell::Pct(r.corrected.lower, 2),
                Cell::Pct(r.corrected.upper, 2),
                Cell::Flag(r.corrected_hit),
            ]);
        }
        ct.note(format!("misses: received {}, corrected {}", c.as_received_misses, c.corrected_misses));
        out.push(ct);
    }
    out
}

pub fn cmd_bias(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let section = run_bias(settings, inputs)?;
    let json = json!({ "run": meta(settings, inputs), "bias": section });
    let tables = bias_tables(&section, inputs);
    Ok(CommandOutput { finding: !section.rejected.is_empty(), rendered: Rendered { name: "bias".into(), json, tables } })
}

/// Configured pair, else the two candidates with the largest census shares.
fn gap_pair(settings: &Settings, census: &Census) -> Result<(String, String), AuditError> {
    let mut ranked: Vec<(usize, &Contender)> = census
        .contenders()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ContenderKind::Candidate)
        .collect();
    ranked.sort_by(|a, b| census.vote_totals()[b.0].cmp(&census.vote_totals()[a.0]).then(a.0.cmp(&b.0)));
    let mut auto = ranked.into_iter().map(|(_, c)| c.id.clone());
    let leader = match &settings.leader {
        Some(l) => l.clone(),
        None => auto.next().ok_or_else(|| AuditError::Config("no candidates to compare".into()))?,
    };
    let runner_up = match &settings.runner_up {
        Some(r) => r.clone(),
        None => auto
            .find(|c| *c != leader)
            .ok_or_else(|| AuditError::Config("need two candidates for the winner gap".into()))?,
    };
    if leader == runner_up {
        return Err(AuditError::Config(format!("leader and runner-up are both `{leader}`")));
    }
    Ok((leader, runner_up))
}

pub fn run_winner_gap(settings: &Settings, inputs: &Inputs) -> Result<WinnerGapReport, AuditError> {
    let (leader, runner_up) = gap_pair(settings, &inputs.census)?;
    Ok(winner_gap_study(
        &inputs.census,
        &leader,
        &runner_up,
        settings.main_sample_size(),
        settings.histogram_bins,
        &run_config(settings),
    )?)
}

fn gap_tail(r: &WinnerGapReport) -> f64 {
    r.normal_tail_prob.unwrap_or(r.empirical_neg_frac.value)
}

fn winner_gap_tables(r: &WinnerGapReport, inputs: &Inputs) -> Vec<Table> {
    let mut t = Table::new(
        "winner_gap",
        &format!(
            "Gap {} minus {} (c={}, {} replicates)",
            label(&inputs.census, &r.leader),
            label(&inputs.census, &r.runner_up),
            r.sample_size,
            r.replicates
        ),
        &["statistic", "value", "se"],
    );
    t.row(vec![Cell::text("mean (%)"), Cell::Pct(r.mean.value, 2), Cell::Pct(r.mean.se, 4)]);
    t.row(vec![Cell::text("sd (%)"), Cell::Pct(r.sd.value, 2), Cell::Pct(r.sd.se, 4)]);
    if let Some(sw) = &r.shapiro_wilk {
        t.row(vec![Cell::text("Shapiro-Wilk W"), Cell::Num(sw.w, 5), Cell::Empty]);
        t.row(vec![Cell::text("Shapiro-Wilk p (%)"), Cell::Pct(sw.p_value, 0), Cell::Empty]);
        t.row(vec![Cell::text("Shapiro-Wilk subsample"), Cell::Int(sw.subsample_size as i64), Cell::Empty]);
    }
    match r.normal_tail_prob {
        Some(p) => t.row(vec![Cell::text("normal P(gap < 0)"), Cell::Sci(p, 2), Cell::Empty]),
        None => t.row(vec![Cell::text("normal P(gap < 0)"), Cell::text("degenerate"), Cell::Empty]),
    }
    t.row(vec![
        Cell::text("simulated P(gap < 0)"),
        Cell::Num(r.empirical_neg_frac.value, 6),
        Cell::Num(r.empirical_neg_frac.se, 6),
    ]);
    if r.degenerate {
        t.note("degenerate distribution: no normal fit");
    }

    let mut h = Table::new("winner_gap_histogram", "Histogram of simulated gaps", &["lower (%)", "upper (%)", "count"]);
    for (k, &n) in r.histogram.counts.iter().enumerate() {
        h.row(vec![
            Cell::Pct(r.histogram.edges[k], 3),
            Cell::Pct(r.histogram.edges[k + 1], 3),
            Cell::Int(n as i64),
        ]);
    }
    vec![t, h]
}

pub fn cmd_winner_gap(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let report = run_winner_gap(settings, inputs)?;
    let json = json!({ "run": meta(settings, inputs), "winner_gap": report });
    let tables = winner_gap_tables(&report, inputs);
    Ok(CommandOutput {
        finding: gap_tail(&report) >= 1.0 - settings.confidence,
        rendered: Rendered { name: "winner_gap".into(), json, tables },
    })
}

/// Every study in one run. Studies at the same sample size share draws:
/// replicate `m` always uses the stream `(seed, m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditBundle {
    pub run: RunMeta,
    pub precision: Vec<PrecisionReport>,
    pub coverage: CoverageReport,
    /// Absent without a received sample.
    pub bias: Option<BiasSection>,
    pub winner_gap: WinnerGapReport,
}

pub fn run_report(settings: &Settings, inputs: &Inputs) -> Result<AuditBundle, AuditError> {
    let precision = run_precision(settings, inputs)?;
    let coverage = run_coverage(settings, inputs, Some(&precision))?;
    let bias = inputs.received.as_ref().map(|_| run_bias(settings, inputs)).transpose()?;
    let winner_gap = run_winner_gap(settings, inputs)?;
    Ok(AuditBundle { run: meta(settings, inputs), precision, coverage, bias, winner_gap })
}

pub fn cmd_report(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let b = run_report(settings, inputs)?;
    let mut tables = vec![precision_table(&b.precision, inputs, settings)];
    tables.extend(coverage_tables(&b.coverage, inputs));
    if let Some(bias) = &b.bias {
        tables.extend(bias_tables(bias, inputs));
    }
    tables.extend(winner_gap_tables(&b.winner_gap, inputs));
    let finding = precision_finding(&b.precision)
        || b.bias.as_ref().is_some_and(|x| !x.rejected.is_empty())
        || gap_tail(&b.winner_gap) >= 1.0 - settings.confidence;
    let json = serde_json::to_value(&b).expect("bundle serializes");
    Ok(CommandOutput { finding, rendered: Rendered { name: "report".into(), json, tables } })
}

pub fn cmd_validate(settings: &Settings, inputs: &Inputs) -> Result<CommandOutput, AuditError> {
    let report = inputs.census.validate();
    let census = &inputs.census;
    let mut t = Table::new("validation", "Census validation", &["severity", "finding"]);
    for w in &report.warnings {
        t.row(vec![Cell::text("warning"), Cell::text(w.to_string())]);
    }
    for e in &report.errors {
        t.row(vec![Cell::text("error"), Cell::text(e.to_string())]);
    }
    t.note(format!(
        "{} casillas in {} strata, {} contenders, {} votes",
        census.num_casillas(),
        census.strata().len(),
        census.num_contenders(),
        census.total_votes()
    ));
    if let Some(r) = &inputs.received {
        t.note(format!("received sample: {} casillas, consistent with the census", r.len()));
    }
    let json = json!({
        "run": meta(settings, inputs),
        "validation": report,
        "casillas": census.num_casillas(),
        "strata": census.strata().len(),
        "contenders": census.contender_ids().collect::<Vec<_>>(),
        "received": inputs.received.as_ref().map(ReceivedSample::len),
    });
    Ok(CommandOutput { finding: !report.is_clean(), rendered: Rendered { name: "validation".into(), json, tables: vec![t] } })
}

/// A received sample for a synthetic census: a proportional stratified draw
/// of `c` casillas whose vote counts are perturbed, each with probability
/// `error_rate`, by a symmetric error of 1 to 3 votes (never below zero).
pub fn synth_received(census: &Census, c: usize, error_rate: f64, seed: u64) -> Result<ReceivedSample, AuditError> {
    use rand::Rng;

    if !(0.0..=1.0).contains(&error_rate) {
        return Err(AuditError::Config(format!("capture error rate {error_rate} must be in [0, 1]")));
    }
    let allocation = crate::sampler::proportional_allocation(census, c).map_err(MonteCarloError::from)?;
    let draw = crate::sampler::draw(census, &allocation, seed, 0);
    let mut rng = crate::rng::stream_rng(seed, crate::rng::Domain::Subsample, 1);
    let rows = draw
        .casilla_ids()
        .map(|id| {
            let rec = census.casilla(id).expect("drawn from the census");
            let votes = rec
                .votes
                .iter()
                .map(|&v| {
                    if rng.random_bool(error_rate) {
                        let e: u64 = rng.random_range(1..=3);
                        if rng.random_bool(0.5) { v + e } else { v.saturating_sub(e) }
                    } else {
                        v
                    }
                })
                .collect();
            crate::census::ReceivedRow { casilla_id: id.to_string(), stratum_id: rec.stratum_id.clone(), votes }
        })
        .collect();
    Ok(ReceivedSample::from_rows(rows, census)?)
}
