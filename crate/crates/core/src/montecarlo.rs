//! Replicated stratified sampling from a known census: achievable precision,
//! joint interval coverage and the distribution of the gap between two
//! contenders.
//!
//! Replicate `m` draws with the stream `(seed, Draw, m)`, so reports are a
//! function of `(census, c, seed, M)` alone. Per-replicate results are
//! collected in index order and reduced sequentially; the worker count only
//! changes wall time.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::census::{Census, PARTICIPATION_ID};
use crate::estimator::{check_half_width, EstimatorError, HalfWidths, Interval, StratifiedSums};
use crate::rng::{stream_rng, Domain};
use crate::sampler::{proportional_allocation, Allocation, DrawBuffers, SamplerError};
use crate::statskit::{
    binomial_tail_ge, normal_upper_tail, quantile_sorted, quantile_standard_error_sorted, shapiro_wilk,
    ShapiroWilk, StatsError, SHAPIRO_WILK_MAX_N,
};

pub const DEFAULT_REPLICATES: usize = 100_000;
pub const DEFAULT_HISTOGRAM_BINS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no half-width given for `{0}`")]
    MissingHalfWidth(String),
    #[error("unknown contender `{0}`")]
    UnknownContender(String),
    #[error("leader and runner-up are both `{0}`")]
    SameContender(String),
    #[error("replicates must be at least 1")]
    NoReplicates,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("target margin {0} must be positive and finite")]
    InvalidMargin(f64),
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

/// Replication settings shared by all studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub replicates: usize,
    pub seed: u64,
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        RunConfig { replicates, seed, workers: None }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        RunConfig { workers: Some(workers), ..self }
    }
}

/// A value estimated by simulation together with its Monte Carlo standard
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn proportion(count: usize, m: usize) -> Self {
        let p = count as f64 / m as f64;
        Estimate { value: p, se: (p * (1.0 - p) / m as f64).sqrt() }
    }
}

struct Replicator<'a> {
    census: &'a Census,
    allocation: &'a Allocation,
    buffers: DrawBuffers,
    sums: StratifiedSums,
    shares: Vec<f64>,
    participation: Option<f64>,
}

impl<'a> Replicator<'a> {
    fn new(census: &'a Census, allocation: &'a Allocation) -> Self {
        Replicator {
            census,
            allocation,
            buffers: DrawBuffers::new(census),
            sums: StratifiedSums::new(census),
            shares: vec![0.0; census.num_contenders()],
            participation: None,
        }
    }

    /// Draws replicate `m` and estimates into `shares` and `participation`.
    fn run(&mut self, seed: u64, m: u64) {
        self.buffers.draw(self.allocation, seed, m);
        self.sums.clear();
        for (s, st) in self.census.strata().iter().enumerate() {
            for &k in self.buffers.selected(s) {
                let rec = &st.casillas[k as usize];
                self.sums.add(s, &rec.votes, rec.lista_nominal);
            }
        }
        self.participation = self.sums.estimate_into(self.census, &mut self.shares);
    }
}

/// Runs `f` for replicates `0..M` and returns the results in index order.
fn replicate<T, F>(census: &Census, allocation: &Allocation, run: &RunConfig, f: F) -> Result<Vec<T>, MonteCarloError>
where
    T: Send,
    F: Fn(&mut Replicator, u64) -> T + Sync,
{
    if run.replicates == 0 {
        return Err(MonteCarloError::NoReplicates);
    }
    let seed = run.seed;
    let go = || {
        (0..run.replicates as u64)
            .into_par_iter()
            .map_init(|| Replicator::new(census, allocation), |rep, m| {
                rep.run(seed, m);
                f(rep, m)
            })
            .collect::<Vec<T>>()
    };
    match run.workers {
        None => Ok(go()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| MonteCarloError::WorkerPool(e.to_string()))?;
            Ok(pool.install(go))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionRow {
    pub id: String,
    pub truth: f64,
    pub epsilon: f64,
    pub epsilon_se: f64,
    pub meets_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionReport {
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub quantile_level: f64,
    pub target_margin: f64,
    pub allocation: Allocation,
    pub rows: Vec<PrecisionRow>,
    /// Same statistic for participation, when the census has lista nominal.
    pub participation: Option<PrecisionRow>,
}

impl PrecisionReport {
    pub fn row(&self, id: &str) -> Option<&PrecisionRow> {
        self.rows.iter().chain(self.participation.as_ref()).find(|r| r.id == id)
    }

    /// ε per contender (and participation), ready for a coverage run.
    pub fn half_widths(&self) -> HalfWidths {
        self.rows
            .iter()
            .chain(self.participation.as_ref())
            .map(|r| (r.id.clone(), r.epsilon))
            .collect()
    }

    pub fn all_meet_target(&self) -> bool {
        self.rows.iter().all(|r| r.meets_target)
    }
}

/// ε_j: the `quantile_level` quantile of |θ_j − θ*_j| over M replicates.
pub fn precision_study(
    census: &Census,
    c: usize,
    target_margin: f64,
    quantile_level: f64,
    run: &RunConfig,
) -> Result<PrecisionReport, MonteCarloError> {
    if !(target_margin.is_finite() && target_margin > 0.0) {
        return Err(MonteCarloError::InvalidMargin(target_margin));
    }
    if !(quantile_level > 0.0 && quantile_level <= 1.0) {
        return Err(StatsError::InvalidProbability(quantile_level).into());
    }
    let allocation = proportional_allocation(census, c)?;
    let truth = census.true_shares();
    let truth_p = census.true_participation();
    let j = truth.len();
    let width = j + truth_p.is_some() as usize;

    let errors: Vec<f64> = replicate(census, &allocation, run, |rep, _| {
        let mut row = Vec::with_capacity(width);
        row.extend(rep.shares.iter().zip(&truth).map(|(s, t)| (t - s).abs()));
        if let Some(tp) = truth_p {
            row.push((tp - rep.participation.unwrap_or(f64::NAN)).abs());
        }
        row
    })?
    .into_iter()
    .flatten()
    .collect();

    let m = run.replicates;
    let column = |col: usize| -> Result<(f64, f64), MonteCarloError> {
        let mut v: Vec<f64> = (0..m).map(|r| errors[r * width + col]).collect();
        v.sort_by(f64::total_cmp);
        Ok((quantile_sorted(&v, quantile_level)?, quantile_standard_error_sorted(&v, quantile_level)?))
    };
    let make_row = |id: &str, truth: f64, col: usize| -> Result<PrecisionRow, MonteCarloError> {
        let (epsilon, epsilon_se) = column(col)?;
        Ok(PrecisionRow { id: id.to_string(), truth, epsilon, epsilon_se, meets_target: epsilon <= target_margin })
    };
    let rows = census
        .contender_ids()
        .enumerate()
        .map(|(col, id)| make_row(id, truth[col], col))
        .collect::<Result<Vec<_>, _>>()?;
    let participation = truth_p.map(|tp| make_row(PARTICIPATION_ID, tp, j)).transpose()?;
    Ok(PrecisionReport {
        sample_size: c,
        replicates: m,
        seed: run.seed,
        quantile_level,
        target_margin,
        allocation,
        rows,
        participation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageOptions {
    pub confidence: f64,
    /// Add the participation interval when the census carries lista nominal.
    pub include_participation: bool,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions { confidence: 0.95, include_participation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissDistribution {
    pub p_none: Estimate,
    pub p_at_least_one: Estimate,
    pub p_at_least_two: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinomialComparison {
    pub r: usize,
    pub p: f64,
    pub p_none: f64,
    pub p_at_least_one: f64,
    pub p_at_least_two: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalHit {
    pub id: String,
    pub half_width: f64,
    pub hit_rate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub confidence: f64,
    pub half_widths: BTreeMap<String, f64>,
    /// Probability of exactly `x` misses, `x = 0..=r`.
    pub histogram: Vec<f64>,
    pub miss_counts: Vec<usize>,
    pub simulated: MissDistribution,
    pub binomial: BinomialComparison,
    pub marginal: Vec<MarginalHit>,
}

/// Distribution of the number X of intervals (fixed half-widths around each
/// replicate's estimates) that miss the census truth.
pub fn coverage_study(
    census: &Census,
    c: usize,
    half_widths: &HalfWidths,
    options: &CoverageOptions,
    run: &RunConfig,
) -> Result<CoverageReport, MonteCarloError> {
    if !(options.confidence > 0.0 && options.confidence <= 1.0) {
        return Err(EstimatorError::InvalidConfidence(options.confidence).into());
    }
    let allocation = proportional_allocation(census, c)?;
    let truth = census.true_shares();
    let truth_p = census.true_participation().filter(|_| options.include_participation);

    let mut ids: Vec<String> = census.contender_ids().map(String::from).collect();
    if truth_p.is_some() {
        ids.push(PARTICIPATION_ID.to_string());
    }
    let hw = ids
        .iter()
        .map(|id| {
            let h = *half_widths.get(id).ok_or_else(|| MonteCarloError::MissingHalfWidth(id.clone()))?;
            check_half_width(id, h)?;
            Ok(h)
        })
        .collect::<Result<Vec<f64>, MonteCarloError>>()?;
    let r = ids.len();
    let j = truth.len();

    let hits: Vec<Vec<bool>> = replicate(census, &allocation, run, |rep, _| {
        let mut row: Vec<bool> =
            (0..j).map(|k| Interval::new("", rep.shares[k], hw[k]).contains(truth[k])).collect();
        if let Some(tp) = truth_p {
            row.push(rep.participation.is_some_and(|p| Interval::new("", p, hw[j]).contains(tp)));
        }
        row
    })?;

    let m = run.replicates;
    let mut miss_counts = vec![0usize; r + 1];
    let mut hit_counts = vec![0usize; r];
    for row in &hits {
        miss_counts[row.iter().filter(|h| !**h).count()] += 1;
        for (acc, &h) in hit_counts.iter_mut().zip(row) {
            *acc += h as usize;
        }
    }
    let histogram = miss_counts.iter().map(|&n| n as f64 / m as f64).collect();
    let p_none = Estimate::proportion(miss_counts[0], m);
    let p_at_least_one = Estimate { value: 1.0 - p_none.value, se: p_none.se };
    let p_at_least_two = Estimate::proportion(miss_counts.iter().skip(2).sum(), m);

    let p = 1.0 - options.confidence;
    let b_none = binomial_tail_ge(r as u32, p, 0)? - binomial_tail_ge(r as u32, p, 1)?;
    let binomial = BinomialComparison {
        r,
        p,
        p_none: b_none,
        p_at_least_one: binomial_tail_ge(r as u32, p, 1)?,
        p_at_least_two: binomial_tail_ge(r as u32, p, 2)?,
    };
    let marginal = ids
        .iter()
        .zip(&hw)
        .zip(&hit_counts)
        .map(|((id, &h), &n)| MarginalHit { id: id.clone(), half_width: h, hit_rate: Estimate::proportion(n, m) })
        .collect();
    Ok(CoverageReport {
        sample_size: c,
        replicates: m,
        seed: run.seed,
        confidence: options.confidence,
        half_widths: ids.iter().cloned().zip(hw.iter().copied()).collect(),
        histogram,
        miss_counts,
        simulated: MissDistribution { p_none, p_at_least_one, p_at_least_two },
        binomial,
        marginal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapiroSummary {
    pub w: f64,
    pub p_value: f64,
    pub subsample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerGapReport {
    pub leader: String,
    pub runner_up: String,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mean: Estimate,
    pub sd: Estimate,
    pub histogram: Histogram,
    /// `None` when the distribution is degenerate.
    pub shapiro_wilk: Option<ShapiroSummary>,
    /// Φ̄(mean / sd): the fitted normal's probability of a negative gap.
    pub normal_tail_prob: Option<f64>,
    pub empirical_neg_frac: Estimate,
    pub degenerate: bool,
}

const DEGENERATE_SD: f64 = 1e-12;

/// Distribution of θ*_leader − θ*_runner_up over M replicates.
pub fn winner_gap_study(
    census: &Census,
    leader: &str,
    runner_up: &str,
    c: usize,
    bins: usize,
    run: &RunConfig,
) -> Result<WinnerGapReport, MonteCarloError> {
    let a = census.contender_index(leader).ok_or_else(|| MonteCarloError::UnknownContender(leader.into()))?;
    let b = census.contender_index(runner_up).ok_or_else(|| MonteCarloError::UnknownContender(runner_up.into()))?;
    if a == b {
        return Err(MonteCarloError::SameContender(leader.into()));
    }
    if bins == 0 {
        return Err(MonteCarloError::NoBins);
    }
    let allocation = proportional_allocation(census, c)?;
    let diffs = replicate(census, &allocation, run, |rep, _| rep.shares[a] - rep.shares[b])?;
    let m = diffs.len();

    let mean = diffs.iter().sum::<f64>() / m as f64;
    let var = if m > 1 { diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();
    let degenerate = !(sd >= DEGENERATE_SD);
    let neg = diffs.iter().filter(|&&d| d < 0.0).count();

    let histogram = if degenerate {
        Histogram { edges: vec![mean, mean], counts: vec![m] }
    } else {
        gap_histogram(&diffs, mean - 5.0 * sd, mean + 5.0 * sd, bins)
    };

    let (shapiro, tail) = if degenerate {
        (None, None)
    } else {
        let n = m.min(SHAPIRO_WILK_MAX_N.min(5000));
        let shapiro = if n >= 3 {
            let mut rng = stream_rng(run.seed, Domain::Subsample, 0);
            let mut picked: Vec<usize> = index::sample(&mut rng, m, n).into_vec();
            picked.sort_unstable();
            let sub: Vec<f64> = picked.iter().map(|&i| diffs[i]).collect();
            match shapiro_wilk(&sub) {
                Ok(ShapiroWilk { w, p_value, n }) => Some(ShapiroSummary { w, p_value, subsample_size: n }),
                Err(StatsError::ZeroVariance) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        (shapiro, Some(normal_upper_tail(mean / sd)))
    };

    Ok(WinnerGapReport {
        leader: leader.to_string(),
        runner_up: runner_up.to_string(),
        sample_size: c,
        replicates: m,
        seed: run.seed,
        mean: Estimate { value: mean, se: sd / (m as f64).sqrt() },
        sd: Estimate { value: sd, se: if m > 1 { sd / (2.0 * (m - 1) as f64).sqrt() } else { 0.0 } },
        histogram,
        shapiro_wilk: shapiro,
        normal_tail_prob: tail,
        empirical_neg_frac: Estimate::proportion(neg, m),
        degenerate,
    })
}

/// Equal-width bins over `[lo, hi]`; values outside land in the end bins.
fn gap_histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = ((v - lo) / width).floor();
        let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
        counts[k] += 1;
    }
    Histogram { edges, counts }
}
