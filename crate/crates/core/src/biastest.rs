//! Capture-error diagnostics on the received sample: per-casilla
//! differences against the census, a descriptive table, a sign
//! randomization test per contender and intervals recentred on the census
//! values of the same casillas.

use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::census::{Census, ReceivedSample, PARTICIPATION_ID};
use crate::estimator::{
    build_intervals, census_truth, estimate_from_received, estimate_with_census_values, EstimatorError, HalfWidths,
    Interval,
};
use crate::rng::{stream_rng, Domain};

/// Largest number of nonzero differences enumerated exactly (2^20 sign
/// vectors).
pub const MAX_EXHAUSTIVE: usize = 20;

pub const P_VALUE_CONVENTION: &str = "p = (1 + #{|D*| >= |d_prom|}) / (M + 1); exhaustive: #{|D*| >= |d_prom|} / 2^n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiasError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("no half-width given for `{0}`")]
    MissingHalfWidth(String),
    #[error("received casilla `{0}` is not in the census")]
    UnknownCasillaId(String),
    #[error("replicates must be at least 1")]
    NoReplicates,
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

/// Received minus census votes for one contender, casillas in id order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffSeries {
    pub contender_id: String,
    pub d: Vec<i64>,
    pub zeros: usize,
    pub positives: usize,
    pub negatives: usize,
    pub d_prom: f64,
}

impl DiffSeries {
    pub fn new(contender_id: impl Into<String>, d: Vec<i64>) -> Self {
        let zeros = d.iter().filter(|&&x| x == 0).count();
        let positives = d.iter().filter(|&&x| x > 0).count();
        let d_prom = if d.is_empty() { 0.0 } else { d.iter().sum::<i64>() as f64 / d.len() as f64 };
        DiffSeries { contender_id: contender_id.into(), zeros, positives, negatives: d.len() - zeros - positives, d_prom, d }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn total(&self) -> i64 {
        self.d.iter().sum()
    }

    pub fn nonzero(&self) -> usize {
        self.positives + self.negatives
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Differences {
    pub casilla_ids: Vec<String>,
    pub series: Vec<DiffSeries>,
}

impl Differences {
    pub fn get(&self, contender_id: &str) -> Option<&DiffSeries> {
        self.series.iter().find(|s| s.contender_id == contender_id)
    }
}

/// `d_k = received_k − census_k` for every received casilla and contender.
pub fn compute_differences(received: &ReceivedSample, census: &Census) -> Result<Differences, BiasError> {
    let mut rows: Vec<_> = received.rows.iter().collect();
    rows.sort_by(|a, b| a.casilla_id.cmp(&b.casilla_id));
    let j = census.num_contenders();
    let mut d = vec![Vec::with_capacity(rows.len()); j];
    for row in &rows {
        let rec = census.casilla(&row.casilla_id).ok_or_else(|| BiasError::UnknownCasillaId(row.casilla_id.clone()))?;
        for (k, series) in d.iter_mut().enumerate() {
            series.push(row.votes[k] as i64 - rec.votes[k] as i64);
        }
    }
    Ok(Differences {
        casilla_ids: rows.iter().map(|r| r.casilla_id.clone()).collect(),
        series: census.contender_ids().zip(d).map(|(id, d)| DiffSeries::new(id, d)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub contender_id: String,
    pub pct_zero: f64,
    pub pct_positive: f64,
    pub pct_negative: f64,
    pub d_prom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub casillas: usize,
    pub rows: Vec<BiasRow>,
    /// Σ_j Σ_k d_k: received minus census votes over the whole sample.
    pub net_difference: i64,
}

pub fn bias_table(diffs: &Differences) -> BiasReport {
    let n = diffs.casilla_ids.len();
    let pct = |x: usize| if n == 0 { 0.0 } else { 100.0 * x as f64 / n as f64 };
    BiasReport {
        casillas: n,
        rows: diffs
            .series
            .iter()
            .map(|s| BiasRow {
                contender_id: s.contender_id.clone(),
                pct_zero: if n == 0 { 100.0 } else { pct(s.zeros) },
                pct_positive: pct(s.positives),
                pct_negative: pct(s.negatives),
                d_prom: s.d_prom,
            })
            .collect(),
        net_difference: diffs.series.iter().map(DiffSeries::total).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignTestMode {
    MonteCarlo,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignTestOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Enumerate every sign vector when there are at most
    /// [`MAX_EXHAUSTIVE`] nonzero differences.
    pub exhaustive: bool,
    pub workers: Option<usize>,
}

impl SignTestOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        SignTestOptions { replicates, seed, exhaustive: false, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignTestResult {
    pub contender_id: String,
    pub d_prom: f64,
    pub p_value: f64,
    /// Monte Carlo standard error of `p_value`; 0 when exact.
    pub p_value_se: f64,
    /// sqrt(Σ (d_k/N)²): the standard deviation of D*_prom under H₀.
    pub analytic_sd: f64,
    /// Standard deviation of the D*_prom values actually generated.
    pub simulated_sd: f64,
    pub nonzero: usize,
    pub mode: SignTestMode,
    /// Sign vectors evaluated.
    pub replicates_used: u64,
    pub convention: &'static str,
}

/// Sign randomization test of "differences for and against occurred at
/// random": D*_prom = Σ |d_k| S_k / N with S_k uniform on {−1, +1}.
pub fn sign_test(series: &DiffSeries, options: &SignTestOptions) -> Result<SignTestResult, BiasError> {
    let n = series.len();
    let mags: Vec<u64> = series.d.iter().filter(|&&x| x != 0).map(|x| x.unsigned_abs()).collect();
    let observed = series.total().unsigned_abs() as u128;
    let analytic_sd = if n == 0 {
        0.0
    } else {
        mags.iter().map(|&m| (m as f64 / n as f64).powi(2)).sum::<f64>().sqrt()
    };
    let result = |p_value, p_value_se, simulated_sd, mode, replicates_used| SignTestResult {
        contender_id: series.contender_id.clone(),
        d_prom: series.d_prom,
        p_value,
        p_value_se,
        analytic_sd,
        simulated_sd,
        nonzero: mags.len(),
        mode,
        replicates_used,
        convention: P_VALUE_CONVENTION,
    };

    if options.exhaustive && mags.len() <= MAX_EXHAUSTIVE {
        let (count, sum_sq) = enumerate_signs(&mags, observed);
        let total = 1u64 << mags.len();
        let sd = if n == 0 { 0.0 } else { (sum_sq as f64 / total as f64).sqrt() / n as f64 };
        return Ok(result(count as f64 / total as f64, 0.0, sd, SignTestMode::Exhaustive, total));
    }
    if options.replicates == 0 {
        return Err(BiasError::NoReplicates);
    }
    let (count, sums) = simulate_signs(&mags, observed, options)?;
    let m = options.replicates as f64;
    let p = (1 + count) as f64 / (m + 1.0);
    let sd = if n == 0 || options.replicates < 2 {
        0.0
    } else {
        let (s1, s2) = (sums.0 as f64, sums.1 as f64);
        ((s2 - s1 * s1 / m) / (m - 1.0)).max(0.0).sqrt() / n as f64
    };
    Ok(result(p, (p * (1.0 - p) / m).sqrt(), sd, SignTestMode::MonteCarlo, options.replicates as u64))
}

fn signed_sum(mags: &[u64], mut bits: impl FnMut() -> bool) -> i128 {
    mags.iter().map(|&m| if bits() { m as i128 } else { -(m as i128) }).sum()
}

/// (#{|Σ ±|d_k|| ≥ observed}, Σ (Σ ±|d_k|)²) over all 2^n sign vectors.
fn enumerate_signs(mags: &[u64], observed: u128) -> (u64, u128) {
    let mut count = 0u64;
    let mut sum_sq = 0u128;
    for mask in 0u64..1 << mags.len() {
        let mut i = 0;
        let s = signed_sum(mags, || {
            i += 1;
            mask >> (i - 1) & 1 == 1
        });
        count += (s.unsigned_abs() >= observed) as u64;
        sum_sq += s.unsigned_abs() * s.unsigned_abs();
    }
    (count, sum_sq)
}

/// Sign vector `m` comes from the stream `(seed, SignTest, m)`; integer
/// accumulators make the reduction order-free.
fn simulate_signs(
    mags: &[u64],
    observed: u128,
    options: &SignTestOptions,
) -> Result<(u64, (i128, u128)), BiasError> {
    let go = || {
        (0..options.replicates as u64)
            .into_par_iter()
            .map(|m| {
                let mut rng = stream_rng(options.seed, Domain::SignTest, m);
                let (mut word, mut left) = (0u64, 0u32);
                let s = signed_sum(mags, || {
                    if left == 0 {
                        word = rng.next_u64();
                        left = 64;
                    }
                    left -= 1;
                    let bit = word & 1 == 1;
                    word >>= 1;
                    bit
                });
                ((s.unsigned_abs() >= observed) as u64, (s, s.unsigned_abs() * s.unsigned_abs()))
            })
            .reduce(|| (0, (0, 0)), |a, b| (a.0 + b.0, (a.1 .0 + b.1 .0, a.1 .1 + b.1 .1)))
    };
    match options.workers {
        None => Ok(go()),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map(|pool| pool.install(go))
            .map_err(|e| BiasError::WorkerPool(e.to_string())),
    }
}

/// D*_prom values for replicates `0..M`, in index order.
pub fn simulate_sign_means(series: &DiffSeries, replicates: usize, seed: u64) -> Vec<f64> {
    let n = series.len().max(1) as f64;
    (0..replicates as u64)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream_rng(seed, Domain::SignTest, m);
            let (mut word, mut left) = (0u64, 0u32);
            let s: i128 = series
                .d
                .iter()
                .filter(|&&x| x != 0)
                .map(|x| {
                    if left == 0 {
                        word = rng.next_u64();
                        left = 64;
                    }
                    left -= 1;
                    let bit = word & 1 == 1;
                    word >>= 1;
                    if bit { x.unsigned_abs() as i128 } else { -(x.unsigned_abs() as i128) }
                })
                .sum();
            s as f64 / n
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectedRow {
    pub id: String,
    pub truth: f64,
    pub as_received: Interval,
    pub as_received_hit: bool,
    pub corrected: Interval,
    pub corrected_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectedIntervalReport {
    pub confidence: f64,
    pub rows: Vec<CorrectedRow>,
    pub as_received_misses: usize,
    pub corrected_misses: usize,
}

/// Intervals of the given half-widths around the estimate from received
/// votes and around the estimate from census votes on the same casillas.
/// Participation is included when `half_widths` has it.
pub fn corrected_intervals(
    received: &ReceivedSample,
    census: &Census,
    half_widths: &HalfWidths,
    confidence: f64,
) -> Result<CorrectedIntervalReport, BiasError> {
    for id in census.contender_ids() {
        if !half_widths.contains_key(id) {
            return Err(BiasError::MissingHalfWidth(id.to_string()));
        }
    }
    let raw = build_intervals(&estimate_from_received(census, received)?, half_widths, confidence)?;
    let fixed = build_intervals(&estimate_with_census_values(census, received)?, half_widths, confidence)?;
    let truth: BTreeMap<String, f64> = census_truth(census, half_widths.contains_key(PARTICIPATION_ID));
    let rows: Vec<CorrectedRow> = raw
        .intervals
        .into_iter()
        .zip(fixed.intervals)
        .map(|(a, b)| {
            let t = truth[&a.id];
            CorrectedRow {
                id: a.id.clone(),
                truth: t,
                as_received_hit: a.contains(t),
                corrected_hit: b.contains(t),
                as_received: a,
                corrected: b,
            }
        })
        .collect();
    Ok(CorrectedIntervalReport {
        confidence,
        as_received_misses: rows.iter().filter(|r| !r.as_received_hit).count(),
        corrected_misses: rows.iter().filter(|r| !r.corrected_hit).count(),
        rows,
    })
}
