//! Stratified ratio estimator of vote shares and participation, and
//! fixed-half-width intervals around it.
//!
//! For stratum `i` with `K_i` casillas of which `c_i` were sampled, and
//! `ȳ_ij` the sample mean of contender `j`'s votes in that stratum:
//!
//! ```text
//! θ*_j = Σ_i K_i ȳ_ij / Σ_l Σ_i K_i ȳ_il
//! ```
//!
//! Participation uses the same weights: estimated total votes over estimated
//! total lista nominal on the same casillas.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::census::{Census, ReceivedSample, PARTICIPATION_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("stratum `{0}` has no sampled casillas")]
    EmptyStratumSample(String),
    #[error("unknown casilla_id `{0}`")]
    UnknownCasillaId(String),
    #[error("casilla `{0}` appears twice in the sample")]
    DuplicateCasillaId(String),
    #[error("casilla `{casilla_id}` has {got} vote values, expected {expected}")]
    VoteArity { casilla_id: String, got: usize, expected: usize },
    #[error("sample contains no votes")]
    NoVotes,
    #[error("no half-width or truth for `{0}`")]
    MissingContender(String),
    #[error("half-width for `{id}` must be positive and finite, got {value}")]
    InvalidHalfWidth { id: String, value: f64 },
    #[error("confidence {0} must be in (0, 1]")]
    InvalidConfidence(f64),
}

/// Half-widths (as fractions) keyed by contender id, plus optionally
/// [`PARTICIPATION_ID`].
pub type HalfWidths = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteShareEstimate {
    pub contender_ids: Vec<String>,
    pub shares: Vec<f64>,
    pub participation: Option<f64>,
    pub sample_sizes: BTreeMap<String, usize>,
}

impl VoteShareEstimate {
    pub fn share(&self, id: &str) -> Option<f64> {
        self.contender_ids.iter().position(|c| c == id).map(|j| self.shares[j])
    }
}

/// Per-stratum vote sums for one sample; reused across replicates.
#[derive(Debug, Clone)]
pub(crate) struct StratifiedSums {
    contenders: usize,
    votes: Vec<u64>,
    lista: Vec<u64>,
    counts: Vec<usize>,
}

impl StratifiedSums {
    pub(crate) fn new(census: &Census) -> Self {
        let s = census.strata().len();
        let j = census.num_contenders();
        StratifiedSums { contenders: j, votes: vec![0; s * j], lista: vec![0; s], counts: vec![0; s] }
    }

    pub(crate) fn clear(&mut self) {
        self.votes.fill(0);
        self.lista.fill(0);
        self.counts.fill(0);
    }

    pub(crate) fn add(&mut self, stratum: usize, votes: &[u64], lista_nominal: u64) {
        let row = &mut self.votes[stratum * self.contenders..(stratum + 1) * self.contenders];
        for (acc, v) in row.iter_mut().zip(votes) {
            *acc += v;
        }
        self.lista[stratum] += lista_nominal;
        self.counts[stratum] += 1;
    }

    fn check(&self, census: &Census) -> Result<(), EstimatorError> {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return Err(EstimatorError::EmptyStratumSample(census.strata()[i].id.clone()));
        }
        if self.votes.iter().all(|&v| v == 0) {
            return Err(EstimatorError::NoVotes);
        }
        Ok(())
    }

    /// Writes θ*_j into `shares` and returns participation (when the sample
    /// carries any lista nominal). Callers guarantee every stratum is sampled.
    pub(crate) fn estimate_into(&self, census: &Census, shares: &mut [f64]) -> Option<f64> {
        shares.fill(0.0);
        let (mut votes_hat, mut lista_hat) = (0.0, 0.0);
        for (i, st) in census.strata().iter().enumerate() {
            // K_i ȳ_ij = (K_i / c_i) · Σ_k y_kj; the weight is exactly 1 for a
            // fully sampled stratum, so full-census sums stay integral.
            let w = st.size() as f64 / self.counts[i] as f64;
            let row = &self.votes[i * self.contenders..(i + 1) * self.contenders];
            let mut total = 0u64;
            for (s, &v) in shares.iter_mut().zip(row) {
                *s += w * v as f64;
                total += v;
            }
            votes_hat += w * total as f64;
            lista_hat += w * self.lista[i] as f64;
        }
        let den: f64 = shares.iter().sum();
        for s in shares.iter_mut() {
            *s /= den;
        }
        (lista_hat > 0.0).then(|| votes_hat / lista_hat)
    }

    fn estimate_exact(&self, census: &Census) -> Vec<BigRational> {
        let mut num = vec![BigRational::zero(); self.contenders];
        for (i, st) in census.strata().iter().enumerate() {
            let w = BigRational::new(BigInt::from(st.size()), BigInt::from(self.counts[i]));
            let row = &self.votes[i * self.contenders..(i + 1) * self.contenders];
            for (n, &v) in num.iter_mut().zip(row) {
                *n += &w * BigInt::from(v);
            }
        }
        let den: BigRational = num.iter().fold(BigRational::zero(), |acc, x| acc + x);
        num.into_iter().map(|n| n / &den).collect()
    }
}

fn accumulate<'a, I>(census: &Census, sample: I) -> Result<StratifiedSums, EstimatorError>
where
    I: IntoIterator<Item = (&'a str, &'a [u64])>,
{
    let mut sums = StratifiedSums::new(census);
    let mut seen = HashSet::new();
    for (id, votes) in sample {
        let (s, k) = census.locate(id).ok_or_else(|| EstimatorError::UnknownCasillaId(id.to_string()))?;
        if !seen.insert(id) {
            return Err(EstimatorError::DuplicateCasillaId(id.to_string()));
        }
        if votes.len() != census.num_contenders() {
            return Err(EstimatorError::VoteArity {
                casilla_id: id.to_string(),
                got: votes.len(),
                expected: census.num_contenders(),
            });
        }
        // Lista nominal always comes from the census join.
        sums.add(s, votes, census.strata()[s].casillas[k].lista_nominal);
    }
    sums.check(census)?;
    Ok(sums)
}

/// Ratio estimate from `(casilla_id, votes)` pairs. Vote values may come
/// from the received sample or from the census; the caller picks.
pub fn ratio_estimate<'a, I>(census: &Census, sample: I) -> Result<VoteShareEstimate, EstimatorError>
where
    I: IntoIterator<Item = (&'a str, &'a [u64])>,
{
    let sums = accumulate(census, sample)?;
    let mut shares = vec![0.0; census.num_contenders()];
    let participation = sums.estimate_into(census, &mut shares);
    Ok(VoteShareEstimate {
        contender_ids: census.contender_ids().map(String::from).collect(),
        shares,
        participation,
        sample_sizes: census.strata().iter().map(|s| s.id.clone()).zip(sums.counts.iter().copied()).collect(),
    })
}

/// θ*_j as exact fractions.
pub fn ratio_estimate_exact<'a, I>(census: &Census, sample: I) -> Result<Vec<BigRational>, EstimatorError>
where
    I: IntoIterator<Item = (&'a str, &'a [u64])>,
{
    Ok(accumulate(census, sample)?.estimate_exact(census))
}

/// Ratio estimate from the votes as received on election night.
pub fn estimate_from_received(census: &Census, received: &ReceivedSample) -> Result<VoteShareEstimate, EstimatorError> {
    ratio_estimate(census, received.rows.iter().map(|r| (r.casilla_id.as_str(), r.votes.as_slice())))
}

/// Ratio estimate on the same casillas but with census vote values.
pub fn estimate_with_census_values(
    census: &Census,
    received: &ReceivedSample,
) -> Result<VoteShareEstimate, EstimatorError> {
    let pairs = received
        .rows
        .iter()
        .map(|r| {
            census
                .casilla(&r.casilla_id)
                .map(|rec| (rec.casilla_id.as_str(), rec.votes.as_slice()))
                .ok_or_else(|| EstimatorError::UnknownCasillaId(r.casilla_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ratio_estimate(census, pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub id: String,
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub half_width: f64,
}

impl Interval {
    /// `center ± half_width`, clamped to `[0, 1]`.
    pub fn new(id: impl Into<String>, center: f64, half_width: f64) -> Self {
        Interval {
            id: id.into(),
            lower: (center - half_width).max(0.0),
            upper: (center + half_width).min(1.0),
            center,
            half_width,
        }
    }

    /// Explicit bounds (e.g. a published interval); center and half-width
    /// are derived.
    pub fn from_bounds(id: impl Into<String>, lower: f64, upper: f64) -> Self {
        Interval { id: id.into(), lower, upper, center: (lower + upper) / 2.0, half_width: (upper - lower) / 2.0 }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed on both ends.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSet {
    pub confidence: f64,
    pub intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn get(&self, id: &str) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.id == id)
    }
}

pub(crate) fn check_half_width(id: &str, value: f64) -> Result<(), EstimatorError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(EstimatorError::InvalidHalfWidth { id: id.to_string(), value })
    }
}

/// One interval per contender, plus participation when both the estimate
/// and `half_widths` carry it.
pub fn build_intervals(
    estimate: &VoteShareEstimate,
    half_widths: &HalfWidths,
    confidence: f64,
) -> Result<IntervalSet, EstimatorError> {
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(EstimatorError::InvalidConfidence(confidence));
    }
    let mut intervals = Vec::with_capacity(estimate.shares.len() + 1);
    for (id, &center) in estimate.contender_ids.iter().zip(&estimate.shares) {
        let hw = *half_widths.get(id).ok_or_else(|| EstimatorError::MissingContender(id.clone()))?;
        check_half_width(id, hw)?;
        intervals.push(Interval::new(id.clone(), center, hw));
    }
    if let (Some(center), Some(&hw)) = (estimate.participation, half_widths.get(PARTICIPATION_ID)) {
        check_half_width(PARTICIPATION_ID, hw)?;
        intervals.push(Interval::new(PARTICIPATION_ID, center, hw));
    }
    Ok(IntervalSet { confidence, intervals })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitReport {
    pub hits: Vec<(String, bool)>,
    pub misses: usize,
}

impl HitReport {
    pub fn hit(&self, id: &str) -> Option<bool> {
        self.hits.iter().find(|(i, _)| i == id).map(|(_, h)| *h)
    }
}

/// Which intervals contain their true value; `misses` is X.
pub fn interval_hits(intervals: &IntervalSet, truth: &BTreeMap<String, f64>) -> Result<HitReport, EstimatorError> {
    let hits = intervals
        .intervals
        .iter()
        .map(|iv| {
            let t = truth.get(&iv.id).ok_or_else(|| EstimatorError::MissingContender(iv.id.clone()))?;
            Ok((iv.id.clone(), iv.contains(*t)))
        })
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    let misses = hits.iter().filter(|(_, h)| !h).count();
    Ok(HitReport { hits, misses })
}

/// Census truths keyed by id: every θ_j, plus participation when requested
/// and available.
pub fn census_truth(census: &Census, include_participation: bool) -> BTreeMap<String, f64> {
    let mut truth: BTreeMap<String, f64> =
        census.contender_ids().map(String::from).zip(census.true_shares()).collect();
    if include_participation {
        if let Some(p) = census.true_participation() {
            truth.insert(PARTICIPATION_ID.to_string(), p);
        }
    }
    truth
}
