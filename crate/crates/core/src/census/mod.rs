//! Election population (district-computation results per casilla) and the
//! election-night received sample.

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_census, load_received, load_schema, parse_schema, write_census, write_received, ContenderSchema};
pub use synth::{synth_election, SynthSpec};

/// Reserved interval id for the participation (turnout) estimate.
pub const PARTICIPATION_ID: &str = "participation";

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing column `{column}` (expected header {expected})")]
    MissingColumn { path: PathBuf, column: String, expected: String },
    #[error("{path}: row {row}: duplicate casilla_id `{casilla_id}`")]
    DuplicateCasillaId { path: PathBuf, row: usize, casilla_id: String },
    #[error("{path}: row {row}, column `{column}`: negative count {value}")]
    NegativeCount { path: PathBuf, row: usize, column: String, value: i64 },
    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as an integer")]
    BadInteger { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },
    #[error("stratum `{0}` has no casillas")]
    EmptyStratum(String),
    #[error("census has no strata")]
    NoStrata,
    #[error("duplicate casilla_id `{0}`")]
    DuplicateId(String),
    #[error("casilla `{casilla_id}` has {got} vote columns, expected {expected}")]
    VoteArity { casilla_id: String, got: usize, expected: usize },
    #[error("{path}: row {row}: unknown casilla_id `{casilla_id}`")]
    UnknownCasillaId { path: PathBuf, row: usize, casilla_id: String },
    #[error("{path}: row {row}: casilla `{casilla_id}` is in stratum `{census}` in the census, not `{received}`")]
    StratumMismatch { path: PathBuf, row: usize, casilla_id: String, census: String, received: String },
    #[error("invalid contender schema: {0}")]
    InvalidSchema(String),
    #[error("invalid synthetic election spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContenderKind {
    Candidate,
    Unregistered,
    NullVote,
}

impl fmt::Display for ContenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContenderKind::Candidate => "candidate",
            ContenderKind::Unregistered => "unregistered",
            ContenderKind::NullVote => "null_vote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contender {
    pub id: String,
    pub label: String,
    pub kind: ContenderKind,
}

impl Contender {
    pub fn new(id: impl Into<String>, label: impl Into<String>, kind: ContenderKind) -> Self {
        Contender { id: id.into(), label: label.into(), kind }
    }

    pub fn candidate(id: impl Into<String>) -> Self {
        let id = id.into();
        Contender { label: id.clone(), id, kind: ContenderKind::Candidate }
    }
}

/// One polling station. `votes` is aligned with the census contender order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasillaRecord {
    pub casilla_id: String,
    pub stratum_id: String,
    pub lista_nominal: u64,
    pub votes: Vec<u64>,
}

impl CasillaRecord {
    pub fn total_votes(&self) -> u64 {
        self.votes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub id: String,
    pub casillas: Vec<CasillaRecord>,
    pub lista_total: u64,
}

impl Stratum {
    /// K_i
    pub fn size(&self) -> usize {
        self.casillas.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    OvervoteSuspect { casilla_id: String, votes: u64, lista_nominal: u64 },
    ZeroVotes { casilla_id: String },
    EmptyStratum { stratum_id: String },
    DuplicateCasillaId { casilla_id: String },
    TooFewContenders { count: usize },
    DuplicateContenderId { id: String },
    VoteArity { casilla_id: String, got: usize, expected: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::OvervoteSuspect { casilla_id, votes, lista_nominal } => {
                write!(f, "casilla {casilla_id}: {votes} votes exceed lista nominal {lista_nominal}")
            }
            Finding::ZeroVotes { casilla_id } => write!(f, "casilla {casilla_id}: no votes"),
            Finding::EmptyStratum { stratum_id } => write!(f, "stratum {stratum_id}: no casillas"),
            Finding::DuplicateCasillaId { casilla_id } => write!(f, "casilla {casilla_id}: duplicated"),
            Finding::TooFewContenders { count } => write!(f, "{count} contenders; need at least 2"),
            Finding::DuplicateContenderId { id } => write!(f, "contender {id}: duplicated"),
            Finding::VoteArity { casilla_id, got, expected } => {
                write!(f, "casilla {casilla_id}: {got} vote values, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub warnings: Vec<Finding>,
    pub errors: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty() && self.errors.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }
}

/// Checks raw census parts without building (or mutating) anything.
///
/// Overvotes and zero-vote casillas are warnings; structural problems are
/// errors.
pub fn validate_parts(
    contenders: &[Contender],
    strata: &BTreeMap<String, Vec<CasillaRecord>>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    if contenders.len() < 2 {
        report.errors.push(Finding::TooFewContenders { count: contenders.len() });
    }
    let mut ids = HashSet::new();
    for c in contenders {
        if !ids.insert(c.id.as_str()) {
            report.errors.push(Finding::DuplicateContenderId { id: c.id.clone() });
        }
    }
    let mut seen = HashSet::new();
    for (stratum_id, casillas) in strata {
        if casillas.is_empty() {
            report.errors.push(Finding::EmptyStratum { stratum_id: stratum_id.clone() });
        }
        for rec in casillas {
            if !seen.insert(rec.casilla_id.as_str()) {
                report.errors.push(Finding::DuplicateCasillaId { casilla_id: rec.casilla_id.clone() });
            }
            if rec.votes.len() != contenders.len() {
                report.errors.push(Finding::VoteArity {
                    casilla_id: rec.casilla_id.clone(),
                    got: rec.votes.len(),
                    expected: contenders.len(),
                });
                continue;
            }
            let total = rec.total_votes();
            if total > rec.lista_nominal {
                report.warnings.push(Finding::OvervoteSuspect {
                    casilla_id: rec.casilla_id.clone(),
                    votes: total,
                    lista_nominal: rec.lista_nominal,
                });
            }
            if total == 0 {
                report.warnings.push(Finding::ZeroVotes { casilla_id: rec.casilla_id.clone() });
            }
        }
    }
    report
}

/// The full population, partitioned into strata ordered by stratum id.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct Census {
    contenders: Vec<Contender>,
    strata: Vec<Stratum>,
    index: HashMap<String, (usize, usize)>,
    vote_totals: Vec<u64>,
    lista_total: u64,
}

impl PartialEq for Census {
    fn eq(&self, other: &Self) -> bool {
        self.contenders == other.contenders && self.strata == other.strata
    }
}

impl Census {
    /// Groups records by stratum (keeping record order within a stratum).
    pub fn from_records(
        contenders: Vec<Contender>,
        records: Vec<CasillaRecord>,
    ) -> Result<Census, CensusError> {
        let mut strata: BTreeMap<String, Vec<CasillaRecord>> = BTreeMap::new();
        for rec in records {
            strata.entry(rec.stratum_id.clone()).or_default().push(rec);
        }
        Census::from_strata(contenders, strata)
    }

    pub fn from_strata(
        contenders: Vec<Contender>,
        strata: BTreeMap<String, Vec<CasillaRecord>>,
    ) -> Result<Census, CensusError> {
        let report = validate_parts(&contenders, &strata);
        if let Some(first) = report.errors.first() {
            return Err(match first {
                Finding::EmptyStratum { stratum_id } => CensusError::EmptyStratum(stratum_id.clone()),
                Finding::DuplicateCasillaId { casilla_id } => CensusError::DuplicateId(casilla_id.clone()),
                Finding::TooFewContenders { count } => {
                    CensusError::InvalidSchema(format!("need at least 2 contenders, got {count}"))
                }
                Finding::DuplicateContenderId { id } => {
                    CensusError::InvalidSchema(format!("duplicate contender id `{id}`"))
                }
                Finding::VoteArity { casilla_id, got, expected } => CensusError::VoteArity {
                    casilla_id: casilla_id.clone(),
                    got: *got,
                    expected: *expected,
                },
                Finding::OvervoteSuspect { .. } | Finding::ZeroVotes { .. } => unreachable!("warnings"),
            });
        }
        if strata.is_empty() {
            return Err(CensusError::NoStrata);
        }
        let j = contenders.len();
        let mut vote_totals = vec![0u64; j];
        let mut lista_total = 0u64;
        let mut index = HashMap::new();
        let strata: Vec<Stratum> = strata
            .into_iter()
            .enumerate()
            .map(|(si, (id, casillas))| {
                let mut st_lista = 0;
                for (ci, rec) in casillas.iter().enumerate() {
                    index.insert(rec.casilla_id.clone(), (si, ci));
                    st_lista += rec.lista_nominal;
                    for (t, v) in vote_totals.iter_mut().zip(&rec.votes) {
                        *t += v;
                    }
                }
                lista_total += st_lista;
                Stratum { id, casillas, lista_total: st_lista }
            })
            .collect();
        Ok(Census { contenders, strata, index, vote_totals, lista_total })
    }

    pub fn contenders(&self) -> &[Contender] {
        &self.contenders
    }

    pub fn contender_ids(&self) -> impl Iterator<Item = &str> {
        self.contenders.iter().map(|c| c.id.as_str())
    }

    pub fn contender_index(&self, id: &str) -> Option<usize> {
        self.contenders.iter().position(|c| c.id == id)
    }

    /// J
    pub fn num_contenders(&self) -> usize {
        self.contenders.len()
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum_index(&self, id: &str) -> Option<usize> {
        self.strata.binary_search_by(|s| s.id.as_str().cmp(id)).ok()
    }

    /// K
    pub fn num_casillas(&self) -> usize {
        self.strata.iter().map(Stratum::size).sum()
    }

    /// n
    pub fn lista_total(&self) -> u64 {
        self.lista_total
    }

    pub fn vote_totals(&self) -> &[u64] {
        &self.vote_totals
    }

    pub fn total_votes(&self) -> u64 {
        self.vote_totals.iter().sum()
    }

    /// (stratum index, position within stratum)
    pub fn locate(&self, casilla_id: &str) -> Option<(usize, usize)> {
        self.index.get(casilla_id).copied()
    }

    pub fn casilla(&self, casilla_id: &str) -> Option<&CasillaRecord> {
        self.locate(casilla_id).map(|(s, c)| &self.strata[s].casillas[c])
    }

    pub fn casillas(&self) -> impl Iterator<Item = &CasillaRecord> {
        self.strata.iter().flat_map(|s| s.casillas.iter())
    }

    /// θ_j = votes for j / all votes, as an exact fraction.
    pub fn true_share_exact(&self, j: usize) -> BigRational {
        BigRational::new(BigInt::from(self.vote_totals[j]), BigInt::from(self.total_votes()))
    }

    /// θ_j as a float; the division happens only here.
    pub fn true_shares(&self) -> Vec<f64> {
        let total = self.total_votes() as f64;
        self.vote_totals.iter().map(|&v| v as f64 / total).collect()
    }

    /// Total votes over total lista nominal; `None` when no lista nominal data.
    pub fn true_participation(&self) -> Option<f64> {
        (self.lista_total > 0).then(|| self.total_votes() as f64 / self.lista_total as f64)
    }

    pub fn validate(&self) -> ValidationReport {
        let strata: BTreeMap<String, Vec<CasillaRecord>> =
            self.strata.iter().map(|s| (s.id.clone(), s.casillas.clone())).collect();
        validate_parts(&self.contenders, &strata)
    }
}

/// One row of the election-night file. `votes` follows census contender order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedRow {
    pub casilla_id: String,
    pub stratum_id: String,
    pub votes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReceivedSample {
    pub rows: Vec<ReceivedRow>,
}

impl ReceivedSample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Built from in-memory rows, checked against the census the same way
    /// the loader checks a file.
    pub fn from_rows(rows: Vec<ReceivedRow>, census: &Census) -> Result<Self, CensusError> {
        io::check_received_rows(&rows, census, std::path::Path::new("<memory>"))?;
        Ok(ReceivedSample { rows })
    }

    /// The census rows of the given casillas, as if transmitted without error.
    pub fn from_census(census: &Census, casilla_ids: &[&str]) -> Result<Self, CensusError> {
        let rows = casilla_ids
            .iter()
            .map(|id| {
                let rec = census.casilla(id).ok_or_else(|| CensusError::UnknownCasillaId {
                    path: PathBuf::from("<memory>"),
                    row: 0,
                    casilla_id: id.to_string(),
                })?;
                Ok(ReceivedRow {
                    casilla_id: rec.casilla_id.clone(),
                    stratum_id: rec.stratum_id.clone(),
                    votes: rec.votes.clone(),
                })
            })
            .collect::<Result<Vec<_>, CensusError>>()?;
        ReceivedSample::from_rows(rows, census)
    }
}
