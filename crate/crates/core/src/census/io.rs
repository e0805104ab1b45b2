use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CasillaRecord, Census, CensusError, Contender, ContenderKind, ReceivedRow, ReceivedSample, PARTICIPATION_ID};

/// Contender ids, labels and kinds, in census column order.
///
/// On disk this is TOML with one `[[contender]]` table per contender:
///
/// ```toml
/// [[contender]]
/// id = "PAN"
/// label = "J. Vázquez Mota"
/// kind = "candidate"      # candidate | unregistered | null_vote
/// ```
///
/// `label` defaults to the id and `kind` to `candidate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContenderSchema {
    #[serde(rename = "contender")]
    pub contenders: Vec<Contender>,
}

#[derive(Deserialize)]
struct RawSchema {
    #[serde(default)]
    contender: Vec<RawContender>,
}

#[derive(Deserialize)]
struct RawContender {
    id: String,
    label: Option<String>,
    kind: Option<ContenderKind>,
}

impl ContenderSchema {
    pub fn new(contenders: Vec<Contender>) -> Result<Self, CensusError> {
        if contenders.len() < 2 {
            return Err(CensusError::InvalidSchema(format!(
                "need at least 2 contenders, got {}",
                contenders.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &contenders {
            if c.id.is_empty() || c.id.contains(',') {
                return Err(CensusError::InvalidSchema(format!("bad contender id `{}`", c.id)));
            }
            if c.id == PARTICIPATION_ID || ["casilla_id", "stratum_id", "lista_nominal"].contains(&c.id.as_str()) {
                return Err(CensusError::InvalidSchema(format!("contender id `{}` is reserved", c.id)));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(CensusError::InvalidSchema(format!("duplicate contender id `{}`", c.id)));
            }
        }
        Ok(ContenderSchema { contenders })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.contenders.iter().map(|c| c.id.as_str())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

pub fn parse_schema(text: &str) -> Result<ContenderSchema, CensusError> {
    let raw: RawSchema = toml::from_str(text).map_err(|e| CensusError::InvalidSchema(e.to_string()))?;
    ContenderSchema::new(
        raw.contender
            .into_iter()
            .map(|c| Contender {
                label: c.label.unwrap_or_else(|| c.id.clone()),
                id: c.id,
                kind: c.kind.unwrap_or(ContenderKind::Candidate),
            })
            .collect(),
    )
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<ContenderSchema, CensusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CensusError::Io { path: path.into(), source })?;
    parse_schema(&text)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, CensusError> {
    let file = File::open(path).map_err(|source| CensusError::Io { path: path.into(), source })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(
    reader: &mut csv::Reader<File>,
    expected: &[&str],
    path: &Path,
) -> Result<(), CensusError> {
    let header = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let expected_str = expected.join(",");
    for (i, want) in expected.iter().enumerate() {
        if header.get(i) != Some(*want) {
            return Err(CensusError::MissingColumn {
                path: path.into(),
                column: want.to_string(),
                expected: expected_str,
            });
        }
    }
    if header.len() > expected.len() {
        return Err(CensusError::Csv {
            path: path.into(),
            row: 1,
            message: format!("unexpected column `{}`", &header[expected.len()]),
        });
    }
    Ok(())
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> CensusError {
    let row = e.position().map_or(row, |p| p.line() as usize);
    CensusError::Csv { path: path.into(), row, message: e.to_string() }
}

fn parse_count(field: &str, path: &Path, row: usize, column: &str) -> Result<u64, CensusError> {
    match field.parse::<i64>() {
        Ok(v) if v < 0 => Err(CensusError::NegativeCount { path: path.into(), row, column: column.into(), value: v }),
        Ok(v) => Ok(v as u64),
        Err(_) => Err(CensusError::BadInteger {
            path: path.into(),
            row,
            column: column.into(),
            value: field.into(),
        }),
    }
}

/// Reads `casilla_id,stratum_id,lista_nominal,<contender ids…>`.
///
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn load_census(path: impl AsRef<Path>, schema: &ContenderSchema) -> Result<Census, CensusError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let mut expected = vec!["casilla_id", "stratum_id", "lista_nominal"];
    expected.extend(schema.ids());
    check_header(&mut reader, &expected, path)?;

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| csv_error(path, 0, e))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let casilla_id = rec[0].to_string();
        if !seen.insert(casilla_id.clone()) {
            return Err(CensusError::DuplicateCasillaId { path: path.into(), row, casilla_id });
        }
        let lista_nominal = parse_count(&rec[2], path, row, "lista_nominal")?;
        let votes = expected[3..]
            .iter()
            .enumerate()
            .map(|(j, col)| parse_count(&rec[3 + j], path, row, col))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(CasillaRecord { casilla_id, stratum_id: rec[1].to_string(), lista_nominal, votes });
    }
    Census::from_records(schema.contenders.clone(), records)
}

pub fn write_census(census: &Census, path: impl AsRef<Path>) -> Result<(), CensusError> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| CensusError::Io { path: path.into(), source: std::io::Error::other(e) };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec!["casilla_id".to_string(), "stratum_id".into(), "lista_nominal".into()];
    header.extend(census.contender_ids().map(String::from));
    w.write_record(&header).map_err(io_err)?;
    for rec in census.casillas() {
        let mut row = vec![rec.casilla_id.clone(), rec.stratum_id.clone(), rec.lista_nominal.to_string()];
        row.extend(rec.votes.iter().map(u64::to_string));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| CensusError::Io { path: path.into(), source })
}

pub(super) fn check_received_rows(rows: &[ReceivedRow], census: &Census, path: &Path) -> Result<(), CensusError> {
    let mut seen = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        let row = i + 2;
        let Some(rec) = census.casilla(&r.casilla_id) else {
            return Err(CensusError::UnknownCasillaId { path: path.into(), row, casilla_id: r.casilla_id.clone() });
        };
        if rec.stratum_id != r.stratum_id {
            return Err(CensusError::StratumMismatch {
                path: path.into(),
                row,
                casilla_id: r.casilla_id.clone(),
                census: rec.stratum_id.clone(),
                received: r.stratum_id.clone(),
            });
        }
        if !seen.insert(r.casilla_id.as_str()) {
            return Err(CensusError::DuplicateCasillaId { path: path.into(), row, casilla_id: r.casilla_id.clone() });
        }
        if r.votes.len() != census.num_contenders() {
            return Err(CensusError::VoteArity {
                casilla_id: r.casilla_id.clone(),
                got: r.votes.len(),
                expected: census.num_contenders(),
            });
        }
    }
    Ok(())
}

/// Reads `casilla_id,stratum_id,<contender ids…>` and checks every row
/// against the census.
pub fn load_received(path: impl AsRef<Path>, census: &Census) -> Result<ReceivedSample, CensusError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let mut expected = vec!["casilla_id", "stratum_id"];
    expected.extend(census.contender_ids());
    check_header(&mut reader, &expected, path)?;

    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| csv_error(path, 0, e))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let votes = expected[2..]
            .iter()
            .enumerate()
            .map(|(j, col)| parse_count(&rec[2 + j], path, row, col))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ReceivedRow { casilla_id: rec[0].to_string(), stratum_id: rec[1].to_string(), votes });
    }
    check_received_rows(&rows, census, path)?;
    Ok(ReceivedSample { rows })
}

pub fn write_received(sample: &ReceivedSample, census: &Census, path: impl AsRef<Path>) -> Result<(), CensusError> {
    let path: PathBuf = path.as_ref().into();
    let io_err = |e: csv::Error| CensusError::Io { path: path.clone(), source: std::io::Error::other(e) };
    let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
    let mut header = vec!["casilla_id".to_string(), "stratum_id".into()];
    header.extend(census.contender_ids().map(String::from));
    w.write_record(&header).map_err(io_err)?;
    for r in &sample.rows {
        let mut row = vec![r.casilla_id.clone(), r.stratum_id.clone()];
        row.extend(r.votes.iter().map(u64::to_string));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| CensusError::Io { path: path.clone(), source })
}
