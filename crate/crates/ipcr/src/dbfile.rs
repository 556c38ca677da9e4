//! Plain-text database tables: a `d R M` header line, then one row of `d`
//! space-separated integers per sample.

use std::fmt::Write as _;
use std::path::Path;

use ipcr_core::model::ModelError;
use ipcr_core::{Database, FeatureVector};

#[derive(Debug, thiserror::Error)]
pub enum DbFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Model { line: usize, source: ModelError },
}

fn parse_err(line: usize, message: impl Into<String>) -> DbFileError {
    DbFileError::Parse { line, message: message.into() }
}

fn numbers<T: std::str::FromStr>(line: &str, no: usize) -> Result<Vec<T>, DbFileError> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(no, format!("not a non-negative integer: {t:?}"))))
        .collect()
}

pub fn parse_database(text: &str) -> Result<Database, DbFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (no, header) = lines.next().ok_or_else(|| parse_err(1, "missing \"d R M\" header"))?;
    let h: Vec<u64> = numbers(header, no)?;
    let [d, r, m] = h[..] else {
        return Err(parse_err(no, "header must be \"d R M\""));
    };
    let r = u32::try_from(r).map_err(|_| parse_err(no, "R too large"))?;
    let mut rows = Vec::with_capacity(m.min(1 << 20) as usize);
    for (no, line) in lines {
        let coords: Vec<u32> = numbers(line, no)?;
        if coords.len() as u64 != d {
            return Err(parse_err(no, format!("expected {d} values, found {}", coords.len())));
        }
        rows.push(FeatureVector::new(coords, r).map_err(|source| DbFileError::Model { line: no, source })?);
    }
    if rows.len() as u64 != m {
        return Err(parse_err(no, format!("header announces {m} rows, file has {}", rows.len())));
    }
    Database::new(d as usize, r, rows).map_err(|source| DbFileError::Model { line: no, source })
}

pub fn format_database(db: &Database) -> String {
    let mut out = format!("{} {} {}\n", db.dim(), db.range(), db.len());
    for row in db.rows() {
        let line: Vec<String> = row.coords().iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

pub fn load_database(path: &Path) -> Result<Database, DbFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| DbFileError::Io { path: path.display().to_string(), source })?;
    parse_database(&text)
}

pub fn save_database(path: &Path, db: &Database) -> Result<(), DbFileError> {
    std::fs::write(path, format_database(db)).map_err(|source| DbFileError::Io { path: path.display().to_string(), source })
}
