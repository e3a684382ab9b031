//! On-disk formats: PGM images, dataset manifests, pair dumps and prediction CSVs.

mod dataset;
mod pgm;

pub use dataset::{
    partition_checksums, read_dataset, read_manifest, write_dataset, ManifestRow, FACTORS_FILE, IMAGE_DIR,
    MANIFEST_FILE,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, PGM_MAXVAL};

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generative::{LatentPair, PseudoDr};
use crate::stats::{Group, PredictionRecord};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Latents and pseudo-labels of every pair; decoded images are omitted.
pub fn pairs_csv(pairs: &[LatentPair]) -> String {
    let dim = pairs.first().map_or(0, |p| p.w.len());
    let mut out = String::from("index,pseudo_dr,pseudo_ra,p_referable,p_darker");
    for k in 0..dim {
        let _ = write!(out, ",w{k}");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for (i, p) in pairs.iter().enumerate() {
        let dr = match p.pseudo_dr {
            Some(PseudoDr::Referable) => "referable",
            Some(PseudoDr::Healthy) => "healthy",
            None => "",
        };
        let ra = p.pseudo_ra.map(|g| g.code().to_string()).unwrap_or_default();
        let _ = write!(out, "{i},{dr},{ra},{},{}", opt(p.p_referable), opt(p.p_darker));
        for v in &p.w {
            let _ = write!(out, ",{v:.17e}");
        }
        out.push('\n');
    }
    out
}

pub const PREDICTION_HEADER: [&str; 5] = ["id", "group", "actual", "score", "predicted"];

/// Prediction dump: `id,group,actual,score,predicted` with scores to 6 decimals.
pub fn predictions_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a PredictionRecord)>) -> String {
    let mut out = PREDICTION_HEADER.join(",");
    out.push('\n');
    for (id, r) in rows {
        let _ = writeln!(
            out,
            "{id},{},{},{:.6},{}",
            r.group.code(),
            u8::from(r.actual),
            r.score,
            u8::from(r.predicted)
        );
    }
    out
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

/// Parses a prediction dump. Rows come back sorted by id so downstream
/// statistics do not depend on row order.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, PredictionRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(schema(1, "empty prediction file")),
        Some(h) => h.map_err(|e| schema(1, e.to_string()))?,
    };
    if header.iter().ne(PREDICTION_HEADER) {
        return Err(schema(1, format!("header must be `{}`", PREDICTION_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in records {
        let row = row.map_err(|e| schema(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != PREDICTION_HEADER.len() {
            return Err(schema(line, format!("expected 5 fields, found {}", row.len())));
        }
        let flag = |i: usize| match &row[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(schema(
                line,
                format!("{} must be 0 or 1, got `{other}`", PREDICTION_HEADER[i]),
            )),
        };
        let group = match &row[1] {
            "L" => Group::Lighter,
            "D" => Group::Darker,
            other => return Err(schema(line, format!("group must be L or D, got `{other}`"))),
        };
        let score: f64 = row[3]
            .parse()
            .ok()
            .filter(|s: &f64| (0.0..=1.0).contains(s))
            .ok_or_else(|| schema(line, format!("score must be a number in [0, 1], got `{}`", &row[3])))?;
        if row[0].is_empty() {
            return Err(schema(line, "empty id"));
        }
        out.push((
            row[0].to_string(),
            PredictionRecord {
                score,
                predicted: flag(4)?,
                actual: flag(2)?,
                group,
            },
        ));
    }
    if out.is_empty() {
        return Err(schema(2, "no prediction rows"));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(schema(0, format!("duplicate id `{}`", w[0].0)));
    }
    Ok(out)
}
