use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pgm::{decode_pgm, encode_pgm};
use super::sha256_hex;
use crate::error::{Error, Result};
use crate::pipeline::Partitions;
use crate::synthetic::{FactorVector, ImageSample, Provenance, RaLabel};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FACTORS_FILE: &str = "factors.csv";
pub const IMAGE_DIR: &str = "images";

/// One row of the dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub pool: String,
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub dr_level: Option<u8>,
    pub referable: bool,
    pub ra_label: String,
    pub ra_provenance: String,
    pub subgroup: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FactorRow {
    id: String,
    pigmentation: f64,
    dr_severity: u8,
    vessel_caliber: f64,
    disc_ratio: f64,
    lesion_seed: u64,
}

/// Pool name of every sample of `partitions`, in manifest order.
fn pooled(partitions: &Partitions) -> Vec<(&'static str, &ImageSample)> {
    let mut is_val = vec![false; partitions.train_baseline.len()];
    for &i in &partitions.val_indices {
        is_val[i] = true;
    }
    let mut out: Vec<(&'static str, &ImageSample)> = partitions
        .train_baseline
        .iter()
        .zip(&is_val)
        .map(|(s, &v)| (if v { "val" } else { "train" }, s))
        .collect();
    out.extend(partitions.test.iter().map(|s| ("test", s)));
    out.extend(partitions.leftover_rd.iter().map(|s| ("leftover", s)));
    out
}

/// Writes every pool as PGM files plus `manifest.csv`, and the hidden factors
/// to `factors.csv` for oracle use. Returns the manifest rows in order.
pub fn write_dataset(dir: &Path, partitions: &Partitions) -> Result<Vec<ManifestRow>> {
    let images = dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut rows = Vec::new();
    let mut factors = Vec::new();
    for (pool, s) in pooled(partitions) {
        let file = format!("{IMAGE_DIR}/{}.pgm", s.id);
        let bytes = encode_pgm(&s.pixels);
        let path = dir.join(&file);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        rows.push(ManifestRow {
            id: s.id.clone(),
            pool: pool.to_string(),
            file,
            width: s.pixels.width,
            height: s.pixels.height,
            dr_level: s.dr_level,
            referable: s.referable,
            ra_label: s.ra_label.to_string(),
            ra_provenance: s.ra_provenance.to_string(),
            subgroup: s.subgroup.to_string(),
            sha256: sha256_hex(&bytes),
        });
        if let Some(f) = s.oracle_factors() {
            factors.push(FactorRow {
                id: s.id.clone(),
                pigmentation: f.pigmentation,
                dr_severity: f.dr_severity,
                vessel_caliber: f.vessel_caliber,
                disc_ratio: f.disc_ratio,
                lesion_seed: f.lesion_seed,
            });
        }
    }
    write_csv(&dir.join(MANIFEST_FILE), &rows)?;
    write_csv(&dir.join(FACTORS_FILE), &factors)?;
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    read_csv(&dir.join(MANIFEST_FILE))
}

/// Reads a dataset written by [`write_dataset`], verifying every image checksum.
///
/// Pixels come back quantized to 16 bits.
pub fn read_dataset(dir: &Path) -> Result<Partitions> {
    let rows = read_manifest(dir)?;
    let factors: HashMap<String, FactorVector> = read_csv::<FactorRow>(&dir.join(FACTORS_FILE))?
        .into_iter()
        .map(|f| {
            let v = FactorVector {
                pigmentation: f.pigmentation,
                dr_severity: f.dr_severity,
                vessel_caliber: f.vessel_caliber,
                disc_ratio: f.disc_ratio,
                lesion_seed: f.lesion_seed,
            };
            (f.id, v)
        })
        .collect();
    let mut p = Partitions {
        train_baseline: Vec::new(),
        val_indices: Vec::new(),
        test: Vec::new(),
        leftover_rd: Vec::new(),
        oversample_factor: 1,
    };
    for row in rows {
        let path: PathBuf = dir.join(&row.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != row.sha256 {
            return Err(Error::Integrity(format!("checksum mismatch for {}", path.display())));
        }
        let pixels = decode_pgm(&bytes)?;
        if (pixels.width, pixels.height) != (row.width, row.height) {
            return Err(Error::Integrity(format!("{} has the wrong size", path.display())));
        }
        let ra: RaLabel = row.ra_label.parse()?;
        let prov: Provenance = row.ra_provenance.parse()?;
        let f = factors.get(&row.id).copied();
        let sample = ImageSample::restore(row.id.clone(), pixels, row.dr_level, ra, prov, f)?;
        if sample.referable != row.referable || sample.subgroup.to_string() != row.subgroup {
            return Err(Error::Integrity(format!("labels of `{}` are inconsistent", row.id)));
        }
        match row.pool.as_str() {
            "train" => p.train_baseline.push(sample),
            "val" => {
                p.val_indices.push(p.train_baseline.len());
                p.train_baseline.push(sample);
            }
            "test" => p.test.push(sample),
            "leftover" => p.leftover_rd.push(sample),
            other => return Err(Error::Integrity(format!("unknown pool `{other}`"))),
        }
    }
    p.check_disjoint()?;
    Ok(p)
}

fn hash_sample(h: &mut Sha256, s: &ImageSample) {
    h.update(s.id.as_bytes());
    h.update([0]);
    h.update(
        format!(
            "{}|{:?}|{}|{}|{}",
            s.subgroup, s.dr_level, s.referable, s.ra_label, s.ra_provenance
        )
        .as_bytes(),
    );
    h.update((s.pixels.width as u64).to_le_bytes());
    h.update((s.pixels.height as u64).to_le_bytes());
    for v in &s.pixels.data {
        h.update(v.to_le_bytes());
    }
}

/// SHA-256 per pool over ids, labels and exact pixel values.
pub fn partition_checksums(partitions: &Partitions) -> BTreeMap<String, String> {
    let mut hashers: BTreeMap<String, Sha256> = BTreeMap::new();
    for (pool, s) in pooled(partitions) {
        hash_sample(hashers.entry(pool.to_string()).or_default(), s);
    }
    hashers
        .into_iter()
        .map(|(k, h)| (k, hex::encode(h.finalize())))
        .collect()
}
