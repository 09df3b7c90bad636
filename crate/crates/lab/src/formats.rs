//! On-disk formats: spectral fields as JSON, trajectories as JSON lines,
//! tables as CSV and a SHA-256 manifest of everything written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nlsq_core::flow::FlowState;
use nlsq_core::{Mode, SpectralField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

/// `{"cutoff": N, "modes": [[kx, ky, re, im], ...]}` in ball order. Floats
/// are written in shortest round-trip form, so reading back is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub cutoff: u32,
    pub modes: Vec<(i32, i32, f64, f64)>,
}

impl FieldJson {
    pub fn from_field(u: &SpectralField) -> Self {
        FieldJson { cutoff: u.cutoff(), modes: u.iter().map(|(k, c)| (k.kx, k.ky, c.re, c.im)).collect() }
    }

    pub fn to_field(&self) -> Result<SpectralField, LabError> {
        let entries = self.modes.iter().map(|&(kx, ky, re, im)| (Mode::new(kx, ky), Complex64::new(re, im)));
        Ok(SpectralField::from_modes(self.cutoff, entries)?)
    }
}

pub fn field_to_json(u: &SpectralField) -> String {
    serde_json::to_string(&FieldJson::from_field(u)).expect("field serializes")
}

pub fn field_from_json(text: &str) -> Result<SpectralField, LabError> {
    serde_json::from_str::<FieldJson>(text)?.to_field()
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    time: f64,
    mass: f64,
    hamiltonian: f64,
    field: &'a FieldJson,
}

/// One JSON object per snapshot.
pub fn trajectory_lines(states: &[FlowState]) -> String {
    let mut out = String::new();
    for s in states {
        let field = FieldJson::from_field(&s.field);
        let line = TrajectoryLine { time: s.time, mass: s.mass, hamiltonian: s.hamiltonian, field: &field };
        out.push_str(&serde_json::to_string(&line).expect("snapshot serializes"));
        out.push('\n');
    }
    out
}

/// A CSV table held in memory until the run is written out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: ToString,
    {
        self.rows.push(row.into_iter().map(|x| x.to_string()).collect());
    }

    pub fn to_csv(&self) -> Result<String, LabError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Formats a float the way the JSON payload does.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `files` under `dir` and returns their manifest entries.
pub fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<ManifestEntry>, LabError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, bytes) in files {
        let path: PathBuf = dir.join(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(bytes)?;
        entries.push(ManifestEntry { file: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(["1", "x,y"]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n1,\"x,y\"\n");
    }
}
