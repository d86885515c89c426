//! CSV artifacts and their JSON metadata sidecars.
//!
//! Floats are written in shortest round-trip form, so every file reads back
//! bit-exactly.

use std::fs::File;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nmrom::hbm::HarmonicSet;
use nmrom::nma::{Eigenpair, ModalTable, TableProvenance};
use nmrom::reference::{EnvelopePoint, Trajectory};
use nmrom::slowflow::{SlowTrajectory, SynthesizedResponse};

use crate::error::{CliError, CliResult};

pub const UNITS: &str = "model units; time t, angular frequencies in rad per unit time, phases in rad";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to every run directory and table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub command: String,
    pub tool_version: String,
    pub core_version: String,
    pub config_hash: String,
    #[serde(default)]
    pub model_hash: Option<String>,
    #[serde(default)]
    pub table_hash: Option<String>,
    pub wall_clock_seconds: f64,
    pub units: String,
    pub files: Vec<String>,
    #[serde(default)]
    pub provenance: Option<TableProvenance>,
}

impl Metadata {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Metadata {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: nmrom::VERSION.to_string(),
            config_hash: config_hash.to_string(),
            model_hash: None,
            table_hash: None,
            wall_clock_seconds: 0.0,
            units: UNITS.to_string(),
            files: Vec::new(),
            provenance: None,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::incompatible(format!("{}: {e}", path.display())))
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a CSV file.
pub fn read_rows(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::incompatible(format!("{}: {e}", path.display())))?;
        if row.len() != header.len() {
            return Err(CliError::incompatible(format!("{}: ragged row", path.display())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::incompatible(format!("{}: no column `{name}`", path.display())))
}

// ---------------------------------------------------------------------------
// Modal table

/// Sidecar of a table file: `table.csv` → `table.meta.json`.
pub fn table_sidecar(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn table_header(n_harmonics: usize, n_dof: usize) -> Vec<String> {
    let mut h = vec!["a".to_string(), "omega0".to_string(), "delta".to_string()];
    for n in 0..=n_harmonics {
        for d in 0..n_dof {
            h.push(format!("re_psi_{n}_{d}"));
            h.push(format!("im_psi_{n}_{d}"));
        }
    }
    h
}

/// Writes the table CSV and its sidecar; returns the CSV's hash.
pub fn write_table(path: &Path, table: &ModalTable, meta: &Metadata) -> CliResult<String> {
    let (nh, n) = (table.n_harmonics(), table.n_dof());
    write_rows(
        path,
        &table_header(nh, n),
        table.entries().iter().map(|e| {
            let mut row = vec![e.a, e.omega0, e.delta];
            for psi in &e.harmonics.coefficients {
                for c in psi {
                    row.push(c.re);
                    row.push(c.im);
                }
            }
            row
        }),
    )?;
    let hash = sha256_hex(&std::fs::read(path)?);
    let mut meta = meta.clone();
    meta.provenance = Some(table.provenance.clone());
    meta.table_hash = Some(hash.clone());
    meta.files = vec![path.file_name().unwrap_or_default().to_string_lossy().into_owned()];
    write_json(&table_sidecar(path), &meta)?;
    Ok(hash)
}

/// Reads a table written by [`write_table`] and its sidecar.
pub fn read_table(path: &Path) -> CliResult<(ModalTable, Metadata)> {
    let meta: Metadata = read_json(&table_sidecar(path))?;
    let prov = meta
        .provenance
        .clone()
        .ok_or_else(|| CliError::incompatible(format!("{}: sidecar lacks table provenance", path.display())))?;
    let hash = sha256_hex(&std::fs::read(path)?);
    if meta.table_hash.as_deref() != Some(hash.as_str()) {
        return Err(CliError::incompatible(format!(
            "{}: contents do not match the hash in its sidecar",
            path.display()
        )));
    }
    let (header, rows) = read_rows(path)?;
    let (nh, n) = (prov.n_harmonics, prov.n_dof);
    if header != table_header(nh, n) {
        return Err(CliError::incompatible(format!("{}: unexpected table columns", path.display())));
    }
    let entries = rows
        .iter()
        .map(|row| {
            let mut h = HarmonicSet::zeros(nh, n);
            let mut k = 3;
            for psi in h.coefficients.iter_mut() {
                for c in psi.iter_mut() {
                    *c = Complex64::new(row[k], row[k + 1]);
                    k += 2;
                }
            }
            Eigenpair {
                a: row[0],
                omega0: row[1],
                delta: row[2],
                harmonics: h,
            }
        })
        .collect();
    Ok((ModalTable::new(entries, prov)?, meta))
}

pub fn write_backbone(path: &Path, table: &ModalTable) -> CliResult<()> {
    write_rows(
        path,
        &["a", "omega0", "delta"].map(String::from),
        table.entries().iter().map(|e| vec![e.a, e.omega0, e.delta]),
    )
}

pub fn write_manifold(path: &Path, amplitudes: &[f64], phases: &[f64], u: &[f64]) -> CliResult<()> {
    write_rows(
        path,
        &["a", "phi_abs", "u"].map(String::from),
        amplitudes
            .iter()
            .flat_map(|&a| phases.iter().map(move |&p| (a, p)))
            .zip(u)
            .map(|((a, p), &u)| vec![a, p, u]),
    )
}

// ---------------------------------------------------------------------------
// Trajectories

/// `t`, then `u_i`, `v_i` per DOF, then the Dahl states.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let first = traj
        .states
        .first()
        .ok_or_else(|| CliError::config("empty trajectory"))?;
    let (n, nd) = (first.u.len(), first.dahl_states.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("v{i}")));
    header.extend((0..nd).map(|i| format!("dahl{i}")));
    write_rows(
        path,
        &header,
        traj.t.iter().zip(&traj.states).map(|(&t, s)| {
            let mut row = Vec::with_capacity(1 + 2 * n + nd);
            row.push(t);
            row.extend(&s.u);
            row.extend(&s.v);
            row.extend(&s.dahl_states);
            row
        }),
    )
}

/// Peak envelopes as `dof, side, t, u` with `side` 1 (upper) or −1 (lower).
pub fn write_envelopes(path: &Path, envelopes: &[(usize, Vec<EnvelopePoint>, Vec<EnvelopePoint>)]) -> CliResult<()> {
    let rows = envelopes.iter().flat_map(|(d, upper, lower)| {
        let d = *d as f64;
        upper
            .iter()
            .map(move |p| vec![d, 1.0, p.t, p.u])
            .chain(lower.iter().map(move |p| vec![d, -1.0, p.t, p.u]))
    });
    write_rows(path, &["dof", "side", "t", "u"].map(String::from), rows)
}

pub fn read_upper_envelope(path: &Path, dof: usize) -> CliResult<Vec<EnvelopePoint>> {
    let (header, rows) = read_rows(path)?;
    if header != ["dof", "side", "t", "u"] {
        return Err(CliError::incompatible(format!("{}: not an envelope file", path.display())));
    }
    Ok(rows
        .iter()
        .filter(|r| r[0] == dof as f64 && r[1] > 0.0)
        .map(|r| EnvelopePoint { t: r[2], u: r[3] })
        .collect())
}

pub fn write_slow(path: &Path, traj: &SlowTrajectory) -> CliResult<()> {
    write_rows(
        path,
        &["t", "a", "theta", "omega", "phi"].map(String::from),
        traj.samples.iter().map(|s| vec![s.t, s.a, s.theta, s.omega, s.phi]),
    )
}

/// `t`, then `u`, `upper`, `lower` per synthesized DOF.
pub fn write_response(path: &Path, r: &SynthesizedResponse) -> CliResult<()> {
    let mut header = vec!["t".to_string()];
    for d in &r.dofs {
        header.push(format!("u{d}"));
        header.push(format!("upper{d}"));
        header.push(format!("lower{d}"));
    }
    write_rows(
        path,
        &header,
        r.t.iter().enumerate().map(|(k, &t)| {
            let mut row = vec![t];
            for j in 0..r.dofs.len() {
                row.extend([r.u[j][k], r.upper[j][k], r.lower[j][k]]);
            }
            row
        }),
    )
}

/// `(t, upper)` of one DOF from a response file.
pub fn read_response_upper(path: &Path, dof: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (header, rows) = read_rows(path)?;
    let (kt, ku) = (column(&header, "t", path)?, column(&header, &format!("upper{dof}"), path)?);
    Ok(rows.iter().map(|r| (r[kt], r[ku])).unzip())
}

pub fn write_table_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_rows(path, &header, rows)
}
