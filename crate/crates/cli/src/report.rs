//! Report emission and re-parsing: profile CSVs, error tables, eigenvalue
//! traces, and the metadata block that pins seeds and model hashes.
//!
//! Every numeric cell is written with 17 significant digits so reruns with
//! identical inputs produce byte-identical files and the error tables can
//! be recomputed losslessly from the emitted profiles.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use momclose::momsolver::{error_metrics, MomentField, TracePoint};

/// 17-significant-digit float formatting used in every CSV cell.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write `x, m_0..m_N` per node.
pub fn write_profile_csv(path: &Path, field: &MomentField) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "x")?;
    for k in 0..=field.n_order() {
        write!(w, ",m_{k}")?;
    }
    writeln!(w)?;
    for i in 0..field.grid().nx() {
        write!(w, "{}", fmt(field.grid().x(i)))?;
        for k in 0..=field.n_order() {
            write!(w, ",{}", fmt(field.component(k)[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse a profile CSV back into a moment field.
pub fn read_profile_csv(path: &Path) -> std::io::Result<MomentField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let n_cols = header.split(',').count();
    assert!(n_cols >= 2, "profile csv needs x plus at least one moment");
    let n_order = n_cols - 2;
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().expect("numeric cell"))
                .collect()
        })
        .collect();
    let nx = rows.len();
    let mut field = MomentField::zero(momclose::Grid1d::new(nx), n_order);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..=n_order {
            field.component_mut(k)[i] = row[k + 1];
        }
    }
    Ok(field)
}

/// One row of the error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub mode: String,
    pub t: f64,
    pub component: usize,
    pub rel_l2: f64,
    pub rel_linf: f64,
}

pub fn write_error_table(path: &Path, rows: &[ErrorRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "mode,t,component,rel_l2,rel_linf")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.mode,
            fmt(r.t),
            r.component,
            fmt(r.rel_l2),
            fmt(r.rel_linf)
        )?;
    }
    Ok(())
}

pub fn read_error_table(path: &Path) -> std::io::Result<Vec<ErrorRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        rows.push(ErrorRow {
            mode: cells[0].to_string(),
            t: cells[1].parse().unwrap(),
            component: cells[2].parse().unwrap(),
            rel_l2: cells[3].parse().unwrap(),
            rel_linf: cells[4].parse().unwrap(),
        });
    }
    Ok(rows)
}

pub fn write_eig_trace(path: &Path, trace: &[TracePoint]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,c_max,max_im")?;
    for p in trace {
        writeln!(w, "{},{},{}", fmt(p.t), fmt(p.max_speed), fmt(p.max_im))?;
    }
    Ok(())
}

/// `mode, t` keyed profile files present in a report directory.
pub fn profile_files(dir: &Path) -> std::io::Result<Vec<(String, f64, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_string(),
            None => continue,
        };
        if let Some(rest) = name.strip_prefix("profiles_") {
            if let Some(stem) = rest.strip_suffix(".csv") {
                if let Some((mode, t)) = stem.rsplit_once("_t") {
                    if let Ok(t) = t.parse::<f64>() {
                        found.push((mode.to_string(), t, path));
                    }
                }
            }
        }
    }
    found.sort_by(|a, b| (a.0.clone(), a.1).partial_cmp(&(b.0.clone(), b.1)).unwrap());
    Ok(found)
}

/// Recompute the error table of a report directory from its profile CSVs
/// (kinetic profiles are the reference) and compare with `errors.csv`.
///
/// Returns the recomputed rows; `Err` carries a human-readable mismatch
/// description.
pub fn recompute_error_table(dir: &Path) -> Result<Vec<ErrorRow>, String> {
    let files = profile_files(dir).map_err(|e| e.to_string())?;
    let mut references: BTreeMap<String, MomentField> = BTreeMap::new();
    for (mode, t, path) in &files {
        if mode == "kinetic" {
            references.insert(fmt(*t), read_profile_csv(path).map_err(|e| e.to_string())?);
        }
    }
    let mut rows = Vec::new();
    for (mode, t, path) in &files {
        if mode == "kinetic" {
            continue;
        }
        let reference = match references.get(&fmt(*t)) {
            Some(r) => r,
            None => continue,
        };
        let field = read_profile_csv(path).map_err(|e| e.to_string())?;
        let metrics = error_metrics(&field, reference);
        for (component, m) in metrics.iter().enumerate().take(2) {
            rows.push(ErrorRow {
                mode: mode.clone(),
                t: *t,
                component,
                rel_l2: m.rel_l2,
                rel_linf: m.rel_linf,
            });
        }
    }

    let stored = read_error_table(&dir.join("errors.csv")).map_err(|e| e.to_string())?;
    for row in &rows {
        let matching = stored.iter().find(|s| {
            s.mode == row.mode && s.component == row.component && (s.t - row.t).abs() < 1e-12
        });
        match matching {
            None => {
                return Err(format!(
                    "recomputed row ({}, t={}, m_{}) missing from errors.csv",
                    row.mode, row.t, row.component
                ))
            }
            Some(s) => {
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
                if !close(s.rel_l2, row.rel_l2) || !close(s.rel_linf, row.rel_linf) {
                    return Err(format!(
                        "error table mismatch for ({}, t={}, m_{}): stored ({}, {}) vs recomputed ({}, {})",
                        row.mode, row.t, row.component, s.rel_l2, s.rel_linf, row.rel_l2, row.rel_linf
                    ));
                }
            }
        }
    }
    Ok(rows)
}

/// Structured outcome of one closure-mode run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ModeOutcome {
    Completed {
        /// Largest |Im λ| seen across every spectrum scan of the run.
        max_im: f64,
        /// Largest wave speed seen.
        max_speed: f64,
    },
    BlewUp {
        time: f64,
    },
}

/// Metadata block pinning everything needed to reproduce a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub name: String,
    pub seed: u64,
    pub resolved_config: crate::config::ExperimentSpec,
    /// sha256 of each model file, keyed by mode.
    pub model_hashes: BTreeMap<String, String>,
    pub outcomes: BTreeMap<String, ModeOutcome>,
    /// Extra per-experiment annotations (snapped interfaces, symmetry
    /// residuals, ...).
    pub notes: BTreeMap<String, String>,
}

impl ReportMetadata {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable metadata");
        fs::write(dir.join("metadata.json"), text)
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(dir.join("metadata.json"))?;
        Ok(serde_json::from_str(&text).expect("valid metadata"))
    }
}
