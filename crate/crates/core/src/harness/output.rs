//! Plot-ready files. Every floating-point value is written with 17
//! significant digits so reruns produce byte-identical output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use super::report::Report;
use super::run::{RunResult, Snapshot};
use crate::error::Result;
use crate::series::{Series, TimeSeriesRecord};
use crate::wigner::WignerGrid;

pub const DISTRIBUTION_HEADER: &str = "p,weight";
pub const DENSITY_HEADER: &str = "theta,density";
pub const WIGNER_HEADER: &str = "theta_index,s_level,value";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_series(path: &Path, series: &Series) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{}", TimeSeriesRecord::CSV_HEADER)?;
    for r in &series.records {
        writeln!(f, "{}", r.csv_line())?;
    }
    f.flush()?;
    Ok(())
}

/// Momentum distribution; p in recoil units.
pub fn write_distribution(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{DISTRIBUTION_HEADER}")?;
    for w in &snap.momentum_distribution {
        writeln!(f, "{},{}", num(w.p), num(w.weight))?;
    }
    f.flush()?;
    Ok(())
}

/// Lab-frame θ-density on its equispaced grid over [0, 2π).
pub fn write_theta_density(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{DENSITY_HEADER}")?;
    let m = snap.theta_density.len();
    for (j, d) in snap.theta_density.iter().enumerate() {
        let theta = std::f64::consts::TAU * j as f64 / m as f64;
        writeln!(f, "{},{}", num(theta), num(*d))?;
    }
    f.flush()?;
    Ok(())
}

/// Metadata accompanying a dense Wigner CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WignerDescriptor {
    pub schema_version: u32,
    pub n_theta: usize,
    pub n_rows: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub theta_step: f64,
    pub pbar_spacing: f64,
    pub tau: f64,
    pub field_a: Complex64,
    /// Values are integrated over a momentum cell; the θ-marginal is the
    /// sum over rows and the total norm is Σ value · theta_step.
    pub value_convention: &'static str,
    pub csv: String,
}

impl WignerDescriptor {
    pub fn of(w: &WignerGrid, csv: &str) -> Self {
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            n_theta: w.n_theta(),
            n_rows: w.n_rows(),
            s_min: w.s_level(0),
            s_max: w.s_level(w.n_rows() - 1),
            theta_step: std::f64::consts::TAU / w.n_theta() as f64,
            pbar_spacing: w.pbar_spacing,
            tau: w.tau,
            field_a: w.field_a,
            value_convention: "cell-integrated",
            csv: csv.into(),
        }
    }
}

/// Dense grid, θ index fastest within each momentum row, plus a JSON
/// descriptor at `json_path`.
pub fn write_wigner(csv_path: &Path, json_path: &Path, w: &WignerGrid) -> Result<()> {
    let mut f = create(csv_path)?;
    writeln!(f, "{WIGNER_HEADER}")?;
    for r in 0..w.n_rows() {
        let s = w.s_level(r);
        for (j, v) in w.row(r).iter().enumerate() {
            writeln!(f, "{j},{s:.1},{}", num(*v))?;
        }
    }
    f.flush()?;
    let name = csv_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into());
    let desc = WignerDescriptor::of(w, &name);
    fs::write(json_path, serde_json::to_string_pretty(&desc)? + "\n")?;
    Ok(())
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, report.to_json()? + "\n")?;
    Ok(())
}

/// Writes the files a run asks for as `<dir>/<stem>_*.csv`; returns their paths.
pub fn write_run(dir: &Path, stem: &str, r: &RunResult) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if r.config.outputs.time_series {
        let p = dir.join(format!("{stem}_series.csv"));
        write_series(&p, &r.series)?;
        written.push(p);
    }
    if let (true, Some(snap)) = (r.config.outputs.snapshots, &r.snapshot) {
        if !snap.momentum_distribution.is_empty() {
            let p = dir.join(format!("{stem}_momentum.csv"));
            write_distribution(&p, snap)?;
            written.push(p);
        }
        let p = dir.join(format!("{stem}_density.csv"));
        write_theta_density(&p, snap)?;
        written.push(p);
        if let Some(w) = &snap.wigner {
            let csv = dir.join(format!("{stem}_wigner.csv"));
            let json = dir.join(format!("{stem}_wigner.json"));
            write_wigner(&csv, &json, w)?;
            written.extend([csv, json]);
        }
    }
    Ok(written)
}
