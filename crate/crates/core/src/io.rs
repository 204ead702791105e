//! Serialization helpers shared by the batch runner: JSON records and the
//! sweep table.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let text = serde_json::to_string_pretty(value).expect("serializable");
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Sweep table: (p, energy, root, k_est, flatness).
pub struct SweepRow {
    pub p: f64,
    pub energy: f64,
    pub root: f64,
    pub k_est: f64,
    pub flatness: f64,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "p,energy,root,k_est,flatness")?;
    for r in rows {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.p, r.energy, r.root, r.k_est, r.flatness
        )?;
    }
    Ok(())
}
