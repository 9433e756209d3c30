//! CSV views of reports and the run manifest written next to every output.
//!
//! Each CSV comes in two views. The full view prints every value with
//! Rust's shortest round-trip formatting, so parsing it back gives the same
//! `f64`. The rounded view uses two decimals and is for reading only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizer::ShortfallReport;
use crate::power_alloc::PowerAllocation;
use crate::simulator::SimReport;
use crate::tables::{EfficiencyCurves, LossTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Full,
    Rounded,
}

fn num(x: f64, view: View) -> String {
    match view {
        View::Full => format!("{x}"),
        View::Rounded => format!("{x:.2}"),
    }
}

fn row(out: &mut String, label: &str, values: impl IntoIterator<Item = f64>, view: View) {
    out.push_str(label);
    for v in values {
        out.push(',');
        out.push_str(&num(v, view));
    }
    out.push('\n');
}

fn block_header(first: &str, from: usize, to: usize) -> String {
    let mut h = first.to_string();
    for m in from..=to {
        let _ = write!(h, ",m={m}");
    }
    h.push('\n');
    h
}

/// Rows `L=k`, columns `m=2..`, loss in dB.
pub fn loss_csv(t: &LossTable, view: View) -> String {
    let mut out = block_header("layers", t.blocks[0], *t.blocks.last().unwrap());
    for (l, r) in t.layers.iter().zip(&t.loss_db) {
        row(&mut out, &format!("L={l}"), r.iter().copied(), view);
    }
    out
}

/// Rows are layers, columns blocks; entries are shortfall percentages.
pub fn shortfall_csv(r: &ShortfallReport, view: View) -> String {
    let mut out = block_header("layer", 1, r.blocks());
    for l in 0..r.layers() {
        row(&mut out, &format!("l={}", l + 1), r.shortfall_pct.iter().map(|m| m[l]), view);
    }
    out
}

/// Threshold gains in dB relative to block 1, then one row of powers per layer.
pub fn allocation_csv(a: &PowerAllocation, view: View) -> String {
    let mut out = block_header("layer", 1, a.blocks());
    row(&mut out, "gain_db", a.thresholds.relative_gains_db(), view);
    for l in 0..a.layers() {
        row(&mut out, &format!("l={}", l + 1), a.powers.iter().map(|m| m[l]), view);
    }
    out
}

pub fn efficiency_csv(c: &EfficiencyCurves, view: View) -> String {
    let mut out = String::from("base_rate,mid,linear\n");
    for i in 0..c.base_rate.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            num(c.base_rate[i], view),
            num(c.mid[i], view),
            num(c.linear[i], view)
        );
    }
    out
}

/// Empirical, analytic and relative-standard-error grids stacked, one row per `(grid, m)`.
pub fn sim_csv(r: &SimReport, view: View) -> String {
    let layers = r.analytic_sinr.first().map_or(0, Vec::len);
    let mut out = String::from("grid,m");
    for l in 1..=layers {
        let _ = write!(out, ",l={l}");
    }
    out.push('\n');
    let grids = [
        ("empirical", &r.empirical_sinr),
        ("analytic", &r.analytic_sinr),
        ("rel_std_err", &r.relative_std_error),
    ];
    for (name, grid) in grids {
        for (m, vals) in grid.iter().enumerate() {
            row(&mut out, &format!("{name},{}", m + 1), vals.iter().copied(), view);
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to regenerate a run's outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The parsed command line, replayable as-is.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub status: String,
    /// File name to sha256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Collects output files in memory, then writes them with a manifest.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.insert(name.to_string(), contents);
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v.as_bytes()))).collect()
    }

    pub fn write(&self, dir: &Path, manifest: &RunManifest) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_alloc::allocate_per_layer;

    #[test]
    fn full_view_round_trips() {
        let a = allocate_per_layer(2.0, 4, 5, 255.0, 1.0).unwrap();
        let csv = allocation_csv(&a, View::Full);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "layer,m=1,m=2,m=3,m=4,m=5");
        assert!(lines[1].starts_with("gain_db,0,"));
        let parsed: Vec<f64> = lines[3].split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        let want: Vec<f64> = a.powers.iter().map(|r| r[1]).collect();
        assert_eq!(parsed, want);
    }

    #[test]
    fn rounded_view() {
        let a = allocate_per_layer(2.0, 4, 5, 255.0, 1.0).unwrap();
        let csv = allocation_csv(&a, View::Rounded);
        assert!(csv.contains("gain_db,0.00,-12.30,-16.78,-19.29,-20.99"), "{csv}");
        assert!(csv.contains("l=1,3.00,40.80,48.98"), "{csv}");
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
