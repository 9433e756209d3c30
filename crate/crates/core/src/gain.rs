//! The M x L complex combining matrix that defines a layered rateless code.
//!
//! Row `m` holds the weights used to build redundancy block `m` from the `L`
//! unit-power layer codewords, so every row carries squared norm `P`.
//! Entries are kept in polar form, which is also the on-disk JSON layout:
//!
//! ```json
//! {"rows":3,"cols":3,"power":63.0,"entries":[[{"mag":1.73,"phase_rad":0.0},...],...]}
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarEntry {
    pub mag: f64,
    pub phase_rad: f64,
}

impl PolarEntry {
    pub fn from_complex(z: Complex64) -> Self {
        let mag = z.norm();
        // exact zeros carry no phase
        let phase_rad = if mag == 0.0 { 0.0 } else { z.arg() };
        PolarEntry { mag, phase_rad }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.mag, self.phase_rad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub rows: usize,
    pub cols: usize,
    pub power: f64,
    pub entries: Vec<Vec<PolarEntry>>,
}

impl GainMatrix {
    /// Builds from row-major polar entries, checking the grid shape.
    pub fn from_polar(power: f64, entries: Vec<Vec<PolarEntry>>) -> Result<Self> {
        let rows = entries.len();
        let cols = entries.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("gain matrix must be non-empty".into()));
        }
        if let Some(bad) = entries.iter().position(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} entries, expected {cols}",
                bad + 1,
                entries[bad].len()
            )));
        }
        Ok(GainMatrix {
            rows,
            cols,
            power,
            entries,
        })
    }

    pub fn from_complex(power: f64, matrix: &DMatrix<Complex64>) -> Self {
        let entries = (0..matrix.nrows())
            .map(|m| {
                (0..matrix.ncols())
                    .map(|l| PolarEntry::from_complex(matrix[(m, l)]))
                    .collect()
            })
            .collect();
        GainMatrix {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            power,
            entries,
        }
    }

    /// Zero-based access.
    pub fn get(&self, m: usize, l: usize) -> Complex64 {
        self.entries[m][l].to_complex()
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |m, l| self.get(m, l))
    }

    pub fn magnitudes_sq(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.mag * e.mag).collect())
            .collect()
    }

    pub fn row_power(&self, m: usize) -> f64 {
        self.entries[m].iter().map(|e| e.mag * e.mag).sum()
    }

    /// Largest `|row power - P| / P` over all rows.
    pub fn row_power_residual(&self) -> f64 {
        (0..self.rows)
            .map(|m| (self.row_power(m) - self.power).abs() / self.power)
            .fold(0.0, f64::max)
    }

    /// `||G^H G - P I||_F / P`; only defined for square matrices.
    pub fn unitarity_residual(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let g = self.to_complex();
        let gram = g.adjoint() * &g;
        let target = DMatrix::<Complex64>::identity(self.cols, self.cols).scale(self.power);
        Some((gram - target).norm() / self.power)
    }

    /// Rotates rows and columns by unit phasors so the first row and first
    /// column are real and non-negative. Mutual information is unchanged.
    pub fn canonicalize(&mut self) {
        for l in 0..self.cols {
            let shift = self.entries[0][l].phase_rad;
            if shift != 0.0 {
                for m in 0..self.rows {
                    self.rotate(m, l, -shift);
                }
            }
        }
        for m in 1..self.rows {
            let shift = self.entries[m][0].phase_rad;
            if shift != 0.0 {
                for l in 0..self.cols {
                    self.rotate(m, l, -shift);
                }
            }
        }
        for e in self.entries[0].iter_mut() {
            e.phase_rad = 0.0;
        }
        for row in self.entries.iter_mut() {
            row[0].phase_rad = 0.0;
        }
    }

    pub fn canonicalized(&self) -> Self {
        let mut g = self.clone();
        g.canonicalize();
        g
    }

    /// Conjugates every entry.
    pub fn conjugate(&self) -> Self {
        let mut g = self.clone();
        for e in g.entries.iter_mut().flatten() {
            e.phase_rad = wrap_phase(-e.phase_rad);
        }
        g
    }

    fn rotate(&mut self, m: usize, l: usize, by: f64) {
        let e = &mut self.entries[m][l];
        if e.mag != 0.0 {
            e.phase_rad = wrap_phase(e.phase_rad + by);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gain matrix serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let raw: GainMatrix = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let declared = (raw.rows, raw.cols);
        let g = GainMatrix::from_polar(raw.power, raw.entries)?;
        if (g.rows, g.cols) != declared {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!(
                    "declared {}x{} but entries are {}x{}",
                    declared.0, declared.1, g.rows, g.cols
                ),
            });
        }
        Ok(g)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Maps an angle into (-pi, pi].
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}
