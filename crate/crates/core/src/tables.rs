//! Regenerates the reference tables: layering loss, the shortfall of a
//! published 10 x 3 design, per-layer powers, and efficiency curves.

use serde::{Deserialize, Serialize};

use crate::capacity::{layering_loss_db, CodeSpec, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::gain::{GainMatrix, PolarEntry};
use crate::optimizer::{shortfall_report, ShortfallReport};
use crate::power_alloc::{allocate_per_layer, efficiency_lower_bound, PowerAllocation};

/// Layering loss in dB, rows `L = 1..=max_layers`, columns `m = 2..=max_blocks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub rate: f64,
    pub layers: Vec<usize>,
    pub blocks: Vec<usize>,
    pub loss_db: Vec<Vec<f64>>,
}

pub fn loss_table(rate: f64, max_layers: usize, max_blocks: usize) -> Result<LossTable> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidSpec(format!("rate must be positive, got {rate}")));
    }
    if max_layers == 0 || max_blocks < 2 {
        return Err(Error::InvalidSpec("need at least one layer and two blocks".into()));
    }
    let layers: Vec<usize> = (1..=max_layers).collect();
    let blocks: Vec<usize> = (2..=max_blocks).collect();
    let loss_db = layers
        .iter()
        .map(|&l| blocks.iter().map(|&m| layering_loss_db(m, l, rate)).collect())
        .collect();
    Ok(LossTable {
        rate,
        layers,
        blocks,
        loss_db,
    })
}

/// Published `L = 3, M = 10, R = 5` design as `(magnitude, phase)` pairs.
pub const PUBLISHED_10X3: [[(f64, f64); 3]; 10] = [
    [(1.4747, 0.0), (2.6277, 0.0), (4.6819, 0.0)],
    [(3.5075, 0.0), (3.7794, 2.0510), (2.1009, -1.9486)],
    [(4.0648, 0.0), (3.1298, -0.9531), (2.1637, 2.5732)],
    [(3.2146, 0.0), (3.1322, 3.0765), (3.2949, 0.9132)],
    [(3.2146, 0.0), (3.3328, -1.6547), (3.0918, -1.4248)],
    [(3.2146, 0.0), (3.1049, 0.9409), (3.3206, 2.8982)],
    [(3.2146, 0.0), (3.3248, 1.2506), (3.1004, -0.2027)],
    [(3.2146, 0.0), (3.0980, -1.4196), (3.3270, 1.9403)],
    [(3.2146, 0.0), (3.2880, -2.9449), (3.1394, -1.9243)],
    [(3.2146, 0.0), (3.1795, 0.7839), (3.2492, 0.3413)],
];

/// Published shortfall percentages for that design, `[l][m]`.
pub const PUBLISHED_SHORTFALL_PCT: [[f64; 10]; 3] = [
    [0.0; 10],
    [0.00, 0.28, 1.23, 1.46, 1.39, 0.44, 0.59, 0.48, 0.16, 0.23],
    [0.00, 0.29, 1.23, 1.48, 1.40, 0.43, 0.54, 0.51, 0.15, 0.23],
];

/// The spec the published design targets: natural power `2^5 - 1`, unit noise.
pub fn published_spec() -> CodeSpec {
    CodeSpec {
        rate: 5.0,
        layers: 3,
        blocks: 10,
        power: 31.0,
        noise_var: 1.0,
    }
}

pub fn published_matrix() -> GainMatrix {
    let entries = PUBLISHED_10X3
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(mag, phase_rad)| PolarEntry { mag, phase_rad })
                .collect()
        })
        .collect();
    GainMatrix::from_polar(published_spec().power, entries).expect("constant is rectangular")
}

/// Shortfall of the published design under layered-bound thresholds.
pub fn shortfall_table() -> ShortfallReport {
    let spec = published_spec();
    shortfall_report(&published_matrix(), &spec, &ThresholdSchedule::layered_bound(&spec))
        .expect("published matrix matches its spec")
}

/// Per-layer powers for the given spec; `(2, 4, 5, 255)` is the reference case.
pub fn power_table(layer_rate: f64, layers: usize, blocks: usize, power: f64) -> Result<PowerAllocation> {
    allocate_per_layer(layer_rate, layers, blocks, power, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurves {
    pub base_rate: Vec<f64>,
    pub mid: Vec<f64>,
    pub linear: Vec<f64>,
}

/// Both efficiency lower bounds at `points` evenly spaced base rates in `(0, max_rate]`.
pub fn efficiency_curves(max_rate: f64, points: usize) -> Result<EfficiencyCurves> {
    if !(max_rate.is_finite() && max_rate > 0.0) || points == 0 {
        return Err(Error::InvalidSpec(format!(
            "need a positive max rate and at least one point, got {max_rate} and {points}"
        )));
    }
    let base_rate: Vec<f64> = (1..=points).map(|k| max_rate * k as f64 / points as f64).collect();
    let bounds: Vec<_> = base_rate.iter().map(|&b| efficiency_lower_bound(b)).collect();
    Ok(EfficiencyCurves {
        mid: bounds.iter().map(|b| b.mid).collect(),
        linear: bounds.iter().map(|b| b.linear).collect(),
        base_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_anchors() {
        let t = loss_table(5.0, 9, 10).unwrap();
        assert_eq!(t.loss_db.len(), 9);
        assert_eq!(t.loss_db[0].len(), 9);
        let at = |l: usize, m: usize| t.loss_db[l - 1][m - 2];
        assert!((at(1, 2) - 5.22).abs() < 0.005);
        assert!((at(2, 5) - 2.70).abs() < 0.005);
        assert!((at(3, 10) - 1.97).abs() < 0.005);
        assert!((at(5, 10) - 0.82).abs() < 0.005);
        assert_eq!(at(9, 9), 0.0);
    }

    #[test]
    fn published_rows_carry_power() {
        let g = published_matrix();
        for m in 0..10 {
            assert!((g.row_power(m) - 31.0).abs() < 0.01, "row {m}");
        }
    }

    #[test]
    fn published_shortfall_matches() {
        let r = shortfall_table();
        for m in 0..10 {
            for l in 0..3 {
                let want = PUBLISHED_SHORTFALL_PCT[l][m];
                assert!((r.shortfall_pct[m][l] - want).abs() <= 0.05, "({m},{l}) {}", r.shortfall_pct[m][l]);
            }
        }
    }

    #[test]
    fn efficiency_grid() {
        let c = efficiency_curves(4.0, 200).unwrap();
        assert_eq!(c.base_rate.len(), 200);
        assert_eq!(*c.base_rate.last().unwrap(), 4.0);
        assert!(efficiency_curves(0.0, 10).is_err());
    }
}
