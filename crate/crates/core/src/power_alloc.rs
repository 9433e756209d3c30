//! Per-block, per-layer power allocation for the dithered-repetition code.
//!
//! Block 1 is an ordinary layered code. Every later block `m + 1` makes up,
//! layer by layer, the mutual information each layer loses when the channel
//! gain drops from `alpha_m` to `alpha_{m+1}`. The resulting powers satisfy
//! `sum_{m' <= m} log2(1 + SNR_{m',l}(alpha_m)) = R/L` for every `m` and `l`,
//! and each row sums to `P` by the chain rule.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::capacity::{CodeSpec, ThresholdRule, ThresholdSchedule};
use crate::error::{Error, Result};

/// Slack for round-off when checking that a shortfall is non-negative.
const SHORTFALL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub spec: CodeSpec,
    pub thresholds: ThresholdSchedule,
    pub layer_rate: f64,
    /// `p_{m,l}`, indexed `[m][l]` from zero.
    pub powers: Vec<Vec<f64>>,
    /// Mutual-information shortfall `Delta_{m,l}` each block made up, bits.
    pub shortfalls: Vec<Vec<f64>>,
}

/// Effective SNR of layer `l` (zero-based) in one block, lower layers as noise.
pub fn layer_snr(block_powers: &[f64], l: usize, gain_sq: f64, noise_var: f64) -> f64 {
    let below: f64 = block_powers[..l].iter().sum();
    gain_sq * block_powers[l] / (gain_sq * below + noise_var)
}

/// Post-MRC SNR of layer `l` after combining the given blocks at one gain.
pub fn post_mrc_snr(powers: &[Vec<f64>], l: usize, gain_sq: f64, noise_var: f64) -> f64 {
    powers.iter().map(|row| layer_snr(row, l, gain_sq, noise_var)).sum()
}

fn accumulated_rate(powers: &[Vec<f64>], l: usize, gain_sq: f64, noise_var: f64) -> f64 {
    powers
        .iter()
        .map(|row| layer_snr(row, l, gain_sq, noise_var).ln_1p() / LN_2)
        .sum()
}

/// Runs the recursion for `spec.blocks` blocks against ideal thresholds.
pub fn allocate_powers(spec: &CodeSpec) -> Result<PowerAllocation> {
    spec.validate()?;
    let mut alloc = PowerAllocation {
        spec: CodeSpec { blocks: 0, ..*spec },
        thresholds: ThresholdSchedule {
            rule: ThresholdRule::Ideal,
            gains_sq: Vec::new(),
        },
        layer_rate: spec.layer_rate(),
        powers: Vec::new(),
        shortfalls: Vec::new(),
    };
    alloc.extend_to(spec.blocks)?;
    Ok(alloc)
}

/// Convenience constructor taking the per-layer rate, as in `R/L`.
pub fn allocate_per_layer(
    layer_rate: f64,
    layers: usize,
    blocks: usize,
    power: f64,
    noise_var: f64,
) -> Result<PowerAllocation> {
    allocate_powers(&CodeSpec::new(layer_rate * layers as f64, layers, blocks, power, noise_var)?)
}

impl PowerAllocation {
    pub fn blocks(&self) -> usize {
        self.powers.len()
    }

    pub fn layers(&self) -> usize {
        self.spec.layers
    }

    /// Appends blocks until there are `blocks` of them. Existing blocks are
    /// left untouched, so the recursion is prefix-stable.
    pub fn extend_to(&mut self, blocks: usize) -> Result<()> {
        let spec = self.spec;
        let layers = spec.layers;
        let rate = self.layer_rate;
        for m in self.powers.len()..blocks {
            let full = CodeSpec {
                blocks: m + 1,
                ..spec
            };
            let gain_sq = crate::capacity::ideal_threshold_gain_sq(m + 1, &full);
            let mut row = vec![0.0; layers];
            let mut deltas = vec![0.0; layers];
            for l in 0..layers {
                let delta = rate - accumulated_rate(&self.powers, l, gain_sq, spec.noise_var);
                if delta < -SHORTFALL_SLACK {
                    return Err(Error::NegativeShortfall {
                        block: m + 1,
                        layer: l + 1,
                        delta,
                    });
                }
                let delta = delta.max(0.0);
                let below: f64 = row[..l].iter().sum();
                row[l] = (delta * LN_2).exp_m1() * (below + spec.noise_var / gain_sq);
                deltas[l] = delta;
            }
            self.powers.push(row);
            self.shortfalls.push(deltas);
            self.thresholds.gains_sq.push(gain_sq);
        }
        self.spec.blocks = self.powers.len();
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.powers.iter().map(|r| r.iter().sum()).collect()
    }

    /// Post-MRC SNR of every layer after `m` blocks at `alpha_m`, `[m][l]`.
    pub fn post_mrc_snr_grid(&self) -> Vec<Vec<f64>> {
        (0..self.blocks())
            .map(|m| {
                let gain_sq = self.thresholds.gains_sq[m];
                (0..self.layers())
                    .map(|l| post_mrc_snr(&self.powers[..=m], l, gain_sq, self.spec.noise_var))
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation serializes")
    }

    pub fn from_json(text: &str, path: &std::path::Path) -> Result<Self> {
        let alloc: PowerAllocation = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        alloc.check_shape().map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg,
        })?;
        Ok(alloc)
    }

    fn check_shape(&self) -> std::result::Result<(), String> {
        self.spec.validate().map_err(|e| e.to_string())?;
        let (m, l) = (self.spec.blocks, self.spec.layers);
        let grid_ok = |g: &Vec<Vec<f64>>| g.len() == m && g.iter().all(|r| r.len() == l);
        if !grid_ok(&self.powers) || !grid_ok(&self.shortfalls) || self.thresholds.gains_sq.len() != m {
            return Err(format!("allocation grids do not match {m} blocks x {l} layers"));
        }
        if self.powers.iter().flatten().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err("powers must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// `sum_{m' <= m} log2(1 + SNR_{m',l}(alpha_m)) - R/L` at every `(m, l)`.
pub fn verify_allocation(alloc: &PowerAllocation) -> Vec<Vec<f64>> {
    (0..alloc.blocks())
        .map(|m| {
            let gain_sq = alloc.thresholds.gains_sq[m];
            (0..alloc.layers())
                .map(|l| accumulated_rate(&alloc.powers[..=m], l, gain_sq, alloc.spec.noise_var) - alloc.layer_rate)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBounds {
    /// `ln2 b / (2^b - 1)`.
    pub mid: f64,
    /// `1 - (ln2 / 2) b`.
    pub linear: f64,
}

/// Lower bounds on the efficiency of a conservatively designed repetition
/// code whose layers run at base rate `b = R''/L`.
pub fn efficiency_lower_bound(base_rate: f64) -> EfficiencyBounds {
    EfficiencyBounds {
        mid: LN_2 * base_rate / (base_rate * LN_2).exp_m1(),
        linear: 1.0 - LN_2 / 2.0 * base_rate,
    }
}

/// Total rate `R'' = L log2(1 + ln2 R/L)` that is decodable after `m`
/// blocks at every ideal threshold `alpha_m`.
pub fn conservative_rate(rate: f64, layers: f64) -> f64 {
    layers * (LN_2 * rate / layers).ln_1p() / LN_2
}
