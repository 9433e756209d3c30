//! Information-theoretic primitives for layered rateless codes.
//!
//! All rates are in bits per complex symbol. Channel gains are handled as
//! squared magnitudes `|alpha|^2`; the phase of the channel never enters any
//! of these formulas.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainMatrix;

/// The design problem: ceiling rate, layer count, range, power and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    /// Ceiling rate `R`, achieved when decoding from the first block.
    pub rate: f64,
    pub layers: usize,
    /// Range `M`: the number of redundancy blocks.
    pub blocks: usize,
    pub power: f64,
    pub noise_var: f64,
}

impl CodeSpec {
    pub fn new(rate: f64, layers: usize, blocks: usize, power: f64, noise_var: f64) -> Result<Self> {
        let spec = CodeSpec {
            rate,
            layers,
            blocks,
            power,
            noise_var,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit noise and `P = 2^R - 1`, so the first threshold gain is 1.
    pub fn natural(rate: f64, layers: usize, blocks: usize) -> Result<Self> {
        Self::new(rate, layers, blocks, rate.exp2() - 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad("rate must be positive and finite");
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return bad("power must be positive and finite");
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return bad("noise variance must be positive and finite");
        }
        if self.layers == 0 || self.blocks == 0 {
            return bad("layers and blocks must be at least 1");
        }
        Ok(())
    }

    /// Every layer carries the same rate `R / L`.
    pub fn layer_rate(&self) -> f64 {
        self.rate / self.layers as f64
    }
}

pub fn snr_from_gain(gain_sq: f64, spec: &CodeSpec) -> f64 {
    spec.power * gain_sq / spec.noise_var
}

/// Smallest `|alpha_m|^2` with `R = m log2(1 + |alpha_m|^2 P / sigma^2)`.
pub fn ideal_threshold_gain_sq(m: usize, spec: &CodeSpec) -> f64 {
    assert!(m >= 1, "block count starts at 1");
    ((spec.rate / m as f64).exp2() - 1.0) * spec.noise_var / spec.power
}

/// Threshold forced by the capacity of an `L`-input, `m`-output linear
/// channel. Equal to the ideal threshold while `m <= L`.
pub fn layered_threshold_gain_sq(m: usize, spec: &CodeSpec) -> f64 {
    assert!(m >= 1, "block count starts at 1");
    let layers = spec.layers;
    if m <= layers {
        return ideal_threshold_gain_sq(m, spec);
    }
    (spec.layer_rate().exp2() - 1.0) * (layers as f64 / m as f64) * spec.noise_var / spec.power
}

/// `10 log10(|alpha'_m|^2 / |alpha_m|^2)`; zero whenever `m <= L`.
pub fn layering_loss_db(m: usize, layers: usize, rate: f64) -> f64 {
    if m <= layers {
        return 0.0;
    }
    let spec = CodeSpec {
        rate,
        layers,
        blocks: m,
        power: 1.0,
        noise_var: 1.0,
    };
    10.0 * (layered_threshold_gain_sq(m, &spec) / ideal_threshold_gain_sq(m, &spec)).log10()
}

/// Limit of the layering loss as `m -> infinity`, as a linear power ratio.
pub fn asymptotic_layering_loss(rate: f64, layers: f64) -> f64 {
    let r = rate / layers;
    (r.exp2() - 1.0) / (r * LN_2)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdRule {
    Ideal,
    LayeredBound,
}

/// Threshold gains `|alpha_1|^2 > |alpha_2|^2 > ... > |alpha_M|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub rule: ThresholdRule,
    pub gains_sq: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new(rule: ThresholdRule, spec: &CodeSpec) -> Self {
        let f = match rule {
            ThresholdRule::Ideal => ideal_threshold_gain_sq,
            ThresholdRule::LayeredBound => layered_threshold_gain_sq,
        };
        ThresholdSchedule {
            rule,
            gains_sq: (1..=spec.blocks).map(|m| f(m, spec)).collect(),
        }
    }

    pub fn ideal(spec: &CodeSpec) -> Self {
        Self::new(ThresholdRule::Ideal, spec)
    }

    pub fn layered_bound(spec: &CodeSpec) -> Self {
        Self::new(ThresholdRule::LayeredBound, spec)
    }

    /// Ideal when `L >= M`, layered-bound otherwise.
    pub fn design(spec: &CodeSpec) -> Self {
        if spec.layers >= spec.blocks {
            Self::ideal(spec)
        } else {
            Self::layered_bound(spec)
        }
    }

    pub fn gains_db(&self) -> Vec<f64> {
        self.gains_sq.iter().map(|&g| linear_to_db(g)).collect()
    }

    /// Gains relative to the first threshold, in dB.
    pub fn relative_gains_db(&self) -> Vec<f64> {
        let first = self.gains_sq[0];
        self.gains_sq.iter().map(|&g| linear_to_db(g / first)).collect()
    }
}

/// `log2 det` of a Hermitian positive-definite matrix, via Cholesky.
pub fn log2_det_hpd(matrix: DMatrix<Complex64>) -> f64 {
    let chol = matrix
        .cholesky()
        .expect("I + a G G^H is Hermitian positive definite");
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.log2()).sum::<f64>()
}

/// `log2 det(I + (|alpha|^2 / sigma^2) G_{m,l} G_{m,l}^H)` for the upper-left
/// `m x l` block; zero for `l = 0`.
pub fn accumulated_log_det(g: &GainMatrix, m: usize, l: usize, gain_sq: f64, noise_var: f64) -> f64 {
    if l == 0 {
        return 0.0;
    }
    let a = gain_sq / noise_var;
    let sub = DMatrix::from_fn(m, l, |i, j| g.get(i, j));
    let k = DMatrix::<Complex64>::identity(m, m) + (&sub * sub.adjoint()).scale(a);
    log2_det_hpd(k)
}

/// Mutual information layer `l` accumulates from blocks `1..=m` at gain
/// `|alpha|^2`, with layers above `l` already removed and layers below
/// treated as Gaussian noise. Indices are one-based.
pub fn accumulated_layer_mi(
    g: &GainMatrix,
    m: usize,
    l: usize,
    gain_sq: f64,
    noise_var: f64,
) -> Result<f64> {
    if m == 0 || l == 0 || m > g.rows || l > g.cols {
        return Err(Error::DimensionMismatch(format!(
            "(m={m}, l={l}) outside a {}x{} gain matrix",
            g.rows, g.cols
        )));
    }
    Ok(accumulated_log_det(g, m, l, gain_sq, noise_var)
        - accumulated_log_det(g, m, l - 1, gain_sq, noise_var))
}

/// Accumulated per-layer mutual information for every block prefix at once.
///
/// Row `m` (zero-based) is evaluated at `gains_sq[m]`. Uses
/// `det(I_m + a G G^H) = det(I_l + a G^H G)`: the leading principal minors of
/// `I_L + a G_{m,L}^H G_{m,L}` give every layer of block prefix `m` from a
/// single `L x L` Cholesky factor.
pub fn layer_mi_grid(g: &DMatrix<Complex64>, gains_sq: &[f64], noise_var: f64) -> Vec<Vec<f64>> {
    let layers = g.ncols();
    assert!(gains_sq.len() <= g.nrows(), "more thresholds than blocks");
    let mut gram = DMatrix::<Complex64>::zeros(layers, layers);
    let mut grid = Vec::with_capacity(gains_sq.len());
    for (m, &gain_sq) in gains_sq.iter().enumerate() {
        let row = g.row(m);
        for i in 0..layers {
            let gi = row[i].conj();
            for j in 0..layers {
                gram[(i, j)] += gi * row[j];
            }
        }
        let a = gain_sq / noise_var;
        let k = DMatrix::<Complex64>::identity(layers, layers) + gram.scale(a);
        let chol = k.cholesky().expect("I + a G^H G is Hermitian positive definite");
        let l = chol.l_dirty();
        grid.push((0..layers).map(|i| 2.0 * l[(i, i)].re.log2()).collect());
    }
    grid
}

/// Decodable-rate thresholds `R, R k/(k+1), ..., R k/M` obtained by building
/// a code of ceiling rate `kR` and always collecting at least `k` blocks.
pub fn kappa_rate_schedule(rate: f64, kappa: f64, blocks: usize) -> Result<Vec<f64>> {
    let top = blocks as f64;
    if !(kappa >= 1.0 && kappa <= top) {
        return Err(Error::KappaOutOfRange { kappa, blocks });
    }
    let count = (top - kappa + 1e-12).floor() as usize + 1;
    Ok((0..count).map(|i| rate * kappa / (kappa + i as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(rate: f64, layers: usize, blocks: usize, power: f64) -> CodeSpec {
        CodeSpec::new(rate, layers, blocks, power, 1.0).unwrap()
    }

    #[test]
    fn snr_examples() {
        let s = spec(6.0, 3, 3, 63.0);
        assert_eq!(snr_from_gain(1.0, &s), 63.0);
        assert_eq!(snr_from_gain(0.0, &s), 0.0);
        assert_relative_eq!(snr_from_gain(1.0 / 9.0, &s), 7.0, max_relative = 1e-14);
    }

    #[test]
    fn ideal_thresholds() {
        let s = spec(6.0, 3, 3, 63.0);
        assert_relative_eq!(ideal_threshold_gain_sq(1, &s), 1.0, max_relative = 1e-14);
        assert_relative_eq!(ideal_threshold_gain_sq(2, &s), 1.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(ideal_threshold_gain_sq(3, &s), 1.0 / 21.0, max_relative = 1e-14);
        let s = spec(8.0, 4, 5, 255.0);
        let g2 = ideal_threshold_gain_sq(2, &s);
        assert_relative_eq!(g2, 1.0 / 17.0, max_relative = 1e-14);
        assert!((linear_to_db(g2) + 12.30).abs() < 0.005);
    }

    #[test]
    fn layered_threshold_matches_ideal_up_to_l() {
        let s = spec(5.0, 3, 10, 31.0);
        for m in 1..=3 {
            assert_eq!(layered_threshold_gain_sq(m, &s), ideal_threshold_gain_sq(m, &s));
        }
        for m in 4..=10 {
            assert!(layered_threshold_gain_sq(m, &s) > ideal_threshold_gain_sq(m, &s));
        }
    }

    #[test]
    fn table_one_anchors() {
        // L=1, m=2: 15.5 / (2^2.5 - 1) as a power ratio
        let want = 10.0 * (15.5 / (2f64.powf(2.5) - 1.0)).log10();
        assert_relative_eq!(layering_loss_db(2, 1, 5.0), want, max_relative = 1e-12);
        assert!((layering_loss_db(2, 1, 5.0) - 5.22).abs() < 0.005);
        assert!((layering_loss_db(10, 3, 5.0) - 1.97).abs() < 0.005);
        assert!((layering_loss_db(10, 5, 5.0) - 0.82).abs() < 0.005);
        assert_eq!(layering_loss_db(9, 9, 5.0), 0.0);
    }

    #[test]
    fn asymptotic_loss_examples() {
        assert!(linear_to_db(asymptotic_layering_loss(1.0, 2.0)) <= 0.78);
        assert!((linear_to_db(asymptotic_layering_loss(1.0, 1.0)) - 1.6).abs() < 0.05);
        assert!(linear_to_db(asymptotic_layering_loss(1e-9, 1.0)).abs() < 1e-6);
    }

    #[test]
    fn loss_approaches_limit() {
        for layers in 1..=9 {
            let limit = linear_to_db(asymptotic_layering_loss(5.0, layers as f64));
            assert!((layering_loss_db(10_000, layers, 5.0) - limit).abs() < 1e-3);
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_rate_schedule(6.0, 1.0, 3).unwrap(), vec![6.0, 3.0, 2.0]);
        assert_eq!(kappa_rate_schedule(6.0, 2.0, 4).unwrap(), vec![6.0, 4.0, 3.0]);
        assert_eq!(kappa_rate_schedule(6.0, 4.0, 4).unwrap(), vec![6.0]);
        assert_eq!(kappa_rate_schedule(6.0, 1.5, 3).unwrap().len(), 2);
        assert!(matches!(
            kappa_rate_schedule(6.0, 0.5, 4),
            Err(Error::KappaOutOfRange { .. })
        ));
        assert!(kappa_rate_schedule(6.0, 4.5, 4).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CodeSpec::new(0.0, 1, 1, 1.0, 1.0).is_err());
        assert!(CodeSpec::new(1.0, 0, 1, 1.0, 1.0).is_err());
        assert!(CodeSpec::new(1.0, 1, 0, 1.0, 1.0).is_err());
        assert!(CodeSpec::new(1.0, 1, 1, -1.0, 1.0).is_err());
        assert!(CodeSpec::new(1.0, 1, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn mi_dimension_errors() {
        let g = GainMatrix::from_complex(1.0, &DMatrix::from_element(2, 2, Complex64::new(0.5, 0.0)));
        assert!(accumulated_layer_mi(&g, 3, 1, 1.0, 1.0).is_err());
        assert!(accumulated_layer_mi(&g, 1, 0, 1.0, 1.0).is_err());
        assert!(accumulated_layer_mi(&g, 2, 2, 1.0, 1.0).is_ok());
    }
}
