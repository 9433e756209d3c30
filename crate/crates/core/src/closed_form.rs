//! Closed-form perfect gain matrices for two layers/two blocks and three
//! layers/three blocks.
//!
//! Both constructions are scaled unitary. They are derived at unit noise and
//! unit first threshold gain, where `P = 2^R - 1`, and then rescaled to the
//! requested power; every successive-decoding constraint depends only on
//! `|alpha|^2 P / sigma^2`, so the rescaled matrix is perfect at the
//! rescaled thresholds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::capacity::{CodeSpec, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::gain::GainMatrix;
use crate::optimizer::{shortfall_report, ShortfallReport};

/// Absolute slack on the triangle inequality before declaring nonexistence.
pub const TRIANGLE_TOLERANCE: f64 = 1e-9;

fn check_inputs(rate: f64, power: f64) -> Result<()> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidSpec("rate must be positive and finite".into()));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::InvalidSpec("power must be positive and finite".into()));
    }
    Ok(())
}

/// `P = 2^R - 1`: the power at which the first threshold gain is 1 with unit noise.
pub fn natural_power(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

/// The essentially unique perfect 2x2 code:
/// `sqrt(P / (2^{R/2} + 1)) [[1, 2^{R/4}], [2^{R/4}, -1]]`.
pub fn design_2x2(rate: f64, power: f64) -> Result<GainMatrix> {
    check_inputs(rate, power)?;
    let scale = (power / ((rate / 2.0).exp2() + 1.0)).sqrt();
    let off = (rate / 4.0).exp2() * scale;
    let g = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(scale, 0.0),
            Complex64::new(off, 0.0),
            Complex64::new(off, 0.0),
            Complex64::new(-scale, 0.0),
        ],
    );
    Ok(GainMatrix::from_complex(power, &g))
}

/// Largest rate with a perfect 3x3 code: `6 log2((3 + sqrt 5) / 2)`.
pub fn max_rate_3x3() -> f64 {
    6.0 * ((3.0 + 5f64.sqrt()) / 2.0).log2()
}

/// Side lengths of the phasor triangle `0 = sqrt(x) + e^{j t1} sqrt(q) + e^{j t2} x^{3/2}`.
fn triangle_sides(x: f64) -> (f64, f64, f64) {
    let q = x.powi(4) - x.powi(3) + x * x - x + 1.0;
    (x.sqrt(), q.sqrt(), x.powf(1.5))
}

/// Smallest triangle-inequality slack; negative means the phasors cannot close.
pub fn triangle_deficit(x: f64) -> f64 {
    let (a, b, c) = triangle_sides(x);
    (a + c - b).min(a + b - c).min(b + c - a)
}

/// Squared magnitudes of the 3x3 perfect code at natural scaling, `x = 2^{R/6}`.
pub fn magnitudes_sq_3x3(x: f64) -> [[f64; 3]; 3] {
    let d = x * x - 1.0;
    let e = x - 1.0;
    [
        [d, x * x * d, x.powi(4) * d],
        [x.powi(3) * d, (x.powi(5) + 1.0) * e, x * d],
        [x * x * (x * x - x + 1.0) * d, x * (x.powi(3) + 1.0) * e, (x.powi(3) + 1.0) * e],
    ]
}

/// The perfect 3x3 code, unique up to gauge and complex conjugation. The
/// returned solution has `theta_1` in `(0, pi]`; its conjugate is equally
/// valid.
pub fn design_3x3(rate: f64, power: f64) -> Result<GainMatrix> {
    check_inputs(rate, power)?;
    let x = (rate / 6.0).exp2();
    if triangle_deficit(x) < -TRIANGLE_TOLERANCE {
        return Err(Error::RateTooHigh {
            rate,
            max: max_rate_3x3(),
        });
    }
    let (side_a, side_b, side_c) = triangle_sides(x);
    let mag = magnitudes_sq_3x3(x).map(|row| row.map(f64::sqrt));

    // law of cosines on the phasor triangle
    let cos_supplement = (x.powi(4) - 2.0 * x.powi(3) + x * x + 1.0) / (2.0 * (x * side_b * side_b).sqrt());
    let theta1 = PI - cos_supplement.clamp(-1.0, 1.0).acos();
    let closing = -(Complex64::new(side_a, 0.0) + Complex64::from_polar(side_b, theta1)) / side_c;
    let theta2 = closing.arg();

    let r1 = [
        Complex64::new(mag[0][0], 0.0),
        Complex64::new(mag[0][1], 0.0),
        Complex64::new(mag[0][2], 0.0),
    ];
    let r2 = [
        Complex64::new(mag[1][0], 0.0),
        Complex64::from_polar(mag[1][1], theta1),
        Complex64::from_polar(mag[1][2], theta2),
    ];
    let r3 = orthogonal_complement(&r1, &r2);

    let natural = natural_power(rate);
    let norm3: f64 = r3.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let gauge = if r3[0].norm() > 0.0 {
        r3[0].conj() / r3[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let r3 = r3.map(|z| z * gauge * (natural.sqrt() / norm3));

    let s = (power / natural).sqrt();
    let g = DMatrix::from_fn(3, 3, |m, l| [r1, r2, r3][m][l] * s);
    Ok(GainMatrix::from_complex(power, &g))
}

/// The vector orthogonal (Hermitian inner product) to both `a` and `b`.
fn orthogonal_complement(a: &[Complex64; 3], b: &[Complex64; 3]) -> [Complex64; 3] {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    cross.map(|z| z.conj())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectionCheck {
    pub report: ShortfallReport,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluates the successive-decoding equalities of a square code at the
/// ideal thresholds. Passes when every relative deviation and the
/// unitarity residual are within `tol`.
pub fn validate_perfect(g: &GainMatrix, spec: &CodeSpec, tol: f64) -> Result<PerfectionCheck> {
    if spec.layers != spec.blocks {
        return Err(Error::DimensionMismatch(format!(
            "perfect codes need L = M, got L={} M={}",
            spec.layers, spec.blocks
        )));
    }
    let report = shortfall_report(g, spec, &ThresholdSchedule::ideal(spec))?;
    let passed = report.max_abs_relative <= tol && report.unitarity_residual.is_none_or(|u| u <= tol);
    Ok(PerfectionCheck {
        report,
        tolerance: tol,
        passed,
    })
}
