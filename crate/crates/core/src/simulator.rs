//! Monte Carlo check of dithered-repetition encoding with a successive
//! cancellation, maximal-ratio-combining decoder.
//!
//! Every block repeats the same `L` layer symbols, each scaled by
//! `sqrt(p_{m,l})` and multiplied by an i.i.d. dither. To decode layer `l`
//! from `D` blocks the decoder strips that layer's dither, then combines the
//! blocks with weights `alpha sqrt(p_{m,l}) / N_m`, where `N_m` is the
//! interference-plus-noise power of block `m`. Layers above `l` are removed
//! with their true symbols, so what is measured is the post-combining SINR,
//! not a base-code error rate.
//!
//! Symbols are processed in fixed-size chunks, each seeded from
//! `(seed, chunk index)`. Chunks run in parallel and their sums are reduced
//! in chunk order, so a report depends only on the configuration.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_alloc::{post_mrc_snr, PowerAllocation};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dither {
    /// `+1` or `-1` with equal probability.
    Binary,
    /// Uniform random phase.
    UnitPhase,
    /// All ones: plain repetition.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChannelGain {
    /// Row `m` of the report runs at the allocation's threshold `|alpha_m|^2`.
    Thresholds,
    /// Every row runs at this `|alpha|^2`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interference {
    /// Layers below the one being decoded act as noise.
    Undecoded,
    /// Every other layer is subtracted exactly; only noise remains.
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub allocation: PowerAllocation,
    pub num_symbols: usize,
    pub seed: u64,
    pub gain: ChannelGain,
    pub dither: Dither,
    /// Largest number of blocks combined; defaults to every block.
    pub max_blocks: Option<usize>,
    pub interference: Interference,
}

impl SimConfig {
    pub fn new(allocation: PowerAllocation, num_symbols: usize, seed: u64) -> Self {
        SimConfig {
            allocation,
            num_symbols,
            seed,
            gain: ChannelGain::Thresholds,
            dither: Dither::Binary,
            max_blocks: None,
            interference: Interference::Undecoded,
        }
    }

    pub fn depth(&self) -> usize {
        self.max_blocks.unwrap_or(self.allocation.blocks())
    }

    fn gain_sq(&self, m: usize) -> f64 {
        match self.gain {
            ChannelGain::Thresholds => self.allocation.thresholds.gains_sq[m],
            ChannelGain::Fixed(g) => g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.num_symbols == 0 {
            return bad("num_symbols must be at least 1".into());
        }
        let depth = self.depth();
        if depth == 0 || depth > self.allocation.blocks() {
            return bad(format!(
                "cannot combine {depth} blocks from an allocation with {}",
                self.allocation.blocks()
            ));
        }
        if let ChannelGain::Fixed(g) = self.gain {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("gain_sq must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Post-combining SINR after `m` blocks, `[m][l]`.
    pub empirical_sinr: Vec<Vec<f64>>,
    pub analytic_sinr: Vec<Vec<f64>>,
    /// Relative standard error of each empirical entry.
    pub relative_std_error: Vec<Vec<f64>>,
    /// Max normalized off-diagonal covariance of the dither-stripped
    /// residual across blocks, for the top layer at the deepest row.
    pub max_offdiag_corr: f64,
    pub seed_used: u64,
    pub num_symbols: usize,
}

impl SimReport {
    /// Largest `|empirical - analytic| / analytic`.
    pub fn max_relative_error(&self) -> f64 {
        self.empirical_sinr
            .iter()
            .flatten()
            .zip(self.analytic_sinr.iter().flatten())
            .map(|(e, a)| ((e - a) / a).abs())
            .fold(0.0, f64::max)
    }

    /// Whether every entry lies within `k` relative standard errors.
    pub fn within_std_errors(&self, k: f64) -> bool {
        self.empirical_sinr
            .iter()
            .flatten()
            .zip(self.analytic_sinr.iter().flatten())
            .zip(self.relative_std_error.iter().flatten())
            .all(|((e, a), se)| ((e - a) / a).abs() <= k * se)
    }
}

/// One channel use: layer symbols, dither `[m * L + l]` and noise per block.
#[derive(Debug, Clone)]
pub(crate) struct Draw {
    pub c: Vec<Complex64>,
    pub d: Vec<Complex64>,
    pub z: Vec<Complex64>,
}

fn complex_normal(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
}

fn draw_dither(rng: &mut ChaCha8Rng, dither: Dither) -> Complex64 {
    match dither {
        Dither::Binary => Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
        Dither::UnitPhase => Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)),
        Dither::Off => Complex64::new(1.0, 0.0),
    }
}

pub(crate) fn draw(rng: &mut ChaCha8Rng, blocks: usize, layers: usize, dither: Dither, noise_var: f64) -> Draw {
    let c = (0..layers).map(|_| complex_normal(rng, 1.0)).collect();
    let d = (0..blocks * layers).map(|_| draw_dither(rng, dither)).collect();
    let z = (0..blocks).map(|_| complex_normal(rng, noise_var)).collect();
    Draw { c, d, z }
}

pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Power sums of the combined statistic `s` against the true symbol `c`,
/// up to fourth order so the residual's spread can be measured rather
/// than assumed Gaussian. With `a = |s|^2`, `b = |c|^2`, `u = s c*`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    a: f64,
    b: f64,
    u: Complex64,
    aa: f64,
    ab: f64,
    bb: f64,
    uu: Complex64,
    au: Complex64,
    bu: Complex64,
}

impl Moments {
    fn push(&mut self, s: Complex64, c: Complex64) {
        let (a, b, u) = (s.norm_sqr(), c.norm_sqr(), s * c.conj());
        self.a += a;
        self.b += b;
        self.u += u;
        self.aa += a * a;
        self.ab += a * b;
        self.bb += b * b;
        self.uu += u * u;
        self.au += u * a;
        self.bu += u * b;
    }

    fn add(&mut self, o: &Moments) {
        self.a += o.a;
        self.b += o.b;
        self.u += o.u;
        self.aa += o.aa;
        self.ab += o.ab;
        self.bb += o.bb;
        self.uu += o.uu;
        self.au += o.au;
        self.bu += o.bu;
    }

    /// Least-squares fit `s = beta c + e` over `n` samples: returns the SINR
    /// `|beta|^2 / E|e|^2` (unit-power symbols) and its relative standard error.
    fn sinr(&self, n: f64) -> (f64, f64) {
        let beta = self.u / self.b;
        let g = beta.norm_sqr();
        // |e|^2 = a - 2 Re(beta* u) + g b, summed and squared-summed
        let e2 = (self.a - 2.0 * (beta.conj() * self.u).re + g * self.b) / n;
        let re_bu = |z: Complex64| (beta.conj() * z).re;
        let re_sq = 0.5 * (g * self.ab + (beta.conj() * beta.conj() * self.uu).re);
        let e4 = (self.aa + 4.0 * re_sq + g * g * self.bb - 4.0 * re_bu(self.au) + 2.0 * g * self.ab
            - 4.0 * g * re_bu(self.bu))
            / n;
        let spread = (e4 / (e2 * e2) - 1.0).max(0.0);
        let sinr = g / e2;
        (sinr, ((spread + 2.0 / sinr) / n).sqrt())
    }
}

/// Running sums for one chunk.
#[derive(Debug, Clone)]
struct Sums {
    // per (row, layer)
    moments: Vec<Moments>,
    // residual covariance across blocks for the correlation check
    cov: Vec<Complex64>,
    count: usize,
}

impl Sums {
    fn zeros(rows: usize, layers: usize, depth: usize) -> Self {
        Sums {
            moments: vec![Moments::default(); rows * layers],
            cov: vec![Complex64::new(0.0, 0.0); depth * depth],
            count: 0,
        }
    }

    fn add(&mut self, other: &Sums) {
        self.moments.iter_mut().zip(&other.moments).for_each(|(a, b)| a.add(b));
        self.cov.iter_mut().zip(&other.cov).for_each(|(a, b)| *a += b);
        self.count += other.count;
    }
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    layers: usize,
    depth: usize,
    amp: Vec<Vec<f64>>,
    noise_var: f64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let alloc = &cfg.allocation;
        Engine {
            cfg,
            layers: alloc.layers(),
            depth: cfg.depth(),
            amp: alloc.powers.iter().map(|r| r.iter().map(|p| p.sqrt()).collect()).collect(),
            noise_var: alloc.spec.noise_var,
        }
    }

    fn interference(&self, m: usize, l: usize, gain_sq: f64) -> f64 {
        match self.cfg.interference {
            Interference::Undecoded => gain_sq * self.cfg.allocation.powers[m][..l].iter().sum::<f64>() + self.noise_var,
            Interference::Removed => self.noise_var,
        }
    }

    fn run_chunk(&self, chunk: usize, len: usize) -> Sums {
        let (layers, depth) = (self.layers, self.depth);
        let mut rng = chunk_rng(self.cfg.seed, chunk);
        let mut sums = Sums::zeros(depth, layers, depth);
        // MRC weights per (row, block, layer)
        let weights: Vec<f64> = (0..depth)
            .flat_map(|row| {
                let g = self.cfg.gain_sq(row);
                (0..depth).flat_map(move |m| {
                    (0..layers).map(move |l| g.sqrt() * self.amp[m][l] / self.interference(m, l, g))
                })
            })
            .collect();
        let top_gain = self.cfg.gain_sq(depth - 1).sqrt();
        let mut residual = vec![Complex64::new(0.0, 0.0); depth];
        for _ in 0..len {
            let s = draw(&mut rng, depth, layers, self.cfg.dither, self.noise_var);
            for row in 0..depth {
                let alpha = self.cfg.gain_sq(row).sqrt();
                for l in 0..layers {
                    let mut combined = Complex64::new(0.0, 0.0);
                    for m in 0..=row {
                        let d = &s.d[m * layers..(m + 1) * layers];
                        let own = d[l] * self.amp[m][l] * s.c[l];
                        let below: Complex64 = match self.cfg.interference {
                            Interference::Undecoded => (0..l).map(|k| d[k] * self.amp[m][k] * s.c[k]).sum(),
                            Interference::Removed => Complex64::new(0.0, 0.0),
                        };
                        let v = (own + below) * alpha + s.z[m];
                        combined += weights[(row * depth + m) * layers + l] * d[l].conj() * v;
                    }
                    sums.moments[row * layers + l].push(combined, s.c[l]);
                }
            }
            let top = layers - 1;
            for (m, r) in residual.iter_mut().enumerate() {
                let d = &s.d[m * layers..(m + 1) * layers];
                let below: Complex64 = (0..top).map(|k| d[k] * self.amp[m][k] * s.c[k]).sum();
                *r = d[top].conj() * (below * top_gain + s.z[m]);
            }
            for i in 0..depth {
                for j in 0..depth {
                    sums.cov[i * depth + j] += residual[i] * residual[j].conj();
                }
            }
            sums.count += 1;
        }
        sums
    }

    fn run(&self) -> Sums {
        let n = self.cfg.num_symbols;
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<Sums> = (0..chunks)
            .into_par_iter()
            .map(|k| self.run_chunk(k, CHUNK.min(n - k * CHUNK)))
            .collect();
        let mut total = Sums::zeros(self.depth, self.layers, self.depth);
        for p in &parts {
            total.add(p);
        }
        total
    }
}

fn max_offdiag(cov: &[Complex64], depth: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..depth {
        for j in 0..depth {
            if i != j {
                let denom = (cov[i * depth + i].re * cov[j * depth + j].re).sqrt();
                worst = worst.max(cov[i * depth + j].norm() / denom);
            }
        }
    }
    worst
}

/// Simulates the encode/decode chain and compares post-MRC SINR per layer
/// against `sum_{m'} |alpha|^2 p_{m',l} / (|alpha|^2 (p_{m',1} + ... + p_{m',l-1}) + sigma^2)`.
pub fn simulate_dithered_repetition(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let engine = Engine::new(cfg);
    let sums = engine.run();
    let (layers, depth) = (engine.layers, engine.depth);
    let n = sums.count as f64;
    let mut empirical = vec![vec![0.0; layers]; depth];
    let mut analytic = vec![vec![0.0; layers]; depth];
    let mut rse = vec![vec![0.0; layers]; depth];
    let alloc = &cfg.allocation;
    for row in 0..depth {
        let g = cfg.gain_sq(row);
        for l in 0..layers {
            let (sinr, se) = sums.moments[row * layers + l].sinr(n);
            empirical[row][l] = sinr;
            rse[row][l] = se;
            analytic[row][l] = match cfg.interference {
                Interference::Undecoded => post_mrc_snr(&alloc.powers[..=row], l, g, alloc.spec.noise_var),
                Interference::Removed => {
                    g * alloc.powers[..=row].iter().map(|r| r[l]).sum::<f64>() / alloc.spec.noise_var
                }
            };
        }
    }
    Ok(SimReport {
        empirical_sinr: empirical,
        analytic_sinr: analytic,
        relative_std_error: rse,
        max_offdiag_corr: max_offdiag(&sums.cov, depth),
        seed_used: cfg.seed,
        num_symbols: cfg.num_symbols,
    })
}

/// Max normalized off-diagonal covariance of the top layer's dither-stripped
/// residual across the combined blocks; zero for a single block.
pub fn dither_decorrelation_check(cfg: &SimConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.depth() == 1 {
        return Ok(0.0);
    }
    Ok(simulate_dithered_repetition(cfg)?.max_offdiag_corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_alloc::allocate_per_layer;

    fn table_three() -> PowerAllocation {
        allocate_per_layer(2.0, 4, 5, 255.0, 1.0).unwrap()
    }

    #[test]
    fn transmitted_power_matches_p() {
        let alloc = table_three();
        let mut rng = chunk_rng(7, 0);
        let n = 100_000;
        let mut acc = [0.0; 5];
        let mut acc_sq = [0.0; 5];
        for _ in 0..n {
            let s = draw(&mut rng, 5, 4, Dither::Binary, 1.0);
            for m in 0..5 {
                let x: Complex64 = (0..4).map(|l| s.d[m * 4 + l] * alloc.powers[m][l].sqrt() * s.c[l]).sum();
                acc[m] += x.norm_sqr();
                acc_sq[m] += x.norm_sqr().powi(2);
            }
        }
        for m in 0..5 {
            let mean = acc[m] / n as f64;
            let sd = ((acc_sq[m] / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - 255.0).abs() < 3.0 * sd, "block {m}: {mean} (sd {sd})");
        }
    }

    #[test]
    fn dither_uncorrelated_with_symbols() {
        let mut rng = chunk_rng(11, 3);
        let n = 50_000;
        let (blocks, layers) = (3, 3);
        let mut corr = vec![Complex64::new(0.0, 0.0); blocks * layers * layers];
        for _ in 0..n {
            let s = draw(&mut rng, blocks, layers, Dither::Binary, 1.0);
            for (i, d) in s.d.iter().enumerate() {
                for (l, c) in s.c.iter().enumerate() {
                    corr[i * layers + l] += d * c.conj();
                }
            }
        }
        let bound = 3.0 / (n as f64).sqrt();
        for v in corr {
            assert!(v.norm() / (n as f64) < bound);
        }
    }

    #[test]
    fn single_layer_single_block() {
        let alloc = allocate_per_layer(2.0, 1, 1, 10.0, 1.0).unwrap();
        let mut cfg = SimConfig::new(alloc, 100_000, 3);
        cfg.gain = ChannelGain::Fixed(0.4);
        let r = simulate_dithered_repetition(&cfg).unwrap();
        assert!((r.analytic_sinr[0][0] - 4.0).abs() < 1e-12);
        let err = (r.empirical_sinr[0][0] - 4.0).abs() / 4.0;
        assert!(err < 3.0 * r.relative_std_error[0][0], "err {err}");
        assert_eq!(r.max_offdiag_corr, 0.0);
    }

    #[test]
    fn genie_removal_bound() {
        let mut cfg = SimConfig::new(table_three(), 100_000, 5);
        cfg.interference = Interference::Removed;
        cfg.max_blocks = Some(3);
        let r = simulate_dithered_repetition(&cfg).unwrap();
        let alloc = &cfg.allocation;
        for row in 0..3 {
            let g = alloc.thresholds.gains_sq[row];
            for l in 0..4 {
                let want = g * (0..=row).map(|m| alloc.powers[m][l]).sum::<f64>();
                assert!((r.analytic_sinr[row][l] - want).abs() < 1e-12);
                let err = (r.empirical_sinr[row][l] - want).abs() / want;
                assert!(err < 3.0 * r.relative_std_error[row][l], "({row},{l}) err {err}");
            }
        }
    }

    #[test]
    fn identical_seed_identical_report() {
        let mut cfg = SimConfig::new(table_three(), 10_000, 42);
        cfg.max_blocks = Some(2);
        let a = simulate_dithered_repetition(&cfg).unwrap();
        let b = simulate_dithered_repetition(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(a, simulate_dithered_repetition(&cfg).unwrap());
    }

    #[test]
    fn unit_phase_dither_also_decorrelates() {
        let mut cfg = SimConfig::new(table_three(), 100_000, 9);
        cfg.dither = Dither::UnitPhase;
        assert!(dither_decorrelation_check(&cfg).unwrap() < 0.02);
    }

    #[test]
    fn single_block_check_is_vacuous() {
        let mut cfg = SimConfig::new(table_three(), 1_000, 1);
        cfg.max_blocks = Some(1);
        assert_eq!(dither_decorrelation_check(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn config_errors() {
        let mut cfg = SimConfig::new(table_three(), 0, 1);
        assert!(cfg.validate().is_err());
        cfg.num_symbols = 10;
        cfg.max_blocks = Some(6);
        assert!(cfg.validate().is_err());
        cfg.max_blocks = None;
        cfg.gain = ChannelGain::Fixed(0.0);
        assert!(cfg.validate().is_err());
    }
}
