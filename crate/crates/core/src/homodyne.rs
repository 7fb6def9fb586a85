//! Simulated balanced homodyne detection with finite efficiency.
//!
//! Quadratures use the `hbar = 1` convention with vacuum variance 1/2, so the
//! Fock wavefunctions are Hermite functions. A detector of efficiency `eta` is
//! a beam splitter mixing the signal with vacuum: the recorded quadrature is
//! `sqrt(eta) y + sqrt(1 - eta) v` with `y` the ideal outcome and `v` a vacuum
//! quadrature. Binning that quantity over `bin_count` equal bins per phase
//! gives one POVM element per (phase, bin).
//!
//! Every element factors as `exp(i(n - m) theta) R_b[m, n]` with a real
//! matrix `R_b` shared by all phases, so the quadrature is done once per bin.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{gauss_hermite, gauss_legendre};
use crate::quantum::{ComplexMatrix, DensityMatrix};

/// Gauss-Legendre nodes per quadrature bin.
const BIN_NODES: usize = 16;
/// Gauss-Hermite nodes for the vacuum-noise convolution.
const NOISE_NODES: usize = 80;
/// Largest accepted per-phase deviation of `sum_b Pi_b` from the identity.
pub const COMPLETENESS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HomodyneError {
    #[error("invalid measurement configuration: {0}")]
    InvalidConfig(String),
    #[error("POVM completeness residual {residual:e} exceeds {COMPLETENESS_TOL:e}; widen the quadrature range or lower the dimension")]
    Quadrature { residual: f64 },
    #[error("negative probability {value:e} at outcome {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("dimension mismatch: state has dimension {state}, POVM has {povm}")]
    DimensionMismatch { state: usize, povm: usize },
    #[error("expected {expected} outcomes, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("malformed histogram file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    pub phase_count: usize,
    pub bin_count: usize,
    pub quadrature_range: [f64; 2],
    pub efficiency: f64,
    pub shots_per_phase: u64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            phase_count: 6,
            bin_count: 61,
            quadrature_range: [-6.0, 6.0],
            efficiency: 0.8,
            shots_per_phase: 200_000,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<(), HomodyneError> {
        let bad = |msg: &str| Err(HomodyneError::InvalidConfig(msg.to_string()));
        if self.phase_count == 0 {
            return bad("phase_count must be positive");
        }
        if self.bin_count < 2 {
            return bad("bin_count must be at least 2");
        }
        let [lo, hi] = self.quadrature_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("quadrature_range must satisfy x_min < x_max");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("efficiency must lie in (0, 1]");
        }
        Ok(())
    }

    /// Total number of outcomes `phase_count * bin_count`.
    pub fn outcome_count(&self) -> usize {
        self.phase_count * self.bin_count
    }

    pub fn bin_width(&self) -> f64 {
        (self.quadrature_range[1] - self.quadrature_range[0]) / self.bin_count as f64
    }

    /// `(x_left, x_right)` of bin `b`.
    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let lo = self.quadrature_range[0];
        let w = self.bin_width();
        let right = if b + 1 == self.bin_count {
            self.quadrature_range[1]
        } else {
            lo + (b + 1) as f64 * w
        };
        (lo + b as f64 * w, right)
    }

    /// Local-oscillator phase `k pi / phase_count`.
    pub fn phase(&self, k: usize) -> f64 {
        k as f64 * PI / self.phase_count as f64
    }
}

/// `<x|n>` for `n = 0..dim`, by the normalized Hermite-function recurrence
/// `psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}`.
pub fn hermite_functions(dim: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    if dim == 0 {
        return out;
    }
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if dim > 1 {
        out.push(2f64.sqrt() * x * psi0);
    }
    for n in 1..dim.saturating_sub(1) {
        let nf = n as f64;
        let next =
            (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Position-space Fock wavefunction `<x|n>`.
pub fn quadrature_wavefunction(n: usize, x: f64) -> f64 {
    hermite_functions(n + 1, x)[n]
}

#[derive(Debug, Clone)]
pub struct PovmSet {
    config: MeasurementConfig,
    dim: usize,
    elements: Vec<ComplexMatrix>,
    completeness_residual: f64,
}

impl PovmSet {
    pub fn config(&self) -> &MeasurementConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Outcome index of `(phase, bin)`.
    pub fn index(&self, phase: usize, bin: usize) -> usize {
        phase * self.config.bin_count + bin
    }

    /// `(phase, bin)` of outcome `l`.
    pub fn phase_bin(&self, l: usize) -> (usize, usize) {
        (l / self.config.bin_count, l % self.config.bin_count)
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, phase: usize, bin: usize) -> &ComplexMatrix {
        &self.elements[self.index(phase, bin)]
    }

    /// Largest entrywise deviation of any per-phase sum from the identity.
    pub fn completeness_residual(&self) -> f64 {
        self.completeness_residual
    }
}

/// Real matrices `R_b[m, n] = int dx_(bin b) int dy K(x|y) psi_m(y) psi_n(y)`.
fn bin_kernels(config: &MeasurementConfig, dim: usize) -> Vec<DMatrix<f64>> {
    let eta = config.efficiency;
    let noise_sd = (0.5 * (1.0 - eta)).sqrt();
    let legendre = gauss_legendre(BIN_NODES);
    let hermite = gauss_hermite(NOISE_NODES);
    let inv_sqrt_pi = 1.0 / PI.sqrt();

    // Density of the recorded quadrature at x, as an operator:
    // (1/sqrt(eta)) E_z[ A((x - s z) / sqrt(eta)) ], z ~ N(0, 1).
    let accumulate = |x: f64, weight: f64, acc: &mut DMatrix<f64>| {
        if noise_sd == 0.0 {
            let psi = hermite_functions(dim, x);
            add_outer(acc, &psi, weight);
            return;
        }
        let scale = weight * inv_sqrt_pi / eta.sqrt();
        for (&t, &w) in hermite.nodes.iter().zip(&hermite.weights) {
            let y = (x - noise_sd * 2f64.sqrt() * t) / eta.sqrt();
            let psi = hermite_functions(dim, y);
            add_outer(acc, &psi, scale * w);
        }
    };

    (0..config.bin_count)
        .map(|b| {
            let (lo, hi) = config.bin_edges(b);
            let mut acc = DMatrix::<f64>::zeros(dim, dim);
            for (x, w) in legendre.mapped(lo, hi) {
                accumulate(x, w, &mut acc);
            }
            (&acc + acc.transpose()) * 0.5
        })
        .collect()
}

fn add_outer(acc: &mut DMatrix<f64>, psi: &[f64], weight: f64) {
    let dim = psi.len();
    for n in 0..dim {
        let wn = weight * psi[n];
        for m in 0..dim {
            acc[(m, n)] += wn * psi[m];
        }
    }
}

/// Binned finite-efficiency homodyne POVM on the first `dim` Fock levels.
///
/// Element `(theta, b)` is `int_b dx int dy K(x|y) |y_theta><y_theta|` with a
/// Gaussian kernel of mean `sqrt(eta) y` and variance `(1 - eta)/2`. Mass that
/// falls outside the quadrature range is dropped.
pub fn build_povm(config: &MeasurementConfig, dim: usize) -> Result<PovmSet, HomodyneError> {
    config.validate()?;
    if dim == 0 {
        return Err(HomodyneError::InvalidConfig(
            "dimension must be positive".into(),
        ));
    }
    let kernels = bin_kernels(config, dim);

    let mut total = DMatrix::<f64>::zeros(dim, dim);
    for r in &kernels {
        total += r;
    }
    // Phases only rotate off-diagonal entries, so one residual covers all.
    let residual = (total - DMatrix::<f64>::identity(dim, dim)).amax();
    if !(residual <= COMPLETENESS_TOL) {
        return Err(HomodyneError::Quadrature { residual });
    }

    let mut elements = Vec::with_capacity(config.outcome_count());
    for k in 0..config.phase_count {
        let theta = config.phase(k);
        let rot: Vec<Complex64> = (0..dim)
            .map(|n| Complex64::from_polar(1.0, n as f64 * theta))
            .collect();
        for r in &kernels {
            elements.push(ComplexMatrix::from_fn(dim, dim, |m, n| {
                rot[n] * rot[m].conj() * r[(m, n)]
            }));
        }
    }
    Ok(PovmSet {
        config: config.clone(),
        dim,
        elements,
        completeness_residual: residual,
    })
}

/// Born-rule probabilities `Tr(Pi_l rho)` for every outcome. Round-off
/// negatives are clamped to zero and each phase block is renormalized.
pub fn outcome_probabilities(
    rho: &DensityMatrix,
    povm: &PovmSet,
) -> Result<Vec<f64>, HomodyneError> {
    if rho.dim() != povm.dim() {
        return Err(HomodyneError::DimensionMismatch {
            state: rho.dim(),
            povm: povm.dim(),
        });
    }
    let raw: Vec<f64> = povm
        .elements()
        .iter()
        .map(|pi| rho.matrix().dotc(pi).re.max(0.0))
        .collect();
    let bins = povm.config().bin_count;
    let mut probs = Vec::with_capacity(raw.len());
    for block in raw.chunks(bins) {
        let sum: f64 = block.iter().sum();
        probs.extend(block.iter().map(|p| if sum > 0.0 { p / sum } else { 0.0 }));
    }
    Ok(probs)
}

/// Stream seed for counter `index` under a master seed: one SplitMix64 step
/// from `master + index * 0x9E3779B97F4A7C15`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counts of a simulated homodyne record, laid out phase-major like [`PovmSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub phase_count: usize,
    pub bin_count: usize,
    pub quadrature_range: [f64; 2],
    pub shots_per_phase: u64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn layout(&self) -> MeasurementConfig {
        MeasurementConfig {
            phase_count: self.phase_count,
            bin_count: self.bin_count,
            quadrature_range: self.quadrature_range,
            shots_per_phase: self.shots_per_phase,
            ..MeasurementConfig::default()
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Relative frequencies, normalized per phase. A phase with no shots
    /// yields zeros.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.counts.len());
        for block in self.counts.chunks(self.bin_count) {
            let total: u64 = block.iter().sum();
            out.extend(block.iter().map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            }));
        }
        out
    }

    pub fn same_layout(&self, other: &Histogram) -> bool {
        self.phase_count == other.phase_count
            && self.bin_count == other.bin_count
            && self.quadrature_range == other.quadrature_range
    }

    /// CSV with columns `phase_index, bin_index, x_left, x_right, count, frequency`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), HomodyneError> {
        write_outcome_csv(
            writer,
            &self.layout(),
            &self.counts,
            &self.frequencies(),
        )
    }

    /// Inverse of [`Histogram::write_csv`]. Returns the histogram and the
    /// frequency column as stored in the file.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Histogram, Vec<f64>), HomodyneError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<(usize, usize, f64, f64, u64, f64)> = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        if rows.is_empty() {
            return Err(HomodyneError::Malformed("no rows".into()));
        }
        let phase_count = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let bin_count = rows.iter().map(|r| r.1).max().unwrap() + 1;
        if rows.len() != phase_count * bin_count {
            return Err(HomodyneError::Malformed(format!(
                "{} rows for {} phases x {} bins",
                rows.len(),
                phase_count,
                bin_count
            )));
        }
        let mut counts = vec![0; rows.len()];
        let mut freqs = vec![0.0; rows.len()];
        for r in &rows {
            let l = r.0 * bin_count + r.1;
            counts[l] = r.4;
            freqs[l] = r.5;
        }
        let x_min = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        let x_max = rows.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
        let shots_per_phase = counts[..bin_count].iter().sum();
        Ok((
            Histogram {
                phase_count,
                bin_count,
                quadrature_range: [x_min, x_max],
                shots_per_phase,
                counts,
            },
            freqs,
        ))
    }
}

/// Write one row per outcome; used both for sampled histograms and for
/// exact-probability records (whose counts are all zero).
pub fn write_outcome_csv<W: Write>(
    writer: W,
    config: &MeasurementConfig,
    counts: &[u64],
    frequencies: &[f64],
) -> Result<(), HomodyneError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "phase_index",
        "bin_index",
        "x_left",
        "x_right",
        "count",
        "frequency",
    ])?;
    for (l, (&count, &freq)) in counts.iter().zip(frequencies).enumerate() {
        let (k, b) = (l / config.bin_count, l % config.bin_count);
        let (lo, hi) = config.bin_edges(b);
        wtr.serialize((k, b, lo, hi, count, freq))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Independent multinomial draw of `shots_per_phase` outcomes for each phase
/// block of `probs`.
///
/// Phase `k` uses a ChaCha20 generator seeded with `seed` on stream `k`, so
/// phases are independent and reproducible. The draw is a chain of
/// conditional binomials over the bins in order.
pub fn sample_histogram(
    probs: &[f64],
    layout: &MeasurementConfig,
    shots_per_phase: u64,
    seed: u64,
) -> Result<Histogram, HomodyneError> {
    let m = layout.outcome_count();
    if probs.len() != m {
        return Err(HomodyneError::ShapeMismatch {
            expected: m,
            found: probs.len(),
        });
    }
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &p)| p < -1e-9) {
        return Err(HomodyneError::NegativeProbability { index, value });
    }
    let mut counts = vec![0u64; m];
    for (k, (block, out)) in probs
        .chunks(layout.bin_count)
        .zip(counts.chunks_mut(layout.bin_count))
        .enumerate()
    {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let clean: Vec<f64> = block.iter().map(|p| p.max(0.0)).collect();
        // tail[b] = sum of clean[b..]
        let mut tail = vec![0.0; clean.len() + 1];
        for b in (0..clean.len()).rev() {
            tail[b] = tail[b + 1] + clean[b];
        }
        let mut remaining = shots_per_phase;
        for b in 0..clean.len() {
            if remaining == 0 {
                break;
            }
            if b + 1 == clean.len() || tail[b + 1] <= 0.0 {
                out[b] = remaining;
                break;
            }
            let p = if tail[b] > 0.0 {
                (clean[b] / tail[b]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let draw = Binomial::new(remaining, p)
                .map_err(|e| HomodyneError::InvalidConfig(e.to_string()))?
                .sample(&mut rng);
            out[b] = draw;
            remaining -= draw;
        }
    }
    Ok(Histogram {
        phase_count: layout.phase_count,
        bin_count: layout.bin_count,
        quadrature_range: layout.quadrature_range,
        shots_per_phase,
        counts,
    })
}
