//! Data patterns and the least-squares fit.
//!
//! The signal state is written as `rho(x) = sum_i x_i sigma_i + (1 - sum_i x_i) sigma_N`
//! over `N` probe states, eliminating the last weight so the trace is one for
//! every `x` in `R^(N-1)`. By linearity the predicted signal frequencies are
//! `f_hat(x) = f_N + A x` with `A[l, i] = f_l^(i) - f_l^(N)`, and the objective
//! `F(x) = |f - f_hat(x)|^2` is an exact quadratic.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::homodyne::Histogram;
use crate::quantum::{coherent_ket, ComplexMatrix, DensityMatrix};

/// Free probe weights `x_1 .. x_(N-1)`; the last weight is implied.
pub type WeightVector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("need at least two probes, got {0}")]
    TooFewProbes(usize),
    #[error("probes {0} and {1} have coincident amplitudes")]
    DuplicateProbe(usize, usize),
    #[error("dimension must be positive")]
    EmptyDimension,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Coherent probe states `|alpha_k><alpha_k|` on the first `dim` Fock levels.
///
/// Kets are renormalized after truncation so every projector has unit trace;
/// the discarded Poisson mass is kept in `truncation_deficits`.
///
/// Small-amplitude probes have Fock components spanning many orders of
/// magnitude, so positivity is judged in a scaled basis: `basis_scale[n]` is
/// the largest `|<n|alpha_k>|` over the set, and `scaled_kets` are
/// `S^-1 |alpha_k>` with `S = diag(basis_scale)`. The matrix
/// `S^-1 rho S^-1` is positive definite exactly when `rho` is.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    dim: usize,
    amplitudes: Vec<Complex64>,
    kets: Vec<DVector<Complex64>>,
    projectors: Vec<ComplexMatrix>,
    truncation_deficits: Vec<f64>,
    basis_scale: Vec<f64>,
    scaled_kets: Vec<DVector<Complex64>>,
}

impl ProbeSet {
    pub fn new(amplitudes: Vec<Complex64>, dim: usize) -> Result<Self, PatternError> {
        if dim == 0 {
            return Err(PatternError::EmptyDimension);
        }
        if amplitudes.len() < 2 {
            return Err(PatternError::TooFewProbes(amplitudes.len()));
        }
        for i in 0..amplitudes.len() {
            for j in (i + 1)..amplitudes.len() {
                if (amplitudes[i] - amplitudes[j]).norm() <= 1e-9 {
                    return Err(PatternError::DuplicateProbe(i, j));
                }
            }
        }
        let mut kets = Vec::with_capacity(amplitudes.len());
        let mut deficits = Vec::with_capacity(amplitudes.len());
        for &alpha in &amplitudes {
            let raw = coherent_ket(alpha, dim);
            let norm_sq = raw.norm_squared();
            deficits.push(1.0 - norm_sq);
            kets.push(raw.unscale(norm_sq.sqrt()));
        }
        let basis_scale: Vec<f64> = (0..dim)
            .map(|n| {
                kets.iter()
                    .map(|k| k[n].norm())
                    .fold(0.0, f64::max)
                    .max(1e-150)
            })
            .collect();
        let scaled_kets = kets
            .iter()
            .map(|k| DVector::from_fn(dim, |n, _| k[n] / basis_scale[n]))
            .collect();
        let projectors = kets.iter().map(|k| k * k.adjoint()).collect();
        Ok(Self {
            dim,
            amplitudes,
            kets,
            projectors,
            truncation_deficits: deficits,
            basis_scale,
            scaled_kets,
        })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn kets(&self) -> &[DVector<Complex64>] {
        &self.kets
    }

    pub fn projectors(&self) -> &[ComplexMatrix] {
        &self.projectors
    }

    pub fn truncation_deficits(&self) -> &[f64] {
        &self.truncation_deficits
    }

    pub fn basis_scale(&self) -> &[f64] {
        &self.basis_scale
    }

    pub fn scaled_kets(&self) -> &[DVector<Complex64>] {
        &self.scaled_kets
    }

    /// `ln det S^2`, the shift between `ln det rho` and `ln det(S^-1 rho S^-1)`.
    pub fn log_det_scale(&self) -> f64 {
        2.0 * self.basis_scale.iter().map(|s| s.ln()).sum::<f64>()
    }

    pub fn state(&self, k: usize) -> DensityMatrix {
        DensityMatrix::from_hermitian_unchecked(self.projectors[k].clone())
    }

    /// The first `n` probes.
    pub fn prefix(&self, n: usize) -> Result<Self, PatternError> {
        if n < 2 {
            return Err(PatternError::TooFewProbes(n));
        }
        if n > self.len() {
            return Err(PatternError::ShapeMismatch(format!(
                "requested {n} probes from a set of {}",
                self.len()
            )));
        }
        Self::new(self.amplitudes[..n].to_vec(), self.dim)
    }

    /// Uniform start `x_i = 1/N`.
    pub fn uniform_weights(&self) -> WeightVector {
        WeightVector::from_element(self.len() - 1, 1.0 / self.len() as f64)
    }
}

/// `S^-1 rho(x) S^-1` in the probe-scaled basis of [`ProbeSet`].
pub fn scaled_rho_from_x(x: &WeightVector, probes: &ProbeSet) -> Result<ComplexMatrix, PatternError> {
    let n = probes.len();
    if x.len() + 1 != n {
        return Err(PatternError::ShapeMismatch(format!(
            "{} weights for {} probes",
            x.len(),
            n
        )));
    }
    let kets = probes.scaled_kets();
    let last = 1.0 - x.sum();
    let mut out = (&kets[n - 1] * kets[n - 1].adjoint()).scale(last);
    for (xi, k) in x.iter().zip(kets) {
        out += (k * k.adjoint()).scale(*xi);
    }
    Ok(crate::quantum::hermitian_part(&out))
}

/// `rho(x) = sum_(i<N) x_i sigma_i + (1 - sum x_i) sigma_N`.
pub fn rho_from_x(x: &WeightVector, probes: &ProbeSet) -> Result<DensityMatrix, PatternError> {
    let n = probes.len();
    if x.len() + 1 != n {
        return Err(PatternError::ShapeMismatch(format!(
            "{} weights for {} probes",
            x.len(),
            n
        )));
    }
    let last = 1.0 - x.sum();
    let mut rho = probes.projectors()[n - 1].scale(last);
    for (xi, sigma) in x.iter().zip(probes.projectors()) {
        rho += sigma.scale(*xi);
    }
    Ok(DensityMatrix::from_hermitian_unchecked(rho))
}

/// Probe and signal frequencies with the reduced design matrix.
#[derive(Debug, Clone)]
pub struct PatternMatrix {
    phase_count: usize,
    probe_frequencies: DMatrix<f64>,
    signal: DVector<f64>,
    reduced: DMatrix<f64>,
}

impl PatternMatrix {
    /// `probe_columns[k]` is the frequency vector of probe `k`. All vectors
    /// share one outcome layout of `phase_count` equal blocks.
    pub fn from_frequencies(
        probe_columns: &[Vec<f64>],
        signal: &[f64],
        phase_count: usize,
    ) -> Result<Self, PatternError> {
        let n = probe_columns.len();
        if n < 2 {
            return Err(PatternError::TooFewProbes(n));
        }
        let m = signal.len();
        if phase_count == 0 || !m.is_multiple_of(phase_count) {
            return Err(PatternError::ShapeMismatch(format!(
                "{m} outcomes do not split into {phase_count} phases"
            )));
        }
        if let Some((k, col)) = probe_columns.iter().enumerate().find(|(_, c)| c.len() != m) {
            return Err(PatternError::ShapeMismatch(format!(
                "probe {k} has {} outcomes, signal has {m}",
                col.len()
            )));
        }
        let probe_frequencies = DMatrix::from_fn(m, n, |l, k| probe_columns[k][l]);
        let signal = DVector::from_column_slice(signal);
        let last = probe_frequencies.column(n - 1).clone_owned();
        let reduced = DMatrix::from_fn(m, n - 1, |l, i| probe_frequencies[(l, i)] - last[l]);
        Ok(Self {
            phase_count,
            probe_frequencies,
            signal,
            reduced,
        })
    }

    pub fn outcome_count(&self) -> usize {
        self.signal.len()
    }

    pub fn probe_count(&self) -> usize {
        self.probe_frequencies.ncols()
    }

    pub fn phase_count(&self) -> usize {
        self.phase_count
    }

    /// `M x N` probe frequencies, one column per probe.
    pub fn probe_frequencies(&self) -> &DMatrix<f64> {
        &self.probe_frequencies
    }

    pub fn signal(&self) -> &DVector<f64> {
        &self.signal
    }

    /// `A[l, i] = f_l^(i) - f_l^(N)`.
    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    pub fn last_column(&self) -> DVector<f64> {
        self.probe_frequencies
            .column(self.probe_count() - 1)
            .clone_owned()
    }

    /// Patterns restricted to the first `n` probes.
    pub fn prefix(&self, n: usize) -> Result<Self, PatternError> {
        if n > self.probe_count() {
            return Err(PatternError::ShapeMismatch(format!(
                "requested {n} probes from {}",
                self.probe_count()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|k| self.probe_frequencies.column(k).iter().copied().collect())
            .collect();
        Self::from_frequencies(&cols, self.signal.as_slice(), self.phase_count)
    }

    /// CSV with columns `outcome, phase_index, bin_index, probe_0 .. probe_(N-1), signal`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        let bins = self.outcome_count() / self.phase_count;
        let mut header = vec![
            "outcome".to_string(),
            "phase_index".to_string(),
            "bin_index".to_string(),
        ];
        header.extend((0..self.probe_count()).map(|k| format!("probe_{k}")));
        header.push("signal".to_string());
        wtr.write_record(&header)?;
        for l in 0..self.outcome_count() {
            let mut row = vec![l.to_string(), (l / bins).to_string(), (l % bins).to_string()];
            row.extend(self.probe_frequencies.row(l).iter().map(|v| v.to_string()));
            row.push(self.signal[l].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-phase normalized frequencies of each probe histogram and the signal.
pub fn build_patterns(
    probe_histograms: &[Histogram],
    signal_histogram: &Histogram,
) -> Result<PatternMatrix, PatternError> {
    for (k, h) in probe_histograms.iter().enumerate() {
        if !h.same_layout(signal_histogram) || h.len() != signal_histogram.len() {
            return Err(PatternError::ShapeMismatch(format!(
                "probe histogram {k} has a different outcome layout from the signal"
            )));
        }
    }
    let cols: Vec<Vec<f64>> = probe_histograms.iter().map(|h| h.frequencies()).collect();
    PatternMatrix::from_frequencies(
        &cols,
        &signal_histogram.frequencies(),
        signal_histogram.phase_count,
    )
}

/// `f_hat = f_N + A x`.
pub fn predicted_frequencies(
    x: &WeightVector,
    patterns: &PatternMatrix,
) -> Result<DVector<f64>, PatternError> {
    if x.len() != patterns.reduced.ncols() {
        return Err(PatternError::ShapeMismatch(format!(
            "{} weights for {} free probes",
            x.len(),
            patterns.reduced.ncols()
        )));
    }
    Ok(patterns.last_column() + &patterns.reduced * x)
}

/// `F(x) = sum_l (f_l - f_hat_l)^2` and its gradient `-2 A^T (f - f_hat)`.
pub fn objective_and_gradient(
    x: &WeightVector,
    patterns: &PatternMatrix,
) -> Result<(f64, DVector<f64>), PatternError> {
    let residual = &patterns.signal - predicted_frequencies(x, patterns)?;
    let value = residual.norm_squared();
    let gradient = patterns.reduced.tr_mul(&residual) * -2.0;
    Ok((value, gradient))
}

/// `2 A^T A`, independent of `x`.
pub fn objective_hessian(patterns: &PatternMatrix) -> DMatrix<f64> {
    patterns.reduced.tr_mul(&patterns.reduced) * 2.0
}
