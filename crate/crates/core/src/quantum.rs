//! Finite-dimensional quantum states in a truncated Fock basis.
//!
//! Matrices are `nalgebra` complex matrices indexed by Fock number. Hermitian
//! eigen-analysis returns eigenvalues in ascending order; every function of a
//! density matrix (determinant, inverse, square root) goes through it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Square complex matrix in the Fock basis.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Entrywise tolerance on `A - A^dagger` accepted by [`DensityMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|Tr A - 1|` for user supplied states.
pub const TRACE_TOL: f64 = 1e-9;
/// Eigenvalues below this are set to zero before taking square roots.
pub const EIGEN_CLAMP: f64 = 1e-12;
/// Eigenvalues below `-PSD_TOL` make a state non-physical.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace}, expected 1")]
    TraceError { trace: f64 },
    #[error("state is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("Fock index {index} outside dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension must be at least 1")]
    EmptyDimension,
}

/// Largest entrywise deviation `|A - A^dagger|`.
pub fn hermitian_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replace `A` by `(A + A^dagger) / 2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Hermitian, unit-trace operator. Positivity is not part of the type since
/// solver iterates may leave the cone; check it with
/// [`DensityMatrix::min_eigenvalue`] where it matters.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, QuantumError> {
        if !matrix.is_square() {
            return Err(QuantumError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(QuantumError::EmptyDimension);
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian { deviation });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(QuantumError::TraceError { trace });
        }
        Ok(Self {
            matrix: hermitian_part(&matrix),
        })
    }

    /// Wrap a matrix that is Hermitian with unit trace by construction.
    pub(crate) fn from_hermitian_unchecked(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: hermitian_part(&matrix),
        }
    }

    /// Pure state `|psi><psi|` of a normalized ket.
    pub fn pure(ket: &DVector<Complex64>) -> Result<Self, QuantumError> {
        let norm = ket.norm();
        if ket.is_empty() {
            return Err(QuantumError::EmptyDimension);
        }
        let ket = ket.unscale(norm);
        Self::new(&ket * ket.adjoint())
    }

    /// Maximally mixed state `I / d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self, QuantumError> {
        if dim == 0 {
            return Err(QuantumError::EmptyDimension);
        }
        Ok(Self {
            matrix: ComplexMatrix::identity(dim, dim).unscale(dim as f64),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigen(&self) -> EigenDecomposition {
        eig_hermitian_unchecked(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues[0]
    }

    /// Probability of Fock level `n`.
    pub fn population(&self, n: usize) -> f64 {
        self.matrix[(n, n)].re
    }
}

/// Hermitian eigen-decomposition `A = V diag(eigenvalues) V^dagger` with
/// eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn determinant(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    /// `V f(Lambda) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let scaled = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| Complex64::from(f(l))),
        );
        let mut left = self.eigenvectors.clone();
        for (j, mut col) in left.column_iter_mut().enumerate() {
            col *= scaled[j];
        }
        left * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l)
    }

    /// Matrix inverse; `None` if an eigenvalue vanishes.
    pub fn inverse(&self) -> Option<ComplexMatrix> {
        if self.eigenvalues.iter().any(|&l| l == 0.0) {
            return None;
        }
        Some(self.map(|l| 1.0 / l))
    }

    /// Principal square root with eigenvalues below [`EIGEN_CLAMP`] set to 0.
    pub fn sqrt_clamped(&self) -> ComplexMatrix {
        self.map(|l| if l < EIGEN_CLAMP { 0.0 } else { l.sqrt() })
    }
}

pub fn eig_hermitian(a: &ComplexMatrix) -> Result<EigenDecomposition, QuantumError> {
    if !a.is_square() {
        return Err(QuantumError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let deviation = hermitian_deviation(a);
    if deviation > 1e-10 {
        return Err(QuantumError::NotHermitian { deviation });
    }
    Ok(eig_hermitian_unchecked(a))
}

pub(crate) fn eig_hermitian_unchecked(a: &ComplexMatrix) -> EigenDecomposition {
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Truncated coherent state: entry `n` is `exp(-|alpha|^2/2) alpha^n / sqrt(n!)`.
/// The ket is not renormalized, so its squared norm is the Poisson mass kept
/// by the truncation.
pub fn coherent_ket(alpha: Complex64, dim: usize) -> DVector<Complex64> {
    let mut ket = DVector::zeros(dim);
    if dim == 0 {
        return ket;
    }
    let mut amp = Complex64::from((-0.5 * alpha.norm_sqr()).exp());
    ket[0] = amp;
    for n in 1..dim {
        amp = amp * alpha / (n as f64).sqrt();
        ket[n] = amp;
    }
    ket
}

/// Coherence `value |row><col| + conj(value) |col><row|` of a Fock mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coherence {
    pub row: usize,
    pub col: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Fock-basis state description: level populations plus optional coherences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockMixture {
    pub populations: Vec<f64>,
    #[serde(default)]
    pub coherences: Vec<Coherence>,
}

impl FockMixture {
    pub fn diagonal(populations: Vec<f64>) -> Self {
        Self {
            populations,
            coherences: Vec::new(),
        }
    }

    /// `0.5|0><0| + 0.5|1><1| + gamma(|0><1| + |1><0|)`.
    pub fn vacuum_photon_coherent(gamma: f64) -> Self {
        Self {
            populations: vec![0.5, 0.5],
            coherences: vec![Coherence {
                row: 0,
                col: 1,
                re: gamma,
                im: 0.0,
            }],
        }
    }
}

impl Default for FockMixture {
    fn default() -> Self {
        Self::diagonal(vec![0.4, 0.6])
    }
}

/// Build a density matrix of dimension `dim` from a Fock mixture, padding
/// unspecified levels with zeros.
pub fn fock_mixture(spec: &FockMixture, dim: usize) -> Result<DensityMatrix, QuantumError> {
    if dim == 0 {
        return Err(QuantumError::EmptyDimension);
    }
    if spec.populations.len() > dim {
        return Err(QuantumError::IndexOutOfRange {
            index: spec.populations.len() - 1,
            dim,
        });
    }
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (n, &p) in spec.populations.iter().enumerate() {
        m[(n, n)] = Complex64::from(p);
    }
    for c in &spec.coherences {
        for &index in &[c.row, c.col] {
            if index >= dim {
                return Err(QuantumError::IndexOutOfRange { index, dim });
            }
        }
        if c.row == c.col {
            return Err(QuantumError::NotHermitian {
                deviation: c.im.abs(),
            });
        }
        let v = Complex64::new(c.re, c.im);
        m[(c.row, c.col)] += v;
        m[(c.col, c.row)] += v.conj();
    }
    DensityMatrix::new(m)
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QuantumError> {
    if rho.dim() != sigma.dim() {
        return Err(QuantumError::NotSquare {
            rows: rho.dim(),
            cols: sigma.dim(),
        });
    }
    let rho_eig = rho.eigen();
    let sigma_eig = sigma.eigen();
    for eig in [&rho_eig, &sigma_eig] {
        if eig.min() < -PSD_TOL {
            return Err(QuantumError::NotPsd {
                eigenvalue: eig.min(),
            });
        }
    }
    let root = rho_eig.sqrt_clamped();
    let sigma_psd = sigma_eig.map(|l| l.max(0.0));
    let inner = &root * sigma_psd * &root;
    let inner_eig = eig_hermitian_unchecked(&inner);
    Ok(inner_eig
        .eigenvalues
        .iter()
        .map(|&l| if l < EIGEN_CLAMP { 0.0 } else { l.sqrt() })
        .sum())
}

/// `Tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Generalized Laguerre polynomial `L_n^(k)(x)` by the three-term recurrence.
pub fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..n {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + k - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `<m|D(beta)|n>` of the displacement operator, exact (no truncation).
pub fn displacement_element(m: usize, n: usize, beta: Complex64) -> Complex64 {
    let x = beta.norm_sqr();
    let gauss = (-0.5 * x).exp();
    let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
    // sqrt(lo!/hi!)
    let ratio = ((lo + 1)..=hi).fold(1.0, |acc, j| acc / (j as f64).sqrt());
    let lag = laguerre(lo, hi - lo, x);
    let base = if m >= n { beta } else { -beta.conj() };
    base.powu((hi - lo) as u32) * (ratio * gauss * lag)
}

/// Wigner function `W(alpha) = 2 Tr[rho D(alpha) P D(alpha)^dagger]` with `P`
/// the photon-number parity. No `1/pi` factor, so `W(0) = 2 sum (-1)^n rho_nn`.
///
/// Uses `D(alpha) P D(alpha)^dagger = D(2 alpha) P` and closed-form displacement
/// elements, so the value is exact for a state supported on the first `d` levels.
/// The closed form loses relative accuracy for `|alpha|` much larger than `sqrt(d)`.
pub fn wigner_at(rho: &DensityMatrix, alpha: Complex64) -> f64 {
    let d = rho.dim();
    let beta = alpha * 2.0;
    let mut total = 0.0;
    for m in 0..d {
        for n in 0..d {
            let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
            // Tr[rho D P] = sum_{m,n} rho_nm <m|D|n> (-1)^n
            total += (rho.matrix()[(n, m)] * displacement_element(m, n, beta)).re * parity;
        }
    }
    2.0 * total
}
