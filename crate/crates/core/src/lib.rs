//! Data-pattern quantum state tomography.
//!
//! A signal state is reconstructed as an affine mixture of known probe states
//! by fitting the detector's measured response patterns in the least-squares
//! sense, with positivity of the reconstructed density matrix enforced by a
//! primal-dual interior-point method on a determinant-power barrier. The
//! detector itself never has to be characterized: [`homodyne`] only exists to
//! generate synthetic data for the probes and the signal.
//!
//! Module map:
//!
//! * [`quantum`]: density matrices, coherent kets, eigen-analysis, fidelity,
//!   purity and Wigner function values.
//! * [`homodyne`]: binned lossy homodyne POVM, Born-rule probabilities and
//!   seeded multinomial histograms.
//! * [`pattern`]: probe sets, pattern matrices and the least-squares objective.
//! * [`solver`]: the interior-point solver.
//! * [`experiment`]: spiral probes, the end-to-end study and the purity sweep.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod homodyne;
pub mod pattern;
pub mod quadrature;
pub mod quantum;
pub mod solver;

pub use experiment::{
    run_experiment, spiral_probes, sweep_purity, wigner_grid, ExperimentConfig, ExperimentError,
    RunReport, SpiralParams,
};
pub use homodyne::{
    build_povm, outcome_probabilities, quadrature_wavefunction, sample_histogram, Histogram,
    HomodyneError, MeasurementConfig, PovmSet,
};
pub use pattern::{build_patterns, PatternError, PatternMatrix, ProbeSet, WeightVector};
pub use quantum::{
    coherent_ket, eig_hermitian, fidelity, fock_mixture, purity, wigner_at, ComplexMatrix,
    DensityMatrix, EigenDecomposition, FockMixture, QuantumError,
};
pub use solver::{solve, ConvergenceTrace, SolveStatus, Solution, SolverError, SolverOptions};
