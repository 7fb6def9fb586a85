mod common;

use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use patterntomo::homodyne::{outcome_probabilities, sample_histogram, MeasurementConfig, PovmSet};
use patterntomo::pattern::{
    objective_and_gradient, objective_hessian, predicted_frequencies, rho_from_x, ProbeSet,
    WeightVector,
};
use patterntomo::quantum::{
    coherent_ket, eig_hermitian, fidelity, fock_mixture, purity, wigner_at, ComplexMatrix,
    DensityMatrix, FockMixture,
};
use patterntomo::solver::{solve, SolveStatus, SolverOptions};

use common::*;

fn povm4() -> &'static PovmSet {
    static POVM: OnceLock<PovmSet> = OnceLock::new();
    POVM.get_or_init(|| small_povm(4, 0.8))
}

fn state(seed: u64, dim: usize) -> DensityMatrix {
    random_state(&mut ChaCha8Rng::seed_from_u64(seed), dim)
}

fn probes(seed: u64, n: usize, dim: usize) -> ProbeSet {
    ProbeSet::new(random_amplitudes(&mut ChaCha8Rng::seed_from_u64(seed), n, 1.2), dim).unwrap()
}

proptest! {
    #[test]
    fn fidelity_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), d in 2usize..7) {
        let (r, s) = (state(a, d), state(b, d));
        let f = fidelity(&r, &s).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f));
        prop_assert!((f - fidelity(&s, &r).unwrap()).abs() <= 1e-9);
        prop_assert!((fidelity(&r, &r).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn purity_is_bounded(a in any::<u64>(), d in 1usize..9) {
        let p = purity(&state(a, d));
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
        prop_assert!(p >= 1.0 / d as f64 - 1e-12);
    }

    #[test]
    fn eigenvalues_sum_to_trace(a in any::<u64>(), d in 1usize..9) {
        let rho = state(a, d);
        let eig = eig_hermitian(rho.matrix()).unwrap();
        prop_assert!((eig.eigenvalues.sum() - 1.0).abs() <= 1e-10);
        prop_assert!((eig.reconstruct() - rho.matrix()).map(|z| z.norm()).max() <= 1e-10);
    }

    #[test]
    fn fidelity_is_stable_under_small_perturbations(a in any::<u64>(), eps in 1e-6f64..1e-2) {
        let truth = fock_mixture(&FockMixture::default(), 8).unwrap();
        let g = state(a, 8);
        let dir = g.matrix() - ComplexMatrix::identity(8, 8) * Complex64::from(1.0 / 8.0);
        let size = dir.norm();
        let perturbed = truth.matrix() + dir * Complex64::from(eps / size);
        // project back onto states: clip negative eigenvalues and renormalize
        let eig = eig_hermitian(&perturbed).unwrap();
        let mut clipped = eig.map(|l| l.max(0.0));
        let tr = clipped.trace();
        clipped /= tr;
        let back = DensityMatrix::new((&clipped + clipped.adjoint()) * Complex64::from(0.5)).unwrap();
        prop_assert!(fidelity(&truth, &back).unwrap() >= 1.0 - 5.0 * eps);
    }

    #[test]
    fn wigner_of_fock_diagonal_states_is_radial(
        pops in prop::collection::vec(0.01f64..1.0, 1..8),
        r in 0.0f64..2.5,
        phi in 0.0f64..6.3,
        phi2 in 0.0f64..6.3,
    ) {
        let total: f64 = pops.iter().sum();
        let spec = FockMixture::diagonal(pops.iter().map(|p| p / total).collect());
        let rho = fock_mixture(&spec, 8).unwrap();
        let w1 = wigner_at(&rho, Complex64::from_polar(r, phi));
        let w2 = wigner_at(&rho, Complex64::from_polar(r, phi2));
        prop_assert!((w1 - w2).abs() <= 1e-9);
    }

    #[test]
    fn coherent_norm_grows_with_dimension(re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let alpha = Complex64::new(re, im);
        let norms: Vec<f64> = (1..30).map(|d| coherent_ket(alpha, d).norm_squared()).collect();
        prop_assert!(norms.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!(norms.iter().all(|n| *n <= 1.0 + 1e-12));
        prop_assert!((norms[28] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn probabilities_ignore_eigenvector_phases(a in any::<u64>(), phases in prop::collection::vec(0.0f64..6.3, 4)) {
        let rho = state(a, 4);
        let eig = eig_hermitian(rho.matrix()).unwrap();
        let mut v = eig.eigenvectors.clone();
        for (k, phi) in phases.iter().enumerate() {
            let z = Complex64::from_polar(1.0, *phi);
            for r in 0..4 {
                v[(r, k)] *= z;
            }
        }
        let diag = ComplexMatrix::from_diagonal(&eig.eigenvalues.map(Complex64::from));
        let again = &v * diag * v.adjoint();
        let again = DensityMatrix::new((&again + again.adjoint()) * Complex64::from(0.5)).unwrap();
        let p = outcome_probabilities(&rho, povm4()).unwrap();
        let q = outcome_probabilities(&again, povm4()).unwrap();
        prop_assert!(rel_dev(&p, &q, 1.0) <= 1e-12);
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), shots in 0u64..5000) {
        let rho = state(seed ^ 0x55, 4);
        let p = outcome_probabilities(&rho, povm4()).unwrap();
        let layout: &MeasurementConfig = povm4().config();
        let a = sample_histogram(&p, layout, shots, seed).unwrap();
        let b = sample_histogram(&p, layout, shots, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for block in a.counts.chunks(layout.bin_count) {
            prop_assert_eq!(block.iter().sum::<u64>(), shots);
        }
        if shots > 0 {
            for block in a.frequencies().chunks(layout.bin_count) {
                prop_assert!((block.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rho_from_x_has_unit_trace(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 5)) {
        let p = probes(seed, 6, 4);
        let rho = rho_from_x(&WeightVector::from_vec(x), &p).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn patterns_are_affine_and_convex(
        seed in any::<u64>(),
        x1 in prop::collection::vec(-2.0f64..2.0, 5),
        x2 in prop::collection::vec(-2.0f64..2.0, 5),
        t in 0.0f64..1.0,
    ) {
        let p = probes(seed, 6, 4);
        let patterns = exact_patterns(&p, &state(seed, 4), povm4());
        let (x1, x2) = (WeightVector::from_vec(x1), WeightVector::from_vec(x2));
        let rho = rho_from_x(&x1, &p).unwrap();
        let born: Vec<f64> = povm4().elements().iter().map(|pi| rho.matrix().dotc(pi).re).collect();
        let fhat = predicted_frequencies(&x1, &patterns).unwrap();
        prop_assert!(rel_dev(fhat.as_slice(), &born, 1.0) <= 1e-10);

        let f = |x: &WeightVector| objective_and_gradient(x, &patterns).unwrap().0;
        let mid = &x1 * t + &x2 * (1.0 - t);
        prop_assert!(f(&mid) <= t * f(&x1) + (1.0 - t) * f(&x2) + 1e-12);
        let hess = objective_hessian(&patterns);
        prop_assert!(hess.symmetric_eigenvalues().min() >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_iterates_stay_feasible(seed in any::<u64>(), n in 5usize..10) {
        let p = probes(seed, n, 3);
        let povm = small_povm(3, 0.8);
        let patterns = exact_patterns(&p, &state(seed.wrapping_add(1), 3), &povm);
        let opts = SolverOptions::default();
        let sol = solve(&patterns, &p, &opts).unwrap();
        prop_assert!(sol.trace.records().iter().all(|r| r.c > 0.0));
        prop_assert!((sol.rho.trace() - 1.0).abs() <= 1e-12);
        prop_assert!(sol.rho.min_eigenvalue() >= -1e-10);
        prop_assert!(sol.lambda >= 0.0);
        if sol.status == SolveStatus::Converged {
            prop_assert!(sol.residual <= opts.residual_tol && sol.mu <= opts.mu_tol);
        }
    }

    #[test]
    fn objective_does_not_increase_with_more_probes(seed in any::<u64>()) {
        let p = probes(seed, 12, 3);
        let povm = small_povm(3, 0.8);
        let patterns = exact_patterns(&p, &state(seed.wrapping_add(7), 3), &povm);
        let mut previous = f64::INFINITY;
        for n in [4, 6, 9, 12] {
            let sol = solve(&patterns.prefix(n).unwrap(), &p.prefix(n).unwrap(), &SolverOptions::default()).unwrap();
            prop_assert!(sol.objective <= previous + 1e-8, "N={} F={} previous {}", n, sol.objective, previous);
            previous = sol.objective;
        }
    }
}
