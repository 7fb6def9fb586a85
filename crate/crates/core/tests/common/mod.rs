// Shared by several test targets; not every target uses every helper.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patterntomo::homodyne::{build_povm, outcome_probabilities, MeasurementConfig, PovmSet};
use patterntomo::pattern::{
    objective_and_gradient, objective_hessian, rho_from_x, PatternMatrix, ProbeSet, WeightVector,
};
use patterntomo::quantum::{ComplexMatrix, DensityMatrix};
use patterntomo::solver::{constraint_derivatives, constraint_value, solve, SolveStatus, SolverOptions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random full-rank state `G G^dagger / Tr` with complex Gaussian-ish entries.
pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut a = &g * g.adjoint();
    let tr = a.trace().re;
    a /= Complex64::from(tr);
    let a = (&a + a.adjoint()) * Complex64::from(0.5);
    DensityMatrix::new(a).unwrap()
}

pub fn random_amplitudes(rng: &mut ChaCha8Rng, n: usize, r_max: f64) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let r = rng.random_range(0.1..r_max);
            Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect()
}

/// A coarser POVM than the default, good enough for low dimensions.
pub fn small_povm(dim: usize, eta: f64) -> PovmSet {
    let config = MeasurementConfig {
        phase_count: 4,
        bin_count: 25,
        efficiency: eta,
        ..Default::default()
    };
    build_povm(&config, dim).unwrap()
}

/// Exact-probability patterns of `probes` against `signal`.
pub fn exact_patterns(probes: &ProbeSet, signal: &DensityMatrix, povm: &PovmSet) -> PatternMatrix {
    let cols: Vec<Vec<f64>> = (0..probes.len())
        .map(|k| outcome_probabilities(&probes.state(k), povm).unwrap())
        .collect();
    let f = outcome_probabilities(signal, povm).unwrap();
    PatternMatrix::from_frequencies(&cols, &f, povm.config().phase_count).unwrap()
}

/// Relative deviation `|a - b|_inf / max(|b|_inf, floor)`.
pub fn rel_dev(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    num / den
}

pub struct DerivativeCheck {
    pub gradient: f64,
    pub objective_hessian: f64,
    pub jacobian: f64,
    pub constraint_hessian: f64,
}

impl DerivativeCheck {
    pub fn worst(&self) -> f64 {
        self.gradient
            .max(self.objective_hessian)
            .max(self.jacobian)
            .max(self.constraint_hessian)
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Central finite differences of F, g, c and J at `x`, compared with the
/// analytic g, 2A^TA, J and B.
pub fn derivative_check(
    x: &WeightVector,
    probes: &ProbeSet,
    patterns: &PatternMatrix,
    m: f64,
) -> DerivativeCheck {
    let n = x.len();
    let h = 1e-5;
    let f = |x: &WeightVector| objective_and_gradient(x, patterns).unwrap();
    let c = |x: &WeightVector| constraint_value(&rho_from_x(x, probes).unwrap(), m);
    let jac = |x: &WeightVector| constraint_derivatives(x, probes, m).unwrap();

    let (_, g) = f(x);
    let d = jac(x);
    let hess_f = objective_hessian(patterns);

    let mut g_fd = Vec::with_capacity(n);
    let mut j_fd = Vec::with_capacity(n);
    let mut hf_fd = DMatrix::zeros(n, n);
    let mut b_fd = DMatrix::zeros(n, n);
    for i in 0..n {
        let xp = x + unit(n, i) * h;
        let xm = x - unit(n, i) * h;
        let (fp, gp) = f(&xp);
        let (fm, gm) = f(&xm);
        g_fd.push((fp - fm) / (2.0 * h));
        j_fd.push((c(&xp) - c(&xm)) / (2.0 * h));
        let col_f = (gp - gm) / (2.0 * h);
        let col_b = (jac(&xp).jacobian - jac(&xm).jacobian) / (2.0 * h);
        hf_fd.set_column(i, &col_f);
        b_fd.set_column(i, &col_b);
    }
    DerivativeCheck {
        gradient: rel_dev(&g_fd, g.as_slice(), 1e-12),
        objective_hessian: rel_dev(hf_fd.as_slice(), hess_f.as_slice(), 1e-12),
        jacobian: rel_dev(&j_fd, d.jacobian.as_slice(), 1e-12),
        constraint_hessian: rel_dev(b_fd.as_slice(), d.hessian.as_slice(), 1e-12),
    }
}

/// Random interior point near the uniform mixture, rejecting points where
/// `rho(x)` has an eigenvalue below `1e-3`.
pub fn interior_point(rng: &mut ChaCha8Rng, probes: &ProbeSet) -> WeightVector {
    let n = probes.len();
    loop {
        let x = WeightVector::from_fn(n - 1, |_, _| 1.0 / n as f64 + rng.random_range(-0.15..0.15));
        if rho_from_x(&x, probes).unwrap().min_eigenvalue() > 1e-3 {
            return x;
        }
    }
}

/// Worst derivative mismatch over `count` random d=3, N=5 instances.
pub fn derivative_study(count: usize, seed: u64) -> Vec<DerivativeCheck> {
    let mut rng = rng(seed);
    let povm = small_povm(3, 0.9);
    let m = 1.0 / 3.0;
    (0..count)
        .map(|_| {
            let probes = ProbeSet::new(random_amplitudes(&mut rng, 5, 1.2), 3).unwrap();
            let signal = random_state(&mut rng, 3);
            let patterns = exact_patterns(&probes, &signal, &povm);
            let x = interior_point(&mut rng, &probes);
            derivative_check(&x, &probes, &patterns, m)
        })
        .collect()
}

/// Smallest eigenvalue of a 2x2 Hermitian matrix, closed form.
fn min_eig_2x2(a: &ComplexMatrix) -> f64 {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let off = a[(0, 1)].norm();
    0.5 * (p + q) - (0.25 * (p - q) * (p - q) + off * off).sqrt()
}

pub struct GridComparison {
    pub solver_objective: f64,
    pub grid_objective: f64,
    pub status: SolveStatus,
    pub feasible_points: usize,
}

/// Solve a random d=2, N=3 instance and compare with a 100 x 100 grid over
/// the bounding box of the feasible weights.
pub fn grid_comparison(rng: &mut ChaCha8Rng, povm: &PovmSet) -> GridComparison {
    let probes = ProbeSet::new(random_amplitudes(rng, 3, 1.5), 2).unwrap();
    let signal = random_state(rng, 2);
    let patterns = exact_patterns(&probes, &signal, povm);
    let sol = solve(&patterns, &probes, &SolverOptions::default()).unwrap();

    let feasible = |x0: f64, x1: f64| {
        let x = WeightVector::from_vec(vec![x0, x1]);
        min_eig_2x2(rho_from_x(&x, &probes).unwrap().matrix()) >= 0.0
    };
    // bounding box from a coarse scan
    let (mut lo0, mut hi0, mut lo1, mut hi1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let coarse = 400;
    let span = 30.0;
    for i in 0..=coarse {
        for j in 0..=coarse {
            let x0 = -span + 2.0 * span * i as f64 / coarse as f64;
            let x1 = -span + 2.0 * span * j as f64 / coarse as f64;
            if feasible(x0, x1) {
                lo0 = lo0.min(x0);
                hi0 = hi0.max(x0);
                lo1 = lo1.min(x1);
                hi1 = hi1.max(x1);
            }
        }
    }
    let pad = 2.0 * span / coarse as f64;
    let (lo0, hi0, lo1, hi1) = (lo0 - pad, hi0 + pad, lo1 - pad, hi1 + pad);

    let mut best = f64::INFINITY;
    let mut count = 0;
    let steps = 100;
    for i in 0..steps {
        for j in 0..steps {
            let x0 = lo0 + (hi0 - lo0) * i as f64 / (steps - 1) as f64;
            let x1 = lo1 + (hi1 - lo1) * j as f64 / (steps - 1) as f64;
            if feasible(x0, x1) {
                count += 1;
                let x = WeightVector::from_vec(vec![x0, x1]);
                best = best.min(objective_and_gradient(&x, &patterns).unwrap().0);
            }
        }
    }
    GridComparison {
        solver_objective: sol.objective,
        grid_objective: best,
        status: sol.status,
        feasible_points: count,
    }
}

/// Loss channel `rho -> sum_k E_k rho E_k^dagger` with
/// `E_k = sum_n sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k><n|`.
pub fn lossy(rho: &DensityMatrix, eta: f64) -> DensityMatrix {
    let d = rho.dim();
    let binom = |n: usize, k: usize| -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        let mut e = ComplexMatrix::zeros(d, d);
        for n in k..d {
            let amp = (binom(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
            e[(n - k, n)] = Complex64::from(amp);
        }
        out += &e * rho.matrix() * e.adjoint();
    }
    DensityMatrix::new(out).unwrap()
}

/// Variance of a binned distribution from bin centres, with Sheppard's
/// correction `-w^2/12` for the bin width.
pub fn binned_variance(probs: &[f64], config: &MeasurementConfig) -> (f64, f64) {
    let centres: Vec<f64> = (0..config.bin_count)
        .map(|b| {
            let (lo, hi) = config.bin_edges(b);
            0.5 * (lo + hi)
        })
        .collect();
    let mean: f64 = probs.iter().zip(&centres).map(|(p, x)| p * x).sum();
    let second: f64 = probs.iter().zip(&centres).map(|(p, x)| p * x * x).sum();
    let raw = second - mean * mean;
    let w = config.bin_width();
    (raw, raw - w * w / 12.0)
}
