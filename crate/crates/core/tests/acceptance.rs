//! Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
//! Exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use patterntomo::experiment::{run_experiment, sweep_purity, ExperimentConfig, RunReport};
use patterntomo::homodyne::{build_povm, outcome_probabilities, MeasurementConfig};
use patterntomo::quantum::{fock_mixture, FockMixture};
use patterntomo::solver::SolveStatus;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {tag} {name}: {}", o.detail);
}

fn count<T>(items: &[T], f: impl Fn(&T) -> bool) -> usize {
    items.iter().filter(|x| f(x)).count()
}

fn study(seeds: &[u64]) -> Vec<RunReport> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ExperimentConfig {
                seed,
                ..Default::default()
            };
            run_experiment(&cfg).expect("default study runs")
        })
        .collect()
}

fn criterion_1(reports: &[RunReport]) -> Outcome {
    let fids: Vec<f64> = reports
        .iter()
        .map(|r| r.record(60).and_then(|x| x.fidelity).unwrap_or(0.0))
        .collect();
    let mean = fids.iter().sum::<f64>() / fids.len() as f64;
    let best = fids.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: mean >= 0.98 && best >= 0.99,
        detail: format!("N=60 over {} seeds: mean fidelity {mean:.4}, best {best:.4}", fids.len()),
    }
}

fn criterion_2(reports: &[RunReport]) -> Outcome {
    let w0 = |n: usize| -> Vec<f64> {
        reports
            .iter()
            .map(|r| r.record(n).and_then(|x| x.wigner_origin).unwrap_or(f64::NAN))
            .collect()
    };
    let (w13, w16, w60) = (w0(13), w0(16), w0(60));
    let pos13 = count(&w13, |w| *w > 0.0);
    let neg16 = count(&w16, |w| *w < 0.0);
    let in60 = count(&w60, |w| (-0.55..=-0.25).contains(w));
    Outcome {
        pass: pos13 >= 8 && neg16 >= 8 && in60 >= 8,
        detail: format!(
            "W(0)>0 at N=13: {pos13}/10, W(0)<0 at N=16: {neg16}/10, W(0) in [-0.55,-0.25] at N=60: {in60}/10"
        ),
    }
}

fn criterion_3(reports: &[RunReport]) -> Outcome {
    let mut ok = 0;
    let mut worst_iter = 0;
    let mut worst_res: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    for r in reports {
        let Some(rec) = r.record(60) else { continue };
        let (Some(status), Some(residual), Some(trace)) = (rec.status, rec.residual, &rec.trace)
        else {
            continue;
        };
        let last_eig = trace.last().map(|t| t.min_eigenvalue).unwrap_or(f64::NAN);
        worst_iter = worst_iter.max(rec.iterations);
        worst_res = worst_res.max(residual);
        worst_eig = worst_eig.max(last_eig);
        if status == SolveStatus::Converged
            && residual <= 1e-8
            && rec.iterations <= 200
            && last_eig < 1e-4
        {
            ok += 1;
        }
    }
    Outcome {
        pass: ok == reports.len(),
        detail: format!(
            "N=60 converged in {ok}/{} seeds; max iterations {worst_iter}, max residual {worst_res:.2e}, max final min-eigenvalue {worst_eig:.2e}",
            reports.len()
        ),
    }
}

fn criterion_4() -> Outcome {
    let povm = small_povm(2, 0.8);
    let mut rng = rng(2718);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = 0;
    for _ in 0..20 {
        let cmp = grid_comparison(&mut rng, &povm);
        let gap = cmp.solver_objective - cmp.grid_objective;
        worst = worst.max(gap);
        if gap <= 1e-6 {
            ok += 1;
        }
    }
    Outcome {
        pass: ok == 20,
        detail: format!("{ok}/20 instances with F_solver <= F_grid + 1e-6; largest F_solver - F_grid {worst:.2e}"),
    }
}

fn criterion_5() -> Outcome {
    let checks = derivative_study(20, 1618);
    let max = |f: fn(&DerivativeCheck) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    let (g, h, j, b) = (
        max(|c| c.gradient),
        max(|c| c.objective_hessian),
        max(|c| c.jacobian),
        max(|c| c.constraint_hessian),
    );
    Outcome {
        pass: g.max(h).max(j).max(b) <= 1e-5,
        detail: format!("max relative error over 20 points: g {g:.1e}, Hess F {h:.1e}, J {j:.1e}, B {b:.1e}"),
    }
}

fn criterion_6() -> Outcome {
    let d = 8;
    let vac = fock_mixture(&FockMixture::diagonal(vec![1.0]), d).unwrap();
    let one = fock_mixture(&FockMixture::diagonal(vec![0.0, 1.0]), d).unwrap();
    let mut var_dev: f64 = 0.0;
    let mut completeness: f64 = 0.0;
    let mut povms = Vec::new();
    for eta in [1.0, 0.8] {
        let config = MeasurementConfig {
            efficiency: eta,
            ..Default::default()
        };
        let povm = build_povm(&config, d).unwrap();
        completeness = completeness.max(povm.completeness_residual());
        let p = outcome_probabilities(&vac, &povm).unwrap();
        for block in p.chunks(config.bin_count) {
            var_dev = var_dev.max((binned_variance(block, &config).1 - 0.5).abs());
        }
        povms.push(povm);
    }
    let p0 = outcome_probabilities(&vac, &povms[0]).unwrap();
    let p1 = outcome_probabilities(&one, &povms[0]).unwrap();
    let lossy1 = outcome_probabilities(&one, &povms[1]).unwrap();
    let loss_dev = (0..p0.len())
        .map(|l| (lossy1[l] - (0.8 * p1[l] + 0.2 * p0[l])).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: var_dev <= 2e-3 && loss_dev <= 1e-7 && completeness <= 1e-6,
        detail: format!(
            "vacuum variance deviation {var_dev:.1e} (bin-width corrected), |1> loss law {loss_dev:.1e}, completeness {completeness:.1e}"
        ),
    }
}

fn criterion_7() -> Outcome {
    let rows = sweep_purity(&ExperimentConfig::default(), &[0.0, 0.25, 0.5], 10)
        .expect("purity sweep runs");
    let means: Vec<f64> = rows.iter().map(|r| r.mean_fidelity).collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    Outcome {
        pass: lo >= 0.97 && hi - lo <= 0.02 && failures == 0,
        detail: format!(
            "mean fidelity at gamma 0/0.25/0.5: {:.4}/{:.4}/{:.4}, spread {:.4}, failed runs {failures}",
            means[0],
            means[1],
            means[2],
            hi - lo
        ),
    }
}

fn criterion_8(reports: &[RunReport]) -> Outcome {
    let mut total = 0;
    let mut bad = 0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    let mut infeasible_iterates = 0;
    for r in reports {
        for rec in &r.records {
            total += 1;
            let (Some(rho), Some(trace)) = (&rec.rho, &rec.trace) else {
                bad += 1;
                continue;
            };
            let tr_dev = (rho.trace() - 1.0).abs();
            let eig = rho.min_eigenvalue();
            worst_trace = worst_trace.max(tr_dev);
            worst_eig = worst_eig.min(eig);
            infeasible_iterates += count(trace.records(), |t| t.c.is_nan() || t.c <= 0.0);
            if tr_dev > 1e-12 || eig < -1e-10 {
                bad += 1;
            }
        }
    }
    Outcome {
        pass: bad == 0 && infeasible_iterates == 0,
        detail: format!(
            "{total} reconstructions: max |tr - 1| {worst_trace:.1e}, min eigenvalue {worst_eig:.1e}, iterates with c <= 0: {infeasible_iterates}"
        ),
    }
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let cfg = ExperimentConfig {
            seed: 3,
            output_dir: Some(dir.clone()),
            ..Default::default()
        };
        run_experiment(&cfg).expect("study runs");
    }
    let (a, b) = (read_csvs(&dirs[0]), read_csvs(&dirs[1]));
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Outcome {
        pass: !a.is_empty() && a.len() == b.len() && differing == 0,
        detail: format!("{} CSV files per run, {differing} differ", a.len()),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=10).collect();
    let reports = study(&seeds);
    let results = [
        ("case-study fidelity", criterion_1(&reports)),
        ("negativity threshold", criterion_2(&reports)),
        ("convergence", criterion_3(&reports)),
        ("grid-search oracle", criterion_4()),
        ("derivatives", criterion_5()),
        ("measurement identities", criterion_6()),
        ("purity sweep", criterion_7()),
        ("physicality", criterion_8(&reports)),
        ("determinism", criterion_9()),
    ];
    for (i, (name, o)) in results.iter().enumerate() {
        report(i + 1, name, o);
    }
    let failed = count(&results, |(_, o)| !o.pass);
    println!(
        "acceptance: {}/9 passed in {:.1}s",
        9 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
