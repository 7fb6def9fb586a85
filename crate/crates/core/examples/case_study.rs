use patterntomo::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let exact = std::env::args().nth(2).is_some();
    let cfg = ExperimentConfig {
        seed,
        exact_probabilities: exact,
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let rep = run_experiment(&cfg).unwrap();
    for r in &rep.records {
        println!(
            "N={:3} status={:?} it={:4} F={:?} W0={:?} fid={:?} mineig={:?} res={:?} err={:?}",
            r.probe_count, r.status, r.iterations, r.objective, r.wigner_origin, r.fidelity, r.min_eigenvalue, r.residual, r.error
        );
    }
    println!("{:?}", t.elapsed());
}
