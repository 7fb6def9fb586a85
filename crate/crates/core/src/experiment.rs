//! End-to-end homodyne case study: a known state is measured together with a
//! growing set of coherent probes, and each probe-set prefix is used for a
//! pattern reconstruction.
//!
//! Seeds: the master seed feeds [`derive_seed`] with counter 0 for the signal
//! and `k + 1` for probe `k`. The signal record is drawn once and reused for
//! every probe count, and probe records are shared by all prefixes that
//! contain them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homodyne::{
    build_povm, derive_seed, outcome_probabilities, sample_histogram, write_outcome_csv,
    Histogram, HomodyneError, MeasurementConfig, PovmSet,
};
use crate::pattern::{PatternError, PatternMatrix, ProbeSet};
use crate::quantum::{fidelity, fock_mixture, purity, wigner_at, DensityMatrix, FockMixture, QuantumError};
use crate::solver::{solve, ConvergenceTrace, Solution, SolveStatus, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Homodyne(HomodyneError::InvalidConfig(_))
                | ExperimentError::Solver(SolverError::InvalidOptions(_))
                | ExperimentError::Quantum(_)
        )
    }
}

/// Archimedean spiral of probe amplitudes: probe `k` (from 1) sits at radius
/// `offset + (k - 1) delta_r` and angle `(k - 1) delta_phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralParams {
    pub delta_r: f64,
    pub delta_phi: f64,
    /// First-probe radius; `None` means `delta_r`.
    pub offset: Option<f64>,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            delta_r: 0.0175,
            delta_phi: 0.5,
            offset: None,
        }
    }
}

pub fn spiral_probes(n: usize, params: &SpiralParams) -> Vec<Complex64> {
    let offset = params.offset.unwrap_or(params.delta_r);
    (0..n)
        .map(|k| {
            let r = offset + k as f64 * params.delta_r;
            Complex64::from_polar(r, k as f64 * params.delta_phi)
        })
        .collect()
}

/// Square lattice with spacing `spacing`, ordered by distance from the
/// origin and then by angle, origin excluded.
pub fn grid_probes(n: usize, spacing: f64) -> Vec<Complex64> {
    let mut side = 1i64;
    loop {
        let mut pts: Vec<Complex64> = Vec::new();
        for i in -side..=side {
            for j in -side..=side {
                if i != 0 || j != 0 {
                    pts.push(Complex64::new(i as f64 * spacing, j as f64 * spacing));
                }
            }
        }
        // every point within radius side*spacing is present
        let inner = pts
            .iter()
            .filter(|z| z.norm() <= side as f64 * spacing + 1e-12)
            .count();
        if inner >= n {
            pts.sort_by(|a, b| {
                a.norm()
                    .total_cmp(&b.norm())
                    .then(a.arg().total_cmp(&b.arg()))
            });
            pts.truncate(n);
            return pts;
        }
        side += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeLayout {
    Spiral,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub true_state: FockMixture,
    pub measurement: MeasurementConfig,
    pub spiral: SpiralParams,
    pub probe_layout: ProbeLayout,
    pub grid_spacing: f64,
    pub probe_counts: Vec<usize>,
    pub solver: SolverOptions,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Use Born-rule probabilities directly instead of sampled histograms.
    pub exact_probabilities: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dimension: 8,
            true_state: FockMixture::default(),
            measurement: MeasurementConfig::default(),
            spiral: SpiralParams::default(),
            probe_layout: ProbeLayout::Spiral,
            grid_spacing: 0.2,
            probe_counts: vec![13, 15, 16, 25, 30, 40, 50, 60],
            solver: SolverOptions::default(),
            seed: 1,
            output_dir: None,
            exact_probabilities: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.dimension < 2 {
            return bad("dimension must be at least 2".into());
        }
        self.measurement.validate()?;
        self.solver.barrier_exponent(self.dimension)?;
        if self.probe_counts.is_empty() {
            return bad("probe_counts is empty".into());
        }
        if self.probe_counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("probe_counts must be strictly ascending".into());
        }
        if self.probe_counts[0] < 2 {
            return bad("every probe count must be at least 2".into());
        }
        let m = self.measurement.outcome_count();
        if let Some(&n) = self.probe_counts.iter().find(|&&n| n >= m) {
            return bad(format!("probe count {n} is not below the outcome count {m}"));
        }
        match self.probe_layout {
            ProbeLayout::Spiral if !(self.spiral.delta_r > 0.0) => {
                return bad("spiral.delta_r must be positive".into())
            }
            ProbeLayout::Grid if !(self.grid_spacing > 0.0) => {
                return bad("grid_spacing must be positive".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn max_probes(&self) -> usize {
        self.probe_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn probe_amplitudes(&self, n: usize) -> Vec<Complex64> {
        match self.probe_layout {
            ProbeLayout::Spiral => spiral_probes(n, &self.spiral),
            ProbeLayout::Grid => grid_probes(n, self.grid_spacing),
        }
    }
}

/// Everything the detector would have recorded, plus the ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub povm: PovmSet,
    pub true_rho: DensityMatrix,
    pub probes: ProbeSet,
    /// `None` in exact-probability mode.
    pub signal_histogram: Option<Histogram>,
    pub probe_histograms: Option<Vec<Histogram>>,
    pub signal_frequencies: Vec<f64>,
    pub probe_frequencies: Vec<Vec<f64>>,
}

impl SimulatedData {
    pub fn patterns(&self, n: usize) -> Result<PatternMatrix, PatternError> {
        PatternMatrix::from_frequencies(
            &self.probe_frequencies[..n],
            &self.signal_frequencies,
            self.povm.config().phase_count,
        )
    }
}

pub fn simulate(config: &ExperimentConfig) -> Result<SimulatedData, ExperimentError> {
    config.validate()?;
    let povm = build_povm(&config.measurement, config.dimension)?;
    simulate_with(config, povm, config.seed)
}

fn simulate_with(
    config: &ExperimentConfig,
    povm: PovmSet,
    seed: u64,
) -> Result<SimulatedData, ExperimentError> {
    let d = config.dimension;
    let true_rho = fock_mixture(&config.true_state, d)?;
    let probes = ProbeSet::new(config.probe_amplitudes(config.max_probes()), d)?;

    let signal_probs = outcome_probabilities(&true_rho, &povm)?;
    let probe_probs = (0..probes.len())
        .map(|k| outcome_probabilities(&probes.state(k), &povm))
        .collect::<Result<Vec<_>, _>>()?;

    if config.exact_probabilities {
        return Ok(SimulatedData {
            povm,
            true_rho,
            probes,
            signal_histogram: None,
            probe_histograms: None,
            signal_frequencies: signal_probs,
            probe_frequencies: probe_probs,
        });
    }

    let shots = config.measurement.shots_per_phase;
    let layout = &config.measurement;
    let signal = sample_histogram(&signal_probs, layout, shots, derive_seed(seed, 0))?;
    let probe_histograms = probe_probs
        .par_iter()
        .enumerate()
        .map(|(k, p)| sample_histogram(p, layout, shots, derive_seed(seed, k as u64 + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimulatedData {
        povm,
        true_rho,
        probes,
        signal_frequencies: signal.frequencies(),
        probe_frequencies: probe_histograms.iter().map(|h| h.frequencies()).collect(),
        signal_histogram: Some(signal),
        probe_histograms: Some(probe_histograms),
    })
}

/// Outcome of one reconstruction with the first `probe_count` probes.
#[derive(Debug, Clone)]
pub struct ProbeCountRecord {
    pub probe_count: usize,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub fidelity: Option<f64>,
    pub wigner_origin: Option<f64>,
    pub purity: Option<f64>,
    pub objective: Option<f64>,
    pub residual: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub wall_time_s: f64,
    pub rho: Option<DensityMatrix>,
    pub trace: Option<ConvergenceTrace>,
    pub error: Option<String>,
}

impl ProbeCountRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub true_rho: DensityMatrix,
    pub records: Vec<ProbeCountRecord>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn record(&self, probe_count: usize) -> Option<&ProbeCountRecord> {
        self.records.iter().find(|r| r.probe_count == probe_count)
    }

    pub fn all_failed(&self) -> bool {
        self.records.iter().all(|r| !r.succeeded())
    }
}

fn reconstruct_prefix(
    data: &SimulatedData,
    n: usize,
    options: &SolverOptions,
) -> ProbeCountRecord {
    let start = Instant::now();
    let mut rec = ProbeCountRecord {
        probe_count: n,
        status: None,
        iterations: 0,
        fidelity: None,
        wigner_origin: None,
        purity: None,
        objective: None,
        residual: None,
        min_eigenvalue: None,
        wall_time_s: 0.0,
        rho: None,
        trace: None,
        error: None,
    };
    let outcome = (|| -> Result<(), ExperimentError> {
        let probes = data.probes.prefix(n)?;
        let patterns = data.patterns(n)?;
        let sol = solve(&patterns, &probes, options)?;
        rec.fidelity = Some(fidelity(&data.true_rho, &sol.rho)?);
        rec.wigner_origin = Some(wigner_at(&sol.rho, Complex64::new(0.0, 0.0)));
        rec.purity = Some(purity(&sol.rho));
        rec.min_eigenvalue = Some(sol.rho.min_eigenvalue());
        rec.objective = Some(sol.objective);
        rec.residual = Some(sol.residual);
        rec.status = Some(sol.status);
        rec.iterations = sol.iterations;
        rec.trace = Some(sol.trace);
        rec.rho = Some(sol.rho);
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec.wall_time_s = start.elapsed().as_secs_f64();
    rec
}

/// Simulate, reconstruct for every probe count and, when `output_dir` is set,
/// write the CSV tables and a JSON manifest. Failures of individual probe
/// counts are recorded, not propagated.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let povm = build_povm(&config.measurement, config.dimension)?;
    run_with_povm(config, povm, config.seed)
}

fn run_with_povm(
    config: &ExperimentConfig,
    povm: PovmSet,
    seed: u64,
) -> Result<RunReport, ExperimentError> {
    let data = simulate_with(config, povm, seed)?;
    let records: Vec<ProbeCountRecord> = config
        .probe_counts
        .par_iter()
        .map(|&n| reconstruct_prefix(&data, n, &config.solver))
        .collect();
    let mut report = RunReport {
        seed,
        true_rho: data.true_rho.clone(),
        records,
        artifacts: Vec::new(),
    };
    if let Some(dir) = &config.output_dir {
        report.artifacts = write_study_outputs(dir, config, &data, &report)?;
    }
    Ok(report)
}

/// `(re_alpha, im_alpha, W)` rows on the square `[-half_width, half_width]^2`.
pub fn wigner_grid(rho: &DensityMatrix, half_width: f64, step: f64) -> Vec<(f64, f64, f64)> {
    assert!(step > 0.0, "wigner_grid step must be positive");
    let n = (half_width / step + 1e-9).floor() as i64;
    let mut rows = Vec::with_capacity(((2 * n + 1) * (2 * n + 1)) as usize);
    for i in -n..=n {
        for j in -n..=n {
            let (re, im) = (i as f64 * step, j as f64 * step);
            rows.push((re, im, wigner_at(rho, Complex64::new(re, im))));
        }
    }
    rows
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_wigner_csv(path: &Path, rho: &DensityMatrix) -> Result<(), ExperimentError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["re_alpha", "im_alpha", "W"])?;
    for row in wigner_grid(rho, 3.0, 0.1) {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_probes_csv(path: &Path, amplitudes: &[Complex64]) -> Result<(), ExperimentError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["index", "re_alpha", "im_alpha", "radius"])?;
    for (k, a) in amplitudes.iter().enumerate() {
        wtr.serialize((k + 1, a.re, a.im, a.norm()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write the density matrix as `(row, col, re, im)` rows.
pub fn write_density_csv(path: &Path, rho: &DensityMatrix) -> Result<(), ExperimentError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["row", "col", "re", "im"])?;
    let m = rho.matrix();
    for r in 0..rho.dim() {
        for c in 0..rho.dim() {
            wtr.serialize((r, c, m[(r, c)].re, m[(r, c)].im))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Histograms (or exact probabilities) for the signal and every probe.
pub fn write_simulation_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    data: &SimulatedData,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let layout = data.povm.config();
    let zeros = vec![0; layout.outcome_count()];

    let path = dir.join("probes.csv");
    write_probes_csv(&path, data.probes.amplitudes())?;
    paths.push(path);

    let path = dir.join("signal.csv");
    match &data.signal_histogram {
        Some(h) => h.write_csv(create(&path)?)?,
        None => write_outcome_csv(create(&path)?, layout, &zeros, &data.signal_frequencies)?,
    }
    paths.push(path);

    for k in 0..data.probes.len() {
        let path = dir.join(format!("probe_{:03}.csv", k + 1));
        match &data.probe_histograms {
            Some(hs) => hs[k].write_csv(create(&path)?)?,
            None => write_outcome_csv(create(&path)?, layout, &zeros, &data.probe_frequencies[k])?,
        }
        paths.push(path);
    }

    let path = dir.join("simulation.json");
    let manifest = serde_json::json!({
        "dimension": config.dimension,
        "seed": config.seed,
        "probe_count": data.probes.len(),
        "measurement": layout,
        "exact_probabilities": config.exact_probabilities,
        "true_state": config.true_state,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    paths.push(path);
    Ok(paths)
}

/// Contents of a directory written by [`write_simulation_outputs`].
#[derive(Debug, Clone)]
pub struct PatternDir {
    pub dimension: usize,
    pub phase_count: usize,
    pub amplitudes: Vec<Complex64>,
    pub signal: Vec<f64>,
    pub probe_frequencies: Vec<Vec<f64>>,
    /// Ground truth, when the directory came from a simulation that recorded it.
    pub true_state: Option<FockMixture>,
}

#[derive(Deserialize)]
struct SimulationManifest {
    dimension: usize,
    probe_count: usize,
    #[serde(default)]
    true_state: Option<FockMixture>,
}

fn read_frequencies(path: &Path) -> Result<(Histogram, Vec<f64>), ExperimentError> {
    let file = File::open(path)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
    Ok(Histogram::read_csv(file)?)
}

impl PatternDir {
    /// Read `simulation.json`, `probes.csv`, `signal.csv` and `probe_NNN.csv`.
    /// `dimension` overrides the value recorded in the manifest.
    pub fn load(dir: &Path, dimension: Option<usize>) -> Result<Self, ExperimentError> {
        let manifest_path = dir.join("simulation.json");
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", manifest_path.display())))?;
        let manifest: SimulationManifest = serde_json::from_str(&text)?;

        let probes_path = dir.join("probes.csv");
        let mut rdr = csv::Reader::from_path(&probes_path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", probes_path.display())))?;
        let mut amplitudes = Vec::new();
        for row in rdr.deserialize() {
            let (_, re, im, _): (usize, f64, f64, f64) = row?;
            amplitudes.push(Complex64::new(re, im));
        }
        if amplitudes.len() != manifest.probe_count {
            return Err(ExperimentError::Config(format!(
                "probes.csv lists {} probes, simulation.json says {}",
                amplitudes.len(),
                manifest.probe_count
            )));
        }

        let (signal_hist, signal) = read_frequencies(&dir.join("signal.csv"))?;
        let mut probe_frequencies = Vec::with_capacity(amplitudes.len());
        for k in 0..amplitudes.len() {
            let path = dir.join(format!("probe_{:03}.csv", k + 1));
            let (hist, freqs) = read_frequencies(&path)?;
            if !hist.same_layout(&signal_hist) {
                return Err(ExperimentError::Config(format!(
                    "{} does not share the signal's outcome layout",
                    path.display()
                )));
            }
            probe_frequencies.push(freqs);
        }
        Ok(Self {
            dimension: dimension.unwrap_or(manifest.dimension),
            phase_count: signal_hist.phase_count,
            amplitudes,
            signal,
            probe_frequencies,
            true_state: manifest.true_state,
        })
    }

    /// Probe set and patterns for the first `n` probes.
    pub fn prefix(&self, n: usize) -> Result<(ProbeSet, PatternMatrix), ExperimentError> {
        if n > self.amplitudes.len() {
            return Err(ExperimentError::Config(format!(
                "requested {n} probes, directory has {}",
                self.amplitudes.len()
            )));
        }
        let probes = ProbeSet::new(self.amplitudes[..n].to_vec(), self.dimension)?;
        let patterns = PatternMatrix::from_frequencies(
            &self.probe_frequencies[..n],
            &self.signal,
            self.phase_count,
        )?;
        Ok((probes, patterns))
    }
}

/// Write `rho.csv`, `trace.csv`, `wigner.csv` and `summary.json` for one
/// reconstruction.
pub fn write_reconstruction_outputs(
    dir: &Path,
    solution: &Solution,
    true_rho: Option<&DensityMatrix>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let path = dir.join("rho.csv");
    write_density_csv(&path, &solution.rho)?;
    paths.push(path);
    let path = dir.join("trace.csv");
    solution.trace.write_csv(create(&path)?)?;
    paths.push(path);
    let path = dir.join("wigner.csv");
    write_wigner_csv(&path, &solution.rho)?;
    paths.push(path);

    let fid = match true_rho {
        Some(t) => Some(fidelity(t, &solution.rho)?),
        None => None,
    };
    let summary = serde_json::json!({
        "status": solution.status.to_string(),
        "iterations": solution.iterations,
        "objective": solution.objective,
        "residual": solution.residual,
        "mu": solution.mu,
        "lambda": solution.lambda,
        "wigner_origin": wigner_at(&solution.rho, Complex64::new(0.0, 0.0)),
        "purity": purity(&solution.rho),
        "min_eigenvalue": solution.rho.min_eigenvalue(),
        "fidelity": fid,
        "weights": solution.x.as_slice(),
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    paths.push(path);
    Ok(paths)
}

fn write_study_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    data: &SimulatedData,
    report: &RunReport,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();

    let path = dir.join("probes.csv");
    write_probes_csv(&path, data.probes.amplitudes())?;
    paths.push(path);

    let path = dir.join("wigner_true.csv");
    write_wigner_csv(&path, &data.true_rho)?;
    paths.push(path);

    let path = dir.join("w0_vs_n.csv");
    {
        let mut wtr = csv::Writer::from_writer(create(&path)?);
        wtr.write_record([
            "probe_count",
            "W0",
            "fidelity",
            "purity",
            "status",
            "iterations",
            "objective",
            "min_eig",
        ])?;
        for r in &report.records {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            wtr.write_record([
                r.probe_count.to_string(),
                opt(r.wigner_origin),
                opt(r.fidelity),
                opt(r.purity),
                r.status
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "error".into()),
                r.iterations.to_string(),
                opt(r.objective),
                opt(r.min_eigenvalue),
            ])?;
        }
        wtr.flush()?;
    }
    paths.push(path);

    for r in &report.records {
        if let (Some(rho), Some(trace)) = (&r.rho, &r.trace) {
            let path = dir.join(format!("wigner_n{:03}.csv", r.probe_count));
            write_wigner_csv(&path, rho)?;
            paths.push(path);
            let path = dir.join(format!("trace_n{:03}.csv", r.probe_count));
            trace.write_csv(create(&path)?)?;
            paths.push(path);
            let path = dir.join(format!("rho_n{:03}.csv", r.probe_count));
            write_density_csv(&path, rho)?;
            paths.push(path);
        }
    }

    let path = dir.join("manifest.json");
    let runs: Vec<_> = report
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "probe_count": r.probe_count,
                "status": r.status.map(|s| s.to_string()),
                "iterations": r.iterations,
                "fidelity": r.fidelity,
                "wigner_origin": r.wigner_origin,
                "wall_time_s": r.wall_time_s,
                "error": r.error,
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "config": config,
        "seed": report.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "runs": runs,
    });
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    paths.push(path);
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurityRow {
    pub gamma: f64,
    pub purity: f64,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Fidelity statistics for the family
/// `0.5|0><0| + 0.5|1><1| + gamma(|0><1| + |1><0|)` at the largest configured
/// probe count. Run `r` of the `i`-th gamma uses master seed
/// `derive_seed(config.seed, i * runs_per_gamma + r)`.
pub fn sweep_purity(
    config: &ExperimentConfig,
    gammas: &[f64],
    runs_per_gamma: usize,
) -> Result<Vec<PurityRow>, ExperimentError> {
    if let Some(&g) = gammas.iter().find(|g| !(0.0..=0.5).contains(*g)) {
        return Err(QuantumError::NotPsd {
            eigenvalue: 0.5 - g.abs(),
        }
        .into());
    }
    if runs_per_gamma == 0 {
        return Err(ExperimentError::Config("runs_per_gamma must be positive".into()));
    }
    let mut base = config.clone();
    base.probe_counts = vec![config.max_probes()];
    base.output_dir = None;
    base.validate()?;
    let povm = build_povm(&base.measurement, base.dimension)?;

    let mut rows = Vec::with_capacity(gammas.len());
    for (i, &gamma) in gammas.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.true_state = FockMixture::vacuum_photon_coherent(gamma);
        let state = fock_mixture(&cfg.true_state, cfg.dimension)?;
        let results: Vec<Option<f64>> = (0..runs_per_gamma)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(config.seed, (i * runs_per_gamma + r) as u64);
                run_with_povm(&cfg, povm.clone(), seed)
                    .ok()
                    .and_then(|rep| rep.records[0].fidelity)
            })
            .collect();
        let fids: Vec<f64> = results.iter().flatten().copied().collect();
        let failures = runs_per_gamma - fids.len();
        let mean = if fids.is_empty() {
            f64::NAN
        } else {
            fids.iter().sum::<f64>() / fids.len() as f64
        };
        let std = if fids.len() > 1 {
            (fids.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (fids.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        rows.push(PurityRow {
            gamma,
            purity: purity(&state),
            mean_fidelity: mean,
            std_fidelity: std,
            runs: runs_per_gamma,
            failures,
        });
    }
    Ok(rows)
}

/// CSV with columns `gamma, purity, mean_fidelity, std_fidelity`.
pub fn write_purity_csv<W: Write>(writer: W, rows: &[PurityRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["gamma", "purity", "mean_fidelity", "std_fidelity"])?;
    for r in rows {
        wtr.serialize((r.gamma, r.purity, r.mean_fidelity, r.std_fidelity))?;
    }
    wtr.flush()?;
    Ok(())
}
