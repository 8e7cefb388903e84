//! Replicated experiments: every algorithm at every capacity over several
//! random candidate-location sets and several random starts per set.
//!
//! Seeds: location set `k` uses `loc_seed = derive(master, k)` to resample
//! candidate sites; start `j` within it uses `init_seed = derive(loc_seed, j)`.
//! Capacity and algorithm do not enter the seeds, so all algorithms at all
//! capacities share the same starts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fm::FmParams;
use crate::geogen::{generate, sample_candidates, service_area, GenError, GenSpec};
use crate::io::{load_instance, write_records, IoError, RunRecord, SummaryRow};
use crate::model::{server_loads, Instance, InstanceError};
use crate::pipeline::{solve, Algorithm, SolverConfig};
use crate::seeding::{self, derive, Stream};

pub const DEFAULT_CAPACITIES: [f64; 6] = [0.03, 0.04, 0.05, 0.06, 0.07, 0.08];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Generated(GenSpec),
    File { path: PathBuf },
}

fn default_capacities() -> Vec<f64> {
    DEFAULT_CAPACITIES.to_vec()
}
fn default_location_sets() -> usize {
    10
}
fn default_initials() -> usize {
    5
}
fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_kappa() -> f64 {
    1e-4
}
fn default_epsilon() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub source: InstanceSource,
    #[serde(default = "default_capacities")]
    pub capacities: Vec<f64>,
    #[serde(default = "default_location_sets")]
    pub n_location_sets: usize,
    #[serde(default = "default_initials")]
    pub n_initials: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Record wall time per run. Off by default so reports are reproducible
    /// byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl SweepSpec {
    pub fn new(source: InstanceSource, seed: u64) -> Self {
        SweepSpec {
            source,
            capacities: default_capacities(),
            n_location_sets: default_location_sets(),
            n_initials: default_initials(),
            algorithms: default_algorithms(),
            seed,
            kappa: default_kappa(),
            epsilon: default_epsilon(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.capacities.is_empty() {
            return Err(SweepError::Spec("at least one capacity is needed".into()));
        }
        if let Some(c) = self.capacities.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
            return Err(SweepError::Spec(format!("capacity {c} is outside (0, 1]")));
        }
        if self.n_location_sets == 0 || self.n_initials == 0 {
            return Err(SweepError::Spec("location set and start counts must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(SweepError::Spec("at least one algorithm is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// A run that returned an error instead of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub algo: String,
    pub capacity: f64,
    pub loc_seed: u64,
    pub init_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn summary_for(&self, algorithm: Algorithm, capacity: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.algo == algorithm.name() && s.capacity == capacity)
    }

    /// Writes `runs.csv`, `summary.csv` and `failures.csv` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), IoError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_records(BufWriter::new(File::create(dir.join("runs.csv"))?), &self.runs)?;
        write_records(BufWriter::new(File::create(dir.join("summary.csv"))?), &self.summary)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("failures.csv"))?));
        w.write_record(["algo", "capacity", "loc_seed", "init_seed", "error"]).map_err(IoError::from)?;
        for f in &self.failures {
            w.serialize(f).map_err(IoError::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_source(source: &InstanceSource) -> Result<Instance, SweepError> {
    Ok(match source {
        InstanceSource::Generated(spec) => generate(spec)?,
        InstanceSource::File { path } => load_instance(path)?,
    })
}

/// Candidate set for `loc_seed`: fresh uniform sites over the service area,
/// or a random subset of cell sites when `colocate` is set. Instances with
/// explicit fronthaul distances keep their own candidates since distances
/// to new sites are unknown.
pub fn location_set(base: &Instance, loc_seed: u64, colocate: bool) -> Result<Instance, InstanceError> {
    if base.has_explicit_fronthaul() {
        return Ok(base.clone());
    }
    let m = base.n_candidates();
    let sites = if colocate && m <= base.n_cells() {
        let mut rng = seeding::rng(loc_seed, Stream::CandidateCoords);
        sample(&mut rng, base.n_cells(), m).into_iter().map(|i| base.cell_coords()[i]).collect()
    } else {
        sample_candidates(service_area(base), m, loc_seed)
    };
    base.with_candidates(sites)
}

/// Load extremes over servers holding at least one cell.
pub fn load_extremes(instance: &Instance, assignment: &crate::model::Assignment) -> (f64, f64) {
    let loads = server_loads(instance, assignment);
    let mut used = vec![false; loads.len()];
    let slot_of = |l: usize| assignment.server_locations().iter().position(|&s| s == l).unwrap();
    for &l in assignment.cell_to_location() {
        used[slot_of(l)] = true;
    }
    let nonempty = loads.iter().zip(&used).filter(|(_, &u)| u).map(|(&l, _)| l);
    nonempty.fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), l| (hi.max(l), lo.min(l)))
}

struct Job {
    algorithm: Algorithm,
    capacity: f64,
    set: usize,
    loc_seed: u64,
    init_seed: u64,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<ExperimentReport, SweepError> {
    spec.validate()?;
    let base = load_source(&spec.source)?;
    let colocate = matches!(&spec.source, InstanceSource::Generated(g) if g.colocate_candidates);
    let sets: Vec<(u64, Instance)> = (0..spec.n_location_sets)
        .map(|k| {
            let loc_seed = derive(spec.seed, k as u64);
            location_set(&base, loc_seed, colocate).map(|inst| (loc_seed, inst))
        })
        .collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for &algorithm in &spec.algorithms {
        for &capacity in &spec.capacities {
            for (set, &(loc_seed, _)) in sets.iter().enumerate() {
                for j in 0..spec.n_initials {
                    jobs.push(Job { algorithm, capacity, set, loc_seed, init_seed: derive(loc_seed, j as u64) });
                }
            }
        }
    }

    let outcomes: Vec<Result<RunRecord, RunFailure>> = jobs
        .par_iter()
        .map(|job| {
            let fail = |error: String| RunFailure {
                algo: job.algorithm.name().into(),
                capacity: job.capacity,
                loc_seed: job.loc_seed,
                init_seed: job.init_seed,
                error,
            };
            let inst = sets[job.set].1.with_capacity(job.capacity).map_err(|e| fail(e.to_string()))?;
            let config = SolverConfig {
                algorithm: job.algorithm,
                kappa: spec.kappa,
                epsilon: spec.epsilon,
                seed: job.init_seed,
                kmedian_max_sweeps: None,
                fm: FmParams::default(),
            };
            let start = Instant::now();
            let sol = solve(&inst, &config).map_err(|e| fail(e.to_string()))?;
            let wall_ms = if spec.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let (max_load, min_load) = load_extremes(&inst, &sol.assignment);
            Ok(RunRecord {
                algo: job.algorithm.name().into(),
                capacity: job.capacity,
                loc_seed: job.loc_seed,
                init_seed: job.init_seed,
                cost: sol.objectives.cost,
                spread: sol.objectives.spread,
                max_load,
                min_load,
                wall_ms,
            })
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    let summary = summarize(&spec.algorithms, &spec.capacities, &runs, &failures);
    Ok(ExperimentReport { runs, failures, summary })
}

/// Mean, min and max per (algorithm, capacity), in the given orders.
pub fn summarize(
    algorithms: &[Algorithm],
    capacities: &[f64],
    runs: &[RunRecord],
    failures: &[RunFailure],
) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for a in algorithms {
        for &c in capacities {
            let rows: Vec<&RunRecord> = runs.iter().filter(|r| r.algo == a.name() && r.capacity == c).collect();
            let failed = failures.iter().filter(|f| f.algo == a.name() && f.capacity == c).count();
            let stat = |f: &dyn Fn(&RunRecord) -> f64| {
                let vals: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (mean, min, max)
            };
            let (cost_mean, cost_min, cost_max) = stat(&|r| r.cost);
            let (spread_mean, spread_min, spread_max) = stat(&|r| r.spread);
            let (load_ratio_mean, load_ratio_min, load_ratio_max) = stat(&|r| r.load_ratio());
            out.push(SummaryRow {
                algo: a.name().into(),
                capacity: c,
                runs: rows.len(),
                failures: failed,
                cost_mean,
                cost_min,
                cost_max,
                spread_mean,
                spread_min,
                spread_max,
                load_ratio_mean,
                load_ratio_min,
                load_ratio_max,
            });
        }
    }
    out
}
