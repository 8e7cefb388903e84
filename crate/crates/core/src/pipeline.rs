//! The three-phase heuristic and the baselines it is compared against.
//!
//! * `Rand`: random server set and random cell map.
//! * `Kmed`: k-median swap search from the random start.
//! * `FmHung`: pairwise cost refinement from the random start with no spread
//!   limit, then relocation.
//! * `KmedFmHung`: k-median search, cost refinement capped at
//!   `(1 + epsilon)` times the post-search spread, then relocation.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fm::{cost_descent, FmError, FmParams};
use crate::hungarian::{relocate, MatchError};
use crate::kmedian::{kmedian_search, KMedianError, SwapParams};
use crate::model::{evaluate, Assignment, Instance, Objectives};
use crate::seeding::{rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "RAND")]
    Rand,
    #[serde(rename = "KMED")]
    Kmed,
    #[serde(rename = "FM_HUNG")]
    FmHung,
    #[serde(rename = "KMED_FM_HUNG")]
    KmedFmHung,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rand, Algorithm::Kmed, Algorithm::FmHung, Algorithm::KmedFmHung];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rand => "RAND",
            Algorithm::Kmed => "KMED",
            Algorithm::FmHung => "FM_HUNG",
            Algorithm::KmedFmHung => "KMED_FM_HUNG",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown algorithm `{0}` (expected RAND, KMED, FM_HUNG or KMED_FM_HUNG)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace(['-', '/'], "_");
        Algorithm::ALL.into_iter().find(|a| a.name() == key).ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub kappa: f64,
    /// Allowed relative spread growth during cost refinement.
    pub epsilon: f64,
    pub seed: u64,
    /// `None` uses the k-median default.
    pub kmedian_max_sweeps: Option<usize>,
    pub fm: FmParams,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        SolverConfig {
            algorithm,
            kappa: SwapParams::default().kappa,
            epsilon: f64::INFINITY,
            seed,
            kmedian_max_sweeps: None,
            fm: FmParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(SolveError::Kappa(self.kappa));
        }
        if !(self.epsilon >= 0.0) {
            return Err(SolveError::Epsilon(self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("kappa must lie in (0, 1), got {0}")]
    Kappa(f64),
    #[error("epsilon must be non-negative or infinite, got {0}")]
    Epsilon(f64),
    #[error(transparent)]
    KMedian(#[from] KMedianError),
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationSearchTrace {
    /// Spread before the search and after each accepted swap.
    pub swap_spreads: Vec<f64>,
    pub sweeps: usize,
    pub hit_sweep_limit: bool,
    /// After the final nearest-server assignment.
    pub result: Objectives,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrace {
    pub spread_cap: f64,
    pub commits: Vec<Objectives>,
    pub sweeps: usize,
    pub hit_sweep_limit: bool,
    pub result: Objectives,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub initial: Objectives,
    pub location_search: Option<LocationSearchTrace>,
    pub cost_refinement: Option<RefinementTrace>,
    pub relocation: Option<Objectives>,
}

impl PhaseTrace {
    /// Whether any phase stopped on its sweep bound rather than converging.
    pub fn hit_sweep_limit(&self) -> bool {
        self.location_search.as_ref().is_some_and(|p| p.hit_sweep_limit)
            || self.cost_refinement.as_ref().is_some_and(|p| p.hit_sweep_limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Assignment,
    pub objectives: Objectives,
    pub trace: PhaseTrace,
}

/// Uniform server subset and uniform cell map over it, from two named
/// streams of `seed`.
pub fn random_assignment(instance: &Instance, seed: u64) -> Assignment {
    let mut loc_rng = rng(seed, Stream::ServerLocations);
    let mut locs = sample(&mut loc_rng, instance.n_candidates(), instance.n_servers()).into_vec();
    locs.sort_unstable();
    let mut map_rng = rng(seed, Stream::CellMap);
    let map = (0..instance.n_cells()).map(|_| locs[map_rng.random_range(0..locs.len())]).collect();
    Assignment::new(locs, map)
}

pub fn solve(instance: &Instance, config: &SolverConfig) -> Result<Solution, SolveError> {
    config.validate()?;
    let start = random_assignment(instance, config.seed);
    let initial = evaluate(instance, &start);
    let mut trace = PhaseTrace { initial, location_search: None, cost_refinement: None, relocation: None };
    let mut current = start;

    if matches!(config.algorithm, Algorithm::Kmed | Algorithm::KmedFmHung) {
        let params = SwapParams { kappa: config.kappa, max_sweeps: config.kmedian_max_sweeps };
        let run = kmedian_search(instance, &current, params)?;
        let result = evaluate(instance, &run.assignment);
        trace.location_search = Some(LocationSearchTrace {
            swap_spreads: run.spreads,
            sweeps: run.sweeps,
            hit_sweep_limit: run.hit_sweep_limit,
            result,
        });
        current = run.assignment;
    }

    if matches!(config.algorithm, Algorithm::FmHung | Algorithm::KmedFmHung) {
        let spread_cap = match config.algorithm {
            Algorithm::KmedFmHung if config.epsilon.is_finite() => {
                (1.0 + config.epsilon) * evaluate(instance, &current).spread
            }
            _ => f64::INFINITY,
        };
        let run = cost_descent(instance, &current, spread_cap, config.fm)?;
        let result = evaluate(instance, &run.assignment);
        trace.cost_refinement = Some(RefinementTrace {
            spread_cap,
            commits: run.commits,
            sweeps: run.sweeps,
            hit_sweep_limit: run.hit_sweep_limit,
            result,
        });
        current = relocate(instance, &run.assignment)?;
        trace.relocation = Some(evaluate(instance, &current));
    }

    let objectives = evaluate(instance, &current);
    Ok(Solution { assignment: current, objectives, trace })
}
