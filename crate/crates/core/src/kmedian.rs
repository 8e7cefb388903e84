//! Spread-only search: nearest-server assignment plus single-swap k-median
//! local search over the server location set.

use thiserror::Error;

use crate::model::{self, validate, Assignment, AssignmentError, Instance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapParams {
    /// A swap is taken only if it brings spread below `(1 - kappa) * spread`.
    pub kappa: f64,
    /// Cap on scans; `None` means `10 * n_candidates`.
    pub max_sweeps: Option<usize>,
}

impl Default for SwapParams {
    fn default() -> Self {
        Self { kappa: 1e-4, max_sweeps: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KMedianError {
    #[error("location set is empty")]
    EmptyLocations,
    #[error("expected {expected} server locations, got {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("location {0} is out of range or repeated")]
    BadLocation(usize),
    #[error("location {0} is not a server location")]
    NotAServer(usize),
    #[error("location {0} is already a server location")]
    AlreadyServer(usize),
    #[error("kappa must lie in (0, 1), got {0}")]
    Kappa(f64),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// Nearest location per cell over a fixed location set; ties go to the lower
/// candidate index. The returned server list is sorted.
pub fn assign_cells(instance: &Instance, locations: &[usize]) -> Result<Assignment, KMedianError> {
    if locations.is_empty() {
        return Err(KMedianError::EmptyLocations);
    }
    if locations.len() != instance.n_servers() {
        return Err(KMedianError::WrongCount { expected: instance.n_servers(), found: locations.len() });
    }
    let sorted = sorted_unique(instance, locations)?;
    Ok(nearest_assignment(instance, sorted))
}

fn sorted_unique(instance: &Instance, locations: &[usize]) -> Result<Vec<usize>, KMedianError> {
    let mut sorted = locations.to_vec();
    sorted.sort_unstable();
    for (k, &l) in sorted.iter().enumerate() {
        if l >= instance.n_candidates() || (k > 0 && sorted[k - 1] == l) {
            return Err(KMedianError::BadLocation(l));
        }
    }
    Ok(sorted)
}

fn nearest_assignment(instance: &Instance, sorted: Vec<usize>) -> Assignment {
    let map = (0..instance.n_cells()).map(|i| nearest_in(instance, i, &sorted, usize::MAX)).collect();
    Assignment::new(sorted, map)
}

/// Nearest location of `cell` among `sorted`, skipping `skip`.
fn nearest_in(instance: &Instance, cell: usize, sorted: &[usize], skip: usize) -> usize {
    let row = instance.fronthaul_row(cell);
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for &l in sorted {
        if l != skip && (best == usize::MAX || row[l] < best_d) {
            best = l;
            best_d = row[l];
        }
    }
    best
}

/// Replaces `out_loc` by `in_loc` and reassigns every cell to its nearest
/// server.
pub fn swap_locations(
    instance: &Instance,
    current: &Assignment,
    out_loc: usize,
    in_loc: usize,
) -> Result<Assignment, KMedianError> {
    let locs = current.server_locations();
    if !locs.contains(&out_loc) {
        return Err(KMedianError::NotAServer(out_loc));
    }
    if in_loc >= instance.n_candidates() {
        return Err(KMedianError::BadLocation(in_loc));
    }
    if locs.contains(&in_loc) {
        return Err(KMedianError::AlreadyServer(in_loc));
    }
    let next: Vec<usize> = locs.iter().map(|&l| if l == out_loc { in_loc } else { l }).collect();
    assign_cells(instance, &next)
}

/// Result of [`kmedian_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMedianRun {
    pub assignment: Assignment,
    /// Spread of the initial assignment followed by the spread after each
    /// accepted swap.
    pub spreads: Vec<f64>,
    pub sweeps: usize,
    pub hit_sweep_limit: bool,
}

impl KMedianRun {
    pub fn accepted_swaps(&self) -> usize {
        self.spreads.len() - 1
    }
}

/// First-improvement swap search. Scans `(out, in)` pairs with `out` over the
/// server set ascending and `in` over the remaining candidates ascending,
/// takes the first swap that passes the `kappa` test and rescans. Ends with
/// a nearest-server assignment on the final location set.
pub fn kmedian_search(
    instance: &Instance,
    initial: &Assignment,
    params: SwapParams,
) -> Result<KMedianRun, KMedianError> {
    if !(params.kappa > 0.0 && params.kappa < 1.0) {
        return Err(KMedianError::Kappa(params.kappa));
    }
    validate(instance, initial)?;
    let max_sweeps = params.max_sweeps.unwrap_or(10 * instance.n_candidates());
    let m = instance.n_candidates();

    let mut current = sorted_unique(instance, initial.server_locations())?;
    let mut spread = model::spread(instance, initial);
    let mut spreads = vec![spread];
    let mut table = NearestTable::new(instance, &current);
    let mut sweeps = 0;
    let mut hit_sweep_limit = false;

    loop {
        if sweeps == max_sweeps {
            hit_sweep_limit = true;
            break;
        }
        sweeps += 1;
        let threshold = (1.0 - params.kappa) * spread;
        let mut accepted = None;
        'scan: for &out in &current {
            for inn in 0..m {
                if current.binary_search(&inn).is_ok() {
                    continue;
                }
                let s = table.swap_spread(instance, out, inn);
                if s < threshold {
                    accepted = Some((out, inn, s));
                    break 'scan;
                }
            }
        }
        let Some((out, inn, s)) = accepted else { break };
        for l in current.iter_mut() {
            if *l == out {
                *l = inn;
            }
        }
        current.sort_unstable();
        table = NearestTable::new(instance, &current);
        spread = s;
        spreads.push(s);
    }

    Ok(KMedianRun { assignment: nearest_assignment(instance, current), spreads, sweeps, hit_sweep_limit })
}

/// Nearest and second-nearest server per cell for one location set.
struct NearestTable {
    nearest: Vec<usize>,
    second: Vec<usize>,
}

impl NearestTable {
    fn new(instance: &Instance, sorted: &[usize]) -> Self {
        let n = instance.n_cells();
        let mut nearest = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for i in 0..n {
            let a = nearest_in(instance, i, sorted, usize::MAX);
            nearest.push(a);
            second.push(nearest_in(instance, i, sorted, a));
        }
        Self { nearest, second }
    }

    /// Spread of the nearest assignment after swapping `out` for `inn`,
    /// summed in cell order exactly as [`model::spread`] does.
    fn swap_spread(&self, instance: &Instance, out: usize, inn: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..instance.n_cells() {
            let row = instance.fronthaul_row(i);
            let keep = if self.nearest[i] == out { self.second[i] } else { self.nearest[i] };
            let pick = if keep == usize::MAX
                || row[inn] < row[keep]
                || (row[inn] == row[keep] && inn < keep)
            {
                inn
            } else {
                keep
            };
            total += row[pick] * instance.cell_total(i);
        }
        total
    }
}
