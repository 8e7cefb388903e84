//! Problem data model: instances, assignments and the two objectives.
//!
//! The workload is a dense symmetric matrix. Every sum "over pairs" walks the
//! upper triangle `i <= j`, so the diagonal (intra-cell demand) is counted once
//! and each off-diagonal pair is counted once.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total workload of an instance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Marker for "no slot" in location to slot lookups.
const NO_SLOT: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Square grid of cells, row-major, with cell `(r, c)` centred at
/// `origin + ((c + 0.5) * cell_size, (r + 0.5) * cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub origin: Point,
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, cell_size: f64) -> Self {
        Self { rows, cols, cell_size, origin: Point::default() }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn center(&self, index: usize) -> Point {
        let (r, c) = (index / self.cols, index % self.cols);
        Point::new(
            self.origin.x + (c as f64 + 0.5) * self.cell_size,
            self.origin.y + (r as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.n_cells()).map(|i| self.center(i)).collect()
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("instance needs at least one cell")]
    NoCells,
    #[error("server count {n_servers} must be in 1..={limit} ({reason})")]
    ServerCount { n_servers: usize, limit: usize, reason: &'static str },
    #[error("capacity {0} must lie in (0, 1]")]
    Capacity(f64),
    #[error("workload matrix has {found} entries, expected {expected}")]
    WorkloadShape { expected: usize, found: usize },
    #[error("workload entry ({i}, {j}) = {value} is negative or not finite")]
    NegativeWorkload { i: usize, j: usize, value: f64 },
    #[error("workload is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("total workload {0} is not normalized to 1")]
    NotNormalized(f64),
    #[error("fronthaul matrix has {found} entries, expected {expected}")]
    FronthaulShape { expected: usize, found: usize },
    #[error("fronthaul cost ({cell}, {location}) = {value} is negative or not finite")]
    NegativeFronthaul { cell: usize, location: usize, value: f64 },
    #[error("grid of {rows}x{cols} does not match {n_cells} cells")]
    GridShape { rows: usize, cols: usize, n_cells: usize },
    #[error("cannot resample candidates of an instance with explicit fronthaul costs")]
    ExplicitFronthaul,
}

/// An immutable problem instance.
///
/// Large matrices sit behind `Arc` so that capacity or candidate variants of
/// one instance share the workload.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n_servers: usize,
    capacity: f64,
    cell_coords: Vec<Point>,
    candidate_coords: Vec<Point>,
    workload: Arc<[f64]>,
    cell_totals: Arc<[f64]>,
    total_workload: f64,
    fronthaul: Arc<[f64]>,
    explicit_fronthaul: bool,
    grid: Option<GridLayout>,
}

impl Instance {
    /// Builds an instance with Euclidean fronthaul costs. `workload` is the
    /// dense row-major `n_cells x n_cells` matrix.
    pub fn new(
        cell_coords: Vec<Point>,
        candidate_coords: Vec<Point>,
        workload: Vec<f64>,
        n_servers: usize,
        capacity: f64,
    ) -> Result<Self, InstanceError> {
        let n = cell_coords.len();
        if n == 0 {
            return Err(InstanceError::NoCells);
        }
        check_servers(n_servers, n, candidate_coords.len())?;
        check_capacity(capacity)?;
        if workload.len() != n * n {
            return Err(InstanceError::WorkloadShape { expected: n * n, found: workload.len() });
        }
        for i in 0..n {
            for j in i..n {
                let v = workload[i * n + j];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(InstanceError::NegativeWorkload { i, j, value: v });
                }
                if workload[j * n + i] != v {
                    return Err(InstanceError::Asymmetric { i, j });
                }
            }
        }
        let total = upper_sum(&workload, n);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(InstanceError::NotNormalized(total));
        }
        let cell_totals: Vec<f64> =
            (0..n).map(|i| workload[i * n..(i + 1) * n].iter().sum()).collect();
        let fronthaul = euclidean(&cell_coords, &candidate_coords);
        Ok(Self {
            n_servers,
            capacity,
            cell_coords,
            candidate_coords,
            workload: workload.into(),
            cell_totals: cell_totals.into(),
            total_workload: total,
            fronthaul: fronthaul.into(),
            explicit_fronthaul: false,
            grid: None,
        })
    }

    /// Replaces the Euclidean fronthaul costs by an explicit row-major
    /// `n_cells x n_candidates` matrix.
    pub fn with_fronthaul(mut self, fronthaul: Vec<f64>) -> Result<Self, InstanceError> {
        let (n, m) = (self.n_cells(), self.n_candidates());
        if fronthaul.len() != n * m {
            return Err(InstanceError::FronthaulShape { expected: n * m, found: fronthaul.len() });
        }
        if let Some(k) = fronthaul.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(InstanceError::NegativeFronthaul {
                cell: k / m,
                location: k % m,
                value: fronthaul[k],
            });
        }
        self.fronthaul = fronthaul.into();
        self.explicit_fronthaul = true;
        Ok(self)
    }

    pub fn with_grid(mut self, grid: GridLayout) -> Result<Self, InstanceError> {
        if grid.n_cells() != self.n_cells() {
            return Err(InstanceError::GridShape {
                rows: grid.rows,
                cols: grid.cols,
                n_cells: self.n_cells(),
            });
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn with_capacity(&self, capacity: f64) -> Result<Self, InstanceError> {
        check_capacity(capacity)?;
        Ok(Self { capacity, ..self.clone() })
    }

    pub fn with_servers(&self, n_servers: usize) -> Result<Self, InstanceError> {
        check_servers(n_servers, self.n_cells(), self.n_candidates())?;
        Ok(Self { n_servers, ..self.clone() })
    }

    /// Same cells and workload, new candidate sites with Euclidean fronthaul.
    pub fn with_candidates(&self, candidates: Vec<Point>) -> Result<Self, InstanceError> {
        if self.explicit_fronthaul {
            return Err(InstanceError::ExplicitFronthaul);
        }
        check_servers(self.n_servers, self.n_cells(), candidates.len())?;
        let fronthaul = euclidean(&self.cell_coords, &candidates);
        Ok(Self {
            candidate_coords: candidates,
            fronthaul: fronthaul.into(),
            ..self.clone()
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cell_coords.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate_coords.len()
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn cell_coords(&self) -> &[Point] {
        &self.cell_coords
    }

    pub fn candidate_coords(&self) -> &[Point] {
        &self.candidate_coords
    }

    pub fn grid(&self) -> Option<&GridLayout> {
        self.grid.as_ref()
    }

    pub fn has_explicit_fronthaul(&self) -> bool {
        self.explicit_fronthaul
    }

    #[inline]
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.workload[i * self.n_cells() + j]
    }

    /// Row `i` of the workload matrix.
    #[inline]
    pub fn workload_row(&self, i: usize) -> &[f64] {
        let n = self.n_cells();
        &self.workload[i * n..(i + 1) * n]
    }

    /// Total workload involving cell `i`: the row sum, diagonal counted once.
    #[inline]
    pub fn cell_total(&self, i: usize) -> f64 {
        self.cell_totals[i]
    }

    pub fn cell_totals(&self) -> &[f64] {
        &self.cell_totals
    }

    /// Upper-triangle sum of the workload; 1 up to rounding.
    pub fn total_workload(&self) -> f64 {
        self.total_workload
    }

    #[inline]
    pub fn d(&self, cell: usize, location: usize) -> f64 {
        self.fronthaul[cell * self.n_candidates() + location]
    }

    pub fn fronthaul_row(&self, cell: usize) -> &[f64] {
        let m = self.n_candidates();
        &self.fronthaul[cell * m..(cell + 1) * m]
    }
}

fn check_servers(n_servers: usize, n_cells: usize, n_candidates: usize) -> Result<(), InstanceError> {
    if n_servers == 0 || n_servers > n_candidates {
        return Err(InstanceError::ServerCount {
            n_servers,
            limit: n_candidates,
            reason: "at most one server per candidate location",
        });
    }
    if n_servers > n_cells {
        return Err(InstanceError::ServerCount {
            n_servers,
            limit: n_cells,
            reason: "no more servers than cells",
        });
    }
    Ok(())
}

fn check_capacity(capacity: f64) -> Result<(), InstanceError> {
    if capacity > 0.0 && capacity <= 1.0 {
        Ok(())
    } else {
        Err(InstanceError::Capacity(capacity))
    }
}

fn upper_sum(w: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        s += w[i * n + i..(i + 1) * n].iter().sum::<f64>();
    }
    s
}

fn euclidean(cells: &[Point], candidates: &[Point]) -> Vec<f64> {
    cells.iter().flat_map(|c| candidates.iter().map(move |l| c.dist(l))).collect()
}

/// Builds a dense symmetric matrix from a function evaluated on `i <= j`.
pub fn symmetric_from_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = f(i, j);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    w
}

/// Scales a dense symmetric matrix so its upper triangle sums to 1. Returns
/// the pre-normalization total.
pub fn normalize_upper(w: &mut [f64], n: usize) -> f64 {
    let total = upper_sum(w, n);
    if total > 0.0 {
        for v in w.iter_mut() {
            *v /= total;
        }
    }
    total
}

/// Server locations plus the cell to location map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    server_locations: Vec<usize>,
    cell_to_location: Vec<usize>,
}

impl Assignment {
    /// Unchecked constructor; see [`validate`].
    pub fn new(server_locations: Vec<usize>, cell_to_location: Vec<usize>) -> Self {
        Self { server_locations, cell_to_location }
    }

    pub fn server_locations(&self) -> &[usize] {
        &self.server_locations
    }

    pub fn cell_to_location(&self) -> &[usize] {
        &self.cell_to_location
    }

    #[inline]
    pub fn location_of(&self, cell: usize) -> usize {
        self.cell_to_location[cell]
    }

    pub fn n_cells(&self) -> usize {
        self.cell_to_location.len()
    }

    pub(crate) fn set_location(&mut self, cell: usize, location: usize) {
        self.cell_to_location[cell] = location;
    }

    /// Cells served at `location`, ascending.
    pub fn cellset(&self, location: usize) -> Vec<usize> {
        (0..self.n_cells()).filter(|&i| self.cell_to_location[i] == location).collect()
    }

    /// Server locations that serve at least one cell, in server order.
    pub fn nonempty_servers(&self) -> Vec<usize> {
        let mut used = vec![false; self.max_location() + 1];
        for &l in &self.cell_to_location {
            used[l] = true;
        }
        self.server_locations.iter().copied().filter(|&l| used[l]).collect()
    }

    fn max_location(&self) -> usize {
        let a = self.server_locations.iter().copied().max().unwrap_or(0);
        let b = self.cell_to_location.iter().copied().max().unwrap_or(0);
        a.max(b)
    }

    /// `slot[l]` is the position of `l` in `server_locations`.
    fn slots(&self, n_candidates: usize) -> Vec<usize> {
        let mut slot = vec![NO_SLOT; n_candidates];
        for (s, &l) in self.server_locations.iter().enumerate() {
            slot[l] = s;
        }
        slot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Exactly `n_servers` server locations.
    ServerCount,
    /// Every cell served by exactly one chosen server.
    CellServed,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::ServerCount => write!(f, "server count"),
            Constraint::CellServed => write!(f, "cell served by a chosen server"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("malformed assignment: {0}")]
    Malformed(String),
    #[error("violates {constraint} constraint at index {index}")]
    Violation { constraint: Constraint, index: usize },
}

/// Checks an assignment against the problem constraints.
///
/// Structural problems (wrong map length, out-of-range or duplicate locations)
/// are reported as [`AssignmentError::Malformed`]; a well-formed assignment
/// that breaks a constraint yields [`AssignmentError::Violation`].
pub fn validate(instance: &Instance, assignment: &Assignment) -> Result<(), AssignmentError> {
    let m = instance.n_candidates();
    if assignment.n_cells() != instance.n_cells() {
        return Err(AssignmentError::Malformed(format!(
            "cell map has {} entries for {} cells",
            assignment.n_cells(),
            instance.n_cells()
        )));
    }
    let mut seen = vec![false; m];
    for &l in &assignment.server_locations {
        if l >= m {
            return Err(AssignmentError::Malformed(format!("server location {l} out of range")));
        }
        if seen[l] {
            return Err(AssignmentError::Malformed(format!("duplicate server location {l}")));
        }
        seen[l] = true;
    }
    for (i, &l) in assignment.cell_to_location.iter().enumerate() {
        if l >= m {
            return Err(AssignmentError::Malformed(format!("cell {i} mapped to location {l} out of range")));
        }
    }
    if assignment.server_locations.len() != instance.n_servers() {
        return Err(AssignmentError::Violation {
            constraint: Constraint::ServerCount,
            index: assignment.server_locations.len(),
        });
    }
    if let Some(i) = assignment.cell_to_location.iter().position(|&l| !seen[l]) {
        return Err(AssignmentError::Violation { constraint: Constraint::CellServed, index: i });
    }
    Ok(())
}

/// Loads of all servers, aligned with `server_locations`.
pub fn server_loads(instance: &Instance, assignment: &Assignment) -> Vec<f64> {
    let slot = assignment.slots(instance.n_candidates());
    let cell_slot: Vec<usize> = assignment.cell_to_location.iter().map(|&l| slot[l]).collect();
    loads_by_slot(instance, &cell_slot, assignment.server_locations.len())
}

/// Loads of `n_slots` servers given each cell's slot index.
pub(crate) fn loads_by_slot(instance: &Instance, cell_slot: &[usize], n_slots: usize) -> Vec<f64> {
    let n = instance.n_cells();
    let mut loads = vec![0.0; n_slots];
    for i in 0..n {
        let row = instance.workload_row(i);
        let si = cell_slot[i];
        let mut acc = 0.0;
        for j in i..n {
            if cell_slot[j] == si {
                acc += row[j];
            }
        }
        loads[si] += acc;
    }
    loads
}

pub fn server_load(instance: &Instance, assignment: &Assignment, location: usize) -> f64 {
    let n = instance.n_cells();
    let mut load = 0.0;
    for i in 0..n {
        if assignment.location_of(i) != location {
            continue;
        }
        let row = instance.workload_row(i);
        for j in i..n {
            if assignment.location_of(j) == location {
                load += row[j];
            }
        }
    }
    load
}

/// Backhaul cost as the total minus the workload served within capacity.
pub fn cost(instance: &Instance, assignment: &Assignment) -> f64 {
    cost_from_loads(instance, &server_loads(instance, assignment))
}

pub(crate) fn cost_from_loads(instance: &Instance, loads: &[f64]) -> f64 {
    let w = instance.capacity();
    let served: f64 = loads.iter().map(|&l| l.min(w)).sum();
    instance.total_workload() - served
}

/// Backhaul cost as cross-server pair weight plus per-server overload.
pub fn cost_split_form(instance: &Instance, assignment: &Assignment) -> f64 {
    let n = instance.n_cells();
    let mut cross = 0.0;
    for i in 0..n {
        let row = instance.workload_row(i);
        let li = assignment.location_of(i);
        for j in i..n {
            if assignment.location_of(j) != li {
                cross += row[j];
            }
        }
    }
    let w = instance.capacity();
    let overload: f64 = server_loads(instance, assignment).iter().map(|&l| (l - w).max(0.0)).sum();
    cross + overload
}

/// Demand-weighted fronthaul distance summed over cells.
pub fn spread(instance: &Instance, assignment: &Assignment) -> f64 {
    (0..instance.n_cells())
        .map(|i| instance.d(i, assignment.location_of(i)) * instance.cell_total(i))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub cost: f64,
    pub spread: f64,
}

impl Objectives {
    /// Pareto dominance: no worse in both, strictly better in one.
    pub fn dominates(&self, other: &Objectives) -> bool {
        self.cost <= other.cost
            && self.spread <= other.spread
            && (self.cost < other.cost || self.spread < other.spread)
    }
}

/// Both objectives of a validated assignment.
pub fn objectives(instance: &Instance, assignment: &Assignment) -> Result<Objectives, AssignmentError> {
    validate(instance, assignment)?;
    Ok(evaluate(instance, assignment))
}

/// Both objectives without validation.
pub(crate) fn evaluate(instance: &Instance, assignment: &Assignment) -> Objectives {
    Objectives { cost: cost(instance, assignment), spread: spread(instance, assignment) }
}
