//! Cost refinement by pairwise cell migration.
//!
//! [`PartitionState`] holds the two cellsets of a server pair and runs
//! Fiduccia-Mattheyses style passes that minimize the pair cost
//! `cut(A, B) + overload(A) + overload(B)`. Gains are real valued, so the
//! highest-gain eligible cell is found by a scan rather than gain buckets;
//! the capacity part of every gain moves whenever either load changes.
//!
//! [`cost_descent`] applies [`move_cells`] over all server pairs until no pair
//! lowers the global cost.

use thiserror::Error;

use crate::model::{self, validate, Assignment, AssignmentError, Instance, Objectives};

/// Prefix gains at or below this are rounding noise: a pass whose moves
/// return to the starting partition can otherwise report a gain of ~1e-17
/// and be realized forever.
pub const GAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    fn idx(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FmError {
    #[error("cell {0} appears in both cellsets")]
    Overlap(usize),
    #[error("cell {0} is out of range")]
    CellOutOfRange(usize),
    #[error("cell {0} is not part of the partition")]
    Absent(usize),
    #[error("cell {0} is locked")]
    Locked(usize),
    #[error("location {0} is not a server location")]
    NotAServer(usize),
    #[error("a server pair needs two distinct locations, got {0} twice")]
    SameServer(usize),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmParams {
    /// Passes per [`move_cells`] call.
    pub max_passes: usize,
    /// Sweeps over all server pairs in [`cost_descent`].
    pub max_sweeps: usize,
}

impl Default for FmParams {
    fn default() -> Self {
        Self { max_passes: 100, max_sweeps: 1000 }
    }
}

#[inline]
fn overload(load: f64, capacity: f64) -> f64 {
    (load - capacity).max(0.0)
}

/// Pair cost of two disjoint cellsets computed from scratch.
pub fn delta_cost(
    instance: &Instance,
    cellset_a: &[usize],
    cellset_b: &[usize],
    capacity: f64,
) -> Result<f64, FmError> {
    let side = membership(instance, cellset_a, cellset_b)?;
    Ok(delta_from_membership(instance, cellset_a, cellset_b, &side, capacity))
}

fn membership(instance: &Instance, a: &[usize], b: &[usize]) -> Result<Vec<Option<Side>>, FmError> {
    let mut side = vec![None; instance.n_cells()];
    for (set, s) in [(a, Side::A), (b, Side::B)] {
        for &c in set {
            let slot = side.get_mut(c).ok_or(FmError::CellOutOfRange(c))?;
            if slot.is_some() {
                return Err(FmError::Overlap(c));
            }
            *slot = Some(s);
        }
    }
    Ok(side)
}

fn delta_from_membership(
    instance: &Instance,
    a: &[usize],
    b: &[usize],
    side: &[Option<Side>],
    capacity: f64,
) -> f64 {
    let mut cut = 0.0;
    for &i in a {
        let row = instance.workload_row(i);
        for &j in b {
            cut += row[j];
        }
    }
    let load = |set: &[usize], s: Side| {
        let mut l = 0.0;
        for &i in set {
            let row = instance.workload_row(i);
            for (j, w) in row.iter().enumerate().skip(i) {
                if side[j] == Some(s) {
                    l += w;
                }
            }
        }
        l
    };
    cut + overload(load(a, Side::A), capacity) + overload(load(b, Side::B), capacity)
}

/// Gain of moving one cell to the other side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveGain {
    pub cut: f64,
    pub cap: f64,
    pub gain: f64,
    /// The move keeps the larger load within `max(capacity, load_a, load_b)`.
    pub eligible: bool,
    /// Loads of the source and destination side after the move.
    pub load_from_after: f64,
    pub load_to_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveRecord {
    pub cell: usize,
    pub from: Side,
    pub gain: f64,
    /// Sum of gains of this and all earlier moves in the pass.
    pub prefix_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassReport {
    pub moves: Vec<MoveRecord>,
    /// Number of leading moves kept (0 when the pass is rolled back).
    pub best_prefix: usize,
    pub gain_max: f64,
    pub realized: bool,
}

/// Working state of one server pair.
#[derive(Debug, Clone)]
pub struct PartitionState<'a> {
    instance: &'a Instance,
    capacity: f64,
    /// Global cell ids, ascending.
    cells: Vec<usize>,
    /// Global cell id to local index.
    local: Vec<usize>,
    side: Vec<Side>,
    locked: Vec<bool>,
    /// Workload to cells on the same side, self included.
    internal: Vec<f64>,
    /// Workload to cells on the other side.
    external: Vec<f64>,
    load: [f64; 2],
    move_log: Vec<MoveRecord>,
}

impl<'a> PartitionState<'a> {
    pub fn new(
        instance: &'a Instance,
        cellset_a: &[usize],
        cellset_b: &[usize],
        capacity: f64,
    ) -> Result<Self, FmError> {
        let membership = membership(instance, cellset_a, cellset_b)?;
        let mut cells = Vec::with_capacity(cellset_a.len() + cellset_b.len());
        let mut side = Vec::with_capacity(cells.capacity());
        let mut local = vec![usize::MAX; instance.n_cells()];
        for (c, s) in membership.iter().enumerate() {
            if let Some(s) = s {
                local[c] = cells.len();
                cells.push(c);
                side.push(*s);
            }
        }
        let k = cells.len();
        let mut state = Self {
            instance,
            capacity,
            cells,
            local,
            side,
            locked: vec![false; k],
            internal: vec![0.0; k],
            external: vec![0.0; k],
            load: [0.0; 2],
            move_log: Vec::new(),
        };
        state.recompute();
        Ok(state)
    }

    /// Rebuilds per-cell sums and both loads from the current sides.
    fn recompute(&mut self) {
        let k = self.cells.len();
        self.load = [0.0; 2];
        for a in 0..k {
            let row = self.instance.workload_row(self.cells[a]);
            let (mut int, mut ext, mut upper) = (0.0, 0.0, 0.0);
            for b in 0..k {
                let w = row[self.cells[b]];
                if self.side[b] == self.side[a] {
                    int += w;
                    if b >= a {
                        upper += w;
                    }
                } else {
                    ext += w;
                }
            }
            self.internal[a] = int;
            self.external[a] = ext;
            self.load[self.side[a].idx()] += upper;
        }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn load_a(&self) -> f64 {
        self.load[0]
    }

    pub fn load_b(&self) -> f64 {
        self.load[1]
    }

    pub fn cellset(&self, side: Side) -> Vec<usize> {
        self.cells.iter().zip(&self.side).filter(|(_, s)| **s == side).map(|(c, _)| *c).collect()
    }

    pub fn side_of(&self, cell: usize) -> Option<Side> {
        self.local.get(cell).and_then(|&k| self.side.get(k).copied())
    }

    pub fn is_locked(&self, cell: usize) -> bool {
        self.local.get(cell).and_then(|&k| self.locked.get(k).copied()).unwrap_or(false)
    }

    pub fn move_log(&self) -> &[MoveRecord] {
        &self.move_log
    }

    /// Pair cost from the maintained cut and loads.
    pub fn delta_cost(&self) -> f64 {
        let cut: f64 = (0..self.cells.len())
            .filter(|&k| self.side[k] == Side::A)
            .map(|k| self.external[k])
            .sum();
        cut + overload(self.load[0], self.capacity) + overload(self.load[1], self.capacity)
    }

    /// Pair cost recomputed from the cellsets alone.
    pub fn delta_cost_from_scratch(&self) -> f64 {
        let a = self.cellset(Side::A);
        let b = self.cellset(Side::B);
        let membership: Vec<Option<Side>> = self
            .local
            .iter()
            .map(|&k| if k == usize::MAX { None } else { Some(self.side[k]) })
            .collect();
        delta_from_membership(self.instance, &a, &b, &membership, self.capacity)
    }

    /// Gain of moving an unlocked member cell across the cut.
    pub fn vertex_gain(&self, cell: usize) -> Result<MoveGain, FmError> {
        let k = *self.local.get(cell).ok_or(FmError::CellOutOfRange(cell))?;
        if k == usize::MAX {
            return Err(FmError::Absent(cell));
        }
        if self.locked[k] {
            return Err(FmError::Locked(cell));
        }
        Ok(self.gain_at(k))
    }

    fn gain_at(&self, k: usize) -> MoveGain {
        let c = self.cells[k];
        let w_self = self.instance.w(c, c);
        let from = self.side[k].idx();
        let to = 1 - from;
        let (load_from, load_to) = (self.load[from], self.load[to]);
        let cut = self.external[k] - (self.internal[k] - w_self);
        let load_from_after = load_from - self.internal[k];
        let load_to_after = load_to + w_self + self.external[k];
        let w = self.capacity;
        let cap = overload(load_from, w) + overload(load_to, w)
            - overload(load_from_after, w)
            - overload(load_to_after, w);
        let eligible = load_from_after.max(load_to_after) <= w.max(load_from).max(load_to);
        MoveGain { cut, cap, gain: cut + cap, eligible, load_from_after, load_to_after }
    }

    /// Moves local cell `k` and updates every cell's sums and both loads.
    fn apply_move(&mut self, k: usize) {
        let c = self.cells[k];
        let row = self.instance.workload_row(c);
        let from = self.side[k];
        let g = self.gain_at(k);
        for b in 0..self.cells.len() {
            if b == k {
                continue;
            }
            let w = row[self.cells[b]];
            if self.side[b] == from {
                self.internal[b] -= w;
                self.external[b] += w;
            } else {
                self.internal[b] += w;
                self.external[b] -= w;
            }
        }
        let w_self = row[c];
        let int = self.internal[k];
        self.internal[k] = self.external[k] + w_self;
        self.external[k] = int - w_self;
        self.load[from.idx()] = g.load_from_after;
        self.load[from.other().idx()] = g.load_to_after;
        self.side[k] = from.other();
    }

    /// Highest-gain eligible unlocked cell; ties go to the lowest cell id.
    fn select(&self) -> Option<(usize, MoveGain)> {
        let mut best: Option<(usize, MoveGain)> = None;
        for k in 0..self.cells.len() {
            if self.locked[k] {
                continue;
            }
            let g = self.gain_at(k);
            if g.eligible && best.is_none_or(|(_, b)| g.gain > b.gain) {
                best = Some((k, g));
            }
        }
        best
    }

    /// One pass: move every eligible cell at most once in best-gain order,
    /// then keep the best positive prefix or roll back.
    pub fn run_pass(&mut self) -> PassReport {
        self.recompute();
        self.locked.iter_mut().for_each(|l| *l = false);
        self.move_log.clear();
        let start = self.side.clone();

        let (mut gain, mut gain_max, mut best_prefix) = (0.0, 0.0, 0);
        while let Some((k, g)) = self.select() {
            gain += g.gain;
            self.move_log.push(MoveRecord {
                cell: self.cells[k],
                from: self.side[k],
                gain: g.gain,
                prefix_gain: gain,
            });
            if gain > gain_max + GAIN_TOL {
                gain_max = gain;
                best_prefix = self.move_log.len();
            }
            self.apply_move(k);
            self.locked[k] = true;
        }

        self.side = start;
        self.recompute();
        let realized = gain_max > GAIN_TOL;
        if realized {
            let prefix: Vec<usize> = self.move_log[..best_prefix].iter().map(|m| self.local[m.cell]).collect();
            for k in prefix {
                self.apply_move(k);
            }
        } else {
            best_prefix = 0;
        }
        self.locked.iter_mut().for_each(|l| *l = false);
        PassReport { moves: self.move_log.clone(), best_prefix, gain_max, realized }
    }

    /// Runs passes until one is rolled back or `max_passes` is reached.
    pub fn refine(&mut self, max_passes: usize) -> Vec<PassReport> {
        let mut reports = Vec::new();
        for _ in 0..max_passes {
            let r = self.run_pass();
            let done = !r.realized;
            reports.push(r);
            if done {
                break;
            }
        }
        self.recompute();
        reports
    }
}

fn check_pair(assignment: &Assignment, l0: usize, l1: usize) -> Result<(), FmError> {
    if l0 == l1 {
        return Err(FmError::SameServer(l0));
    }
    for l in [l0, l1] {
        if !assignment.server_locations().contains(&l) {
            return Err(FmError::NotAServer(l));
        }
    }
    Ok(())
}

/// Migrates cells between the servers at `l0` and `l1` to lower their pair
/// cost. Only cells of these two servers can change.
pub fn move_cells(
    instance: &Instance,
    assignment: &Assignment,
    l0: usize,
    l1: usize,
    capacity: f64,
) -> Result<Assignment, FmError> {
    move_cells_with(instance, assignment, l0, l1, capacity, FmParams::default().max_passes)
        .map(|(a, _)| a)
}

/// [`move_cells`] with an explicit pass limit; also returns the pass reports.
pub fn move_cells_with(
    instance: &Instance,
    assignment: &Assignment,
    l0: usize,
    l1: usize,
    capacity: f64,
    max_passes: usize,
) -> Result<(Assignment, Vec<PassReport>), FmError> {
    check_pair(assignment, l0, l1)?;
    let mut state =
        PartitionState::new(instance, &assignment.cellset(l0), &assignment.cellset(l1), capacity)?;
    let reports = state.refine(max_passes);
    Ok((write_back(assignment, &state, l0, l1), reports))
}

fn write_back(assignment: &Assignment, state: &PartitionState<'_>, l0: usize, l1: usize) -> Assignment {
    let mut out = assignment.clone();
    for (k, &c) in state.cells.iter().enumerate() {
        out.set_location(c, if state.side[k] == Side::A { l0 } else { l1 });
    }
    out
}

/// Result of [`cost_descent`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescentRun {
    pub assignment: Assignment,
    pub initial: Objectives,
    /// Objectives after each committed pair operation.
    pub commits: Vec<Objectives>,
    pub sweeps: usize,
    pub hit_sweep_limit: bool,
}

/// Repeated pairwise refinement. A pair result is committed only if the
/// global cost drops and the spread stays within `spread_cap`
/// (`f64::INFINITY` for no spread constraint). Pairs are visited in
/// ascending location order; sweeps repeat until one commits nothing.
pub fn cost_descent(
    instance: &Instance,
    assignment: &Assignment,
    spread_cap: f64,
    params: FmParams,
) -> Result<DescentRun, FmError> {
    validate(instance, assignment)?;
    let capacity = instance.capacity();
    let mut current = assignment.clone();
    let initial = model::evaluate(instance, &current);
    let mut obj = initial;
    let mut commits = Vec::new();
    let mut locs = current.server_locations().to_vec();
    locs.sort_unstable();
    let mut sweeps = 0;
    let mut hit_sweep_limit = false;

    loop {
        if sweeps == params.max_sweeps {
            hit_sweep_limit = true;
            break;
        }
        sweeps += 1;
        let mut committed = false;
        for (x, &l0) in locs.iter().enumerate() {
            for &l1 in &locs[x + 1..] {
                let a = current.cellset(l0);
                let b = current.cellset(l1);
                if a.len() + b.len() < 2 {
                    continue;
                }
                let mut state = PartitionState::new(instance, &a, &b, capacity)?;
                let before = state.delta_cost();
                state.refine(params.max_passes);
                if !(state.delta_cost() < before) {
                    continue;
                }
                let candidate = write_back(&current, &state, l0, l1);
                let next = model::evaluate(instance, &candidate);
                if next.cost < obj.cost && next.spread <= spread_cap {
                    current = candidate;
                    obj = next;
                    commits.push(next);
                    committed = true;
                }
            }
        }
        if !committed {
            break;
        }
    }

    Ok(DescentRun { assignment: current, initial, commits, sweeps, hit_sweep_limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::two_cells;
    use crate::model::{cost, symmetric_from_upper, Point};
    use crate::testutil::{random_assignment, random_instance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_split(rng: &mut impl Rng, n: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for c in 0..n {
            match rng.random_range(0..3) {
                0 => a.push(c),
                1 => b.push(c),
                _ => {}
            }
        }
        (a, b)
    }

    /// Minimum pair cost over all 2-partitions of `cells`.
    fn best_bipartition(inst: &Instance, cells: &[usize], w: f64) -> f64 {
        let mut best = f64::INFINITY;
        for code in 0..(1u32 << cells.len()) {
            let (a, b): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
                cells.iter().copied().enumerate().partition(|(k, _)| code >> k & 1 == 0);
            let a: Vec<usize> = a.into_iter().map(|(_, c)| c).collect();
            let b: Vec<usize> = b.into_iter().map(|(_, c)| c).collect();
            best = best.min(delta_cost(inst, &a, &b, w).unwrap());
        }
        best
    }

    #[test]
    fn hand_checked_pair_costs() {
        let inst = two_cells(2, 1.0);
        assert_eq!(delta_cost(&inst, &[0], &[1], 1.0).unwrap(), 0.5);
        assert!((delta_cost(&inst, &[0], &[1], 0.2).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(delta_cost(&inst, &[0], &[0, 1], 1.0), Err(FmError::Overlap(0)));
    }

    #[test]
    fn hand_checked_gains() {
        let inst = two_cells(2, 1.0);
        let s = PartitionState::new(&inst, &[0], &[1], 1.0).unwrap();
        let g = s.vertex_gain(0).unwrap();
        assert_eq!((g.cut, g.cap, g.gain), (0.5, 0.0, 0.5));
        assert_eq!((g.load_from_after, g.load_to_after), (0.0, 1.0));
        assert!(g.eligible);

        let s = PartitionState::new(&inst, &[0], &[1], 0.5).unwrap();
        let g = s.vertex_gain(0).unwrap();
        assert_eq!((g.cap, g.gain), (-0.5, 0.0));
        assert!(!g.eligible);
    }

    #[test]
    fn gain_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 5, 2, 2, 0.3);
        let s = PartitionState::new(&inst, &[0, 1], &[2], 0.3).unwrap();
        assert_eq!(s.vertex_gain(4), Err(FmError::Absent(4)));
        assert_eq!(s.vertex_gain(9), Err(FmError::CellOutOfRange(9)));
    }

    #[test]
    fn gain_equals_pair_cost_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(2..=10);
            let w = rng.random_range(0.01..0.6);
            let inst = random_instance(&mut rng, n, 2, 2, 0.5);
            let (a, b) = random_split(&mut rng, n);
            let s = PartitionState::new(&inst, &a, &b, w).unwrap();
            let before = delta_cost(&inst, &a, &b, w).unwrap();
            for &c in a.iter().chain(&b) {
                let g = s.vertex_gain(c).unwrap();
                let (a2, b2) = if a.contains(&c) {
                    (a.iter().copied().filter(|&x| x != c).collect::<Vec<_>>(), [b.clone(), vec![c]].concat())
                } else {
                    ([a.clone(), vec![c]].concat(), b.iter().copied().filter(|&x| x != c).collect())
                };
                let after = delta_cost(&inst, &a2, &b2, w).unwrap();
                assert!((g.gain - (before - after)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incremental_state_tracks_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 12, 2, 2, 0.5);
        let a: Vec<usize> = (0..6).collect();
        let b: Vec<usize> = (6..12).collect();
        let mut s = PartitionState::new(&inst, &a, &b, 0.2).unwrap();
        for step in 0..12 {
            let k = (step * 5) % 12;
            s.apply_move(k);
            let fresh = PartitionState::new(&inst, &s.cellset(Side::A), &s.cellset(Side::B), 0.2).unwrap();
            assert!((s.load_a() - fresh.load_a()).abs() < 1e-12);
            assert!((s.load_b() - fresh.load_b()).abs() < 1e-12);
            assert!((s.delta_cost() - s.delta_cost_from_scratch()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_workload_pair_is_left_alone() {
        // cells 0,1 carry no demand at all; cell 2 holds the whole workload
        let cells: Vec<Point> = (0..3).map(|k| Point::new(k as f64, 0.0)).collect();
        let w = symmetric_from_upper(3, |i, j| if i == 2 && j == 2 { 1.0 } else { 0.0 });
        let inst = Instance::new(cells.clone(), cells, w, 3, 0.5).unwrap();
        let a = Assignment::new(vec![0, 1, 2], vec![0, 1, 2]);
        let (out, reports) = move_cells_with(&inst, &a, 0, 1, 0.5, 100).unwrap();
        assert_eq!(out, a);
        assert_eq!(reports.len(), 1);
        assert!(!reports[0].realized);
        assert_eq!(reports[0].gain_max, 0.0);
    }

    #[test]
    fn two_cells_merge_onto_one_server() {
        let inst = two_cells(2, 1.0);
        let a = Assignment::new(vec![0, 1], vec![0, 1]);
        let out = move_cells(&inst, &a, 0, 1, 1.0).unwrap();
        assert_eq!(out.location_of(0), out.location_of(1));
        let s = PartitionState::new(&inst, &out.cellset(0), &out.cellset(1), 1.0).unwrap();
        assert_eq!(s.delta_cost(), 0.0);
    }

    #[test]
    fn rolled_back_pass_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 8, 2, 2, 0.5);
            let (a, b) = random_split(&mut rng, 8);
            let mut s = PartitionState::new(&inst, &a, &b, 0.15).unwrap();
            let passes = s.refine(100);
            assert!(!passes.last().unwrap().realized, "{} passes", passes.len());
            let (la, lb, sa) = (s.load_a(), s.load_b(), s.cellset(Side::A));
            let r = s.run_pass();
            assert!(!r.realized);
            assert_eq!((s.load_a(), s.load_b(), s.cellset(Side::A)), (la, lb, sa));
        }
    }

    #[test]
    fn realized_pass_equals_prefix_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 8, 2, 2, 0.5);
            let w = rng.random_range(0.05..0.5);
            let (a, b) = random_split(&mut rng, 8);
            let mut s = PartitionState::new(&inst, &a, &b, w).unwrap();
            let before = s.delta_cost();
            let r = s.run_pass();
            // every prefix gain is the running sum and no cell moves twice
            let mut acc = 0.0;
            let mut seen = std::collections::HashSet::new();
            for m in &r.moves {
                acc += m.gain;
                assert_eq!(m.prefix_gain, acc);
                assert!(seen.insert(m.cell));
            }
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            for m in &r.moves[..r.best_prefix] {
                if m.from == Side::A {
                    a2.retain(|&x| x != m.cell);
                    b2.push(m.cell);
                } else {
                    b2.retain(|&x| x != m.cell);
                    a2.push(m.cell);
                }
            }
            a2.sort_unstable();
            b2.sort_unstable();
            assert_eq!(s.cellset(Side::A), a2);
            assert_eq!(s.cellset(Side::B), b2);
            let after = delta_cost(&inst, &a2, &b2, w).unwrap();
            assert!(after <= before + 1e-12);
            if r.realized {
                assert!((before - after - r.gain_max).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moves_respect_the_load_ceiling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 10, 2, 2, 0.5);
            let w = rng.random_range(0.02..0.4);
            let (a, b) = random_split(&mut rng, 10);
            let mut s = PartitionState::new(&inst, &a, &b, w).unwrap();
            let ceiling = w.max(s.load_a()).max(s.load_b());
            let r = s.run_pass();
            // replay the whole move sequence, checking loads after every move
            let mut replay = PartitionState::new(&inst, &a, &b, w).unwrap();
            for m in &r.moves {
                replay.apply_move(replay.local[m.cell]);
                assert!(replay.load_a().max(replay.load_b()) <= ceiling + 1e-12);
            }
        }
    }

    #[test]
    fn refined_pair_is_locally_optimal_and_above_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 8, 2, 2, 0.5);
            let w = rng.random_range(0.05..0.6);
            let (a, b) = random_split(&mut rng, 8);
            let cells: Vec<usize> = a.iter().chain(&b).copied().collect();
            if cells.is_empty() {
                continue;
            }
            let mut s = PartitionState::new(&inst, &a, &b, w).unwrap();
            let start = s.delta_cost();
            let reports = s.refine(100);
            let end = s.delta_cost_from_scratch();
            assert!(end <= start + 1e-12);
            assert!(end >= best_bipartition(&inst, &cells, w) - 1e-12);
            assert!(!reports.last().unwrap().realized);
            for &c in &cells {
                let g = s.vertex_gain(c).unwrap();
                assert!(!(g.eligible && g.gain > GAIN_TOL));
            }
        }
    }

    #[test]
    fn move_cells_is_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = random_instance(&mut rng, 20, 5, 4, 0.05);
        let a = random_assignment(&mut rng, &inst);
        let (l0, l1) = (a.server_locations()[0], a.server_locations()[2]);
        let out = move_cells(&inst, &a, l0, l1, 0.05).unwrap();
        for i in 0..20 {
            if ![l0, l1].contains(&a.location_of(i)) {
                assert_eq!(out.location_of(i), a.location_of(i));
            } else {
                assert!([l0, l1].contains(&out.location_of(i)));
            }
        }
        assert_eq!(move_cells(&inst, &a, l0, l0, 0.05), Err(FmError::SameServer(l0)));
    }

    #[test]
    fn single_server_descent_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 6, 3, 1, 0.3);
        let a = Assignment::new(vec![1], vec![1; 6]);
        let run = cost_descent(&inst, &a, f64::INFINITY, FmParams::default()).unwrap();
        assert_eq!(run.assignment, a);
        assert!(run.commits.is_empty());
    }

    #[test]
    fn descent_lowers_cost_and_respects_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 30, 6, 4, 0.08);
            let a = random_assignment(&mut rng, &inst);
            let s0 = model::spread(&inst, &a);
            let cap = 1.1 * s0;
            let run = cost_descent(&inst, &a, cap, FmParams::default()).unwrap();
            let mut prev = run.initial.cost;
            for o in &run.commits {
                assert!(o.cost < prev);
                assert!(o.spread <= cap);
                prev = o.cost;
            }
            assert_eq!(cost(&inst, &run.assignment), prev);
            validate(&inst, &run.assignment).unwrap();
        }
    }

    #[test]
    fn descent_with_two_servers_is_above_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let w = rng.random_range(0.1..0.7);
            let inst = random_instance(&mut rng, 6, 2, 2, w);
            let a = random_assignment(&mut rng, &inst);
            let run = cost_descent(&inst, &a, f64::INFINITY, FmParams::default()).unwrap();
            let mut best = f64::INFINITY;
            for code in 0..64usize {
                let map = (0..6).map(|i| code >> i & 1).collect();
                best = best.min(cost(&inst, &Assignment::new(vec![0, 1], map)));
            }
            assert!(cost(&inst, &run.assignment) >= best - 1e-12);
            assert!(cost(&inst, &run.assignment) <= run.initial.cost);
        }
    }
}
