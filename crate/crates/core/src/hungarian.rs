//! Server relocation: a min-cost matching of servers to candidate sites.
//!
//! The cost of putting server `s` at site `l` is the spread its cellset would
//! have there, `A[s][l] = sum_{i in cellset(s)} d_il * w_i`. Rectangular
//! matrices are padded with zero-cost dummy rows and solved with the
//! shortest-augmenting-path Hungarian method. Among optimal matchings the
//! lexicographically smallest (row by row) is returned: it is extracted from
//! the equality subgraph of the optimal dual.

use thiserror::Error;

use crate::model::{self, validate, Assignment, AssignmentError, Instance};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("{rows} servers cannot be matched into {cols} locations")]
    Infeasible { rows: usize, cols: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// Server by location relocation costs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelocationMatrix {
    /// Current location of each row's server.
    pub servers: Vec<usize>,
    pub n_cols: usize,
    /// Row-major entries.
    pub entries: Vec<f64>,
}

impl RelocationMatrix {
    pub fn n_rows(&self) -> usize {
        self.servers.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.n_cols..(row + 1) * self.n_cols]
    }
}

/// One row per server holding at least one cell, in server order.
pub fn build_matrix(instance: &Instance, assignment: &Assignment) -> Result<RelocationMatrix, MatchError> {
    validate(instance, assignment)?;
    let servers = assignment.nonempty_servers();
    let m = instance.n_candidates();
    let mut row_of = vec![usize::MAX; m];
    for (r, &l) in servers.iter().enumerate() {
        row_of[l] = r;
    }
    let mut entries = vec![0.0; servers.len() * m];
    for i in 0..instance.n_cells() {
        let r = row_of[assignment.location_of(i)];
        let wi = instance.cell_total(i);
        let d = instance.fronthaul_row(i);
        for (e, &dil) in entries[r * m..(r + 1) * m].iter_mut().zip(d) {
            *e += dil * wi;
        }
    }
    Ok(RelocationMatrix { servers, n_cols: m, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Column chosen for each row.
    pub cols: Vec<usize>,
    /// Sum of the chosen entries in row order.
    pub total: f64,
}

/// Min-cost injective matching of rows into columns.
pub fn solve_matching(matrix: &RelocationMatrix) -> Result<Matching, MatchError> {
    solve_dense(&matrix.entries, matrix.n_rows(), matrix.n_cols)
}

/// [`solve_matching`] over a raw row-major matrix.
pub fn solve_dense(entries: &[f64], rows: usize, cols: usize) -> Result<Matching, MatchError> {
    if entries.len() != rows * cols {
        return Err(MatchError::Shape { expected: rows * cols, found: entries.len() });
    }
    if rows > cols {
        return Err(MatchError::Infeasible { rows, cols });
    }
    if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
        return Err(MatchError::NonFinite { row: k / cols, col: k % cols });
    }
    if rows == 0 {
        return Ok(Matching { cols: Vec::new(), total: 0.0 });
    }
    let n = cols;
    let cost = |r: usize, c: usize| if r < rows { entries[r * cols + c] } else { 0.0 };
    let (row_to_col, u, v) = hungarian_square(n, cost);

    let scale = entries.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-10 * scale;
    let tight = |r: usize, c: usize| cost(r, c) - u[r] - v[c] <= tol;
    let lex = lexicographic_tight_matching(n, rows, &row_to_col, tight);

    let total_of = |assign: &[usize]| (0..rows).map(|r| entries[r * cols + assign[r]]).sum::<f64>();
    let base = total_of(&row_to_col);
    let total = total_of(&lex);
    let chosen = if total <= base { lex } else { row_to_col };
    let total = total_of(&chosen);
    Ok(Matching { cols: chosen[..rows].to_vec(), total })
}

/// Square assignment by shortest augmenting paths with potentials.
/// Returns the row to column map and the row and column potentials.
fn hungarian_square(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching of the equality subgraph,
/// fixing rows `0..real_rows` in order. `start` must be perfect and tight.
fn lexicographic_tight_matching(
    n: usize,
    real_rows: usize,
    start: &[usize],
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut row_to_col = start.to_vec();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut row_fixed = vec![false; n];
    let mut col_fixed = vec![false; n];

    for r in 0..real_rows {
        for c in 0..n {
            if col_fixed[c] || !tight(r, c) {
                continue;
            }
            if row_to_col[r] == c {
                break;
            }
            // Force r -> c: the row displaced from c must reach r's old column.
            let displaced = col_to_row[c];
            let freed = row_to_col[r];
            let mut trial_rc = row_to_col.clone();
            let mut trial_cr = col_to_row.clone();
            trial_rc[r] = c;
            trial_cr[c] = r;
            row_fixed[r] = true;
            col_fixed[c] = true;
            let mut visited = vec![false; n];
            let ok = augment(displaced, freed, &mut trial_rc, &mut trial_cr, &row_fixed, &col_fixed, &mut visited, &tight);
            if ok {
                row_to_col = trial_rc;
                col_to_row = trial_cr;
                break;
            }
            row_fixed[r] = false;
            col_fixed[c] = false;
        }
        row_fixed[r] = true;
        col_fixed[row_to_col[r]] = true;
    }
    row_to_col
}

/// Kuhn-style search for an alternating path from the unmatched `row` to the
/// free column `target` over tight, unfixed edges.
#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    row_fixed: &[bool],
    col_fixed: &[bool],
    visited: &mut [bool],
    tight: &impl Fn(usize, usize) -> bool,
) -> bool {
    for c in 0..row_to_col.len() {
        if col_fixed[c] || visited[c] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
        let next = col_to_row[c];
        if row_fixed[next] {
            continue;
        }
        if augment(next, target, row_to_col, col_to_row, row_fixed, col_fixed, visited, tight) {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
    }
    false
}

/// Moves every non-empty server to its matched site, keeping cellsets
/// intact. Empty servers take the lowest unused sites.
pub fn relocate(instance: &Instance, assignment: &Assignment) -> Result<Assignment, MatchError> {
    let matrix = build_matrix(instance, assignment)?;
    let matching = solve_matching(&matrix)?;
    let m = instance.n_candidates();
    let mut target = vec![usize::MAX; m];
    let mut used = vec![false; m];
    for (&from, &to) in matrix.servers.iter().zip(&matching.cols) {
        target[from] = to;
        used[to] = true;
    }
    let mut locations = matching.cols.clone();
    let mut free = (0..m).filter(|&l| !used[l]);
    while locations.len() < instance.n_servers() {
        locations.push(free.next().expect("n_servers <= n_candidates"));
    }
    locations.sort_unstable();
    let map = assignment.cell_to_location().iter().map(|&l| target[l]).collect();
    let moved = Assignment::new(locations, map);
    if model::spread(instance, &moved) > model::spread(instance, assignment) {
        // only possible through rounding on a tie with the current sites
        return Ok(assignment.clone());
    }
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cost, spread};
    use crate::testutil::{random_assignment, random_instance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimum over all injective maps, by recursion over rows.
    fn brute_force(entries: &[f64], rows: usize, cols: usize) -> f64 {
        fn go(e: &[f64], r: usize, rows: usize, cols: usize, used: &mut Vec<bool>) -> f64 {
            if r == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    best = best.min(e[r * cols + c] + go(e, r + 1, rows, cols, used));
                    used[c] = false;
                }
            }
            best
        }
        go(entries, 0, rows, cols, &mut vec![false; cols])
    }

    #[test]
    fn zero_diagonal_gives_identity() {
        let n = 5;
        let e: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 100.0 }).collect();
        let m = solve_dense(&e, n, n).unwrap();
        assert_eq!(m.cols, (0..n).collect::<Vec<_>>());
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn single_row_takes_the_argmin() {
        let e = vec![4.0, 2.5, 7.0, 2.5, 9.0];
        let m = solve_dense(&e, 1, 5).unwrap();
        assert_eq!(m.cols, vec![1]);
    }

    #[test]
    fn too_many_rows_is_infeasible() {
        assert_eq!(solve_dense(&[0.0; 6], 3, 2), Err(MatchError::Infeasible { rows: 3, cols: 2 }));
    }

    #[test]
    fn ties_resolve_to_the_lexicographically_smallest_matching() {
        // all-equal matrix: every injective map is optimal
        let m = solve_dense(&[1.0; 12], 3, 4).unwrap();
        assert_eq!(m.cols, vec![0, 1, 2]);
        // two optimal matchings, (0->1, 1->0) and (0->0, 1->1)
        let m = solve_dense(&[1.0, 1.0, 5.0, 1.0, 1.0, 5.0], 2, 3).unwrap();
        assert_eq!(m.cols, vec![0, 1]);
        let e = vec![3.0, 1.0, 2.0, 2.0, 3.0, 1.0];
        // unique optimum
        assert_eq!(solve_dense(&e, 2, 3).unwrap().cols, vec![1, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let e: Vec<f64> = (0..35).map(|_| rng.random::<f64>()).collect();
            let m = solve_dense(&e, 5, 7).unwrap();
            assert!((m.total - brute_force(&e, 5, 7)).abs() < 1e-12);
            let mut seen = m.cols.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 5);
        }
        for _ in 0..100 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(rows..=7);
            // small integer costs produce many ties
            let e: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..4) as f64).collect();
            let m = solve_dense(&e, rows, cols).unwrap();
            assert_eq!(m.total, brute_force(&e, rows, cols));
        }
    }

    #[test]
    fn tie_breaking_is_lexicographic_on_integer_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (rows, cols) = (3, 4);
            let e: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..3) as f64).collect();
            let best = brute_force(&e, rows, cols);
            let mut lex = None;
            'outer: for a in 0..cols {
                for b in 0..cols {
                    for c in 0..cols {
                        if a != b && a != c && b != c && e[a] + e[cols + b] + e[2 * cols + c] == best {
                            lex = Some(vec![a, b, c]);
                            break 'outer;
                        }
                    }
                }
            }
            assert_eq!(Some(solve_dense(&e, rows, cols).unwrap().cols), lex);
        }
    }

    #[test]
    fn matrix_rows_collapse_to_definitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 6, 4, 2, 0.3);
        let a = Assignment::new(vec![1, 3], vec![1; 6]);
        let mx = build_matrix(&inst, &a).unwrap();
        assert_eq!(mx.servers, vec![1]);
        for l in 0..4 {
            let expected: f64 = (0..6).map(|i| inst.d(i, l) * inst.cell_total(i)).sum();
            assert!((mx.get(0, l) - expected).abs() < 1e-15);
        }
        let a = Assignment::new(vec![1, 3], vec![1, 1, 1, 3, 1, 1]);
        let mx = build_matrix(&inst, &a).unwrap();
        for l in 0..4 {
            assert_eq!(mx.get(1, l), inst.d(3, l) * inst.cell_total(3));
        }
    }

    #[test]
    fn matrix_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 12, 6, 3, 0.2);
            let a = random_assignment(&mut rng, &inst);
            let mx = build_matrix(&inst, &a).unwrap();
            for (r, &s) in mx.servers.iter().enumerate() {
                for l in 0..6 {
                    let mut acc = 0.0;
                    for i in 0..12 {
                        if a.location_of(i) == s {
                            acc += inst.d(i, l) * inst.cell_total(i);
                        }
                    }
                    assert!((mx.get(r, l) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relocation_keeps_cost_and_reaches_the_matching_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 10, 7, 3, 0.1);
            let a = random_assignment(&mut rng, &inst);
            let out = relocate(&inst, &a).unwrap();
            validate(&inst, &out).unwrap();
            assert!((cost(&inst, &out) - cost(&inst, &a)).abs() < 1e-12);
            assert!(spread(&inst, &out) <= spread(&inst, &a));
            let matching = solve_matching(&build_matrix(&inst, &a).unwrap()).unwrap();
            assert!((spread(&inst, &out) - matching.total).abs() < 1e-12);
            // relocating again changes nothing
            assert_eq!(spread(&inst, &relocate(&inst, &out).unwrap()), spread(&inst, &out));
        }
    }

    #[test]
    fn empty_servers_take_the_lowest_free_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_instance(&mut rng, 5, 6, 3, 0.3);
        let a = Assignment::new(vec![2, 4, 5], vec![5; 5]);
        let out = relocate(&inst, &a).unwrap();
        let best = (0..6)
            .min_by(|&x, &y| {
                let sx: f64 = (0..5).map(|i| inst.d(i, x) * inst.cell_total(i)).sum();
                let sy: f64 = (0..5).map(|i| inst.d(i, y) * inst.cell_total(i)).sum();
                sx.total_cmp(&sy)
            })
            .unwrap();
        assert_eq!(out.cell_to_location(), &[best; 5]);
        let mut expected: Vec<usize> = (0..6).filter(|&l| l != best).take(2).collect();
        expected.push(best);
        expected.sort_unstable();
        assert_eq!(out.server_locations(), expected.as_slice());
    }

    #[test]
    fn runtime_grows_polynomially() {
        use std::time::Instant;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut times = Vec::new();
        for n in [50usize, 100, 200] {
            let e: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let best = (0..3)
                .map(|_| {
                    let t = Instant::now();
                    solve_dense(&e, n, n).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min);
            times.push(best);
        }
        assert!(times[0] <= times[2], "{times:?}");
        // quartic growth would be a factor 256 from n = 50 to n = 200
        assert!(times[2] / times[0].max(1e-6) < 256.0, "{times:?}");
    }
}
