use rand::Rng;

use crate::model::{normalize_upper, symmetric_from_upper, Assignment, Instance, Point};

/// Random points in the unit square, uniform pair weights (about a fifth of
/// them zeroed) and Euclidean fronthaul.
pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize, servers: usize, capacity: f64) -> Instance {
    let mut pt = || Point::new(rng.random(), rng.random());
    let cells: Vec<Point> = (0..n).map(|_| pt()).collect();
    let cands: Vec<Point> = (0..m).map(|_| pt()).collect();
    let mut w = symmetric_from_upper(n, |_, _| {
        let v: f64 = rng.random();
        if v < 0.2 { 0.0 } else { v }
    });
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    normalize_upper(&mut w, n);
    Instance::new(cells, cands, w, servers, capacity).unwrap()
}

/// Random server subset and random cell map over it.
pub fn random_assignment(rng: &mut impl Rng, instance: &Instance) -> Assignment {
    let mut locs =
        rand::seq::index::sample(rng, instance.n_candidates(), instance.n_servers()).into_vec();
    locs.sort_unstable();
    let map = (0..instance.n_cells()).map(|_| locs[rng.random_range(0..locs.len())]).collect();
    Assignment::new(locs, map)
}

pub fn subsets(m: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    crate::oracle::Combinations::new(m, k)
}
