//! Exhaustive search over every server set and every cell map, for tiny
//! instances. Used as ground truth by the tests and the CLI `oracle` command.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{cost_from_loads, loads_by_slot, Assignment, Instance, Objectives};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// k-subsets of `0..m` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    m: usize,
    next: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(m: usize, k: usize) -> Self {
        let next = (k <= m).then(|| (0..k).collect());
        Combinations { m, next }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let k = current.len();
        let mut succ = current.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if succ[i] < self.m - k + i {
                succ[i] += 1;
                for j in i + 1..k {
                    succ[j] = succ[j - 1] + 1;
                }
                self.next = Some(succ);
                break;
            }
        }
        Some(current)
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of assignments the oracle evaluates.
pub fn search_size(instance: &Instance) -> u128 {
    let k = instance.n_servers() as u128;
    let subsets = binomial(instance.n_candidates() as u64, instance.n_servers() as u64);
    let maps = (0..instance.n_cells()).try_fold(1u128, |acc, _| acc.checked_mul(k));
    maps.and_then(|m| m.checked_mul(subsets)).unwrap_or(u128::MAX)
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("search space of {size} assignments exceeds the budget of {budget}")]
    TooLarge { size: u128, budget: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub objectives: Objectives,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub min_cost: Witness,
    pub min_spread: Witness,
    /// Non-dominated objective points, ascending cost. Equal points keep the
    /// first witness in enumeration order.
    pub pareto: Vec<Witness>,
    pub evaluations: u64,
}

pub fn enumerate(instance: &Instance) -> Result<OracleResult, OracleError> {
    enumerate_with_budget(instance, DEFAULT_BUDGET)
}

pub fn enumerate_with_budget(instance: &Instance, budget: u64) -> Result<OracleResult, OracleError> {
    let size = search_size(instance);
    if size > budget as u128 {
        return Err(OracleError::TooLarge { size, budget });
    }
    let n = instance.n_cells();
    let k = instance.n_servers();

    // Cost depends only on the labelling, not on where the servers sit.
    let n_maps = k.pow(n as u32);
    let costs: Vec<f64> = (0..n_maps)
        .into_par_iter()
        .map(|t| {
            let labels = decode(t, n, k);
            cost_from_loads(instance, &loads_by_slot(instance, &labels, k))
        })
        .collect();

    let subsets: Vec<Vec<usize>> = Combinations::new(instance.n_candidates(), k).collect();
    let partial: Vec<Partial> = subsets.par_iter().map(|s| scan_subset(instance, s, &costs)).collect();

    let mut merged = partial.into_iter();
    let mut acc = merged.next().expect("at least one subset");
    for p in merged {
        acc.absorb(p);
    }
    acc.pareto.sort_by(|a, b| {
        a.objectives.cost.total_cmp(&b.objectives.cost).then(a.objectives.spread.total_cmp(&b.objectives.spread))
    });
    Ok(OracleResult { min_cost: acc.min_cost, min_spread: acc.min_spread, pareto: acc.pareto, evaluations: size as u64 })
}

/// Labels of map number `t`, cell 0 most significant.
fn decode(mut t: usize, n: usize, k: usize) -> Vec<usize> {
    let mut labels = vec![0; n];
    for slot in labels.iter_mut().rev() {
        *slot = t % k;
        t /= k;
    }
    labels
}

struct Partial {
    min_cost: Witness,
    min_spread: Witness,
    pareto: Vec<Witness>,
}

impl Partial {
    fn absorb(&mut self, other: Partial) {
        if other.min_cost.objectives.cost < self.min_cost.objectives.cost {
            self.min_cost = other.min_cost;
        }
        if other.min_spread.objectives.spread < self.min_spread.objectives.spread {
            self.min_spread = other.min_spread;
        }
        for w in other.pareto {
            insert_pareto(&mut self.pareto, w);
        }
    }
}

fn insert_pareto(front: &mut Vec<Witness>, w: Witness) {
    if front.iter().any(|f| f.objectives.dominates(&w.objectives) || f.objectives == w.objectives) {
        return;
    }
    front.retain(|f| !w.objectives.dominates(&f.objectives));
    front.push(w);
}

fn scan_subset(instance: &Instance, subset: &[usize], costs: &[f64]) -> Partial {
    let n = instance.n_cells();
    let k = subset.len();
    let witness = |labels: &[usize], objectives: Objectives| Witness {
        objectives,
        assignment: Assignment::new(subset.to_vec(), labels.iter().map(|&s| subset[s]).collect()),
    };
    let mut labels = vec![0usize; n];
    let mut best_cost: Option<Witness> = None;
    let mut best_spread: Option<Witness> = None;
    let mut front: Vec<Witness> = Vec::new();
    for &c in costs {
        let spread: f64 =
            (0..n).map(|i| instance.d(i, subset[labels[i]]) * instance.cell_total(i)).sum();
        let obj = Objectives { cost: c, spread };
        if best_cost.as_ref().is_none_or(|b| c < b.objectives.cost) {
            best_cost = Some(witness(&labels, obj));
        }
        if best_spread.as_ref().is_none_or(|b| spread < b.objectives.spread) {
            best_spread = Some(witness(&labels, obj));
        }
        let admissible = !front.iter().any(|f| f.objectives.dominates(&obj) || f.objectives == obj);
        if admissible {
            insert_pareto(&mut front, witness(&labels, obj));
        }
        // odometer, last cell fastest
        for slot in labels.iter_mut().rev() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    Partial { min_cost: best_cost.unwrap(), min_spread: best_spread.unwrap(), pareto: front }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, fixtures::two_cells, validate, Point};
    use crate::testutil::{random_assignment, random_instance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diagonal_instance(diag: &[f64], n_servers: usize, capacity: f64) -> Instance {
        let n = diag.len();
        let mut w = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            w[i * n + i] = v;
        }
        let cells = vec![Point::new(0.0, 0.0); n];
        let cands = vec![Point::new(0.0, 0.0); 2];
        Instance::new(cells, cands, w, n_servers, capacity).unwrap().with_fronthaul(vec![1.0; n * 2]).unwrap()
    }

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Combinations::new(3, 3).count(), 1);
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        for (m, k) in [(7, 3), (9, 4), (6, 1)] {
            assert_eq!(Combinations::new(m, k).count() as u128, binomial(m as u64, k as u64));
        }
    }

    #[test]
    fn single_cell_single_site() {
        let inst = Instance::new(vec![Point::new(0.0, 0.0)], vec![Point::new(3.0, 4.0)], vec![1.0], 1, 0.5).unwrap();
        let r = enumerate(&inst).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.min_cost.objectives, Objectives { cost: 0.5, spread: 5.0 });
        assert_eq!(r.pareto.len(), 1);
    }

    #[test]
    fn equal_split_exists_iff_cost_is_zero() {
        let yes = diagonal_instance(&[0.3, 0.1, 0.1, 0.2, 0.2, 0.1], 2, 0.5);
        let r = enumerate(&yes).unwrap();
        assert!(r.min_cost.objectives.cost.abs() < 1e-12);
        let loads = crate::model::server_loads(&yes, &r.min_cost.assignment);
        assert!(loads.iter().all(|&l| (l - 0.5).abs() < 1e-12));

        let no = diagonal_instance(&[0.3, 0.3, 0.3, 0.1], 2, 0.5);
        let r = enumerate(&no).unwrap();
        assert!((r.min_cost.objectives.cost - 0.1).abs() < 1e-12);
    }

    #[test]
    fn two_cell_fixture() {
        let r = enumerate(&two_cells(2, 0.5)).unwrap();
        // every assignment lands on the same point
        assert_eq!(r.pareto.len(), 1);
        assert_eq!(r.pareto[0].objectives, Objectives { cost: 0.5, spread: 1.5 });
        assert_eq!(r.evaluations, 4);
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 8, 6, 3, 0.3);
        let size = search_size(&inst);
        assert_eq!(size, 20 * 3u128.pow(8));
        assert_eq!(enumerate_with_budget(&inst, 1000), Err(OracleError::TooLarge { size, budget: 1000 }));
    }

    #[test]
    fn witnesses_are_valid_and_bound_random_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 6, 4, 2, 0.35);
            let r = enumerate(&inst).unwrap();
            for w in [&r.min_cost, &r.min_spread].into_iter().chain(&r.pareto) {
                validate(&inst, &w.assignment).unwrap();
                assert_eq!(evaluate(&inst, &w.assignment), w.objectives);
            }
            for f in &r.pareto {
                for g in &r.pareto {
                    assert!(!f.objectives.dominates(&g.objectives));
                }
            }
            assert_eq!(r.pareto[0].objectives.cost, r.min_cost.objectives.cost);
            assert_eq!(r.pareto.last().unwrap().objectives.spread, r.min_spread.objectives.spread);
            for _ in 0..50 {
                let a = random_assignment(&mut rng, &inst);
                let o = evaluate(&inst, &a);
                assert!(o.cost >= r.min_cost.objectives.cost);
                assert!(o.spread >= r.min_spread.objectives.spread);
                assert!(!r.pareto.iter().any(|w| o.dominates(&w.objectives)));
            }
        }
    }

    #[test]
    fn result_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 7, 5, 2, 0.3);
        assert_eq!(enumerate(&inst).unwrap(), enumerate(&inst).unwrap());
    }
}
