//! Synthetic instance generators.
//!
//! Two workload regimes are provided: `Uniform` draws every pair demand
//! independently of geography, `Gravity` makes demand decay with distance
//! and scale with per-cell activity. Output is a pure function of [`GenSpec`].
//!
//! Stream order (all ChaCha8, see [`crate::seeding`]):
//! - `CellCoords`: x then y for each cell (random-points layout only).
//! - `CandidateCoords`: x then y for each candidate, or an index sample of
//!   cells when candidates are co-located with base stations.
//! - `Workload`: one `U[0,1)` per pair `i <= j`, row-major (uniform model).
//! - `Activity`: two `U[0,1)` per cell, turned into a lognormal draw by
//!   Box-Muller (gravity model).
//!
//! Transcendentals go through `libm`, so instances are bit-identical across
//! platforms and dependency feature sets.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_upper, symmetric_from_upper, GridLayout, Instance, InstanceError, Point};
use crate::seeding::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    RandomPoints,
    Grid { rows: usize, cols: usize, cell_size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadModel {
    Uniform,
    /// `w_ij ∝ p_i p_j exp(-dist / lambda)` with lognormal activity `p`.
    /// `lambda = inf` removes the distance term.
    Gravity { lambda: f64, activity_sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_cells: usize,
    pub n_candidates: usize,
    pub n_servers: usize,
    pub capacity: f64,
    pub seed: u64,
    pub layout: Layout,
    pub workload_model: WorkloadModel,
    /// Place candidates on a random subset of base stations instead of fresh
    /// uniform points.
    #[serde(default)]
    pub colocate_candidates: bool,
}

impl GenSpec {
    /// 500 random cells, 50 candidates, 10 servers, uniform workload.
    pub fn synthetic500(seed: u64, capacity: f64) -> Self {
        Self {
            n_cells: 500,
            n_candidates: 50,
            n_servers: 10,
            capacity,
            seed,
            layout: Layout::RandomPoints,
            workload_model: WorkloadModel::Uniform,
            colocate_candidates: false,
        }
    }

    /// 25x25 grid on the unit square with a gravity workload.
    pub fn gravity_grid(seed: u64, capacity: f64, lambda: f64, activity_sigma: f64) -> Self {
        Self {
            n_cells: 625,
            n_candidates: 50,
            n_servers: 10,
            capacity,
            seed,
            layout: Layout::Grid { rows: 25, cols: 25, cell_size: 0.04 },
            workload_model: WorkloadModel::Gravity { lambda, activity_sigma },
            colocate_candidates: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("grid of {rows}x{cols} does not hold {n_cells} cells")]
    GridShape { rows: usize, cols: usize, n_cells: usize },
    #[error("grid cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("gravity lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("activity sigma must be non-negative and finite, got {0}")]
    Sigma(f64),
    #[error("{0}")]
    Precondition(&'static str),
    #[error("cannot co-locate {n_candidates} candidates on {n_cells} cells")]
    Colocate { n_candidates: usize, n_cells: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub min: Point,
    pub max: Point,
}

impl Area {
    pub const UNIT: Area = Area { min: Point::new(0.0, 0.0), max: Point::new(1.0, 1.0) };
}

/// Region candidate sites are drawn from: the grid box for grid instances, the
/// unit square when every cell lies in it, else the cells' bounding box.
pub fn service_area(instance: &Instance) -> Area {
    if let Some(g) = instance.grid() {
        return Area {
            min: g.origin,
            max: Point::new(g.origin.x + g.width(), g.origin.y + g.height()),
        };
    }
    let pts = instance.cell_coords();
    let inside = |p: &Point| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y);
    if pts.iter().all(inside) {
        return Area::UNIT;
    }
    let mut a = Area { min: pts[0], max: pts[0] };
    for p in pts {
        a.min.x = a.min.x.min(p.x);
        a.min.y = a.min.y.min(p.y);
        a.max.x = a.max.x.max(p.x);
        a.max.y = a.max.y.max(p.y);
    }
    a
}

/// `n` i.i.d. uniform points in `area`.
pub fn sample_candidates(area: Area, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = seeding::rng(seed, Stream::CandidateCoords);
    (0..n)
        .map(|_| {
            let x = area.min.x + rng.random::<f64>() * (area.max.x - area.min.x);
            let y = area.min.y + rng.random::<f64>() * (area.max.y - area.min.y);
            Point::new(x, y)
        })
        .collect()
}

/// Uniform workload on uniformly scattered cells.
pub fn gen_uniform(spec: &GenSpec) -> Result<Instance, GenError> {
    if spec.workload_model != WorkloadModel::Uniform {
        return Err(GenError::Precondition("gen_uniform needs the uniform workload model"));
    }
    if spec.layout != Layout::RandomPoints {
        return Err(GenError::Precondition("gen_uniform needs the random-points layout"));
    }
    let (cells, grid) = cells(spec)?;
    let n = cells.len();
    let mut rng = seeding::rng(spec.seed, Stream::Workload);
    let mut w = symmetric_from_upper(n, |_, _| rng.random::<f64>());
    normalize_upper(&mut w, n);
    assemble(spec, cells, grid, w)
}

/// Distance-decaying workload driven by lognormal cell activity.
pub fn gen_gravity(spec: &GenSpec) -> Result<Instance, GenError> {
    let WorkloadModel::Gravity { lambda, activity_sigma } = spec.workload_model else {
        return Err(GenError::Precondition("gen_gravity needs the gravity workload model"));
    };
    if !(lambda > 0.0) {
        return Err(GenError::Lambda(lambda));
    }
    if !(activity_sigma >= 0.0 && activity_sigma.is_finite()) {
        return Err(GenError::Sigma(activity_sigma));
    }
    let (cells, grid) = cells(spec)?;
    let n = cells.len();
    let mut rng = seeding::rng(spec.seed, Stream::Activity);
    let activity: Vec<f64> = (0..n).map(|_| lognormal(&mut rng, activity_sigma)).collect();
    let mut w = symmetric_from_upper(n, |i, j| {
        activity[i] * activity[j] * libm::exp(-cells[i].dist(&cells[j]) / lambda)
    });
    normalize_upper(&mut w, n);
    assemble(spec, cells, grid, w)
}

/// `exp(sigma * z)` with `z` standard normal from the cosine branch of Box-Muller.
fn lognormal(rng: &mut impl Rng, sigma: f64) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    let z = libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2);
    libm::exp(sigma * z)
}

/// Dispatches on the workload model.
pub fn generate(spec: &GenSpec) -> Result<Instance, GenError> {
    match spec.workload_model {
        WorkloadModel::Uniform => gen_uniform(spec),
        WorkloadModel::Gravity { .. } => gen_gravity(spec),
    }
}

fn cells(spec: &GenSpec) -> Result<(Vec<Point>, Option<GridLayout>), GenError> {
    match spec.layout {
        Layout::RandomPoints => {
            let mut rng = seeding::rng(spec.seed, Stream::CellCoords);
            let pts = (0..spec.n_cells)
                .map(|_| {
                    let x = rng.random::<f64>();
                    let y = rng.random::<f64>();
                    Point::new(x, y)
                })
                .collect();
            Ok((pts, None))
        }
        Layout::Grid { rows, cols, cell_size } => {
            if rows * cols != spec.n_cells {
                return Err(GenError::GridShape { rows, cols, n_cells: spec.n_cells });
            }
            if !(cell_size > 0.0 && cell_size.is_finite()) {
                return Err(GenError::CellSize(cell_size));
            }
            let grid = GridLayout::new(rows, cols, cell_size);
            Ok((grid.centers(), Some(grid)))
        }
    }
}

fn assemble(
    spec: &GenSpec,
    cells: Vec<Point>,
    grid: Option<GridLayout>,
    w: Vec<f64>,
) -> Result<Instance, GenError> {
    let candidates = if spec.colocate_candidates {
        if spec.n_candidates > cells.len() {
            return Err(GenError::Colocate { n_candidates: spec.n_candidates, n_cells: cells.len() });
        }
        let mut rng = seeding::rng(spec.seed, Stream::CandidateCoords);
        let mut picked = index::sample(&mut rng, cells.len(), spec.n_candidates).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| cells[i]).collect()
    } else {
        let area = match grid {
            Some(g) => Area {
                min: g.origin,
                max: Point::new(g.origin.x + g.width(), g.origin.y + g.height()),
            },
            None => Area::UNIT,
        };
        sample_candidates(area, spec.n_candidates, spec.seed)
    };
    let inst = Instance::new(cells, candidates, w, spec.n_servers, spec.capacity)?;
    Ok(match grid {
        Some(g) => inst.with_grid(g)?,
        None => inst,
    })
}

/// Pearson correlation between `w_ij` and `dist(i, j)` over pairs `i < j`.
pub fn workload_distance_correlation(instance: &Instance) -> f64 {
    let n = instance.n_cells();
    let pts = instance.cell_coords();
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let x = instance.w(i, j);
            let y = pts[i].dist(&pts[j]);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            k += 1.0;
        }
    }
    let cov = sxy / k - (sx / k) * (sy / k);
    let vx = sxx / k - (sx / k).powi(2);
    let vy = syy / k - (sy / k).powi(2);
    cov / (vx * vy).sqrt()
}
