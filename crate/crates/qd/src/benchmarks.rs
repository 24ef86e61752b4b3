//! The linear-projection toy domain: offset sphere and Rastrigin objectives,
//! a clipped projection from the search space into a two-dimensional behavior
//! space, fitness normalization, and the behavior-space narrowing report.
//!
//! The search space is unbounded. Objectives are evaluated on the raw search
//! point; clipping applies only to the behavior projection. Both objectives
//! have their optimum shifted away from the origin so that the best solution
//! does not sit at the center of the behavior space.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::BehaviorBounds;
use crate::BehaviorDescriptor;

/// Per-component clip bound; also the conventional Rastrigin domain half-width.
pub const CLIP_BOUND: f64 = 5.12;

/// Offset applied to both objectives so the optimum sits at `offset * 1`.
pub const OPTIMUM_OFFSET: f64 = CLIP_BOUND * 0.4; // 2.048

/// Which objective the toy domain evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveFunction {
    Sphere,
    Rastrigin,
}

impl ObjectiveFunction {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveFunction::Sphere => "sphere",
            ObjectiveFunction::Rastrigin => "rastrigin",
        }
    }
}

impl std::fmt::Display for ObjectiveFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Offset sphere: `sum_i (x_i - offset)^2`. Zero at `x = offset * 1`.
pub fn sphere_raw(x: &[f64], offset: f64) -> f64 {
    x.iter().map(|xi| (xi - offset).powi(2)).sum()
}

/// Offset Rastrigin: `10n + sum_i [(x_i - offset)^2 - 10 cos(2 pi (x_i - offset))]`.
/// Zero at `x = offset * 1`.
pub fn rastrigin_raw(x: &[f64], offset: f64) -> f64 {
    let n = x.len() as f64;
    10.0 * n
        + x.iter()
            .map(|xi| {
                let y = xi - offset;
                y * y - 10.0 * (2.0 * PI * y).cos()
            })
            .sum::<f64>()
}

/// Restricts a component's contribution to the behavior space to
/// `[-CLIP_BOUND, CLIP_BOUND]`: identity inside the interval, `CLIP_BOUND / v`
/// outside (which folds far-away values toward zero).
pub fn clip(v: f64) -> f64 {
    if (-CLIP_BOUND..=CLIP_BOUND).contains(&v) {
        v
    } else {
        CLIP_BOUND / v
    }
}

/// Projects a search point into behavior space: the clipped sum of the first
/// `floor(n/2)` components and the clipped sum of the rest.
pub fn project(x: &[f64]) -> BehaviorDescriptor {
    debug_assert!(x.len() >= 2, "projection needs at least two components");
    let half = x.len() / 2;
    let first: f64 = x[..half].iter().copied().map(clip).sum();
    let second: f64 = x[half..].iter().copied().map(clip).sum();
    vec![first, second]
}

/// Worst-case raw objective value over the clipped per-coordinate interval,
/// used as the normalization scale. For the sphere this is
/// `n * (CLIP_BOUND + offset)^2`; Rastrigin adds the cosine term's max of 20
/// per coordinate.
pub fn worst_raw(function: ObjectiveFunction, n: usize) -> f64 {
    let reach = (CLIP_BOUND + OPTIMUM_OFFSET).powi(2);
    match function {
        ObjectiveFunction::Sphere => n as f64 * reach,
        ObjectiveFunction::Rastrigin => n as f64 * (reach + 20.0),
    }
}

/// Maps a raw objective value (0 = optimal) onto `[0, 100]` with 100 optimal:
/// `100 * (1 - raw / worst)`, clamped. Monotonically non-increasing in `raw`.
pub fn normalize_fitness(raw: f64, function: ObjectiveFunction, n: usize) -> f64 {
    let scaled = 100.0 * (1.0 - raw / worst_raw(function, n));
    scaled.clamp(0.0, 100.0)
}

/// One evaluated solution: where it lands in behavior space, its raw objective
/// value (lower is better, 0 optimal), and its normalized fitness in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub behavior: BehaviorDescriptor,
    pub raw: f64,
    pub fitness: f64,
}

impl Evaluation {
    /// False when the objective or projection produced a non-finite value;
    /// such records are excluded from archive insertion.
    pub fn is_finite(&self) -> bool {
        self.raw.is_finite() && self.fitness.is_finite() && self.behavior.iter().all(|b| b.is_finite())
    }
}

/// The benchmark domain: an objective, a search dimension, and the analytic
/// behavior bounds induced by the clipped projection.
#[derive(Debug, Clone)]
pub struct ToyDomain {
    pub function: ObjectiveFunction,
    pub n: usize,
    pub offset: f64,
}

impl ToyDomain {
    pub fn new(function: ObjectiveFunction, n: usize) -> Self {
        assert!(n >= 2, "toy domain requires n >= 2");
        Self {
            function,
            n,
            offset: OPTIMUM_OFFSET,
        }
    }

    /// Analytic behavior bounds: the first component sums `floor(n/2)` clipped
    /// values, the second the remaining `ceil(n/2)`.
    pub fn behavior_bounds(&self, resolution: usize) -> BehaviorBounds {
        let lo_half = (self.n / 2) as f64;
        let hi_half = self.n as f64 - lo_half;
        BehaviorBounds::new(vec![
            (-CLIP_BOUND * lo_half, CLIP_BOUND * lo_half, resolution),
            (-CLIP_BOUND * hi_half, CLIP_BOUND * hi_half, resolution),
        ])
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        match self.function {
            ObjectiveFunction::Sphere => sphere_raw(x, self.offset),
            ObjectiveFunction::Rastrigin => rastrigin_raw(x, self.offset),
        }
    }

    /// Behavior projection, raw objective, and normalized fitness in one pass.
    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        debug_assert_eq!(x.len(), self.n);
        let raw = self.raw(x);
        Evaluation {
            behavior: project(x),
            raw,
            fitness: normalize_fitness(raw, self.function, self.n),
        }
    }
}

/// One row of the narrowing report: what fraction of behavior cells a uniform
/// sample of the search space reaches at dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatesRow {
    pub n: usize,
    pub cells_hit: u64,
    pub total_cells: u64,
    pub coverage: f64,
}

/// Demonstrates how the clipped linear projection concentrates behavior mass
/// as the search dimension grows: for each `n`, draws `samples` points
/// uniformly from the clip box, projects them, bins them into the analytic
/// bounds at `resolution` cells per dimension, and reports the fraction of
/// cells hit. Coverage is non-increasing in `n` up to sampling noise.
pub fn bates_narrowing_report<R: Rng>(
    dims: &[usize],
    samples: u64,
    resolution: usize,
    rng: &mut R,
) -> Vec<BatesRow> {
    dims.iter()
        .map(|&n| {
            let domain = ToyDomain::new(ObjectiveFunction::Sphere, n);
            let bounds = domain.behavior_bounds(resolution);
            let mut hit: HashSet<u64> = HashSet::new();
            let mut x = vec![0.0; n];
            for _ in 0..samples {
                for xi in x.iter_mut() {
                    *xi = rng.random_range(-CLIP_BOUND..=CLIP_BOUND);
                }
                let idx = bounds.cell_index(&project(&x));
                hit.insert(idx[0] as u64 * resolution as u64 + idx[1] as u64);
            }
            let total_cells = bounds.total_cells();
            BatesRow {
                n,
                cells_hit: hit.len() as u64,
                total_cells,
                coverage: hit.len() as f64 / total_cells as f64,
            }
        })
        .collect()
}
