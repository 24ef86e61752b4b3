//! Uniform grid archive over behavior space with MAP-Elites insertion
//! semantics and quality-diversity metrics.
//!
//! The behavior rectangle is tessellated into `resolution^k` uniformly spaced
//! cells; each cell holds at most one elite, the best solution seen in that
//! behavioral niche. Insertion is strict: a candidate replaces the incumbent
//! only when its fitness is strictly higher, so the QD-score grows by a
//! positive delta on every accepted insertion.
//!
//! Cells are stored sparsely in insertion order, which keeps uniform elite
//! selection O(1) and fully deterministic for a seeded RNG.

use std::io::Write;

use indexmap::IndexMap;
use rand::Rng;

use crate::{BehaviorDescriptor, QdError, SearchPoint};

/// One dimension of the behavior rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimBounds {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

/// The bounded behavior rectangle and its per-dimension grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorBounds {
    dims: Vec<DimBounds>,
}

impl BehaviorBounds {
    /// Builds bounds from `(lo, hi, resolution)` triples.
    ///
    /// Panics if any dimension has `lo >= hi` or zero resolution; bounds are
    /// constructed from validated configuration.
    pub fn new(dims: Vec<(f64, f64, usize)>) -> Self {
        assert!(!dims.is_empty(), "behavior space needs at least one dimension");
        let dims = dims
            .into_iter()
            .map(|(lo, hi, resolution)| {
                assert!(lo < hi, "behavior bounds require lo < hi (got {lo}..{hi})");
                assert!(resolution >= 1, "resolution must be at least 1");
                DimBounds { lo, hi, resolution }
            })
            .collect();
        Self { dims }
    }

    /// Number of behavior dimensions k.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, i: usize) -> DimBounds {
        self.dims[i]
    }

    pub fn total_cells(&self) -> u64 {
        self.dims.iter().map(|d| d.resolution as u64).product()
    }

    /// Maps a behavior onto integer cell coordinates. Per dimension the index
    /// is `floor((b - lo) / (hi - lo) * resolution)` clamped into
    /// `[0, resolution - 1]`, so out-of-range behaviors land in the boundary
    /// cell and the mapping is total.
    pub fn cell_index(&self, behavior: &[f64]) -> Vec<usize> {
        debug_assert_eq!(behavior.len(), self.k(), "behavior has wrong arity");
        self.dims
            .iter()
            .zip(behavior)
            .map(|(d, &b)| {
                let cell = ((b - d.lo) / (d.hi - d.lo) * d.resolution as f64).floor();
                (cell.max(0.0) as usize).min(d.resolution - 1)
            })
            .collect()
    }
}

/// A stored solution: its search point, behavior, and both fitness scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub point: SearchPoint,
    pub behavior: BehaviorDescriptor,
    /// Objective value in raw units (lower is better for the toy domain).
    pub raw_fitness: f64,
    /// Normalized fitness in `[0, 100]`, higher is better.
    pub fitness: f64,
}

/// Outcome of offering a candidate to the archive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InsertResult {
    /// The target cell was empty; delta equals the inserted fitness.
    NewCell { delta: f64 },
    /// The candidate replaced a strictly worse incumbent; delta is the
    /// fitness gain.
    Improved { delta: f64 },
    /// The cell already holds an equal-or-better elite; archive unchanged.
    Rejected,
}

impl InsertResult {
    pub fn new_cell(&self) -> bool {
        matches!(self, InsertResult::NewCell { .. })
    }

    pub fn accepted(&self) -> bool {
        !matches!(self, InsertResult::Rejected)
    }

    /// Archive improvement contributed by this insertion (0 when rejected).
    pub fn delta(&self) -> f64 {
        match self {
            InsertResult::NewCell { delta } | InsertResult::Improved { delta } => *delta,
            InsertResult::Rejected => 0.0,
        }
    }
}

/// Sparse uniform grid of elites.
#[derive(Debug, Clone)]
pub struct GridArchive {
    bounds: BehaviorBounds,
    cells: IndexMap<Vec<usize>, Elite>,
    qd_sum: f64,
}

impl GridArchive {
    pub fn new(bounds: BehaviorBounds) -> Self {
        Self {
            bounds,
            cells: IndexMap::new(),
            qd_sum: 0.0,
        }
    }

    pub fn bounds(&self) -> &BehaviorBounds {
        &self.bounds
    }

    /// Number of occupied cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_cells(&self) -> u64 {
        self.bounds.total_cells()
    }

    /// Elites in insertion order.
    pub fn elites(&self) -> impl Iterator<Item = &Elite> {
        self.cells.values()
    }

    /// Occupied cells with their coordinates, in insertion order.
    pub fn cells(&self) -> impl Iterator<Item = (&Vec<usize>, &Elite)> {
        self.cells.iter()
    }

    pub fn get(&self, cell: &[usize]) -> Option<&Elite> {
        self.cells.get(cell)
    }

    /// Offers a candidate to the archive. Empty target cell: store it and
    /// report the full fitness as the improvement. Occupied cell with strictly
    /// lower fitness: replace and report the difference. Otherwise the archive
    /// is unchanged. Ties reject, so accepted insertions always increase the
    /// QD-score.
    pub fn try_insert(&mut self, candidate: Elite) -> InsertResult {
        debug_assert!(
            (0.0..=100.0).contains(&candidate.fitness),
            "fitness must be normalized to [0, 100], got {}",
            candidate.fitness
        );
        let key = self.bounds.cell_index(&candidate.behavior);
        match self.cells.get_mut(&key) {
            None => {
                let delta = candidate.fitness;
                self.cells.insert(key, candidate);
                self.qd_sum += delta;
                InsertResult::NewCell { delta }
            }
            Some(incumbent) if candidate.fitness > incumbent.fitness => {
                let delta = candidate.fitness - incumbent.fitness;
                *incumbent = candidate;
                self.qd_sum += delta;
                InsertResult::Improved { delta }
            }
            Some(_) => InsertResult::Rejected,
        }
    }

    /// Sum of normalized fitness over all elites (0 for an empty archive).
    /// Maintained incrementally; see [`GridArchive::qd_score_recomputed`].
    pub fn qd_score(&self) -> f64 {
        self.qd_sum
    }

    /// Full recomputation of the QD-score, for consistency checks against the
    /// incrementally maintained value.
    pub fn qd_score_recomputed(&self) -> f64 {
        self.cells.values().map(|e| e.fitness).sum()
    }

    /// Occupied fraction of the behavior grid, in `[0, 1]`.
    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.total_cells() as f64
    }

    /// Best normalized fitness currently stored, if any.
    pub fn max_fitness(&self) -> Option<f64> {
        self.cells.values().map(|e| e.fitness).reduce(f64::max)
    }

    /// Uniform draw over occupied cells. Errors on an empty archive so the
    /// caller can fall back to its bootstrap path.
    pub fn random_elite<R: Rng>(&self, rng: &mut R) -> Result<&Elite, QdError> {
        if self.cells.is_empty() {
            return Err(QdError::EmptyArchive);
        }
        let idx = rng.random_range(0..self.cells.len());
        Ok(self.cells.get_index(idx).expect("index in range").1)
    }

    /// Two distinct elites drawn uniformly without replacement. Errors unless
    /// at least two cells are occupied.
    pub fn random_elite_pair<R: Rng>(&self, rng: &mut R) -> Result<(&Elite, &Elite), QdError> {
        if self.cells.len() < 2 {
            return Err(QdError::EmptyArchive);
        }
        let first = rng.random_range(0..self.cells.len());
        let mut second = rng.random_range(0..self.cells.len() - 1);
        if second >= first {
            second += 1;
        }
        Ok((
            self.cells.get_index(first).expect("index in range").1,
            self.cells.get_index(second).expect("index in range").1,
        ))
    }

    /// Writes the archive as CSV, one row per occupied cell in ascending cell
    /// order. Requires a two-dimensional behavior space (the dump format).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        assert_eq!(self.bounds.k(), 2, "archive dump format is two-dimensional");
        writeln!(w, "cell_x,cell_y,behavior_0,behavior_1,raw_fitness,fitness")?;
        for (key, elite) in self.sorted_cells() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                key[0], key[1], elite.behavior[0], elite.behavior[1], elite.raw_fitness, elite.fitness
            )?;
        }
        Ok(())
    }

    /// Writes one whitespace-separated search point per row, in the same row
    /// order as [`GridArchive::write_csv`].
    pub fn write_genomes<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (_, elite) in self.sorted_cells() {
            let row: Vec<String> = elite.point.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    fn sorted_cells(&self) -> Vec<(&Vec<usize>, &Elite)> {
        let mut rows: Vec<_> = self.cells.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_bounds() -> BehaviorBounds {
        BehaviorBounds::new(vec![(-51.2, 51.2, 500), (-51.2, 51.2, 500)])
    }

    fn elite(behavior: Vec<f64>, fitness: f64) -> Elite {
        Elite {
            point: vec![0.0; 4],
            behavior,
            raw_fitness: 100.0 - fitness,
            fitness,
        }
    }

    #[test]
    fn cell_index_examples() {
        let b = toy_bounds();
        assert_eq!(b.cell_index(&[0.0, 0.0]), vec![250, 250]);
        assert_eq!(b.cell_index(&[-51.2, -51.2]), vec![0, 0]);
        assert_eq!(b.cell_index(&[51.2, 51.2]), vec![499, 499]);
        // Out-of-range behaviors clamp to the boundary cells.
        assert_eq!(b.cell_index(&[-1000.0, 1000.0]), vec![0, 499]);
    }

    #[test]
    fn insert_empty_cell_is_new() {
        let mut archive = GridArchive::new(toy_bounds());
        let r = archive.try_insert(elite(vec![0.0, 0.0], 50.0));
        assert_eq!(r, InsertResult::NewCell { delta: 50.0 });
        assert_eq!(archive.len(), 1);
    }

    #[test]
    fn insert_worse_is_rejected() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![0.0, 0.0], 60.0));
        let r = archive.try_insert(elite(vec![0.0, 0.0], 50.0));
        assert_eq!(r, InsertResult::Rejected);
        assert_eq!(archive.get(&[250, 250]).unwrap().fitness, 60.0);
    }

    #[test]
    fn insert_better_improves() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![0.0, 0.0], 50.0));
        let r = archive.try_insert(elite(vec![0.0, 0.0], 60.0));
        assert_eq!(r, InsertResult::Improved { delta: 10.0 });
        assert_eq!(archive.get(&[250, 250]).unwrap().fitness, 60.0);
    }

    #[test]
    fn ties_reject() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![0.0, 0.0], 50.0));
        assert_eq!(
            archive.try_insert(elite(vec![0.0, 0.0], 50.0)),
            InsertResult::Rejected
        );
    }

    #[test]
    fn qd_score_and_coverage() {
        let mut archive = GridArchive::new(BehaviorBounds::new(vec![(0.0, 1.0, 2), (0.0, 1.0, 2)]));
        assert_eq!(archive.qd_score(), 0.0);
        assert_eq!(archive.coverage(), 0.0);
        archive.try_insert(elite(vec![0.1, 0.1], 50.0));
        archive.try_insert(elite(vec![0.9, 0.9], 60.0));
        assert_eq!(archive.qd_score(), 110.0);
        assert_eq!(archive.coverage(), 0.5);
        archive.try_insert(elite(vec![0.1, 0.1], 40.0));
        assert_eq!(archive.coverage(), 0.5);
    }

    #[test]
    fn random_elite_needs_occupancy() {
        let archive = GridArchive::new(toy_bounds());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            archive.random_elite(&mut rng),
            Err(QdError::EmptyArchive)
        ));
    }

    #[test]
    fn random_elite_single_is_certain() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![0.0, 0.0], 50.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(archive.random_elite(&mut rng).unwrap().fitness, 50.0);
        }
    }

    #[test]
    fn random_elite_is_uniform_over_two() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![-20.0, 0.0], 50.0));
        archive.try_insert(elite(vec![20.0, 0.0], 60.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000;
        let mut first = 0u32;
        for _ in 0..draws {
            if archive.random_elite(&mut rng).unwrap().fitness == 50.0 {
                first += 1;
            }
        }
        let freq = first as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn random_elite_pair_is_distinct() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![-20.0, 0.0], 50.0));
        archive.try_insert(elite(vec![20.0, 0.0], 60.0));
        archive.try_insert(elite(vec![0.0, 20.0], 70.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (a, b) = archive.random_elite_pair(&mut rng).unwrap();
            assert_ne!(a.fitness, b.fitness);
        }
    }

    #[test]
    fn csv_dump_is_sorted_and_parseable() {
        let mut archive = GridArchive::new(toy_bounds());
        archive.try_insert(elite(vec![20.0, 0.0], 60.0));
        archive.try_insert(elite(vec![-20.0, 0.0], 50.0));
        let mut buf = Vec::new();
        archive.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cell_x,cell_y,behavior_0,behavior_1,raw_fitness,fitness");
        assert_eq!(lines.len(), 3);
        // -20 sorts into a lower cell_x than +20.
        assert!(lines[1].starts_with("152,"));
        assert!(lines[2].starts_with("347,"));

        let mut genomes = Vec::new();
        archive.write_genomes(&mut genomes).unwrap();
        assert_eq!(String::from_utf8(genomes).unwrap().lines().count(), 2);
    }

    proptest! {
        #[test]
        fn cell_index_matches_edge_scan(
            bx in -60.0f64..60.0,
            by in -60.0f64..60.0,
            res in 1usize..64,
        ) {
            let bounds = BehaviorBounds::new(vec![(-51.2, 51.2, res), (-51.2, 51.2, res)]);
            let b = vec![bx, by];
            prop_assert_eq!(bounds.cell_index(&b), edge_scan(&bounds, &b));
        }

        #[test]
        fn metrics_are_monotone_under_insertion(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut archive = GridArchive::new(BehaviorBounds::new(vec![
                (-10.0, 10.0, 8),
                (-10.0, 10.0, 8),
            ]));
            let mut last_qd = 0.0;
            let mut last_cov = 0.0;
            for _ in 0..200 {
                let candidate = Elite {
                    point: vec![0.0],
                    behavior: vec![rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)],
                    raw_fitness: 0.0,
                    fitness: rng.random_range(0.0..100.0),
                };
                let before = archive.qd_score();
                let r = archive.try_insert(candidate);
                prop_assert_eq!(archive.qd_score(), before + r.delta());
                prop_assert!(archive.qd_score() >= last_qd);
                prop_assert!(archive.coverage() >= last_cov);
                prop_assert!(archive.len() as u64 <= archive.total_cells());
                last_qd = archive.qd_score();
                last_cov = archive.coverage();
            }
            let recomputed = archive.qd_score_recomputed();
            prop_assert!((archive.qd_score() - recomputed).abs() < 1e-9 * recomputed.max(1.0));
        }

        #[test]
        fn replaying_insertions_reproduces_archive(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let log: Vec<Elite> = (0..100)
                .map(|_| Elite {
                    point: vec![rng.random_range(-1.0..1.0)],
                    behavior: vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
                    raw_fitness: 0.0,
                    fitness: rng.random_range(0.0..100.0),
                })
                .collect();
            let bounds = BehaviorBounds::new(vec![(-10.0, 10.0, 5), (-10.0, 10.0, 5)]);
            let mut a = GridArchive::new(bounds.clone());
            let mut b = GridArchive::new(bounds);
            for e in &log {
                a.try_insert(e.clone());
            }
            for e in &log {
                b.try_insert(e.clone());
            }
            let rows_a: Vec<_> = a.sorted_cells().into_iter().map(|(k, e)| (k.clone(), e.clone())).collect();
            let rows_b: Vec<_> = b.sorted_cells().into_iter().map(|(k, e)| (k.clone(), e.clone())).collect();
            prop_assert_eq!(rows_a, rows_b);
        }

        #[test]
        fn occupied_cells_map_back_to_their_key(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut archive = GridArchive::new(BehaviorBounds::new(vec![
                (-10.0, 10.0, 6),
                (-10.0, 10.0, 6),
            ]));
            for _ in 0..100 {
                archive.try_insert(Elite {
                    point: vec![0.0],
                    behavior: vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
                    raw_fitness: 0.0,
                    fitness: rng.random_range(0.0..100.0),
                });
            }
            for (key, e) in archive.cells() {
                prop_assert_eq!(&archive.bounds().cell_index(&e.behavior), key);
            }
        }
    }

    /// Independent containment scan over explicit edge arrays.
    fn edge_scan(bounds: &BehaviorBounds, behavior: &[f64]) -> Vec<usize> {
        (0..bounds.k())
            .map(|d| {
                let DimBounds { lo, hi, resolution } = bounds.dim(d);
                let edges: Vec<f64> = (0..=resolution)
                    .map(|i| lo + (hi - lo) * i as f64 / resolution as f64)
                    .collect();
                let b = behavior[d];
                let mut cell = if b >= edges[resolution] {
                    resolution - 1
                } else {
                    0
                };
                for c in 0..resolution {
                    if b >= edges[c] && b < edges[c + 1] {
                        cell = c;
                        break;
                    }
                }
                cell
            })
            .collect()
    }
}
