//! Per-trial metrics: best-so-far tracking and interval snapshots.

use std::io::Write;
use std::time::Instant;

use crate::archive::GridArchive;
use crate::benchmarks::Evaluation;

/// One row of the metrics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSnapshot {
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    /// Best normalized fitness over every evaluation so far.
    pub max_fitness: f64,
    /// Raw objective value of that best solution.
    pub max_raw_fitness: f64,
    pub wall_time_s: f64,
}

/// How the wall-time column is filled.
///
/// Measured timing is the default. Fixed timing writes zeros so that two runs
/// of the same seed produce byte-identical metrics files; everything else in
/// the file is deterministic either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    #[default]
    Measured,
    Fixed,
}

/// Observes every evaluation of a trial and emits one snapshot per interval
/// (plus a closing snapshot when the budget is not a multiple of it).
#[derive(Debug)]
pub struct MetricsRecorder {
    interval: u64,
    timing: TimingMode,
    start: Instant,
    best_fitness: f64,
    best_raw: f64,
    snapshots: Vec<MetricsSnapshot>,
}

impl MetricsRecorder {
    pub fn new(interval: u64, timing: TimingMode) -> Self {
        assert!(interval >= 1, "snapshot interval must be positive");
        Self {
            interval,
            timing,
            start: Instant::now(),
            best_fitness: f64::NEG_INFINITY,
            best_raw: f64::INFINITY,
            snapshots: Vec::new(),
        }
    }

    fn wall_time(&self) -> f64 {
        match self.timing {
            TimingMode::Measured => self.start.elapsed().as_secs_f64(),
            TimingMode::Fixed => 0.0,
        }
    }

    fn push_snapshot(&mut self, evaluations: u64, archive: &GridArchive) {
        self.snapshots.push(MetricsSnapshot {
            evaluations,
            qd_score: archive.qd_score(),
            coverage: archive.coverage(),
            max_fitness: self.max_fitness(),
            max_raw_fitness: self.best_raw,
            wall_time_s: self.wall_time(),
        });
    }

    /// Records one evaluation (they must arrive in order) and snapshots on
    /// interval boundaries.
    pub fn observe(&mut self, evaluations: u64, eval: &Evaluation, archive: &GridArchive) {
        if eval.is_finite()
            && (eval.fitness > self.best_fitness
                || (eval.fitness == self.best_fitness && eval.raw < self.best_raw))
        {
            self.best_fitness = eval.fitness;
            self.best_raw = eval.raw;
        }
        if evaluations % self.interval == 0 {
            self.push_snapshot(evaluations, archive);
        }
    }

    /// Emits the closing snapshot when the final evaluation count did not
    /// land on an interval boundary.
    pub fn finalize(&mut self, evaluations: u64, archive: &GridArchive) {
        if evaluations > 0 && evaluations % self.interval != 0 {
            self.push_snapshot(evaluations, archive);
        }
    }

    /// Best normalized fitness so far; 0 before any evaluation.
    pub fn max_fitness(&self) -> f64 {
        if self.best_fitness.is_finite() {
            self.best_fitness
        } else {
            0.0
        }
    }

    /// Raw objective of the best solution so far (infinite before any
    /// evaluation).
    pub fn best_raw(&self) -> f64 {
        self.best_raw
    }

    pub fn snapshots(&self) -> &[MetricsSnapshot] {
        &self.snapshots
    }

    /// Writes `metrics.csv`: floats in shortest-roundtrip form, wall time
    /// with fixed precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "evaluations,qd_score,coverage,max_fitness,max_raw_fitness,wall_time_s"
        )?;
        for s in &self.snapshots {
            writeln!(
                w,
                "{},{},{},{},{},{:.6}",
                s.evaluations, s.qd_score, s.coverage, s.max_fitness, s.max_raw_fitness, s.wall_time_s
            )?;
        }
        Ok(())
    }
}
