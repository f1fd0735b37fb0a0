//! Per-epoch / per-round solver records.

use std::time::Instant;

/// One row of a solver trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// Epoch or round index (1-based).
    pub step: usize,
    /// Cumulative work in units of full data passes.
    pub passes: f64,
    pub objective: f64,
    pub gap: Option<f64>,
    pub grad_norm: f64,
    /// Cumulative bits communicated.
    pub bits: f64,
    /// Wall-clock time since the run started.
    pub ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Converged,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub algorithm: String,
    pub seed: u64,
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
}

impl SolverTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_objective(&self) -> f64 {
        self.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn diverged(&self) -> bool {
        self.status == RunStatus::Diverged
    }
}

/// Objective growth factor over the starting value that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Builds a trace while a solver runs.
#[derive(Debug)]
pub struct Tracer {
    start: Instant,
    trace: SolverTrace,
}

impl Tracer {
    pub fn new(algorithm: &str, seed: u64, initial_objective: f64) -> Self {
        Self {
            start: Instant::now(),
            trace: SolverTrace {
                algorithm: algorithm.to_string(),
                seed,
                initial_objective,
                records: Vec::new(),
                status: RunStatus::Completed,
            },
        }
    }

    /// Appends a row; returns `false` when the run must stop (divergence).
    pub fn record(&mut self, step: usize, passes: f64, objective: f64, gap: Option<f64>, grad_norm: f64, bits: f64) -> bool {
        let ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.trace.records.push(TraceRecord { step, passes, objective, gap, grad_norm, bits, ms });
        let init = self.trace.initial_objective;
        let diverged = !objective.is_finite() || (init > 0.0 && objective > DIVERGENCE_FACTOR * init);
        if diverged {
            self.trace.status = RunStatus::Diverged;
        }
        !diverged
    }

    pub fn converged(&mut self) {
        self.trace.status = RunStatus::Converged;
    }

    pub fn finish(self) -> SolverTrace {
        self.trace
    }
}
