//! Iteration engines: coded power iteration (row / column / SUMMA splitting),
//! coded orthogonal iteration for eigenvectors and truncated SVD, coded
//! gradient descent, and the baseline schemes they are compared against.
//!
//! Every step is a pure function of `(state, iteration randomness, survivor
//! set)`; the simulation harness owns the randomness.

pub mod grad;
pub mod ortho;
pub mod power;

/// Per-step decoding report fed into the metrics trace.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub survivors: usize,
    /// Decoded rank (or available-block count for the baselines).
    pub rank: usize,
    /// Realised `1 - rank/k`.
    pub delta: f64,
    /// Max elementwise deviation between the fast (right-multiplied) and
    /// cache (projector) paths where an engine computes both; zero elsewhere.
    pub dual_path_diff: f64,
}

impl StepInfo {
    pub fn new(survivors: usize, rank: usize, delta: f64) -> Self {
        StepInfo {
            survivors,
            rank,
            delta,
            dual_path_diff: 0.0,
        }
    }

    pub(crate) fn with_dual_path_diff(mut self, diff: f64) -> Self {
        self.dual_path_diff = diff;
        self
    }
}

impl Default for StepInfo {
    fn default() -> Self {
        StepInfo {
            survivors: 0,
            rank: 0,
            delta: 0.0,
            dual_path_diff: 0.0,
        }
    }
}
