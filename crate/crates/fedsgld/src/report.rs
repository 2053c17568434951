//! Experiment results: one cell per (strategy, day) plus the per-round
//! curves, serializable so a finished run can be re-rendered from disk
//! alone.

use serde::{Deserialize, Serialize};

use crate::federation::Strategy;
use crate::metrics::CalibrationBins;

/// One row of the training curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: Strategy,
    pub day: usize,
    pub iteration: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// End-of-day evaluation for one strategy on one day. `trained` is false
/// for transfer-learning days after the first, which reuse the day-1
/// posterior without further rounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyDayCell {
    pub strategy: Strategy,
    pub day: usize,
    pub trained: bool,
    /// Posterior-averaged predictive accuracy on the day's validation set.
    pub final_accuracy: f64,
    pub final_ece: f64,
    /// First round whose single-model validation accuracy reached the
    /// threshold; `None` when never reached or never trained.
    pub iterations_to_threshold: Option<usize>,
    pub bins: CalibrationBins,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub threshold: f64,
    pub cells: Vec<StrategyDayCell>,
    pub curves: Vec<CurvePoint>,
}

impl ExperimentReport {
    /// Combine per-strategy reports into one; cells and curves keep their
    /// input order.
    pub fn merge<I: IntoIterator<Item = ExperimentReport>>(reports: I) -> Option<ExperimentReport> {
        let mut iter = reports.into_iter();
        let mut merged = iter.next()?;
        for r in iter {
            merged.cells.extend(r.cells);
            merged.curves.extend(r.curves);
        }
        Some(merged)
    }

    pub fn cell(&self, strategy: Strategy, day: usize) -> Option<&StrategyDayCell> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.day == day)
    }

    pub fn accuracy_curve(&self, strategy: Strategy, day: usize) -> Vec<f64> {
        self.curves
            .iter()
            .filter(|p| p.strategy == strategy && p.day == day)
            .map(|p| p.val_accuracy)
            .collect()
    }

    pub fn days(&self) -> Vec<usize> {
        let mut days: Vec<usize> = self.cells.iter().map(|c| c.day).collect();
        days.sort_unstable();
        days.dedup();
        days
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        let mut out = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.strategy) {
                out.push(c.strategy);
            }
        }
        out
    }
}
