//! Parameter sweeps, stability runs, weak-form residuals and a-posteriori
//! norm monitors.

mod monitors;
mod stability;
mod sweeps;
mod weak;

pub use monitors::{
    log_estimate_monitor, lp_envelope, w14_monitor, LogEstimateReport, LpEnvelope, W14Report,
};
pub use stability::{stability_pair, yudovich_stability, StabilityStudy};
pub use sweeps::{galerkin_sweep, viscosity_sweep};
pub use weak::weak_residual;

/// One named value attached to a rung pair (or a single rung, `from == to`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub from: f64,
    pub to: f64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: String,
    pub ladder: Vec<f64>,
    /// Name of the metric the verdict is about.
    pub metric: String,
    pub rows: Vec<ReportRow>,
    /// True when the verdict metric strictly decreases along the ladder.
    pub monotone: bool,
    /// Index of the first row of the verdict metric that fails to decrease.
    pub first_violation: Option<usize>,
    /// Mean of `log2(d_i / d_{i+1})` over consecutive verdict values.
    pub rate: Option<f64>,
    /// Wall-clock seconds per rung. Not part of any serialized output.
    pub runtimes: Vec<f64>,
}

impl SweepReport {
    fn new(kind: &str, ladder: Vec<f64>, metric: &str, rows: Vec<ReportRow>, runtimes: Vec<f64>) -> Self {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.value)
            .collect();
        let first_violation = values.windows(2).position(|w| !(w[1] < w[0]));
        let rate = if values.len() >= 2 && values.iter().all(|v| *v > 0.0) {
            let logs: Vec<f64> = values.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
            Some(logs.iter().sum::<f64>() / logs.len() as f64)
        } else {
            None
        };
        Self {
            kind: kind.to_string(),
            ladder,
            metric: metric.to_string(),
            rows,
            monotone: first_violation.is_none(),
            first_violation,
            rate,
            runtimes,
        }
    }

    /// Values of one metric in row order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.values(&self.metric)
    }

    /// Human-readable verdict line.
    pub fn verdict(&self) -> String {
        match self.first_violation {
            None => format!("{}: {} strictly decreasing", self.kind, self.metric),
            Some(i) => format!(
                "{}: {} fails to decrease at row {} ({} -> {})",
                self.kind,
                self.metric,
                i + 1,
                self.rows[i].from,
                self.rows[i].to
            ),
        }
    }
}

/// Composite trapezoid rule for samples `f` at `times`.
pub(crate) fn trapezoid(times: &[f64], f: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(f.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}
