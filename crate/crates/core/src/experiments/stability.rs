use rayon::prelude::*;

use super::{ReportRow, SweepReport};
use crate::config::SimConfig;
use crate::dynamics::{Model, TrajectoryRecord};
use crate::dynamics::{run_trajectory, RecordOptions};
use crate::error::{Error, Result};
use crate::spectral::LayerField;

/// Stability report together with the recorded `z_t` series per `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityStudy {
    pub report: SweepReport,
    pub times: Vec<f64>,
    pub z_series: Vec<Vec<f64>>,
}

fn snapshots(model: &Model) -> RecordOptions {
    RecordOptions {
        every: model.config().record_every,
        store_q: true,
        store_eta_w: false,
        observables: Vec::new(),
    }
}

/// `z_t = ‖∇(ψ_t - ψ'_t)‖_{L²}` between two recorded runs.
fn z_series(model: &Model, a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<Vec<f64>> {
    a.q.iter()
        .zip(&b.q)
        .map(|(x, y)| {
            let psi = model.solver().solve(&x.difference(y))?;
            model.basis().fractional_norm(&psi, 1.0)
        })
        .collect()
}

/// `z_t` between paths from `q0` and `q0b` on the same noise stream.
pub fn stability_pair(
    model: &Model,
    q0: &LayerField,
    q0b: &LayerField,
    stream_id: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = run_trajectory(model, q0, &snapshots(model), stream_id)?;
    let b = run_trajectory(model, q0b, &snapshots(model), stream_id)?;
    Ok((a.times.clone(), z_series(model, &a, &b)?))
}

/// Runs `q0` and `q0 + δ p` (with `p` normalized to unit sup norm) on one
/// noise path for every `δ` of a strictly decreasing positive ladder and
/// reports `z_T`, which should shrink with `δ`, and the largest
/// step-to-step jump of `z` per run.
pub fn yudovich_stability(
    config: &SimConfig,
    deltas: &[f64],
    perturbation: &LayerField,
) -> Result<StabilityStudy> {
    if deltas.is_empty() {
        return Err(Error::Ladder("stability ladder is empty".into()));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Ladder("perturbation sizes must be positive".into()));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Ladder("perturbation sizes must be strictly decreasing".into()));
    }
    let model = Model::build(config)?;
    let sup = model.basis().lp_norm(perturbation, f64::INFINITY)?;
    if !(sup > 0.0 && sup.is_finite()) {
        return Err(Error::config("perturbation must be nonzero and finite"));
    }
    let p = model.basis().to_spectral(perturbation)?.scaled(1.0 / sup);
    let q0 = config.initial.build(model.basis())?;
    let base = run_trajectory(&model, &q0, &snapshots(&model), 0)?;

    let runs: Vec<Vec<f64>> = deltas
        .par_iter()
        .map(|&d| {
            let mut q0b = q0.clone();
            q0b.add_scaled(d, &p);
            let rec = run_trajectory(&model, &q0b, &snapshots(&model), 0)?;
            z_series(&model, &base, &rec)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (d, z) in deltas.iter().zip(&runs) {
        rows.push(ReportRow {
            from: *d,
            to: 0.0,
            metric: "z_T".into(),
            value: *z.last().expect("records are nonempty"),
        });
    }
    for (d, z) in deltas.iter().zip(&runs) {
        let jump = z.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        rows.push(ReportRow {
            from: *d,
            to: 0.0,
            metric: "max_jump".into(),
            value: jump,
        });
    }
    Ok(StabilityStudy {
        report: SweepReport::new("stability", deltas.to_vec(), "z_T", rows, Vec::new()),
        times: base.times,
        z_series: runs,
    })
}
