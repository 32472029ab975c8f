use std::time::Instant;

use rayon::prelude::*;

use super::{trapezoid, ReportRow, SweepReport};
use crate::config::SimConfig;
use crate::coupling::{LayerCoupling, OperatorEigenpairs};
use crate::dynamics::{run_trajectory, Model, RecordOptions, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::spectral::{LayerField, SpectralBasis};

fn snapshot_options(model: &Model) -> RecordOptions {
    RecordOptions {
        every: model.config().record_every,
        store_q: true,
        store_eta_w: false,
        observables: Vec::new(),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Refines `N` along `n_ladder` (each rung doubling the previous) on one
/// noise path and reports `sup_t ‖q^N - q^{2N}‖_{L²}` between consecutive
/// rungs.
///
/// Every rung uses `nx = ny = N` with the default grid. The noise lives on
/// the eigenpairs of the coarsest basis and the initial datum is built on
/// the coarsest basis, so all rungs see identical forcing and data.
pub fn galerkin_sweep(config: &SimConfig, n_ladder: &[usize]) -> Result<SweepReport> {
    if n_ladder.len() < 3 {
        return Err(Error::Ladder(format!(
            "galerkin ladder needs at least 3 rungs, got {}",
            n_ladder.len()
        )));
    }
    if n_ladder[0] == 0 || n_ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Ladder(
            "galerkin ladder must be ascending powers-of-two refinements".into(),
        ));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::config("galerkin sweep requires epsilon > 0"));
    }
    let coarse = SimConfig {
        nx: n_ladder[0],
        ny: n_ladder[0],
        gx: None,
        gy: None,
        ..config.clone()
    };
    coarse.validate()?;
    let noise_modes = coarse.resolved_noise_modes();
    let coarse_basis = SpectralBasis::with_default_grid(coarse.lx, coarse.ly, coarse.nx, coarse.ny)?;
    let coupling = LayerCoupling::symmetrize(config.lambdas, Some(config.lambda_scale))?;
    let noise_pairs =
        OperatorEigenpairs::compute(&coarse_basis, &coupling, 3 * coarse.nx * coarse.ny)?;
    let q0_coarse = config.initial.build(&coarse_basis)?;

    let runs: Vec<(TrajectoryRecord, f64)> = n_ladder
        .par_iter()
        .map(|&n| {
            timed(|| {
                let cfg = SimConfig {
                    nx: n,
                    ny: n,
                    gx: None,
                    gy: None,
                    noise_modes: Some(noise_modes),
                    ..config.clone()
                };
                let model = Model::build_with_noise_from(&cfg, &noise_pairs)?;
                let q0 = q0_coarse.resized(n, n);
                run_trajectory(&model, &q0, &snapshot_options(&model), 0)
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, pair) in runs.windows(2).enumerate() {
        let fine_n = n_ladder[i + 1];
        let d = sup_distance(&pair[0].0, &pair[1].0, |a, b| {
            a.resized(fine_n, fine_n).difference(b).sum_squares().sqrt()
        })?;
        rows.push(ReportRow {
            from: n_ladder[i] as f64,
            to: n_ladder[i + 1] as f64,
            metric: "sup_l2".into(),
            value: d,
        });
    }
    Ok(SweepReport::new(
        "galerkin",
        n_ladder.iter().map(|&n| n as f64).collect(),
        "sup_l2",
        rows,
        runs.iter().map(|r| r.1).collect(),
    ))
}

fn sup_distance(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
    dist: impl Fn(&LayerField, &LayerField) -> f64,
) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::Sampling("rungs recorded at different times".into()));
    }
    Ok(a.q
        .iter()
        .zip(&b.q)
        .map(|(x, y)| dist(x, y))
        .fold(0.0, f64::max))
}

/// Runs the same path at each `ε` of a strictly decreasing ladder and
/// reports `sup_t ‖q^{ε_i} - q^{ε_{i+1}}‖_{H^{-1}}` between consecutive
/// rungs, plus `ε (∫_0^T ‖q^ε‖²_{H¹} dt)^{1/2}` per rung as metric `est2`.
pub fn viscosity_sweep(config: &SimConfig, eps_ladder: &[f64]) -> Result<SweepReport> {
    if eps_ladder.len() < 3 {
        return Err(Error::Ladder(format!(
            "viscosity ladder needs at least 3 rungs, got {}",
            eps_ladder.len()
        )));
    }
    if eps_ladder.iter().any(|e| !(e.is_finite() && *e >= 0.0))
        || eps_ladder.windows(2).any(|w| !(w[1] < w[0]))
    {
        return Err(Error::Ladder(
            "viscosity ladder must be strictly decreasing and nonnegative".into(),
        ));
    }
    let runs: Vec<(TrajectoryRecord, f64)> = eps_ladder
        .par_iter()
        .map(|&eps| {
            timed(|| {
                let cfg = SimConfig {
                    epsilon: eps,
                    ..config.clone()
                };
                let model = Model::build(&cfg)?;
                let q0 = cfg.initial.build(model.basis())?;
                run_trajectory(&model, &q0, &snapshot_options(&model), 0)
            })
        })
        .collect::<Result<_>>()?;
    let basis = SpectralBasis::build(
        config.lx,
        config.ly,
        config.nx,
        config.ny,
        config.grid().0,
        config.grid().1,
    )?;

    let mut rows = Vec::new();
    for (i, pair) in runs.windows(2).enumerate() {
        let d = sup_distance(&pair[0].0, &pair[1].0, |a, b| {
            basis.dual_h1_distance(a, b).expect("rungs share one basis")
        })?;
        rows.push(ReportRow {
            from: eps_ladder[i],
            to: eps_ladder[i + 1],
            metric: "sup_h-1".into(),
            value: d,
        });
    }
    for (eps, (rec, _)) in eps_ladder.iter().zip(&runs) {
        let h1sq: Vec<f64> = rec
            .q
            .iter()
            .map(|q| basis.fractional_norm(q, 1.0).map(|v| v * v))
            .collect::<Result<_>>()?;
        rows.push(ReportRow {
            from: *eps,
            to: *eps,
            metric: "est2".into(),
            value: eps * trapezoid(&rec.times, &h1sq).sqrt(),
        });
    }
    Ok(SweepReport::new(
        "viscosity",
        eps_ladder.to_vec(),
        "sup_h-1",
        rows,
        runs.iter().map(|r| r.1).collect(),
    ))
}
