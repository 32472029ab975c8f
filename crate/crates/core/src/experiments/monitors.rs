use crate::bounds::{gronwall, interval_update, EmbeddingConstants};
use crate::dynamics::{Model, TrajectoryRecord};
use crate::error::{Error, Result};

/// Ratios `‖∇u‖_∞ / (‖q‖_∞ (1 + log₊ ‖∇q‖_{L⁴}))` per snapshot; `None`
/// where `q ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEstimateReport {
    pub ratios: Vec<Option<f64>>,
    pub max: Option<f64>,
    pub skipped: usize,
}

pub fn log_estimate_monitor(model: &Model, record: &TrajectoryRecord) -> Result<LogEstimateReport> {
    if record.q.is_empty() {
        return Err(Error::Sampling("log-estimate monitor needs q snapshots".into()));
    }
    let basis = model.basis();
    let mut ratios = Vec::with_capacity(record.q.len());
    for q in &record.q {
        let qinf = basis.lp_norm(q, f64::INFINITY)?;
        if qinf == 0.0 {
            ratios.push(None);
            continue;
        }
        let grad4 = basis.grad_lp_norm(q, 4.0)?;
        let grad_u = model.solver().velocity_from_q(q)?.max_gradient(basis);
        ratios.push(Some(grad_u / (qinf * (1.0 + grad4.ln().max(0.0)))));
    }
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    let max = ratios.iter().flatten().copied().reduce(f64::max);
    Ok(LogEstimateReport {
        ratios,
        max,
        skipped,
    })
}

fn require_q_and_w(record: &TrajectoryRecord) -> Result<()> {
    if record.q.is_empty() || record.w.len() != record.q.len() {
        return Err(Error::Sampling(
            "envelope monitors need q and W snapshots at every recorded time".into(),
        ));
    }
    Ok(())
}

/// `‖∇q_t‖_{L⁴}` along a record with its a-posteriori envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct W14Report {
    pub times: Vec<f64>,
    pub series: Vec<f64>,
    pub sup: f64,
    /// Calibrated constant of the logarithmic velocity-gradient estimate.
    pub c_kato: f64,
    /// `None` when the envelope overflows.
    pub envelope: Option<Vec<f64>>,
    pub dominated: bool,
}

/// Integrates, for `y = ‖∇η‖_{L⁴}` and `g1`, `g2` the bounds of `‖∇W‖_{L⁴}`
/// and `‖∇²W‖_{L⁴}` from `‖W‖_{ℋ^{5/2}}`,
///
/// ```text
/// y' ≤ (K ‖q‖_∞ ℓ - γ) y + K ‖q‖_∞ ℓ g1 + ‖u‖_∞ g2 + γ g1,   ℓ = 1 + log₊(y + g1)
/// ```
///
/// with `K` the largest ratio seen by [`log_estimate_monitor`] on the same
/// record and `‖u‖_∞ ≤ B √(3|D|) ‖q‖_∞`; the envelope of `‖∇q‖_{L⁴}` is
/// `y + g1`.
pub fn w14_monitor(model: &Model, record: &TrajectoryRecord) -> Result<W14Report> {
    require_q_and_w(record)?;
    let basis = model.basis();
    let consts = EmbeddingConstants::new(model.solver());
    let gamma = model.config().gamma;
    let area = consts.area;
    let c_kato = log_estimate_monitor(model, record)?.max.unwrap_or(0.0);

    let series: Vec<f64> = record
        .q
        .iter()
        .map(|q| basis.grad_lp_norm(q, 4.0))
        .collect::<Result<_>>()?;
    let qinf: Vec<f64> = record
        .q
        .iter()
        .map(|q| basis.lp_norm(q, f64::INFINITY))
        .collect::<Result<_>>()?;
    let w: Vec<f64> = record
        .w
        .iter()
        .map(|w| basis.fractional_norm(w, 2.5))
        .collect::<Result<_>>()?;
    let g1: Vec<f64> = w.iter().map(|w| area.powf(0.25) * consts.c_grad * w).collect();
    let g2: Vec<f64> = w
        .iter()
        .map(|w| 3f64.sqrt() * area.powf(0.25) * consts.c_hess * w)
        .collect();
    let speed = |i: usize| consts.biot_savart * (3.0 * area).sqrt() * qinf[i];

    let y0 = basis.grad_lp_norm(&record.q[0].difference(&record.w[0]), 4.0)?;
    let mut y = y0;
    let mut env = Vec::with_capacity(series.len());
    env.push(y + g1[0]);
    let mut exponent = 0.0;
    let mut overflow = false;
    for i in 1..series.len() {
        let dt = record.times[i] - record.times[i - 1];
        let qi = qinf[i - 1].max(qinf[i]);
        let g1i = g1[i - 1].max(g1[i]);
        let g2i = g2[i - 1].max(g2[i]);
        let ui = speed(i - 1).max(speed(i));
        let coeffs = |ybound: f64| {
            let ell = 1.0 + (ybound + g1i).ln().max(0.0);
            let a = c_kato * qi * ell - gamma;
            let b = c_kato * qi * ell * g1i + ui * g2i + gamma * g1i;
            (a, b)
        };
        // The coefficients grow with y; re-evaluate at the tentative end value.
        let (mut a, mut b) = coeffs(y);
        let mut next = interval_update(y, a, b, dt);
        for _ in 0..3 {
            (a, b) = coeffs(next.max(y));
            next = interval_update(y, a, b, dt);
        }
        exponent += (a * dt).max(0.0);
        if exponent > 700.0 || !next.is_finite() {
            overflow = true;
            break;
        }
        y = next;
        env.push(y + g1[i]);
    }
    let envelope = if overflow { None } else { Some(env) };
    let dominated = envelope
        .as_ref()
        .is_some_and(|e| series.iter().zip(e).all(|(s, e)| s <= e));
    Ok(W14Report {
        times: record.times.clone(),
        sup: series.iter().copied().fold(0.0, f64::max),
        series,
        c_kato,
        envelope,
        dominated,
    })
}

/// Recorded `‖q_t‖_{L^{2k}}` with its a-posteriori envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct LpEnvelope {
    pub k: u32,
    pub observed: Vec<f64>,
    pub envelope: Option<Vec<f64>>,
    pub dominated: bool,
}

/// Envelopes for `‖q_t‖_{L^{2k}}` from the recorded `‖W‖_{ℋ^{5/2}}` and
/// `‖q_0‖_∞`. For the layer sum `S_k = Σ_i ‖η^i‖_{L^{2k}}`,
///
/// ```text
/// S_k' ≤ -γ S_k + 3|D|^{1/2k} C1 w B (E_1 + λ_{1,1}^{-5/4} w) + 3γ|D|^{1/2k} C0 w
/// ```
///
/// where `E_1` bounds `S_1` (for `k = 1` the `E_1` term moves into the
/// growth rate), `S_k(0) ≤ 3|D|^{1/2k} ‖q_0‖_∞`, and
/// `‖q‖_{L^{2k}} ≤ E_k + 3|D|^{1/2k} C0 w`.
pub fn lp_envelope(model: &Model, record: &TrajectoryRecord, ks: &[u32]) -> Result<Vec<LpEnvelope>> {
    require_q_and_w(record)?;
    if ks.contains(&0) {
        return Err(Error::UnsupportedExponent(0.0));
    }
    let basis = model.basis();
    let c = EmbeddingConstants::new(model.solver());
    let gamma = model.config().gamma;
    let area = c.area;
    let w: Vec<f64> = record
        .w
        .iter()
        .map(|w| basis.fractional_norm(w, 2.5))
        .collect::<Result<_>>()?;
    let q0inf = basis.lp_norm(&record.q[0], f64::INFINITY)?;
    let times = &record.times;
    let wl2 = c.l2_from_h52();

    // E_1 first: it feeds the velocity bound of every k.
    let d1 = area.sqrt();
    let a1: Vec<f64> = w
        .iter()
        .map(|w| -gamma + 3.0 * d1 * c.c_grad * w * c.biot_savart)
        .collect();
    let b1: Vec<f64> = w
        .iter()
        .map(|w| 3.0 * d1 * c.c_grad * w * c.biot_savart * wl2 * w + 3.0 * gamma * d1 * c.c0 * w)
        .collect();
    let e1 = gronwall(times, &a1, &b1, 3.0 * d1 * q0inf, 700.0);

    ks.iter()
        .map(|&k| {
            let p = 2.0 * k as f64;
            let observed: Vec<f64> = record
                .q
                .iter()
                .map(|q| basis.lp_norm(q, p))
                .collect::<Result<_>>()?;
            let dk = area.powf(1.0 / p);
            let ek = match (&e1, k) {
                (None, _) => None,
                (Some(e1), 1) => Some(e1.clone()),
                (Some(e1), _) => {
                    let a = vec![-gamma; times.len()];
                    let b: Vec<f64> = w
                        .iter()
                        .zip(e1)
                        .map(|(w, e)| {
                            3.0 * dk * c.c_grad * w * c.biot_savart * (e + wl2 * w)
                                + 3.0 * gamma * dk * c.c0 * w
                        })
                        .collect();
                    gronwall(times, &a, &b, 3.0 * dk * q0inf, 700.0)
                }
            };
            let envelope = ek.map(|e| {
                e.iter()
                    .zip(&w)
                    .map(|(e, w)| e + 3.0 * dk * c.c0 * w)
                    .collect::<Vec<f64>>()
            });
            let dominated = envelope
                .as_ref()
                .is_some_and(|e| observed.iter().zip(e).all(|(o, e)| o <= e));
            Ok(LpEnvelope {
                k,
                observed,
                envelope,
                dominated,
            })
        })
        .collect()
}
