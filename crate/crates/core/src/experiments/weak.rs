use ndarray::Zip;

use super::trapezoid;
use crate::dynamics::{Model, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::spectral::{LayerField, NUM_LAYERS};

/// Residual of the weak formulation tested against a band-limited `φ`:
///
/// ```text
/// r_t = ⟨q_t, φ⟩ - ⟨q_0, φ⟩ - ∫_0^t ⟨q, u·∇φ⟩ + γ ∫_0^t ⟨q, φ⟩
///       - ε² ∫_0^t ⟨q - W, Δφ⟩ - ⟨W_t, φ⟩
/// ```
///
/// (the transport integral is dropped for linear models) with time
/// integrals by the trapezoid rule over the recorded times. The
/// record must hold `q` and `W` snapshots (at least three).
pub fn weak_residual(model: &Model, record: &TrajectoryRecord, phi: &LayerField) -> Result<Vec<f64>> {
    let basis = model.basis();
    basis.check_spectral(phi)?;
    if record.q.len() < 3 || record.w.len() != record.q.len() || record.times.len() != record.q.len() {
        return Err(Error::Sampling(format!(
            "weak residual needs at least 3 recorded q and W snapshots, found {} and {}",
            record.q.len(),
            record.w.len()
        )));
    }
    let config = model.config();
    let grad_phi = basis.gradient_grid(phi)?;
    let mut lap_phi = phi.clone();
    for l in 0..NUM_LAYERS {
        Zip::from(lap_phi.layer_mut(l))
            .and(basis.eigenvalues())
            .for_each(|c, lam| *c *= -lam);
    }

    let mut transport = Vec::with_capacity(record.q.len());
    let mut damping = Vec::with_capacity(record.q.len());
    let mut viscous = Vec::with_capacity(record.q.len());
    let mut pair_q = Vec::with_capacity(record.q.len());
    let mut pair_w = Vec::with_capacity(record.q.len());
    for (q, w) in record.q.iter().zip(&record.w) {
        pair_q.push(q.coefficient_dot(phi));
        pair_w.push(w.coefficient_dot(phi));
        viscous.push(q.difference(w).coefficient_dot(&lap_phi));
        damping.push(pair_q[pair_q.len() - 1]);
        if !config.nonlinear {
            transport.push(0.0);
            continue;
        }
        let u = model.solver().velocity_from_q(q)?.grid(basis);
        let qg = basis.to_grid(q)?;
        let mut t = 0.0;
        for l in 0..NUM_LAYERS {
            let [ux, uy] = &u[l];
            let [px, py] = &grad_phi[l];
            let integrand = Zip::from(qg.layer(l))
                .and(ux)
                .and(uy)
                .and(px)
                .and(py)
                .map_collect(|q, ux, uy, px, py| q * (ux * px + uy * py));
            t += basis.integrate(integrand.view());
        }
        transport.push(t);
    }

    let eps2 = config.epsilon.powi(2);
    let gamma = config.gamma;
    let times = &record.times;
    Ok((0..times.len())
        .map(|i| {
            let t = &times[..=i];
            let r = pair_q[i] - pair_q[0] - trapezoid(t, &transport[..=i])
                + gamma * trapezoid(t, &damping[..=i])
                - eps2 * trapezoid(t, &viscous[..=i])
                - pair_w[i];
            r.abs()
        })
        .collect())
}
