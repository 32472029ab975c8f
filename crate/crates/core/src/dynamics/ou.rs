//! Stochastic convolution `ζ_λ(t) = ∫_0^t e^{-λ(t-s)} dW_s`, stepped exactly
//! in each noise mode.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::noise::NoiseModel;
use crate::error::{Error, Result};
use crate::spectral::{LayerField, SpectralBasis};

/// Coefficients `ζ̂_k = ⟨ζ_λ, ρ_k⟩` over the retained noise modes.
#[derive(Debug, Clone, PartialEq)]
pub struct OuState {
    pub rate: f64,
    pub time: f64,
    pub coeffs: Vec<f64>,
}

impl OuState {
    pub fn zero(rate: f64, modes: usize) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::config("OU rate must be positive"));
        }
        Ok(Self {
            rate,
            time: 0.0,
            coeffs: vec![0.0; modes],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `Σ_k ζ̂_k² λ_{n_k,m_k}^α`, the squared spectral `ℋ^α` norm.
    pub fn fractional_norm_sq(&self, noise: &NoiseModel, basis: &SpectralBasis, alpha: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(noise.pairs())
            .map(|(z, p)| z * z * basis.eigenvalue(p.n, p.m).powf(alpha))
            .sum()
    }

    pub fn fractional_norm(&self, noise: &NoiseModel, basis: &SpectralBasis, alpha: f64) -> f64 {
        self.fractional_norm_sq(noise, basis, alpha).sqrt()
    }

    pub fn to_field(&self, noise: &NoiseModel) -> LayerField {
        let amps: Vec<f64> = self
            .coeffs
            .iter()
            .zip(noise.coefficients())
            .map(|(z, c)| if *c == 0.0 { 0.0 } else { z / c })
            .collect();
        noise.field_from_amplitudes(&amps)
    }
}

fn validate(dt: f64, state: &OuState, noise: &NoiseModel) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("time step must be positive"));
    }
    if state.coeffs.len() != noise.len() {
        return Err(Error::shape(
            format!("{} OU coefficients", noise.len()),
            state.coeffs.len(),
        ));
    }
    Ok(())
}

/// Exact update `ζ̂_k ← e^{-λΔt} ζ̂_k + c_k √((1 - e^{-2λΔt})/(2λ)) ξ_k`.
pub fn ou_step<R: Rng + ?Sized>(
    state: &mut OuState,
    noise: &NoiseModel,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    validate(dt, state, noise)?;
    let lam = state.rate;
    let decay = (-lam * dt).exp();
    let sd = (-(-2.0 * lam * dt).exp_m1() / (2.0 * lam)).sqrt();
    for (z, c) in state.coeffs.iter_mut().zip(noise.coefficients()) {
        let xi: f64 = StandardNormal.sample(rng);
        *z = decay * *z + c * sd * xi;
    }
    state.time += dt;
    Ok(())
}

/// Exact update driven by the same Brownian motion as a path whose
/// increment over the step is `ΔB_k = √Δt xi_dw[k]`. The stochastic
/// integral `∫ e^{-λ(t+Δt-s)} dB_k` is drawn jointly Gaussian with `ΔB_k`
/// using the extra normals `xi_extra`.
pub fn ou_step_coupled(
    state: &mut OuState,
    noise: &NoiseModel,
    dt: f64,
    xi_dw: &[f64],
    xi_extra: &[f64],
) -> Result<()> {
    validate(dt, state, noise)?;
    if xi_dw.len() != noise.len() || xi_extra.len() != noise.len() {
        return Err(Error::shape(
            format!("{} normals", noise.len()),
            format!("{} and {}", xi_dw.len(), xi_extra.len()),
        ));
    }
    let lam = state.rate;
    let decay = (-lam * dt).exp();
    let var_i = -(-2.0 * lam * dt).exp_m1() / (2.0 * lam);
    let cov = -(-lam * dt).exp_m1() / lam;
    let a = cov / dt.sqrt();
    let b = (var_i - a * a).max(0.0).sqrt();
    for (((z, c), x1), x2) in state
        .coeffs
        .iter_mut()
        .zip(noise.coefficients())
        .zip(xi_dw)
        .zip(xi_extra)
    {
        *z = decay * *z + c * (a * x1 + b * x2);
    }
    state.time += dt;
    Ok(())
}
