//! Exponential Euler stepping of `η = q - W`:
//!
//! ```text
//! ∂_t η = -(γ - ε²Δ) η - P[u·∇q] - γ W,    q = η + W,  u = ∇⊥(A + L)^{-1} q
//! ```
//!
//! The linear part is integrated exactly per mode; transport and the `W`
//! forcing are frozen over the step. `W` then advances by its Brownian
//! increment. With transport off this is the exact recursion
//! `q_{n+1} = e^{-γΔt} q_n + ΔW_n` (for `ε = 0`).

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SimConfig;
use crate::coupling::{EllipticSolver, LayerCoupling, OperatorEigenpairs};
use crate::dynamics::noise::{NoiseModel, NoiseSpec};
use crate::dynamics::transport::self_advection;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::spectral::{LayerField, SpectralBasis};

/// Everything derived from a [`SimConfig`] that stays fixed along paths.
#[derive(Debug, Clone)]
pub struct Model {
    config: SimConfig,
    solver: EllipticSolver,
    pairs: OperatorEigenpairs,
    noise: NoiseModel,
    decay: Array2<f64>,
    phi: Array2<f64>,
    h_min: f64,
}

impl Model {
    pub fn build(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let (gx, gy) = config.grid();
        let basis = SpectralBasis::build(config.lx, config.ly, config.nx, config.ny, gx, gy)?;
        let coupling = LayerCoupling::symmetrize(config.lambdas, Some(config.lambda_scale))?;
        let pairs = OperatorEigenpairs::compute(&basis, &coupling, 3 * config.nx * config.ny)?;
        Self::with_noise_pairs(config, basis, coupling, pairs.clone(), &pairs)
    }

    /// Builds a model whose noise lives on `noise_pairs`, which may come
    /// from a coarser basis of the same domain and coupling.
    pub fn build_with_noise_from(config: &SimConfig, noise_pairs: &OperatorEigenpairs) -> Result<Self> {
        config.validate()?;
        let (gx, gy) = config.grid();
        let basis = SpectralBasis::build(config.lx, config.ly, config.nx, config.ny, gx, gy)?;
        let coupling = LayerCoupling::symmetrize(config.lambdas, Some(config.lambda_scale))?;
        let pairs = OperatorEigenpairs::compute(&basis, &coupling, 3 * config.nx * config.ny)?;
        Self::with_noise_pairs(config, basis, coupling, pairs, noise_pairs)
    }

    fn with_noise_pairs(
        config: &SimConfig,
        basis: SpectralBasis,
        coupling: LayerCoupling,
        pairs: OperatorEigenpairs,
        noise_pairs: &OperatorEigenpairs,
    ) -> Result<Self> {
        let spec = NoiseSpec {
            modes: config.resolved_noise_modes(),
            decay: config.noise_decay,
            amplitude: config.noise_amplitude,
        };
        let noise = NoiseModel::new(spec, noise_pairs, basis.modes())?;
        if let Some(k) = config.observables.iter().filter_map(|o| o.pair_index()).max() {
            if k > pairs.len() {
                return Err(Error::config(format!(
                    "pairing index {k} exceeds the {} available eigenpairs",
                    pairs.len()
                )));
            }
        }
        let dt = config.dt;
        let rate = basis
            .eigenvalues()
            .mapv(|l| config.gamma + config.epsilon.powi(2) * l);
        let decay = rate.mapv(|a| (-a * dt).exp());
        let phi = rate.mapv(|a| -(-a * dt).exp_m1() / a);
        let (hx, hy) = basis.grid_spacing();
        let solver = EllipticSolver::new(&basis, &coupling);
        Ok(Self {
            config: config.clone(),
            solver,
            pairs,
            noise,
            decay,
            phi,
            h_min: hx.min(hy),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn basis(&self) -> &SpectralBasis {
        self.solver.basis()
    }

    pub fn coupling(&self) -> &LayerCoupling {
        self.solver.coupling()
    }

    pub fn solver(&self) -> &EllipticSolver {
        &self.solver
    }

    /// All operator eigenpairs of the basis, used for pairings.
    pub fn pairs(&self) -> &OperatorEigenpairs {
        &self.pairs
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Step ceiling `0.5 min(1/γ, h_min / max|u|)`.
    pub fn stability_ceiling(&self, max_speed: f64) -> f64 {
        let transport = if max_speed > 0.0 {
            self.h_min / max_speed
        } else {
            f64::INFINITY
        };
        0.5 * (1.0 / self.config.gamma).min(transport)
    }

    /// A fresh path started from `q0` with `W_0 = 0`.
    pub fn start(&self, q0: &LayerField, stream_id: u64) -> Result<PathState> {
        self.basis().check_spectral(q0)?;
        Ok(PathState {
            time: 0.0,
            steps: 0,
            eta: q0.clone(),
            w: self.basis().zeros(),
            rng: stream(self.config.seed, stream_id),
        })
    }

    /// Normals consumed by one step: `substeps` blocks of `K`.
    pub fn draw_step_normals<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let count = self.noise.len() * self.config.noise_substeps;
        (0..count).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Brownian increment over one step from its substep normals.
    pub fn increment_from_normals(&self, normals: &[f64]) -> LayerField {
        let k = self.noise.len();
        let s = self.config.noise_substeps;
        assert_eq!(normals.len(), k * s);
        let scale = (self.config.dt / s as f64).sqrt();
        let mut amps = vec![0.0; k];
        for block in normals.chunks(k.max(1)) {
            for (a, x) in amps.iter_mut().zip(block) {
                *a += x * scale;
            }
        }
        self.noise.field_from_amplitudes(&amps)
    }

    /// One step driven by the path's own stream.
    pub fn step(&self, state: &mut PathState) -> Result<()> {
        let normals = self.draw_step_normals(&mut state.rng);
        let dw = self.increment_from_normals(&normals);
        self.step_with_increment(state, &dw)
    }

    /// One step with an externally supplied increment `ΔW`.
    pub fn step_with_increment(&self, state: &mut PathState, dw: &LayerField) -> Result<()> {
        let eta = self.step_eta(&state.eta, &state.w, state.time)?;
        let w = state.w.sum(dw);
        state.steps += 1;
        let time = state.steps as f64 * self.config.dt;
        if !eta.is_finite() || !w.is_finite() {
            return Err(Error::BlowUp {
                time: state.time,
                partial: None,
            });
        }
        state.eta = eta;
        state.w = w;
        state.time = time;
        Ok(())
    }

    /// `η` after one step given the current `η` and `W`.
    pub fn step_eta(&self, eta: &LayerField, w: &LayerField, time: f64) -> Result<LayerField> {
        let gamma = self.config.gamma;
        let mut forcing = w.scaled(-gamma);
        if self.config.nonlinear {
            let q = eta.sum(w);
            let (transport, speed) = self_advection(&self.solver, &q)?;
            if !speed.is_finite() {
                return Err(Error::BlowUp {
                    time,
                    partial: None,
                });
            }
            let ceiling = self.stability_ceiling(speed);
            if self.config.dt > ceiling {
                return Err(Error::StabilityCeiling {
                    dt: self.config.dt,
                    ceiling,
                    time,
                });
            }
            forcing.add_scaled(-1.0, &transport);
        }
        let mut out = eta.clone();
        for l in 0..3 {
            let layer = out.layer_mut(l);
            ndarray::Zip::from(layer)
                .and(&self.decay)
                .and(&self.phi)
                .and(forcing.layer(l))
                .for_each(|e, d, p, f| *e = d * *e + p * f);
        }
        Ok(out)
    }
}

/// State of one sample path.
#[derive(Debug, Clone)]
pub struct PathState {
    pub time: f64,
    pub steps: u64,
    pub eta: LayerField,
    pub w: LayerField,
    pub rng: Stream,
}

impl PathState {
    pub fn q(&self) -> LayerField {
        self.eta.sum(&self.w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialDatum;

    fn cfg() -> SimConfig {
        SimConfig {
            nx: 8,
            ny: 8,
            lambdas: [1.0, 2.0, 4.0],
            dt: 1e-2,
            horizon: 0.1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn exact_damping_without_noise_or_transport() {
        let config = SimConfig {
            nonlinear: false,
            noise_amplitude: 0.0,
            ..cfg()
        };
        let model = Model::build(&config).unwrap();
        let q0 = InitialDatum::Random {
            seed: 2,
            amplitude: 1.0,
            max_mode: 8,
        }
        .build(model.basis())
        .unwrap();
        let mut state = model.start(&q0, 0).unwrap();
        model.step(&mut state).unwrap();
        let expected = q0.scaled((-config.gamma * config.dt).exp());
        assert!(state.q().difference(&expected).max_abs() <= 1e-15);
    }

    #[test]
    fn viscous_mode_decay() {
        let config = SimConfig {
            nonlinear: false,
            noise_amplitude: 0.0,
            epsilon: 0.1,
            ..cfg()
        };
        let model = Model::build(&config).unwrap();
        let q0 = LayerField::single_mode(model.basis().modes(), 1, 1, [1.0, 0.0, 0.0]);
        let mut state = model.start(&q0, 0).unwrap();
        model.step(&mut state).unwrap();
        let rate = config.gamma + 0.01 * model.basis().eigenvalue(1, 1);
        let expected = (-rate * config.dt).exp();
        assert!((state.q().layer(0)[[0, 0]] - expected).abs() < 1e-12);
        assert_eq!(state.q().layer(1)[[0, 0]], 0.0);
    }

    #[test]
    fn linear_noisy_step_is_ou_recursion() {
        let config = SimConfig {
            nonlinear: false,
            noise_modes: Some(12),
            ..cfg()
        };
        let model = Model::build(&config).unwrap();
        let q0 = LayerField::single_mode(model.basis().modes(), 2, 1, [0.5, 0.1, -0.2]);
        let mut state = model.start(&q0, 3).unwrap();
        let mut q = q0.clone();
        let mut rng = stream(config.seed, 3);
        for _ in 0..5 {
            let dw = model.increment_from_normals(&model.draw_step_normals(&mut rng));
            q = q.scaled((-config.gamma * config.dt).exp()).sum(&dw);
            model.step(&mut state).unwrap();
        }
        assert!(state.q().difference(&q).max_abs() < 1e-14);
    }

    #[test]
    fn substeps_sum_fine_increments() {
        let fine = SimConfig {
            noise_modes: Some(6),
            dt: 0.01,
            noise_substeps: 1,
            ..cfg()
        };
        let coarse = SimConfig {
            dt: 0.02,
            noise_substeps: 2,
            ..fine.clone()
        };
        let mf = Model::build(&fine).unwrap();
        let mc = Model::build(&coarse).unwrap();
        let mut r1 = stream(0, 0);
        let mut r2 = stream(0, 0);
        let a = mf.increment_from_normals(&mf.draw_step_normals(&mut r1));
        let b = mf.increment_from_normals(&mf.draw_step_normals(&mut r1));
        let c = mc.increment_from_normals(&mc.draw_step_normals(&mut r2));
        assert!(a.sum(&b).difference(&c).max_abs() < 1e-15);
    }

    #[test]
    fn stability_ceiling_violation() {
        let config = SimConfig {
            noise_amplitude: 0.0,
            dt: 0.5,
            gamma: 0.1,
            initial: InitialDatum::Mode {
                n: 1,
                m: 2,
                amplitudes: [2000.0, 0.0, 0.0],
            },
            ..cfg()
        };
        let model = Model::build(&config).unwrap();
        let q0 = config.initial.build(model.basis()).unwrap();
        let q0 = q0.sum(&LayerField::single_mode(model.basis().modes(), 2, 1, [0.0, 2000.0, 0.0]));
        let mut state = model.start(&q0, 0).unwrap();
        assert!(matches!(
            model.step(&mut state),
            Err(Error::StabilityCeiling { .. })
        ));
    }
}
