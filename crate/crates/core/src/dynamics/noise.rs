//! Additive noise `W_t = Σ_k c_k ρ_k W^k_t` over the operator eigenpairs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coupling::{Eigenpair, LayerCoupling, OperatorEigenpairs};
use crate::error::{Error, Result};
use crate::spectral::{LayerField, SpectralBasis};

/// Truncation `K`, decay exponent `r` and amplitude `σ` of the noise
/// coefficients `c_k = σ (1 + |μ_k|)^{-r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub modes: usize,
    pub decay: f64,
    pub amplitude: f64,
}

impl NoiseSpec {
    pub fn coefficient(&self, mu: f64) -> f64 {
        self.amplitude * (1.0 + mu.abs()).powf(-self.decay)
    }
}

/// Retained eigenpairs with their coefficients, ready for sampling into
/// fields with a given number of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    spec: NoiseSpec,
    pairs: Vec<Eigenpair>,
    coeffs: Vec<f64>,
    shape: (usize, usize),
}

impl NoiseModel {
    /// Takes the first `spec.modes` eigenpairs of `pairs`. The eigenpairs
    /// may come from a coarser basis; they are embedded into fields of
    /// `shape` by their `(n, m)` indices.
    pub fn new(spec: NoiseSpec, pairs: &OperatorEigenpairs, shape: (usize, usize)) -> Result<Self> {
        if spec.modes > pairs.len() {
            return Err(Error::OutOfRange(format!(
                "noise truncation {} exceeds {} available eigenpairs",
                spec.modes,
                pairs.len()
            )));
        }
        let pairs: Vec<Eigenpair> = pairs.pairs()[..spec.modes].to_vec();
        if let Some(p) = pairs.iter().find(|p| p.n > shape.0 || p.m > shape.1) {
            return Err(Error::shape(
                format!("noise modes within {shape:?}"),
                format!("mode ({}, {})", p.n, p.m),
            ));
        }
        let coeffs = pairs.iter().map(|p| spec.coefficient(p.mu)).collect();
        Ok(Self {
            spec,
            pairs,
            coeffs,
            shape,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn pairs(&self) -> &[Eigenpair] {
        &self.pairs
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn is_silent(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// `Σ_k c_k ρ_k a_k` for per-mode amplitudes `a_k`.
    pub fn field_from_amplitudes(&self, amplitudes: &[f64]) -> LayerField {
        assert_eq!(amplitudes.len(), self.len());
        let mut out = LayerField::zeros(crate::spectral::Representation::Spectral, self.shape);
        for ((p, c), a) in self.pairs.iter().zip(&self.coeffs).zip(amplitudes) {
            let w = c * a;
            for l in 0..3 {
                out.layer_mut(l)[[p.n - 1, p.m - 1]] += w * p.vector[l];
            }
        }
        out
    }

    /// Draws `K` standard normals.
    pub fn draw_normals<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.len()).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// `ΔW = Σ_k c_k ρ_k ξ_k √Δt`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> LayerField {
        let xi = self.draw_normals(rng);
        let amps: Vec<f64> = xi.iter().map(|x| x * dt.sqrt()).collect();
        self.field_from_amplitudes(&amps)
    }
}

/// Partial sums of `Σ c_k² ‖ρ_k‖²_{ℋ^{5/2}}` at `K`, `2K`, `4K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub partial_sums: [f64; 3],
    pub convergent: bool,
}

impl RegularityReport {
    pub fn verdict(&self) -> &'static str {
        if self.convergent {
            "convergent"
        } else {
            "suspect-divergent"
        }
    }
}

/// Sorted `|μ|` with their Laplacian eigenvalues for the `count`
/// smallest-`|μ|` operator eigenpairs of the rectangle, independent of any
/// mode truncation.
fn smallest_modes(basis: &SpectralBasis, coupling: &LayerCoupling, count: usize) -> Vec<(f64, f64)> {
    let (lx, ly) = basis.lengths();
    let pi2 = std::f64::consts::PI.powi(2);
    // -M = λD - L >= h_min λ, so every mode outside an n, m <= side box has
    // |μ| >= h_min π² side² / max(L)². Grow the box until that exceeds the
    // largest selected |μ|.
    let mut side = ((count as f64 / 3.0).sqrt().ceil() as usize).max(2);
    loop {
        let mut mus = Vec::with_capacity(3 * side * side);
        for n in 1..=side {
            for m in 1..=side {
                let lam = pi2 * ((n * n) as f64 / (lx * lx) + (m * m) as f64 / (ly * ly));
                let eig = nalgebra::SymmetricEigen::new(coupling.mode_matrix(lam)).eigenvalues;
                for v in eig.iter() {
                    mus.push((v.abs(), lam));
                }
            }
        }
        mus.sort_by(|a, b| a.0.total_cmp(&b.0));
        let edge = pi2 * ((side * side) as f64 / (lx * lx)).min((side * side) as f64 / (ly * ly));
        if mus.len() >= count && coupling.h_min() * edge >= mus[count - 1].0 {
            mus.truncate(count);
            return mus;
        }
        side *= 2;
    }
}

/// Checks summability of the noise regularity series by comparing partial
/// sums at `K`, `2K` and `4K`. Convergent when the sums vanish, or when the
/// relative increment `(S_2K - S_K)/S_K` is below 0.5 and the increments
/// shrink, `(S_4K - S_2K) < (S_2K - S_K)`.
pub fn regularity_check(
    spec: &NoiseSpec,
    basis: &SpectralBasis,
    coupling: &LayerCoupling,
) -> Result<RegularityReport> {
    if spec.modes < 8 {
        return Err(Error::config("regularity check needs noise_modes >= 8"));
    }
    let modes = smallest_modes(basis, coupling, 4 * spec.modes);
    let term = |(mu, lam): (f64, f64)| spec.coefficient(mu).powi(2) * lam.powf(2.5);
    let partial = |k: usize| modes[..k].iter().map(|&x| term(x)).sum::<f64>();
    let sums = [
        partial(spec.modes),
        partial(2 * spec.modes),
        partial(4 * spec.modes),
    ];
    let convergent = if sums[2] == 0.0 {
        true
    } else {
        let d1 = sums[1] - sums[0];
        let d2 = sums[2] - sums[1];
        d1 / sums[0] < 0.5 && d2 < d1
    };
    Ok(RegularityReport {
        partial_sums: sums,
        convergent,
    })
}
