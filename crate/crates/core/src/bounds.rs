//! Embedding constants for band-limited fields and a Grönwall integrator
//! for the a-posteriori envelopes.
//!
//! For `f = Σ f̂_{n,m} e_{n,m}` over the retained modes, Cauchy–Schwarz with
//! `|e_{n,m}| ≤ 2/√A`, `|∇e_{n,m}| ≤ 2√λ/√A` and `|∇²e_{n,m}| ≤ 2λ/√A`
//! gives
//!
//! ```text
//! ‖f‖_∞   ≤ C0 ‖f‖_{ℋ^{5/2}},   C0  = (2/√A) (Σ λ^{-5/2})^{1/2}
//! ‖∇f‖_∞  ≤ C1 ‖f‖_{ℋ^{5/2}},   C1  = (2/√A) (Σ λ^{-3/2})^{1/2}
//! ‖∇²f‖_∞ ≤ C2 ‖f‖_{ℋ^{5/2}},   C2  = (2/√A) (Σ λ^{-1/2})^{1/2}
//! ```
//!
//! and, with `s_{n,m}` the smallest `|eigenvalue|` of the mode matrix,
//! `‖u^i‖_∞ ≤ B ‖q‖_{L²}` for `B = (Σ 4λ / (A s²))^{1/2}`.

use crate::coupling::EllipticSolver;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConstants {
    pub area: f64,
    pub lambda_min: f64,
    pub c0: f64,
    pub c_grad: f64,
    pub c_hess: f64,
    pub biot_savart: f64,
}

impl EmbeddingConstants {
    pub fn new(solver: &EllipticSolver) -> Self {
        let basis = solver.basis();
        let area = basis.area();
        let lam = basis.eigenvalues();
        let s = solver.min_abs_eigenvalues();
        let pre = 2.0 / area.sqrt();
        let sum = |e: f64| lam.iter().map(|l| l.powf(e)).sum::<f64>().sqrt();
        let bs: f64 = lam
            .iter()
            .zip(s.iter())
            .map(|(l, s)| 4.0 * l / (area * s * s))
            .sum();
        Self {
            area,
            lambda_min: basis.eigenvalue(1, 1),
            c0: pre * sum(-2.5),
            c_grad: pre * sum(-1.5),
            c_hess: pre * sum(-0.5),
            biot_savart: bs.sqrt(),
        }
    }

    /// `‖f‖_{L²} ≤ λ_{1,1}^{-5/4} ‖f‖_{ℋ^{5/2}}`.
    pub fn l2_from_h52(&self) -> f64 {
        self.lambda_min.powf(-1.25)
    }
}

/// Integrates `y' ≤ a(t) y + b(t)` over the sample times, using on each
/// interval the larger endpoint value of `a` and `b`. Returns `None` once
/// the accumulated exponent exceeds `max_exponent`.
pub fn gronwall(times: &[f64], a: &[f64], b: &[f64], y0: f64, max_exponent: f64) -> Option<Vec<f64>> {
    assert_eq!(times.len(), a.len());
    assert_eq!(times.len(), b.len());
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0;
    let mut exponent = 0.0;
    out.push(y);
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        let ai = a[i - 1].max(a[i]);
        let bi = b[i - 1].max(b[i]);
        exponent += (ai * dt).max(0.0);
        if exponent > max_exponent {
            return None;
        }
        y = interval_update(y, ai, bi, dt);
        out.push(y);
    }
    Some(out)
}

/// Exact solution after `dt` of `y' = a y + b` from `y`.
pub fn interval_update(y: f64, a: f64, b: f64, dt: f64) -> f64 {
    let x = a * dt;
    let phi = if x.abs() < 1e-12 { 1.0 } else { x.exp_m1() / x };
    x.exp() * y + b * dt * phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::LayerCoupling;
    use crate::spectral::{LayerField, SpectralBasis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gronwall_matches_constant_coefficient_solution() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let a = vec![-0.5; times.len()];
        let b = vec![2.0; times.len()];
        let y = gronwall(&times, &a, &b, 1.0, 700.0).unwrap();
        let exact = |t: f64| (-0.5 * t).exp() + 4.0 * (1.0 - (-0.5 * t).exp());
        for (t, v) in times.iter().zip(&y) {
            assert!((v - exact(*t)).abs() < 1e-12);
        }
        assert!(gronwall(&times, &vec![1000.0; times.len()], &b, 1.0, 700.0).is_none());
    }

    #[test]
    fn embedding_constants_dominate_random_fields() {
        let basis = SpectralBasis::with_default_grid(1.0, 2.0, 8, 8).unwrap();
        let coupling = LayerCoupling::symmetrize([1.0, 2.0, 4.0], None).unwrap();
        let solver = EllipticSolver::new(&basis, &coupling);
        let c = EmbeddingConstants::new(&solver);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut f = basis.zeros();
            for l in 0..3 {
                f.layer_mut(l).mapv_inplace(|_| rng.random_range(-1.0..1.0));
            }
            let layers = basis.layer_lp_norms(&f, f64::INFINITY).unwrap();
            for l in 0..3 {
                let single = LayerField::single_layer(
                    l,
                    crate::spectral::ScalarField::spectral(f.layer(l).clone()),
                );
                let h = basis.fractional_norm(&single, 2.5).unwrap();
                assert!(layers[l] <= c.c0 * h);
                assert!(basis.grad_lp_norm(&single, f64::INFINITY).unwrap() <= c.c_grad * h);
            }
            let u = solver.velocity_from_q(&f).unwrap();
            let l2 = basis.lp_norm(&f, 2.0).unwrap();
            assert!(u.max_speed(&basis) <= c.biot_savart * l2);
        }
    }
}
