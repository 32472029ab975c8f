//! Pseudo-spectral transport term `P[u·∇q]`.

use ndarray::Zip;

use crate::coupling::{EllipticSolver, VelocityField};
use crate::error::Result;
use crate::spectral::{LayerField, Parity, Representation, SpectralBasis, NUM_LAYERS};

/// `P[u·∇q]` per layer with `u = ∇⊥ψ`: spectral derivatives, product on the
/// quadrature grid, projection back onto the retained sine modes.
pub fn nonlinear_term(basis: &SpectralBasis, q: &LayerField, psi: &LayerField) -> Result<LayerField> {
    basis.check_spectral(q)?;
    basis.check_spectral(psi)?;
    q.check_compatible(psi)?;
    let u = VelocityField {
        ux: std::array::from_fn(|i| -basis.scale_y(psi.layer(i))),
        uy: std::array::from_fn(|i| basis.scale_x(psi.layer(i))),
    };
    Ok(advect(basis, &u, q))
}

/// `P[u·∇q]` for a precomputed velocity.
pub fn advect(basis: &SpectralBasis, u: &VelocityField, q: &LayerField) -> LayerField {
    let u_grid = u.grid(basis);
    let layers = std::array::from_fn(|i| {
        let c = q.layer(i);
        let qx = basis.synthesize_with(Parity::Cos, Parity::Sin, basis.scale_x(c).view());
        let qy = basis.synthesize_with(Parity::Sin, Parity::Cos, basis.scale_y(c).view());
        let [ux, uy] = &u_grid[i];
        let product = Zip::from(ux)
            .and(uy)
            .and(&qx)
            .and(&qy)
            .map_collect(|a, b, gx, gy| a * gx + b * gy);
        basis.analyze(product.view())
    });
    LayerField::new(Representation::Spectral, layers).expect("layers share one shape")
}

/// `P[u·∇q]` with `u` induced by `q` itself, plus `max |u|`.
pub fn self_advection(solver: &EllipticSolver, q: &LayerField) -> Result<(LayerField, f64)> {
    let basis = solver.basis();
    let u = solver.velocity_from_q(q)?;
    let speed = u.max_speed(basis);
    Ok((advect(basis, &u, q), speed))
}

/// `max_i ‖∇ψ^i‖_∞` on the grid, the normalization of the skew-symmetry check.
pub fn max_grad_psi(basis: &SpectralBasis, psi: &LayerField) -> Result<f64> {
    let g = basis.gradient_grid(psi)?;
    Ok((0..NUM_LAYERS)
        .map(|i| {
            Zip::from(&g[i][0])
                .and(&g[i][1])
                .fold(0.0_f64, |a, x, y| a.max((x * x + y * y).sqrt()))
        })
        .fold(0.0, f64::max))
}
