//! Layer coupling, the elliptic operator `A + L = DΔ + D L̃`, its per-mode
//! inversion, velocity reconstruction and the operator eigenpairs.

use nalgebra::{Cholesky, Matrix3, SymmetricEigen, Vector3};
use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::spectral::{LayerField, Parity, Representation, SpectralBasis, NUM_LAYERS};

/// Coupling constants `λ_i = c² / (H_i g_j)` from layer depths, reduced
/// gravities and the reference speed `c`.
///
/// Row 2 uses `g₁` for both interfaces. `c = 0` is accepted and gives zero
/// couplings, which [`LayerCoupling::symmetrize`] then rejects.
pub fn lambda_from_physical(depths: [f64; 3], gravities: [f64; 2], c: f64) -> Result<[f64; 3]> {
    for (i, h) in depths.iter().enumerate() {
        if !(h.is_finite() && *h > 0.0) {
            return Err(Error::config(format!("layer depth H{} must be positive", i + 1)));
        }
    }
    for (i, g) in gravities.iter().enumerate() {
        if !(g.is_finite() && *g > 0.0) {
            return Err(Error::config(format!("reduced gravity g{} must be positive", i + 1)));
        }
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::config("reference speed c must be nonnegative"));
    }
    let c2 = c * c;
    Ok([
        c2 / (depths[0] * gravities[0]),
        c2 / (depths[1] * gravities[0]),
        c2 / (depths[2] * gravities[1]),
    ])
}

/// Raw couplings, symmetrizing scaling `D = diag(h)` with `h_i λ_i = λ`,
/// and the symmetrized interaction matrix `L = D L̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCoupling {
    raw: [f64; 3],
    scale: f64,
    h: [f64; 3],
    matrix: Matrix3<f64>,
}

impl LayerCoupling {
    pub fn symmetrize(raw: [f64; 3], scale: Option<f64>) -> Result<Self> {
        for (i, l) in raw.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::config(format!("lambda{} must be positive", i + 1)));
            }
        }
        let scale = scale.unwrap_or(1.0);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config("lambda_scale must be positive"));
        }
        let h = raw.map(|l| scale / l);
        let [l1, l2, l3] = raw;
        let tilde = Matrix3::new(-l1, l1, 0.0, l2, -2.0 * l2, l2, 0.0, l3, -l3);
        let d = Matrix3::from_diagonal(&Vector3::from(h));
        let matrix = d * tilde;

        let asym = (matrix - matrix.transpose()).abs().max();
        let kernel = (matrix * Vector3::repeat(1.0)).abs().max();
        let tol = 1e-14 * scale.max(1.0);
        if asym > tol || kernel > tol {
            return Err(Error::config(format!(
                "symmetrized coupling violates invariants (asymmetry {asym:e}, kernel residual {kernel:e})"
            )));
        }
        Ok(Self {
            raw,
            scale,
            h,
            matrix,
        })
    }

    pub fn raw(&self) -> [f64; 3] {
        self.raw
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Diagonal of `D`.
    pub fn h(&self) -> [f64; 3] {
        self.h
    }

    /// The symmetrized matrix `L`.
    pub fn matrix(&self) -> Matrix3<f64> {
        self.matrix
    }

    pub fn h_min(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// `M = -λ_{n,m} D + L` for a Laplacian eigenvalue `λ_{n,m}`.
    pub fn mode_matrix(&self, laplace_eigenvalue: f64) -> Matrix3<f64> {
        self.matrix - Matrix3::from_diagonal(&Vector3::from(self.h)) * laplace_eigenvalue
    }

    /// Applies `D` layer-wise: maps a field expressed with unit scaling to
    /// the same physical field under this coupling's scaling.
    pub fn apply_scaling(&self, field: &LayerField) -> LayerField {
        let mut out = field.clone();
        for (i, h) in self.h.iter().enumerate() {
            out.layer_mut(i).mapv_inplace(|v| v * h);
        }
        out
    }
}

/// Grid-valued or coefficient-valued 3×3 layer mixing applied mode by mode.
fn apply_per_mode(
    field: &LayerField,
    shape: (usize, usize),
    matrices: impl Fn(usize, usize) -> Matrix3<f64>,
) -> LayerField {
    let mut out = LayerField::zeros(Representation::Spectral, shape);
    let (nx, ny) = shape;
    let [a, b, c] = field.layers();
    let mut res: [Array2<f64>; NUM_LAYERS] = std::array::from_fn(|_| Array2::zeros(shape));
    for i in 0..nx {
        for j in 0..ny {
            let v = matrices(i, j) * Vector3::new(a[[i, j]], b[[i, j]], c[[i, j]]);
            for l in 0..NUM_LAYERS {
                res[l][[i, j]] = v[l];
            }
        }
    }
    for (l, r) in res.into_iter().enumerate() {
        *out.layer_mut(l) = r;
    }
    out
}

/// Per-mode inverse of `A + L` with the velocity and gradient maps that
/// depend on it. Immutable after construction.
#[derive(Debug, Clone)]
pub struct EllipticSolver {
    basis: SpectralBasis,
    coupling: LayerCoupling,
    forward: Vec<Matrix3<f64>>,
    inverse: Vec<Matrix3<f64>>,
    /// Smallest `|eigenvalue|` of each `M_{n,m}`.
    min_abs_eig: Array2<f64>,
}

impl EllipticSolver {
    pub fn new(basis: &SpectralBasis, coupling: &LayerCoupling) -> Self {
        let (nx, ny) = basis.modes();
        let mut forward = Vec::with_capacity(nx * ny);
        let mut inverse = Vec::with_capacity(nx * ny);
        let mut min_abs_eig = Array2::zeros((nx, ny));
        for n in 1..=nx {
            for m in 1..=ny {
                let mmat = coupling.mode_matrix(basis.eigenvalue(n, m));
                let chol = Cholesky::new(-mmat).unwrap_or_else(|| {
                    panic!("mode matrix ({n},{m}) is not negative definite")
                });
                inverse.push(-chol.inverse());
                forward.push(mmat);
                let eig = SymmetricEigen::new(mmat);
                min_abs_eig[[n - 1, m - 1]] = eig
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |a, v| a.min(v.abs()));
            }
        }
        Self {
            basis: basis.clone(),
            coupling: coupling.clone(),
            forward,
            inverse,
            min_abs_eig,
        }
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn coupling(&self) -> &LayerCoupling {
        &self.coupling
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.basis.modes().1 + j
    }

    pub fn mode_matrix(&self, n: usize, m: usize) -> Matrix3<f64> {
        self.forward[self.index(n - 1, m - 1)]
    }

    pub fn mode_inverse(&self, n: usize, m: usize) -> Matrix3<f64> {
        self.inverse[self.index(n - 1, m - 1)]
    }

    pub fn min_abs_eigenvalues(&self) -> &Array2<f64> {
        &self.min_abs_eig
    }

    /// `ψ = (A + L)^{-1} q`, mode by mode.
    pub fn solve(&self, q: &LayerField) -> Result<LayerField> {
        self.basis.check_spectral(q)?;
        Ok(apply_per_mode(q, self.basis.modes(), |i, j| {
            self.inverse[self.index(i, j)]
        }))
    }

    /// `(A + L) ψ`, mode by mode.
    pub fn apply(&self, psi: &LayerField) -> Result<LayerField> {
        self.basis.check_spectral(psi)?;
        Ok(apply_per_mode(psi, self.basis.modes(), |i, j| {
            self.forward[self.index(i, j)]
        }))
    }

    /// `u = ∇⊥ψ = (-∂_y ψ, ∂_x ψ)` for a spectral stream function.
    pub fn velocity(&self, psi: &LayerField) -> Result<VelocityField> {
        self.basis.check_spectral(psi)?;
        let b = &self.basis;
        Ok(VelocityField {
            ux: std::array::from_fn(|i| -b.scale_y(psi.layer(i))),
            uy: std::array::from_fn(|i| b.scale_x(psi.layer(i))),
        })
    }

    /// Velocity induced by potential vorticity `q`.
    pub fn velocity_from_q(&self, q: &LayerField) -> Result<VelocityField> {
        self.velocity(&self.solve(q)?)
    }
}

/// Velocity as exact spectral coefficients: `u_x` in the sin(x)·cos(y)
/// family and `u_y` in the cos(x)·sin(y) family, per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub ux: [Array2<f64>; NUM_LAYERS],
    pub uy: [Array2<f64>; NUM_LAYERS],
}

impl VelocityField {
    /// Grid values `[u_x, u_y]` per layer.
    pub fn grid(&self, basis: &SpectralBasis) -> [[Array2<f64>; 2]; NUM_LAYERS] {
        std::array::from_fn(|i| {
            [
                basis.synthesize_with(Parity::Sin, Parity::Cos, self.ux[i].view()),
                basis.synthesize_with(Parity::Cos, Parity::Sin, self.uy[i].view()),
            ]
        })
    }

    /// Grid values of `∇·u` per layer.
    pub fn divergence_grid(&self, basis: &SpectralBasis) -> [Array2<f64>; NUM_LAYERS] {
        std::array::from_fn(|i| {
            let c = basis.scale_x(&self.ux[i]) + basis.scale_y(&self.uy[i]);
            basis.synthesize_with(Parity::Cos, Parity::Cos, c.view())
        })
    }

    /// Grid values of `[[∂_x u_x, ∂_y u_x], [∂_x u_y, ∂_y u_y]]` per layer.
    pub fn gradient_grid(&self, basis: &SpectralBasis) -> [[[Array2<f64>; 2]; 2]; NUM_LAYERS] {
        std::array::from_fn(|i| {
            let a = &self.ux[i];
            let b = &self.uy[i];
            [
                [
                    basis.synthesize_with(Parity::Cos, Parity::Cos, basis.scale_x(a).view()),
                    basis.synthesize_with(Parity::Sin, Parity::Sin, (-basis.scale_y(a)).view()),
                ],
                [
                    basis.synthesize_with(Parity::Sin, Parity::Sin, (-basis.scale_x(b)).view()),
                    basis.synthesize_with(Parity::Cos, Parity::Cos, basis.scale_y(b).view()),
                ],
            ]
        })
    }

    /// `max |u|` over grid nodes and layers.
    pub fn max_speed(&self, basis: &SpectralBasis) -> f64 {
        self.grid(basis)
            .iter()
            .map(|[x, y]| {
                Zip::from(x)
                    .and(y)
                    .fold(0.0_f64, |acc, a, b| acc.max((a * a + b * b).sqrt()))
            })
            .fold(0.0, f64::max)
    }

    /// `max |∇u|` (Frobenius) over grid nodes and layers.
    pub fn max_gradient(&self, basis: &SpectralBasis) -> f64 {
        self.gradient_grid(basis)
            .iter()
            .map(|[[a, b], [c, d]]| {
                Zip::from(a).and(b).and(c).and(d).fold(0.0_f64, |acc, a, b, c, d| {
                    acc.max((a * a + b * b + c * c + d * d).sqrt())
                })
            })
            .fold(0.0, f64::max)
    }
}

/// One eigenpair `ρ = e_{n,m} ⊗ v` of `A + L` with `(A + L) ρ = μ ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub n: usize,
    pub m: usize,
    /// Index of the eigenvalue within its 3×3 block (ascending `|μ|`).
    pub j: usize,
    pub mu: f64,
    pub vector: [f64; 3],
}

impl Eigenpair {
    /// Spectral field of `ρ` in a basis with the given mode counts.
    pub fn to_field(&self, shape: (usize, usize)) -> LayerField {
        LayerField::single_mode(shape, self.n, self.m, self.vector)
    }

    /// `⟨field, ρ⟩` for a spectral field; zero if the mode is truncated.
    pub fn project(&self, field: &LayerField) -> f64 {
        let (nx, ny) = field.shape();
        if self.n > nx || self.m > ny {
            return 0.0;
        }
        (0..NUM_LAYERS)
            .map(|l| field.layer(l)[[self.n - 1, self.m - 1]] * self.vector[l])
            .sum()
    }
}

/// The `K` smallest-`|μ|` eigenpairs of `A + L`, sorted by `|μ|` then
/// `(n, m, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEigenpairs {
    pairs: Vec<Eigenpair>,
}

impl OperatorEigenpairs {
    pub fn compute(basis: &SpectralBasis, coupling: &LayerCoupling, k: usize) -> Result<Self> {
        let (nx, ny) = basis.modes();
        let total = NUM_LAYERS * nx * ny;
        if k > total {
            return Err(Error::OutOfRange(format!(
                "requested {k} eigenpairs but only {total} exist"
            )));
        }
        let mut pairs = Vec::with_capacity(total);
        for n in 1..=nx {
            for m in 1..=ny {
                let eig = SymmetricEigen::new(coupling.mode_matrix(basis.eigenvalue(n, m)));
                let mut order: Vec<usize> = (0..3).collect();
                order.sort_by(|&a, &b| {
                    eig.eigenvalues[a]
                        .abs()
                        .total_cmp(&eig.eigenvalues[b].abs())
                });
                for (j, &c) in order.iter().enumerate() {
                    let col = eig.eigenvectors.column(c);
                    // Fix the sign so the largest component is positive.
                    let pivot = (0..3)
                        .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))
                        .unwrap();
                    let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
                    pairs.push(Eigenpair {
                        n,
                        m,
                        j,
                        mu: eig.eigenvalues[c],
                        vector: [sign * col[0], sign * col[1], sign * col[2]],
                    });
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.mu.abs()
                .total_cmp(&b.mu.abs())
                .then((a.n, a.m, a.j).cmp(&(b.n, b.m, b.j)))
        });
        pairs.truncate(k);
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Eigenpair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Largest spatial mode index used, `(max n, max m)`.
    pub fn support(&self) -> (usize, usize) {
        self.pairs
            .iter()
            .fold((0, 0), |(a, b), p| (a.max(p.n), b.max(p.m)))
    }
}
