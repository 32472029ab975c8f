//! Dirichlet sine eigenbasis of the rectangle `[0, Lx] x [0, Ly]`.
//!
//! The basis functions are
//!
//! ```text
//! e_{n,m}(x, y) = (2 / sqrt(Lx Ly)) sin(n pi x / Lx) sin(m pi y / Ly)
//! ```
//!
//! with `-Δ e_{n,m} = λ_{n,m} e_{n,m}`, `λ_{n,m} = π² (n²/Lx² + m²/Ly²)`.
//! Fields are either spectral (an `Nx x Ny` coefficient array) or sampled
//! on a uniform grid of `(Gx + 1) x (Gy + 1)` nodes, boundary included.
//!
//! Grid integrals use the trapezoid rule. On the uniform grid the rule is
//! exact for every `cos(k π x / L)` with `0 < k < 2G`, so with `G >= 2N`
//! every product of up to three band-limited factors (sine or cosine
//! series) integrates exactly. Sine fields vanish on the boundary nodes, so
//! for them the rule reduces to a plain interior sum.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

pub const NUM_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    Spectral,
    Grid,
}

impl Representation {
    pub fn flag(self) -> u32 {
        match self {
            Representation::Spectral => 0,
            Representation::Grid => 1,
        }
    }

    pub fn from_flag(flag: u32) -> Option<Self> {
        match flag {
            0 => Some(Representation::Spectral),
            1 => Some(Representation::Grid),
            _ => None,
        }
    }
}

/// `max` that propagates NaN instead of discarding it.
pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// A single-layer scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub repr: Representation,
    pub values: Array2<f64>,
}

impl ScalarField {
    pub fn spectral(values: Array2<f64>) -> Self {
        Self {
            repr: Representation::Spectral,
            values,
        }
    }

    pub fn grid(values: Array2<f64>) -> Self {
        Self {
            repr: Representation::Grid,
            values,
        }
    }
}

/// A three-layer field; all layers share one representation and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerField {
    repr: Representation,
    layers: [Array2<f64>; NUM_LAYERS],
}

impl LayerField {
    pub fn new(repr: Representation, layers: [Array2<f64>; NUM_LAYERS]) -> Result<Self> {
        let shape = layers[0].dim();
        for layer in &layers[1..] {
            if layer.dim() != shape {
                return Err(Error::shape(
                    format!("{shape:?} in every layer"),
                    format!("{:?}", layer.dim()),
                ));
            }
        }
        Ok(Self { repr, layers })
    }

    pub fn zeros(repr: Representation, shape: (usize, usize)) -> Self {
        Self {
            repr,
            layers: std::array::from_fn(|_| Array2::zeros(shape)),
        }
    }

    /// Field that is `field` in layer `layer` and zero elsewhere.
    pub fn single_layer(layer: usize, field: ScalarField) -> Self {
        let mut out = Self::zeros(field.repr, field.values.dim());
        out.layers[layer] = field.values;
        out
    }

    /// Spectral field `Σ_i weights[i] e_{n,m}` placed in layer `i`.
    pub fn single_mode(shape: (usize, usize), n: usize, m: usize, weights: [f64; 3]) -> Self {
        let mut out = Self::zeros(Representation::Spectral, shape);
        for (layer, w) in out.layers.iter_mut().zip(weights) {
            layer[[n - 1, m - 1]] = w;
        }
        out
    }

    pub fn repr(&self) -> Representation {
        self.repr
    }

    pub fn shape(&self) -> (usize, usize) {
        self.layers[0].dim()
    }

    pub fn layers(&self) -> &[Array2<f64>; NUM_LAYERS] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Array2<f64> {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.layers[i]
    }

    pub fn into_layers(self) -> [Array2<f64>; NUM_LAYERS] {
        self.layers
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(self.repr, other.repr, "representation mismatch");
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.repr != other.repr {
            return Err(Error::shape(
                format!("{:?} representation", self.repr),
                format!("{:?}", other.repr),
            ));
        }
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.assert_compatible(other);
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.scaled_add(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for layer in &mut self.layers {
            layer.mapv_inplace(|v| v * alpha);
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn difference(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry; NaN if any entry is NaN.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0_f64, |acc, v| nan_max(acc, v.abs()))
    }

    /// Sum of squared entries over all layers. For spectral fields this is
    /// the squared L² norm (Parseval).
    pub fn sum_squares(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Coefficient-wise dot product over all layers.
    pub fn coefficient_dot(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y))
            .sum()
    }

    /// Zero-pads or truncates a spectral field to `nx x ny` modes.
    pub fn resized(&self, nx: usize, ny: usize) -> Self {
        assert_eq!(self.repr, Representation::Spectral);
        let (ox, oy) = self.shape();
        let (cx, cy) = (ox.min(nx), oy.min(ny));
        let mut out = Self::zeros(Representation::Spectral, (nx, ny));
        for (dst, src) in out.layers.iter_mut().zip(&self.layers) {
            dst.slice_mut(ndarray::s![..cx, ..cy])
                .assign(&src.slice(ndarray::s![..cx, ..cy]));
        }
        out
    }
}

/// Which 1D family a synthesis table evaluates along an axis. Derivatives
/// of sine series are cosine series, so mixed families appear for velocities
/// and gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// `sqrt(2/L) sin(k π x / L)`
    Sin,
    /// `sqrt(2/L) cos(k π x / L)`
    Cos,
}

#[derive(Debug, Clone)]
struct AxisTables {
    length: f64,
    modes: usize,
    intervals: usize,
    wavenumbers: Array1<f64>,
    sin: Array2<f64>,
    cos: Array2<f64>,
    /// `sinᵀ · diag(weights)`, the quadrature projection onto sine modes.
    analysis: Array2<f64>,
    weights: Array1<f64>,
}

impl AxisTables {
    fn new(length: f64, modes: usize, intervals: usize) -> Self {
        let h = length / intervals as f64;
        let norm = (2.0 / length).sqrt();
        let wavenumbers = Array1::from_shape_fn(modes, |k| (k + 1) as f64 * PI / length);
        // Evaluate through the integer phase j*(k+1) mod 2G so that nodes
        // that should vanish exactly do so up to a single rounding.
        let period = 2 * intervals;
        let phase = |j: usize, k: usize| ((j * (k + 1)) % period) as f64 * PI / intervals as f64;
        let sin = Array2::from_shape_fn((intervals + 1, modes), |(j, k)| norm * phase(j, k).sin());
        let cos = Array2::from_shape_fn((intervals + 1, modes), |(j, k)| norm * phase(j, k).cos());
        let weights = Array1::from_shape_fn(intervals + 1, |j| {
            if j == 0 || j == intervals {
                0.5 * h
            } else {
                h
            }
        });
        let mut analysis = sin.t().to_owned();
        for (mut col, w) in analysis.columns_mut().into_iter().zip(weights.iter()) {
            col.mapv_inplace(|v| v * w);
        }
        Self {
            length,
            modes,
            intervals,
            wavenumbers,
            sin,
            cos,
            analysis,
            weights,
        }
    }

    fn table(&self, parity: Parity) -> &Array2<f64> {
        match parity {
            Parity::Sin => &self.sin,
            Parity::Cos => &self.cos,
        }
    }
}

/// Dirichlet eigenbasis of a rectangle together with its quadrature grid
/// and the synthesis/analysis tables. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    x: AxisTables,
    y: AxisTables,
    eigenvalues: Array2<f64>,
}

impl SpectralBasis {
    /// Builds the basis with `Nx x Ny` modes on a `Gx x Gy`-interval grid.
    pub fn build(lx: f64, ly: f64, nx: usize, ny: usize, gx: usize, gy: usize) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0) || !(ly.is_finite() && ly > 0.0) {
            return Err(Error::config("domain lengths must be positive"));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::config("mode counts must be positive"));
        }
        if gx < 2 * nx {
            return Err(Error::config(format!(
                "grid resolution gx >= 2*nx violated ({gx} < {})",
                2 * nx
            )));
        }
        if gy < 2 * ny {
            return Err(Error::config(format!(
                "grid resolution gy >= 2*ny violated ({gy} < {})",
                2 * ny
            )));
        }
        let x = AxisTables::new(lx, nx, gx);
        let y = AxisTables::new(ly, ny, gy);
        let eigenvalues = Array2::from_shape_fn((nx, ny), |(i, j)| {
            x.wavenumbers[i].powi(2) + y.wavenumbers[j].powi(2)
        });
        Ok(Self { x, y, eigenvalues })
    }

    /// Basis with the minimal dealiasing grid `G = 2N`.
    pub fn with_default_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::build(lx, ly, nx, ny, 2 * nx, 2 * ny)
    }

    pub fn lengths(&self) -> (f64, f64) {
        (self.x.length, self.y.length)
    }

    pub fn area(&self) -> f64 {
        self.x.length * self.y.length
    }

    pub fn modes(&self) -> (usize, usize) {
        (self.x.modes, self.y.modes)
    }

    pub fn grid_intervals(&self) -> (usize, usize) {
        (self.x.intervals, self.y.intervals)
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.x.intervals + 1, self.y.intervals + 1)
    }

    pub fn grid_spacing(&self) -> (f64, f64) {
        (
            self.x.length / self.x.intervals as f64,
            self.y.length / self.y.intervals as f64,
        )
    }

    /// `λ_{n,m}` for 1-based mode indices.
    pub fn eigenvalue(&self, n: usize, m: usize) -> f64 {
        self.eigenvalues[[n - 1, m - 1]]
    }

    pub fn eigenvalues(&self) -> &Array2<f64> {
        &self.eigenvalues
    }

    pub fn wavenumbers_x(&self) -> &Array1<f64> {
        &self.x.wavenumbers
    }

    pub fn wavenumbers_y(&self) -> &Array1<f64> {
        &self.y.wavenumbers
    }

    pub fn grid_x(&self) -> Array1<f64> {
        let (hx, _) = self.grid_spacing();
        Array1::from_shape_fn(self.x.intervals + 1, |j| j as f64 * hx)
    }

    pub fn grid_y(&self) -> Array1<f64> {
        let (_, hy) = self.grid_spacing();
        Array1::from_shape_fn(self.y.intervals + 1, |j| j as f64 * hy)
    }

    /// Evaluates `e_{n,m}` at a point.
    pub fn eval_mode(&self, n: usize, m: usize, x: f64, y: f64) -> f64 {
        let (lx, ly) = self.lengths();
        2.0 / (lx * ly).sqrt() * (n as f64 * PI * x / lx).sin() * (m as f64 * PI * y / ly).sin()
    }

    pub fn spectral_shape(&self) -> (usize, usize) {
        self.modes()
    }

    pub fn zeros(&self) -> LayerField {
        LayerField::zeros(Representation::Spectral, self.modes())
    }

    /// Grid values of `Σ c_{n,m} X_n(x) Y_m(y)` with the chosen 1D families.
    pub fn synthesize_with(
        &self,
        px: Parity,
        py: Parity,
        coeffs: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let tx = self.x.table(px);
        let ty = self.y.table(py);
        tx.dot(&coeffs).dot(&ty.t())
    }

    pub(crate) fn synthesize(&self, coeffs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.synthesize_with(Parity::Sin, Parity::Sin, coeffs)
    }

    /// Quadrature projection of grid values onto the retained sine modes.
    pub(crate) fn analyze(&self, grid: ArrayView2<'_, f64>) -> Array2<f64> {
        self.x.analysis.dot(&grid).dot(&self.y.analysis.t())
    }

    /// Trapezoid-rule integral of grid values over the rectangle.
    pub fn integrate(&self, grid: ArrayView2<'_, f64>) -> f64 {
        let wx = &self.x.weights;
        let wy = &self.y.weights;
        grid.outer_iter()
            .zip(wx.iter())
            .map(|(row, w)| w * row.dot(wy))
            .sum()
    }

    fn check_scalar(&self, field: &ScalarField) -> Result<()> {
        let expected = match field.repr {
            Representation::Spectral => self.modes(),
            Representation::Grid => self.grid_shape(),
        };
        if field.values.dim() != expected {
            return Err(Error::shape(
                format!("{:?} array of shape {expected:?}", field.repr),
                format!("{:?}", field.values.dim()),
            ));
        }
        Ok(())
    }

    /// Checks that `field` has the dimensions this basis expects for its
    /// representation.
    pub fn check_field(&self, field: &LayerField) -> Result<()> {
        let expected = match field.repr() {
            Representation::Spectral => self.modes(),
            Representation::Grid => self.grid_shape(),
        };
        if field.shape() != expected {
            return Err(Error::shape(
                format!("{:?} field of shape {expected:?}", field.repr()),
                format!("{:?}", field.shape()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_spectral(&self, field: &LayerField) -> Result<()> {
        if field.repr() != Representation::Spectral {
            return Err(Error::shape("spectral representation", "grid"));
        }
        self.check_field(field)
    }

    /// Discrete sine analysis: grid samples to spectral coefficients.
    pub fn forward(&self, field: &ScalarField) -> Result<ScalarField> {
        if field.repr != Representation::Grid {
            return Err(Error::shape("grid representation", "spectral"));
        }
        self.check_scalar(field)?;
        Ok(ScalarField::spectral(self.analyze(field.values.view())))
    }

    /// Sine synthesis: spectral coefficients to grid samples.
    pub fn inverse(&self, coeffs: &ScalarField) -> Result<ScalarField> {
        if coeffs.repr != Representation::Spectral {
            return Err(Error::shape("spectral representation", "grid"));
        }
        self.check_scalar(coeffs)?;
        Ok(ScalarField::grid(self.synthesize(coeffs.values.view())))
    }

    pub fn to_spectral(&self, field: &LayerField) -> Result<LayerField> {
        self.check_field(field)?;
        match field.repr() {
            Representation::Spectral => Ok(field.clone()),
            Representation::Grid => LayerField::new(
                Representation::Spectral,
                std::array::from_fn(|i| self.analyze(field.layer(i).view())),
            ),
        }
    }

    pub fn to_grid(&self, field: &LayerField) -> Result<LayerField> {
        self.check_field(field)?;
        match field.repr() {
            Representation::Grid => Ok(field.clone()),
            Representation::Spectral => LayerField::new(
                Representation::Grid,
                std::array::from_fn(|i| self.synthesize(field.layer(i).view())),
            ),
        }
    }

    /// Grid values of both gradient components of every layer.
    pub fn gradient_grid(&self, field: &LayerField) -> Result<[[Array2<f64>; 2]; NUM_LAYERS]> {
        let spec = self.to_spectral(field)?;
        Ok(std::array::from_fn(|i| {
            let c = spec.layer(i);
            [
                self.synthesize_with(Parity::Cos, Parity::Sin, self.scale_x(c).view()),
                self.synthesize_with(Parity::Sin, Parity::Cos, self.scale_y(c).view()),
            ]
        }))
    }

    /// Multiplies each coefficient by `n π / Lx`.
    pub fn scale_x(&self, c: &Array2<f64>) -> Array2<f64> {
        let mut out = c.clone();
        for (mut row, k) in out.outer_iter_mut().zip(self.x.wavenumbers.iter()) {
            row.mapv_inplace(|v| v * k);
        }
        out
    }

    /// Multiplies each coefficient by `m π / Ly`.
    pub fn scale_y(&self, c: &Array2<f64>) -> Array2<f64> {
        let mut out = c.clone();
        for mut row in out.outer_iter_mut() {
            Zip::from(&mut row)
                .and(&self.y.wavenumbers)
                .for_each(|v, k| *v *= k);
        }
        out
    }

    /// `L²` inner product `Σ_i ∫ a^i b^i`.
    pub fn inner(&self, a: &LayerField, b: &LayerField) -> Result<f64> {
        a.check_compatible(b)?;
        self.check_field(a)?;
        match a.repr() {
            Representation::Spectral => Ok(a.coefficient_dot(b)),
            Representation::Grid => Ok((0..NUM_LAYERS)
                .map(|i| self.integrate((a.layer(i) * b.layer(i)).view()))
                .sum()),
        }
    }

    /// `(Σ_i ∫ |q^i|^p)^{1/p}` for even `p`, or the max over grid and
    /// layers for `p = ∞`.
    pub fn lp_norm(&self, field: &LayerField, p: f64) -> Result<f64> {
        let exponent = Exponent::parse(p)?;
        let grid = self.to_grid(field)?;
        Ok(match exponent {
            Exponent::Infinity => grid.max_abs(),
            Exponent::Even(k) => {
                let total: f64 = grid
                    .layers()
                    .iter()
                    .map(|l| self.integrate(l.mapv(|v| v.powi(k as i32)).view()))
                    .sum();
                total.powf(1.0 / k as f64)
            }
        })
    }

    /// Per-layer `L^p` norms of a field.
    pub fn layer_lp_norms(&self, field: &LayerField, p: f64) -> Result<[f64; NUM_LAYERS]> {
        let exponent = Exponent::parse(p)?;
        let grid = self.to_grid(field)?;
        Ok(std::array::from_fn(|i| {
            let layer = grid.layer(i);
            match exponent {
                Exponent::Infinity => layer.iter().fold(0.0_f64, |a, v| nan_max(a, v.abs())),
                Exponent::Even(k) => self
                    .integrate(layer.mapv(|v| v.powi(k as i32)).view())
                    .powf(1.0 / k as f64),
            }
        }))
    }

    /// `Σ_i ‖q^i‖_{L^p}`, the layer-sum form of the multi-layer norm. It
    /// dominates [`lp_norm`](Self::lp_norm) and is at most `3^{1-1/p}` times it.
    pub fn lp_norm_layer_sum(&self, field: &LayerField, p: f64) -> Result<f64> {
        Ok(self.layer_lp_norms(field, p)?.iter().sum())
    }

    /// `(Σ_i ∫ |∇q^i|^p)^{1/p}` with the Euclidean norm of the gradient.
    pub fn grad_lp_norm(&self, field: &LayerField, p: f64) -> Result<f64> {
        let exponent = Exponent::parse(p)?;
        let grads = self.gradient_grid(field)?;
        let magnitudes = grads
            .iter()
            .map(|[gx, gy]| Zip::from(gx).and(gy).map_collect(|a, b| (a * a + b * b).sqrt()));
        Ok(match exponent {
            Exponent::Infinity => magnitudes
                .map(|g| g.iter().fold(0.0_f64, |a, v| nan_max(a, *v)))
                .fold(0.0, nan_max),
            Exponent::Even(k) => magnitudes
                .map(|g| self.integrate(g.mapv(|v| v.powi(k as i32)).view()))
                .sum::<f64>()
                .powf(1.0 / k as f64),
        })
    }

    /// Spectral fractional norm `(Σ_i Σ_{n,m} λ_{n,m}^α |q̂^i_{n,m}|²)^{1/2}`.
    pub fn fractional_norm(&self, field: &LayerField, alpha: f64) -> Result<f64> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::config(format!(
                "fractional order must be finite and >= 0, got {alpha}"
            )));
        }
        let spec = self.to_spectral(field)?;
        Ok(self.weighted_sum_squares(&spec, alpha).sqrt())
    }

    fn weighted_sum_squares(&self, spec: &LayerField, alpha: f64) -> f64 {
        let weights = if alpha == 0.0 {
            Array2::ones(self.modes())
        } else {
            self.eigenvalues.mapv(|l| l.powf(alpha))
        };
        spec.layers()
            .iter()
            .map(|l| Zip::from(l).and(&weights).fold(0.0, |acc, c, w| acc + w * c * c))
            .sum()
    }

    /// `H^{-1}` distance `(Σ λ^{-1} |â - b̂|²)^{1/2}`.
    pub fn dual_h1_distance(&self, a: &LayerField, b: &LayerField) -> Result<f64> {
        a.check_compatible(b)?;
        let a = self.to_spectral(a)?;
        let b = self.to_spectral(b)?;
        Ok(self.weighted_sum_squares(&a.difference(&b), -1.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exponent {
    Even(u32),
    Infinity,
}

impl Exponent {
    fn parse(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            return Ok(Exponent::Infinity);
        }
        if p.is_finite() && p >= 2.0 && p.fract() == 0.0 && (p as u64).is_multiple_of(2) && p <= 1024.0 {
            return Ok(Exponent::Even(p as u32));
        }
        Err(Error::UnsupportedExponent(p))
    }
}
