//! Time-averaged (Krylov–Bogoliubov) measures, shift-invariance checks and
//! the stochastic-convolution tightness diagnostic.
//!
//! Measures are only ever seen through a finite dictionary of functionals:
//! pairings with band-limited fields and the norm observables.

use rayon::prelude::*;

use crate::bounds::{gronwall, EmbeddingConstants};
use crate::config::{InitialDatum, SimConfig};
use crate::dynamics::{ou_step_coupled, Model, OuState, PathState};
use crate::error::{Error, Result};
use crate::experiments::trapezoid;
use crate::observables::Observable;
use crate::rng::stream;
use crate::spectral::LayerField;

/// Stream id of the extra normals the tightness diagnostic feeds to `ζ_λ`.
/// The path itself runs on stream 0, so its noise is untouched.
pub const ZETA_STREAM: u64 = 1 << 63;

/// Fewest samples per window accepted by the KS comparison.
pub const MIN_KS_SAMPLES: usize = 20;

/// Significance level of the invariance verdict.
pub const KS_SIGNIFICANCE: f64 = 0.01;

/// A test functional `φ(q)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    Observable(Observable),
    /// `⟨q, g⟩` for a band-limited spectral field `g`.
    Pairing { name: String, g: LayerField },
}

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::Observable(o) => o.name(),
            Functional::Pairing { name, .. } => name.clone(),
        }
    }

    fn check(&self, model: &Model) -> Result<()> {
        match self {
            Functional::Observable(o) => match o.pair_index() {
                Some(k) if k == 0 || k > model.pairs().len() => Err(Error::OutOfRange(format!(
                    "pairing index {k} outside 1..={}",
                    model.pairs().len()
                ))),
                _ => Ok(()),
            },
            Functional::Pairing { g, .. } => model.basis().check_spectral(g),
        }
    }

    fn evaluate(&self, model: &Model, state: &PathState, q: &LayerField) -> Result<f64> {
        match self {
            Functional::Observable(o) => o.evaluate(model.basis(), model.pairs(), q, &state.eta, &state.w),
            Functional::Pairing { g, .. } => Ok(q.coefficient_dot(g)),
        }
    }
}

impl From<Observable> for Functional {
    fn from(o: Observable) -> Self {
        Functional::Observable(o)
    }
}

fn evaluate_all(model: &Model, functionals: &[Functional], state: &PathState) -> Result<Vec<f64>> {
    let q = state.q();
    functionals.iter().map(|f| f.evaluate(model, state, &q)).collect()
}

/// `μ_n` evaluated on a dictionary of functionals, aggregated over paths.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedMeasure {
    pub horizon: f64,
    pub names: Vec<String>,
    /// Mean over paths of `(1/n) ∫_0^n φ(q_t) dt`.
    pub averages: Vec<f64>,
    /// Standard errors of `averages` across paths (zero for one path).
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
    /// `path_averages[p][j]`: time average of functional `j` on path `p`.
    pub path_averages: Vec<Vec<f64>>,
}

/// Ensemble mean of `φ(q_t)` at one fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMean {
    pub time: f64,
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
}

fn mean_and_stderr(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    if rows.len() < 2 {
        return (mean, 0.0);
    }
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn horizon_steps(model: &Model, horizons: &[f64]) -> Result<Vec<usize>> {
    if horizons.is_empty() {
        return Err(Error::config("at least one horizon is required"));
    }
    if horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::config("horizons must be positive"));
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("horizons must be strictly ascending"));
    }
    let simulated = model.config().steps() as f64 * model.dt();
    let last = horizons[horizons.len() - 1];
    if last > simulated * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "horizon {last} exceeds the simulated time {simulated}"
        )));
    }
    let steps: Vec<usize> = horizons
        .iter()
        .map(|h| (h / model.dt()).round() as usize)
        .collect();
    if steps[0] == 0 || steps.windows(2).any(|w| w[1] == w[0]) {
        return Err(Error::config("horizons must be separated by at least one time step"));
    }
    Ok(steps)
}

struct PathSamples {
    /// `∫_0^n φ dt / n` per horizon.
    averages: Vec<Vec<f64>>,
    /// `φ(q_n)` per horizon.
    values: Vec<Vec<f64>>,
}

/// Runs one path to the last horizon step, sampling every `every` steps
/// and at each horizon, with running trapezoid integrals.
fn run_path(
    model: &Model,
    q0: &LayerField,
    functionals: &[Functional],
    horizons: &[usize],
    stream_id: u64,
) -> Result<PathSamples> {
    let every = model.config().record_every;
    let mut state = model.start(q0, stream_id)?;
    let mut prev_t = 0.0;
    let mut prev = evaluate_all(model, functionals, &state)?;
    let mut integral = vec![0.0; functionals.len()];
    let mut out = PathSamples {
        averages: Vec::with_capacity(horizons.len()),
        values: Vec::with_capacity(horizons.len()),
    };
    let mut next = 0;
    let last = horizons[horizons.len() - 1];
    for s in 1..=last {
        model.step(&mut state)?;
        let at_horizon = s == horizons[next];
        if s % every == 0 || at_horizon {
            let v = evaluate_all(model, functionals, &state)?;
            let dt = state.time - prev_t;
            for ((acc, a), b) in integral.iter_mut().zip(&prev).zip(&v) {
                *acc += 0.5 * dt * (a + b);
            }
            prev_t = state.time;
            prev = v;
        }
        if at_horizon {
            out.averages.push(integral.iter().map(|i| i / state.time).collect());
            out.values.push(prev.clone());
            next += 1;
        }
    }
    Ok(out)
}

fn run_paths(
    model: &Model,
    q0: &LayerField,
    functionals: &[Functional],
    horizons: &[usize],
    n_paths: usize,
) -> Result<Vec<PathSamples>> {
    if n_paths == 0 {
        return Err(Error::config("at least one path is required"));
    }
    if functionals.is_empty() {
        return Err(Error::config("at least one observable is required"));
    }
    for f in functionals {
        f.check(model)?;
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|p| run_path(model, q0, functionals, horizons, p))
        .collect()
}

/// `μ_n` for every `n` in `horizons`, read off nested prefixes of one long
/// run per path started from `q_0 = 0`. Path `p` uses stream `p`.
pub fn kb_average(
    config: &SimConfig,
    horizons: &[f64],
    functionals: &[Functional],
    n_paths: usize,
) -> Result<Vec<AveragedMeasure>> {
    if config.initial != InitialDatum::Zero {
        return Err(Error::config("time-averaged measures start from q0 = 0 (initial=zero)"));
    }
    let model = Model::build(config)?;
    let steps = horizon_steps(&model, horizons)?;
    let q0 = model.basis().zeros();
    let paths = run_paths(&model, &q0, functionals, &steps, n_paths)?;
    let names: Vec<String> = functionals.iter().map(Functional::name).collect();
    Ok(steps
        .iter()
        .enumerate()
        .map(|(h, &s)| {
            let rows: Vec<Vec<f64>> = paths.iter().map(|p| p.averages[h].clone()).collect();
            let (averages, std_errors) = (0..names.len()).map(|j| mean_and_stderr(&rows, j)).unzip();
            AveragedMeasure {
                horizon: s as f64 * model.dt(),
                names: names.clone(),
                averages,
                std_errors,
                n_paths,
                path_averages: rows,
            }
        })
        .collect())
}

/// Ensemble mean of each functional at `time` over `n_paths` paths from the
/// configured initial datum.
pub fn ensemble_mean(
    config: &SimConfig,
    time: f64,
    functionals: &[Functional],
    n_paths: usize,
) -> Result<EnsembleMean> {
    let model = Model::build(config)?;
    let steps = horizon_steps(&model, &[time])?;
    let q0 = config.initial.build(model.basis())?;
    let paths = run_paths(&model, &q0, functionals, &steps, n_paths)?;
    let rows: Vec<Vec<f64>> = paths.into_iter().map(|p| p.values[0].clone()).collect();
    let names: Vec<String> = functionals.iter().map(Functional::name).collect();
    let (means, std_errors) = (0..names.len()).map(|j| mean_and_stderr(&rows, j)).unzip();
    Ok(EnsembleMean {
        time: steps[0] as f64 * model.dt(),
        names,
        means,
        std_errors,
        n_paths,
    })
}

/// `|avg_{n_{i+1}} - avg_{n_i}|` per functional along the horizon sequence.
pub fn cauchy_increments(measures: &[AveragedMeasure]) -> Vec<Vec<f64>> {
    measures
        .windows(2)
        .map(|w| {
            w[0].averages
                .iter()
                .zip(&w[1].averages)
                .map(|(a, b)| (b - a).abs())
                .collect()
        })
        .collect()
}

/// Two-sample Kolmogorov–Smirnov distance and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Sampling("KS test needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Sampling("KS test needs finite samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok((d, kolmogorov_q(lambda)))
}

/// Complementary Kolmogorov distribution `Q(z) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2j²z²}`.
fn kolmogorov_q(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        // Theta-function form of the CDF, accurate for small z.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * z * z)).exp();
        let p = (2.0 * std::f64::consts::PI).sqrt() / z * (y + y.powi(9) + y.powi(25) + y.powi(49));
        (1.0 - p).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * z * z).exp();
        (2.0 * (x - x.powi(4) + x.powi(9))).clamp(0.0, 1.0)
    }
}

/// One window-versus-shifted-window comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct KsComparison {
    pub observable: String,
    pub shift: f64,
    pub distance: f64,
    pub p_value: f64,
    pub samples: usize,
    /// Both windows hold one repeated value (a point mass); no test run.
    pub skipped: bool,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub burn_in: f64,
    pub window: f64,
    /// Time between retained samples.
    pub thinning: f64,
    pub comparisons: Vec<KsComparison>,
    /// No non-skipped comparison rejects at [`KS_SIGNIFICANCE`].
    pub passed: bool,
}

/// Compares the law of `φ(q_t)` over `[b, b + w]` with that over
/// `[b + s, b + s + w]` for `s ∈ {w/4, w/2}`.
pub fn invariance_test(
    config: &SimConfig,
    burn_in: f64,
    window: f64,
    functionals: &[Functional],
    n_paths: usize,
) -> Result<InvarianceReport> {
    invariance_test_with_shifts(
        config,
        burn_in,
        window,
        &[window / 4.0, window / 2.0],
        functionals,
        n_paths,
    )
}

/// [`invariance_test`] with explicit shifts. Samples are thinned to one per
/// `2/γ` (the decorrelation time of the damped linear flow) and pooled over
/// paths; path `p` uses stream `p`.
pub fn invariance_test_with_shifts(
    config: &SimConfig,
    burn_in: f64,
    window: f64,
    shifts: &[f64],
    functionals: &[Functional],
    n_paths: usize,
) -> Result<InvarianceReport> {
    if !(burn_in.is_finite() && burn_in >= 0.0) {
        return Err(Error::config("burn-in must be nonnegative"));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::config("window must be positive"));
    }
    if shifts.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::config("shifts must be nonnegative"));
    }
    if n_paths == 0 {
        return Err(Error::config("at least one path is required"));
    }
    let model = Model::build(config)?;
    for f in functionals {
        f.check(&model)?;
    }
    let dt = model.dt();
    let thin = ((2.0 / (config.gamma * dt)).round() as usize).max(1);
    let burn = (burn_in / dt).round() as usize;
    let win = ((window / dt).round() as usize).max(1);
    let per_path = win.div_ceil(thin);
    if per_path * n_paths < MIN_KS_SAMPLES {
        return Err(Error::Sampling(format!(
            "window too short for the KS test: {} samples per window, need {MIN_KS_SAMPLES}",
            per_path * n_paths
        )));
    }
    let shift_steps: Vec<usize> = shifts.iter().map(|s| (s / dt).round() as usize).collect();
    let needed = burn + shift_steps.iter().copied().max().unwrap_or(0) + win;
    if needed > config.steps() {
        return Err(Error::config(format!(
            "invariance test needs {} time units, horizon is {}",
            needed as f64 * dt,
            config.horizon
        )));
    }

    // Offsets (relative to burn-in) of every sample any window needs.
    let mut offsets: Vec<usize> = std::iter::once(0)
        .chain(shift_steps.iter().copied())
        .flat_map(|s| (0..per_path).map(move |j| s + j * thin))
        .collect();
    offsets.sort_unstable();
    offsets.dedup();

    let q0 = config.initial.build(model.basis())?;
    let per_path_values: Vec<Vec<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut state = model.start(&q0, p)?;
            let mut values = Vec::with_capacity(offsets.len());
            let mut step = 0;
            for &o in &offsets {
                while step < burn + o {
                    model.step(&mut state)?;
                    step += 1;
                }
                values.push(evaluate_all(&model, functionals, &state)?);
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;

    let offsets = &offsets;
    let window_samples = |shift: usize, j: usize| -> Vec<f64> {
        per_path_values
            .iter()
            .flat_map(|vals| {
                (0..per_path).map(move |i| {
                    let idx = offsets.binary_search(&(shift + i * thin)).expect("offset recorded");
                    vals[idx][j]
                })
            })
            .collect()
    };

    let mut comparisons = Vec::new();
    for (j, f) in functionals.iter().enumerate() {
        let base = window_samples(0, j);
        for (&s, &steps) in shifts.iter().zip(&shift_steps) {
            let shifted = window_samples(steps, j);
            let first = base[0];
            let skipped = base.iter().chain(&shifted).all(|x| *x == first);
            let (distance, p_value) = if skipped {
                (0.0, 1.0)
            } else {
                ks_two_sample(&base, &shifted)?
            };
            comparisons.push(KsComparison {
                observable: f.name(),
                shift: s,
                distance,
                p_value,
                samples: base.len(),
                skipped,
                rejected: !skipped && p_value < KS_SIGNIFICANCE,
            });
        }
    }
    Ok(InvarianceReport {
        burn_in,
        window,
        thinning: thin as f64 * dt,
        passed: comparisons.iter().all(|c| !c.rejected),
        comparisons,
    })
}

/// Output of [`tightness_diagnostic`].
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessReport {
    pub rate: f64,
    pub times: Vec<f64>,
    /// `‖q_t‖_∞` at `times`.
    pub q_sup_norms: Vec<f64>,
    /// `‖ζ_λ(t)‖_{ℋ^{5/2}}` at `times`.
    pub zeta_norms: Vec<f64>,
    /// Ascending radius ladder and the fraction of samples with `‖q_t‖_∞ < R`.
    pub radii: Vec<f64>,
    pub fractions: Vec<f64>,
    pub sup: f64,
    /// Sup of `‖q_t‖_∞` over the first, middle and last third of the run.
    pub thirds: [f64; 3],
    /// Grönwall envelope of `‖q_t‖_∞`; `None` when its exponent overflows.
    pub envelope: Option<Vec<f64>>,
    pub envelope_max: Option<f64>,
    /// `ε = 0` and the run average of the growth coefficient stays below `γ`.
    pub condition_holds: bool,
    pub dominated: Option<bool>,
}

/// Noise amplitude `σ` giving `E‖q‖²_{L²} = 1` for the stationary linear
/// inviscid flow: `Σ_k c_k² / (2γ) = 1`.
pub fn unit_stationary_amplitude(model: &Model) -> f64 {
    let r = model.noise().spec().decay;
    let sum: f64 = model
        .noise()
        .pairs()
        .iter()
        .map(|p| (1.0 + p.mu.abs()).powf(-2.0 * r))
        .sum();
    (2.0 * model.config().gamma / sum).sqrt()
}

/// Runs `q` from `0` together with `ζ_λ` driven by the same Brownian motion
/// and checks that `‖q_t‖_∞` stays confined. With `v = q - ζ_λ`,
/// `C_u = B √(3|D|)` and `z = ‖ζ_λ‖_{ℋ^{5/2}}`,
///
/// ```text
/// ‖v‖_∞' ≤ (C_u C1 z - γ) ‖v‖_∞ + (C_u C1 z + |λ - γ|) C0 z,   ‖q‖_∞ ≤ ‖v‖_∞ + C0 z
/// ```
///
/// which is integrated a-posteriori from the recorded `z`. Without `radii`
/// the ladder is eight equal steps up to just above the observed sup.
pub fn tightness_diagnostic(
    config: &SimConfig,
    rate: f64,
    horizon: f64,
    radii: Option<&[f64]>,
) -> Result<TightnessReport> {
    if !(rate.is_finite() && rate > config.gamma / 2.0) {
        return Err(Error::config(format!(
            "tightness rate must exceed gamma/2 = {}",
            config.gamma / 2.0
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config("tightness horizon must be positive"));
    }
    if config.initial != InitialDatum::Zero {
        return Err(Error::config("tightness diagnostic starts from q0 = 0 (initial=zero)"));
    }
    if let Some(r) = radii {
        if r.is_empty() || r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::config("radii must be positive"));
        }
    }
    let model = Model::build(config)?;
    let basis = model.basis();
    let noise = model.noise();
    let dt = model.dt();
    let steps = (horizon / dt).round() as usize;
    if steps < 3 {
        return Err(Error::config("tightness horizon must span at least 3 steps"));
    }
    let every = config.record_every;
    let k = noise.len();
    let substeps = config.noise_substeps;

    let mut state = model.start(&basis.zeros(), 0)?;
    let mut extra = stream(config.seed, ZETA_STREAM);
    let mut zeta = OuState::zero(rate, k)?;
    let mut times = vec![0.0];
    let mut q_sup = vec![0.0];
    let mut z = vec![0.0];
    for s in 1..=steps {
        let normals = model.draw_step_normals(&mut state.rng);
        let dw = model.increment_from_normals(&normals);
        model.step_with_increment(&mut state, &dw)?;
        let mut xi_dw = vec![0.0; k];
        for block in normals.chunks(k.max(1)) {
            for (x, b) in xi_dw.iter_mut().zip(block) {
                *x += b / (substeps as f64).sqrt();
            }
        }
        let xi_extra = model.draw_step_normals(&mut extra);
        ou_step_coupled(&mut zeta, noise, dt, &xi_dw, &xi_extra[..k])?;
        if s % every == 0 || s == steps {
            times.push(state.time);
            q_sup.push(basis.lp_norm(&state.q(), f64::INFINITY)?);
            z.push(zeta.fractional_norm(noise, basis, 2.5));
        }
    }

    let sup = q_sup.iter().copied().fold(0.0, f64::max);
    let total = times[times.len() - 1];
    let mut thirds = [0.0f64; 3];
    let mut seen = [false; 3];
    for (t, v) in times.iter().zip(&q_sup) {
        let i = ((3.0 * t / total).ceil() as usize).clamp(1, 3) - 1;
        thirds[i] = thirds[i].max(*v);
        seen[i] = true;
    }
    if seen.contains(&false) {
        return Err(Error::Sampling("record cadence leaves a third of the run unsampled".into()));
    }

    let mut radii: Vec<f64> = match radii {
        Some(r) => r.to_vec(),
        None => {
            let top = if sup > 0.0 { sup * (1.0 + 1e-9) } else { 1.0 };
            (1..=8).map(|j| top * j as f64 / 8.0).collect()
        }
    };
    radii.sort_by(f64::total_cmp);
    let n = q_sup.len() as f64;
    let fractions = radii
        .iter()
        .map(|r| q_sup.iter().filter(|v| *v < r).count() as f64 / n)
        .collect();

    let c = EmbeddingConstants::new(model.solver());
    let c_u = c.biot_savart * (3.0 * c.area).sqrt();
    let gamma = config.gamma;
    let growth: Vec<f64> = z.iter().map(|z| c_u * c.c_grad * z).collect();
    let a: Vec<f64> = growth.iter().map(|g| g - gamma).collect();
    let b: Vec<f64> = growth
        .iter()
        .zip(&z)
        .map(|(g, z)| (g + (rate - gamma).abs()) * c.c0 * z)
        .collect();
    let envelope = gronwall(&times, &a, &b, 0.0, 700.0)
        .map(|y| y.iter().zip(&z).map(|(y, z)| y + c.c0 * z).collect::<Vec<f64>>());
    let condition_holds = config.epsilon == 0.0 && trapezoid(&times, &growth) / total < gamma;
    let dominated = envelope
        .as_ref()
        .map(|e| q_sup.iter().zip(e).all(|(q, e)| q <= e));
    Ok(TightnessReport {
        rate,
        envelope_max: envelope.as_ref().map(|e| e.iter().copied().fold(0.0, f64::max)),
        envelope,
        condition_holds,
        dominated,
        times,
        q_sup_norms: q_sup,
        zeta_norms: z,
        radii,
        fractions,
        sup,
        thirds,
    })
}
