//! Simulation configuration and its flat `key=value` vocabulary.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::observables::Observable;
use crate::spectral::{LayerField, Representation, SpectralBasis};

/// Initial potential vorticity.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    Zero,
    /// `Σ_i a_i e_{n,m}` in layer `i`.
    Mode { n: usize, m: usize, amplitudes: [f64; 3] },
    /// Gaussian coefficients on modes `n, m ≤ max_mode`, weighted by
    /// `(n² + m²)^{-1}`, then rescaled to the requested `L²` norm.
    Random { seed: u64, amplitude: f64, max_mode: usize },
}

impl InitialDatum {
    pub fn build(&self, basis: &SpectralBasis) -> Result<LayerField> {
        let shape = basis.modes();
        match *self {
            InitialDatum::Zero => Ok(basis.zeros()),
            InitialDatum::Mode { n, m, amplitudes } => {
                if n == 0 || m == 0 || n > shape.0 || m > shape.1 {
                    return Err(Error::config(format!(
                        "initial mode ({n},{m}) outside retained modes {shape:?}"
                    )));
                }
                Ok(LayerField::single_mode(shape, n, m, amplitudes))
            }
            InitialDatum::Random {
                seed,
                amplitude,
                max_mode,
            } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let mut field = LayerField::zeros(Representation::Spectral, shape);
                let (cx, cy) = (max_mode.min(shape.0), max_mode.min(shape.1));
                for l in 0..3 {
                    for i in 0..cx {
                        for j in 0..cy {
                            let w = 1.0 / (((i + 1).pow(2) + (j + 1).pow(2)) as f64);
                            let xi: f64 = StandardNormal.sample(&mut rng);
                            field.layer_mut(l)[[i, j]] = w * xi;
                        }
                    }
                }
                let norm = field.sum_squares().sqrt();
                if norm > 0.0 {
                    field.scale(amplitude / norm);
                }
                Ok(field)
            }
        }
    }

    fn parse(value: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = value.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("invalid number '{s}'"));
        let int = |s: &str| s.parse::<u64>().map_err(|_| format!("invalid integer '{s}'"));
        match parts.as_slice() {
            ["zero"] => Ok(InitialDatum::Zero),
            ["mode", n, m, a, b, c] => Ok(InitialDatum::Mode {
                n: int(n)? as usize,
                m: int(m)? as usize,
                amplitudes: [num(a)?, num(b)?, num(c)?],
            }),
            ["random", seed, amp, max] => Ok(InitialDatum::Random {
                seed: int(seed)?,
                amplitude: num(amp)?,
                max_mode: int(max)? as usize,
            }),
            _ => Err(format!(
                "invalid initial datum '{value}' (expected 'zero', 'mode n m a1 a2 a3' or 'random seed amplitude max_mode')"
            )),
        }
    }
}

impl fmt::Display for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDatum::Zero => write!(f, "zero"),
            InitialDatum::Mode { n, m, amplitudes: [a, b, c] } => {
                write!(f, "mode {n} {m} {a:?} {b:?} {c:?}")
            }
            InitialDatum::Random {
                seed,
                amplitude,
                max_mode,
            } => write!(f, "random {seed} {amplitude:?} {max_mode}"),
        }
    }
}

/// All parameters of one simulation. Optional fields resolve to defaults
/// derived from the mode counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub gx: Option<usize>,
    pub gy: Option<usize>,
    pub lambdas: [f64; 3],
    pub lambda_scale: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub nonlinear: bool,
    pub noise_modes: Option<usize>,
    pub noise_decay: f64,
    pub noise_amplitude: f64,
    pub noise_substeps: usize,
    pub record_every: usize,
    pub initial: InitialDatum,
    pub observables: Vec<Observable>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            nx: 32,
            ny: 32,
            gx: None,
            gy: None,
            lambdas: [1.0; 3],
            lambda_scale: 1.0,
            gamma: 0.5,
            epsilon: 0.0,
            dt: 1e-3,
            horizon: 1.0,
            seed: 0,
            nonlinear: true,
            noise_modes: None,
            noise_decay: 2.0,
            noise_amplitude: 1.0,
            noise_substeps: 1,
            record_every: 1,
            initial: InitialDatum::Zero,
            observables: vec![
                Observable::parse("q_l2").unwrap(),
                Observable::parse("q_l4").unwrap(),
                Observable::parse("q_linf").unwrap(),
            ],
        }
    }
}

/// Every recognized configuration key, in echo order.
pub const CONFIG_KEYS: &[&str] = &[
    "lx",
    "ly",
    "nx",
    "ny",
    "gx",
    "gy",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda_scale",
    "gamma",
    "epsilon",
    "dt",
    "horizon",
    "seed",
    "nonlinear",
    "noise_modes",
    "noise_decay",
    "noise_amplitude",
    "noise_substeps",
    "record_every",
    "initial",
    "observables",
];

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("invalid number '{v}'"))
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>()
        .map_err(|_| format!("invalid nonnegative integer '{v}'"))
}

impl SimConfig {
    pub fn grid(&self) -> (usize, usize) {
        (self.gx.unwrap_or(2 * self.nx), self.gy.unwrap_or(2 * self.ny))
    }

    /// Default truncation `3 min(Nx, Ny)² / 4`.
    pub fn resolved_noise_modes(&self) -> usize {
        self.noise_modes
            .unwrap_or(3 * self.nx.min(self.ny).pow(2) / 4)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Sets one key from its textual value. Errors are plain messages; the
    /// caller attaches location information.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "lx" => self.lx = parse_f64(value)?,
            "ly" => self.ly = parse_f64(value)?,
            "nx" => self.nx = parse_usize(value)?,
            "ny" => self.ny = parse_usize(value)?,
            "gx" => self.gx = Some(parse_usize(value)?),
            "gy" => self.gy = Some(parse_usize(value)?),
            "lambda1" => self.lambdas[0] = parse_f64(value)?,
            "lambda2" => self.lambdas[1] = parse_f64(value)?,
            "lambda3" => self.lambdas[2] = parse_f64(value)?,
            "lambda_scale" => self.lambda_scale = parse_f64(value)?,
            "gamma" => self.gamma = parse_f64(value)?,
            "epsilon" => self.epsilon = parse_f64(value)?,
            "dt" => self.dt = parse_f64(value)?,
            "horizon" => self.horizon = parse_f64(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| format!("invalid seed '{value}'"))?
            }
            "nonlinear" => {
                self.nonlinear = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(format!("invalid boolean '{value}'")),
                }
            }
            "noise_modes" => self.noise_modes = Some(parse_usize(value)?),
            "noise_decay" => self.noise_decay = parse_f64(value)?,
            "noise_amplitude" => self.noise_amplitude = parse_f64(value)?,
            "noise_substeps" => self.noise_substeps = parse_usize(value)?,
            "record_every" => self.record_every = parse_usize(value)?,
            "initial" => self.initial = InitialDatum::parse(value)?,
            "observables" => {
                self.observables = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Observable::parse(s).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Checks every named constraint that does not depend on the state.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive")))
            }
        };
        positive(self.lx, "lx")?;
        positive(self.ly, "ly")?;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("nx and ny must be positive"));
        }
        let (gx, gy) = self.grid();
        if gx < 2 * self.nx {
            return Err(Error::config(format!(
                "grid resolution gx >= 2*nx violated ({gx} < {})",
                2 * self.nx
            )));
        }
        if gy < 2 * self.ny {
            return Err(Error::config(format!(
                "grid resolution gy >= 2*ny violated ({gy} < {})",
                2 * self.ny
            )));
        }
        for (i, l) in self.lambdas.iter().enumerate() {
            positive(*l, &format!("lambda{}", i + 1))?;
        }
        positive(self.lambda_scale, "lambda_scale")?;
        positive(self.gamma, "gamma")?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be nonnegative"));
        }
        positive(self.dt, "dt")?;
        positive(self.horizon, "horizon")?;
        if self.dt > 0.5 / self.gamma {
            return Err(Error::StabilityCeiling {
                dt: self.dt,
                ceiling: 0.5 / self.gamma,
                time: 0.0,
            });
        }
        if self.noise_modes.is_some_and(|k| k > 3 * self.nx * self.ny) {
            return Err(Error::config(format!(
                "noise_modes must not exceed 3*nx*ny = {}",
                3 * self.nx * self.ny
            )));
        }
        if !(self.noise_decay.is_finite() && self.noise_decay >= 0.0) {
            return Err(Error::config("noise_decay must be nonnegative"));
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err(Error::config("noise_amplitude must be nonnegative"));
        }
        if self.noise_substeps == 0 {
            return Err(Error::config("noise_substeps must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be positive"));
        }
        Ok(())
    }

    /// Resolved `key=value` lines for every key, in a form [`set`](Self::set)
    /// accepts back.
    pub fn echo(&self) -> String {
        let (gx, gy) = self.grid();
        let obs: Vec<String> = self.observables.iter().map(|o| o.name()).collect();
        let lines = [
            format!("lx={:?}", self.lx),
            format!("ly={:?}", self.ly),
            format!("nx={}", self.nx),
            format!("ny={}", self.ny),
            format!("gx={gx}"),
            format!("gy={gy}"),
            format!("lambda1={:?}", self.lambdas[0]),
            format!("lambda2={:?}", self.lambdas[1]),
            format!("lambda3={:?}", self.lambdas[2]),
            format!("lambda_scale={:?}", self.lambda_scale),
            format!("gamma={:?}", self.gamma),
            format!("epsilon={:?}", self.epsilon),
            format!("dt={:?}", self.dt),
            format!("horizon={:?}", self.horizon),
            format!("seed={}", self.seed),
            format!("nonlinear={}", self.nonlinear),
            format!("noise_modes={}", self.resolved_noise_modes()),
            format!("noise_decay={:?}", self.noise_decay),
            format!("noise_amplitude={:?}", self.noise_amplitude),
            format!("noise_substeps={}", self.noise_substeps),
            format!("record_every={}", self.record_every),
            format!("initial={}", self.initial),
            format!("observables={}", obs.join(",")),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Hex SHA-256 of the resolved echo.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
