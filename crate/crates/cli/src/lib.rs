//! Command-line orchestration: each subcommand loads a configuration, runs
//! one experiment and writes its CSV reports, binary snapshots and a
//! replayable manifest into the output directory.

pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qg3_core::dynamics::{regularity_check, run_trajectory, Model, RecordOptions};
use qg3_core::experiments::{
    galerkin_sweep, log_estimate_monitor, lp_envelope, viscosity_sweep, w14_monitor,
    yudovich_stability, SweepReport,
};
use qg3_core::measures::{invariance_test, kb_average, tightness_diagnostic, Functional};
use qg3_core::{Error, InitialDatum, Result, SimConfig, SpectralBasis};

use crate::io::{encode_field, number, parse_config, series_csv, ArtifactWriter, RunManifest, Table};

#[derive(Debug, Parser)]
#[command(name = "qg3", version, about = "Stochastic three-layer QG simulator and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Configuration file (`key=value` lines); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads. Never changes any output.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trajectory: observable series and optional snapshots.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write a binary snapshot every this many steps (a multiple of
        /// `record_every`).
        #[arg(long)]
        snap_every: Option<usize>,
    },
    /// Galerkin refinement along a ladder of mode counts.
    Galerkin {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
        n_ladder: Vec<usize>,
    },
    /// Vanishing-viscosity sweep.
    Viscosity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
        eps_ladder: Vec<f64>,
    },
    /// Separation of perturbed paths for shrinking perturbations.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
        deltas: Vec<f64>,
    },
    /// Time-averaged measures and, with `--window`, a shift-invariance test.
    Invariant {
        #[command(flatten)]
        common: Common,
        /// Averaging horizons; defaults to the configured horizon.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        paths: usize,
        /// Burn-in before the invariance windows; defaults to 10/gamma.
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        window: Option<f64>,
    },
    /// Sup-norm confinement against the stochastic convolution envelope.
    Tightness {
        #[command(flatten)]
        common: Common,
        /// OU rate; defaults to gamma.
        #[arg(long)]
        rate: Option<f64>,
        /// Run length; defaults to the configured horizon.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
    },
    /// Noise regularity, log-estimate ratios and norm envelopes along one run.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run { common, .. }
            | Command::Galerkin { common, .. }
            | Command::Viscosity { common, .. }
            | Command::Stability { common, .. }
            | Command::Invariant { common, .. }
            | Command::Tightness { common, .. }
            | Command::Diagnose { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Galerkin { .. } => "galerkin",
            Command::Viscosity { .. } => "viscosity",
            Command::Stability { .. } => "stability",
            Command::Invariant { .. } => "invariant",
            Command::Tightness { .. } => "tightness",
            Command::Diagnose { .. } => "diagnose",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONSTRAINT: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        e if e.is_constraint() => EXIT_CONSTRAINT,
        _ => EXIT_FAILURE,
    }
}

fn load_config(common: &Common) -> Result<SimConfig> {
    let mut config = match &common.config {
        Some(path) => parse_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Runs a parsed command inside a pool of the requested size.
pub fn execute(cli: &Cli) -> Result<RunManifest> {
    let common = cli.command.common();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| dispatch(&cli.command))
}

fn dispatch(command: &Command) -> Result<RunManifest> {
    let common = command.common();
    let config = load_config(common)?;
    let mut out = ArtifactWriter::new(&common.out, RunManifest::new(command.name(), &config))?;
    // A blow-up still leaves the recorded prefix and the manifest behind.
    let mut deferred = None;
    match command {
        Command::Run { snap_every, .. } => deferred = run(&config, *snap_every, &mut out)?,
        Command::Galerkin { n_ladder, .. } => {
            out.manifest_mut().param("n_ladder", join(n_ladder));
            let report = galerkin_sweep(&config, n_ladder)?;
            out.write("galerkin.csv", sweep_csv(&report)?.as_bytes())?;
        }
        Command::Viscosity { eps_ladder, .. } => {
            out.manifest_mut().param("eps_ladder", join(eps_ladder));
            let report = viscosity_sweep(&config, eps_ladder)?;
            out.write("viscosity.csv", sweep_csv(&report)?.as_bytes())?;
        }
        Command::Stability { deltas, .. } => stability(&config, deltas, &mut out)?,
        Command::Invariant {
            horizons,
            paths,
            burn_in,
            window,
            ..
        } => invariant(&config, horizons, *paths, *burn_in, *window, &mut out)?,
        Command::Tightness {
            rate,
            horizon,
            radii,
            ..
        } => tightness(&config, *rate, *horizon, radii, &mut out)?,
        Command::Diagnose { .. } => diagnose(&config, &mut out)?,
    }
    let manifest = out.finish()?;
    match deferred {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn text_table(rows: &[(&str, String)]) -> String {
    let mut t = Table::new(&["item", "value"]);
    for (k, v) in rows {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t.render()
}

/// `from,to,metric,value` rows of a sweep report.
pub fn sweep_csv(report: &SweepReport) -> Result<String> {
    let mut t = Table::new(&["from", "to", "metric", "value"]);
    for r in &report.rows {
        t.row(vec![
            number(r.from, "from")?,
            number(r.to, "to")?,
            r.metric.clone(),
            number(r.value, "value")?,
        ]);
    }
    Ok(t.render())
}

/// Returns the blow-up, if any, after writing the recorded prefix.
fn run(config: &SimConfig, snap_every: Option<usize>, out: &mut ArtifactWriter) -> Result<Option<Error>> {
    if let Some(s) = snap_every {
        if s == 0 || s % config.record_every != 0 {
            return Err(Error::Config(
                "snap-every must be a positive multiple of record_every".into(),
            ));
        }
        out.manifest_mut().param("snap_every", s);
    }
    let model = Model::build(config)?;
    let q0 = config.initial.build(model.basis())?;
    let opts = RecordOptions {
        store_q: snap_every.is_some(),
        ..RecordOptions::from_model(&model)
    };
    let (record, failure) = match run_trajectory(&model, &q0, &opts, 0) {
        Ok(r) => (r, None),
        Err(Error::BlowUp { time, partial }) => match partial {
            Some(p) => (*p, Some(Error::BlowUp { time, partial: None })),
            None => return Err(Error::BlowUp { time, partial: None }),
        },
        Err(e) => return Err(e),
    };
    out.write(
        "series.csv",
        series_csv(&record.times, &record.names, &record.series)?.as_bytes(),
    )?;
    if let Some(s) = snap_every {
        for (t, q) in record.times.iter().zip(&record.q) {
            let step = (t / config.dt).round() as usize;
            if step.is_multiple_of(s) {
                out.write(&format!("snap_{step:09}.lqg"), &encode_field(q))?;
            }
        }
    }
    Ok(failure)
}

fn stability(config: &SimConfig, deltas: &[f64], out: &mut ArtifactWriter) -> Result<()> {
    out.manifest_mut().param("deltas", join(deltas));
    let basis = SpectralBasis::build(
        config.lx,
        config.ly,
        config.nx,
        config.ny,
        config.grid().0,
        config.grid().1,
    )?;
    let perturbation = InitialDatum::Random {
        seed: config.seed.wrapping_add(1),
        amplitude: 1.0,
        max_mode: config.nx.min(config.ny).min(8),
    };
    out.manifest_mut().param("perturbation", &perturbation);
    let p = perturbation.build(&basis)?;
    let study = yudovich_stability(config, deltas, &p)?;
    out.write("stability.csv", sweep_csv(&study.report)?.as_bytes())?;
    let names: Vec<String> = deltas.iter().map(|d| format!("z_delta_{d:e}")).collect();
    out.write(
        "stability_z.csv",
        series_csv(&study.times, &names, &study.z_series)?.as_bytes(),
    )?;
    Ok(())
}

fn invariant(
    config: &SimConfig,
    horizons: &[f64],
    paths: usize,
    burn_in: Option<f64>,
    window: Option<f64>,
    out: &mut ArtifactWriter,
) -> Result<()> {
    let horizons = if horizons.is_empty() {
        vec![config.horizon]
    } else {
        horizons.to_vec()
    };
    out.manifest_mut().param("horizons", join(&horizons));
    out.manifest_mut().param("paths", paths);
    let functionals: Vec<Functional> = config.observables.iter().cloned().map(Functional::from).collect();
    let measures = kb_average(config, &horizons, &functionals, paths)?;
    let mut t = Table::new(&["horizon", "observable", "average", "std_error", "n_paths"]);
    for m in &measures {
        for (j, name) in m.names.iter().enumerate() {
            t.row(vec![
                number(m.horizon, "horizon")?,
                name.clone(),
                number(m.averages[j], "average")?,
                number(m.std_errors[j], "std_error")?,
                number(m.n_paths as f64, "n_paths")?,
            ]);
        }
    }
    out.write("kb_average.csv", t.render().as_bytes())?;

    if let Some(window) = window {
        let burn_in = burn_in.unwrap_or(10.0 / config.gamma);
        out.manifest_mut().param("burn_in", burn_in);
        out.manifest_mut().param("window", window);
        let r = invariance_test(config, burn_in, window, &functionals, paths)?;
        let mut t = Table::new(&[
            "observable",
            "shift",
            "distance",
            "p_value",
            "samples",
            "skipped",
            "rejected",
        ]);
        for c in &r.comparisons {
            t.row(vec![
                c.observable.clone(),
                number(c.shift, "shift")?,
                number(c.distance, "distance")?,
                number(c.p_value, "p_value")?,
                number(c.samples as f64, "samples")?,
                c.skipped.to_string(),
                c.rejected.to_string(),
            ]);
        }
        out.write("invariance.csv", t.render().as_bytes())?;
    }
    Ok(())
}

fn tightness(
    config: &SimConfig,
    rate: Option<f64>,
    horizon: Option<f64>,
    radii: &[f64],
    out: &mut ArtifactWriter,
) -> Result<()> {
    let rate = rate.unwrap_or(config.gamma);
    let horizon = horizon.unwrap_or(config.horizon);
    out.manifest_mut().param("rate", rate);
    out.manifest_mut().param("horizon", horizon);
    if !radii.is_empty() {
        out.manifest_mut().param("radii", join(radii));
    }
    let r = tightness_diagnostic(config, rate, horizon, (!radii.is_empty()).then_some(radii))?;
    let mut t = Table::new(&["radius", "fraction"]);
    for (radius, f) in r.radii.iter().zip(&r.fractions) {
        t.numbers(&[*radius, *f])?;
    }
    out.write("tightness.csv", t.render().as_bytes())?;

    let mut names = vec!["q_linf".to_string(), "zeta_h2.5".to_string()];
    let mut cols = vec![r.q_sup_norms.clone(), r.zeta_norms.clone()];
    if let Some(e) = &r.envelope {
        names.push("envelope".into());
        cols.push(e.clone());
    }
    out.write(
        "tightness_series.csv",
        series_csv(&r.times, &names, &cols)?.as_bytes(),
    )?;
    let opt = |v: Option<f64>| v.map_or(Ok("none".to_string()), |v| number(v, "value"));
    let summary = [
        ("sup", number(r.sup, "sup")?),
        ("third1", number(r.thirds[0], "third1")?),
        ("third2", number(r.thirds[1], "third2")?),
        ("third3", number(r.thirds[2], "third3")?),
        ("envelope_max", opt(r.envelope_max)?),
        ("condition_holds", r.condition_holds.to_string()),
        ("dominated", r.dominated.map_or("none".into(), |d| d.to_string())),
    ];
    out.write("tightness_summary.csv", text_table(&summary).as_bytes())?;
    Ok(())
}

fn diagnose(config: &SimConfig, out: &mut ArtifactWriter) -> Result<()> {
    let model = Model::build(config)?;
    let reg = regularity_check(model.noise().spec(), model.basis(), model.coupling())?;
    let q0 = config.initial.build(model.basis())?;
    let opts = RecordOptions {
        store_q: true,
        store_eta_w: true,
        ..RecordOptions::from_model(&model)
    };
    let record = run_trajectory(&model, &q0, &opts, 0)?;

    let log = log_estimate_monitor(&model, &record)?;
    let mut t = Table::new(&["time", "ratio"]);
    for (time, ratio) in record.times.iter().zip(&log.ratios) {
        if let Some(r) = ratio {
            t.numbers(&[*time, *r])?;
        }
    }
    out.write("log_estimate.csv", t.render().as_bytes())?;

    let w14 = w14_monitor(&model, &record)?;
    let mut names = vec!["q_gradl4".to_string()];
    let mut cols = vec![w14.series.clone()];
    if let Some(e) = &w14.envelope {
        names.push("envelope".into());
        cols.push(e.clone());
    }
    out.write("w14.csv", series_csv(&w14.times, &names, &cols)?.as_bytes())?;

    let envs = lp_envelope(&model, &record, &[1, 2, 4])?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for e in &envs {
        names.push(format!("q_l{}", 2 * e.k));
        cols.push(e.observed.clone());
        if let Some(env) = &e.envelope {
            names.push(format!("envelope_l{}", 2 * e.k));
            cols.push(env.clone());
        }
    }
    out.write(
        "lp_envelope.csv",
        series_csv(&record.times, &names, &cols)?.as_bytes(),
    )?;

    let mut summary = vec![
        ("regularity_partial_1", number(reg.partial_sums[0], "value")?),
        ("regularity_partial_2", number(reg.partial_sums[1], "value")?),
        ("regularity_partial_3", number(reg.partial_sums[2], "value")?),
        ("regularity", reg.verdict().to_string()),
        ("c_kato", number(w14.c_kato, "value")?),
        ("w14_dominated", w14.dominated.to_string()),
    ];
    let lp_flags: Vec<(String, String)> = envs
        .iter()
        .map(|e| (format!("l{}_dominated", 2 * e.k), e.dominated.to_string()))
        .collect();
    summary.extend(lp_flags.iter().map(|(k, v)| (k.as_str(), v.clone())));
    out.write("diagnose_summary.csv", text_table(&summary).as_bytes())?;
    Ok(())
}
