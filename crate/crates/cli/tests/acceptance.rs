//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (written straight to stderr so it shows without `--nocapture`) with its
//! measured value and wall time; the test fails if any criterion does.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use qg3_core::dynamics::{ou_step, run_trajectory, Model, OuState, RecordOptions};
use qg3_core::experiments::{
    galerkin_sweep, lp_envelope, stability_pair, viscosity_sweep, w14_monitor, weak_residual,
    yudovich_stability,
};
use qg3_core::measures::{kb_average, tightness_diagnostic, unit_stationary_amplitude, Functional};
use qg3_core::rng::stream;
use qg3_core::{
    nonlinear_term, EllipticSolver, InitialDatum, LayerCoupling, LayerField, Observable, SimConfig,
    SpectralBasis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (bool, String);

fn criterion(id: u32, name: &str, limit_s: f64, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let (ok, detail) = f();
    let secs = start.elapsed().as_secs_f64();
    let pass = ok && secs <= limit_s;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let timing = if secs <= limit_s { "" } else { " [time limit exceeded]" };
    writeln!(
        std::io::stderr(),
        "acceptance {id:>2} {verdict} {name}: {detail} ({secs:.2} s of {limit_s} s){timing}"
    )
    .unwrap();
    pass
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn random(basis: &SpectralBasis, seed: u64, max_mode: usize) -> LayerField {
    InitialDatum::Random {
        seed,
        amplitude: 1.0,
        max_mode,
    }
    .build(basis)
    .unwrap()
}

fn solver(n: usize) -> EllipticSolver {
    let basis = SpectralBasis::with_default_grid(1.0, 1.0, n, n).unwrap();
    let coupling = LayerCoupling::symmetrize([1.0, 2.0, 4.0], None).unwrap();
    EllipticSolver::new(&basis, &coupling)
}

fn c1_elliptic_round_trip() -> Check {
    let mut worst = 0.0f64;
    for n in [32, 64] {
        let s = solver(n);
        for seed in 0..100 {
            let q = random(s.basis(), seed, n);
            let back = s.apply(&s.solve(&q).unwrap()).unwrap();
            worst = worst.max((back.difference(&q).sum_squares() / q.sum_squares()).sqrt());
        }
    }
    (worst <= 1e-10, format!("max relative residual {worst:.3e} <= 1e-10"))
}

fn c2_transport_skew() -> Check {
    let s = solver(32);
    let basis = s.basis();
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let q = random(basis, 1000 + seed, 32);
        let psi = s.solve(&q).unwrap();
        let nl = nonlinear_term(basis, &q, &psi).unwrap();
        let scale = qg3_core::dynamics::max_grad_psi(basis, &psi).unwrap() * q.sum_squares();
        worst = worst.max(nl.coefficient_dot(&q).abs() / scale);
    }
    (worst <= 1e-8, format!("max normalized |<u.grad q, q>| {worst:.3e} <= 1e-8"))
}

fn c3_single_mode_jacobian() -> Check {
    let s = solver(32);
    let basis = s.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, m) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let mix: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let q = LayerField::single_mode(basis.modes(), n, m, mix);
        let psi = s.solve(&q).unwrap();
        worst = worst.max(nonlinear_term(basis, &q, &psi).unwrap().max_abs());
    }
    (worst <= 1e-12, format!("max |J| {worst:.3e} <= 1e-12"))
}

fn c4_exact_decay() -> Check {
    let cfg = SimConfig {
        nx: 32,
        ny: 32,
        gamma: 0.5,
        epsilon: 0.0,
        dt: 1e-3,
        horizon: 1.0,
        noise_amplitude: 0.0,
        record_every: 50,
        initial: InitialDatum::Random {
            seed: 4,
            amplitude: 1.0,
            max_mode: 8,
        },
        observables: ["q_l2", "q_l4", "q_l8"]
            .iter()
            .map(|t| Observable::parse(t).unwrap())
            .collect(),
        ..SimConfig::default()
    };
    let model = Model::build(&cfg).unwrap();
    let q0 = cfg.initial.build(model.basis()).unwrap();
    let rec = run_trajectory(&model, &q0, &RecordOptions::from_model(&model), 0).unwrap();
    let mut worst = 0.0f64;
    for s in &rec.series {
        for (t, v) in rec.times.iter().zip(s) {
            worst = worst.max((v / ((-cfg.gamma * t).exp() * s[0]) - 1.0).abs());
        }
    }
    (worst <= 1e-4, format!("max |ratio - 1| over k=1,2,4: {worst:.3e} <= 1e-4"))
}

fn c5_ou_variance() -> Check {
    let cfg = SimConfig {
        nx: 8,
        ny: 8,
        noise_modes: Some(16),
        ..SimConfig::default()
    };
    let model = Model::build(&cfg).unwrap();
    let noise = model.noise();
    let basis = model.basis();
    let alpha = 2.5;
    let mut ok = true;
    let mut worst_z = 0.0f64;
    let mut agg_z = Vec::new();
    for (i, lambda) in [0.5f64, 2.0].into_iter().enumerate() {
        let dt = 1.0 / lambda;
        let n = 20_000;
        let rho2 = (-2.0 * lambda * dt).exp();
        let ess = n as f64 * (1.0 - rho2) / (1.0 + rho2);
        ok &= ess >= 1e4;
        let mut rng = stream(5, i as u64);
        let mut state = OuState::zero(lambda, noise.len()).unwrap();
        for _ in 0..50 {
            ou_step(&mut state, noise, dt, &mut rng).unwrap();
        }
        let mut sums = vec![0.0; noise.len()];
        let mut agg = 0.0;
        for _ in 0..n {
            ou_step(&mut state, noise, dt, &mut rng).unwrap();
            for (s, z) in sums.iter_mut().zip(&state.coeffs) {
                *s += z * z;
            }
            agg += state.fractional_norm_sq(noise, basis, alpha);
        }
        let mut agg_target = 0.0;
        let mut agg_var = 0.0;
        for (k, (s, c)) in sums.iter().zip(noise.coefficients()).enumerate() {
            let target = c * c / (2.0 * lambda);
            let se = target * (2.0 / ess).sqrt();
            let z = (s / n as f64 - target) / se;
            worst_z = worst_z.max(z.abs());
            ok &= z.abs() <= 3.0;
            let p = &noise.pairs()[k];
            let w = basis.eigenvalue(p.n, p.m).powf(alpha);
            agg_target += w * target;
            agg_var += 2.0 * (w * target).powi(2);
        }
        let z = (agg / n as f64 - agg_target) / (agg_var / ess).sqrt();
        agg_z.push(z);
        ok &= z.abs() <= 3.0;
    }
    (
        ok,
        format!(
            "max per-mode |z| {worst_z:.2} <= 3, aggregate z {:.2}, {:.2} (lambda 0.5, 2)",
            agg_z[0], agg_z[1]
        ),
    )
}

fn c6_linear_kb_limit() -> Check {
    let gamma = 0.5;
    let cfg = SimConfig {
        nx: 8,
        ny: 8,
        gamma,
        dt: 0.005,
        horizon: 200.0 / gamma,
        nonlinear: false,
        ..SimConfig::default()
    };
    let model = Model::build(&cfg).unwrap();
    let obs: Vec<Functional> = (1..=5)
        .map(|k| Functional::from(Observable::PairingSquared(k)))
        .collect();
    let m = kb_average(&cfg, &[cfg.horizon], &obs, 64).unwrap();
    let mut worst = 0.0f64;
    for (k, avg) in m[0].averages.iter().enumerate() {
        let target = model.noise().coefficients()[k].powi(2) / (2.0 * gamma);
        worst = worst.max((avg / target - 1.0).abs());
    }
    (worst <= 0.05, format!("max relative deviation {worst:.4} <= 0.05 over 5 modes"))
}

fn noisy_config(n: usize) -> SimConfig {
    SimConfig {
        nx: n,
        ny: n,
        seed: 7,
        dt: 1e-3,
        horizon: 1.0,
        record_every: 5,
        initial: InitialDatum::Random {
            seed: 7,
            amplitude: 1.0,
            max_mode: 8,
        },
        ..SimConfig::default()
    }
}

fn c7_vanishing_viscosity() -> Check {
    let r = viscosity_sweep(&noisy_config(32), &[0.2, 0.1, 0.05, 0.025]).unwrap();
    let d = r.distances();
    let est2 = r.values("est2");
    let max = est2.iter().copied().fold(f64::MIN, f64::max);
    let min = est2.iter().copied().fold(f64::MAX, f64::min);
    let ratio = max / min;
    (
        r.monotone && ratio <= 10.0,
        format!("sup H^-1 distances {} strictly decreasing: {}, est2 max/min {ratio:.2} <= 10", sci(&d), r.monotone),
    )
}

fn c8_galerkin() -> Check {
    let cfg = SimConfig {
        epsilon: 0.05,
        horizon: 0.5,
        ..noisy_config(16)
    };
    let r = galerkin_sweep(&cfg, &[16, 32, 64]).unwrap();
    (
        r.monotone,
        format!("sup L2 distances {} decreasing: {}", sci(&r.distances()), r.monotone),
    )
}

fn c9_yudovich() -> Check {
    let cfg = SimConfig {
        horizon: 0.5,
        ..noisy_config(32)
    };
    let model = Model::build(&cfg).unwrap();
    let p = random(model.basis(), 99, 8);
    let study = yudovich_stability(&cfg, &[1e-1, 1e-2, 1e-3], &p).unwrap();
    let z = study.report.values("z_T");
    let q0 = cfg.initial.build(model.basis()).unwrap();
    let (_, z0) = stability_pair(&model, &q0, &q0, 0).unwrap();
    let z0max = z0.iter().copied().fold(0.0, f64::max);
    let ok = study.report.monotone && z[2] <= 0.1 * z[0] && z0max <= 1e-14;
    (
        ok,
        format!("z_T {} strictly decreasing: {}, z_T(1e-3)/z_T(1e-1) {:.2e} <= 0.1, delta=0 max z {z0max:.1e}", sci(&z), study.report.monotone, z[2] / z[0]),
    )
}

fn c10_weak_residual() -> Check {
    let base = SimConfig {
        nx: 16,
        ny: 16,
        horizon: 0.5,
        record_every: 1,
        ..noisy_config(16)
    };
    let residuals = |dt: f64, substeps: usize| {
        let cfg = SimConfig {
            dt,
            noise_substeps: substeps,
            ..base.clone()
        };
        let model = Model::build(&cfg).unwrap();
        let q0 = cfg.initial.build(model.basis()).unwrap();
        let opts = RecordOptions {
            store_eta_w: true,
            ..RecordOptions::from_model(&model)
        };
        let rec = run_trajectory(&model, &q0, &opts, 0).unwrap();
        (0..5)
            .map(|i| {
                let phi = random(model.basis(), 500 + i, 6);
                weak_residual(&model, &rec, &phi)
                    .unwrap()
                    .into_iter()
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<f64>>()
    };
    // Same Brownian path: one coarse step consumes two fine steps' normals.
    let coarse = residuals(2e-3, 2);
    let fine = residuals(1e-3, 1);
    let ratios: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f / c).collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    (worst <= 0.6, format!("residual ratios {ratios:.3?}, max {worst:.3} <= 0.6"))
}

fn c11_tightness() -> Check {
    let gamma = 0.5;
    let base = SimConfig {
        nx: 16,
        ny: 16,
        gamma,
        dt: 0.01,
        horizon: 100.0 / gamma,
        seed: 11,
        ..SimConfig::default()
    };
    let sigma = unit_stationary_amplitude(&Model::build(&base).unwrap());
    let cfg = SimConfig {
        noise_amplitude: sigma,
        ..base
    };
    let r = tightness_diagnostic(&cfg, gamma, cfg.horizon, None).unwrap();
    let monotone = r.fractions.windows(2).all(|w| w[0] <= w[1]);
    let ok = r.thirds[2] <= 1.5 * r.thirds[0] && monotone;
    (
        ok,
        format!(
            "sigma {sigma:.3}, thirds of sup ||q||_inf {:.3?}, third3/third1 {:.3} <= 1.5, fractions monotone: {monotone}",
            r.thirds,
            r.thirds[2] / r.thirds[0]
        ),
    )
}

fn qg3(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_qg3"))
        .args(args)
        .status()
        .expect("binary runs")
        .success()
}

fn c12_reproducibility() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(
        &cfg,
        "nx=16\nny=16\ndt=0.002\nhorizon=0.4\nrecord_every=10\ninitial=random 3 1.0 6\nnoise_modes=40\n",
    )
    .unwrap();
    // Galerkin refinement needs viscosity; time averages start from zero.
    let viscous = dir.path().join("viscous.cfg");
    fs::write(&viscous, format!("{}epsilon=0.05\n", fs::read_to_string(&cfg).unwrap())).unwrap();
    let zero = dir.path().join("zero.cfg");
    fs::write(&zero, "nx=16\nny=16\ndt=0.002\nhorizon=0.4\nnoise_modes=40\n").unwrap();
    let (cfg, viscous, zero) = (
        cfg.to_str().unwrap(),
        viscous.to_str().unwrap(),
        zero.to_str().unwrap(),
    );
    let manifest = |out: &Path| fs::read_to_string(out.join("manifest.txt")).unwrap();
    let mut ok = true;
    for (cmd, extra) in [
        ("run", &["--snap-every", "50"][..]),
        ("invariant", &["--paths", "8", "--horizons", "0.2,0.4"][..]),
        ("galerkin", &["--n-ladder", "4,8,16"][..]),
    ] {
        let config = match cmd {
            "galerkin" => viscous,
            "invariant" => zero,
            _ => cfg,
        };
        let mut manifests = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("{cmd}{threads}"));
            let mut args = vec![cmd, "--config", config, "--seed", "12", "--out", out.to_str().unwrap(), "--threads", threads];
            args.extend_from_slice(extra);
            ok &= qg3(&args);
            manifests.push(manifest(&out));
        }
        ok &= manifests[0] == manifests[1];
        // Replaying from the manifest reproduces it.
        let replay_cfg = dir.path().join(format!("{cmd}.replay"));
        fs::write(&replay_cfg, &manifests[0]).unwrap();
        let out = dir.path().join(format!("{cmd}-replay"));
        let mut args = vec![cmd, "--config", replay_cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "8"];
        args.extend_from_slice(extra);
        ok &= qg3(&args);
        ok &= manifest(&out) == manifests[0];
    }
    (ok, "run/invariant/galerkin manifests identical across 1 vs 8 threads and on replay".into())
}

fn c13_envelopes() -> Check {
    let cfg = SimConfig {
        horizon: 1.0,
        record_every: 10,
        ..noisy_config(16)
    };
    let model = Model::build(&cfg).unwrap();
    let q0 = cfg.initial.build(model.basis()).unwrap();
    let opts = RecordOptions {
        store_eta_w: true,
        ..RecordOptions::from_model(&model)
    };
    let rec = run_trajectory(&model, &q0, &opts, 0).unwrap();
    let envs = lp_envelope(&model, &rec, &[1, 2, 3, 4]).unwrap();
    let w14 = w14_monitor(&model, &rec).unwrap();
    let lp_ok = envs.iter().all(|e| e.dominated);
    let flags: Vec<String> = envs
        .iter()
        .map(|e| format!("L{}:{}", 2 * e.k, e.dominated))
        .collect();
    (
        lp_ok && w14.dominated,
        format!("dominated {} W14:{} (C_kato {:.3})", flags.join(" "), w14.dominated, w14.c_kato),
    )
}

#[test]
fn acceptance_criteria() {
    let results = [
        criterion(1, "elliptic round-trip", 5.0, c1_elliptic_round_trip),
        criterion(2, "transport skew-symmetry", 10.0, c2_transport_skew),
        criterion(3, "single-mode Jacobian annihilation", 1.0, c3_single_mode_jacobian),
        criterion(4, "exact L^2k decay", 60.0, c4_exact_decay),
        criterion(5, "OU stationary variance", 60.0, c5_ou_variance),
        criterion(6, "linear Krylov-Bogoliubov limit", 120.0, c6_linear_kb_limit),
        criterion(7, "vanishing-viscosity Cauchy proxy", 600.0, c7_vanishing_viscosity),
        criterion(8, "Galerkin refinement", 600.0, c8_galerkin),
        criterion(9, "Yudovich stability", 300.0, c9_yudovich),
        criterion(10, "weak-formulation residual", 300.0, c10_weak_residual),
        criterion(11, "tightness diagnostic", 600.0, c11_tightness),
        criterion(12, "reproducibility", 120.0, c12_reproducibility),
        criterion(13, "envelope dominance", 300.0, c13_envelopes),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
