//! Acceptance checks. Built without the libtest harness so that the one
//! PASS/FAIL line per criterion always reaches the output; the process exits
//! non-zero when any criterion fails.
//!
//! The smooth Taylor-Green runs are shared between the conservation,
//! balance, maximum principle, entropy and weak-form criteria.

use std::time::{Duration, Instant};

use nlc2_core::checkpoint::{decode, encode, read_checkpoint, write_checkpoint};
use nlc2_core::config::{parse_config, parse_study_config, RunConfig};
use nlc2_core::diagnostics::{conservation_drift, horizon_estimate, horizon_formula, WeakResidual};
use nlc2_core::driver::{checkpoint_meta, initial_state, simulate, stepper_for, RunOutput};
use nlc2_core::dynamics::State;
use nlc2_core::limits::{continuation_run, run_study, ContinuationSettings, StudyReport};
use nlc2_core::stepper::{run, RunSchedule};
use nlc2_core::{DirectorField, ScalarField, Spectral, TorusGrid, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Smooth defect-free data: Taylor-Green flow, tilted director, theta = 1,
/// affine-clamped viscosity, cutoff and power-law regularization active.
fn smooth_config(nx: usize, dt: f64) -> RunConfig {
    parse_config(&format!(
        "[grid]\nnx = {nx}\n\
         [params]\nM = 10\nN = 100\nviscosity = affine_clamped\nmu_lower = 0.5\nmu_upper = 1.5\n\
         mu_intercept = 0.5\nmu_slope = 0.5\n\
         [scheme]\ndt = {dt}\nt_end = 1\n\
         [ic]\nkind = taylor_green\namplitude = 0.5\ndirector_perturbation = 0.3\ntheta0 = 1\n\
         [diagnostics]\nsample_stride = 1\nweak_form = true\n"
    ))
    .expect("smooth config")
}

struct SmoothRun {
    cfg: RunConfig,
    out: RunOutput,
    elapsed: Duration,
}

fn smooth_run(nx: usize, dt: f64) -> SmoothRun {
    let cfg = smooth_config(nx, dt);
    let sp = cfg.spectral();
    let clock = Instant::now();
    let out = simulate(&cfg, initial_state(&cfg, &sp).expect("initial data"), None).expect("run");
    SmoothRun {
        cfg,
        out,
        elapsed: clock.elapsed(),
    }
}

impl SmoothRun {
    fn failed(&self) -> Option<String> {
        self.out.failure.as_ref().map(|e| e.to_string())
    }

    fn drift(&self) -> (f64, f64) {
        let series: Vec<_> = self.out.records.iter().map(|r| r.energy()).collect();
        let d = conservation_drift(&series, 1e-5).expect("records");
        (d.max_relative_drift, d.balance_residual)
    }

    /// Largest violation of the entropy inequality over all samples, nodes
    /// and exponents.
    fn entropy_violation(&self) -> f64 {
        self.out
            .records
            .iter()
            .flat_map(|r| r.entropy_min_res.iter().copied())
            .filter(|v| v.is_finite())
            .fold(0.0, |m: f64, v| m.max(-v))
    }

    fn weak(&self) -> &[WeakResidual] {
        self.out.weak.as_deref().expect("weak form enabled")
    }
}

fn c1_spectral_exactness() -> Outcome {
    let clock = Instant::now();
    let grid = TorusGrid::square(64);
    let sp = Spectral::for_grid(grid);
    let f = ScalarField::from_fn(grid, |x, y| (3.0 * x).sin() * (2.0 * y).cos());
    let g = sp.gradient(&f);
    let fx = ScalarField::from_fn(grid, |x, y| 3.0 * (3.0 * x).cos() * (2.0 * y).cos());
    let fy = ScalarField::from_fn(grid, |x, y| -2.0 * (3.0 * x).sin() * (2.0 * y).sin());
    let err = g.x.sub(&fx).max_abs().max(g.y.sub(&fy).max_abs());
    let t = clock.elapsed();
    outcome(
        err <= 1e-12 && t < Duration::from_secs(1),
        format!("max derivative error {err:.2e} (<= 1e-12), {:.3}s (< 1s)", secs(t)),
    )
}

fn c2_steady_state() -> Outcome {
    let cfg = parse_config(
        "[grid]\nnx = 32\n[params]\nM = 10\nN = 100\nviscosity = affine_clamped\nmu_lower = 0.5\n\
         mu_upper = 1.5\nmu_intercept = 0.5\nmu_slope = 0.5\n[scheme]\ndt = 0.01\nt_end = 10\n",
    )
    .expect("config");
    let sp = cfg.spectral();
    let s0 = initial_state(&cfg, &sp).expect("trivial data");
    let mut stepper = stepper_for(&cfg, &sp).expect("stepper");
    let clock = Instant::now();
    let schedule = RunSchedule {
        sample_stride: 0,
        checkpoint_stride: 0,
    };
    let traj = run(&mut stepper, s0.clone(), schedule, &mut ());
    let t = clock.elapsed();
    let steps = traj.steps;
    let last = match traj.into_result() {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let diff = [
        last.u.x.sub(&s0.u.x).max_abs(),
        last.u.y.sub(&s0.u.y).max_abs(),
        last.d.c[0].sub(&s0.d.c[0]).max_abs(),
        last.d.c[1].sub(&s0.d.c[1]).max_abs(),
        last.d.c[2].sub(&s0.d.c[2]).max_abs(),
        last.theta.sub(&s0.theta).max_abs(),
        last.p.sub(&s0.p).max_abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    outcome(
        steps == 1000 && diff <= 1e-12 && t < Duration::from_secs(5),
        format!(
            "{steps} steps, max change {diff:.2e} (<= 1e-12), {:.2}s (< 5s)",
            secs(t)
        ),
    )
}

fn c3_conservation(a: &SmoothRun, b: &SmoothRun) -> Outcome {
    if let Some(e) = a.failed().or(b.failed()) {
        return outcome(false, format!("run failed: {e}"));
    }
    let (da, _) = a.drift();
    let (db, _) = b.drift();
    let ratio = da / db;
    let t = a.elapsed + b.elapsed;
    outcome(
        da <= 1e-5 && db <= 1e-5 && ratio >= 3.0 && t < Duration::from_secs(180),
        format!(
            "drift {da:.3e} at dt = {}, {db:.3e} at dt = {} (<= 1e-5), ratio {ratio:.2} (>= 3), {:.1}s (< 180s)",
            a.cfg.scheme.dt,
            b.cfg.scheme.dt,
            secs(t)
        ),
    )
}

fn c4_balance(a: &SmoothRun, b: &SmoothRun) -> Outcome {
    let (_, ra) = a.drift();
    let (_, rb) = b.drift();
    outcome(
        ra <= 1e-3 && rb <= 1e-3,
        format!("relative balance residual {ra:.3e} and {rb:.3e} (<= 1e-3)"),
    )
}

fn c5_maximum_principles(a: &SmoothRun, b: &SmoothRun) -> Outcome {
    let floor = a.cfg.theta_floor;
    let mut min_theta = f64::INFINITY;
    let mut max_dev: f64 = 0.0;
    for r in a.out.records.iter().chain(&b.out.records) {
        min_theta = min_theta.min(r.min_theta);
        max_dev = max_dev.max(r.max_d_norm_dev);
    }
    let initial_ok = initial_state(&a.cfg, &a.cfg.spectral())
        .map(|s| s.d.norm().max() <= 1.0 + 1e-15)
        .unwrap_or(false);
    outcome(
        initial_ok && min_theta >= floor - 1e-6 && max_dev <= 1e-6,
        format!(
            "relaxed mode: min theta - floor {:.2e} (>= -1e-6), max ||d| - 1| {max_dev:.2e} (<= 1e-6)",
            min_theta - floor
        ),
    )
}

fn c6_entropy(coarse: &SmoothRun, fine: &SmoothRun) -> Outcome {
    let (ec, ef) = (coarse.entropy_violation(), fine.entropy_violation());
    let ratio = ec / ef;
    outcome(
        ratio >= 2.0,
        format!(
            "eps_disc {ec:.3e} ({}^2, dt {}) -> {ef:.3e} ({}^2, dt {}), shrink factor {ratio:.2} (>= 2)",
            coarse.cfg.grid.nx(),
            coarse.cfg.scheme.dt,
            fine.cfg.grid.nx(),
            fine.cfg.scheme.dt
        ),
    )
}

/// Study over `parameter` on the smooth data at 64^2; `fixed` sets the
/// other approximation parameter.
fn study(parameter: &str, fixed: &str, ladder: &str) -> Result<(StudyReport, Duration), String> {
    let text = format!(
        "[grid]\nnx = 64\n\
         [params]\n{fixed}\nviscosity = affine_clamped\nmu_lower = 0.5\nmu_upper = 1.5\n\
         mu_intercept = 0.5\nmu_slope = 0.5\n\
         [scheme]\ndt = 0.005\nt_end = 1\n\
         [ic]\nkind = taylor_green\namplitude = 0.5\ndirector_perturbation = 0.3\n\
         [diagnostics]\nsample_stride = 5\n\
         [study]\nparameter = {parameter}\nladder = {ladder}\n"
    );
    let study = parse_study_config(&text).map_err(|e| e.to_string())?;
    let clock = Instant::now();
    let report = run_study(&study).map_err(|e| e.to_string())?;
    Ok((report, clock.elapsed()))
}

fn c7_n_limit() -> Outcome {
    let (r, t) = match study("N", "M = 10", "10, 100, 1000") {
        Ok(x) => x,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    if !r.is_complete() {
        return outcome(false, "a level failed".into());
    }
    let slope = r.power_law_fit.map_or(f64::NAN, |f| f.slope);
    // ladder order is N = 10, 100, 1000: coarse to fine
    let d01 = r.pairwise[0][1].expect("pair");
    let d12 = r.pairwise[1][2].expect("pair");
    let monotone = d12.u < d01.u && d12.grad_d < d01.grad_d && d12.theta < d01.theta && r.differences_monotone(0.0);
    outcome(
        (slope - 1.0).abs() <= 0.1 && monotone && t < Duration::from_secs(300),
        format!(
            "power-law slope {slope:.3} (1 +- 0.1); u differences {:.3e} -> {:.3e}, monotone {monotone}; {:.1}s",
            d01.u,
            d12.u,
            secs(t)
        ),
    )
}

fn c8_m_limit() -> Outcome {
    let (r, t) = match study("M", "N = 100", "8, 16, 32") {
        Ok(x) => x,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    let max_g = r.levels.iter().map(|l| l.max_grad_d_sq).fold(0.0, f64::max);
    let worst = r
        .pairwise
        .iter()
        .flatten()
        .flatten()
        .map(|d| d.u.max(d.grad_d).max(d.theta))
        .fold(0.0, f64::max);
    outcome(
        r.is_complete() && max_g < 4.0 && worst < 1e-10,
        format!(
            "max |grad d|^2 {max_g:.3} (< 4), largest pairwise difference {worst:.2e} (< 1e-10), {:.1}s",
            secs(t)
        ),
    )
}

fn c9_horizon() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let eps0 = rng.gen_range(0.05..5.0);
        let e0 = rng.gen_range(0.01..100.0);
        let r0 = rng.gen_range(1e-3..=1.0);
        let (tau0, t0) = horizon_formula(eps0, e0, r0);
        let q = eps0 * eps0 * eps0 * eps0 / e0;
        let tau = q * q * q * q * q;
        let t = tau * r0 * r0 * r0;
        worst = worst.max(((tau0 - tau) / tau).abs()).max(((t0 - t) / t).abs());
    }
    // uniform density rho: pi (2 r)^2 rho = eps0^2
    let grid = TorusGrid::square(64);
    let sp = Spectral::for_grid(grid);
    let mut cells: f64 = 0.0;
    let mut search_ok = true;
    for (k, ux, eps0) in [
        (1.0, 0.0, 0.75),
        (1.0, 0.0, 1.5),
        (2.0, 0.0, 3.0),
        (1.0, 0.5, 2.0),
        (0.0, 1.0, 1.0),
    ] {
        let mut s = State::trivial(grid, [0.0, 0.0, 1.0], 1.0);
        s.u = VectorField::new(ScalarField::constant(grid, ux), ScalarField::zeros(grid));
        s.d = DirectorField::from_fn(grid, |x, _| [(k * x).cos(), (k * x).sin(), 0.0]);
        let rho = k * k + ux * ux;
        let closed = eps0 / (2.0 * (std::f64::consts::PI * rho).sqrt());
        match horizon_estimate(&sp, &s, eps0) {
            Ok(h) => cells = cells.max((h.r0 - closed.min(1.0)).abs() / grid.h()),
            Err(_) => search_ok = false,
        }
    }
    outcome(
        worst <= 1e-14 && search_ok && cells <= 2.0,
        format!("formula: worst relative error {worst:.2e} over 100 inputs (<= 1e-14); R0 search within {cells:.2} cells (<= 2)"),
    )
}

fn c10_concentration() -> Outcome {
    let cfg = parse_config(
        "[grid]\nnx = 128\n[params]\nmode = constrained\n[scheme]\ndt = 0.002\nt_end = 0.5\n\
         [ic]\nkind = defect_pair\nseparation = 1.2\ncore_radius = 0.3\n",
    )
    .expect("config");
    let sp = cfg.spectral();
    let clock = Instant::now();
    let report = continuation_run(
        &cfg,
        initial_state(&cfg, &sp).expect("defect data"),
        ContinuationSettings::from_config(&cfg),
    );
    let t = clock.elapsed();
    let report = match report {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("continuation failed: {e}")),
    };
    let total0 = report.initial_total;
    let events_ok = report
        .events
        .iter()
        .all(|e| e.mechanical_drop > 0.0 && e.heat_rise > 0.0 && e.total_change.abs() <= 0.01 * total0);
    let run_change = report
        .energies
        .iter()
        .map(|e| (e.total - total0).abs())
        .fold(0.0, f64::max)
        / total0;
    let detail = report.events.first().map_or("no event".to_string(), |e| {
        format!(
            "first at t = {:.3}: mechanical drop {:.4}, heat rise {:.4}",
            e.flag.t, e.mechanical_drop, e.heat_rise
        )
    });
    outcome(
        report.flag_count() >= 1 && events_ok && run_change <= 0.01 && t < Duration::from_secs(300),
        format!(
            "{} flag(s) (>= 1); {detail}; max total change {run_change:.2e} of initial (<= 1e-2); {:.1}s",
            report.flag_count(),
            secs(t)
        ),
    )
}

fn c11_weak_form(a: &SmoothRun, b: &SmoothRun) -> Outcome {
    let worst = |r: &SmoothRun| {
        let w = r.weak();
        (
            w.iter().map(|w| w.momentum_relative()).fold(0.0, f64::max),
            w.iter().map(|w| w.temperature_relative()).fold(0.0, f64::max),
            w.len(),
        )
    };
    let (ma, ta, na) = worst(a);
    let (mb, tb, nb) = worst(b);
    outcome(
        na == 8 && nb == 8 && ma.max(ta).max(mb).max(tb) <= 1e-3 && mb < ma && tb < ta,
        format!("momentum {ma:.2e} -> {mb:.2e}, temperature {ta:.2e} -> {tb:.2e} under dt/2 (<= 1e-3, decreasing)"),
    )
}

fn c12_determinism() -> Outcome {
    let cfg = parse_config(
        "[grid]\nnx = 32\n[params]\nM = 10\nN = 100\nmode = constrained\n[scheme]\ndt = 0.01\nt_end = 0.2\n\
         [ic]\nkind = random_bandlimited\nkmax = 3\namplitude = 0.5\nseed = 11\n[diagnostics]\nweak_form = true\n",
    )
    .expect("config");
    let sp = cfg.spectral();
    let once = || -> Result<(Vec<u8>, State), String> {
        let out =
            simulate(&cfg, initial_state(&cfg, &sp).map_err(|e| e.to_string())?, None).map_err(|e| e.to_string())?;
        Ok((out.csv_bytes(&cfg).map_err(|e| e.to_string())?, out.last))
    };
    let (Ok((a, last)), Ok((b, _))) = (once(), once()) else {
        return outcome(false, "run failed".into());
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("final.nlc2");
    let meta = checkpoint_meta(&cfg);
    let bit_exact = write_checkpoint(&last, &meta, &path).is_ok()
        && match read_checkpoint(&path) {
            Ok((s, m)) => m == meta && encode(&s, &m) == encode(&last, &meta) && s.t.to_bits() == last.t.to_bits(),
            Err(_) => false,
        };
    let bytes = encode(&last, &meta);
    let reread = decode(&bytes, &path).map(|(s, _)| s == last).unwrap_or(false);
    outcome(
        a == b && bit_exact && reread,
        format!(
            "CSV byte-identical {} ({} bytes); checkpoint roundtrip bit-exact {}",
            a == b,
            a.len(),
            bit_exact && reread
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!(
            "{} criterion {id:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    report(1, "spectral exactness", c1_spectral_exactness());
    report(2, "steady-state fidelity", c2_steady_state());
    let fine_a = smooth_run(128, 0.0025);
    let fine_b = smooth_run(128, 0.00125);
    let coarse = smooth_run(64, 0.0025);
    report(3, "total energy conservation", c3_conservation(&fine_a, &fine_b));
    report(4, "dissipation balance", c4_balance(&fine_a, &fine_b));
    report(5, "maximum principles", c5_maximum_principles(&fine_a, &fine_b));
    report(6, "entropy inequality", c6_entropy(&coarse, &fine_b));
    report(7, "N-limit", c7_n_limit());
    report(8, "M-limit", c8_m_limit());
    report(9, "horizon formula", c9_horizon());
    report(10, "concentration and heat transfer", c10_concentration());
    report(11, "weak-form residuals", c11_weak_form(&fine_a, &fine_b));
    report(12, "determinism and I/O", c12_determinism());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
