use std::path::{Path, PathBuf};

use nlc2_core::checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta, MAGIC};
use nlc2_core::config::{calibrated_eps0, load_config, load_study_config, RunConfig, DEFAULT_CORE_RADIUS};
use nlc2_core::csvio::{read_diagnostics, write_diagnostics, DiagnosticsTable};
use nlc2_core::diagnostics::{
    conservation_drift, energies, horizon_estimate, local_energy_sup, maximum_principle_check, FLAG_CONCENTRATION,
    FLAG_ENTROPY, FLAG_MAX_PRINCIPLE,
};
use nlc2_core::driver::{check_resume, checkpoint_meta, initial_state, simulate, RunOutput};
use nlc2_core::dynamics::{ApproximationParams, State, ViscosityModel};
use nlc2_core::error::{Error, Result};
use nlc2_core::initial::{defect_centres, winding_number, IcSpec};
use nlc2_core::limits::{continuation_run, run_study, ContinuationSettings};
use nlc2_core::Spectral;

/// Relative drift above which `run` prints a warning.
const DRIFT_WARNING: f64 = 1e-3;

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn describe_run(cfg: &RunConfig, out: &RunOutput) {
    let Some((first, last)) = out.records.first().zip(out.records.last()) else {
        return;
    };
    println!(
        "{} steps to t = {:.6}: kinetic {:.6e}, potential {:.6e}, heat {:.6e}, total {:.10e}",
        out.steps, last.t, last.kinetic, last.potential, last.heat, last.total
    );
    let series: Vec<_> = out.records.iter().map(|r| r.energy()).collect();
    if let Ok(d) = conservation_drift(&series, DRIFT_WARNING) {
        println!(
            "total energy drift {:.3e} (relative), mechanical balance residual {:.3e}{}",
            d.max_relative_drift,
            d.balance_residual,
            if d.flagged { "  [warning: large drift]" } else { "" }
        );
    }
    let min_theta = out.records.iter().map(|r| r.min_theta).fold(f64::INFINITY, f64::min);
    let max_dev = out.records.iter().map(|r| r.max_d_norm_dev).fold(0.0, f64::max);
    println!(
        "min theta {:.6e} (floor {}), max ||d| - 1| {:.3e}, initial total {:.10e}",
        min_theta, cfg.theta_floor, max_dev, first.total
    );
    let flagged = |bit: u32| out.records.iter().filter(|r| r.flags & bit != 0).count();
    println!(
        "flagged rows: max principle {}, concentration {}, entropy {}",
        flagged(FLAG_MAX_PRINCIPLE),
        flagged(FLAG_CONCENTRATION),
        flagged(FLAG_ENTROPY)
    );
    if let Some(weak) = &out.weak {
        let worst = |f: &dyn Fn(&nlc2_core::diagnostics::WeakResidual) -> f64| weak.iter().map(f).fold(0.0, f64::max);
        println!(
            "weak form over {} test functions: momentum {:.3e}, temperature {:.3e} (relative, worst)",
            weak.len(),
            worst(&|w| w.momentum_relative()),
            worst(&|w| w.temperature_relative())
        );
    }
}

fn finish_run(cfg: &RunConfig, out: RunOutput, csv: Option<&Path>) -> Result<()> {
    let path = csv
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.diagnostics_path());
    ensure_parent(&path)?;
    write_diagnostics(&out.records, &cfg.diagnostics.alphas, &cfg.diagnostics.radii, &path)?;
    describe_run(cfg, &out);
    println!("diagnostics: {}", path.display());
    if let Some(last) = out.checkpoints.last() {
        println!(
            "checkpoints: {} written, last {}",
            out.checkpoints.len(),
            last.display()
        );
    }
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn run(config: &Path, csv: Option<&Path>, continuation: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let sp = cfg.spectral();
    let initial = initial_state(&cfg, &sp)?;
    if continuation {
        let report = continuation_run(&cfg, initial, ContinuationSettings::from_config(&cfg))?;
        print!("{}", report.summary());
        if let Some(last) = report.energies.last() {
            let change = (last.total - report.initial_total) / report.initial_total;
            println!("total energy change over the run {change:.3e} (relative)");
        }
        if !report.checks_passed() {
            println!("warning: at least one event failed its energy bookkeeping check");
        }
        return Ok(());
    }
    if cfg.diagnostics.checkpoint_stride > 0 {
        std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Io {
            path: cfg.output.dir.clone(),
            source: e,
        })?;
    }
    let out = simulate(&cfg, initial, Some(0))?;
    finish_run(&cfg, out, csv)
}

pub fn resume(checkpoint: &Path, config: &Path, csv: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let (state, meta) = read_checkpoint(checkpoint)?;
    let first = check_resume(&cfg, &state, &meta)?;
    println!("resuming from t = {} (step {first})", state.t);
    let out = simulate(&cfg, state, Some(first))?;
    finish_run(&cfg, out, csv)
}

fn is_checkpoint(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut f = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(f.read(&mut head).map(|n| n == 4 && head == MAGIC).unwrap_or(false))
}

pub fn diagnose(file: &Path, config: Option<&Path>) -> Result<()> {
    if is_checkpoint(file)? {
        let (state, meta) = read_checkpoint(file)?;
        let cfg = config.map(load_config).transpose()?;
        diagnose_state(&state, &meta, cfg.as_ref())
    } else {
        diagnose_table(&read_diagnostics(file)?)
    }
}

fn describe_state(
    sp: &Spectral,
    state: &State,
    params: &ApproximationParams,
    theta_floor: f64,
    eps0: f64,
    r: f64,
) -> Result<()> {
    let e = energies(sp, state, params);
    println!(
        "kinetic {:.6e}, potential {:.6e}, heat {:.6e}, total {:.10e}, dissipation rate {:.6e}",
        e.kinetic, e.potential, e.heat, e.total, e.dissipation_rate
    );
    let mp = maximum_principle_check(state, theta_floor);
    println!(
        "min theta - floor {:.3e} ({}), max |d| - 1 {:.3e} ({}), max |div u| {:.3e}",
        mp.theta_margin,
        if mp.theta_ok { "ok" } else { "violated" },
        mp.director_margin,
        if mp.director_ok { "ok" } else { "violated" },
        sp.divergence(&state.u).max_abs()
    );
    let c = local_energy_sup(sp, state, r, eps0)?;
    println!(
        "local energy sup at r = {:.4}: {:.6e} at ({:.3}, {:.3}); eps0^2 = {:.4e}{}",
        r,
        c.value,
        c.argmax.0,
        c.argmax.1,
        eps0 * eps0,
        if c.flagged { "  [flagged]" } else { "" }
    );
    match horizon_estimate(sp, state, eps0) {
        Ok(h) => println!(
            "horizon: e0 {:.6e}, R0 {:.4}, tau0 {:.4e}, T0 {:.4e}",
            h.e0, h.r0, h.tau0, h.t0
        ),
        Err(e) => println!("horizon: {e}"),
    }
    Ok(())
}

fn diagnose_state(state: &State, meta: &CheckpointMeta, cfg: Option<&RunConfig>) -> Result<()> {
    let g = state.grid();
    println!(
        "checkpoint: {}x{} grid, t = {}, mode {}, M = {}, N = {}, theta floor {}",
        g.nx(),
        g.ny(),
        state.t,
        meta.mode.as_str(),
        meta.cutoff,
        meta.regularization,
        meta.theta_floor
    );
    let sp = Spectral::for_grid(g);
    let (params, eps0, r) = match cfg {
        Some(c) => {
            check_resume_grid(c, state)?;
            (c.params, c.diagnostics.eps0, c.diagnostics.r_monitor)
        }
        None => {
            println!("(no --config: constant viscosity 1 and the default eps0 are assumed)");
            let params = ApproximationParams::new(
                sp.truncation(),
                meta.cutoff,
                meta.regularization,
                ViscosityModel::constant(1.0)?,
            )?;
            (params, calibrated_eps0(DEFAULT_CORE_RADIUS), 8.0 * g.h())
        }
    };
    describe_state(&sp, state, &params, meta.theta_floor, eps0, r)
}

fn check_resume_grid(cfg: &RunConfig, state: &State) -> Result<()> {
    if cfg.grid != state.grid() {
        return Err(Error::ConfigKey {
            key: "grid.nx".into(),
            message: "config grid differs from the checkpoint grid".into(),
        });
    }
    Ok(())
}

fn diagnose_table(table: &DiagnosticsTable) -> Result<()> {
    let rows = &table.records;
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        println!("diagnostics table with no rows");
        return Ok(());
    };
    println!("{} rows, t from {} to {}", rows.len(), first.t, last.t);
    let series: Vec<_> = rows.iter().map(|r| r.energy()).collect();
    if let Ok(d) = conservation_drift(&series, DRIFT_WARNING) {
        println!(
            "total energy drift {:.3e} (relative), mechanical balance residual {:.3e}",
            d.max_relative_drift, d.balance_residual
        );
    }
    let min_theta = rows.iter().map(|r| r.min_theta).fold(f64::INFINITY, f64::min);
    let max_dev = rows.iter().map(|r| r.max_d_norm_dev).fold(0.0, f64::max);
    println!("min theta {min_theta:.6e}, max ||d| - 1| {max_dev:.3e}");
    for (k, a) in table.alphas.iter().enumerate() {
        let worst = rows
            .iter()
            .map(|r| r.entropy_min_res[k])
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        println!("entropy alpha = {a}: min residual {worst:.3e}");
    }
    for (k, r) in table.radii.iter().enumerate() {
        let peak = rows.iter().map(|row| row.local_energy_sup[k]).fold(0.0, f64::max);
        println!("local energy sup at r = {r}: peak {peak:.6e}");
    }
    let flagged = |bit: u32| rows.iter().filter(|r| r.flags & bit != 0).count();
    println!(
        "flagged rows: max principle {}, concentration {}, entropy {}",
        flagged(FLAG_MAX_PRINCIPLE),
        flagged(FLAG_CONCENTRATION),
        flagged(FLAG_ENTROPY)
    );
    Ok(())
}

pub fn study(config: &Path, csv: Option<&Path>) -> Result<()> {
    let study = load_study_config(config)?;
    let report = run_study(&study)?;
    print!("{}", report.summary());
    let path: PathBuf = csv.map(Path::to_path_buf).unwrap_or_else(|| {
        study
            .base
            .output
            .dir
            .join(format!("study_{}.csv", study.parameter.as_str()))
    });
    ensure_parent(&path)?;
    std::fs::write(&path, report.to_csv()).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!("study table: {}", path.display());
    if let Some(f) = report.levels.iter().find_map(|l| l.failure.as_ref()) {
        return Err(Error::Usage(format!("study incomplete: {f}")));
    }
    Ok(())
}

pub fn ic_preview(config: &Path, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let sp = cfg.spectral();
    let state = initial_state(&cfg, &sp)?;
    let g = cfg.grid;
    println!(
        "initial data `{}` on {}x{}, mode {}, n = {}",
        cfg.ic.kind(),
        g.nx(),
        g.ny(),
        cfg.mode.as_str(),
        cfg.params.n
    );
    describe_state(
        &sp,
        &state,
        &cfg.params,
        cfg.theta_floor,
        cfg.diagnostics.eps0,
        cfg.diagnostics.r_monitor,
    )?;
    if let IcSpec::DefectPair {
        separation,
        core_radius,
        ..
    } = cfg.ic
    {
        let radius = (0.5 * separation).min(2.0 * core_radius);
        for (c, label) in defect_centres(separation).iter().zip(["left", "right"]) {
            println!(
                "{label} core at ({:.3}, {:.3}): winding {:+.3}",
                c.0,
                c.1,
                winding_number(&state.d, *c, radius, 720)
            );
        }
    }
    if let Some(path) = checkpoint {
        ensure_parent(path)?;
        write_checkpoint(&state, &checkpoint_meta(&cfg), path)?;
        println!("checkpoint: {}", path.display());
    }
    Ok(())
}
