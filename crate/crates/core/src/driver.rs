//! Runs a [`RunConfig`] end to end: initial data, stepping, diagnostics and
//! checkpoints. Shared by the command-line tool and the test suites.

use std::path::PathBuf;

use crate::checkpoint::{write_checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::csvio::{write_table, DiagnosticsTable};
use crate::diagnostics::{default_bank, Collector, DiagnosticsRecord, WeakResidual};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::initial::make_initial_condition;
use crate::spectral::Spectral;
use crate::stepper::{run, RunObserver, StepReport, Stepper};

pub fn initial_state(config: &RunConfig, sp: &Spectral) -> Result<State> {
    make_initial_condition(&config.ic, sp, config.mode, config.theta_floor)
}

pub fn stepper_for(config: &RunConfig, sp: &Spectral) -> Result<Stepper> {
    Stepper::new(sp.clone(), config.params, config.scheme, config.mode)
}

pub fn checkpoint_meta(config: &RunConfig) -> CheckpointMeta {
    CheckpointMeta {
        mode: config.mode,
        cutoff: config.params.cutoff,
        regularization: config.params.regularization,
        theta_floor: config.theta_floor,
    }
}

/// Checks that a checkpoint can continue under `config`: same grid, director
/// mode, cutoff, regularization and temperature floor, and a start time
/// before `t_end`. Returns the step number the checkpoint corresponds to.
pub fn check_resume(config: &RunConfig, state: &State, meta: &CheckpointMeta) -> Result<usize> {
    let g = state.grid();
    if g != config.grid {
        return Err(Error::key(
            "grid.nx",
            format!(
                "checkpoint grid is {}x{}, config has {}x{}",
                g.nx(),
                g.ny(),
                config.grid.nx(),
                config.grid.ny()
            ),
        ));
    }
    let expected = checkpoint_meta(config);
    if meta.mode != expected.mode {
        return Err(Error::key(
            "params.mode",
            "checkpoint was written in the other director mode",
        ));
    }
    let same = |a: f64, b: f64| a == b || (a.is_infinite() && b.is_infinite());
    for (key, a, b) in [
        ("params.M", meta.cutoff, expected.cutoff),
        ("params.N", meta.regularization, expected.regularization),
        ("params.theta_floor", meta.theta_floor, expected.theta_floor),
    ] {
        if !same(a, b) {
            return Err(Error::key(key, format!("checkpoint has {a}, config has {b}")));
        }
    }
    if !(state.t < config.scheme.t_end) {
        return Err(Error::key(
            "scheme.t_end",
            format!(
                "checkpoint time {} is not before t_end = {}",
                state.t, config.scheme.t_end
            ),
        ));
    }
    Ok((state.t / config.scheme.dt).round() as usize)
}

/// Result of [`simulate`]; `failure` holds the error that stopped the run.
#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub weak: Option<Vec<WeakResidual>>,
    pub last: State,
    pub steps: usize,
    pub failure: Option<Error>,
    pub checkpoints: Vec<PathBuf>,
}

impl RunOutput {
    pub fn table(&self, config: &RunConfig) -> DiagnosticsTable {
        DiagnosticsTable {
            alphas: config.diagnostics.alphas.clone(),
            radii: config.diagnostics.radii.clone(),
            records: self.records.clone(),
        }
    }

    /// Diagnostics CSV as bytes.
    pub fn csv_bytes(&self, config: &RunConfig) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_table(&self.table(config), &mut out, &config.output.diagnostics_path())?;
        Ok(out)
    }
}

struct Observer<'a> {
    collector: Collector,
    checkpoints: Option<(&'a RunConfig, CheckpointMeta, usize)>,
    written: Vec<PathBuf>,
}

impl RunObserver for Observer<'_> {
    fn on_sample(&mut self, step: usize, state: &State, report: Option<&StepReport>) -> Result<()> {
        self.collector.on_sample(step, state, report)
    }

    fn on_checkpoint(&mut self, step: usize, state: &State) -> Result<()> {
        if let Some((cfg, meta, offset)) = &self.checkpoints {
            let path = cfg.output.checkpoint_path(offset + step);
            write_checkpoint(state, meta, &path)?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Runs `initial` to `config.scheme.t_end`.
///
/// With `checkpoints = Some(first)` and a positive checkpoint stride, files
/// are written and numbered from step `first`, so a resumed run continues the
/// numbering of the run it resumes.
pub fn simulate(config: &RunConfig, initial: State, checkpoints: Option<usize>) -> Result<RunOutput> {
    let sp = config.spectral();
    let mut stepper = stepper_for(config, &sp)?;
    let mut collector = Collector::new(&sp, config.params, config.diagnostics_settings())?;
    if config.diagnostics.weak_form {
        collector = collector.with_weak_form(default_bank(config.grid, config.scheme.t_end))?;
    }
    let mut obs = Observer {
        collector,
        checkpoints: checkpoints.map(|first| (config, checkpoint_meta(config), first)),
        written: Vec::new(),
    };
    let traj = run(&mut stepper, initial, config.schedule(), &mut obs);
    let weak = obs.collector.weak_residuals();
    Ok(RunOutput {
        records: obs.collector.finish(),
        weak,
        last: traj.last,
        steps: traj.steps,
        failure: traj.failure,
        checkpoints: obs.written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn resume_checks_metadata() {
        let cfg = parse_config("[grid]\nnx = 16\n[params]\nN = 100\n[scheme]\ndt = 0.1\nt_end = 1\n").unwrap();
        let sp = cfg.spectral();
        let mut s = initial_state(&cfg, &sp).unwrap();
        s.t = 0.3;
        let meta = checkpoint_meta(&cfg);
        assert_eq!(check_resume(&cfg, &s, &meta).unwrap(), 3);
        let other = CheckpointMeta {
            regularization: 10.0,
            ..meta
        };
        assert!(matches!(check_resume(&cfg, &s, &other), Err(Error::ConfigKey { key, .. }) if key == "params.N"));
        s.t = 1.0;
        assert!(check_resume(&cfg, &s, &meta).is_err());
    }

    #[test]
    fn trivial_run_produces_one_row_per_sample() {
        let cfg =
            parse_config("[grid]\nnx = 16\n[scheme]\ndt = 0.1\nt_end = 1\n[diagnostics]\nsample_stride = 2\n").unwrap();
        let sp = cfg.spectral();
        let out = simulate(&cfg, initial_state(&cfg, &sp).unwrap(), None).unwrap();
        assert!(out.failure.is_none());
        assert_eq!(out.steps, 10);
        assert_eq!(out.records.len(), 6);
        assert_eq!(out.records.last().unwrap().t, 1.0);
        assert!(out.records.iter().all(|r| r.flags == 0));
    }
}
