//! Convergence experiments for the approximation hierarchy, and the
//! continuation procedure across concentration times.
//!
//! A study runs one level per ladder value (in parallel) and compares every
//! level with every other on common sample times: `L^2(Q_T)` for `u` and
//! `grad d`, `L^{5/4}(Q_T)` for `theta`. Coarser grids are spectrally
//! resampled onto the finest grid first. No exact solutions exist, so
//! convergence is measured against the finest level.

use std::fmt::Write as _;

use crate::config::{RunConfig, StudyConfig, StudyParameter};
use crate::diagnostics::{energies_with, energy_density_with, sup_of_density, ConcentrationReport, EnergyRecord};
use crate::driver::{initial_state, stepper_for};
use crate::dynamics::{renormalize_director, DirectorMode, Kinematics, State};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::par;
use crate::spectral::Spectral;
use crate::stepper::{fixed_schedule, run, RunObserver, RunSchedule, StepReport};

/// Exponent of the temperature difference norm.
pub const THETA_EXPONENT: f64 = 1.25;

/// Exponent of the space-time norm of the power-law stress.
pub const POWER_LAW_EXPONENT: f64 = 20.0 / 11.0;

/// Difference norms between two levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceNorms {
    pub u: f64,
    pub grad_d: f64,
    pub theta: f64,
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln y`.
    pub residual: f64,
    pub points: usize,
}

/// Fits `ln y = slope ln x + intercept` over positive finite pairs; `None`
/// with fewer than two usable points.
pub fn fit_rate(points: &[(f64, f64)]) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Some(RateFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub value: f64,
    pub grid: TorusGrid,
    pub steps: usize,
    /// Sample times reached.
    pub samples: usize,
    pub failure: Option<String>,
    /// `||(1/N)|grad u|^{2/9} grad u||_{L^{20/11}(Q_T)}`; 0 when `N = inf`.
    pub power_law_norm: f64,
    /// Largest `|grad d|^2` seen over the steps (shows whether a cutoff
    /// was ever active).
    pub max_grad_d_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub parameter: StudyParameter,
    /// One entry per ladder value, in ladder order.
    pub levels: Vec<LevelReport>,
    /// Index of the finest level.
    pub reference: usize,
    pub sample_times: Vec<f64>,
    /// `pairwise[i][j]`, `None` on the diagonal and for failed levels.
    pub pairwise: Vec<Vec<Option<DifferenceNorms>>>,
    /// Fits of the differences to the reference against the ladder value,
    /// for `u`, `grad d` and `theta`.
    pub rates: [Option<RateFit>; 3],
    /// Fit of the power-law norm against `1/N` (N-studies).
    pub power_law_fit: Option<RateFit>,
}

impl StudyReport {
    pub fn to_reference(&self, level: usize) -> Option<DifferenceNorms> {
        self.pairwise[level][self.reference]
    }

    pub fn is_complete(&self) -> bool {
        self.levels.iter().all(|l| l.failure.is_none())
    }

    /// Largest `u` difference over all pairs of levels.
    pub fn max_pairwise_u(&self) -> f64 {
        self.pairwise
            .iter()
            .flatten()
            .flatten()
            .map(|d| d.u)
            .fold(0.0, f64::max)
    }

    /// Level indices ordered from coarsest to finest.
    pub fn coarse_to_fine(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.levels.len()).collect();
        if !self.parameter.increasing_is_finer() {
            idx.reverse();
        }
        idx
    }

    /// Whether the `u` and `grad d` differences to the reference shrink from
    /// coarse to fine, allowing growth by the factor `1 + noise`.
    pub fn differences_monotone(&self, noise: f64) -> bool {
        let order: Vec<usize> = self
            .coarse_to_fine()
            .into_iter()
            .filter(|i| *i != self.reference)
            .collect();
        let diffs: Option<Vec<DifferenceNorms>> = order.iter().map(|i| self.to_reference(*i)).collect();
        let Some(diffs) = diffs else { return false };
        diffs
            .windows(2)
            .all(|w| w[1].u <= (1.0 + noise) * w[0].u && w[1].grad_d <= (1.0 + noise) * w[0].grad_d)
    }

    /// Per-level table as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,nx,ny,steps,samples,diff_u,diff_grad_d,diff_theta,power_law_norm,failure\n");
        for (i, l) in self.levels.iter().enumerate() {
            let d = self.to_reference(i);
            let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:.16e},{}",
                l.value,
                l.grid.nx(),
                l.grid.ny(),
                l.steps,
                l.samples,
                f(d.map(|d| d.u)),
                f(d.map(|d| d.grad_d)),
                f(d.map(|d| d.theta)),
                l.power_law_norm,
                l.failure.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "study over {} with {} levels, reference {} = {}\n",
            self.parameter.as_str(),
            self.levels.len(),
            self.parameter.as_str(),
            self.levels[self.reference].value
        );
        for (i, l) in self.levels.iter().enumerate() {
            match (&l.failure, self.to_reference(i)) {
                (Some(f), _) => {
                    let _ = writeln!(
                        s,
                        "  {} = {}: FAILED after {} steps: {f}",
                        self.parameter.as_str(),
                        l.value,
                        l.steps
                    );
                }
                (None, Some(d)) => {
                    let _ = writeln!(
                        s,
                        "  {} = {}: |du| = {:.3e}, |d grad d| = {:.3e}, |d theta| = {:.3e}, power-law {:.3e}",
                        self.parameter.as_str(),
                        l.value,
                        d.u,
                        d.grad_d,
                        d.theta,
                        l.power_law_norm
                    );
                }
                (None, None) => {
                    let _ = writeln!(
                        s,
                        "  {} = {}: reference, power-law {:.3e}",
                        self.parameter.as_str(),
                        l.value,
                        l.power_law_norm
                    );
                }
            }
        }
        let names = ["u", "grad d", "theta"];
        for (name, fit) in names.iter().zip(&self.rates) {
            if let Some(f) = fit {
                let _ = writeln!(s, "  rate ({name}): {:.3} (fit residual {:.2e})", f.slope, f.residual);
            }
        }
        if let Some(f) = self.power_law_fit {
            let _ = writeln!(
                s,
                "  power-law norm vs 1/N: slope {:.3} (fit residual {:.2e})",
                f.slope, f.residual
            );
        }
        s
    }
}

/// Grid whose 2/3-rule band holds truncation radius `n`.
fn grid_for_truncation(n: usize, base: TorusGrid) -> Result<TorusGrid> {
    let m = 3 * n + 1;
    let m = m + m % 2;
    TorusGrid::new(
        m.max(base.nx().min(base.ny())).max(8),
        m.max(base.nx().min(base.ny())).max(8),
    )
}

/// Run configuration of one ladder level.
pub fn level_config(study: &StudyConfig, value: f64) -> Result<RunConfig> {
    let mut cfg = study.base.clone();
    match study.parameter {
        StudyParameter::Truncation => {
            let n = value as usize;
            cfg.grid = if n > cfg.grid.dealias_limit() {
                grid_for_truncation(n, cfg.grid)?
            } else {
                cfg.grid
            };
            cfg.params.n = n;
            cfg.diagnostics.r_monitor = cfg.diagnostics.r_monitor.max(3.0 * cfg.grid.h());
        }
        StudyParameter::Cutoff => cfg.params.cutoff = value,
        StudyParameter::Regularization => cfg.params.regularization = value,
        StudyParameter::TimeStep => cfg.scheme.dt = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Sample times shared by all levels: multiples of `sample_stride` coarsest
/// steps, plus `t_end`.
fn sample_times(study: &StudyConfig) -> Vec<f64> {
    let dt = match study.parameter {
        StudyParameter::TimeStep => study.ladder.iter().cloned().fold(0.0, f64::max),
        _ => study.base.scheme.dt,
    };
    let interval = dt * study.base.diagnostics.sample_stride.max(1) as f64;
    let t_end = study.base.scheme.t_end;
    let mut times: Vec<f64> = (0..)
        .map(|k| k as f64 * interval)
        .take_while(|t| *t < t_end * (1.0 - 1e-9))
        .collect();
    times.push(t_end);
    times
}

struct Sampler {
    times: Vec<f64>,
    tol: f64,
    states: Vec<Option<State>>,
}

impl RunObserver for Sampler {
    fn on_sample(&mut self, _step: usize, state: &State, _report: Option<&StepReport>) -> Result<()> {
        if let Some(k) = self.times.iter().position(|t| (state.t - t).abs() <= self.tol) {
            self.states[k] = Some(state.clone());
        }
        Ok(())
    }
}

struct LevelRun {
    report: LevelReport,
    sp: Spectral,
    states: Vec<Option<State>>,
}

fn power_law_density(kin: &Kinematics, n_reg: f64) -> ScalarField {
    if !n_reg.is_finite() {
        return ScalarField::zeros(kin.grad_u.c[0][0].grid());
    }
    // |(1/N)|G|^{2/9} G|^{20/11} = N^{-20/11} |G|^{20/9}
    let g2 = kin.grad_u.contract(&kin.grad_u);
    let scale = n_reg.powf(-POWER_LAW_EXPONENT);
    g2.map(|v| scale * v.powf(10.0 / 9.0))
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn run_level(cfg: &RunConfig, value: f64, times: &[f64]) -> Result<LevelRun> {
    let sp = cfg.spectral();
    let mut stepper = stepper_for(cfg, &sp)?;
    let initial = initial_state(cfg, &sp)?;
    let mut sampler = Sampler {
        times: times.to_vec(),
        tol: 1e-9 * cfg.scheme.t_end.max(1.0),
        states: vec![None; times.len()],
    };
    let traj = run(&mut stepper, initial, RunSchedule::default(), &mut sampler);
    let reached = sampler.states.iter().filter(|s| s.is_some()).count();
    let max_grad_d_sq = traj.reports.iter().map(|r| r.max_grad_d_sq).fold(
        Kinematics::new(&sp, sampler.states[0].as_ref().unwrap_or(&traj.last))
            .grad_d_sq
            .max(),
        f64::max,
    );
    let mut failure = traj.failure.map(|e| e.to_string());
    if failure.is_none() && reached != times.len() {
        failure = Some(format!(
            "time step {} does not hit all {} sample times",
            cfg.scheme.dt,
            times.len()
        ));
    }
    let density: Vec<f64> = sampler
        .states
        .iter()
        .map_while(|s| s.as_ref())
        .map(|s| power_law_density(&Kinematics::new(&sp, s), cfg.params.regularization).integral())
        .collect();
    let power_law_norm = trapezoid(&times[..density.len()], &density).powf(1.0 / POWER_LAW_EXPONENT);
    Ok(LevelRun {
        report: LevelReport {
            value,
            grid: cfg.grid,
            steps: traj.steps,
            samples: reached,
            failure,
            power_law_norm,
            max_grad_d_sq,
        },
        sp,
        states: sampler.states,
    })
}

/// Compared fields of one sample on the reference grid.
struct Projected {
    u: [ScalarField; 2],
    grad_d: Vec<ScalarField>,
    theta: ScalarField,
}

fn project(sp: &Spectral, state: &State, target: &Spectral) -> Projected {
    let kin = Kinematics::new(sp, state);
    let r = |f: &ScalarField| sp.resample(f, target);
    Projected {
        u: [r(&state.u.x), r(&state.u.y)],
        grad_d: kin.grad_d.iter().flatten().map(r).collect(),
        theta: r(&state.theta),
    }
}

fn difference(times: &[f64], a: &[Projected], b: &[Projected]) -> DifferenceNorms {
    let sq = |x: &ScalarField, y: &ScalarField| {
        let d = x.sub(y);
        d.mul(&d).integral()
    };
    let du: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(p, q)| sq(&p.u[0], &q.u[0]) + sq(&p.u[1], &q.u[1]))
        .collect();
    let dg: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(p, q)| p.grad_d.iter().zip(&q.grad_d).map(|(x, y)| sq(x, y)).sum())
        .collect();
    let dt: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(p, q)| p.theta.sub(&q.theta).map(|v| v.abs().powf(THETA_EXPONENT)).integral())
        .collect();
    DifferenceNorms {
        u: trapezoid(times, &du).sqrt(),
        grad_d: trapezoid(times, &dg).sqrt(),
        theta: trapezoid(times, &dt).powf(1.0 / THETA_EXPONENT),
    }
}

/// Runs every level of `study` and compares them.
///
/// A level that fails is annotated in its [`LevelReport`] and left out of
/// the comparisons; the other levels are still reported.
pub fn run_study(study: &StudyConfig) -> Result<StudyReport> {
    study.validate()?;
    let times = sample_times(study);
    let configs: Vec<RunConfig> = study
        .ladder
        .iter()
        .map(|v| level_config(study, *v))
        .collect::<Result<_>>()?;
    if study.parameter == StudyParameter::TimeStep {
        let interval = times.get(1).map_or(study.base.scheme.t_end, |t| t - times[0]);
        for c in &configs {
            let ratio = interval / c.scheme.dt;
            if (ratio - ratio.round()).abs() > 1e-6 {
                return Err(Error::key(
                    "study.ladder",
                    format!("dt = {} does not divide the sampling interval {interval}", c.scheme.dt),
                ));
            }
        }
    }
    let jobs: Vec<(RunConfig, f64)> = configs.into_iter().zip(study.ladder.iter().cloned()).collect();
    let runs: Vec<LevelRun> = par::map_jobs(&jobs, |(cfg, v)| run_level(cfg, *v, &times))
        .into_iter()
        .collect::<Result<_>>()?;

    let reference = if study.parameter.increasing_is_finer() {
        runs.len() - 1
    } else {
        0
    };
    let target = runs
        .iter()
        .max_by_key(|r| r.sp.grid().len())
        .map(|r| r.sp.clone())
        .expect("at least three levels");
    let projected: Vec<Option<Vec<Projected>>> = runs
        .iter()
        .map(|r| {
            if r.report.failure.is_some() {
                return None;
            }
            Some(
                r.states
                    .iter()
                    .map(|s| project(&r.sp, s.as_ref().expect("complete level"), &target))
                    .collect(),
            )
        })
        .collect();
    let n = runs.len();
    let mut pairwise = vec![vec![None; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if let (Some(a), Some(b)) = (&projected[i], &projected[j]) {
                let d = difference(&times, a, b);
                pairwise[i][j] = Some(d);
                pairwise[j][i] = Some(d);
            }
        }
    }
    let levels: Vec<LevelReport> = runs.into_iter().map(|r| r.report).collect();
    let fit = |pick: fn(&DifferenceNorms) -> f64| {
        let pts: Vec<(f64, f64)> = (0..n)
            .filter(|i| *i != reference)
            .filter_map(|i| pairwise[i][reference].map(|d| (levels[i].value, pick(&d))))
            .collect();
        fit_rate(&pts)
    };
    let rates = [fit(|d| d.u), fit(|d| d.grad_d), fit(|d| d.theta)];
    let power_law_fit = if study.parameter == StudyParameter::Regularization {
        let pts: Vec<(f64, f64)> = levels
            .iter()
            .filter(|l| l.failure.is_none())
            .map(|l| (1.0 / l.value, l.power_law_norm))
            .collect();
        fit_rate(&pts)
    } else {
        None
    };
    Ok(StudyReport {
        parameter: study.parameter,
        levels,
        reference,
        sample_times: times,
        pairwise,
        rates,
        power_law_fit,
    })
}

/// Knobs of [`continuation_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    pub eps0: f64,
    pub r_monitor: f64,
    pub max_segments: usize,
    pub bridge_steps: usize,
    pub drop_fraction: f64,
    pub energy_tolerance: f64,
}

impl ContinuationSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let d = &cfg.diagnostics;
        Self {
            eps0: d.eps0,
            r_monitor: d.r_monitor,
            max_segments: d.max_segments,
            bridge_steps: d.bridge_steps,
            drop_fraction: d.drop_fraction,
            energy_tolerance: d.energy_tolerance,
        }
    }
}

/// Energy bookkeeping across one flagged window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationEvent {
    /// Monitor report at the first flagged state, with `energy_drop` set.
    pub flag: ConcentrationReport,
    /// Energies at the flagged state.
    pub before: EnergyRecord,
    /// Energies at the end of the bridging window.
    pub after: EnergyRecord,
    pub mechanical_drop: f64,
    pub heat_rise: f64,
    /// `after.total - before.total`.
    pub total_change: f64,
    pub drop_ok: bool,
    pub balance_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub settings: ContinuationSettings,
    pub segments: Vec<Segment>,
    pub events: Vec<ConcentrationEvent>,
    /// Energies after every step, starting with the initial state.
    pub energies: Vec<EnergyRecord>,
    pub initial_total: f64,
    pub final_state: State,
    /// Monitoring stopped because the segment limit was reached.
    pub segment_limit_reached: bool,
}

impl ContinuationReport {
    pub fn flag_count(&self) -> usize {
        self.events.len()
    }

    /// Every window dropped enough mechanical energy and kept the total.
    pub fn checks_passed(&self) -> bool {
        self.events.iter().all(|e| e.drop_ok && e.balance_ok)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "continuation: {} segment(s), {} flag(s), eps0 = {}, r_monitor = {:.4}\n",
            self.segments.len(),
            self.events.len(),
            self.settings.eps0,
            self.settings.r_monitor
        );
        for e in &self.events {
            let _ = writeln!(
                s,
                "  t = {:.5}: sup = {:.4e} at ({:.3}, {:.3}); mechanical drop {:.4e}, heat rise {:.4e}, total change {:.3e}{}",
                e.flag.t,
                e.flag.value,
                e.flag.argmax.0,
                e.flag.argmax.1,
                e.mechanical_drop,
                e.heat_rise,
                e.total_change,
                if e.drop_ok && e.balance_ok { "" } else { " [check failed]" }
            );
        }
        if self.segment_limit_reached {
            s.push_str("  segment limit reached; monitoring stopped\n");
        }
        s
    }
}

/// Runs `initial` to `t_end`, restarting after each concentration flag.
///
/// A flag is a state, the initial one included, at which the monitor at
/// `r_monitor` reaches `eps0^2`; after an event the monitor has to fall below
/// the threshold before it can flag again. The run then takes `bridge_steps`
/// more steps, books the energy change across that window, renormalizes the
/// director and restarts the multistep scheme.
/// After `max_segments` segments monitoring stops and the run finishes.
///
/// Errors with [`Error::InconclusiveSegment`] when the flagged energy already
/// sits inside the smallest resolvable ball, or the window cannot be stepped.
pub fn continuation_run(
    config: &RunConfig,
    initial: State,
    settings: ContinuationSettings,
) -> Result<ContinuationReport> {
    if config.mode != DirectorMode::Constrained {
        return Err(Error::key("params.mode", "continuation runs need mode = constrained"));
    }
    if !(settings.eps0 > 0.0) || settings.bridge_steps == 0 || settings.max_segments == 0 {
        return Err(Error::Usage(
            "eps0, bridge_steps and max_segments must be positive".into(),
        ));
    }
    let sp = config.spectral();
    let params = config.params;
    let mut stepper = stepper_for(config, &sp)?;
    let threshold = settings.eps0 * settings.eps0;
    let measure = |state: &State| -> Result<(EnergyRecord, ConcentrationReport)> {
        let kin = Kinematics::new(&sp, state);
        let e = energies_with(&kin, state, &params);
        let density = energy_density_with(&kin, state);
        let rep = sup_of_density(&sp, &density, state.t, settings.r_monitor, settings.eps0)?;
        Ok((e, rep))
    };
    let (steps, time_of) = fixed_schedule(initial.t, config.scheme.t_end, config.scheme.dt);
    let (e0, rep0) = measure(&initial)?;
    let mut report = ContinuationReport {
        settings,
        segments: Vec::new(),
        events: Vec::new(),
        energies: vec![e0],
        initial_total: e0.total,
        final_state: initial.clone(),
        segment_limit_reached: false,
    };
    let mut state = initial;
    let mut current = (e0, rep0);
    // disarmed after an event until the monitor drops below the threshold,
    // so one excursion above it is one event
    let mut armed = true;
    let mut monitoring = true;
    let mut seg = Segment {
        start: state.t,
        end: state.t,
        steps: 0,
    };
    let mut k = 0;
    loop {
        let (e, rep) = current;
        if !rep.flagged {
            armed = true;
        } else if armed && monitoring {
            let small = sp.min_ball_radius();
            let core = sup_of_density(
                &sp,
                &energy_density_with(&Kinematics::new(&sp, &state), &state),
                state.t,
                small,
                settings.eps0,
            )?;
            if core.value >= threshold {
                return Err(Error::InconclusiveSegment {
                    t: state.t,
                    reason: format!(
                        "energy {:.4e} >= eps0^2 inside a ball of radius {small:.4} (3 cells); refine the grid",
                        core.value
                    ),
                });
            }
            let before = e;
            let mut after = e;
            for _ in 0..settings.bridge_steps {
                if k >= steps {
                    break;
                }
                k += 1;
                let t_new = time_of(k);
                state = match stepper.step_to(&state, t_new - state.t, t_new) {
                    Ok((s, _)) => s,
                    Err(err) => {
                        return Err(Error::InconclusiveSegment {
                            t: state.t,
                            reason: format!("bridging window failed: {err}"),
                        })
                    }
                };
                seg.steps += 1;
                current = measure(&state)?;
                report.energies.push(current.0);
                after = current.0;
            }
            let mechanical_drop = before.mechanical() - after.mechanical();
            let total_change = after.total - before.total;
            let mut flag = rep;
            flag.energy_drop = Some(mechanical_drop);
            report.events.push(ConcentrationEvent {
                flag,
                before,
                after,
                mechanical_drop,
                heat_rise: after.heat - before.heat,
                total_change,
                drop_ok: mechanical_drop >= settings.drop_fraction * threshold,
                balance_ok: total_change.abs() <= settings.energy_tolerance * report.initial_total.abs(),
            });
            seg.end = state.t;
            report.segments.push(seg);
            seg = Segment {
                start: state.t,
                end: state.t,
                steps: 0,
            };
            state.d = renormalize_director(&state.d)?;
            stepper.reset();
            armed = false;
            if report.segments.len() + 1 >= settings.max_segments {
                monitoring = false;
                report.segment_limit_reached = true;
            }
            continue;
        }
        if k >= steps {
            break;
        }
        k += 1;
        let t_new = time_of(k);
        state = stepper.step_to(&state, t_new - state.t, t_new)?.0;
        seg.steps += 1;
        current = measure(&state)?;
        report.energies.push(current.0);
    }
    seg.end = state.t;
    report.segments.push(seg);
    report.final_state = state;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, parse_study_config};

    #[test]
    fn rate_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0]
            .iter()
            .map(|x| (*x, 3.0 * x.powf(-2.0)))
            .collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && f.residual < 1e-12);
        assert!(fit_rate(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }

    const BASE: &str = "[grid]\nnx = 16\n[params]\nmu_lower = 0.5\n[scheme]\ndt = 0.02\nt_end = 0.1\n\
                        [ic]\nkind = taylor_green\namplitude = 0.5\n";

    #[test]
    fn identical_levels_have_zero_differences() {
        // the cutoff never activates for this data, so all levels coincide
        let s = parse_study_config(&format!("{BASE}[study]\nparameter = M\nladder = 1e6, 2e6, 4e6\n")).unwrap();
        let r = run_study(&s).unwrap();
        assert!(r.is_complete());
        assert_eq!(r.max_pairwise_u(), 0.0);
        assert_eq!(r.sample_times.len(), 6);
        assert!(r.levels.iter().all(|l| l.power_law_norm == 0.0));
    }

    #[test]
    fn power_law_norm_scales_with_inverse_n() {
        let s = parse_study_config(&format!("{BASE}[study]\nparameter = N\nladder = 100, 1000, 10000\n")).unwrap();
        let r = run_study(&s).unwrap();
        let f = r.power_law_fit.unwrap();
        assert!((f.slope - 1.0).abs() < 0.01, "{f:?}");
        assert!(r.differences_monotone(0.1));
        assert!(r.summary().contains("power-law"));
        assert_eq!(r.to_csv().lines().count(), 4);
    }

    #[test]
    fn truncation_levels_grow_the_grid() {
        let s = parse_study_config(&format!("{BASE}[study]\nparameter = n\nladder = 3, 5, 7\n")).unwrap();
        let c = level_config(&s, 7.0).unwrap();
        assert_eq!((c.grid.nx(), c.params.n), (22, 7));
        assert_eq!(level_config(&s, 3.0).unwrap().grid.nx(), 16);
    }

    #[test]
    fn dt_ladder_must_divide_sampling() {
        let s = parse_study_config(&format!("{BASE}[study]\nparameter = dt\nladder = 0.007, 0.01, 0.02\n")).unwrap();
        assert!(matches!(run_study(&s), Err(Error::ConfigKey { .. })));
        let s = parse_study_config(&format!("{BASE}[study]\nparameter = dt\nladder = 0.005, 0.01, 0.02\n")).unwrap();
        let r = run_study(&s).unwrap();
        assert_eq!(r.reference, 0);
        assert!(r.differences_monotone(0.1));
    }

    #[test]
    fn smooth_small_data_has_no_flags() {
        let cfg = parse_config(
            "[grid]\nnx = 32\n[params]\nmode = constrained\n[scheme]\ndt = 0.01\nt_end = 0.2\n\
             [ic]\nkind = taylor_green\namplitude = 0.1\ndirector_perturbation = 0.05\n",
        )
        .unwrap();
        let sp = cfg.spectral();
        let r = continuation_run(
            &cfg,
            initial_state(&cfg, &sp).unwrap(),
            ContinuationSettings::from_config(&cfg),
        )
        .unwrap();
        assert_eq!((r.flag_count(), r.segments.len()), (0, 1));
        assert_eq!(r.segments[0].steps, 20);
        assert_eq!(r.energies.len(), 21);
    }

    fn defect_run(eps0: f64) -> Result<ContinuationReport> {
        let cfg = parse_config(&format!(
            "[grid]\nnx = 64\n[params]\nmode = constrained\n[scheme]\ndt = 0.004\nt_end = 0.2\n\
             [ic]\nkind = defect_pair\nseparation = 1.2\ncore_radius = 0.3\n[diagnostics]\neps0 = {eps0}\n"
        ))
        .unwrap();
        let sp = cfg.spectral();
        continuation_run(
            &cfg,
            initial_state(&cfg, &sp).unwrap(),
            ContinuationSettings::from_config(&cfg),
        )
    }

    #[test]
    fn defect_pair_flags_once_and_books_heat() {
        let r = defect_run(4.0).unwrap();
        assert_eq!((r.flag_count(), r.segments.len()), (1, 2));
        let e = &r.events[0];
        assert_eq!(e.flag.t, 0.0);
        assert!(r.checks_passed());
        assert!(e.mechanical_drop > 0.0 && (e.heat_rise - e.mechanical_drop).abs() < 0.05 * e.mechanical_drop);
        assert_eq!(r.segments[0].steps, 10);
        let last = r.energies.last().unwrap().total;
        assert!((last - r.initial_total).abs() < 1e-3 * r.initial_total);
        // doubling eps0 lifts the threshold above the monitored sup
        assert_eq!(defect_run(8.0).unwrap().flag_count(), 0);
    }

    #[test]
    fn grid_scale_concentration_is_inconclusive() {
        assert!(matches!(defect_run(2.0), Err(Error::InconclusiveSegment { .. })));
    }

    #[test]
    fn relaxed_mode_rejected() {
        let cfg = parse_config("[grid]\nnx = 16\n[scheme]\ndt = 0.01\nt_end = 0.1\n").unwrap();
        let s = State::trivial(cfg.grid, [0.0, 0.0, 1.0], 1.0);
        assert!(continuation_run(&cfg, s, ContinuationSettings::from_config(&cfg)).is_err());
    }
}
