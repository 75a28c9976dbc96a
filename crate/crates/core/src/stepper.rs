//! Semi-implicit (IMEX) time stepping.
//!
//! Diffusion of `u` (with constant coefficient `mu_split`), `d` and `theta`
//! is solved exactly mode by mode; everything else is explicit, including the
//! viscosity defect `div((mu(theta) - mu_split) strain)`. `Imex1` is
//! backward/forward Euler. `Imex2` is variable-step SBDF2, started with one
//! `Imex1` step.

use std::time::Instant;

use crate::dynamics::{
    director_explicit, momentum_explicit, pressure_from, renormalize_director, temperature_explicit,
    ApproximationParams, DirectorMode, Kinematics, State,
};
use crate::error::{Error, Result};
use crate::grid::{DirectorField, VectorField};
use crate::spectral::{Spectral, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Imex1,
    Imex2,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Imex1 => "imex1",
            Scheme::Imex2 => "imex2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    /// Time step, or the upper bound on it when `adapt` is set.
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Implicit viscosity; must be at least `mu_upper`.
    pub mu_split: f64,
    pub cfl_safety: f64,
    pub adapt: bool,
}

impl SchemeConfig {
    /// Fixed-step `Imex2` with `mu_split = mu_upper`.
    pub fn new(params: &ApproximationParams, dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::Imex2,
            mu_split: params.viscosity.mu_upper(),
            cfl_safety: 0.5,
            adapt: false,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self, params: &ApproximationParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::key("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::key(
                "t_end",
                format!("must be finite and >= 0, got {}", self.t_end),
            ));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::key("cfl_safety", "must lie in (0, 1]"));
        }
        let upper = params.viscosity.mu_upper();
        if !(self.mu_split >= upper && self.mu_split.is_finite()) {
            return Err(Error::key(
                "mu_split",
                format!("must be at least mu_upper = {upper}, got {}", self.mu_split),
            ));
        }
        Ok(())
    }
}

/// Summary of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub max_u: f64,
    pub max_grad_d_sq: f64,
    pub min_theta: f64,
    pub max_unit_deviation: f64,
    /// Seconds spent in the step; excluded from every deterministic output.
    pub wall_time: f64,
}

/// The spectral unknowns `(u, d, theta)` or their explicit tendencies.
#[derive(Debug, Clone)]
struct Bundle {
    u: [SpectralField; 2],
    d: [SpectralField; 3],
    theta: SpectralField,
}

impl Bundle {
    fn of(kin: &Kinematics) -> Self {
        Self {
            u: kin.u_hat.clone(),
            d: kin.d_hat.clone(),
            theta: kin.theta_hat.clone(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> Self {
        Self {
            u: [f(&self.u[0], &other.u[0]), f(&self.u[1], &other.u[1])],
            d: [
                f(&self.d[0], &other.d[0]),
                f(&self.d[1], &other.d[1]),
                f(&self.d[2], &other.d[2]),
            ],
            theta: f(&self.theta, &other.theta),
        }
    }
}

#[derive(Debug, Clone)]
struct History {
    fields: Bundle,
    explicit: Bundle,
    dt: f64,
}

/// Owns the operators and the multistep history of one run.
#[derive(Debug, Clone)]
pub struct Stepper {
    sp: Spectral,
    params: ApproximationParams,
    config: SchemeConfig,
    mode: DirectorMode,
    history: Option<History>,
    // derivatives of the last state produced, reused by the next step
    cache: Option<(State, Kinematics)>,
}

impl Stepper {
    pub fn new(sp: Spectral, params: ApproximationParams, config: SchemeConfig, mode: DirectorMode) -> Result<Self> {
        params.check_spectral(&sp)?;
        config.validate(&params)?;
        Ok(Self {
            sp,
            params,
            config,
            mode,
            history: None,
            cache: None,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn params(&self) -> &ApproximationParams {
        &self.params
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn mode(&self) -> DirectorMode {
        self.mode
    }

    /// Drops the multistep history; the next step restarts the scheme.
    pub fn reset(&mut self) {
        self.history = None;
        self.cache = None;
    }

    /// Step size allowed by the advective CFL bound (or `config.dt`).
    pub fn admissible_dt(&self, state: &State) -> f64 {
        if !self.config.adapt {
            return self.config.dt;
        }
        let umax = state.u.max_norm();
        if umax == 0.0 {
            return self.config.dt;
        }
        self.config.dt.min(self.config.cfl_safety * state.grid().h() / umax)
    }

    /// One step of size `config.dt` (or the CFL bound when adaptive).
    pub fn step(&mut self, state: &State) -> Result<(State, StepReport)> {
        let dt = self.admissible_dt(state);
        self.step_to(state, dt, state.t + dt)
    }

    /// One step of size `dt`, stamping the result with time `t_new`.
    ///
    /// Passing a state other than the one returned by the previous call
    /// restarts the multistep history.
    pub fn step_to(&mut self, state: &State, dt: f64, t_new: f64) -> Result<(State, StepReport)> {
        let clock = Instant::now();
        let kin = match self.cache.take() {
            Some((s, k)) if s == *state => k,
            _ => {
                self.history = None;
                Kinematics::new(&self.sp, state)
            }
        };
        let (hat, current, explicit) = match (&self.history, self.config.scheme) {
            (None, Scheme::Imex2) => self.richardson_start(&kin, state, dt, t_new)?,
            (h, _) => self.solve(&kin, state, dt, h.as_ref()),
        };
        let sp = &self.sp;
        let (ux, uy) = (&hat.u[0], &hat.u[1]);
        let (d_hat, th_hat) = (&hat.d, &hat.theta);
        let mut phys = sp
            .inverse_many(&[ux, uy, &d_hat[0], &d_hat[1], &d_hat[2], th_hat])
            .into_iter();
        let mut next = || phys.next().expect("six fields");
        let u = VectorField::new(next(), next());
        let mut d = DirectorField::new([next(), next(), next()]);
        let theta = next();
        let mut new_state = State {
            u,
            d: d.clone(),
            theta,
            p: state.p.clone(),
            t: t_new,
        };
        if let Some(field) = new_state.first_non_finite() {
            return Err(Error::BlowUp { t: t_new, field });
        }
        if self.mode == DirectorMode::Constrained {
            d = renormalize_director(&d)?;
            new_state.d = d;
        }
        let new_kin = Kinematics::new(sp, &new_state);
        new_state.p = pressure_from(sp, &new_kin, &new_state, &self.params);
        if let Some(field) = new_state.first_non_finite() {
            return Err(Error::BlowUp { t: t_new, field });
        }
        let report = StepReport {
            dt,
            max_u: new_state.u.max_norm(),
            max_grad_d_sq: new_kin.grad_d_sq.max(),
            min_theta: new_state.theta.min(),
            max_unit_deviation: new_state.d.max_unit_deviation(),
            wall_time: clock.elapsed().as_secs_f64(),
        };
        self.history = Some(History {
            fields: current,
            explicit,
            dt,
        });
        self.cache = Some((new_state.clone(), new_kin));
        Ok((new_state, report))
    }

    /// Spectral solution after one step, plus the current fields and explicit
    /// tendencies that form the next step's history.
    fn solve(&self, kin: &Kinematics, state: &State, dt: f64, history: Option<&History>) -> (Bundle, Bundle, Bundle) {
        let sp = &self.sp;
        let explicit = Bundle {
            u: momentum_explicit(sp, kin, state, &self.params, self.config.mu_split),
            d: director_explicit(sp, kin, state, &self.params),
            theta: temperature_explicit(sp, kin, state, &self.params).0,
        };
        let current = Bundle::of(kin);
        let (rhs, a0) = match (history, self.config.scheme) {
            (Some(h), Scheme::Imex2) => {
                let w = dt / h.dt;
                let a0 = (1.0 + 2.0 * w) / (1.0 + w);
                let a1 = 1.0 + w;
                let a2 = w * w / (1.0 + w);
                let extrap = explicit.zip(&h.explicit, |n, m| n.scaled((1.0 + w) * dt).sub(&m.scaled(w * dt)));
                let past = current.zip(&h.fields, |c, p| c.scaled(a1).sub(&p.scaled(a2)));
                (past.zip(&extrap, |a, b| a.add(b)), a0)
            }
            _ => (current.zip(&explicit, |c, n| c.add(&n.scaled(dt))), 1.0),
        };
        let solve = |s: &SpectralField, c: f64| {
            let mut out = sp.implicit_diffusion(&s.scaled(1.0 / a0), dt * c / a0);
            sp.dealias(&mut out);
            out
        };
        let mu = self.config.mu_split;
        let (ux, uy) = sp.leray_hat(&solve(&rhs.u[0], mu), &solve(&rhs.u[1], mu));
        let hat = Bundle {
            u: [ux, uy],
            d: [solve(&rhs.d[0], 1.0), solve(&rhs.d[1], 1.0), solve(&rhs.d[2], 1.0)],
            theta: solve(&rhs.theta, 1.0),
        };
        (hat, current, explicit)
    }

    /// Second-order first step: `2 (two half steps) - (one full step)` of the
    /// one-step scheme, so the multistep scheme starts without a first-order
    /// error at `t0`.
    fn richardson_start(
        &self,
        kin: &Kinematics,
        state: &State,
        dt: f64,
        t_new: f64,
    ) -> Result<(Bundle, Bundle, Bundle)> {
        let sp = &self.sp;
        let (full, current, explicit) = self.solve(kin, state, dt, None);
        let (half, _, _) = self.solve(kin, state, 0.5 * dt, None);
        let mut phys = sp
            .inverse_many(&[&half.u[0], &half.u[1], &half.d[0], &half.d[1], &half.d[2], &half.theta])
            .into_iter();
        let mut next = || phys.next().expect("six fields");
        let mid = State {
            u: VectorField::new(next(), next()),
            d: DirectorField::new([next(), next(), next()]),
            theta: next(),
            p: state.p.clone(),
            t: 0.5 * (state.t + t_new),
        };
        if let Some(field) = mid.first_non_finite() {
            return Err(Error::BlowUp { t: mid.t, field });
        }
        let (second, _, _) = self.solve(&Kinematics::new(sp, &mid), &mid, 0.5 * dt, None);
        let hat = second.zip(&full, |a, b| a.scaled(2.0).sub(b));
        Ok((hat, current, explicit))
    }
}

/// Hooks called by [`run`]. Both default to doing nothing.
pub trait RunObserver {
    /// Called on the initial state, every `sample_stride` steps and on the
    /// final state.
    fn on_sample(&mut self, _step: usize, _state: &State, _report: Option<&StepReport>) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_stride` steps and on the final state.
    fn on_checkpoint(&mut self, _step: usize, _state: &State) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Sampling cadence of [`run`]; a stride of 0 disables the hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSchedule {
    pub sample_stride: usize,
    pub checkpoint_stride: usize,
}

impl Default for RunSchedule {
    fn default() -> Self {
        Self {
            sample_stride: 1,
            checkpoint_stride: 0,
        }
    }
}

/// Outcome of [`run`]: the last good state, with the error if one stopped it.
#[derive(Debug)]
pub struct Trajectory {
    pub last: State,
    pub steps: usize,
    pub reports: Vec<StepReport>,
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn into_result(self) -> Result<State> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self.last),
        }
    }
}

/// Number of steps and the time of step `k` for a fixed-step run.
pub(crate) fn fixed_schedule(t0: f64, t_end: f64, dt: f64) -> (usize, impl Fn(usize) -> f64) {
    let span = t_end - t0;
    let steps = if span <= 0.0 {
        0
    } else {
        // tolerate t_end / dt landing a hair above an integer
        (span / dt - 1e-9).ceil().max(1.0) as usize
    };
    (
        steps,
        move |k: usize| {
            if k == steps {
                t_end
            } else {
                t0 + k as f64 * dt
            }
        },
    )
}

/// Advances `initial` to `config.t_end`, calling `observer` on schedule.
pub fn run(stepper: &mut Stepper, initial: State, schedule: RunSchedule, observer: &mut dyn RunObserver) -> Trajectory {
    let mut traj = Trajectory {
        last: initial,
        steps: 0,
        reports: Vec::new(),
        failure: None,
    };
    if let Err(e) = observer.on_sample(0, &traj.last, None) {
        traj.failure = Some(e);
        return traj;
    }
    let t_end = stepper.config().t_end;
    let result = if stepper.config().adapt {
        run_adaptive(stepper, &mut traj, t_end, schedule, observer)
    } else {
        run_fixed(stepper, &mut traj, t_end, schedule, observer)
    };
    if let Err(e) = result {
        traj.failure = Some(e);
    }
    traj
}

fn stride_hit(stride: usize, k: usize) -> bool {
    stride > 0 && k.is_multiple_of(stride)
}

fn after_step(
    traj: &mut Trajectory,
    state: State,
    report: StepReport,
    last: bool,
    schedule: RunSchedule,
    observer: &mut dyn RunObserver,
) -> Result<()> {
    traj.steps += 1;
    traj.last = state;
    traj.reports.push(report);
    let k = traj.steps;
    if last || stride_hit(schedule.sample_stride, k) {
        observer.on_sample(k, &traj.last, Some(&report))?;
    }
    if (last && schedule.checkpoint_stride > 0) || stride_hit(schedule.checkpoint_stride, k) {
        observer.on_checkpoint(k, &traj.last)?;
    }
    Ok(())
}

fn run_fixed(
    stepper: &mut Stepper,
    traj: &mut Trajectory,
    t_end: f64,
    schedule: RunSchedule,
    observer: &mut dyn RunObserver,
) -> Result<()> {
    let dt = stepper.config().dt;
    let (steps, time_of) = fixed_schedule(traj.last.t, t_end, dt);
    for k in 1..=steps {
        let t_new = time_of(k);
        let (state, report) = stepper.step_to(&traj.last, t_new - traj.last.t, t_new)?;
        after_step(traj, state, report, k == steps, schedule, observer)?;
    }
    Ok(())
}

fn run_adaptive(
    stepper: &mut Stepper,
    traj: &mut Trajectory,
    t_end: f64,
    schedule: RunSchedule,
    observer: &mut dyn RunObserver,
) -> Result<()> {
    while traj.last.t < t_end {
        let mut dt = stepper.admissible_dt(&traj.last);
        let remaining = t_end - traj.last.t;
        // avoid leaving a sliver step at the end
        let last = dt >= remaining * (1.0 - 1e-12);
        if last {
            dt = remaining;
        } else if dt > 0.5 * remaining {
            dt = 0.5 * remaining;
        }
        let t_new = if last { t_end } else { traj.last.t + dt };
        let (state, report) = stepper.step_to(&traj.last, dt, t_new)?;
        after_step(traj, state, report, last, schedule, observer)?;
    }
    Ok(())
}
