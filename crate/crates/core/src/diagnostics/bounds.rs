use std::f64::consts::PI;

use crate::dynamics::{heat_source_from, ApproximationParams, Kinematics, State};
use crate::spectral::Spectral;

/// Margins of the parabolic maximum principles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPrincipleReport {
    /// `min theta - theta_floor`; negative means violated.
    pub theta_margin: f64,
    /// `max |d| - 1`; positive means violated.
    pub director_margin: f64,
    pub theta_ok: bool,
    pub director_ok: bool,
}

impl MaxPrincipleReport {
    pub fn passed(&self) -> bool {
        self.theta_ok && self.director_ok
    }
}

/// Relative tolerance of [`maximum_principle_check`].
pub const MAX_PRINCIPLE_TOLERANCE: f64 = 1e-6;

pub fn maximum_principle_check(state: &State, theta_floor: f64) -> MaxPrincipleReport {
    let theta_margin = state.theta.min() - theta_floor;
    let director_margin = state.d.max_norm() - 1.0;
    let scale = theta_floor.abs().max(1.0);
    MaxPrincipleReport {
        theta_margin,
        director_margin,
        theta_ok: theta_margin >= -MAX_PRINCIPLE_TOLERANCE * scale,
        director_ok: director_margin <= MAX_PRINCIPLE_TOLERANCE,
    }
}

/// `int |chi_M(|grad d|^2)|^2` against `M^2 |Omega|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffBoundReport {
    pub integral: f64,
    /// `4 pi^2 M^2`, the bound asserted.
    pub bound: f64,
    /// `4 pi M^2`, the constant as printed in the source estimate.
    pub stated_bound: f64,
    pub within_bound: bool,
    pub within_stated_bound: bool,
}

pub fn cutoff_energy_bound_check(sp: &Spectral, state: &State, m: f64) -> CutoffBoundReport {
    let kin = Kinematics::new(sp, state);
    let chi = kin.cutoff_field(m);
    let integral = chi.mul(&chi).integral();
    let bound = 4.0 * PI * PI * m * m;
    let stated_bound = 4.0 * PI * m * m;
    CutoffBoundReport {
        integral,
        bound,
        stated_bound,
        within_bound: integral <= bound * (1.0 + 1e-12),
        within_stated_bound: integral <= stated_bound * (1.0 + 1e-12),
    }
}

/// Both sides of `int_0^t int |grad theta|^q <= C(q) Q(t)^q`, where
/// `Q(t) = int theta_0 + int_0^t int dissipation`. Reported, never asserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGradientReport {
    pub q: f64,
    pub t: f64,
    pub lhs: f64,
    pub q_functional: f64,
    /// `lhs / Q^q`, an empirical lower bound for `C(q)`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ThetaGradientAccumulator {
    sp: Spectral,
    params: ApproximationParams,
    q: f64,
    initial_heat: Option<f64>,
    last: Option<(f64, f64, f64)>,
    lhs: f64,
    dissipated: f64,
}

impl ThetaGradientAccumulator {
    pub fn new(sp: &Spectral, params: ApproximationParams, q: f64) -> Self {
        Self {
            sp: sp.clone(),
            params,
            q,
            initial_heat: None,
            last: None,
            lhs: 0.0,
            dissipated: 0.0,
        }
    }

    pub fn push(&mut self, state: &State) {
        let kin = Kinematics::new(&self.sp, state);
        let g = kin.grad_theta[0]
            .mul(&kin.grad_theta[0])
            .add(&kin.grad_theta[1].mul(&kin.grad_theta[1]));
        let q = self.q;
        let grad_q = g.map(|v| v.powf(0.5 * q)).integral();
        let rate = heat_source_from(&kin, state, &self.params).integral();
        if self.initial_heat.is_none() {
            self.initial_heat = Some(state.theta.integral());
        }
        if let Some((t0, g0, r0)) = self.last {
            let h = state.t - t0;
            self.lhs += 0.5 * h * (g0 + grad_q);
            self.dissipated += 0.5 * h * (r0 + rate);
        }
        self.last = Some((state.t, grad_q, rate));
    }

    pub fn report(&self) -> ThetaGradientReport {
        let qf = self.initial_heat.unwrap_or(0.0) + self.dissipated;
        ThetaGradientReport {
            q: self.q,
            t: self.last.map_or(0.0, |l| l.0),
            lhs: self.lhs,
            q_functional: qf,
            ratio: if qf > 0.0 { self.lhs / qf.powf(self.q) } else { 0.0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DirectorField, ScalarField, TorusGrid};

    #[test]
    fn floor_state_passes_with_zero_margins() {
        let g = TorusGrid::square(8);
        let s = State::trivial(g, [0.0, 1.0, 0.0], 0.5);
        let r = maximum_principle_check(&s, 0.5);
        assert_eq!(r.theta_margin, 0.0);
        assert!(r.director_margin.abs() < 1e-15);
        assert!(r.passed());
        let mut bad = s.clone();
        bad.theta.values_mut()[5] = 0.25;
        let r = maximum_principle_check(&bad, 0.5);
        assert_eq!(r.theta_margin, -0.25);
        assert!(!r.passed());
    }

    #[test]
    fn cutoff_bound_examples() {
        let g = TorusGrid::square(32);
        let sp = Spectral::for_grid(g);
        let mut s = State::trivial(g, [0.0, 0.0, 1.0], 1.0);
        let r = cutoff_energy_bound_check(&sp, &s, 2.0);
        assert!(r.integral < 1e-25 && r.within_bound);
        s.d = DirectorField::from_fn(g, |x, _| [x.cos(), x.sin(), 0.0]);
        let r = cutoff_energy_bound_check(&sp, &s, 0.5);
        // saturated: chi = 1/2 everywhere
        assert!((r.integral - PI * PI).abs() < 1e-12);
        assert!((r.integral - r.bound).abs() < 1e-12);
        // the stated 4 pi M^2 constant is smaller than the saturated value
        assert!(!r.within_stated_bound);
    }

    #[test]
    fn theta_gradient_report_of_steady_state() {
        let g = TorusGrid::square(16);
        let sp = Spectral::for_grid(g);
        let p = ApproximationParams::newtonian(&sp, 1.0);
        let mut acc = ThetaGradientAccumulator::new(&sp, p, 1.25);
        let mut s = State::trivial(g, [0.0, 0.0, 1.0], 1.0);
        s.theta = ScalarField::from_fn(g, |x, _| 2.0 + x.cos());
        acc.push(&s);
        s.t = 1.0;
        acc.push(&s);
        let r = acc.report();
        let want: f64 = ScalarField::from_fn(g, |x, _| x.sin().abs().powf(1.25)).integral();
        assert!((r.lhs - want).abs() < 1e-10);
        assert!((r.q_functional - 8.0 * PI * PI).abs() < 1e-10);
    }
}
