use crate::dynamics::{Kinematics, State};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::spectral::Spectral;

/// Energy density `|u|^2 + |grad d|^2`.
pub fn energy_density(sp: &Spectral, state: &State) -> ScalarField {
    let kin = Kinematics::new(sp, state);
    energy_density_with(&kin, state)
}

pub(crate) fn energy_density_with(kin: &Kinematics, state: &State) -> ScalarField {
    state.u.norm_sq().add(&kin.grad_d_sq)
}

/// Largest local energy over balls of one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationReport {
    pub t: f64,
    pub radius: f64,
    /// Physical coordinates of the maximizing ball centre.
    pub argmax: (f64, f64),
    /// `sup_x int_{B_r(x)} (|u|^2 + |grad d|^2)`.
    pub value: f64,
    /// `value >= eps0^2`.
    pub flagged: bool,
    /// Mechanical energy lost across the flagged window, once known.
    pub energy_drop: Option<f64>,
}

pub fn local_energy_sup(sp: &Spectral, state: &State, r: f64, eps0: f64) -> Result<ConcentrationReport> {
    sup_of_density(sp, &energy_density(sp, state), state.t, r, eps0)
}

pub(crate) fn sup_of_density(
    sp: &Spectral,
    density: &ScalarField,
    t: f64,
    r: f64,
    eps0: f64,
) -> Result<ConcentrationReport> {
    let g = sp.ball_integrals(density, r)?;
    let idx = g.argmax();
    let value = g.values()[idx];
    Ok(ConcentrationReport {
        t,
        radius: r,
        argmax: sp.grid().coords(idx),
        value,
        flagged: value >= eps0 * eps0,
        energy_drop: None,
    })
}

/// Existence horizon from the local energy of the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonEstimate {
    pub eps0: f64,
    /// `int (|u|^2 + |grad d|^2)`.
    pub e0: f64,
    /// `int (|u|^2/2 + |grad d|^2/2 + theta)`.
    pub total_energy: f64,
    /// Largest `r` in `(0, 1]` with `sup_x int_{B_2r(x)} <= eps0^2`.
    pub r0: f64,
    pub tau0: f64,
    pub t0: f64,
}

/// `tau0 = (eps0^4 / e0)^5` and `T0 = tau0 R0^3`.
pub fn horizon_formula(eps0: f64, e0: f64, r0: f64) -> (f64, f64) {
    let tau0 = (eps0.powi(4) / e0).powi(5);
    (tau0, tau0 * r0.powi(3))
}

/// Searches the admissible radius: halve from 1 until admissible, then bisect
/// between the last admissible and first inadmissible radius.
pub fn horizon_estimate(sp: &Spectral, state: &State, eps0: f64) -> Result<HorizonEstimate> {
    if !(eps0 > 0.0) {
        return Err(Error::Domain(format!("eps0 must be positive, got {eps0}")));
    }
    let kin = Kinematics::new(sp, state);
    let density = energy_density_with(&kin, state);
    let e0 = density.integral();
    let total_energy = 0.5 * e0 + state.theta.integral();
    let r0 = admissible_radius(sp, &density, eps0)?;
    let (tau0, t0) = horizon_formula(eps0, e0, r0);
    Ok(HorizonEstimate {
        eps0,
        e0,
        total_energy,
        r0,
        tau0,
        t0,
    })
}

fn admissible_radius(sp: &Spectral, density: &ScalarField, eps0: f64) -> Result<f64> {
    let threshold = eps0 * eps0;
    let ok = |r: f64| -> Result<bool> { Ok(sp.ball_integrals(density, 2.0 * r)?.max() <= threshold) };
    // 2r must be at least the smallest resolvable ball
    let r_min = 0.5 * sp.min_ball_radius();
    let mut hi = 1.0;
    if ok(hi)? {
        return Ok(hi);
    }
    let mut lo = hi;
    loop {
        lo *= 0.5;
        if lo < r_min {
            if ok(r_min)? {
                lo = r_min;
                break;
            }
            return Err(Error::ConcentrationAtGridScale { radius: 2.0 * r_min });
        }
        if ok(lo)? {
            break;
        }
        hi = lo;
    }
    let precision = 0.05 * sp.grid().h();
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
