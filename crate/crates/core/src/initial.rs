//! Initial-condition library.
//!
//! Every generator checks what a run assumes of its data before returning:
//! `div u = 0`, a unit director when constrained, and `theta >= theta_floor`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{DirectorMode, State};
use crate::error::{Error, Result};
use crate::grid::{periodic_delta, DirectorField, ScalarField, TorusGrid, VectorField};
use crate::spectral::Spectral;

#[derive(Debug, Clone, PartialEq)]
pub enum IcSpec {
    /// `u = 0`, `d = e_z`, `theta = theta0`.
    Constant { theta0: f64 },
    /// Taylor-Green velocity with a smooth unit director tilted by
    /// `director_perturbation` away from `e_z`.
    TaylorGreen {
        amplitude: f64,
        director_perturbation: f64,
        theta0: f64,
    },
    /// Degree +1 and -1 in-plane defects on the x axis, cores escaped to `+e_z`.
    DefectPair {
        separation: f64,
        core_radius: f64,
        theta0: f64,
    },
    /// Seeded random fields with modes `1 <= |k_i| <= kmax`; `amplitude` is
    /// the rms velocity.
    RandomBandlimited {
        kmax: usize,
        amplitude: f64,
        director_perturbation: f64,
        seed: u64,
        theta0: f64,
    },
}

impl IcSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            IcSpec::Constant { .. } => "constant",
            IcSpec::TaylorGreen { .. } => "taylor_green",
            IcSpec::DefectPair { .. } => "defect_pair",
            IcSpec::RandomBandlimited { .. } => "random_bandlimited",
        }
    }

    pub fn theta0(&self) -> f64 {
        match self {
            IcSpec::Constant { theta0 }
            | IcSpec::TaylorGreen { theta0, .. }
            | IcSpec::DefectPair { theta0, .. }
            | IcSpec::RandomBandlimited { theta0, .. } => *theta0,
        }
    }
}

/// Tolerance on `div u` of generated data.
pub const IC_DIVERGENCE_TOLERANCE: f64 = 1e-10;

pub fn make_initial_condition(spec: &IcSpec, sp: &Spectral, mode: DirectorMode, theta_floor: f64) -> Result<State> {
    let grid = sp.grid();
    let theta0 = spec.theta0();
    if !(theta0 >= theta_floor) {
        return Err(Error::key(
            "theta0",
            format!("initial temperature {theta0} is below theta_floor {theta_floor}"),
        ));
    }
    let mut state = State::trivial(grid, [0.0, 0.0, 1.0], theta0);
    match *spec {
        IcSpec::Constant { .. } => {}
        IcSpec::TaylorGreen {
            amplitude,
            director_perturbation,
            ..
        } => {
            state.u = VectorField::from_fn(grid, |x, y| {
                [amplitude * x.sin() * y.cos(), -amplitude * x.cos() * y.sin()]
            });
            state.d = tilted_director(grid, director_perturbation);
        }
        IcSpec::DefectPair {
            separation,
            core_radius,
            ..
        } => {
            state.d = defect_pair(grid, separation, core_radius)?;
        }
        IcSpec::RandomBandlimited {
            kmax,
            amplitude,
            director_perturbation,
            seed,
            ..
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            state.u = random_divergence_free(grid, kmax, amplitude, &mut rng);
            let p = [0, 1, 2].map(|_| random_scalar(grid, kmax, &mut rng));
            state.d = DirectorField::from_index_fn(grid, |i| {
                unit([
                    director_perturbation * p[0].values()[i],
                    director_perturbation * p[1].values()[i],
                    1.0 + director_perturbation * p[2].values()[i],
                ])
            });
            let q = random_scalar(grid, kmax, &mut rng);
            let (lo, hi) = (q.min(), q.max());
            state.theta = q.map(|v| theta0 * (1.0 + 0.5 * (v - lo) / (hi - lo)));
        }
    }
    state.u = sp.leray_project(&state.u);
    check_hypotheses(sp, &state, mode, theta_floor)?;
    Ok(state)
}

fn check_hypotheses(sp: &Spectral, state: &State, mode: DirectorMode, theta_floor: f64) -> Result<()> {
    let div = sp.divergence(&state.u).max_abs();
    if !(div < IC_DIVERGENCE_TOLERANCE) {
        return Err(Error::Config(format!("initial velocity has max |div u| = {div:.3e}")));
    }
    let dev = state.d.max_unit_deviation();
    match mode {
        DirectorMode::Constrained if dev > 1e-12 => {
            return Err(Error::Config(format!(
                "initial director deviates from unit length by {dev:.3e}"
            )));
        }
        DirectorMode::Relaxed if state.d.max_norm() > 1.0 + 1e-12 => {
            return Err(Error::Config("initial director exceeds unit length".into()));
        }
        _ => {}
    }
    let m = state.theta.min();
    if m < theta_floor {
        return Err(Error::Config(format!(
            "initial temperature {m} is below theta_floor {theta_floor}"
        )));
    }
    Ok(())
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// `d = (e_z + eps (cos y, sin x, 0)) / |...|`.
pub fn tilted_director(grid: TorusGrid, eps: f64) -> DirectorField {
    DirectorField::from_fn(grid, |x, y| unit([eps * y.cos(), eps * x.sin(), 1.0]))
}

/// Smooth step: 1 for `r <= r0`, 0 for `r >= r1`.
fn window(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        1.0
    } else if r >= r1 {
        0.0
    } else {
        let s = (r - r0) / (r1 - r0);
        0.5 * (1.0 + (PI * s).cos())
    }
}

/// Core centres of [`IcSpec::DefectPair`]: `(+-separation/2, 0)`, the +1
/// defect on the left.
pub fn defect_centres(separation: f64) -> [(f64, f64); 2] {
    [(-0.5 * separation, 0.0), (0.5 * separation, 0.0)]
}

/// In-plane phase `W arg((z - z1) / (z - z2))`, escape angle
/// `beta = (pi/2) tanh(r1/a) tanh(r2/a)`, `d = (sin b cos p, sin b sin p, cos b)`.
pub fn defect_pair(grid: TorusGrid, separation: f64, core_radius: f64) -> Result<DirectorField> {
    if core_radius < 3.0 * grid.h() {
        return Err(Error::Resolution(format!(
            "defect core radius {core_radius} is under three grid cells ({:.4})",
            3.0 * grid.h()
        )));
    }
    if !(separation > 2.0 * core_radius && separation < 0.5 * PI) {
        return Err(Error::key(
            "separation",
            format!("must lie in (2 core_radius, pi/2), got {separation}"),
        ));
    }
    let [c1, c2] = defect_centres(separation);
    // the phase is kept exactly inside a disc covering both cores and
    // tapered to zero before the torus boundary
    let (r_in, r_out) = (separation + 0.5, PI - 0.3);
    Ok(DirectorField::from_fn(grid, |x, y| {
        let (r1, r2) = (
            periodic_delta(x, c1.0).hypot(periodic_delta(y, c1.1)),
            periodic_delta(x, c2.0).hypot(periodic_delta(y, c2.1)),
        );
        // unwrapped offsets: a wrapped one would make the phase jump across
        // the line opposite each core, inside the taper
        let (x1, y1, x2, y2) = (x - c1.0, y - c1.1, x - c2.0, y - c2.1);
        // arg of (z - z1) * conj(z - z2)
        let re = x1 * x2 + y1 * y2;
        let im = y1 * x2 - x1 * y2;
        let phase = window(x.hypot(y), r_in, r_out) * im.atan2(re);
        let beta = 0.5 * PI * (r1 / core_radius).tanh() * (r2 / core_radius).tanh();
        [beta.sin() * phase.cos(), beta.sin() * phase.sin(), beta.cos()]
    }))
}

/// Winding number of the in-plane part of `d` along a circle of `radius`
/// about `centre`, by summing wrapped angle increments.
pub fn winding_number(d: &DirectorField, centre: (f64, f64), radius: f64, samples: usize) -> f64 {
    let grid = d.grid();
    let angle_at = |t: f64| {
        let x = centre.0 + radius * t.cos();
        let y = centre.1 + radius * t.sin();
        // nearest grid node
        let i = (((x + PI) / grid.hx()).round() as i64).rem_euclid(grid.nx() as i64) as usize;
        let j = (((y + PI) / grid.hy()).round() as i64).rem_euclid(grid.ny() as i64) as usize;
        let v = d.at(j * grid.nx() + i);
        v[1].atan2(v[0])
    };
    let mut total = 0.0;
    let mut prev = angle_at(0.0);
    for k in 1..=samples {
        let a = angle_at(2.0 * PI * k as f64 / samples as f64);
        let mut step = a - prev;
        step -= 2.0 * PI * (step / (2.0 * PI)).round();
        total += step;
        prev = a;
    }
    total / (2.0 * PI)
}

fn random_modes<R: Rng>(kmax: usize, rng: &mut R) -> Vec<(f64, f64, f64, f64)> {
    let k = kmax as i64;
    let mut modes = Vec::new();
    for k1 in -k..=k {
        for k2 in -k..=k {
            // one of each +-k pair
            if (k1, k2) <= (0, 0) {
                continue;
            }
            let w = 1.0 / ((k1 * k1 + k2 * k2) as f64);
            let a = w * rng.gen_range(-1.0..1.0);
            let b = w * rng.gen_range(-1.0..1.0);
            modes.push((k1 as f64, k2 as f64, a, b));
        }
    }
    modes
}

/// Random zero-mean scalar field with unit maximum.
pub fn random_scalar<R: Rng>(grid: TorusGrid, kmax: usize, rng: &mut R) -> ScalarField {
    let modes = random_modes(kmax, rng);
    let f = ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|(k1, k2, a, b)| {
                let ph = k1 * x + k2 * y;
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    });
    let m = f.max_abs();
    f.scaled(1.0 / m)
}

/// `perp grad psi` of a random stream function, scaled to rms `amplitude`.
pub fn random_divergence_free<R: Rng>(grid: TorusGrid, kmax: usize, amplitude: f64, rng: &mut R) -> VectorField {
    let modes = random_modes(kmax, rng);
    let u = VectorField::from_fn(grid, |x, y| {
        let mut v = [0.0, 0.0];
        for (k1, k2, a, b) in &modes {
            let ph = k1 * x + k2 * y;
            // psi = a cos + b sin; u = (psi_y, -psi_x)
            let dpsi = -a * ph.sin() + b * ph.cos();
            v[0] += k2 * dpsi;
            v[1] -= k1 * dpsi;
        }
        v
    });
    let rms = u.norm_sq().mean().sqrt();
    if rms == 0.0 {
        u
    } else {
        u.scaled(amplitude / rms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(n: usize) -> Spectral {
        Spectral::for_grid(TorusGrid::square(n))
    }

    #[test]
    fn constant_is_trivial() {
        let s = make_initial_condition(
            &IcSpec::Constant { theta0: 2.0 },
            &sp(16),
            DirectorMode::Constrained,
            1.0,
        )
        .unwrap();
        assert_eq!(s, State::trivial(s.grid(), [0.0, 0.0, 1.0], 2.0));
    }

    #[test]
    fn taylor_green_kinetic_energy() {
        let sp = sp(32);
        let spec = IcSpec::TaylorGreen {
            amplitude: 1.0,
            director_perturbation: 0.0,
            theta0: 1.0,
        };
        let s = make_initial_condition(&spec, &sp, DirectorMode::Relaxed, 1.0).unwrap();
        assert!(sp.divergence(&s.u).max_abs() < 1e-12);
        let ke = 0.5 * s.u.norm_sq().integral();
        assert!((ke - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn defect_windings() {
        let grid = TorusGrid::square(128);
        let d = defect_pair(grid, 1.2, 0.2).unwrap();
        let [c1, c2] = defect_centres(1.2);
        assert!((winding_number(&d, c1, 0.4, 400) - 1.0).abs() < 1e-12);
        assert!((winding_number(&d, c2, 0.4, 400) + 1.0).abs() < 1e-12);
        assert!(winding_number(&d, (0.0, 2.0), 0.4, 400).abs() < 1e-12);
        assert!(d.max_unit_deviation() < 1e-14);
    }

    #[test]
    fn defect_pair_is_smooth_on_the_torus() {
        // an unresolved jump would show up as a grid-dependent gradient
        let grad = |n: usize| {
            let sp = sp(n);
            let mut s = State::trivial(sp.grid(), [0.0, 0.0, 1.0], 1.0);
            s.d = defect_pair(sp.grid(), 1.2, 0.3).unwrap();
            let g = crate::dynamics::Kinematics::new(&sp, &s).grad_d_sq;
            (g.integral(), g.max())
        };
        let (coarse, fine) = (grad(64), grad(128));
        assert!((coarse.0 - fine.0).abs() < 1e-4 * fine.0, "{coarse:?} {fine:?}");
        assert!((coarse.1 - fine.1).abs() < 1e-2 * fine.1, "{coarse:?} {fine:?}");
    }

    #[test]
    fn small_cores_rejected() {
        let grid = TorusGrid::square(32);
        assert!(matches!(defect_pair(grid, 1.0, 0.3), Err(Error::Resolution(_))));
    }

    #[test]
    fn random_fields_are_seeded_and_valid() {
        let sp = sp(32);
        let spec = IcSpec::RandomBandlimited {
            kmax: 3,
            amplitude: 0.5,
            director_perturbation: 0.3,
            seed: 7,
            theta0: 1.0,
        };
        let a = make_initial_condition(&spec, &sp, DirectorMode::Constrained, 1.0).unwrap();
        let b = make_initial_condition(&spec, &sp, DirectorMode::Constrained, 1.0).unwrap();
        assert_eq!(a, b);
        assert!((a.u.norm_sq().mean().sqrt() - 0.5).abs() < 1e-12);
        assert!(a.theta.min() >= 1.0);
    }

    #[test]
    fn low_initial_temperature_rejected() {
        let r = make_initial_condition(&IcSpec::Constant { theta0: 0.5 }, &sp(8), DirectorMode::Relaxed, 1.0);
        assert!(matches!(r, Err(Error::ConfigKey { .. })));
    }
}
