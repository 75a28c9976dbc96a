use crate::dynamics::{heat_source_from, ApproximationParams, Kinematics, State};
use crate::error::{Error, Result};
use crate::spectral::Spectral;

/// Energy budget of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    /// `int |u|^2 / 2`.
    pub kinetic: f64,
    /// `int |grad d|^2 / 2`.
    pub potential: f64,
    /// `int theta`.
    pub heat: f64,
    pub total: f64,
    /// `int (S_N : grad u + |Lap d + chi_M(|grad d|^2) d|^2)`.
    pub dissipation_rate: f64,
}

impl EnergyRecord {
    pub fn mechanical(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub fn energies(sp: &Spectral, state: &State, params: &ApproximationParams) -> EnergyRecord {
    energies_with(&Kinematics::new(sp, state), state, params)
}

pub(crate) fn energies_with(kin: &Kinematics, state: &State, params: &ApproximationParams) -> EnergyRecord {
    let kinetic = 0.5 * state.u.norm_sq().integral();
    let potential = 0.5 * kin.grad_d_sq.integral();
    let heat = state.theta.integral();
    EnergyRecord {
        t: state.t,
        kinetic,
        potential,
        heat,
        total: kinetic + potential + heat,
        dissipation_rate: heat_source_from(kin, state, params).integral(),
    }
}

/// Drift of the total energy and closure of the mechanical energy balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    /// `max_t |total(t) - total(0)| / total(0)`.
    pub max_relative_drift: f64,
    /// `max_t |mech(t) - mech(0) + int_0^t dissipation| / scale`, with the
    /// time integral by the trapezoid rule.
    pub balance_residual: f64,
    /// Normalization of `balance_residual`: `max(mech(0), int_0^T dissipation)`.
    pub balance_scale: f64,
    pub tolerance: f64,
    /// Whether the drift exceeds `tolerance`.
    pub flagged: bool,
}

pub fn conservation_drift(records: &[EnergyRecord], tolerance: f64) -> Result<DriftReport> {
    if records.len() < 2 {
        return Err(Error::Usage(format!(
            "conservation drift needs at least two energy records, got {}",
            records.len()
        )));
    }
    let first = records[0];
    let mut drift: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let mut integral = 0.0;
    for pair in records.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        integral += 0.5 * (b.t - a.t) * (a.dissipation_rate + b.dissipation_rate);
        drift = drift.max((b.total - first.total).abs());
        worst = worst.max((b.mechanical() - first.mechanical() + integral).abs());
    }
    let scale = first.mechanical().max(integral);
    let max_relative_drift = drift / first.total.abs();
    let balance_residual = if scale > 0.0 { worst / scale } else { worst };
    Ok(DriftReport {
        max_relative_drift,
        balance_residual,
        balance_scale: scale,
        tolerance,
        flagged: max_relative_drift > tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DirectorField, TorusGrid, VectorField};
    use std::f64::consts::PI;

    fn setup() -> (Spectral, ApproximationParams) {
        let sp = Spectral::for_grid(TorusGrid::square(32));
        let p = ApproximationParams::newtonian(&sp, 1.0);
        (sp, p)
    }

    #[test]
    fn trivial_energies() {
        let (sp, p) = setup();
        let s = State::trivial(sp.grid(), [0.0, 0.0, 1.0], 1.0);
        let e = energies(&sp, &s, &p);
        assert_eq!(e.kinetic, 0.0);
        assert!(e.potential.abs() < 1e-28);
        assert!((e.heat - 4.0 * PI * PI).abs() < 1e-12);
        assert!((e.total - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn shear_and_planar_energies() {
        let (sp, p) = setup();
        let mut s = State::trivial(sp.grid(), [0.0, 0.0, 1.0], 1.0);
        s.u = VectorField::from_fn(sp.grid(), |_, y| [y.sin(), 0.0]);
        assert!((energies(&sp, &s, &p).kinetic - PI * PI).abs() < 1e-12);
        s.u = VectorField::zeros(sp.grid());
        s.d = DirectorField::from_fn(sp.grid(), |x, _| [x.cos(), x.sin(), 0.0]);
        assert!((energies(&sp, &s, &p).potential - 2.0 * PI * PI).abs() < 1e-12);
    }

    fn record(t: f64, kinetic: f64, heat: f64, rate: f64) -> EnergyRecord {
        EnergyRecord {
            t,
            kinetic,
            potential: 0.0,
            heat,
            total: kinetic + heat,
            dissipation_rate: rate,
        }
    }

    #[test]
    fn drift_of_constant_series_is_zero() {
        let r = [record(0.0, 1.0, 2.0, 0.0), record(1.0, 1.0, 2.0, 0.0)];
        let d = conservation_drift(&r, 1e-5).unwrap();
        assert_eq!(d.max_relative_drift, 0.0);
        assert_eq!(d.balance_residual, 0.0);
        assert!(!d.flagged);
        assert!(matches!(conservation_drift(&[], 1e-5), Err(Error::Usage(_))));
    }

    #[test]
    fn injected_heat_fault_is_flagged() {
        // exact exchange k(t) = e^{-t}, heat = 3 - k; then heat scaled by 1.01
        let mut series: Vec<EnergyRecord> = (0..=100)
            .map(|i| {
                let t = i as f64 / 100.0;
                let k = (-t).exp();
                record(t, k, 3.0 - k, k)
            })
            .collect();
        let clean = conservation_drift(&series, 1e-5).unwrap();
        assert!(clean.max_relative_drift < 1e-15);
        assert!(clean.balance_residual < 1e-4);
        for r in series.iter_mut().skip(1) {
            r.heat *= 1.01;
            r.total = r.kinetic + r.heat;
        }
        let bad = conservation_drift(&series, 1e-5).unwrap();
        let frac = series.last().unwrap().heat / 1.01 / 3.0;
        assert!(bad.flagged);
        assert!((bad.max_relative_drift - 0.01 * frac).abs() < 2e-3);
    }
}
