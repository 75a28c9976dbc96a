//! Empirical ratios for the localized Ladyzhenskaya inequality
//!
//! ```text
//! int int |u|^4 <= C0 (sup_{x,t} int_{B_R(x)} |u|^2) int int (|grad u|^2 + |u|^2 / R^2)
//! ```
//!
//! and the Korn inequality with `r = 2`,
//!
//! ```text
//! int (|u|^2 + |grad u|^2) <= C int (|grad u + grad u^T|^2 + |u|^2).
//! ```
//!
//! The constants are not constructive, so each ratio is compared against a
//! calibration constant: twice the largest ratio seen on ten seeded random
//! divergence-free fields with modes `|k_i| <= 4` on a 64^2 grid (R = 1 for
//! Ladyzhenskaya). A unit test re-derives both numbers.

use crate::dynamics::State;
use crate::error::Result;
use crate::grid::{ScalarField, VectorField};
use crate::spectral::Spectral;

pub const LADYZHENSKAYA_CALIBRATION: f64 = 9.150_650_162_115_13e-2;
pub const KORN_CALIBRATION: f64 = 1.095_176_378_609_403;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalityKind {
    Ladyzhenskaya,
    Korn,
}

impl InequalityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InequalityKind::Ladyzhenskaya => "ladyzhenskaya",
            InequalityKind::Korn => "korn",
        }
    }

    pub fn calibration(&self) -> f64 {
        match self {
            InequalityKind::Ladyzhenskaya => LADYZHENSKAYA_CALIBRATION,
            InequalityKind::Korn => KORN_CALIBRATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub lhs: f64,
    pub rhs_functional: f64,
    /// `lhs / rhs`; 0 when both vanish, infinite when only `rhs` does.
    pub ratio: f64,
    /// Ball radius (Ladyzhenskaya).
    pub radius: Option<f64>,
    /// Integrability exponent (Korn).
    pub exponent: Option<f64>,
    pub calibration: f64,
    pub within_calibration: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn report(kind: InequalityKind, lhs: f64, rhs: f64, radius: Option<f64>, exponent: Option<f64>) -> InequalityReport {
    let r = ratio(lhs, rhs);
    InequalityReport {
        kind,
        lhs,
        rhs_functional: rhs,
        ratio: r,
        radius,
        exponent,
        calibration: kind.calibration(),
        within_calibration: r <= kind.calibration(),
    }
}

fn gradient_sq(sp: &Spectral, u: &VectorField) -> (ScalarField, [[ScalarField; 2]; 2]) {
    let gx = sp.gradient(&u.x);
    let gy = sp.gradient(&u.y);
    let sq = gx.norm_sq().add(&gy.norm_sq());
    (sq, [[gx.x, gx.y], [gy.x, gy.y]])
}

/// Korn ratio of one velocity field with `r = 2`.
#[allow(clippy::needless_range_loop)]
pub fn korn_ratio(sp: &Spectral, u: &VectorField) -> InequalityReport {
    let (g2, g) = gradient_sq(sp, u);
    let u2 = u.norm_sq();
    let lhs = u2.integral() + g2.integral();
    let mut strain = ScalarField::zeros(u.grid());
    for i in 0..2 {
        for j in 0..2 {
            let e = g[i][j].add(&g[j][i]);
            strain = strain.add(&e.mul(&e));
        }
    }
    let rhs = strain.integral() + u2.integral();
    report(InequalityKind::Korn, lhs, rhs, None, Some(2.0))
}

/// Streaming space-time Ladyzhenskaya ratio over a trajectory.
#[derive(Debug, Clone)]
pub struct LadyzhenskayaAccumulator {
    sp: Spectral,
    radius: f64,
    last: Option<(f64, f64, f64)>,
    quartic: f64,
    gradient: f64,
    sup: f64,
    spans: usize,
}

impl LadyzhenskayaAccumulator {
    pub fn new(sp: &Spectral, radius: f64) -> Result<Self> {
        // validates the radius against the grid
        sp.ball_integrals(&ScalarField::zeros(sp.grid()), radius)?;
        Ok(Self {
            sp: sp.clone(),
            radius,
            last: None,
            quartic: 0.0,
            gradient: 0.0,
            sup: 0.0,
            spans: 0,
        })
    }

    pub fn push(&mut self, state: &State) -> Result<()> {
        let u2 = state.u.norm_sq();
        let (g2, _) = gradient_sq(&self.sp, &state.u);
        let quartic = u2.mul(&u2).integral();
        let r2 = self.radius * self.radius;
        let gradient = g2.integral() + u2.integral() / r2;
        self.sup = self.sup.max(self.sp.ball_integrals(&u2, self.radius)?.max());
        if let Some((t0, q0, g0)) = self.last {
            let h = state.t - t0;
            self.quartic += 0.5 * h * (q0 + quartic);
            self.gradient += 0.5 * h * (g0 + gradient);
            self.spans += 1;
        }
        self.last = Some((state.t, quartic, gradient));
        Ok(())
    }

    /// Ratio over the pushed trajectory; a single snapshot gives the
    /// instantaneous ratio (the time factor cancels).
    pub fn report(&self) -> InequalityReport {
        let (lhs, integral) = match (self.spans, self.last) {
            (0, Some((_, q, g))) => (q, g),
            _ => (self.quartic, self.gradient),
        };
        report(
            InequalityKind::Ladyzhenskaya,
            lhs,
            self.sup * integral,
            Some(self.radius),
            None,
        )
    }
}

/// Ratio of `kind` over a stored trajectory (Korn uses the last state).
pub fn inequality_ratio(
    sp: &Spectral,
    trajectory: &[State],
    kind: InequalityKind,
    radius: f64,
) -> Result<InequalityReport> {
    match kind {
        InequalityKind::Korn => {
            let last = trajectory
                .last()
                .ok_or_else(|| crate::error::Error::Usage("empty trajectory".into()))?;
            Ok(korn_ratio(sp, &last.u))
        }
        InequalityKind::Ladyzhenskaya => {
            let mut acc = LadyzhenskayaAccumulator::new(sp, radius)?;
            for s in trajectory {
                acc.push(s)?;
            }
            Ok(acc.report())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn zero_field_ratio_is_zero() {
        let sp = Spectral::for_grid(TorusGrid::square(32));
        let u = VectorField::zeros(sp.grid());
        let k = korn_ratio(&sp, &u);
        assert_eq!((k.lhs, k.rhs_functional, k.ratio), (0.0, 0.0, 0.0));
        let s = State::trivial(sp.grid(), [0.0, 0.0, 1.0], 1.0);
        let l = inequality_ratio(&sp, &[s], InequalityKind::Ladyzhenskaya, 1.0).unwrap();
        assert_eq!(l.ratio, 0.0);
    }

    #[test]
    fn korn_shear_closed_form() {
        // u = (sin y, 0): lhs = 2 pi^2 + 2 pi^2, rhs = 4 pi^2 + 2 pi^2
        let sp = Spectral::for_grid(TorusGrid::square(32));
        let u = VectorField::from_fn(sp.grid(), |_, y| [y.sin(), 0.0]);
        let k = korn_ratio(&sp, &u);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((k.lhs - 4.0 * pi2).abs() < 1e-10);
        assert!((k.rhs_functional - 6.0 * pi2).abs() < 1e-10);
        assert!((k.ratio - 2.0 / 3.0).abs() < 1e-12);
        assert!(k.ratio < 1.5);
    }
}

#[cfg(test)]
mod calibration {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::initial::random_divergence_free;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Largest Ladyzhenskaya and Korn ratios over the synthetic suite.
    fn suite_maxima() -> (f64, f64) {
        let grid = TorusGrid::square(64);
        let sp = Spectral::for_grid(grid);
        let mut lady: f64 = 0.0;
        let mut korn: f64 = 0.0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = State::trivial(grid, [0.0, 0.0, 1.0], 1.0);
            s.u = random_divergence_free(grid, 4, 1.0, &mut rng);
            lady = lady.max(
                inequality_ratio(&sp, &[s.clone()], InequalityKind::Ladyzhenskaya, 1.0)
                    .unwrap()
                    .ratio,
            );
            korn = korn.max(korn_ratio(&sp, &s.u).ratio);
        }
        (lady, korn)
    }

    #[test]
    fn constants_match_suite() {
        let (lady, korn) = suite_maxima();
        println!("ladyzhenskaya {:.17e} korn {:.17e}", 2.0 * lady, 2.0 * korn);
        assert!((LADYZHENSKAYA_CALIBRATION / (2.0 * lady) - 1.0).abs() < 1e-9);
        assert!((KORN_CALIBRATION / (2.0 * korn) - 1.0).abs() < 1e-9);
    }
}
