//! Space-time residuals of the two weak-form identities.
//!
//! For a divergence-free test field `phi(x, t)` and a scalar `psi(x, t)`,
//! both compactly supported in time inside `(0, T)`:
//!
//! ```text
//! int int (S_N + sigma_nd - u (x) u) : grad phi - u . phi_t          = 0
//! int int grad theta . grad psi - theta psi_t - (Q - u . grad theta) psi = 0
//! ```
//!
//! with `Q = S_N : grad u + |Lap d + chi_M(|grad d|^2) d|^2`. The time
//! integral is accumulated by the trapezoid rule as snapshots stream in, so
//! no trajectory has to be stored.

use std::f64::consts::PI;

use crate::dynamics::{assemble_stress, heat_source_from, ApproximationParams, Kinematics, State};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid, VectorField};
use crate::spectral::Spectral;

/// Smooth bump `exp(1 - 1/(1 - s^2))` on `(start, end)`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBump {
    pub start: f64,
    pub end: f64,
}

impl TimeBump {
    fn s(&self, t: f64) -> f64 {
        (2.0 * t - self.start - self.end) / (self.end - self.start)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s * s;
        let ds_dt = 2.0 / (self.end - self.start);
        self.value(t) * (-2.0 * s / (q * q)) * ds_dt
    }
}

/// One entry of the bank: `phi = b(t) phi_s(x)`, `psi = b(t) psi_s(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub phi: VectorField,
    pub psi: ScalarField,
    pub bump: TimeBump,
}

impl TestFunction {
    /// `phi = perp grad cos(k.x + phase)`, `psi = cos(k.x + phase)`.
    pub fn trigonometric(grid: TorusGrid, k: [i32; 2], phase: f64, bump: TimeBump) -> Self {
        let (k1, k2) = (k[0] as f64, k[1] as f64);
        Self {
            phi: VectorField::from_fn(grid, |x, y| {
                let s = (k1 * x + k2 * y + phase).sin();
                [-k2 * s, k1 * s]
            }),
            psi: ScalarField::from_fn(grid, |x, y| (k1 * x + k2 * y + phase).cos()),
            bump,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            phi: self.phi.scaled(-1.0),
            psi: self.psi.scaled(-1.0),
            bump: self.bump,
        }
    }
}

/// Eight low-mode test functions with staggered time windows in `(0, t_end)`.
pub fn default_bank(grid: TorusGrid, t_end: f64) -> Vec<TestFunction> {
    let modes: [([i32; 2], f64); 8] = [
        ([1, 0], 0.0),
        ([0, 1], 0.3),
        ([1, 1], 0.0),
        ([1, -1], 0.7),
        ([2, 1], 0.2),
        ([1, 2], 1.1),
        ([0, 2], 0.5),
        ([2, 0], PI / 4.0),
    ];
    let windows = [(0.05, 0.95), (0.1, 0.6), (0.4, 0.9), (0.2, 0.8)];
    modes
        .iter()
        .enumerate()
        .map(|(i, (k, phase))| {
            let (a, b) = windows[i % windows.len()];
            let bump = TimeBump {
                start: a * t_end,
                end: b * t_end,
            };
            TestFunction::trigonometric(grid, *k, *phase, bump)
        })
        .collect()
}

/// Divergence threshold for test fields.
pub const TEST_DIVERGENCE_TOLERANCE: f64 = 1e-10;

/// Signed residuals of one test function. Each scale is the space-time
/// integral of the absolute integrands, so it cannot cancel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeakResidual {
    pub momentum: f64,
    pub momentum_scale: f64,
    pub temperature: f64,
    pub temperature_scale: f64,
}

impl WeakResidual {
    pub fn momentum_relative(&self) -> f64 {
        relative(self.momentum, self.momentum_scale)
    }

    pub fn temperature_relative(&self) -> f64 {
        relative(self.temperature, self.temperature_scale)
    }
}

fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value.abs() / scale
    } else {
        value.abs()
    }
}

/// Term integrals of one snapshot for one test function, each with the
/// integral of its absolute integrand.
#[derive(Debug, Clone, Copy, Default)]
struct Terms {
    // momentum: stress part (times b) and time-derivative part (times b')
    stress: [f64; 2],
    velocity: [f64; 2],
    // temperature: b-weighted parts and b'-weighted part
    diffusion: [f64; 2],
    source: [f64; 2],
    theta: [f64; 2],
    b: f64,
    db: f64,
}

impl Terms {
    /// Signed values and absolute sizes, momentum terms first.
    fn parts(&self) -> [[f64; 2]; 5] {
        let w = |c: f64, t: [f64; 2]| [c * t[0], c.abs() * t[1]];
        [
            w(self.b, self.stress),
            w(-self.db, self.velocity),
            w(self.b, self.diffusion),
            w(-self.db, self.theta),
            w(-self.b, self.source),
        ]
    }
}

/// `[int f, int |f|]`.
fn both(f: &ScalarField) -> [f64; 2] {
    [f.integral(), f.map(f64::abs).integral()]
}

/// Streaming evaluator of the weak-form residuals.
#[derive(Debug, Clone)]
pub struct WeakFormAccumulator {
    sp: Spectral,
    params: ApproximationParams,
    bank: Vec<TestFunction>,
    grad_phi: Vec<[[ScalarField; 2]; 2]>,
    grad_psi: Vec<VectorField>,
    last: Option<(f64, Vec<Terms>)>,
    sums: Vec<[f64; 5]>,
    scales: Vec<[f64; 5]>,
}

impl WeakFormAccumulator {
    pub fn new(sp: &Spectral, params: ApproximationParams, bank: Vec<TestFunction>) -> Result<Self> {
        for (i, f) in bank.iter().enumerate() {
            let div = sp.divergence(&f.phi).max_abs();
            if !(div < TEST_DIVERGENCE_TOLERANCE) {
                return Err(Error::Config(format!(
                    "test function {i} is not divergence-free (max |div| = {div:.3e})"
                )));
            }
            if !(f.bump.end > f.bump.start) {
                return Err(Error::Config(format!("test function {i} has an empty time window")));
            }
        }
        let grad_phi = bank
            .iter()
            .map(|f| {
                let gx = sp.gradient(&f.phi.x);
                let gy = sp.gradient(&f.phi.y);
                [[gx.x, gx.y], [gy.x, gy.y]]
            })
            .collect();
        let grad_psi = bank.iter().map(|f| sp.gradient(&f.psi)).collect();
        let n = bank.len();
        Ok(Self {
            sp: sp.clone(),
            params,
            bank,
            grad_phi,
            grad_psi,
            last: None,
            sums: vec![[0.0; 5]; n],
            scales: vec![[0.0; 5]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.bank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bank.is_empty()
    }

    /// Adds a snapshot; times must increase.
    pub fn push(&mut self, state: &State) -> Result<()> {
        if let Some((t, _)) = &self.last {
            if !(state.t > *t) {
                return Err(Error::Usage(format!(
                    "weak-form snapshots must advance in time ({} after {})",
                    state.t, t
                )));
            }
        }
        let terms = self.terms(state);
        if let Some((t0, prev)) = self.last.take() {
            let h = state.t - t0;
            for (k, (a, b)) in prev.iter().zip(&terms).enumerate() {
                let (pa, pb) = (a.parts(), b.parts());
                for c in 0..5 {
                    self.sums[k][c] += 0.5 * h * (pa[c][0] + pb[c][0]);
                    self.scales[k][c] += 0.5 * h * (pa[c][1] + pb[c][1]);
                }
            }
        }
        self.last = Some((state.t, terms));
        Ok(())
    }

    fn terms(&self, state: &State) -> Vec<Terms> {
        let sp = &self.sp;
        let kin = Kinematics::new(sp, state);
        let st = assemble_stress(sp, state, &self.params);
        let q = heat_source_from(&kin, state, &self.params);
        let u = [&state.u.x, &state.u.y];
        let grid = state.grid();
        // T = S_N + sigma_nd - u (x) u
        let t: Vec<ScalarField> = (0..4)
            .map(|c| {
                let (i, j) = (c / 2, c % 2);
                let (s, g) = (st.s_n.c[i][j].values(), st.sigma_nd.c[i][j].values());
                let (ui, uj) = (u[i].values(), u[j].values());
                ScalarField::from_index_fn(grid, |n| s[n] + g[n] - ui[n] * uj[n])
            })
            .collect();
        let adv_theta = state
            .u
            .x
            .mul(&kin.grad_theta[0])
            .add(&state.u.y.mul(&kin.grad_theta[1]));
        let net_source = q.sub(&adv_theta);
        self.bank
            .iter()
            .zip(self.grad_phi.iter().zip(&self.grad_psi))
            .map(|(f, (gphi, gpsi))| {
                let stress = (1..4).fold(t[0].mul(&gphi[0][0]), |acc, c| acc.add(&t[c].mul(&gphi[c / 2][c % 2])));
                let velocity = state.u.x.mul(&f.phi.x).add(&state.u.y.mul(&f.phi.y));
                let diffusion = kin.grad_theta[0].mul(&gpsi.x).add(&kin.grad_theta[1].mul(&gpsi.y));
                Terms {
                    stress: both(&stress),
                    velocity: both(&velocity),
                    diffusion: both(&diffusion),
                    source: both(&net_source.mul(&f.psi)),
                    theta: both(&state.theta.mul(&f.psi)),
                    b: f.bump.value(state.t),
                    db: f.bump.derivative(state.t),
                }
            })
            .collect()
    }

    /// Residuals per test function, in bank order.
    pub fn residuals(&self) -> Vec<WeakResidual> {
        self.sums
            .iter()
            .zip(&self.scales)
            .map(|(s, w)| WeakResidual {
                momentum: s[0] + s[1],
                momentum_scale: w[0] + w[1],
                temperature: s[2] + s[3] + s[4],
                temperature_scale: w[2] + w[3] + w[4],
            })
            .collect()
    }
}

/// Residuals of a stored trajectory against `bank`.
pub fn weak_form_residual(
    sp: &Spectral,
    params: ApproximationParams,
    trajectory: &[State],
    bank: Vec<TestFunction>,
) -> Result<Vec<WeakResidual>> {
    let mut acc = WeakFormAccumulator::new(sp, params, bank)?;
    for s in trajectory {
        acc.push(s)?;
    }
    Ok(acc.residuals())
}
