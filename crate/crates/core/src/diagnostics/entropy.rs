use crate::dynamics::{heat_source_from, ApproximationParams, Kinematics, State};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::spectral::Spectral;

/// Exponents `alpha` of `theta^alpha` to test, and the sign tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyConfig {
    pub alphas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.25, 0.5, 0.75],
            tolerance: 1e-6,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::key("alphas", format!("exponents must lie in (0, 1), got {a}")));
        }
        Ok(())
    }
}

/// Node statistics of the entropy residual at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyStats {
    pub alpha: f64,
    pub t: f64,
    pub min: f64,
    pub mean: f64,
    pub max_abs: f64,
    /// Fraction of nodes with residual below `-tolerance`.
    pub negative_fraction: f64,
}

/// Weights `w` with `f'(ts[at]) ~ sum w_i f(ts[i])` (quadratic interpolation).
pub fn three_point_derivative(ts: [f64; 3], at: usize) -> [f64; 3] {
    let t = ts[at];
    let mut w = [0.0; 3];
    for j in 0..3 {
        let mut acc = 0.0;
        for m in (0..3).filter(|&m| m != j) {
            let mut prod = 1.0 / (ts[j] - ts[m]);
            for l in (0..3).filter(|&l| l != j && l != m) {
                prod *= (t - ts[l]) / (ts[j] - ts[l]);
            }
            acc += prod;
        }
        w[j] = acc;
    }
    w
}

/// Per-state quantities shared by all exponents.
#[derive(Debug, Clone)]
pub(crate) struct EntropyInputs {
    heat_source: ScalarField,
    grad_theta_sq: ScalarField,
}

impl EntropyInputs {
    pub(crate) fn new(kin: &Kinematics, state: &State, params: &ApproximationParams) -> Self {
        let (gx, gy) = (&kin.grad_theta[0], &kin.grad_theta[1]);
        Self {
            heat_source: heat_source_from(kin, state, params),
            grad_theta_sq: gx.mul(gx).add(&gy.mul(gy)),
        }
    }
}

pub(crate) fn check_positive(states: &[&State]) -> Result<()> {
    for s in states {
        let m = s.theta.min();
        if !(m > 0.0) {
            return Err(Error::Positivity { min_theta: m });
        }
    }
    Ok(())
}

/// Residual field at `window[at]` of
/// `d_t theta^a + div(u theta^a) - Lap theta^a - a theta^(a-1) Q - a(1-a) theta^(a-2) |grad theta|^2`.
pub(crate) fn residual_field(
    sp: &Spectral,
    window: [&State; 3],
    at: usize,
    inputs: &EntropyInputs,
    alpha: f64,
) -> ScalarField {
    let w = three_point_derivative(window.map(|s| s.t), at);
    let powered: Vec<ScalarField> = window.iter().map(|s| s.theta.map(|v| v.powf(alpha))).collect();
    let s = window[at];
    let f = &powered[at];
    let flux = VectorField::new(s.u.x.mul(f), s.u.y.mul(f));
    let div = sp.divergence(&flux);
    let lap = sp.laplacian(f);
    let th = s.theta.values();
    let (q, g2) = (inputs.heat_source.values(), inputs.grad_theta_sq.values());
    let (p0, p1, p2) = (powered[0].values(), powered[1].values(), powered[2].values());
    let (dv, lv) = (div.values(), lap.values());
    ScalarField::from_index_fn(s.grid(), |i| {
        let dt = w[0] * p0[i] + w[1] * p1[i] + w[2] * p2[i];
        let source = alpha * th[i].powf(alpha - 1.0) * q[i];
        let gradient = alpha * (1.0 - alpha) * th[i].powf(alpha - 2.0) * g2[i];
        dt + dv[i] - lv[i] - source - gradient
    })
}

pub(crate) fn stats(field: &ScalarField, alpha: f64, t: f64, tolerance: f64) -> EntropyStats {
    let v = field.values();
    let negative = v.iter().filter(|r| **r < -tolerance).count();
    EntropyStats {
        alpha,
        t,
        min: field.min(),
        mean: field.mean(),
        max_abs: field.max_abs(),
        negative_fraction: negative as f64 / v.len() as f64,
    }
}

/// Entropy residual at the middle of three consecutive snapshots.
pub fn entropy_residual(
    sp: &Spectral,
    window: [&State; 3],
    params: &ApproximationParams,
    alpha: f64,
    tolerance: f64,
) -> Result<EntropyStats> {
    entropy_residual_at(sp, window, 1, params, alpha, tolerance)
}

/// Entropy residual at `window[at]`, one-sided when `at` is 0 or 2.
pub fn entropy_residual_at(
    sp: &Spectral,
    window: [&State; 3],
    at: usize,
    params: &ApproximationParams,
    alpha: f64,
    tolerance: f64,
) -> Result<EntropyStats> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "entropy exponent must lie in (0, 1), got {alpha}"
        )));
    }
    if !(window[0].t < window[1].t && window[1].t < window[2].t) {
        return Err(Error::Usage("entropy window times must be strictly increasing".into()));
    }
    check_positive(&window)?;
    let s = window[at];
    let kin = Kinematics::new(sp, s);
    let inputs = EntropyInputs::new(&kin, s, params);
    let field = residual_field(sp, window, at, &inputs, alpha);
    Ok(stats(&field, alpha, s.t, tolerance))
}
