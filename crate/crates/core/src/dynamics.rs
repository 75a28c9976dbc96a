//! Right-hand sides of the approximate liquid crystal system.
//!
//! With velocity `u`, director `d`, temperature `theta`:
//!
//! ```text
//! u_t + (u.grad)u + grad p = div(S_N - grad d (.) grad d),   div u = 0
//! d_t + (u.grad)d          = Lap d + chi_M(|grad d|^2) d
//! theta_t + u.grad theta   = Lap theta + S_N : grad u + |Lap d + chi_M(|grad d|^2) d|^2
//! S_N = mu(theta)(grad u + grad u^T) + (1/N) |grad u|^(2/9) grad u
//! ```
//!
//! `M = inf` turns the cutoff into the identity and `N = inf` removes the
//! power-law stress, giving back the unregularized system. Tensor index
//! convention: `(grad u)_{ij} = d_j u_i`, `div(A)_i = d_j A_{ij}`.
//!
//! Every nonlinear product is dealiased before it enters spectral space.

use crate::error::{Error, Result};
use crate::grid::{DirectorField, ScalarField, TorusGrid, VectorField};
use crate::spectral::{Spectral, SpectralField};

/// Temperature-dependent viscosity family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityFamily {
    /// `mu = mu_upper` (and `mu_lower == mu_upper`).
    Constant,
    /// `mu = clamp(intercept + slope * theta, mu_lower, mu_upper)`.
    AffineClamped { intercept: f64, slope: f64 },
    /// `mu = mu_lower + (mu_upper - mu_lower) / (1 + theta / theta_ref)`.
    RationalBounded { theta_ref: f64 },
}

/// Continuous viscosity law with `0 < mu_lower <= mu(theta) <= mu_upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityModel {
    family: ViscosityFamily,
    mu_lower: f64,
    mu_upper: f64,
}

impl ViscosityModel {
    pub fn constant(mu: f64) -> Result<Self> {
        Self::new(ViscosityFamily::Constant, mu, mu)
    }

    pub fn affine_clamped(mu_lower: f64, mu_upper: f64, intercept: f64, slope: f64) -> Result<Self> {
        Self::new(ViscosityFamily::AffineClamped { intercept, slope }, mu_lower, mu_upper)
    }

    pub fn rational_bounded(mu_lower: f64, mu_upper: f64, theta_ref: f64) -> Result<Self> {
        if !(theta_ref > 0.0 && theta_ref.is_finite()) {
            return Err(Error::key("theta_ref", "must be positive and finite"));
        }
        Self::new(ViscosityFamily::RationalBounded { theta_ref }, mu_lower, mu_upper)
    }

    pub fn new(family: ViscosityFamily, mu_lower: f64, mu_upper: f64) -> Result<Self> {
        if !(mu_lower > 0.0 && mu_lower.is_finite()) {
            return Err(Error::key("mu_lower", format!("must be positive, got {mu_lower}")));
        }
        if !(mu_upper >= mu_lower && mu_upper.is_finite()) {
            return Err(Error::key(
                "mu_upper",
                format!("must be finite and at least mu_lower = {mu_lower}, got {mu_upper}"),
            ));
        }
        if family == ViscosityFamily::Constant && mu_upper != mu_lower {
            return Err(Error::key("mu_upper", "constant viscosity needs mu_lower == mu_upper"));
        }
        if let ViscosityFamily::AffineClamped { intercept, slope } = family {
            if !(intercept.is_finite() && slope.is_finite()) {
                return Err(Error::key("mu_slope", "affine coefficients must be finite"));
            }
        }
        Ok(Self {
            family,
            mu_lower,
            mu_upper,
        })
    }

    pub fn family(&self) -> ViscosityFamily {
        self.family
    }

    pub fn mu_lower(&self) -> f64 {
        self.mu_lower
    }

    pub fn mu_upper(&self) -> f64 {
        self.mu_upper
    }

    pub fn is_constant(&self) -> bool {
        self.family == ViscosityFamily::Constant
    }

    pub fn mu(&self, theta: f64) -> f64 {
        match self.family {
            ViscosityFamily::Constant => self.mu_upper,
            ViscosityFamily::AffineClamped { intercept, slope } => {
                (intercept + slope * theta).clamp(self.mu_lower, self.mu_upper)
            }
            ViscosityFamily::RationalBounded { theta_ref } => {
                let t = theta.max(0.0);
                self.mu_lower + (self.mu_upper - self.mu_lower) / (1.0 + t / theta_ref)
            }
        }
    }
}

/// The three approximation knobs `(n, M, N)` plus the viscosity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationParams {
    /// Galerkin truncation radius.
    pub n: usize,
    /// Cutoff level `M`; `f64::INFINITY` disables the cutoff.
    pub cutoff: f64,
    /// Power-law strength `N`; `f64::INFINITY` removes the term.
    pub regularization: f64,
    pub viscosity: ViscosityModel,
}

impl ApproximationParams {
    pub fn new(n: usize, cutoff: f64, regularization: f64, viscosity: ViscosityModel) -> Result<Self> {
        if !(cutoff > 0.0) {
            return Err(Error::key("M", format!("must be positive, got {cutoff}")));
        }
        if !(regularization > 0.0) {
            return Err(Error::key("N", format!("must be positive, got {regularization}")));
        }
        Ok(Self {
            n,
            cutoff,
            regularization,
            viscosity,
        })
    }

    /// Unregularized system with constant viscosity on `spectral`'s band.
    pub fn newtonian(spectral: &Spectral, mu: f64) -> Self {
        Self {
            n: spectral.truncation(),
            cutoff: f64::INFINITY,
            regularization: f64::INFINITY,
            viscosity: ViscosityModel::constant(mu).expect("positive viscosity"),
        }
    }

    pub fn with_cutoff(mut self, m: f64) -> Self {
        self.cutoff = m;
        self
    }

    pub fn with_regularization(mut self, n: f64) -> Self {
        self.regularization = n;
        self
    }

    pub fn has_power_law(&self) -> bool {
        self.regularization.is_finite()
    }

    /// Checks that `spectral` realizes this truncation radius.
    pub fn check_spectral(&self, spectral: &Spectral) -> Result<()> {
        if spectral.truncation() != self.n {
            return Err(Error::key(
                "n",
                format!(
                    "operators built for n = {} but parameters ask for n = {}",
                    spectral.truncation(),
                    self.n
                ),
            ));
        }
        Ok(())
    }
}

/// Whether the director is renormalized to unit length after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectorMode {
    Relaxed,
    Constrained,
}

impl DirectorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DirectorMode::Relaxed => "relaxed",
            DirectorMode::Constrained => "constrained",
        }
    }
}

/// Fields `(u, d, theta, p)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: VectorField,
    pub d: DirectorField,
    pub theta: ScalarField,
    pub p: ScalarField,
    pub t: f64,
}

impl State {
    /// `u = 0`, uniform director, uniform temperature.
    pub fn trivial(grid: TorusGrid, director: [f64; 3], theta: f64) -> Self {
        Self {
            u: VectorField::zeros(grid),
            d: DirectorField::constant(grid, director),
            theta: ScalarField::constant(grid, theta),
            p: ScalarField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.theta.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.d.is_finite() && self.theta.is_finite() && self.p.is_finite()
    }

    /// Name of the first field holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.u.is_finite() {
            Some("u")
        } else if !self.d.is_finite() {
            Some("d")
        } else if !self.theta.is_finite() {
            Some("theta")
        } else if !self.p.is_finite() {
            Some("p")
        } else {
            None
        }
    }
}

/// 2x2 tensor field; `c[i][j]` is the `(i, j)` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2Field {
    pub c: [[ScalarField; 2]; 2],
}

impl Tensor2Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        let z = || ScalarField::zeros(grid);
        Self {
            c: [[z(), z()], [z(), z()]],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.c[i][j]
    }

    /// Entry-wise values at flat node `idx`.
    pub fn at(&self, idx: usize) -> [[f64; 2]; 2] {
        [
            [self.c[0][0].values()[idx], self.c[0][1].values()[idx]],
            [self.c[1][0].values()[idx], self.c[1][1].values()[idx]],
        ]
    }

    pub fn trace(&self) -> ScalarField {
        self.c[0][0].add(&self.c[1][1])
    }

    /// Pointwise `A : B = sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &Self) -> ScalarField {
        let mut acc = ScalarField::zeros(self.c[0][0].grid());
        for i in 0..2 {
            for j in 0..2 {
                acc = acc.add(&self.c[i][j].mul(&other.c[i][j]));
            }
        }
        acc
    }

    fn from_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> f64 + Sync + Send,
    {
        let f = &f;
        let entry = |i: usize, j: usize| ScalarField::from_index_fn(grid, move |idx| f(i, j, idx));
        Self {
            c: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
        }
    }
}

/// Strain, regularized stress and elastic (Ericksen) stress.
#[derive(Debug, Clone, PartialEq)]
pub struct StressTensors {
    /// `grad u + grad u^T`.
    pub strain: Tensor2Field,
    /// `mu(theta) strain + (1/N)|grad u|^(2/9) grad u`.
    pub s_n: Tensor2Field,
    /// `-grad d (.) grad d`, entry `(i, j) = -d_i d . d_j d`.
    pub sigma_nd: Tensor2Field,
}

/// Saturating cutoff `chi_M(s) = min(s, M)` for `s >= 0`.
pub fn chi_cutoff(s: f64, m: f64) -> Result<f64> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::Domain(format!("cutoff argument must be nonnegative, got {s}")));
    }
    Ok(chi(s, m))
}

#[inline]
fn chi(s: f64, m: f64) -> f64 {
    if s <= m {
        s
    } else {
        m
    }
}

/// Spectral derivatives of a state shared by all right-hand sides.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub u_hat: [SpectralField; 2],
    /// `grad_u.c[i][j] = d_j u_i`.
    pub grad_u: Tensor2Field,
    pub d_hat: [SpectralField; 3],
    /// `grad_d[k][j] = d_j d_k`.
    pub grad_d: [[ScalarField; 2]; 3],
    pub lap_d: [ScalarField; 3],
    /// `|grad d|^2`.
    pub grad_d_sq: ScalarField,
    pub theta_hat: SpectralField,
    pub grad_theta: [ScalarField; 2],
    pub lap_theta: ScalarField,
}

impl Kinematics {
    pub fn new(sp: &Spectral, state: &State) -> Self {
        let f = sp.forward_many(&[
            &state.u.x,
            &state.u.y,
            &state.d.c[0],
            &state.d.c[1],
            &state.d.c[2],
            &state.theta,
        ]);
        let [ux, uy, d0, d1, d2, th]: [SpectralField; 6] = f.try_into().expect("six transforms");
        let derivs = [
            sp.dx(&ux),
            sp.dy(&ux),
            sp.dx(&uy),
            sp.dy(&uy),
            sp.dx(&d0),
            sp.dy(&d0),
            sp.dx(&d1),
            sp.dy(&d1),
            sp.dx(&d2),
            sp.dy(&d2),
            sp.laplacian_hat(&d0),
            sp.laplacian_hat(&d1),
            sp.laplacian_hat(&d2),
            sp.dx(&th),
            sp.dy(&th),
            sp.laplacian_hat(&th),
        ];
        let refs: Vec<&SpectralField> = derivs.iter().collect();
        let mut phys = sp.inverse_many(&refs).into_iter();
        let mut next = || phys.next().expect("derivative count");
        let grad_u = Tensor2Field {
            c: [[next(), next()], [next(), next()]],
        };
        let grad_d = [[next(), next()], [next(), next()], [next(), next()]];
        let lap_d = [next(), next(), next()];
        let grad_theta = [next(), next()];
        let lap_theta = next();
        let g = &grad_d;
        let grad_d_sq = ScalarField::from_index_fn(state.grid(), |i| {
            g.iter()
                .map(|row| row[0].values()[i].powi(2) + row[1].values()[i].powi(2))
                .sum()
        });
        Self {
            u_hat: [ux, uy],
            grad_u,
            d_hat: [d0, d1, d2],
            grad_d,
            lap_d,
            grad_d_sq,
            theta_hat: th,
            grad_theta,
            lap_theta,
        }
    }

    /// `chi_M(|grad d|^2)` at every node.
    pub fn cutoff_field(&self, m: f64) -> ScalarField {
        self.grad_d_sq.map(|s| chi(s, m))
    }

    /// Director tension `Lap d + chi_M(|grad d|^2) d`.
    pub fn tension(&self, d: &DirectorField, m: f64) -> [ScalarField; 3] {
        let chi_f = self.cutoff_field(m);
        [0, 1, 2].map(|k| {
            let (l, dk, c) = (self.lap_d[k].values(), d.c[k].values(), chi_f.values());
            ScalarField::from_index_fn(d.grid(), |i| l[i] + c[i] * dk[i])
        })
    }
}

fn strain_of(grad_u: &Tensor2Field) -> Tensor2Field {
    let grid = grad_u.c[0][0].grid();
    Tensor2Field::from_fn(grid, |i, j, idx| {
        grad_u.c[i][j].values()[idx] + grad_u.c[j][i].values()[idx]
    })
}

fn frobenius(g: &[[f64; 2]; 2]) -> f64 {
    (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]).sqrt()
}

/// Stress entry `(i, j)` at node `idx` given `mu` and the velocity gradient.
#[inline]
fn stress_entry(mu: f64, inv_n: f64, g: &[[f64; 2]; 2], i: usize, j: usize) -> f64 {
    let viscous = mu * (g[i][j] + g[j][i]);
    if inv_n == 0.0 {
        viscous
    } else {
        viscous + inv_n * frobenius(g).powf(2.0 / 9.0) * g[i][j]
    }
}

fn inv_regularization(params: &ApproximationParams) -> f64 {
    if params.has_power_law() {
        1.0 / params.regularization
    } else {
        0.0
    }
}

fn stresses_from(kin: &Kinematics, state: &State, params: &ApproximationParams) -> StressTensors {
    let grid = state.grid();
    let inv_n = inv_regularization(params);
    let th = state.theta.values();
    let visc = params.viscosity;
    let strain = strain_of(&kin.grad_u);
    let s_n = Tensor2Field::from_fn(grid, |i, j, idx| {
        let g = kin.grad_u.at(idx);
        stress_entry(visc.mu(th[idx]), inv_n, &g, i, j)
    });
    let gd = &kin.grad_d;
    let sigma_nd = Tensor2Field::from_fn(grid, |i, j, idx| {
        -(0..3)
            .map(|k| gd[k][i].values()[idx] * gd[k][j].values()[idx])
            .sum::<f64>()
    });
    StressTensors { strain, s_n, sigma_nd }
}

/// Strain, regularized stress and elastic stress of a state.
pub fn assemble_stress(sp: &Spectral, state: &State, params: &ApproximationParams) -> StressTensors {
    stresses_from(&Kinematics::new(sp, state), state, params)
}

/// `Lap d + chi_M(|grad d|^2) d - (u.grad) d`, dealiased.
pub fn director_rhs(sp: &Spectral, state: &State, params: &ApproximationParams) -> DirectorField {
    let kin = Kinematics::new(sp, state);
    let explicit = director_explicit(sp, &kin, state, params);
    let total: Vec<SpectralField> = (0..3)
        .map(|k| sp.laplacian_hat(&kin.d_hat[k]).add(&explicit[k]))
        .collect();
    let mut phys = sp.inverse_many(&total.iter().collect::<Vec<_>>()).into_iter();
    DirectorField::new([0, 1, 2].map(|_| phys.next().unwrap()))
}

/// Spectral `chi_M(|grad d|^2) d - (u.grad) d`, dealiased.
pub(crate) fn director_explicit(
    sp: &Spectral,
    kin: &Kinematics,
    state: &State,
    params: &ApproximationParams,
) -> [SpectralField; 3] {
    let grid = state.grid();
    let (ux, uy) = (state.u.x.values(), state.u.y.values());
    let s = kin.grad_d_sq.values();
    let m = params.cutoff;
    let fields = [0, 1, 2].map(|k| {
        let (dk, gx, gy) = (
            state.d.c[k].values(),
            kin.grad_d[k][0].values(),
            kin.grad_d[k][1].values(),
        );
        ScalarField::from_index_fn(grid, |i| chi(s[i], m) * dk[i] - (ux[i] * gx[i] + uy[i] * gy[i]))
    });
    let mut hats = sp.forward_many(&[&fields[0], &fields[1], &fields[2]]);
    hats.iter_mut().for_each(|h| sp.dealias(h));
    hats.try_into().expect("three components")
}

/// Elastic body force `-(grad d)^T Lap d`, i.e. `F_j = -sum_k Lap d_k d_j d_k`.
fn elastic_force(kin: &Kinematics, grid: TorusGrid) -> [ScalarField; 2] {
    [0, 1].map(|j| {
        ScalarField::from_index_fn(grid, |i| {
            -(0..3)
                .map(|k| kin.lap_d[k].values()[i] * kin.grad_d[k][j].values()[i])
                .sum::<f64>()
        })
    })
}

/// Spectral divergence of a tensor field, each entry dealiased first.
fn tensor_divergence(sp: &Spectral, t: &Tensor2Field) -> [SpectralField; 2] {
    let mut h = sp.forward_many(&[&t.c[0][0], &t.c[0][1], &t.c[1][0], &t.c[1][1]]);
    h.iter_mut().for_each(|x| sp.dealias(x));
    [sp.dx(&h[0]).add(&sp.dy(&h[1])), sp.dx(&h[2]).add(&sp.dy(&h[3]))]
}

/// Projected momentum forcing, minus `mu_split * Lap u` when `mu_split > 0`.
pub(crate) fn momentum_explicit(
    sp: &Spectral,
    kin: &Kinematics,
    state: &State,
    params: &ApproximationParams,
    mu_split: f64,
) -> [SpectralField; 2] {
    let grid = state.grid();
    let inv_n = inv_regularization(params);
    let th = state.theta.values();
    let visc = params.viscosity;
    let defect = Tensor2Field::from_fn(grid, |i, j, idx| {
        let g = kin.grad_u.at(idx);
        stress_entry(visc.mu(th[idx]) - mu_split, inv_n, &g, i, j)
    });
    let div_s = tensor_divergence(sp, &defect);
    let force = elastic_force(kin, grid);
    let (ux, uy) = (state.u.x.values(), state.u.y.values());
    let g = &kin.grad_u;
    let body = [0, 1].map(|c| {
        let f = force[c].values();
        let (gx, gy) = (g.c[c][0].values(), g.c[c][1].values());
        ScalarField::from_index_fn(grid, |i| f[i] - (ux[i] * gx[i] + uy[i] * gy[i]))
    });
    let (mut bx, mut by) = sp.forward_pair(&body[0], &body[1]);
    sp.dealias(&mut bx);
    sp.dealias(&mut by);
    let (px, py) = sp.leray_hat(&div_s[0].add(&bx), &div_s[1].add(&by));
    [px, py]
}

fn to_vector(sp: &Spectral, h: &[SpectralField; 2]) -> VectorField {
    let (x, y) = sp.inverse_pair(&h[0], &h[1]);
    VectorField::new(x, y)
}

/// `P[div(S_N + sigma_nd) - (u.grad)u]`, with the elastic part evaluated as
/// `-(grad d)^T Lap d` (the gradient remainder is absorbed by the projection).
pub fn momentum_rhs(sp: &Spectral, state: &State, params: &ApproximationParams) -> VectorField {
    let kin = Kinematics::new(sp, state);
    to_vector(sp, &momentum_explicit(sp, &kin, state, params, 0.0))
}

/// Same as [`momentum_rhs`] but with the elastic stress differentiated
/// directly as `div sigma_nd`.
pub fn momentum_rhs_stress_form(sp: &Spectral, state: &State, params: &ApproximationParams) -> VectorField {
    let kin = Kinematics::new(sp, state);
    let st = stresses_from(&kin, state, params);
    let grid = state.grid();
    let total = Tensor2Field::from_fn(grid, |i, j, idx| {
        st.s_n.c[i][j].values()[idx] + st.sigma_nd.c[i][j].values()[idx]
    });
    let div = tensor_divergence(sp, &total);
    let (ux, uy) = (state.u.x.values(), state.u.y.values());
    let g = &kin.grad_u;
    let adv = [0, 1].map(|c| {
        let (gx, gy) = (g.c[c][0].values(), g.c[c][1].values());
        ScalarField::from_index_fn(grid, |i| -(ux[i] * gx[i] + uy[i] * gy[i]))
    });
    let (mut ax, mut ay) = sp.forward_pair(&adv[0], &adv[1]);
    sp.dealias(&mut ax);
    sp.dealias(&mut ay);
    let (px, py) = sp.leray_hat(&div[0].add(&ax), &div[1].add(&ay));
    to_vector(sp, &[px, py])
}

pub(crate) fn heat_source_from(kin: &Kinematics, state: &State, params: &ApproximationParams) -> ScalarField {
    let grid = state.grid();
    let inv_n = inv_regularization(params);
    let th = state.theta.values();
    let visc = params.viscosity;
    let tension = kin.tension(&state.d, params.cutoff);
    ScalarField::from_index_fn(grid, |idx| {
        let g = kin.grad_u.at(idx);
        let mu = visc.mu(th[idx]);
        let mut power = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                power += stress_entry(mu, inv_n, &g, i, j) * g[i][j];
            }
        }
        let t2: f64 = tension.iter().map(|t| t.values()[idx].powi(2)).sum();
        power + t2
    })
}

/// `S_N : grad u + |Lap d + chi_M(|grad d|^2) d|^2` at every node.
pub fn heat_source(sp: &Spectral, state: &State, params: &ApproximationParams) -> ScalarField {
    heat_source_from(&Kinematics::new(sp, state), state, params)
}

/// Spectral `-u.grad theta + heat source`, dealiased; also returns the
/// physical heat source.
pub(crate) fn temperature_explicit(
    sp: &Spectral,
    kin: &Kinematics,
    state: &State,
    params: &ApproximationParams,
) -> (SpectralField, ScalarField) {
    let q = heat_source_from(kin, state, params);
    let (ux, uy) = (state.u.x.values(), state.u.y.values());
    let (gx, gy) = (kin.grad_theta[0].values(), kin.grad_theta[1].values());
    let qv = q.values();
    let f = ScalarField::from_index_fn(state.grid(), |i| qv[i] - (ux[i] * gx[i] + uy[i] * gy[i]));
    let mut h = sp.forward(&f);
    sp.dealias(&mut h);
    (h, q)
}

/// `Lap theta - u.grad theta + heat source`.
pub fn temperature_rhs(sp: &Spectral, state: &State, params: &ApproximationParams) -> ScalarField {
    let kin = Kinematics::new(sp, state);
    let (h, _) = temperature_explicit(sp, &kin, state, params);
    sp.inverse(&sp.laplacian_hat(&kin.theta_hat).add(&h))
}

/// Zero-mean periodic solution of `Lap p = div div(S_N - grad d (.) grad d - u (x) u)`.
pub fn pressure_solve(sp: &Spectral, state: &State, params: &ApproximationParams) -> ScalarField {
    pressure_from(sp, &Kinematics::new(sp, state), state, params)
}

pub(crate) fn pressure_from(
    sp: &Spectral,
    kin: &Kinematics,
    state: &State,
    params: &ApproximationParams,
) -> ScalarField {
    let st = stresses_from(kin, state, params);
    let u = [state.u.x.values(), state.u.y.values()];
    let entry = |i: usize, j: usize| {
        let (s, sg) = (st.s_n.c[i][j].values(), st.sigma_nd.c[i][j].values());
        ScalarField::from_index_fn(state.grid(), move |idx| s[idx] + sg[idx] - u[i][idx] * u[j][idx])
    };
    let txx = entry(0, 0);
    let tyy = entry(1, 1);
    let toff = entry(0, 1).add(&entry(1, 0));
    let mut h = sp.forward_many(&[&txx, &tyy, &toff]);
    h.iter_mut().for_each(|x| sp.dealias(x));
    // div div T = d_x d_x Txx + d_y d_y Tyy + d_x d_y (Txy + Tyx)
    let divdiv = sp
        .dx(&sp.dx(&h[0]))
        .add(&sp.dy(&sp.dy(&h[1])))
        .add(&sp.dx(&sp.dy(&h[2])));
    let p_hat = sp.inverse_laplacian_hat(&divdiv);
    sp.inverse(&p_hat)
}

/// Residual `Lap p - div div(...)` of a candidate pressure, max norm.
pub fn pressure_residual(sp: &Spectral, state: &State, params: &ApproximationParams) -> f64 {
    let kin = Kinematics::new(sp, state);
    let st = stresses_from(&kin, state, params);
    let grid = state.grid();
    let u = [state.u.x.values(), state.u.y.values()];
    let t = Tensor2Field::from_fn(grid, |i, j, idx| {
        st.s_n.c[i][j].values()[idx] + st.sigma_nd.c[i][j].values()[idx] - u[i][idx] * u[j][idx]
    });
    let div = tensor_divergence(sp, &t);
    let divdiv = sp.inverse(&sp.dx(&div[0]).add(&sp.dy(&div[1])));
    sp.laplacian(&state.p).sub(&divdiv).max_abs()
}

/// Minimum `|d|` accepted by [`renormalize_director`].
pub const DEGENERATE_DIRECTOR: f64 = 0.1;

/// `d / |d|` node-wise.
pub fn renormalize_director(d: &DirectorField) -> Result<DirectorField> {
    let norm = d.norm();
    let min = norm.min();
    if !(min > DEGENERATE_DIRECTOR) {
        return Err(Error::DegenerateDirector {
            min_norm: min,
            threshold: DEGENERATE_DIRECTOR,
        });
    }
    Ok(DirectorField::new(
        [0, 1, 2].map(|k| d.c[k].zip_map(&norm, |a, n| a / n)),
    ))
}

/// `|Lap d + |grad d|^2 d|^2` and `(Lap d + |grad d|^2 d) . Lap d`, node-wise.
pub fn unit_tension_pair(sp: &Spectral, d: &DirectorField) -> (ScalarField, ScalarField) {
    let grid = d.grid();
    let state = State {
        u: VectorField::zeros(grid),
        d: d.clone(),
        theta: ScalarField::constant(grid, 1.0),
        p: ScalarField::zeros(grid),
        t: 0.0,
    };
    let kin = Kinematics::new(sp, &state);
    let tension = kin.tension(d, f64::INFINITY);
    let sq = ScalarField::from_index_fn(grid, |i| tension.iter().map(|t| t.values()[i].powi(2)).sum());
    let dot = ScalarField::from_index_fn(grid, |i| {
        (0..3).map(|k| tension[k].values()[i] * kin.lap_d[k].values()[i]).sum()
    });
    (sq, dot)
}

/// Residual of `div(grad d (.) grad d) = grad(|grad d|^2 / 2) + (grad d)^T Lap d`, max norm.
pub fn elastic_identity_residual(sp: &Spectral, d: &DirectorField) -> f64 {
    let grid = d.grid();
    let state = State {
        u: VectorField::zeros(grid),
        d: d.clone(),
        theta: ScalarField::constant(grid, 1.0),
        p: ScalarField::zeros(grid),
        t: 0.0,
    };
    let kin = Kinematics::new(sp, &state);
    let gd = &kin.grad_d;
    let outer = Tensor2Field::from_fn(grid, |i, j, idx| {
        (0..3)
            .map(|k| gd[k][i].values()[idx] * gd[k][j].values()[idx])
            .sum::<f64>()
    });
    // no dealiasing here: the identity is checked on the raw products
    let h: Vec<SpectralField> = [&outer.c[0][0], &outer.c[0][1], &outer.c[1][0], &outer.c[1][1]]
        .iter()
        .map(|f| sp.forward(f))
        .collect();
    let div_x = sp.inverse(&sp.dx(&h[0]).add(&sp.dy(&h[1])));
    let div_y = sp.inverse(&sp.dx(&h[2]).add(&sp.dy(&h[3])));
    let half = kin.grad_d_sq.scaled(0.5);
    let grad_half = sp.gradient(&half);
    let force = elastic_force(&kin, grid);
    // force = -(grad d)^T Lap d
    let rx = div_x.sub(&grad_half.x).add(&force[0]);
    let ry = div_y.sub(&grad_half.y).add(&force[1]);
    rx.max_abs().max(ry.max_abs())
}
