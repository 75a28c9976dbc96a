//! Numerical checks of the energy identities, entropy inequality, maximum
//! principles, weak formulation, energy concentration and functional
//! inequalities along trajectories.
//!
//! Space integrals are grid sums times the cell area; time integrals use the
//! trapezoid rule; time derivatives use three-point differences of stored
//! snapshots.

mod bounds;
mod concentration;
mod energy;
mod entropy;
mod inequalities;
mod weak;

use std::collections::VecDeque;

pub use bounds::{
    cutoff_energy_bound_check, maximum_principle_check, CutoffBoundReport, MaxPrincipleReport,
    ThetaGradientAccumulator, ThetaGradientReport, MAX_PRINCIPLE_TOLERANCE,
};
pub use concentration::{
    energy_density, horizon_estimate, horizon_formula, local_energy_sup, ConcentrationReport, HorizonEstimate,
};
pub use energy::{conservation_drift, energies, DriftReport, EnergyRecord};
pub use entropy::{entropy_residual, entropy_residual_at, three_point_derivative, EntropyConfig, EntropyStats};
pub use inequalities::{
    inequality_ratio, korn_ratio, InequalityKind, InequalityReport, LadyzhenskayaAccumulator, KORN_CALIBRATION,
    LADYZHENSKAYA_CALIBRATION,
};
pub use weak::{
    default_bank, weak_form_residual, TestFunction, TimeBump, WeakFormAccumulator, WeakResidual,
    TEST_DIVERGENCE_TOLERANCE,
};

pub(crate) use concentration::{energy_density_with, sup_of_density};
pub(crate) use energy::energies_with;

use crate::dynamics::{ApproximationParams, Kinematics, State};
use crate::error::Result;
use crate::spectral::Spectral;
use crate::stepper::{RunObserver, StepReport};

/// Bit set in [`DiagnosticsRecord::flags`] when a maximum principle fails.
pub const FLAG_MAX_PRINCIPLE: u32 = 1;
/// Bit set when any monitored radius reaches `eps0^2`.
pub const FLAG_CONCENTRATION: u32 = 2;
/// Bit set when some node has entropy residual below `-tolerance`.
pub const FLAG_ENTROPY: u32 = 4;

/// What the collector evaluates at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSettings {
    pub entropy: EntropyConfig,
    /// Monitor radii for local energy suprema.
    pub radii: Vec<f64>,
    pub eps0: f64,
    pub theta_floor: f64,
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub heat: f64,
    pub total: f64,
    pub dissipation_rate: f64,
    pub min_theta: f64,
    pub max_d_norm_dev: f64,
    /// Minimum entropy residual per configured exponent.
    pub entropy_min_res: Vec<f64>,
    /// Local energy supremum per configured radius.
    pub local_energy_sup: Vec<f64>,
    pub flags: u32,
}

impl DiagnosticsRecord {
    pub fn energy(&self) -> EnergyRecord {
        EnergyRecord {
            t: self.t,
            kinetic: self.kinetic,
            potential: self.potential,
            heat: self.heat,
            total: self.total,
            dissipation_rate: self.dissipation_rate,
        }
    }
}

struct Pending {
    state: State,
    inputs: Option<entropy::EntropyInputs>,
    record: DiagnosticsRecord,
}

/// Run observer that turns samples into [`DiagnosticsRecord`]s.
///
/// Entropy columns need the neighbouring samples, so each record is
/// finalized one sample late (the first and last use one-sided differences).
pub struct Collector {
    sp: Spectral,
    params: ApproximationParams,
    settings: DiagnosticsSettings,
    window: VecDeque<Pending>,
    seen: usize,
    records: Vec<DiagnosticsRecord>,
    entropy_stats: Vec<Vec<EntropyStats>>,
    weak: Option<WeakFormAccumulator>,
}

impl Collector {
    pub fn new(sp: &Spectral, params: ApproximationParams, settings: DiagnosticsSettings) -> Result<Self> {
        settings.entropy.validate()?;
        for r in &settings.radii {
            sp.ball_integrals(&crate::grid::ScalarField::zeros(sp.grid()), *r)?;
        }
        Ok(Self {
            sp: sp.clone(),
            params,
            settings,
            window: VecDeque::new(),
            seen: 0,
            records: Vec::new(),
            entropy_stats: Vec::new(),
            weak: None,
        })
    }

    /// Also accumulates weak-form residuals over the sampled states.
    pub fn with_weak_form(mut self, bank: Vec<TestFunction>) -> Result<Self> {
        self.weak = Some(WeakFormAccumulator::new(&self.sp, self.params, bank)?);
        Ok(self)
    }

    pub fn settings(&self) -> &DiagnosticsSettings {
        &self.settings
    }

    /// Records finalized so far.
    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn weak_residuals(&self) -> Option<Vec<WeakResidual>> {
        self.weak.as_ref().map(|w| w.residuals())
    }

    /// Full entropy statistics per finalized record, one entry per exponent.
    pub fn entropy_stats(&self) -> &[Vec<EntropyStats>] {
        &self.entropy_stats
    }

    /// Adds a sampled state.
    pub fn push(&mut self, state: &State) -> Result<()> {
        let kin = Kinematics::new(&self.sp, state);
        let e = energy::energies_with(&kin, state, &self.params);
        let density = energy_density_with(&kin, state);
        let mut flags = 0;
        let mut sups = Vec::with_capacity(self.settings.radii.len());
        for r in &self.settings.radii {
            let rep = sup_of_density(&self.sp, &density, state.t, *r, self.settings.eps0)?;
            if rep.flagged {
                flags |= FLAG_CONCENTRATION;
            }
            sups.push(rep.value);
        }
        if !maximum_principle_check(state, self.settings.theta_floor).passed() {
            flags |= FLAG_MAX_PRINCIPLE;
        }
        let positive = entropy::check_positive(&[state]).is_ok();
        let record = DiagnosticsRecord {
            t: state.t,
            kinetic: e.kinetic,
            potential: e.potential,
            heat: e.heat,
            total: e.total,
            dissipation_rate: e.dissipation_rate,
            min_theta: state.theta.min(),
            max_d_norm_dev: state.d.max_unit_deviation(),
            entropy_min_res: vec![f64::NAN; self.settings.entropy.alphas.len()],
            local_energy_sup: sups,
            flags,
        };
        let inputs = positive.then(|| entropy::EntropyInputs::new(&kin, state, &self.params));
        if let Some(w) = self.weak.as_mut() {
            w.push(state)?;
        }
        self.window.push_back(Pending {
            state: state.clone(),
            inputs,
            record,
        });
        self.seen += 1;
        if self.window.len() == 4 {
            self.window.pop_front();
        }
        if self.window.len() == 3 {
            if self.seen == 3 {
                self.finalize(0);
            }
            self.finalize(1);
        }
        Ok(())
    }

    fn finalize(&mut self, at: usize) {
        let w = &self.window;
        let mut rec = w[at].record.clone();
        let mut stats = Vec::new();
        if let Some(inputs) = &w[at].inputs {
            let states = [&w[0].state, &w[1].state, &w[2].state];
            let usable = w.iter().all(|p| p.inputs.is_some()) && states[0].t < states[1].t && states[1].t < states[2].t;
            if usable {
                for (k, alpha) in self.settings.entropy.alphas.iter().enumerate() {
                    let field = entropy::residual_field(&self.sp, states, at, inputs, *alpha);
                    let st = entropy::stats(&field, *alpha, states[at].t, self.settings.entropy.tolerance);
                    if st.negative_fraction > 0.0 {
                        rec.flags |= FLAG_ENTROPY;
                    }
                    rec.entropy_min_res[k] = st.min;
                    stats.push(st);
                }
            }
        }
        self.records.push(rec);
        self.entropy_stats.push(stats);
    }

    /// Flushes the remaining samples and returns all records.
    pub fn finish(mut self) -> Vec<DiagnosticsRecord> {
        self.flush();
        self.records
    }

    /// Finalizes the trailing records in place; later pushes start afresh.
    pub fn flush(&mut self) {
        if self.seen >= 3 {
            self.finalize(2);
        } else {
            for k in 0..self.window.len() {
                self.records.push(self.window[k].record.clone());
                self.entropy_stats.push(Vec::new());
            }
        }
        self.window.clear();
        self.seen = 0;
    }
}

impl RunObserver for Collector {
    fn on_sample(&mut self, _step: usize, state: &State, _report: Option<&StepReport>) -> Result<()> {
        self.push(state)
    }
}
