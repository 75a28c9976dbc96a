//! INI run configuration.
//!
//! Sections are `[grid] [params] [scheme] [ic] [diagnostics] [output]` (plus
//! `[study]` for study files). Unknown sections and keys are rejected, as are
//! keys that do not apply to the selected viscosity family or initial
//! condition. Every error names its key as `section.key`.
//!
//! [`RunConfig::to_ini`] prints every resolved value, so parsing the printed
//! text gives back the same configuration. `inf` is accepted for `M` and `N`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::diagnostics::{DiagnosticsSettings, EntropyConfig};
use crate::dynamics::{ApproximationParams, DirectorMode, ViscosityFamily, ViscosityModel};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::initial::IcSpec;
use crate::spectral::Spectral;
use crate::stepper::{RunSchedule, Scheme, SchemeConfig};

/// Core radius used for the `eps0` calibration when the initial data has no
/// defects of its own.
pub const DEFAULT_CORE_RADIUS: f64 = 0.3;

/// Monitor radius in grid cells when `r_monitor` is not given.
pub const DEFAULT_MONITOR_CELLS: f64 = 8.0;

/// `int_{|x| < pi} |grad d|^2` for one escaped degree-1 defect
/// `d = (sin b cos phi, sin b sin phi, cos b)`, `b = (pi/2) tanh(r/a)`.
///
/// Radial Simpson quadrature of `2 pi int (b'^2 + sin^2 b / r^2) r dr`.
pub fn single_defect_energy(core_radius: f64) -> f64 {
    let a = core_radius;
    let f = |r: f64| -> f64 {
        let s = (r / a).tanh();
        let db = 0.5 * PI / a * (1.0 - s * s);
        // sin^2 b / r vanishes linearly at the centre
        let angular = if r == 0.0 {
            0.0
        } else {
            (0.5 * PI * s).sin().powi(2) / r
        };
        db * db * r + angular
    };
    let n = 20_000;
    let h = PI / n as f64;
    let mut sum = f(0.0) + f(PI);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    2.0 * PI * sum * h / 3.0
}

/// Default concentration threshold: a tenth of the single-defect energy.
pub fn calibrated_eps0(core_radius: f64) -> f64 {
    0.1 * single_defect_energy(core_radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSection {
    pub sample_stride: usize,
    pub checkpoint_stride: usize,
    pub alphas: Vec<f64>,
    pub entropy_tolerance: f64,
    pub eps0: f64,
    pub r_monitor: f64,
    pub radii: Vec<f64>,
    /// Weak-form residuals over the default test bank.
    pub weak_form: bool,
    /// Restart limit of a continuation run.
    pub max_segments: usize,
    /// Steps between the flagged state and the restart state.
    pub bridge_steps: usize,
    /// Required mechanical energy drop across a flagged window, in units of
    /// `eps0^2`.
    pub drop_fraction: f64,
    /// Allowed change of total energy across a window, relative to the
    /// initial total.
    pub energy_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub diagnostics: String,
    pub checkpoint_prefix: String,
}

impl OutputSection {
    pub fn diagnostics_path(&self) -> PathBuf {
        self.dir.join(&self.diagnostics)
    }

    /// `<dir>/<prefix>_<step>.nlc2`.
    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        self.dir.join(format!("{}_{:08}.nlc2", self.checkpoint_prefix, step))
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: TorusGrid,
    pub params: ApproximationParams,
    pub mode: DirectorMode,
    pub theta_floor: f64,
    pub scheme: SchemeConfig,
    pub ic: IcSpec,
    pub diagnostics: DiagnosticsSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn spectral(&self) -> Spectral {
        Spectral::new(self.grid, self.params.n).expect("truncation validated at parse time")
    }

    pub fn schedule(&self) -> RunSchedule {
        RunSchedule {
            sample_stride: self.diagnostics.sample_stride,
            checkpoint_stride: self.diagnostics.checkpoint_stride,
        }
    }

    pub fn diagnostics_settings(&self) -> DiagnosticsSettings {
        DiagnosticsSettings {
            entropy: EntropyConfig {
                alphas: self.diagnostics.alphas.clone(),
                tolerance: self.diagnostics.entropy_tolerance,
            },
            radii: self.diagnostics.radii.clone(),
            eps0: self.diagnostics.eps0,
            theta_floor: self.theta_floor,
        }
    }

    /// Re-checks the cross-field invariants (useful after editing fields).
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_floor > 0.0 && self.theta_floor.is_finite()) {
            return Err(Error::key("params.theta_floor", "must be positive and finite"));
        }
        if !(self.scheme.t_end > 0.0) {
            return Err(Error::key(
                "scheme.t_end",
                format!("must be positive, got {}", self.scheme.t_end),
            ));
        }
        if self.ic.theta0() < self.theta_floor {
            return Err(Error::key(
                "ic.theta0",
                format!("{} is below theta_floor {}", self.ic.theta0(), self.theta_floor),
            ));
        }
        self.scheme.validate(&self.params).map_err(|e| prefixed("scheme", e))?;
        Spectral::new(self.grid, self.params.n).map_err(|e| prefixed("params", e))?;
        let d = &self.diagnostics;
        let sp_h = self.grid.h();
        for r in d.radii.iter().chain(std::iter::once(&d.r_monitor)) {
            if !(*r >= 3.0 * sp_h && *r <= PI) {
                return Err(Error::key(
                    "diagnostics.radii",
                    format!("radius {r} must lie in [3h, pi] = [{}, {PI}]", 3.0 * sp_h),
                ));
            }
        }
        if !(d.eps0 > 0.0 && d.eps0.is_finite()) {
            return Err(Error::key("diagnostics.eps0", "must be positive and finite"));
        }
        EntropyConfig {
            alphas: d.alphas.clone(),
            tolerance: d.entropy_tolerance,
        }
        .validate()
        .map_err(|e| prefixed("diagnostics", e))?;
        if d.bridge_steps == 0 {
            return Err(Error::key("diagnostics.bridge_steps", "must be at least 1"));
        }
        if !(d.drop_fraction >= 0.0 && d.energy_tolerance > 0.0) {
            return Err(Error::key(
                "diagnostics.energy_tolerance",
                "drop_fraction must be >= 0 and energy_tolerance > 0",
            ));
        }
        Ok(())
    }

    /// Prints every resolved key; `parse_config(&c.to_ini()) == c`.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let v = &p.viscosity;
        let _ = writeln!(s, "[grid]\nnx = {}\nny = {}\n", self.grid.nx(), self.grid.ny());
        let _ = writeln!(s, "[params]\nn = {}\nM = {}\nN = {}", p.n, p.cutoff, p.regularization);
        let _ = writeln!(s, "mode = {}\ntheta_floor = {}", self.mode.as_str(), self.theta_floor);
        let _ = writeln!(s, "mu_lower = {}\nmu_upper = {}", v.mu_lower(), v.mu_upper());
        match v.family() {
            ViscosityFamily::Constant => {
                let _ = writeln!(s, "viscosity = constant");
            }
            ViscosityFamily::AffineClamped { intercept, slope } => {
                let _ = writeln!(
                    s,
                    "viscosity = affine_clamped\nmu_intercept = {intercept}\nmu_slope = {slope}"
                );
            }
            ViscosityFamily::RationalBounded { theta_ref } => {
                let _ = writeln!(s, "viscosity = rational_bounded\ntheta_ref = {theta_ref}");
            }
        }
        let c = &self.scheme;
        let _ = writeln!(
            s,
            "\n[scheme]\ndt = {}\nt_end = {}\nscheme = {}\nadapt = {}\ncfl_safety = {}\nmu_split = {}\n",
            c.dt,
            c.t_end,
            c.scheme.as_str(),
            c.adapt,
            c.cfl_safety,
            c.mu_split
        );
        let _ = writeln!(s, "[ic]\nkind = {}\ntheta0 = {}", self.ic.kind(), self.ic.theta0());
        match &self.ic {
            IcSpec::Constant { .. } => {}
            IcSpec::TaylorGreen {
                amplitude,
                director_perturbation,
                ..
            } => {
                let _ = writeln!(
                    s,
                    "amplitude = {amplitude}\ndirector_perturbation = {director_perturbation}"
                );
            }
            IcSpec::DefectPair {
                separation,
                core_radius,
                ..
            } => {
                let _ = writeln!(s, "separation = {separation}\ncore_radius = {core_radius}");
            }
            IcSpec::RandomBandlimited {
                kmax,
                amplitude,
                director_perturbation,
                seed,
                ..
            } => {
                let _ = writeln!(
                    s,
                    "kmax = {kmax}\namplitude = {amplitude}\ndirector_perturbation = {director_perturbation}\nseed = {seed}"
                );
            }
        }
        let d = &self.diagnostics;
        let _ = writeln!(
            s,
            "\n[diagnostics]\nsample_stride = {}\ncheckpoint_stride = {}\nalphas = {}\nentropy_tolerance = {}",
            d.sample_stride,
            d.checkpoint_stride,
            join(&d.alphas),
            d.entropy_tolerance
        );
        let _ = writeln!(
            s,
            "eps0 = {}\nr_monitor = {}\nradii = {}\nweak_form = {}",
            d.eps0,
            d.r_monitor,
            join(&d.radii),
            d.weak_form
        );
        let _ = writeln!(
            s,
            "max_segments = {}\nbridge_steps = {}\ndrop_fraction = {}\nenergy_tolerance = {}\n",
            d.max_segments, d.bridge_steps, d.drop_fraction, d.energy_tolerance
        );
        let o = &self.output;
        let _ = writeln!(
            s,
            "[output]\ndir = {}\ndiagnostics = {}\ncheckpoint_prefix = {}",
            o.dir.display(),
            o.diagnostics,
            o.checkpoint_prefix
        );
        s
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Rewrites a bare-key error as `section.key`.
fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::ConfigKey { key, message } if !key.contains('.') => Error::ConfigKey {
            key: format!("{section}.{key}"),
            message,
        },
        other => other,
    }
}

/// `(section, key, default, description)` for every accepted key.
const KEYS: &[(&str, &str, &str, &str)] = &[
    ("grid", "nx", "required", "grid points along x"),
    ("grid", "ny", "nx", "grid points along y"),
    (
        "params",
        "n",
        "2/3-rule limit (nx-1)/3",
        "Galerkin truncation radius, at most nx/2 - 1",
    ),
    (
        "params",
        "M",
        "inf",
        "cutoff level of chi_M(|grad d|^2); inf disables the cutoff",
    ),
    (
        "params",
        "N",
        "inf",
        "power-law strength, stress term (1/N)|grad u|^(2/9) grad u; inf removes it",
    ),
    (
        "params",
        "mode",
        "relaxed",
        "relaxed | constrained (renormalize |d| = 1 after each step)",
    ),
    (
        "params",
        "theta_floor",
        "1",
        "positive lower bound on the initial temperature",
    ),
    (
        "params",
        "viscosity",
        "constant",
        "constant | affine_clamped | rational_bounded",
    ),
    ("params", "mu_lower", "1", "lower viscosity bound"),
    ("params", "mu_upper", "mu_lower", "upper viscosity bound"),
    (
        "params",
        "mu_intercept",
        "mu_upper",
        "affine_clamped only: mu = clamp(intercept + slope theta)",
    ),
    ("params", "mu_slope", "0", "affine_clamped only"),
    (
        "params",
        "theta_ref",
        "1",
        "rational_bounded only: mu = lower + (upper - lower)/(1 + theta/theta_ref)",
    ),
    ("scheme", "dt", "required", "time step (upper bound when adapt = true)"),
    ("scheme", "t_end", "required", "final time T of Q_T"),
    ("scheme", "scheme", "imex2", "imex1 | imex2"),
    ("scheme", "adapt", "false", "CFL-limited adaptive steps"),
    ("scheme", "cfl_safety", "0.5", "CFL safety factor in (0, 1]"),
    (
        "scheme",
        "mu_split",
        "mu_upper",
        "implicit viscosity, at least mu_upper",
    ),
    (
        "ic",
        "kind",
        "constant",
        "constant | taylor_green | defect_pair | random_bandlimited",
    ),
    ("ic", "theta0", "theta_floor", "initial temperature level"),
    (
        "ic",
        "amplitude",
        "1",
        "taylor_green, random_bandlimited: velocity amplitude (rms for random)",
    ),
    (
        "ic",
        "director_perturbation",
        "0.1",
        "taylor_green, random_bandlimited: director tilt",
    ),
    ("ic", "separation", "1.2", "defect_pair: distance between the cores"),
    (
        "ic",
        "core_radius",
        "0.3",
        "defect_pair: escaped core radius, at least 3 cells",
    ),
    ("ic", "kmax", "4", "random_bandlimited: largest wavenumber"),
    ("ic", "seed", "0", "random_bandlimited: rng seed"),
    ("diagnostics", "sample_stride", "1", "steps between diagnostics rows"),
    (
        "diagnostics",
        "checkpoint_stride",
        "0",
        "steps between checkpoints; 0 disables",
    ),
    (
        "diagnostics",
        "alphas",
        "0.25, 0.5, 0.75",
        "entropy exponents in (0, 1)",
    ),
    (
        "diagnostics",
        "entropy_tolerance",
        "1e-6",
        "entropy residual flag tolerance",
    ),
    (
        "diagnostics",
        "eps0",
        "0.1 x energy of one escaped degree-1 defect with the core radius (see note)",
        "concentration threshold; a ball is flagged when its energy reaches eps0^2",
    ),
    (
        "diagnostics",
        "r_monitor",
        "8 grid cells",
        "continuation monitor radius",
    ),
    (
        "diagnostics",
        "radii",
        "r_monitor",
        "local energy radii reported per row",
    ),
    ("diagnostics", "weak_form", "false", "accumulate weak-form residuals"),
    ("diagnostics", "max_segments", "8", "continuation restart limit"),
    (
        "diagnostics",
        "bridge_steps",
        "10",
        "steps in a continuation bridging window",
    ),
    (
        "diagnostics",
        "drop_fraction",
        "0.01",
        "required energy drop per window, in units of eps0^2",
    ),
    (
        "diagnostics",
        "energy_tolerance",
        "0.01",
        "allowed total energy change per window, relative",
    ),
    ("output", "dir", ".", "output directory"),
    ("output", "diagnostics", "diagnostics.csv", "diagnostics CSV file name"),
    (
        "output",
        "checkpoint_prefix",
        "checkpoint",
        "checkpoint file name prefix",
    ),
    ("study", "parameter", "required (study files)", "n | M | N | dt"),
    (
        "study",
        "ladder",
        "required (study files)",
        "at least 3 strictly increasing values",
    ),
];

/// Reference text documenting every key and its default.
pub fn reference_text() -> String {
    let mut s = String::from(
        "# nlc2 configuration reference\n#\n# INI sections with `key = value` lines; `#` and `;` start comments.\n\
         # Unknown keys are errors. Keys marked required have no default.\n",
    );
    let mut section = "";
    for (sec, key, default, doc) in KEYS {
        if *sec != section {
            section = sec;
            let _ = writeln!(s, "\n[{sec}]");
        }
        let _ = writeln!(s, "# {doc}\n# default: {default}\n; {key} =");
    }
    let _ = writeln!(
        s,
        "\n# note: the eps0 default is a calibration choice. With a = core_radius\n\
         # (or {DEFAULT_CORE_RADIUS} when the data has no defects), it is one tenth of\n\
         # 2 pi int_0^pi (b'(r)^2 + sin^2 b / r^2) r dr, b = (pi/2) tanh(r/a),\n\
         # and is written out in full by `to_ini`."
    );
    s
}

/// Key lookup with use tracking.
struct Table {
    entries: BTreeMap<(String, String), String>,
    used: BTreeSet<(String, String)>,
}

impl Table {
    fn parse(text: &str, allow_study: bool) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("syntax error: {e}")))?;
        let mut entries = BTreeMap::new();
        for (section, props) in ini.iter() {
            let name = section.unwrap_or("");
            for (key, value) in props.iter() {
                if name.is_empty() {
                    return Err(Error::key(key, "keys must appear inside a section"));
                }
                let known = KEYS.iter().any(|(s, k, _, _)| *s == name && *k == key) && (allow_study || name != "study");
                if !known {
                    return Err(Error::key(format!("{name}.{key}"), "unknown key"));
                }
                let id = (name.to_string(), key.to_string());
                if entries.insert(id, value.trim().to_string()).is_some() {
                    return Err(Error::key(format!("{name}.{key}"), "duplicate key"));
                }
            }
        }
        Ok(Self {
            entries,
            used: BTreeSet::new(),
        })
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<String> {
        let id = (section.to_string(), key.to_string());
        let v = self.entries.get(&id).cloned();
        if v.is_some() {
            self.used.insert(id);
        }
        v
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    fn get<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => parse(&v)
                .map(Some)
                .ok_or_else(|| Error::key(format!("{section}.{key}"), format!("cannot parse `{v}`"))),
        }
    }

    fn f64(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key, parse_f64)
    }

    fn usize(&mut self, section: &str, key: &str) -> Result<Option<usize>> {
        self.get(section, key, |v| v.parse().ok())
    }

    fn bool(&mut self, section: &str, key: &str) -> Result<Option<bool>> {
        self.get(section, key, |v| v.parse().ok())
    }

    fn list(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(section, key, |v| {
            v.split(',').map(|s| parse_f64(s.trim())).collect::<Option<Vec<_>>>()
        })
    }

    fn required<T>(&self, section: &str, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::key(format!("{section}.{key}"), "missing required key"))
    }

    /// Rejects present keys that were never read (not applicable here).
    fn finish(&self) -> Result<()> {
        for id in self.entries.keys() {
            if !self.used.contains(id) {
                return Err(Error::key(
                    format!("{}.{}", id.0, id.1),
                    "key does not apply to the selected options",
                ));
            }
        }
        Ok(())
    }
}

fn parse_f64(v: &str) -> Option<f64> {
    match v {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => v.parse::<f64>().ok().filter(|x| !x.is_nan()),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut t = Table::parse(text, false)?;
    let cfg = build(&mut t)?;
    t.finish()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn build(t: &mut Table) -> Result<RunConfig> {
    let nx = t.usize("grid", "nx")?;
    let nx = t.required("grid", "nx", nx)?;
    let ny = t.usize("grid", "ny")?.unwrap_or(nx);
    let grid = TorusGrid::new(nx, ny).map_err(|e| prefixed("grid", e))?;

    let n = t.usize("params", "n")?.unwrap_or_else(|| grid.dealias_limit());
    let m = t.f64("params", "M")?.unwrap_or(f64::INFINITY);
    let n_reg = t.f64("params", "N")?.unwrap_or(f64::INFINITY);
    let mode = match t.raw("params", "mode").as_deref() {
        None | Some("relaxed") => DirectorMode::Relaxed,
        Some("constrained") => DirectorMode::Constrained,
        Some(v) => {
            return Err(Error::key(
                "params.mode",
                format!("expected relaxed | constrained, got `{v}`"),
            ))
        }
    };
    let theta_floor = t.f64("params", "theta_floor")?.unwrap_or(1.0);
    if !(theta_floor > 0.0 && theta_floor.is_finite()) {
        return Err(Error::key(
            "params.theta_floor",
            format!("must be positive (initial temperature bounded below), got {theta_floor}"),
        ));
    }
    let mu_lower = t.f64("params", "mu_lower")?.unwrap_or(1.0);
    let mu_upper = t.f64("params", "mu_upper")?.unwrap_or(mu_lower);
    let viscosity = match t.raw("params", "viscosity").as_deref() {
        None | Some("constant") => ViscosityModel::new(ViscosityFamily::Constant, mu_lower, mu_upper),
        Some("affine_clamped") => {
            let intercept = t.f64("params", "mu_intercept")?.unwrap_or(mu_upper);
            let slope = t.f64("params", "mu_slope")?.unwrap_or(0.0);
            ViscosityModel::affine_clamped(mu_lower, mu_upper, intercept, slope)
        }
        Some("rational_bounded") => {
            let theta_ref = t.f64("params", "theta_ref")?.unwrap_or(1.0);
            ViscosityModel::rational_bounded(mu_lower, mu_upper, theta_ref)
        }
        Some(v) => {
            return Err(Error::key(
                "params.viscosity",
                format!("expected constant | affine_clamped | rational_bounded, got `{v}`"),
            ))
        }
    }
    .map_err(|e| prefixed("params", e))?;
    let params = ApproximationParams::new(n, m, n_reg, viscosity).map_err(|e| prefixed("params", e))?;

    let dt = t.f64("scheme", "dt")?;
    let dt = t.required("scheme", "dt", dt)?;
    let t_end = t.f64("scheme", "t_end")?;
    let t_end = t.required("scheme", "t_end", t_end)?;
    let mut scheme = SchemeConfig::new(&params, dt, t_end);
    scheme.scheme = match t.raw("scheme", "scheme").as_deref() {
        None | Some("imex2") => Scheme::Imex2,
        Some("imex1") => Scheme::Imex1,
        Some(v) => {
            return Err(Error::key(
                "scheme.scheme",
                format!("expected imex1 | imex2, got `{v}`"),
            ))
        }
    };
    if let Some(a) = t.bool("scheme", "adapt")? {
        scheme.adapt = a;
    }
    if let Some(c) = t.f64("scheme", "cfl_safety")? {
        scheme.cfl_safety = c;
    }
    if let Some(m) = t.f64("scheme", "mu_split")? {
        scheme.mu_split = m;
    }

    let theta0 = t.f64("ic", "theta0")?.unwrap_or(theta_floor);
    let ic = match t.raw("ic", "kind").as_deref() {
        None | Some("constant") => IcSpec::Constant { theta0 },
        Some("taylor_green") => IcSpec::TaylorGreen {
            amplitude: t.f64("ic", "amplitude")?.unwrap_or(1.0),
            director_perturbation: t.f64("ic", "director_perturbation")?.unwrap_or(0.1),
            theta0,
        },
        Some("defect_pair") => IcSpec::DefectPair {
            separation: t.f64("ic", "separation")?.unwrap_or(1.2),
            core_radius: t.f64("ic", "core_radius")?.unwrap_or(DEFAULT_CORE_RADIUS),
            theta0,
        },
        Some("random_bandlimited") => IcSpec::RandomBandlimited {
            kmax: t.usize("ic", "kmax")?.unwrap_or(4),
            amplitude: t.f64("ic", "amplitude")?.unwrap_or(1.0),
            director_perturbation: t.f64("ic", "director_perturbation")?.unwrap_or(0.1),
            seed: t.get("ic", "seed", |v| v.parse::<u64>().ok())?.unwrap_or(0),
            theta0,
        },
        Some(v) => {
            return Err(Error::key(
                "ic.kind",
                format!("expected constant | taylor_green | defect_pair | random_bandlimited, got `{v}`"),
            ))
        }
    };

    let core = match ic {
        IcSpec::DefectPair { core_radius, .. } => core_radius,
        _ => DEFAULT_CORE_RADIUS,
    };
    let r_monitor = t
        .f64("diagnostics", "r_monitor")?
        .unwrap_or(DEFAULT_MONITOR_CELLS * grid.h());
    let diagnostics = DiagnosticsSection {
        sample_stride: t.usize("diagnostics", "sample_stride")?.unwrap_or(1),
        checkpoint_stride: t.usize("diagnostics", "checkpoint_stride")?.unwrap_or(0),
        alphas: t
            .list("diagnostics", "alphas")?
            .unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
        entropy_tolerance: t.f64("diagnostics", "entropy_tolerance")?.unwrap_or(1e-6),
        eps0: t.f64("diagnostics", "eps0")?.unwrap_or_else(|| calibrated_eps0(core)),
        r_monitor,
        radii: t.list("diagnostics", "radii")?.unwrap_or_else(|| vec![r_monitor]),
        weak_form: t.bool("diagnostics", "weak_form")?.unwrap_or(false),
        max_segments: t.usize("diagnostics", "max_segments")?.unwrap_or(8),
        bridge_steps: t.usize("diagnostics", "bridge_steps")?.unwrap_or(10),
        drop_fraction: t.f64("diagnostics", "drop_fraction")?.unwrap_or(0.01),
        energy_tolerance: t.f64("diagnostics", "energy_tolerance")?.unwrap_or(0.01),
    };
    let output = OutputSection {
        dir: PathBuf::from(t.raw("output", "dir").unwrap_or_else(|| ".".into())),
        diagnostics: t
            .raw("output", "diagnostics")
            .unwrap_or_else(|| "diagnostics.csv".into()),
        checkpoint_prefix: t
            .raw("output", "checkpoint_prefix")
            .unwrap_or_else(|| "checkpoint".into()),
    };
    let cfg = RunConfig {
        grid,
        params,
        mode,
        theta_floor,
        scheme,
        ic,
        diagnostics,
        output,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parameter varied by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyParameter {
    /// Galerkin truncation radius; the grid grows with it.
    Truncation,
    Cutoff,
    Regularization,
    TimeStep,
}

impl StudyParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyParameter::Truncation => "n",
            StudyParameter::Cutoff => "M",
            StudyParameter::Regularization => "N",
            StudyParameter::TimeStep => "dt",
        }
    }

    /// Whether larger ladder values are finer.
    pub fn increasing_is_finer(&self) -> bool {
        !matches!(self, StudyParameter::TimeStep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub base: RunConfig,
    pub parameter: StudyParameter,
    /// Strictly increasing, at least three values.
    pub ladder: Vec<f64>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < 3 {
            return Err(Error::key("study.ladder", "needs at least 3 values"));
        }
        if !self.ladder.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::key("study.ladder", "values must be strictly increasing"));
        }
        if !self.ladder.iter().all(|v| *v > 0.0) {
            return Err(Error::key("study.ladder", "values must be positive"));
        }
        if self.parameter == StudyParameter::Truncation && !self.ladder.iter().all(|v| v.fract() == 0.0) {
            return Err(Error::key("study.ladder", "truncation radii must be integers"));
        }
        Ok(())
    }

    pub fn to_ini(&self) -> String {
        format!(
            "{}\n[study]\nparameter = {}\nladder = {}\n",
            self.base.to_ini(),
            self.parameter.as_str(),
            join(&self.ladder)
        )
    }
}

pub fn parse_study_config(text: &str) -> Result<StudyConfig> {
    let mut t = Table::parse(text, true)?;
    let base = build(&mut t)?;
    let parameter = match t.raw("study", "parameter").as_deref() {
        Some("n") => StudyParameter::Truncation,
        Some("M") => StudyParameter::Cutoff,
        Some("N") => StudyParameter::Regularization,
        Some("dt") => StudyParameter::TimeStep,
        Some(v) => {
            return Err(Error::key(
                "study.parameter",
                format!("expected n | M | N | dt, got `{v}`"),
            ))
        }
        None => return Err(Error::key("study.parameter", "missing required key")),
    };
    let ladder = t.list("study", "ladder")?;
    let ladder = t.required("study", "ladder", ladder)?;
    t.finish()?;
    let study = StudyConfig {
        base,
        parameter,
        ladder,
    };
    study.validate()?;
    Ok(study)
}

pub fn load_study_config(path: &Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_study_config(&text)
}

/// Whether a config text carries a `[study]` section.
pub fn is_study_text(text: &str) -> bool {
    Table::parse(text, true)
        .map(|t| t.has("study", "parameter"))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 32\n[scheme]\ndt = 0.01\nt_end = 0.1\n";

    fn key_of(e: Error) -> String {
        match e {
            Error::ConfigKey { key, .. } => key,
            other => panic!("expected key error, got {other}"),
        }
    }

    #[test]
    fn minimal_file_gets_documented_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!((c.grid.nx(), c.grid.ny()), (32, 32));
        assert_eq!(c.params.n, 10);
        assert!(c.params.cutoff.is_infinite() && c.params.regularization.is_infinite());
        assert_eq!(c.mode, DirectorMode::Relaxed);
        assert_eq!(c.theta_floor, 1.0);
        assert_eq!(c.scheme.scheme, Scheme::Imex2);
        assert_eq!(c.ic, IcSpec::Constant { theta0: 1.0 });
        assert_eq!(c.diagnostics.alphas, vec![0.25, 0.5, 0.75]);
        assert!((c.diagnostics.r_monitor - 8.0 * c.grid.h()).abs() < 1e-15);
        assert_eq!(c.diagnostics.eps0, calibrated_eps0(DEFAULT_CORE_RADIUS));
        assert_eq!(c.diagnostics.bridge_steps, 10);
    }

    #[test]
    fn zero_theta_floor_rejected() {
        let e = parse_config(&format!("{MINIMAL}[params]\ntheta_floor = 0\n")).unwrap_err();
        assert_eq!(key_of(e), "params.theta_floor");
    }

    #[test]
    fn inf_sentinel_and_finite_values() {
        let c = parse_config(&format!("{MINIMAL}[params]\nM = inf\nN = 100\n")).unwrap();
        assert!(c.params.cutoff.is_infinite());
        assert_eq!(c.params.regularization, 100.0);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            key_of(parse_config("[grid]\nnx = 32\n[scheme]\nt_end = 1\n").unwrap_err()),
            "scheme.dt"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[grid]\nnz = 3\n")).unwrap_err()),
            "grid.nz"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[extra]\na = 1\n")).unwrap_err()),
            "extra.a"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[params]\nmu_lower = 2\nmu_upper = 1\n")).unwrap_err()),
            "params.mu_upper"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[ic]\nkind = constant\nseparation = 1\n")).unwrap_err()),
            "ic.separation"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[params]\nn = 40\n")).unwrap_err()),
            "params.n"
        );
        assert_eq!(
            key_of(parse_config("[grid]\nnx = 32\n[scheme]\ndt = 0.1\nt_end = 0\n").unwrap_err()),
            "scheme.t_end"
        );
        assert_eq!(
            key_of(parse_config(&format!("{MINIMAL}[ic]\ntheta0 = 0.5\n")).unwrap_err()),
            "ic.theta0"
        );
    }

    #[test]
    fn printed_config_round_trips() {
        let text = "[grid]\nnx = 64\nny = 48\n[params]\nM = 10\nN = 100\nviscosity = affine_clamped\n\
                    mu_lower = 0.5\nmu_upper = 2\nmu_intercept = 0.3\nmu_slope = 0.7\nmode = constrained\n\
                    [scheme]\ndt = 0.003\nt_end = 1\nscheme = imex1\n[ic]\nkind = random_bandlimited\nseed = 7\n\
                    [diagnostics]\nradii = 0.5, 1\n[output]\ndir = /tmp/x\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&c.to_ini()).unwrap(), c);
        let d = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&d.to_ini()).unwrap(), d);
    }

    #[test]
    fn study_files() {
        let s = parse_study_config(&format!("{MINIMAL}[study]\nparameter = N\nladder = 10, 100, 1000\n")).unwrap();
        assert_eq!(s.parameter, StudyParameter::Regularization);
        assert_eq!(parse_study_config(&s.to_ini()).unwrap(), s);
        let e = parse_study_config(&format!("{MINIMAL}[study]\nparameter = N\nladder = 10, 5, 1000\n")).unwrap_err();
        assert_eq!(key_of(e), "study.ladder");
        assert!(parse_config(&format!("{MINIMAL}[study]\nparameter = N\n")).is_err());
        assert!(is_study_text(&format!("{MINIMAL}[study]\nparameter = N\n")));
    }

    #[test]
    fn defect_energy_quadrature() {
        // core contribution: sin^2 b / r grows like ln(pi / a) away from the core
        let e1 = single_defect_energy(0.3);
        let e2 = single_defect_energy(0.15);
        assert!((e2 - e1 - 2.0 * PI * 2f64.ln()).abs() < 0.05);
        assert!(e1 > 2.0 * PI * (PI / 0.3f64).ln());
    }

    #[test]
    fn reference_lists_every_key() {
        let r = reference_text();
        for (_, key, _, _) in KEYS {
            assert!(r.contains(&format!("; {key} =")));
        }
    }
}
