//! Run configuration: a TOML file, `--set dotted.key=value` overrides, and
//! strict validation into ready-to-run parameter sets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drift::{DriftSpec, InteractionKernel, KernelTable};
use crate::error::{Error, Result};
use crate::experiments::{CouplingParams, ExitTimeParams, ExitTrigger, LyapunovParams};
use crate::integrator::StepConfig;
use crate::io::read_snapshot;
use crate::measure::{samples_to_quantile, EmpiricalMeasure};
use crate::noise::NoiseSpectrum;
use crate::rearrange::rearrange;
use crate::spectral::{GridField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Coupling,
    Lyapunov,
    ExitTimes,
    CheckDrift,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::ExitTimes => "exit-times",
            ExperimentKind::CheckDrift => "check-drift",
        }
    }
}

/// Field profiles usable wherever a field is expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * e_mode`.
    Cosine {
        #[serde(default)]
        mean: f64,
        amplitude: f64,
        #[serde(default = "one_usize")]
        mode: usize,
    },
    /// `mean + amplitude * (1 - 4|x|)`.
    Tent {
        #[serde(default)]
        mean: f64,
        amplitude: f64,
    },
    /// Binary snapshot written by a previous run.
    Snapshot { path: PathBuf },
    /// Single-column CSV of samples, turned into their quantile field.
    Samples { path: PathBuf },
}

fn one_usize() -> usize {
    1
}

impl Profile {
    pub fn build(&self, grid: GridSpec, base: &Path) -> Result<GridField> {
        match self {
            Profile::Constant { value } => Ok(GridField::constant(grid, *value)),
            Profile::Cosine { mean, amplitude, mode } => {
                if *mode > grid.half() {
                    return Err(Error::param("mode", mode, &format!("[0, {}]", grid.half())));
                }
                GridField::constant(grid, *mean).axpy(*amplitude, &GridField::cosine_mode(grid, *mode))
            }
            Profile::Tent { mean, amplitude } => GridField::from_fn(grid, |x| mean + amplitude * (1.0 - 4.0 * x.abs())),
            Profile::Snapshot { path } => {
                let f = read_snapshot(&base.join(path))?;
                grid.check_same(&f.grid())?;
                Ok(f)
            }
            Profile::Samples { path } => samples_to_quantile(&EmpiricalMeasure::read_csv(&base.join(path))?, grid),
        }
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            Profile::Snapshot { path } | Profile::Samples { path } => vec![path.as_path()],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `g(r) = sum_k c_k r^(2k+1)`.
    OddPolynomial { coeffs: Vec<f64> },
    /// CSV of `(r, g(r))` rows for `r >= 0`.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftConfig {
    Zero,
    Linear {
        mu: f64,
    },
    WassersteinQuadratic {
        weight: f64,
        center: Profile,
    },
    Interaction {
        kernel: KernelConfig,
        #[serde(default)]
        penalty: f64,
        #[serde(default)]
        strict_range: bool,
    },
    DoubleWell {
        a: Profile,
        b: Profile,
        #[serde(default = "one_f64")]
        scale: f64,
    },
}

fn one_f64() -> f64 {
    1.0
}

impl DriftConfig {
    pub fn build(&self, grid: GridSpec, base: &Path) -> Result<DriftSpec> {
        let spec = match self {
            DriftConfig::Zero => DriftSpec::Zero,
            DriftConfig::Linear { mu } => DriftSpec::Linear { mu: *mu },
            DriftConfig::WassersteinQuadratic { weight, center } => DriftSpec::WassersteinQuadratic {
                center: center.build(grid, base)?,
                weight: *weight,
            },
            DriftConfig::Interaction {
                kernel,
                penalty,
                strict_range,
            } => DriftSpec::Interaction {
                kernel: match kernel {
                    KernelConfig::OddPolynomial { coeffs } => InteractionKernel::OddPolynomial(coeffs.clone()),
                    KernelConfig::Table { path } => InteractionKernel::Table(KernelTable::from_csv(&base.join(path))?),
                },
                penalty: *penalty,
                strict_range: *strict_range,
            },
            DriftConfig::DoubleWell { a, b, scale } => DriftSpec::DoubleWell {
                a: a.build(grid, base)?,
                b: b.build(grid, base)?,
                scale: *scale,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            DriftConfig::WassersteinQuadratic { center, .. } => center.files(),
            DriftConfig::Interaction {
                kernel: KernelConfig::Table { path },
                ..
            } => vec![path.as_path()],
            DriftConfig::DoubleWell { a, b, .. } => {
                let mut v = a.files();
                v.extend(b.files());
                v
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_points: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub dt: f64,
    pub diffusivity: f64,
    pub noise_amplitude: f64,
    pub horizon: f64,
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            diffusivity: 1.0,
            noise_amplitude: 1.0,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub replicas: usize,
    /// Also write the per-step energy ledger.
    pub ledger: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            replicas: 1,
            ledger: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub mu: f64,
    pub u: Profile,
    pub v: Profile,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            mu: 1.0,
            u: Profile::Cosine {
                mean: 0.5,
                amplitude: 1.0,
                mode: 1,
            },
            v: Profile::Tent {
                mean: -0.5,
                amplitude: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub replicas: usize,
    pub record_interval: f64,
    pub inits: Vec<Profile>,
    pub assumption_samples: usize,
    pub assumption_radius: f64,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self {
            replicas: 100,
            record_interval: 0.1,
            inits: vec![
                Profile::Constant { value: 2.0 },
                Profile::Cosine {
                    mean: -1.0,
                    amplitude: 0.5,
                    mode: 1,
                },
            ],
            assumption_samples: 500,
            assumption_radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    Radius,
    PotentialGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitTimesSection {
    pub radius: f64,
    pub eps_grid: Vec<f64>,
    pub replicas: usize,
    /// One value for every `eps` or one per entry of `eps_grid`.
    pub horizon_per_eps: Vec<f64>,
    pub trigger: TriggerKind,
    pub kappa: Option<f64>,
    pub max_censored_fraction: f64,
    /// Critical point; defaults to the Wasserstein-quadratic center.
    pub x0: Option<Profile>,
}

impl Default for ExitTimesSection {
    fn default() -> Self {
        Self {
            radius: 0.5,
            eps_grid: vec![0.35, 0.3, 0.25, 0.2],
            replicas: 200,
            horizon_per_eps: vec![700.0],
            trigger: TriggerKind::Radius,
            kappa: None,
            max_censored_fraction: 0.1,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckDriftSection {
    pub samples: usize,
    pub radius: f64,
}

impl Default for CheckDriftSection {
    fn default() -> Self {
        Self {
            samples: 1000,
            radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Record every `stride` steps.
    pub stride: u64,
    pub grid: GridSection,
    pub step: StepSection,
    pub spectrum: NoiseSpectrum,
    pub drift: DriftConfig,
    pub initial: Profile,
    pub simulate: SimulateSection,
    pub coupling: CouplingSection,
    pub lyapunov: LyapunovSection,
    pub exit_times: ExitTimesSection,
    pub check_drift: CheckDriftSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: None,
            stride: 1,
            grid: GridSection::default(),
            step: StepSection::default(),
            spectrum: NoiseSpectrum::power_law(0.75),
            drift: DriftConfig::Zero,
            initial: Profile::Constant { value: 0.0 },
            simulate: SimulateSection::default(),
            coupling: CouplingSection::default(),
            lyapunov: LyapunovSection::default(),
            exit_times: ExitTimesSection::default(),
            check_drift: CheckDriftSection::default(),
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}': '{part}' is not a table")))?;
    }
    let last = parts[parts.len() - 1];
    let value = parse_override_value(raw.trim());
    if TAGS.contains(&last) && node.get(last) != Some(&value) {
        // A new variant starts from a clean table.
        node.clear();
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Keys selecting an enum variant inside a table.
const TAGS: [&str; 2] = ["kind", "profile"];

fn variant_tag(t: &toml::Table) -> Option<&toml::Value> {
    TAGS.iter().find_map(|k| t.get(*k))
}

/// Overlays `top` onto `base`. A table whose variant tag changes replaces
/// the base table instead of merging into it.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => {
                let tag_changed = variant_tag(&t).is_some_and(|tag| variant_tag(b) != Some(tag));
                if tag_changed {
                    *b = t;
                } else {
                    merge(b, t);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Reads `path` (if any) over the defaults, applies the overrides in order
/// and deserializes strictly. Unknown keys are rejected.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config_str(&text, overrides).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                other => other,
            })
        }
        None => parse_config_str("", overrides),
    }
}

/// Same as [`parse_config`] for configuration text held in memory.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match toml::Value::try_from(RunConfig::default()) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("default configuration serializes to a table"),
    };
    let file = toml::from_str::<toml::Table>(text).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut table, file);
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table)
        .try_into::<RunConfig>()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Validated, ready-to-run configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub stride: u64,
    pub grid: GridSpec,
    pub step: StepConfig,
    pub horizon: f64,
    pub initial: GridField,
    pub replicas: usize,
    pub ledger: bool,
    pub coupling: Option<(CouplingParams, GridField, GridField)>,
    pub lyapunov: Option<(LyapunovParams, Vec<GridField>)>,
    pub exit_times: Option<ExitTimeParams>,
    pub check_drift: (usize, f64),
}

/// Prefixes the offending key to validation errors; every failure here is a
/// configuration error.
fn at(key: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, value, range } => Error::InvalidParameter {
            name: format!("{key}.{name}"),
            value,
            range,
        },
        Error::Io { .. } => e,
        other => Error::Config(format!("{key}: {other}")),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(key, v, "(0, inf)"))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::param(key, v, &format!("integers >= {min}")))
    }
}

impl RunConfig {
    /// Every file the configuration refers to, relative to `base`.
    pub fn referenced_files(&self) -> Vec<&Path> {
        let mut v = self.drift.files();
        v.extend(self.initial.files());
        v.extend(self.coupling.u.files());
        v.extend(self.coupling.v.files());
        for p in &self.lyapunov.inits {
            v.extend(p.files());
        }
        if let Some(x0) = &self.exit_times.x0 {
            v.extend(x0.files());
        }
        v
    }

    /// Validates every section for `kind` before any computation; relative
    /// paths resolve against `base`.
    pub fn resolve(&self, kind: ExperimentKind, base: &Path) -> Result<Resolved> {
        for f in self.referenced_files() {
            let p = base.join(f);
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        let grid = GridSpec::new(self.grid.n_points).map_err(|e| at("grid", e))?;
        self.spectrum.validate().map_err(|e| at("spectrum", e))?;
        let drift = self.drift.build(grid, base).map_err(|e| at("drift", e))?;
        let step = StepConfig {
            dt: self.step.dt,
            diffusivity: self.step.diffusivity,
            noise_amplitude: self.step.noise_amplitude,
            spectrum: self.spectrum.clone(),
            drift: drift.clone(),
        };
        step.validate().map_err(|e| at("step", e))?;
        crate::integrator::step_count(self.step.horizon, self.step.dt).map_err(|e| at("step", e))?;
        at_least("stride", self.stride as usize, 1)?;
        let initial = self.initial.build(grid, base).map_err(|e| at("initial", e))?;
        at_least("simulate.replicas", self.simulate.replicas, 1)?;

        let coupling = if kind == ExperimentKind::Coupling {
            positive("coupling.mu", self.coupling.mu)?;
            let u = rearrange(&self.coupling.u.build(grid, base).map_err(|e| at("coupling.u", e))?)?.0;
            let v = rearrange(&self.coupling.v.build(grid, base).map_err(|e| at("coupling.v", e))?)?.0;
            let params = CouplingParams {
                mu: self.coupling.mu,
                horizon: self.step.horizon,
                dt: self.step.dt,
                diffusivity: self.step.diffusivity,
                noise_amplitude: self.step.noise_amplitude,
                spectrum: self.spectrum.clone(),
                stride: self.stride,
            };
            Some((params, u, v))
        } else {
            None
        };

        let lyapunov = if kind == ExperimentKind::Lyapunov {
            let l = &self.lyapunov;
            at_least("lyapunov.replicas", l.replicas, 2)?;
            positive("lyapunov.record_interval", l.record_interval)?;
            at_least("lyapunov.assumption_samples", l.assumption_samples, 100)?;
            positive("lyapunov.assumption_radius", l.assumption_radius)?;
            if l.inits.is_empty() {
                return Err(Error::Config("lyapunov.inits: at least one initial profile required".into()));
            }
            let inits = l
                .inits
                .iter()
                .map(|p| p.build(grid, base).map_err(|e| at("lyapunov.inits", e)))
                .collect::<Result<Vec<_>>>()?;
            let params = LyapunovParams {
                drift: drift.clone(),
                dt: self.step.dt,
                diffusivity: self.step.diffusivity,
                noise_amplitude: self.step.noise_amplitude,
                spectrum: self.spectrum.clone(),
                horizon: self.step.horizon,
                replicas: l.replicas,
                record_interval: l.record_interval,
                assumption_samples: l.assumption_samples,
                assumption_radius: l.assumption_radius,
            };
            Some((params, inits))
        } else {
            None
        };

        let exit_times = if kind == ExperimentKind::ExitTimes {
            let x = &self.exit_times;
            positive("exit_times.radius", x.radius)?;
            at_least("exit_times.replicas", x.replicas, 2)?;
            if x.eps_grid.is_empty() {
                return Err(Error::Config("exit_times.eps_grid: at least one value required".into()));
            }
            for &e in &x.eps_grid {
                positive("exit_times.eps_grid", e)?;
            }
            if x.horizon_per_eps.len() != 1 && x.horizon_per_eps.len() != x.eps_grid.len() {
                return Err(Error::Config(format!(
                    "exit_times.horizon_per_eps: expected 1 or {} values, got {}",
                    x.eps_grid.len(),
                    x.horizon_per_eps.len()
                )));
            }
            for &h in &x.horizon_per_eps {
                positive("exit_times.horizon_per_eps", h)?;
            }
            if !(0.0..=1.0).contains(&x.max_censored_fraction) {
                return Err(Error::param("exit_times.max_censored_fraction", x.max_censored_fraction, "[0, 1]"));
            }
            if let Some(k) = x.kappa {
                positive("exit_times.kappa", k)?;
            }
            if !matches!(self.spectrum, NoiseSpectrum::Metastable { .. }) {
                return Err(Error::Config("spectrum: exit-times needs kind = \"metastable\"".into()));
            }
            let x0 = match (&x.x0, &drift) {
                (Some(p), _) => p.build(grid, base).map_err(|e| at("exit_times.x0", e))?,
                (None, DriftSpec::WassersteinQuadratic { center, .. }) => center.clone(),
                (None, _) => {
                    return Err(Error::Config(
                        "exit_times.x0: required unless the drift is wasserstein-quadratic".into(),
                    ))
                }
            };
            Some(ExitTimeParams {
                drift: drift.clone(),
                x0,
                radius: x.radius,
                eps_grid: x.eps_grid.clone(),
                replicas: x.replicas,
                horizon_per_eps: x.horizon_per_eps.clone(),
                dt: self.step.dt,
                spectrum: self.spectrum.clone(),
                trigger: match x.trigger {
                    TriggerKind::Radius => ExitTrigger::Radius,
                    TriggerKind::PotentialGap => ExitTrigger::PotentialGap { kappa: x.kappa },
                },
                max_censored_fraction: x.max_censored_fraction,
            })
        } else {
            None
        };

        if kind == ExperimentKind::CheckDrift {
            at_least("check_drift.samples", self.check_drift.samples, 100)?;
            positive("check_drift.radius", self.check_drift.radius)?;
        }

        Ok(Resolved {
            kind,
            seed: self.seed,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            stride: self.stride,
            grid,
            step,
            horizon: self.step.horizon,
            initial,
            replicas: self.simulate.replicas,
            ledger: self.simulate.ledger,
            coupling,
            lyapunov,
            exit_times,
            check_drift: (self.check_drift.samples, self.check_drift.radius),
        })
    }
}
