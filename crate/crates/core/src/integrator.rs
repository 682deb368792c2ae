//! Splitting time-stepper for the drifted rearranged stochastic heat equation.
//!
//! One step runs, in order: explicit Euler drift, exact heat flow on the
//! cosine modes, the coloured noise increment, and the rearrangement
//! projection back onto symmetric non-increasing fields. The mirror average
//! taken before the spectral heat step is counted as part of the projection.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::noise::{NoiseSampler, NoiseSpectrum};
use crate::rearrange::{placement_order, rearrange, rearrange_in_place};
use crate::spectral::{
    dot, grad_norm_sq, heat_factor, norm_sq, symmetrize_in_place, GridField, GridSpec,
    SpectralBasis, SpectralField,
};

/// States with `||X||_2` above this abort the run.
pub const BLOW_UP_NORM: f64 = 1e12;
/// Upper bound on `horizon / dt` for a single run.
pub const MAX_STEPS: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct StepConfig {
    pub dt: f64,
    pub diffusivity: f64,
    pub noise_amplitude: f64,
    pub spectrum: NoiseSpectrum,
    pub drift: DriftSpec,
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", self.dt, "(0, inf)"));
        }
        if !(self.diffusivity >= 0.0 && self.diffusivity.is_finite()) {
            return Err(Error::param("diffusivity", self.diffusivity, "[0, inf)"));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(Error::param("noise_amplitude", self.noise_amplitude, "[0, inf)"));
        }
        self.spectrum.validate()?;
        self.drift.validate()
    }

    /// Rejects `dt` when the explicit drift step is not a contraction-scale
    /// update at `u`.
    pub fn check_step_size(&self, u: &GridField) -> Result<()> {
        let lipschitz = self.drift.local_lipschitz(u)?;
        let product = self.dt * lipschitz;
        if product >= 0.5 {
            return Err(Error::StepTooLarge { product, lipschitz });
        }
        Ok(())
    }
}

/// Per-step energy bookkeeping. All squared norms use the `1/N` weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRecord {
    /// Time at the start of the step.
    pub t: f64,
    pub norm_sq: f64,
    /// `<X, F(X)>`.
    pub inner_drift: f64,
    pub grad_sq: f64,
    /// `amplitude^2 c_lambda dt`.
    pub noise_qv: f64,
    /// `||Y - Y*||_2` of the rearrangement step.
    pub displacement: f64,
    pub norm_sq_after: f64,
    /// `dt^2 ||F(X)||^2`.
    pub drift_defect: f64,
    /// `2 kappa dt ||grad X||^2` minus the energy actually removed by the
    /// exact heat flow; non-negative, vanishing with `dt`.
    pub heat_defect: f64,
    /// Norm change from the mirror average and the rearrangement.
    pub projection_defect: f64,
    /// `2 a <Y, dW> + a^2 (||dW||^2 - c_lambda dt)`, mean zero.
    pub martingale: f64,
}

impl LedgerRecord {
    /// Non-martingale defect: everything in the norm increment that the
    /// continuous energy identity does not account for.
    pub fn splitting_defect(&self) -> f64 {
        self.drift_defect + self.heat_defect + self.projection_defect
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyLedger {
    pub dt: f64,
    pub diffusivity: f64,
    pub noise_amplitude: f64,
    /// `c_lambda` truncated at the grid's Nyquist rank.
    pub c_lambda: f64,
    pub records: Vec<LedgerRecord>,
}

/// Per-step defect of the energy identity:
/// `d||X||^2 - [2 <X, F> - 2 kappa ||grad X||^2 + a^2 c_lambda] dt`.
pub fn energy_residual(ledger: &EnergyLedger) -> Result<Vec<f64>> {
    if ledger.records.is_empty() {
        return Err(Error::InvalidInput("empty energy ledger".into()));
    }
    let qv_rate = ledger.noise_amplitude.powi(2) * ledger.c_lambda;
    Ok(ledger
        .records
        .iter()
        .map(|r| {
            let predicted = (2.0 * r.inner_drift - 2.0 * ledger.diffusivity * r.grad_sq + qv_rate) * ledger.dt;
            (r.norm_sq_after - r.norm_sq) - predicted
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub field: GridField,
    pub t: f64,
    pub steps: u64,
    /// Sum of rearrangement displacements; non-decreasing.
    pub reflection_cum: f64,
    pub ledger: Option<EnergyLedger>,
}

/// Scalar observables emitted to recorders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub t: f64,
    pub mean: f64,
    pub norm_sq: f64,
    pub grad_sq: f64,
    pub value_at_zero: f64,
    pub reflection_cum: f64,
}

impl Observables {
    pub fn of(state: &SimState) -> Self {
        let f = &state.field;
        Self {
            t: state.t,
            mean: f.mean(),
            norm_sq: f.norm_sq(),
            grad_sq: grad_norm_sq(&SpectralField::from_grid_symmetrizing(&f.symmetrized())),
            value_at_zero: f.at(0),
            reflection_cum: state.reflection_cum,
        }
    }
}

/// Sink for recorded states. One recorder per replica.
pub trait Recorder {
    fn record(&mut self, replica: usize, state: &SimState) -> Result<()>;
}

/// Discards everything.
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn record(&mut self, _: usize, _: &SimState) -> Result<()> {
        Ok(())
    }
}

/// Keeps observables in memory.
#[derive(Debug, Default)]
pub struct ObservableRecorder {
    pub rows: Vec<(usize, Observables)>,
}

impl Recorder for ObservableRecorder {
    fn record(&mut self, replica: usize, state: &SimState) -> Result<()> {
        self.rows.push((replica, Observables::of(state)));
        Ok(())
    }
}

impl<F: FnMut(usize, &SimState) -> Result<()>> Recorder for F {
    fn record(&mut self, replica: usize, state: &SimState) -> Result<()> {
        self(replica, state)
    }
}

/// Reusable stepping engine for one configuration and grid.
pub struct Stepper {
    cfg: StepConfig,
    grid: GridSpec,
    basis: Arc<SpectralBasis>,
    sampler: NoiseSampler,
    order: Vec<usize>,
    heat: Vec<f64>,
    sqrt_dt: f64,
    drift_buf: Vec<f64>,
    modes: Vec<f64>,
    noise: Vec<f64>,
    sort_buf: Vec<f64>,
}

impl Stepper {
    pub fn new(cfg: StepConfig, grid: GridSpec) -> Result<Self> {
        cfg.validate()?;
        cfg.drift.check_grid(grid)?;
        let sampler = NoiseSampler::new(&cfg.spectrum, grid)?;
        let heat = (0..grid.n_modes())
            .map(|m| heat_factor(m, cfg.diffusivity * cfg.dt))
            .collect();
        Ok(Self {
            sqrt_dt: cfg.dt.sqrt(),
            basis: SpectralBasis::for_grid(grid),
            order: placement_order(grid),
            heat,
            sampler,
            drift_buf: vec![0.0; grid.n_points()],
            modes: vec![0.0; grid.n_modes()],
            noise: vec![0.0; grid.n_modes()],
            sort_buf: Vec::with_capacity(grid.n_points()),
            grid,
            cfg,
        })
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `c_lambda` on the retained band.
    pub fn c_lambda(&self) -> f64 {
        self.sampler.c_lambda()
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes()
    }

    /// Initial state: `initial` projected once by the rearrangement.
    pub fn initial_state(&self, initial: &GridField, with_ledger: bool) -> Result<SimState> {
        self.grid.check_same(&initial.grid())?;
        let (field, _) = rearrange(initial)?;
        Ok(SimState {
            field,
            t: 0.0,
            steps: 0,
            reflection_cum: 0.0,
            ledger: with_ledger.then(|| EnergyLedger {
                dt: self.cfg.dt,
                diffusivity: self.cfg.diffusivity,
                noise_amplitude: self.cfg.noise_amplitude,
                c_lambda: self.sampler.c_lambda(),
                records: Vec::new(),
            }),
        })
    }

    /// Draws the spectral noise coefficients `lambda_m sqrt(dt) xi_m`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sampler.fill_modes(rng, self.sqrt_dt, out);
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut SimState, rng: &mut R) -> Result<()> {
        let mut noise = std::mem::take(&mut self.noise);
        if self.cfg.noise_amplitude > 0.0 {
            self.sampler.fill_modes(rng, self.sqrt_dt, &mut noise);
        } else {
            noise.fill(0.0);
        }
        let res = self.step_with_noise(state, &noise);
        self.noise = noise;
        res
    }

    /// One step driven by the given noise coefficients (see [`Self::sample_noise`]).
    pub fn step_with_noise(&mut self, state: &mut SimState, noise: &[f64]) -> Result<()> {
        debug_assert_eq!(noise.len(), self.grid.n_modes());
        let dt = self.cfg.dt;
        let kappa = self.cfg.diffusivity;
        let amp = self.cfg.noise_amplitude;
        let track = state.ledger.is_some();
        let x = state.field.values_mut();

        let (norm_before, grad_before) = if track {
            let mut sym = x.to_vec();
            symmetrize_in_place(self.grid, &mut sym);
            self.basis.forward_into(&sym, &mut self.modes);
            let g: f64 = self
                .modes
                .iter()
                .zip(self.basis.laplacian_eigenvalues())
                .map(|(f, l)| l * f * f)
                .sum();
            (norm_sq(x), g)
        } else {
            (0.0, 0.0)
        };

        // Drift.
        self.cfg.drift.drift_into(x, &mut self.drift_buf)?;
        let inner_drift = if track { dot(x, &self.drift_buf) } else { 0.0 };
        let drift_defect = if track {
            dt * dt * norm_sq(&self.drift_buf)
        } else {
            0.0
        };
        for (xv, f) in x.iter_mut().zip(&self.drift_buf) {
            *xv += dt * f;
        }
        let norm_drifted = if track { norm_sq(x) } else { 0.0 };

        // Heat on the mirror-averaged field.
        symmetrize_in_place(self.grid, x);
        let norm_sym = if track { norm_sq(x) } else { 0.0 };
        self.basis.forward_into(x, &mut self.modes);
        let mut heat_loss = 0.0;
        for (f, h) in self.modes.iter_mut().zip(&self.heat) {
            if track {
                heat_loss += (1.0 - h * h) * *f * *f;
            }
            *f *= h;
        }

        // Noise.
        let mut martingale = 0.0;
        if track {
            let inner: f64 = self.modes.iter().zip(noise).map(|(a, b)| a * b).sum();
            let w2: f64 = noise.iter().map(|v| v * v).sum();
            martingale = 2.0 * amp * inner + amp * amp * (w2 - self.sampler.c_lambda() * dt);
        }
        if amp > 0.0 {
            for (f, w) in self.modes.iter_mut().zip(noise) {
                *f += amp * w;
            }
        }
        self.basis.inverse_into(&self.modes, x);
        let norm_noised = if track { norm_sq(x) } else { 0.0 };

        // Projection.
        let disp_sq = rearrange_in_place(&self.order, x, &mut self.sort_buf);
        let norm_after = norm_sq(x);
        if !norm_after.is_finite() || norm_after.sqrt() > BLOW_UP_NORM {
            return Err(Error::BlowUp {
                step: state.steps,
                t: state.t,
                reason: format!("||X||_2^2 = {norm_after:.3e}"),
            });
        }
        let displacement = disp_sq.sqrt();

        if let Some(ledger) = state.ledger.as_mut() {
            ledger.records.push(LedgerRecord {
                t: state.t,
                norm_sq: norm_before,
                inner_drift,
                grad_sq: grad_before,
                noise_qv: amp * amp * self.sampler.c_lambda() * dt,
                displacement,
                norm_sq_after: norm_after,
                drift_defect,
                heat_defect: 2.0 * kappa * dt * grad_before - heat_loss,
                projection_defect: (norm_sym - norm_drifted) + (norm_after - norm_noised),
                martingale,
            });
        }
        state.steps += 1;
        state.t = state.steps as f64 * dt;
        state.reflection_cum += displacement;
        Ok(())
    }
}

/// Single functional step; builds a [`Stepper`] per call.
pub fn step<R: Rng + ?Sized>(state: &SimState, cfg: &StepConfig, rng: &mut R) -> Result<SimState> {
    let mut stepper = Stepper::new(cfg.clone(), state.field.grid())?;
    let mut next = state.clone();
    stepper.step(&mut next, rng)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Record every `stride` steps (and at `t = 0` and the final time).
    pub stride: u64,
    pub ledger: bool,
    pub replica: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            ledger: false,
            replica: 0,
        }
    }
}

pub fn step_count(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", horizon, "[0, inf)"));
    }
    let n = (horizon / dt).round();
    if n > MAX_STEPS {
        return Err(Error::param("horizon / dt", n, "at most 1e8 steps"));
    }
    Ok(n as u64)
}

pub fn simulate<R: Rng + ?Sized>(
    initial: &GridField,
    cfg: &StepConfig,
    horizon: f64,
    opts: SimOptions,
    rng: &mut R,
    recorder: &mut dyn Recorder,
) -> Result<SimState> {
    let mut stepper = Stepper::new(cfg.clone(), initial.grid())?;
    let steps = step_count(horizon, cfg.dt)?;
    let mut state = stepper.initial_state(initial, opts.ledger)?;
    cfg.check_step_size(&state.field)?;
    let stride = opts.stride.max(1);
    recorder.record(opts.replica, &state)?;
    for k in 1..=steps {
        stepper.step(&mut state, rng)?;
        if k % stride == 0 || k == steps {
            cfg.check_step_size(&state.field)?;
            recorder.record(opts.replica, &state)?;
        }
    }
    Ok(state)
}
