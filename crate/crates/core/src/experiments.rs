//! Monte-Carlo harnesses: synchronous coupling, Lyapunov decay with
//! observable-law convergence, and small-noise exit times.
//!
//! Replicas run on the rayon pool. Every replica owns a seeded stream, and
//! results are collected in replica order before any reduction, so reports
//! do not depend on the number of workers.

use rayon::prelude::*;
use serde::Serialize;

use crate::drift::{check_assumptions, eval_drift, eval_potential, random_admissible, AssumptionReport, DriftSpec};
use crate::error::{Error, Result};
use crate::integrator::{step_count, StepConfig, Stepper};
use crate::noise::{replica_rng, NoiseSpectrum};
use crate::rearrange::{is_admissible, rearrange};
use crate::spectral::{heat_factor, GridField, SpectralField};
use crate::stats::{energy_distance, linear_fit, mean_stderr, median, LinearFit};

fn stream(group: usize, replica: usize) -> u64 {
    ((group as u64) << 32) | replica as u64
}

fn require_admissible(name: &str, u: &GridField) -> Result<()> {
    if is_admissible(u) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be symmetric non-increasing")))
    }
}

// ---------------------------------------------------------------- coupling

#[derive(Debug, Clone)]
pub struct CouplingParams {
    pub mu: f64,
    pub horizon: f64,
    pub dt: f64,
    pub diffusivity: f64,
    pub noise_amplitude: f64,
    pub spectrum: NoiseSpectrum,
    /// Rows are emitted every `stride` steps; the ratio and the integral
    /// use every step.
    pub stride: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingRow {
    pub t: f64,
    pub distance: f64,
    /// `||X^u_t - X^v_t||_2 e^{mu t} / ||u - v||_2`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub mu: f64,
    pub initial_distance: f64,
    pub rows: Vec<CouplingRow>,
    /// Supremum of the ratio over every step.
    pub max_ratio: f64,
    /// Trapezoid rule for `int_0^T ||X^u - X^v||_2^2 dt`.
    pub distance_sq_integral: f64,
    /// `||u - v||_2^2 / (2 mu)`.
    pub integral_bound: f64,
}

pub fn run_coupling(params: &CouplingParams, u: &GridField, v: &GridField, seed: u64) -> Result<CouplingReport> {
    if !(params.mu > 0.0 && params.mu.is_finite()) {
        return Err(Error::param("mu", params.mu, "(0, inf)"));
    }
    u.grid().check_same(&v.grid())?;
    require_admissible("u", u)?;
    require_admissible("v", v)?;
    let cfg = StepConfig {
        dt: params.dt,
        diffusivity: params.diffusivity,
        noise_amplitude: params.noise_amplitude,
        spectrum: params.spectrum.clone(),
        drift: DriftSpec::Linear { mu: params.mu },
    };
    let steps = step_count(params.horizon, params.dt)?;
    let mut stepper = Stepper::new(cfg.clone(), u.grid())?;
    let mut su = stepper.initial_state(u, false)?;
    let mut sv = stepper.initial_state(v, false)?;
    cfg.check_step_size(&su.field)?;
    cfg.check_step_size(&sv.field)?;

    let d0 = su.field.distance(&sv.field)?;
    let ratio = |d: f64, t: f64| if d0 > 0.0 { d * (params.mu * t).exp() / d0 } else { 0.0 };
    let mut rows = vec![CouplingRow { t: 0.0, distance: d0, ratio: ratio(d0, 0.0) }];
    let mut max_ratio = rows[0].ratio;
    let mut integral = 0.0;
    let mut prev_sq = d0 * d0;
    let mut rng = replica_rng(seed, 0);
    let mut noise = vec![0.0; stepper.n_modes()];
    let stride = params.stride.max(1);
    for k in 1..=steps {
        stepper.sample_noise(&mut rng, &mut noise);
        stepper.step_with_noise(&mut su, &noise)?;
        stepper.step_with_noise(&mut sv, &noise)?;
        let d = su.field.distance(&sv.field)?;
        integral += 0.5 * params.dt * (prev_sq + d * d);
        prev_sq = d * d;
        let r = ratio(d, su.t);
        max_ratio = max_ratio.max(r);
        if k % stride == 0 || k == steps {
            rows.push(CouplingRow { t: su.t, distance: d, ratio: r });
        }
    }
    Ok(CouplingReport {
        mu: params.mu,
        initial_distance: d0,
        rows,
        max_ratio,
        distance_sq_integral: integral,
        integral_bound: d0 * d0 / (2.0 * params.mu),
    })
}

// ---------------------------------------------------------------- lyapunov

#[derive(Debug, Clone)]
pub struct LyapunovParams {
    pub drift: DriftSpec,
    pub dt: f64,
    pub diffusivity: f64,
    pub noise_amplitude: f64,
    pub spectrum: NoiseSpectrum,
    pub horizon: f64,
    pub replicas: usize,
    /// Time between recorded rows; rounded to a whole number of steps.
    pub record_interval: f64,
    pub assumption_samples: usize,
    pub assumption_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityRow {
    pub t: f64,
    /// `E ||X_t||_2^2` per initial condition.
    pub mean_norm_sq: Vec<f64>,
    pub stderr_norm_sq: Vec<f64>,
    /// Largest pairwise energy distance between the ensembles' laws of
    /// `(mean, ||X||_2, X(0))`.
    pub energy_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovFit {
    pub init: usize,
    /// Fitted decay rate of `E ||X_t||_2^2 - K`.
    pub c: f64,
    pub k: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityReport {
    pub rows: Vec<ErgodicityRow>,
    /// Long-run plateau of `E ||X||_2^2`, pooled over initial conditions.
    pub plateau: f64,
    /// `None` for initial conditions already on the plateau.
    pub fits: Vec<Option<LyapunovFit>>,
    /// Energy removed per unit time by drift and heat flow, divided by
    /// `E ||X||^2`, over the plateau window.
    pub effective_rate: f64,
    /// Plateau predicted by the stationary energy balance,
    /// `a^2 c_lambda / (2 effective_rate)`.
    pub balance_plateau: f64,
    /// First recorded time the energy distance falls below 10% of its
    /// initial value.
    pub crossing_time: Option<f64>,
    pub assumptions: AssumptionReport,
}

impl ErgodicityReport {
    pub fn final_distance_ratio(&self) -> f64 {
        let first = self.rows.first().map_or(f64::NAN, |r| r.energy_distance);
        let last = self.rows.last().map_or(f64::NAN, |r| r.energy_distance);
        last / first
    }
}

/// Per recorded time: `[mean, ||X||, X(0), ||X||^2, dissipation]`.
type Trajectory = Vec<[f64; 5]>;

/// The dissipation entry uses the energy the exact heat step removes per
/// unit time, `sum_m (1 - e^{-2 a_m}) x_m^2 / (2 dt)`, which tends to
/// `kappa ||grad X||^2` as `dt -> 0` but stays faithful at coarse steps.
fn record_row(u: &GridField, drift: &DriftSpec, kappa: f64, dt: f64) -> Result<[f64; 5]> {
    let s = SpectralField::from_grid_symmetrizing(&u.symmetrized());
    let heat: f64 = s
        .modes()
        .iter()
        .enumerate()
        .map(|(m, x)| (1.0 - heat_factor(m, kappa * dt).powi(2)) * x * x)
        .sum::<f64>()
        / (2.0 * dt);
    let inner = match drift {
        DriftSpec::Zero => 0.0,
        d => u.dot(&eval_drift(d, u)?)?,
    };
    let n2 = u.norm_sq();
    Ok([u.mean(), n2.sqrt(), u.at(0), n2, -inner + heat])
}

pub fn run_lyapunov(params: &LyapunovParams, inits: &[GridField], seed: u64) -> Result<ErgodicityReport> {
    if inits.is_empty() {
        return Err(Error::InvalidInput("run_lyapunov needs at least one initial condition".into()));
    }
    if params.replicas < 2 {
        return Err(Error::param("replicas", params.replicas, "integers >= 2"));
    }
    let grid = inits[0].grid();
    for u in inits {
        grid.check_same(&u.grid())?;
    }
    let mut check_rng = replica_rng(seed, u64::MAX);
    let assumptions = check_assumptions(
        &params.drift,
        grid,
        params.assumption_samples,
        params.assumption_radius,
        &mut check_rng,
    )?;
    if assumptions.dissipativity_violated {
        return Err(Error::Dissipativity(format!(
            "drift '{}' fails the dissipativity diagnostics\n{}",
            params.drift.name(),
            assumptions.table()
        )));
    }
    let cfg = StepConfig {
        dt: params.dt,
        diffusivity: params.diffusivity,
        noise_amplitude: params.noise_amplitude,
        spectrum: params.spectrum.clone(),
        drift: params.drift.clone(),
    };
    cfg.validate()?;
    let steps = step_count(params.horizon, params.dt)?;
    let every = ((params.record_interval / params.dt).round() as u64).max(1);
    for u in inits {
        cfg.check_step_size(&rearrange(u)?.0)?;
    }

    let jobs: Vec<(usize, usize)> = (0..inits.len())
        .flat_map(|i| (0..params.replicas).map(move |r| (i, r)))
        .collect();
    let trajectories: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(i, r)| -> Result<Trajectory> {
            let mut stepper = Stepper::new(cfg.clone(), grid)?;
            let mut state = stepper.initial_state(&inits[i], false)?;
            let mut rng = replica_rng(seed, stream(i, r));
            let mut traj = vec![record_row(&state.field, &cfg.drift, cfg.diffusivity, cfg.dt)?];
            for k in 1..=steps {
                stepper.step(&mut state, &mut rng)?;
                if k % every == 0 || k == steps {
                    traj.push(record_row(&state.field, &cfg.drift, cfg.diffusivity, cfg.dt)?);
                }
            }
            Ok(traj)
        })
        .collect::<Result<_>>()?;

    let n_rows = trajectories[0].len();
    let times: Vec<f64> = (0..n_rows)
        .map(|k| {
            let s = (k as u64 * every).min(steps);
            s as f64 * params.dt
        })
        .collect();
    let by_init: Vec<&[Trajectory]> = trajectories.chunks(params.replicas).collect();

    let mut rows = Vec::with_capacity(n_rows);
    for (k, &t) in times.iter().enumerate() {
        let mut means = Vec::new();
        let mut ses = Vec::new();
        let mut panels: Vec<Vec<[f64; 3]>> = Vec::new();
        for ens in &by_init {
            let n2: Vec<f64> = ens.iter().map(|tr| tr[k][3]).collect();
            let (m, se) = mean_stderr(&n2);
            means.push(m);
            ses.push(se);
            panels.push(ens.iter().map(|tr| [tr[k][0], tr[k][1], tr[k][2]]).collect());
        }
        let mut ed: f64 = 0.0;
        for a in 0..panels.len() {
            for b in a + 1..panels.len() {
                ed = ed.max(energy_distance(&panels[a], &panels[b]));
            }
        }
        rows.push(ErgodicityRow {
            t,
            mean_norm_sq: means,
            stderr_norm_sq: ses,
            energy_distance: ed,
        });
    }

    let window: Vec<usize> = (0..n_rows).filter(|&k| times[k] >= 0.75 * params.horizon).collect();
    let window = if window.is_empty() { vec![n_rows - 1] } else { window };
    let mut plateau = 0.0;
    let mut dissipation = 0.0;
    for &k in &window {
        for ens in &by_init {
            for tr in ens.iter() {
                plateau += tr[k][3];
                dissipation += tr[k][4];
            }
        }
    }
    let count = (window.len() * trajectories.len()) as f64;
    plateau /= count;
    dissipation /= count;
    let effective_rate = dissipation / plateau;
    let qv_rate = params.noise_amplitude.powi(2) * Stepper::new(cfg.clone(), grid)?.c_lambda();

    let fits = (0..inits.len())
        .map(|i| fit_decay(i, &times, &rows, plateau))
        .collect();
    let ed0 = rows[0].energy_distance;
    let crossing_time = rows.iter().find(|r| r.energy_distance <= 0.1 * ed0).map(|r| r.t);
    Ok(ErgodicityReport {
        rows,
        plateau,
        fits,
        effective_rate,
        balance_plateau: qv_rate / (2.0 * effective_rate),
        crossing_time,
        assumptions,
    })
}

/// Least squares on `log |E||X_t||^2 - K|` over the leading stretch where the
/// gap keeps its initial sign and exceeds 5% of its initial size.
fn fit_decay(init: usize, times: &[f64], rows: &[ErgodicityRow], plateau: f64) -> Option<LyapunovFit> {
    let gap0 = rows[0].mean_norm_sq[init] - plateau;
    if gap0 == 0.0 {
        return None;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, row) in times.iter().zip(rows) {
        let gap = (row.mean_norm_sq[init] - plateau) * gap0.signum();
        if gap <= 0.05 * gap0.abs() {
            break;
        }
        xs.push(*t);
        ys.push(gap.ln());
    }
    let fit = linear_fit(&xs, &ys).ok()?;
    Some(LyapunovFit {
        init,
        c: -fit.slope,
        k: plateau,
        r_squared: fit.r_squared,
        points: fit.points,
    })
}

// ---------------------------------------------------------------- exit times

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExitTrigger {
    /// `||X_t - X_0||_2 >= a`.
    Radius,
    /// `V(X_t) - V(X_0) >= kappa a^2 / 2`; the monotonicity witness is used
    /// when `kappa` is `None`.
    PotentialGap { kappa: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct ExitTimeParams {
    pub drift: DriftSpec,
    pub x0: GridField,
    pub radius: f64,
    pub eps_grid: Vec<f64>,
    pub replicas: usize,
    /// One horizon for all `eps`, or one per entry of `eps_grid`.
    pub horizon_per_eps: Vec<f64>,
    pub dt: f64,
    /// Metastable spectrum; its `epsilon` is replaced per grid entry.
    pub spectrum: NoiseSpectrum,
    pub trigger: ExitTrigger,
    /// Rows with a larger censored fraction are excluded from the regression.
    pub max_censored_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRow {
    pub epsilon: f64,
    pub replicas: usize,
    /// Sample mean; censored replicas count at the horizon.
    pub mean_tau: f64,
    pub stderr: f64,
    pub median_tau: f64,
    pub censored_count: usize,
    pub horizon: f64,
    /// Censoring above the allowed fraction; left out of the regression.
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitTimeReport {
    pub rows: Vec<ExitRow>,
    /// `log mean_tau` against `eps^-2` over uncensored rows.
    pub regression: Option<LinearFit>,
    /// Smallest `<DV(X), X - X0> / ||X - X0||^2` seen in the ball.
    pub kappa_witness: f64,
    pub trigger: ExitTrigger,
}

impl ExitTimeReport {
    /// Mean exit times non-increasing in `eps` up to overlapping 2-sigma bands.
    pub fn is_monotone(&self) -> bool {
        let mut rows: Vec<&ExitRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        rows.windows(2).all(|w| {
            let (small, large) = (w[0], w[1]);
            small.mean_tau + 2.0 * small.stderr >= large.mean_tau - 2.0 * large.stderr
        })
    }
}

/// Samples `(X0 + r Z / ||Z||)*` with `r` uniform in `(0, radius)`; every
/// sample lies in the closed ball around an admissible `X0`.
fn ball_sample<R: rand::Rng + ?Sized>(x0: &GridField, radius: f64, rng: &mut R) -> Result<GridField> {
    let z = random_admissible(x0.grid(), 1.0, rng);
    let z = z.axpy(-z.mean(), &GridField::constant(x0.grid(), 1.0))?;
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let shift = GridField::constant(x0.grid(), dir);
    let z = z.axpy(rng.random_range(0.0..1.0), &shift)?;
    let scale = rng.random_range(0.0..radius) / z.norm().max(f64::MIN_POSITIVE);
    Ok(rearrange(&x0.axpy(scale, &z)?)?.0)
}

/// Minimum of `<-F(X), X - X0> / ||X - X0||^2` over `samples` points of the
/// ball of radius `radius` around `x0`.
pub fn kappa_witness<R: rand::Rng + ?Sized>(
    drift: &DriftSpec,
    x0: &GridField,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut kappa = f64::INFINITY;
    let mut seen = 0;
    while seen < samples {
        let x = ball_sample(x0, radius, rng)?;
        let d = x.axpy(-1.0, x0)?;
        let dn = d.norm_sq();
        if dn < 1e-12 * radius * radius {
            continue;
        }
        let f = eval_drift(drift, &x)?;
        kappa = kappa.min(-f.dot(&d)? / dn);
        seen += 1;
    }
    Ok(kappa)
}

pub fn run_exit_times(params: &ExitTimeParams, seed: u64) -> Result<ExitTimeReport> {
    let drift = &params.drift;
    drift.validate()?;
    if !drift.is_gradient() {
        return Err(Error::Unsupported(format!(
            "exit times need a gradient drift, got '{}'",
            drift.name()
        )));
    }
    if !(params.radius > 0.0 && params.radius.is_finite()) {
        return Err(Error::param("radius", params.radius, "(0, inf)"));
    }
    if params.eps_grid.is_empty() {
        return Err(Error::InvalidInput("eps_grid is empty".into()));
    }
    if let Some(e) = params.eps_grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::param("eps_grid", *e, "(0, inf)"));
    }
    if params.replicas < 2 {
        return Err(Error::param("replicas", params.replicas, "integers >= 2"));
    }
    let horizons = match params.horizon_per_eps.len() {
        1 => vec![params.horizon_per_eps[0]; params.eps_grid.len()],
        n if n == params.eps_grid.len() => params.horizon_per_eps.clone(),
        n => {
            return Err(Error::InvalidInput(format!(
                "horizon_per_eps has {n} entries, expected 1 or {}",
                params.eps_grid.len()
            )))
        }
    };
    if !matches!(params.spectrum, NoiseSpectrum::Metastable { .. }) {
        return Err(Error::InvalidInput("exit times need a metastable noise spectrum".into()));
    }
    let x0 = &params.x0;
    require_admissible("x0", x0)?;
    let f0 = eval_drift(drift, x0)?.norm();
    if f0 >= 1e-6 * (1.0 + x0.norm()) {
        return Err(Error::InvalidInput(format!(
            "x0 is not a critical point: ||F(x0)||_2 = {f0:.3e}"
        )));
    }
    let mut check_rng = replica_rng(seed, u64::MAX);
    let kappa = kappa_witness(drift, x0, params.radius, 100, &mut check_rng)?;
    if kappa <= 0.0 {
        return Err(Error::Dissipativity(format!(
            "potential is not monotone around x0 (witness {kappa:.3e})"
        )));
    }
    let v0 = eval_potential(drift, x0)?;
    let gap_level = match params.trigger {
        ExitTrigger::Radius => None,
        ExitTrigger::PotentialGap { kappa: k } => Some(0.5 * k.unwrap_or(kappa) * params.radius.powi(2)),
    };

    let configs: Vec<StepConfig> = params
        .eps_grid
        .iter()
        .map(|&eps| StepConfig {
            dt: params.dt,
            diffusivity: eps.powi(4),
            noise_amplitude: eps,
            spectrum: params.spectrum.with_epsilon(eps),
            drift: drift.clone(),
        })
        .collect();
    for c in &configs {
        c.validate()?;
        c.check_step_size(x0)?;
    }
    let step_limits = horizons
        .iter()
        .map(|&h| step_count(h, params.dt))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..params.eps_grid.len())
        .flat_map(|e| (0..params.replicas).map(move |r| (e, r)))
        .collect();
    let a_sq = params.radius * params.radius;
    let taus: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(e, r)| -> Result<Option<f64>> {
            let mut stepper = Stepper::new(configs[e].clone(), x0.grid())?;
            let mut state = stepper.initial_state(x0, false)?;
            let mut rng = replica_rng(seed, stream(e, r));
            for _ in 0..step_limits[e] {
                stepper.step(&mut state, &mut rng)?;
                let exited = match gap_level {
                    None => crate::spectral::distance_sq(state.field.values(), x0.values()) >= a_sq,
                    Some(level) => eval_potential(drift, &state.field)? - v0 >= level,
                };
                if exited {
                    return Ok(Some(state.t));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (e, &eps) in params.eps_grid.iter().enumerate() {
        let chunk = &taus[e * params.replicas..(e + 1) * params.replicas];
        let horizon = step_limits[e] as f64 * params.dt;
        let censored_count = chunk.iter().filter(|t| t.is_none()).count();
        let values: Vec<f64> = chunk.iter().map(|t| t.unwrap_or(horizon)).collect();
        let (mean_tau, stderr) = mean_stderr(&values);
        let censored = censored_count == params.replicas
            || censored_count as f64 > params.max_censored_fraction * params.replicas as f64;
        log::info!("eps {eps}: mean exit time {mean_tau:.4} +- {stderr:.4}, {censored_count} censored");
        rows.push(ExitRow {
            epsilon: eps,
            replicas: params.replicas,
            mean_tau,
            stderr,
            median_tau: median(&values),
            censored_count,
            horizon,
            censored,
        });
    }
    let kept: Vec<&ExitRow> = rows.iter().filter(|r| !r.censored && r.mean_tau > 0.0).collect();
    let regression = if kept.len() >= 2 {
        let x: Vec<f64> = kept.iter().map(|r| r.epsilon.powi(-2)).collect();
        let y: Vec<f64> = kept.iter().map(|r| r.mean_tau.ln()).collect();
        linear_fit(&x, &y).ok()
    } else {
        None
    };
    Ok(ExitTimeReport {
        rows,
        regression,
        kappa_witness: kappa,
        trigger: params.trigger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    fn pair(g: GridSpec) -> (GridField, GridField) {
        let mut rng = replica_rng(4, 0);
        (random_admissible(g, 1.0, &mut rng), random_admissible(g, 1.0, &mut rng))
    }

    fn coupling_params(horizon: f64) -> CouplingParams {
        CouplingParams {
            mu: 1.0,
            horizon,
            dt: 1e-3,
            diffusivity: 1.0,
            noise_amplitude: 1.0,
            spectrum: NoiseSpectrum::power_law(0.75),
            stride: 10,
        }
    }

    #[test]
    fn coupling_identical_starts() {
        let g = GridSpec::new(16).unwrap();
        let (u, _) = pair(g);
        let rep = run_coupling(&coupling_params(0.2), &u, &u, 1).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio == 0.0 && r.distance == 0.0));
        assert_eq!(rep.max_ratio, 0.0);
    }

    #[test]
    fn coupling_contracts() {
        let g = GridSpec::new(32).unwrap();
        let (u, v) = pair(g);
        let rep = run_coupling(&coupling_params(1.0), &u, &v, 3).unwrap();
        assert!(rep.max_ratio <= 1.0 + 1e-8, "{}", rep.max_ratio);
        assert!(rep.distance_sq_integral <= rep.integral_bound * (1.0 + 1e-6));
        assert_eq!(rep.rows.len(), 101);
        let mut swapped = u.clone().into_values();
        swapped.swap(g.index(0), g.index(9));
        let bad = GridField::new(g, swapped).unwrap();
        assert!(run_coupling(&coupling_params(1.0), &bad, &v, 3).is_err());
    }

    fn lyapunov_params(drift: DriftSpec, amp: f64) -> LyapunovParams {
        LyapunovParams {
            drift,
            dt: 2e-3,
            diffusivity: 1.0,
            noise_amplitude: amp,
            spectrum: NoiseSpectrum::power_law(0.75),
            horizon: 4.0,
            replicas: 40,
            record_interval: 0.1,
            assumption_samples: 200,
            assumption_radius: 4.0,
        }
    }

    #[test]
    fn lyapunov_zero_noise_monotone_to_mean_mode() {
        let g = GridSpec::new(16).unwrap();
        let u = GridField::cosine_mode(g, 1).axpy(0.5, &GridField::constant(g, 1.0)).unwrap();
        let mut p = lyapunov_params(DriftSpec::Linear { mu: 1.0 }, 0.0);
        p.replicas = 2;
        p.horizon = 1.0;
        let rep = run_lyapunov(&p, std::slice::from_ref(&u), 0).unwrap();
        let series: Vec<f64> = rep.rows.iter().map(|r| r.mean_norm_sq[0]).collect();
        assert!(series.windows(2).all(|w| w[1] <= w[0]));
        // The mean mode only feels the drift: 0.5 (1 - mu dt)^n.
        let last = rep.rows.last().unwrap();
        let mean_mode = 0.25 * (1.0 - p.dt).powi(2 * (last.t / p.dt).round() as i32);
        assert!(series.last().unwrap() - mean_mode < 1e-3 * mean_mode);
        assert!(*series.last().unwrap() >= mean_mode * (1.0 - 1e-12));
        assert!(rep.fits[0].unwrap().c > 0.0);
    }

    #[test]
    fn lyapunov_plateau_matches_energy_balance() {
        let g = GridSpec::new(16).unwrap();
        let u = GridField::constant(g, 1.5);
        let rep = run_lyapunov(&lyapunov_params(DriftSpec::Linear { mu: 1.0 }, 1.0), &[u], 5).unwrap();
        let rel = (rep.plateau - rep.balance_plateau).abs() / rep.balance_plateau;
        assert!(rel < 0.2, "plateau {} vs balance {}", rep.plateau, rep.balance_plateau);
        let fit = rep.fits[0].unwrap();
        assert!(fit.c > 0.0 && fit.k.is_finite());
    }

    #[test]
    fn lyapunov_refuses_non_dissipative_drift() {
        let g = GridSpec::new(16).unwrap();
        let err = run_lyapunov(&lyapunov_params(DriftSpec::Zero, 1.0), &[GridField::zeros(g)], 0).unwrap_err();
        assert!(matches!(err, Error::Dissipativity(_)));
    }

    #[test]
    fn lyapunov_distances_are_non_negative_and_reproducible() {
        let g = GridSpec::new(16).unwrap();
        let a = GridField::constant(g, 1.0);
        let b = GridField::constant(g, -1.0);
        let drift = DriftSpec::WassersteinQuadratic {
            center: GridField::zeros(g),
            weight: 1.0,
        };
        let mut p = lyapunov_params(drift, 1.0);
        p.horizon = 1.0;
        let r1 = run_lyapunov(&p, &[a.clone(), b.clone()], 8).unwrap();
        let r2 = run_lyapunov(&p, &[a, b], 8).unwrap();
        assert!(r1.rows.iter().all(|r| r.energy_distance >= 0.0));
        assert!((r1.rows[0].energy_distance - 4.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r1.rows, r2.rows);
    }

    fn exit_params(g: GridSpec) -> ExitTimeParams {
        ExitTimeParams {
            drift: DriftSpec::WassersteinQuadratic {
                center: GridField::zeros(g),
                weight: 1.0,
            },
            x0: GridField::zeros(g),
            radius: 0.5,
            eps_grid: vec![1.0, 0.7],
            replicas: 20,
            horizon_per_eps: vec![20.0],
            dt: 5e-3,
            spectrum: NoiseSpectrum::Metastable {
                theta1: 1.0,
                theta2: 0.5,
                psi: 2.0,
                beta: 2.0,
                epsilon: 1.0,
                tail_exponent: 0.75,
            },
            trigger: ExitTrigger::Radius,
            max_censored_fraction: 0.1,
        }
    }

    #[test]
    fn exit_times_large_noise_exit_fast() {
        let g = GridSpec::new(16).unwrap();
        let rep = run_exit_times(&exit_params(g), 1).unwrap();
        assert!((rep.kappa_witness - 2.0).abs() < 1e-9);
        for r in &rep.rows {
            assert_eq!(r.censored_count, 0);
            assert!(r.mean_tau > 0.0 && r.mean_tau < 5.0);
        }
        assert!(rep.is_monotone());
        assert!(rep.regression.is_some());
    }

    #[test]
    fn exit_times_fully_censored() {
        let g = GridSpec::new(16).unwrap();
        let mut p = exit_params(g);
        p.radius = 50.0;
        p.horizon_per_eps = vec![0.05];
        let rep = run_exit_times(&p, 1).unwrap();
        assert!(rep.rows.iter().all(|r| r.censored && r.censored_count == r.replicas));
        assert!(rep.regression.is_none());
    }

    #[test]
    fn exit_time_triggers_agree_for_quadratic_well() {
        let g = GridSpec::new(16).unwrap();
        let mut p = exit_params(g);
        let radius = run_exit_times(&p, 2).unwrap();
        p.trigger = ExitTrigger::PotentialGap { kappa: None };
        let gap = run_exit_times(&p, 2).unwrap();
        for (a, b) in radius.rows.iter().zip(&gap.rows) {
            let ratio = a.mean_tau / b.mean_tau;
            assert!((0.25..=4.0).contains(&ratio));
        }
    }

    #[test]
    fn exit_time_preconditions() {
        let g = GridSpec::new(16).unwrap();
        let mut p = exit_params(g);
        p.x0 = GridField::constant(g, 1.0);
        assert!(run_exit_times(&p, 0).is_err());
        let mut p = exit_params(g);
        p.drift = DriftSpec::Zero;
        assert!(matches!(run_exit_times(&p, 0), Err(Error::Unsupported(_))));
        let mut p = exit_params(g);
        p.spectrum = NoiseSpectrum::power_law(0.75);
        assert!(run_exit_times(&p, 0).is_err());
    }
}
