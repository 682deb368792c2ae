//! Drift library and structural diagnostics.
//!
//! Every drift maps symmetric fields to symmetric fields. The gradient
//! variants come with their potential `V`, normalised so that the drift is
//! `-DV` with respect to the `L^2` pairing on the circle.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rearrange::{is_admissible, rearrange};
use crate::spectral::{dot, grad_norm_sq, norm_sq, GridField, GridSpec, SpectralField};

/// `1 / c_P^2` for the circle of unit length.
pub const INV_POINCARE_SQ: f64 = 4.0 * PI * PI;

/// Natural cubic spline of the kernel derivative on `[0, r_max]`,
/// odd-extended to `[-r_max, r_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
    /// `int_0^{knots[i]} S`.
    cumulative: Vec<f64>,
}

impl KernelTable {
    /// Builds the spline from `(r, grad w(r))` rows with `r >= 0` ascending.
    /// A missing `r = 0` row is filled with `grad w(0) = 0`.
    pub fn new(rows: &[(f64, f64)]) -> Result<Self> {
        let mut knots = vec![0.0];
        let mut values = vec![0.0];
        for &(r, g) in rows {
            if !r.is_finite() || !g.is_finite() || r < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "kernel row ({r}, {g}) must be finite with r >= 0"
                )));
            }
            if r == 0.0 {
                if g != 0.0 {
                    return Err(Error::InvalidInput(
                        "odd kernel derivative must vanish at r = 0".into(),
                    ));
                }
                continue;
            }
            if r <= *knots.last().expect("non-empty") {
                return Err(Error::InvalidInput(
                    "kernel abscissae must be strictly increasing".into(),
                ));
            }
            knots.push(r);
            values.push(g);
        }
        if knots.len() < 3 {
            return Err(Error::InvalidInput(
                "kernel table needs at least two rows with r > 0".into(),
            ));
        }
        let second = natural_spline_second_derivatives(&knots, &values);
        let mut table = Self {
            knots,
            values,
            second,
            cumulative: Vec::new(),
        };
        let mut cumulative = vec![0.0];
        for i in 0..table.knots.len() - 1 {
            let h = table.knots[i + 1] - table.knots[i];
            let prev = *cumulative.last().expect("non-empty");
            cumulative.push(prev + table.segment_integral(i, h));
        }
        table.cumulative = cumulative;
        Ok(table)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let parse = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok());
            match (parse(0), parse(1)) {
                (Some(r), Some(g)) if rec.len() == 2 => rows.push((r, g)),
                // Tolerate one header line.
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "{}: line {} is not a two-column numeric row",
                        path.display(),
                        line + 1
                    )))
                }
            }
        }
        Self::new(&rows)
    }

    pub fn max_abs_argument(&self) -> f64 {
        *self.knots.last().expect("non-empty")
    }

    fn segment(&self, r: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= r);
        i.saturating_sub(1).min(self.knots.len() - 2)
    }

    fn segment_slope(&self, i: usize, h: f64) -> f64 {
        (self.values[i + 1] - self.values[i]) / h - h * (2.0 * self.second[i] + self.second[i + 1]) / 6.0
    }

    fn segment_integral(&self, i: usize, t: f64) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        let b = self.segment_slope(i, h);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        self.values[i] * t + b * t * t / 2.0 + m0 * t.powi(3) / 6.0 + (m1 - m0) / (24.0 * h) * t.powi(4)
    }

    /// Spline value on `[0, r_max]`.
    fn eval_positive(&self, r: f64) -> f64 {
        let i = self.segment(r);
        let h = self.knots[i + 1] - self.knots[i];
        let t = r - self.knots[i];
        let b = self.segment_slope(i, h);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        self.values[i] + b * t + m0 * t * t / 2.0 + (m1 - m0) / (6.0 * h) * t.powi(3)
    }

    fn integral_positive(&self, r: f64) -> f64 {
        let i = self.segment(r);
        self.cumulative[i] + self.segment_integral(i, r - self.knots[i])
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for i in 1..k {
        let lower = x[i + 1] - x[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

/// Interaction kernel `w`, described through its odd derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionKernel {
    /// `grad w(r) = sum_k c_k r^(2k+1)`.
    OddPolynomial(Vec<f64>),
    Table(KernelTable),
}

static RANGE_WARNED: AtomicBool = AtomicBool::new(false);

impl InteractionKernel {
    fn gradient(&self, r: f64, strict: bool) -> Result<f64> {
        match self {
            InteractionKernel::OddPolynomial(c) => {
                let r2 = r * r;
                Ok(r * c.iter().rev().fold(0.0, |acc, ck| acc * r2 + ck))
            }
            InteractionKernel::Table(t) => {
                let a = r.abs();
                let max = t.max_abs_argument();
                let v = if a > max {
                    if strict {
                        return Err(Error::KernelRange { value: r, max });
                    }
                    if !RANGE_WARNED.swap(true, Ordering::Relaxed) {
                        log::warn!("interaction argument {r:.4} clamped to tabulated range {max:.4}");
                    }
                    t.eval_positive(max)
                } else {
                    t.eval_positive(a)
                };
                Ok(v.copysign(r))
            }
        }
    }

    /// `w(r)` with `w(0) = 0`.
    fn potential(&self, r: f64, strict: bool) -> Result<f64> {
        match self {
            InteractionKernel::OddPolynomial(c) => {
                let r2 = r * r;
                Ok(c
                    .iter()
                    .enumerate()
                    .map(|(k, ck)| ck * r2.powi(k as i32 + 1) / (2 * k + 2) as f64)
                    .sum())
            }
            InteractionKernel::Table(t) => {
                let a = r.abs();
                let max = t.max_abs_argument();
                if a > max {
                    if strict {
                        return Err(Error::KernelRange { value: r, max });
                    }
                    Ok(t.integral_positive(max) + t.eval_positive(max) * (a - max))
                } else {
                    Ok(t.integral_positive(a))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero,
    /// `F(u) = -mu u`.
    Linear { mu: f64 },
    /// `F(u) = -2 w (u - center)`, the gradient of `w W_2^2(., center)`.
    WassersteinQuadratic { center: GridField, weight: f64 },
    /// Mean-field interaction plus a quadratic confinement of strength `penalty`.
    Interaction {
        kernel: InteractionKernel,
        penalty: f64,
        strict_range: bool,
    },
    /// `V(u) = s ||u - a||^2 ||u - b||^2`.
    DoubleWell { a: GridField, b: GridField, scale: f64 },
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DriftSpec::Zero => {}
            DriftSpec::Linear { mu } => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::param("mu", mu, "(0, inf)"));
                }
            }
            DriftSpec::WassersteinQuadratic { center, weight } => {
                if !(*weight > 0.0 && weight.is_finite()) {
                    return Err(Error::param("weight", weight, "(0, inf)"));
                }
                if !is_admissible(center) {
                    return Err(Error::InvalidInput(
                        "Wasserstein-quadratic center must be symmetric non-increasing".into(),
                    ));
                }
            }
            DriftSpec::Interaction { penalty, .. } => {
                if !(*penalty >= 0.0 && penalty.is_finite()) {
                    return Err(Error::param("penalty", penalty, "[0, inf)"));
                }
            }
            DriftSpec::DoubleWell { a, b, scale } => {
                a.grid().check_same(&b.grid())?;
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::param("scale", scale, "(0, inf)"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftSpec::Zero => "zero",
            DriftSpec::Linear { .. } => "linear",
            DriftSpec::WassersteinQuadratic { .. } => "wasserstein-quadratic",
            DriftSpec::Interaction { .. } => "interaction",
            DriftSpec::DoubleWell { .. } => "double-well",
        }
    }

    pub fn is_gradient(&self) -> bool {
        !matches!(self, DriftSpec::Zero)
    }

    /// Writes `F(u)` into `out`. Both slices have the grid's length.
    pub(crate) fn drift_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            DriftSpec::Zero => out.fill(0.0),
            DriftSpec::Linear { mu } => {
                for (o, x) in out.iter_mut().zip(u) {
                    *o = -mu * x;
                }
            }
            DriftSpec::WassersteinQuadratic { center, weight } => {
                for ((o, x), c) in out.iter_mut().zip(u).zip(center.values()) {
                    *o = -2.0 * weight * (x - c);
                }
            }
            DriftSpec::Interaction {
                kernel,
                penalty,
                strict_range,
            } => {
                let n = u.len() as f64;
                for (o, &ui) in out.iter_mut().zip(u) {
                    let mut s = 0.0;
                    for &uj in u {
                        s += kernel.gradient(ui - uj, *strict_range)?;
                    }
                    *o = -(2.0 * s / n + 2.0 * penalty * ui);
                }
            }
            DriftSpec::DoubleWell { a, b, scale } => {
                let da = crate::spectral::distance_sq(u, a.values());
                let db = crate::spectral::distance_sq(u, b.values());
                for (((o, x), ai), bi) in out.iter_mut().zip(u).zip(a.values()).zip(b.values()) {
                    *o = -scale * (2.0 * (x - ai) * db + 2.0 * (x - bi) * da);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_grid(&self, grid: GridSpec) -> Result<()> {
        match self {
            DriftSpec::WassersteinQuadratic { center, .. } => center.grid().check_same(&grid),
            DriftSpec::DoubleWell { a, .. } => a.grid().check_same(&grid),
            _ => Ok(()),
        }
    }

    /// Finite-difference witness of the local Lipschitz constant at `u`.
    pub fn local_lipschitz(&self, u: &GridField) -> Result<f64> {
        let grid = u.grid();
        let h = 1e-4 * (1.0 + u.norm());
        let base = eval_drift(self, u)?;
        let centered: Vec<f64> = {
            let m = u.mean();
            u.values().iter().map(|v| v - m).collect()
        };
        let mut directions = vec![
            GridField::constant(grid, 1.0),
            GridField::cosine_mode(grid, 1),
            GridField::cosine_mode(grid, grid.half() / 2),
        ];
        if norm_sq(&centered) > 0.0 {
            let f = GridField::from_raw(grid, centered);
            directions.push(f.scaled(1.0 / f.norm()));
        }
        let mut best: f64 = 0.0;
        for d in &directions {
            let moved = eval_drift(self, &u.axpy(h, d)?)?;
            best = best.max(moved.distance(&base)? / (h * d.norm()));
        }
        Ok(best)
    }
}

pub fn eval_drift(spec: &DriftSpec, u: &GridField) -> Result<GridField> {
    if let Some(v) = u.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {v}")));
    }
    spec.check_grid(u.grid())?;
    let mut out = vec![0.0; u.values().len()];
    spec.drift_into(u.values(), &mut out)?;
    Ok(GridField::from_raw(u.grid(), out))
}

/// Potential `V` with `F = -DV`.
pub fn eval_potential(spec: &DriftSpec, u: &GridField) -> Result<f64> {
    spec.check_grid(u.grid())?;
    let v = u.values();
    match spec {
        DriftSpec::Zero => Err(Error::Unsupported(
            "the zero drift carries no potential".into(),
        )),
        DriftSpec::Linear { mu } => Ok(0.5 * mu * norm_sq(v)),
        DriftSpec::WassersteinQuadratic { center, weight } => {
            Ok(weight * crate::spectral::distance_sq(v, center.values()))
        }
        DriftSpec::Interaction {
            kernel,
            penalty,
            strict_range,
        } => {
            let n = v.len() as f64;
            let mut s = 0.0;
            for &ui in v {
                for &uj in v {
                    s += kernel.potential(ui - uj, *strict_range)?;
                }
            }
            Ok(s / (n * n) + penalty * norm_sq(v))
        }
        DriftSpec::DoubleWell { a, b, scale } => Ok(scale
            * crate::spectral::distance_sq(v, a.values())
            * crate::spectral::distance_sq(v, b.values())),
    }
}

/// Empirically binding constants of the structural drift assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub radius: f64,
    /// Smallest `c_F` with `||F(u)||^2 <= c_F (1 + ||u||^2)` on the samples.
    pub growth_cf: f64,
    /// Smallest `C_F` with `||grad F(u)||^2 <= C_F (1 + ||grad u||^2)`.
    pub gradient_cf: f64,
    /// Witnessed `C_L`, `c_1`, `c_2` in
    /// `<F(u), u> <= C_L + c_1 ||u - mean||^2 - c_2 mean^2`.
    pub c_l: f64,
    pub c1: f64,
    pub c2: f64,
    /// `min(1/c_P^2 - c_1, c_2)`; positive iff the dissipativity bound holds.
    pub dissipativity_margin: f64,
    /// Largest `||F(u) - F(v)||` over sampled pairs with `||u - v|| <= R`.
    pub oscillation_co: f64,
    /// Largest `||F(u) - F(v)|| / ||u - v||` over the same pairs.
    pub lipschitz: f64,
    pub dissipativity_violated: bool,
}

impl AssumptionReport {
    pub fn table(&self) -> String {
        let rows = [
            ("samples", self.samples as f64),
            ("radius", self.radius),
            ("growth c_F", self.growth_cf),
            ("gradient C_F", self.gradient_cf),
            ("C_L", self.c_l),
            ("c_1", self.c1),
            ("c_2", self.c2),
            ("dissipativity margin", self.dissipativity_margin),
            ("oscillation C_O(R)", self.oscillation_co),
            ("Lipschitz witness", self.lipschitz),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            s.push_str(&format!("{k:<22} {v:>14.6e}\n"));
        }
        s.push_str(&format!(
            "{:<22} {:>14}\n",
            "dissipativity",
            if self.dissipativity_violated { "VIOLATED" } else { "ok" }
        ));
        s
    }
}

/// Random admissible field: mean uniform in `[-R, R]`, a rearranged
/// zero-mean oscillation filling part of the remaining norm budget.
pub fn random_admissible<R: Rng + ?Sized>(grid: GridSpec, radius: f64, rng: &mut R) -> GridField {
    let mean = rng.random_range(-radius..=radius);
    let budget = (radius * radius - mean * mean).max(0.0).sqrt();
    let osc_norm = budget * rng.random::<f64>();
    let modes = rng.random_range(1..=grid.half().min(8));
    let mut coeffs = vec![0.0; grid.n_modes()];
    for (m, c) in coeffs.iter_mut().enumerate().take(modes + 1).skip(1) {
        *c = rng.random_range(-1.0..1.0) / m as f64;
    }
    let s = SpectralField::from_raw(grid, coeffs);
    let osc = crate::spectral::to_grid(&s).expect("finite modes");
    let (osc, _) = rearrange(&osc).expect("finite field");
    let centred_mean = osc.mean();
    let mut v: Vec<f64> = osc.values().iter().map(|x| x - centred_mean).collect();
    let n = norm_sq(&v).sqrt();
    let scale = if n > 0.0 { osc_norm / n } else { 0.0 };
    for x in &mut v {
        *x = mean + scale * *x;
    }
    GridField::from_raw(grid, v)
}

pub fn check_assumptions<R: Rng + ?Sized>(
    spec: &DriftSpec,
    grid: GridSpec,
    sample_budget: usize,
    radius: f64,
    rng: &mut R,
) -> Result<AssumptionReport> {
    if sample_budget < 100 {
        return Err(Error::param("sample_budget", sample_budget, "integers >= 100"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", radius, "(0, inf)"));
    }
    spec.validate()?;
    spec.check_grid(grid)?;

    struct Sample {
        mean_sq: f64,
        osc_sq: f64,
        inner: f64,
    }
    let mut samples = Vec::with_capacity(sample_budget);
    let mut growth: f64 = 0.0;
    let mut gradient: f64 = 0.0;
    let mut oscillation: f64 = 0.0;
    let mut lipschitz: f64 = 0.0;
    let mut c2 = f64::INFINITY;
    let mut c1 = f64::NEG_INFINITY;
    for _ in 0..sample_budget {
        let u = random_admissible(grid, radius, rng);
        let f = eval_drift(spec, &u)?;
        let ubar = u.mean();
        let fbar = f.mean();
        let osc_sq = (u.norm_sq() - ubar * ubar).max(0.0);
        let inner = dot(f.values(), u.values());

        growth = growth.max(f.norm_sq() / (1.0 + u.norm_sq()));
        let gu = grad_norm_sq(&SpectralField::from_grid_symmetrizing(&u.symmetrized()));
        let gf = grad_norm_sq(&SpectralField::from_grid_symmetrizing(&f.symmetrized()));
        gradient = gradient.max(gf / (1.0 + gu));

        if ubar.abs() >= 0.5 * radius {
            c2 = c2.min(-fbar * ubar / (ubar * ubar));
        }
        // Only far-out samples witness the rates; the bounded region is
        // absorbed by C_L.
        if osc_sq >= 0.25 * radius * radius {
            let inner_osc = inner - fbar * ubar;
            c1 = c1.max(inner_osc / osc_sq);
        }

        // Partner within distance R: rearranged perturbation of u.
        let mut delta = random_admissible(grid, 1.0, rng).into_values();
        let phase = rng.random_range(0..grid.n_points());
        delta.rotate_left(phase);
        let d = GridField::from_raw(grid, delta).symmetrized();
        let dn = d.norm();
        if dn > 0.0 {
            let target = radius * rng.random::<f64>();
            let (v, _) = rearrange(&u.axpy(target / dn, &d)?)?;
            let dist = u.distance(&v)?;
            let fv = eval_drift(spec, &v)?;
            let df = f.distance(&fv)?;
            oscillation = oscillation.max(df);
            if dist > 1e-12 {
                lipschitz = lipschitz.max(df / dist);
            }
        }
        samples.push(Sample {
            mean_sq: ubar * ubar,
            osc_sq,
            inner,
        });
    }
    let c1 = c1.max(0.0);
    if !c2.is_finite() {
        c2 = 0.0;
    }
    let c_l = samples
        .iter()
        .map(|s| s.inner - c1 * s.osc_sq + c2 * s.mean_sq)
        .fold(0.0_f64, f64::max);
    let margin = (INV_POINCARE_SQ - c1).min(c2);
    Ok(AssumptionReport {
        samples: sample_budget,
        radius,
        growth_cf: growth,
        gradient_cf: gradient,
        c_l,
        c1,
        c2,
        dissipativity_margin: margin,
        oscillation_co: oscillation,
        lipschitz,
        dissipativity_violated: c1 >= INV_POINCARE_SQ || c2 <= 0.0,
    })
}
