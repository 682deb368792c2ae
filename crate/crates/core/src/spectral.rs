//! Symmetric fields on the circle `(-1/2, 1/2]` and their cosine spectra.
//!
//! A field lives on the uniform grid `x_j = j / N`, `j = -N/2 + 1, ..., N/2`,
//! stored in ascending `x` order. Symmetric fields (`f(x_j) = f(x_{-j})`)
//! are determined by their values at `j = 0, ..., N/2`; the two unpaired
//! points `j = 0` and `j = N/2` are their own mirror images.
//!
//! The spectral twin keeps the cosine modes `m = 0, ..., N/2` against the
//! orthonormal basis `e_0 = 1`, `e_m = sqrt(2) cos(2 pi m x)`. At the Nyquist
//! rank the sampled `sqrt(2) cos(pi N x)` is not unit-norm on the grid, so the
//! band-edge mode uses `cos(pi N x)` instead; this keeps Parseval exact.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by [`to_spectral`] when checking the mirror symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Uniform grid of `n_points` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n_points: usize,
}

impl GridSpec {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 8 || !n_points.is_multiple_of(2) {
            return Err(Error::param("n_points", n_points, "even integers >= 8"));
        }
        Ok(Self { n_points })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `N/2`, the highest retained cosine rank.
    #[inline]
    pub fn half(&self) -> usize {
        self.n_points / 2
    }

    /// Number of cosine modes carried (`N/2 + 1`).
    #[inline]
    pub fn n_modes(&self) -> usize {
        self.half() + 1
    }

    /// Storage index of the grid point with signed offset `j`.
    #[inline]
    pub fn index(&self, j: i64) -> usize {
        debug_assert!(j > -(self.half() as i64) && j <= self.half() as i64);
        (j + self.half() as i64 - 1) as usize
    }

    /// Signed offset `j` of storage index `p`.
    #[inline]
    pub fn offset(&self, p: usize) -> i64 {
        p as i64 - self.half() as i64 + 1
    }

    #[inline]
    pub fn x(&self, p: usize) -> f64 {
        self.offset(p) as f64 / self.n_points as f64
    }

    #[inline]
    pub fn zero_index(&self) -> usize {
        self.half() - 1
    }

    /// Index of the mirror point `-x` (the two unpaired points map to themselves).
    #[inline]
    pub fn mirror(&self, p: usize) -> usize {
        let j = self.offset(p);
        if j == self.half() as i64 {
            p
        } else {
            self.index(-j)
        }
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                left: self.n_points,
                right: other.n_points,
            });
        }
        Ok(())
    }
}

/// Real values on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at grid index {p}",
                values[p]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Caller guarantees length and finiteness.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.n_points()])
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n_points()).map(|p| f(grid.x(p))).collect();
        Self::new(grid, values)
    }

    /// Samples of the unit-norm cosine mode `e_m`.
    pub fn cosine_mode(grid: GridSpec, m: usize) -> Self {
        let values = (0..grid.n_points())
            .map(|p| basis_value(grid, m, grid.offset(p).unsigned_abs() as usize))
            .collect();
        Self::from_raw(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at signed offset `j`.
    pub fn at(&self, j: i64) -> f64 {
        self.values[self.grid.index(j)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `||f||_2^2` with quadrature weight `1/N`.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &GridField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn distance(&self, other: &GridField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(distance_sq(&self.values, &other.values).sqrt())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|f(x) - f(-x)|` over the grid.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.values.len())
            .map(|p| (self.values[p] - self.values[self.grid.mirror(p)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol * self.max_abs().max(1.0)
    }

    /// Orthogonal projection onto symmetric fields (mirror average).
    pub fn symmetrized(&self) -> GridField {
        let mut out = self.values.clone();
        symmetrize_in_place(self.grid, &mut out);
        Self::from_raw(self.grid, out)
    }

    pub fn scaled(&self, s: f64) -> GridField {
        Self::from_raw(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &GridField) -> Result<GridField> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(Self::from_raw(self.grid, values))
    }
}

#[inline]
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

#[inline]
pub(crate) fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

pub(crate) fn symmetrize_in_place(grid: GridSpec, v: &mut [f64]) {
    let half = grid.half() as i64;
    for j in 1..half {
        let (p, q) = (grid.index(j), grid.index(-j));
        let avg = 0.5 * (v[p] + v[q]);
        v[p] = avg;
        v[q] = avg;
    }
}

fn basis_value(grid: GridSpec, m: usize, j: usize) -> f64 {
    let half = grid.half();
    if m == 0 {
        1.0
    } else if m == half {
        if j.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    } else {
        // Reduce m*j mod N before the cosine to keep the argument small.
        let k = (m * j) % grid.n_points();
        SQRT_2 * (2.0 * PI * k as f64 / grid.n_points() as f64).cos()
    }
}

/// Precomputed half-grid cosine transform for one grid size.
#[derive(Debug)]
pub struct SpectralBasis {
    grid: GridSpec,
    /// `forward[m * h1 + j] = w_j e_m(x_j)`.
    forward: Vec<f64>,
    /// `inverse[j * h1 + m] = e_m(x_j)`.
    inverse: Vec<f64>,
    /// `(2 pi m)^2`.
    eigen: Vec<f64>,
}

impl SpectralBasis {
    fn build(grid: GridSpec) -> Self {
        let h1 = grid.n_modes();
        let n = grid.n_points() as f64;
        let mut forward = vec![0.0; h1 * h1];
        let mut inverse = vec![0.0; h1 * h1];
        for m in 0..h1 {
            for j in 0..h1 {
                let b = basis_value(grid, m, j);
                let w = if j == 0 || j == grid.half() { 1.0 } else { 2.0 } / n;
                forward[m * h1 + j] = w * b;
                inverse[j * h1 + m] = b;
            }
        }
        let eigen = (0..h1).map(|m| (2.0 * PI * m as f64).powi(2)).collect();
        Self {
            grid,
            forward,
            inverse,
            eigen,
        }
    }

    /// Shared basis for `grid`, built on first use.
    pub fn for_grid(grid: GridSpec) -> Arc<SpectralBasis> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<SpectralBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(b) = cache.read().expect("basis cache poisoned").get(&grid.n_points) {
            return Arc::clone(b);
        }
        let mut w = cache.write().expect("basis cache poisoned");
        Arc::clone(
            w.entry(grid.n_points)
                .or_insert_with(|| Arc::new(SpectralBasis::build(grid))),
        )
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `(2 pi m)^2` for `m = 0..=N/2`.
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        &self.eigen
    }

    /// Cosine coefficients of a full-grid field, reading only `j >= 0`.
    /// The field must already be symmetric.
    pub(crate) fn forward_into(&self, values: &[f64], modes: &mut [f64]) {
        let h1 = self.grid.n_modes();
        let z = self.grid.zero_index();
        let half = &values[z..z + h1];
        for (m, out) in modes.iter_mut().enumerate() {
            let row = &self.forward[m * h1..(m + 1) * h1];
            *out = row.iter().zip(half).map(|(a, b)| a * b).sum();
        }
    }

    /// Full-grid symmetric field from cosine coefficients.
    pub(crate) fn inverse_into(&self, modes: &[f64], values: &mut [f64]) {
        let h1 = self.grid.n_modes();
        let z = self.grid.zero_index();
        for j in 0..h1 {
            let row = &self.inverse[j * h1..(j + 1) * h1];
            values[z + j] = row.iter().zip(modes).map(|(a, b)| a * b).sum();
        }
        for j in 1..self.grid.half() {
            values[z - j] = values[z + j];
        }
    }
}

/// Cosine-mode coefficients `f_m = <f, e_m>`, `m = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    modes: Vec<f64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, modes: Vec<f64>) -> Result<Self> {
        if modes.len() != grid.n_modes() {
            return Err(Error::InvalidInput(format!(
                "expected {} modes, got {}",
                grid.n_modes(),
                modes.len()
            )));
        }
        if modes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectral mode".into()));
        }
        Ok(Self { grid, modes })
    }

    pub(crate) fn from_raw(grid: GridSpec, modes: Vec<f64>) -> Self {
        Self { grid, modes }
    }

    /// Symmetrizes `f` first; any asymmetry above [`SYMMETRY_TOL`] is logged.
    pub fn from_grid_symmetrizing(f: &GridField) -> Self {
        if !f.is_symmetric(SYMMETRY_TOL) {
            log::warn!(
                "symmetrizing field with mirror defect {:.3e}",
                f.symmetry_defect()
            );
        }
        let sym = f.symmetrized();
        let mut modes = vec![0.0; f.grid.n_modes()];
        SpectralBasis::for_grid(f.grid).forward_into(sym.values(), &mut modes);
        Self::from_raw(f.grid, modes)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn modes(&self) -> &[f64] {
        &self.modes
    }

    /// `sum_m f_m^2`.
    pub fn norm_sq(&self) -> f64 {
        self.modes.iter().map(|v| v * v).sum()
    }
}

pub fn to_spectral(f: &GridField) -> Result<SpectralField> {
    let defect = f.symmetry_defect();
    let tol = SYMMETRY_TOL * f.max_abs().max(1.0);
    if defect > tol {
        return Err(Error::SymmetryViolation {
            max_deviation: defect,
            tolerance: tol,
        });
    }
    // Mirror pairs may differ by round-off; average them so the half-grid
    // read is exact.
    let sym = f.symmetrized();
    let mut modes = vec![0.0; f.grid.n_modes()];
    SpectralBasis::for_grid(f.grid).forward_into(sym.values(), &mut modes);
    Ok(SpectralField::from_raw(f.grid, modes))
}

pub fn to_grid(s: &SpectralField) -> Result<GridField> {
    if s.modes.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite spectral mode".into()));
    }
    let mut values = vec![0.0; s.grid.n_points()];
    SpectralBasis::for_grid(s.grid).inverse_into(&s.modes, &mut values);
    Ok(GridField::from_raw(s.grid, values))
}

/// Exact heat semigroup `exp(t kappa Laplacian)` on the retained band.
pub fn heat_propagate(s: &SpectralField, t: f64, kappa: f64) -> Result<SpectralField> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::param("t", t, "[0, inf)"));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::param("kappa", kappa, "[0, inf)"));
    }
    let modes = s
        .modes
        .iter()
        .enumerate()
        .map(|(m, v)| v * heat_factor(m, t * kappa))
        .collect();
    Ok(SpectralField::from_raw(s.grid, modes))
}

#[inline]
pub(crate) fn heat_factor(m: usize, kappa_t: f64) -> f64 {
    (-(2.0 * PI * m as f64).powi(2) * kappa_t).exp()
}

/// `||grad f||_2^2 = sum_m (2 pi m)^2 f_m^2`.
pub fn grad_norm_sq(s: &SpectralField) -> f64 {
    s.modes
        .iter()
        .enumerate()
        .map(|(m, v)| (2.0 * PI * m as f64).powi(2) * v * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(grid: GridSpec, rng: &mut ChaCha8Rng) -> GridField {
        let mut v: Vec<f64> = (0..grid.n_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        symmetrize_in_place(grid, &mut v);
        GridField::new(grid, v).unwrap()
    }

    #[test]
    fn grid_rejects_odd_and_small() {
        assert!(GridSpec::new(7).is_err());
        assert!(GridSpec::new(6).is_err());
        assert!(GridSpec::new(9).is_err());
        assert!(GridSpec::new(8).is_ok());
    }

    #[test]
    fn index_layout() {
        let g = GridSpec::new(8).unwrap();
        assert_eq!(g.offset(0), -3);
        assert_eq!(g.offset(7), 4);
        assert_eq!(g.zero_index(), 3);
        assert_eq!(g.mirror(g.index(2)), g.index(-2));
        assert_eq!(g.mirror(7), 7);
        assert_eq!(g.mirror(3), 3);
    }

    #[test]
    fn constant_field_has_only_mean_mode() {
        let g = GridSpec::new(32).unwrap();
        let s = to_spectral(&GridField::constant(g, 3.0)).unwrap();
        assert!((s.modes()[0] - 3.0).abs() < 1e-14);
        assert!(s.modes()[1..].iter().all(|m| m.abs() < 1e-13));
    }

    #[test]
    fn first_cosine_is_unit_mode() {
        let g = GridSpec::new(64).unwrap();
        let s = to_spectral(&GridField::cosine_mode(g, 1)).unwrap();
        for (m, v) in s.modes().iter().enumerate() {
            let want = if m == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "mode {m}: {v}");
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let g = GridSpec::new(128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_symmetric(g, &mut rng);
        let s = to_spectral(&f).unwrap();
        // Trapezoid on the periodic grid is the plain 1/N sum.
        let quad: f64 = f.values().iter().map(|v| v * v).sum::<f64>() / 128.0;
        assert!((s.norm_sq() - quad).abs() < 1e-10);
        let back = to_grid(&s).unwrap();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn to_grid_basic() {
        let g = GridSpec::new(16).unwrap();
        let z = to_grid(&SpectralField::new(g, vec![0.0; 9]).unwrap()).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        let mut m = vec![0.0; 9];
        m[0] = 1.0;
        let one = to_grid(&SpectralField::new(g, m).unwrap()).unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn asymmetric_and_non_finite_rejected() {
        let g = GridSpec::new(8).unwrap();
        let mut v = vec![0.0; 8];
        v[g.index(1)] = 1.0;
        let f = GridField::new(g, v).unwrap();
        assert!(matches!(
            to_spectral(&f),
            Err(Error::SymmetryViolation { .. })
        ));
        assert!(GridField::new(g, vec![f64::NAN; 8]).is_err());
        assert!(SpectralField::new(g, vec![f64::INFINITY; 5]).is_err());
    }

    #[test]
    fn heat_identity_and_mass() {
        let g = GridSpec::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = to_spectral(&random_symmetric(g, &mut rng)).unwrap();
        assert_eq!(heat_propagate(&s, 0.0, 1.0).unwrap(), s);
        let c = to_spectral(&GridField::constant(g, 2.5)).unwrap();
        let hc = heat_propagate(&c, 3.0, 1.0).unwrap();
        assert!((hc.modes()[0] - 2.5).abs() < 1e-14);
        assert_eq!(heat_propagate(&s, 1.0, 0.3).unwrap().modes()[0], s.modes()[0]);
        assert!(heat_propagate(&s, -1.0, 1.0).is_err());
        assert!(heat_propagate(&s, 1.0, -1.0).is_err());
    }

    /// Explicit second-order finite-difference heat solver on the same grid.
    fn fd_heat(values: &[f64], t: f64, dt: f64) -> Vec<f64> {
        let n = values.len();
        let h2 = (1.0 / n as f64).powi(2);
        let mut u = values.to_vec();
        let steps = (t / dt).round() as usize;
        for _ in 0..steps {
            let prev = u.clone();
            for p in 0..n {
                let l = prev[(p + n - 1) % n];
                let r = prev[(p + 1) % n];
                u[p] = prev[p] + dt * (l - 2.0 * prev[p] + r) / h2;
            }
        }
        u
    }

    #[test]
    fn heat_matches_finite_differences_on_first_mode() {
        let g = GridSpec::new(64).unwrap();
        let e1 = GridField::cosine_mode(g, 1);
        let s = heat_propagate(&to_spectral(&e1).unwrap(), 0.01, 1.0).unwrap();
        let exact = (-4.0 * PI * PI * 0.01_f64).exp();
        assert!((s.modes()[1] - exact).abs() < 1e-14);
        let fd = fd_heat(e1.values(), 0.01, 1e-6);
        let fd_amp = to_spectral(&GridField::new(g, fd).unwrap()).unwrap().modes()[1];
        assert!(((fd_amp - exact) / exact).abs() < 1e-3);
    }

    #[test]
    fn grad_norm_examples() {
        let g = GridSpec::new(64).unwrap();
        assert!(grad_norm_sq(&to_spectral(&GridField::constant(g, 1.3)).unwrap()) < 1e-20);
        assert_eq!(
            grad_norm_sq(&SpectralField::new(g, {
                let mut m = vec![0.0; 33];
                m[0] = 1.3;
                m
            })
            .unwrap()),
            0.0
        );
        let e1 = to_spectral(&GridField::cosine_mode(g, 1)).unwrap();
        assert!((grad_norm_sq(&e1) - 4.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn grad_norm_matches_centered_differences() {
        // Smooth random field: centered differences at N = 256 carry a
        // relative error of about (2 pi m / N)^2 / 6 on mode m.
        let g = GridSpec::new(256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut modes = vec![0.0; g.n_modes()];
        for (m, v) in modes.iter_mut().enumerate().take(4) {
            *v = rng.random_range(-1.0..1.0) / (1.0 + m as f64).powi(2);
        }
        let s = SpectralField::new(g, modes).unwrap();
        let f = to_grid(&s).unwrap();
        let n = g.n_points();
        let h = 1.0 / n as f64;
        let v = f.values();
        let fd: f64 = (0..n)
            .map(|p| ((v[(p + 1) % n] - v[(p + n - 1) % n]) / (2.0 * h)).powi(2))
            .sum::<f64>()
            / n as f64;
        let spec = grad_norm_sq(&s);
        assert!(((fd - spec) / spec).abs() < 1e-3, "fd {fd} spec {spec}");
    }
}
