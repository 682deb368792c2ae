//! Coloured Brownian increments on the cosine modes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridField, GridSpec, SpectralBasis};

/// Per-replica random stream.
pub type ReplicaRng = ChaCha8Rng;

/// Stream `replica` of the ChaCha generator keyed by `base_seed`.
///
/// Streams are disjoint counter ranges, so replica results do not depend on
/// how replicas are scheduled.
pub fn replica_rng(base_seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpectrum {
    /// `lambda_m = prefactor * m^-lambda_exponent` from `cutoff_rank` on,
    /// `min(1, prefactor)` below it.
    PowerLaw {
        lambda_exponent: f64,
        #[serde(default = "one")]
        prefactor: f64,
        #[serde(default = "one_usize")]
        cutoff_rank: usize,
    },
    /// Small-noise spectrum: `sqrt(theta1)` up to rank `eps^-beta`,
    /// `sqrt(theta2)` up to `psi * eps^-beta`, then `k^-tail_exponent`.
    Metastable {
        theta1: f64,
        theta2: f64,
        psi: f64,
        #[serde(default = "two")]
        beta: f64,
        epsilon: f64,
        #[serde(default = "three_quarters")]
        tail_exponent: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn three_quarters() -> f64 {
    0.75
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if v > 0.5 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "the open interval (1/2, 1)"))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, v, "(0, inf)"))
    }
}

/// `floor(x)` that does not lose an integer to round-off, e.g. `0.2^-2`.
fn robust_floor(x: f64) -> usize {
    (x * (1.0 + 1e-12)).floor() as usize
}

impl NoiseSpectrum {
    pub fn power_law(lambda_exponent: f64) -> Self {
        NoiseSpectrum::PowerLaw {
            lambda_exponent,
            prefactor: 1.0,
            cutoff_rank: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpectrum::PowerLaw {
                lambda_exponent,
                prefactor,
                cutoff_rank,
            } => {
                check_exponent("lambda_exponent", lambda_exponent)?;
                if !(prefactor > 0.0 && prefactor <= 1.0) {
                    return Err(Error::param("prefactor", prefactor, "(0, 1]"));
                }
                if cutoff_rank < 1 {
                    return Err(Error::param("cutoff_rank", cutoff_rank, "integers >= 1"));
                }
            }
            NoiseSpectrum::Metastable {
                theta1,
                theta2,
                psi,
                beta,
                epsilon,
                tail_exponent,
            } => {
                check_positive("theta1", theta1)?;
                check_positive("theta2", theta2)?;
                if !(psi > 1.0 && psi.is_finite()) {
                    return Err(Error::param("psi", psi, "(1, inf), i.e. psi > 1"));
                }
                check_positive("beta", beta)?;
                check_positive("epsilon", epsilon)?;
                check_exponent("tail_exponent", tail_exponent)?;
            }
        }
        Ok(())
    }

    /// Same spectrum at a different noise intensity (metastable variant only).
    pub fn with_epsilon(&self, eps: f64) -> Self {
        match self.clone() {
            NoiseSpectrum::Metastable {
                theta1,
                theta2,
                psi,
                beta,
                tail_exponent,
                ..
            } => NoiseSpectrum::Metastable {
                theta1,
                theta2,
                psi,
                beta,
                epsilon: eps,
                tail_exponent,
            },
            other => other,
        }
    }

    /// Rank thresholds `(floor(eps^-beta), floor(psi eps^-beta))`.
    pub fn metastable_thresholds(&self) -> Option<(usize, usize)> {
        match *self {
            NoiseSpectrum::Metastable {
                psi, beta, epsilon, ..
            } => {
                let base = epsilon.powf(-beta);
                Some((robust_floor(base), robust_floor(psi * base)))
            }
            _ => None,
        }
    }

    fn eigenvalue_unchecked(&self, m: usize) -> f64 {
        match *self {
            NoiseSpectrum::PowerLaw {
                lambda_exponent,
                prefactor,
                cutoff_rank,
            } => {
                if m >= cutoff_rank {
                    prefactor * (m as f64).powf(-lambda_exponent)
                } else {
                    prefactor.min(1.0)
                }
            }
            NoiseSpectrum::Metastable {
                theta1,
                theta2,
                tail_exponent,
                ..
            } => {
                let (k1, k2) = self.metastable_thresholds().expect("metastable");
                if m <= k1 {
                    theta1.sqrt()
                } else if m <= k2 {
                    theta2.sqrt()
                } else {
                    (m as f64).powf(-tail_exponent)
                }
            }
        }
    }
}

/// `(lambda_0, ..., lambda_max_mode)`.
pub fn eigenvalues(spec: &NoiseSpectrum, max_mode: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if max_mode < 1 {
        return Err(Error::param("max_mode", max_mode, "integers >= 1"));
    }
    Ok((0..=max_mode).map(|m| spec.eigenvalue_unchecked(m)).collect())
}

/// Truncated quadratic-variation rate `sum_{m <= max_mode} lambda_m^2`.
pub fn c_lambda(spec: &NoiseSpectrum, max_mode: usize) -> Result<f64> {
    spec.validate()?;
    Ok((0..=max_mode)
        .map(|m| spec.eigenvalue_unchecked(m).powi(2))
        .sum())
}

/// One Brownian increment over a step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub field: GridField,
    pub step: f64,
}

/// Spectrum pre-evaluated on a grid's retained band.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    amplitudes: Vec<f64>,
    c_lambda: f64,
}

impl NoiseSampler {
    pub fn new(spec: &NoiseSpectrum, grid: GridSpec) -> Result<Self> {
        let amplitudes = eigenvalues(spec, grid.half())?;
        let c_lambda = amplitudes.iter().map(|l| l * l).sum();
        Ok(Self {
            amplitudes,
            c_lambda,
        })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// `c_lambda` truncated at the grid's Nyquist rank.
    pub fn c_lambda(&self) -> f64 {
        self.c_lambda
    }

    /// Writes `lambda_m sqrt(dt) xi_m` into `modes`.
    #[inline]
    pub fn fill_modes<R: Rng + ?Sized>(&self, rng: &mut R, sqrt_dt: f64, modes: &mut [f64]) {
        for (out, lam) in modes.iter_mut().zip(&self.amplitudes) {
            let xi: f64 = rng.sample(StandardNormal);
            *out = lam * sqrt_dt * xi;
        }
    }
}

pub fn sample_increment<R: Rng + ?Sized>(
    spec: &NoiseSpectrum,
    grid: GridSpec,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", dt, "(0, inf)"));
    }
    let sampler = NoiseSampler::new(spec, grid)?;
    let mut modes = vec![0.0; grid.n_modes()];
    sampler.fill_modes(rng, dt.sqrt(), &mut modes);
    let mut values = vec![0.0; grid.n_points()];
    SpectralBasis::for_grid(grid).inverse_into(&modes, &mut values);
    Ok(NoiseIncrement {
        field: GridField::from_raw(grid, values),
        step: dt,
    })
}
