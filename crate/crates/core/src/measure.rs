//! Correspondence between admissible fields and probability measures on the
//! line: an admissible field is the quantile function of its value law.
//!
//! Chart: `q(p) = u((1 - p) / 2)` on the right half circle, so `q(1) = u(0)`
//! is the maximum and `q` increases with `p`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rearrange::{is_admissible, placement_order, rearrange, rearranged_distance};
use crate::spectral::{GridField, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical measure needs at least one sample".into()));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample {v}")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    /// Value law of `u` under the uniform measure on the grid.
    pub fn of_field(u: &GridField) -> Self {
        let mut samples = u.values().to_vec();
        samples.sort_by(f64::total_cmp);
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Left-continuous inverse CDF, `x_(ceil(pK))`.
    pub fn quantile(&self, p: f64) -> f64 {
        let k = self.samples.len();
        let idx = ((p * k as f64).ceil() as usize).clamp(1, k) - 1;
        self.samples[idx]
    }

    /// Exact `W_2` between two empirical measures (piecewise-constant
    /// quantile functions integrated over merged breakpoints).
    pub fn w2(&self, other: &EmpiricalMeasure) -> f64 {
        let (a, b) = (&self.samples, &other.samples);
        let (ka, kb) = (a.len(), b.len());
        if ka == kb {
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            return (s / ka as f64).sqrt();
        }
        let (mut i, mut j) = (0usize, 0usize);
        let mut p = 0.0;
        let mut acc = 0.0;
        while i < ka && j < kb {
            let next_a = (i + 1) as f64 / ka as f64;
            let next_b = (j + 1) as f64 / kb as f64;
            let next = next_a.min(next_b);
            let d = a[i] - b[j];
            acc += (next - p) * d * d;
            p = next;
            if next_a <= next {
                i += 1;
            }
            if next_b <= next {
                j += 1;
            }
        }
        acc.sqrt()
    }

    /// Reads one number per line; a single non-numeric header row is skipped.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "{}: row {} has {} columns, expected 1",
                    path.display(),
                    row + 1,
                    rec.len()
                )));
            }
            match rec[0].trim().parse::<f64>() {
                Ok(v) => samples.push(v),
                Err(_) if row == 0 => continue,
                Err(_) => {
                    return Err(Error::InvalidInput(format!(
                        "{}: row {}: '{}' is not a number",
                        path.display(),
                        row + 1,
                        &rec[0]
                    )))
                }
            }
        }
        Self::new(samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "sample").map_err(|e| Error::io(path, e))?;
        for v in &self.samples {
            writeln!(w, "{v:e}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("p", p, "(0, 1]"))
    }
}

/// Lower `p`-quantile of the value law of `u`, i.e. the value of ascending
/// rank `ceil(p N)`. Read off the placement order, so it is the discrete
/// version of `u((1 - p) / 2)` that uses both halves of the circle.
pub fn quantile_of(u: &GridField, p: f64) -> Result<f64> {
    check_probability(p)?;
    if !is_admissible(u) {
        return Err(Error::InvalidInput("quantile_of needs an admissible field".into()));
    }
    let n = u.grid().n_points();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    Ok(u.values()[placement_order(u.grid())[n - rank]])
}

/// Quantiles of `u` at the stratified levels `p_k = (k + 1/2) / count`.
pub fn stratified_samples(u: &GridField, count: usize) -> Result<EmpiricalMeasure> {
    if count == 0 {
        return Err(Error::param("count", count, "integers >= 1"));
    }
    let samples = (0..count)
        .map(|k| quantile_of(u, (k as f64 + 0.5) / count as f64))
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::new(samples)
}

/// Admissible field whose values are the empirical quantiles at the
/// grid-cell midpoints `p = (k + 1/2) / N`.
pub fn samples_to_quantile(m: &EmpiricalMeasure, grid: GridSpec) -> Result<GridField> {
    if m.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "samples_to_quantile needs at least 2 samples, got {}",
            m.len()
        )));
    }
    let n = grid.n_points();
    let values = (0..n).map(|k| m.quantile((k as f64 + 0.5) / n as f64)).collect();
    let (field, _) = rearrange(&GridField::new(grid, values)?)?;
    Ok(field)
}

/// `W_2` between the value laws of `u` and `v`, i.e. `||u* - v*||_2`.
pub fn w2(u: &GridField, v: &GridField) -> Result<f64> {
    rearranged_distance(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::replica_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_field_quantiles() {
        let g = GridSpec::new(16).unwrap();
        let c = GridField::constant(g, 1.5);
        for p in [0.01, 0.3, 0.5, 1.0] {
            assert_eq!(quantile_of(&c, p).unwrap(), 1.5);
        }
        assert!(quantile_of(&c, 0.0).is_err());
        assert!(quantile_of(&c, 1.1).is_err());
    }

    #[test]
    fn cosine_quantile_is_monotone() {
        let g = GridSpec::new(64).unwrap();
        let e1 = GridField::cosine_mode(g, 1);
        assert!((quantile_of(&e1, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=1000 {
            let q = quantile_of(&e1, k as f64 / 1000.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
        let mut swapped = e1.clone().into_values();
        swapped.swap(g.index(1), g.index(5));
        assert!(quantile_of(&GridField::new(g, swapped).unwrap(), 0.5).is_err());
    }

    #[test]
    fn stratified_round_trip() {
        let g = GridSpec::new(64).unwrap();
        let u = GridField::cosine_mode(g, 1)
            .axpy(0.3, &GridField::cosine_mode(g, 2))
            .unwrap();
        let u = rearrange(&u).unwrap().0;
        let back = samples_to_quantile(&stratified_samples(&u, 4096).unwrap(), g).unwrap();
        // One grid cell of slack in x.
        let max_step = (0..g.half() as i64)
            .map(|j| (u.at(j) - u.at(j + 1)).abs())
            .fold(0.0, f64::max);
        for p in 0..g.n_points() {
            assert!((back.values()[p] - u.values()[p]).abs() <= max_step + 1e-12);
        }
    }

    #[test]
    fn two_atom_measure() {
        let g = GridSpec::new(16).unwrap();
        let m = EmpiricalMeasure::new(vec![1.0, -1.0]).unwrap();
        let f = samples_to_quantile(&m, g).unwrap();
        // Brute-force quantile of the two-atom CDF at each midpoint level.
        let mut expected: Vec<f64> = (0..16)
            .map(|k| if (k as f64 + 0.5) / 16.0 <= 0.5 { -1.0 } else { 1.0 })
            .collect();
        expected.sort_by(f64::total_cmp);
        let mut got = f.values().to_vec();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, expected);
        for j in -7..=8 {
            assert_eq!(f.at(j), if (-3..=4).contains(&j) { 1.0 } else { -1.0 });
        }
        assert!(is_admissible(&f));
        assert!(samples_to_quantile(&EmpiricalMeasure::new(vec![1.0]).unwrap(), g).is_err());
        let same = samples_to_quantile(&EmpiricalMeasure::new(vec![0.4; 10]).unwrap(), g).unwrap();
        assert_eq!(same, GridField::constant(g, 0.4));
    }

    #[test]
    fn normal_samples_moments() {
        let g = GridSpec::new(128).unwrap();
        let mut rng = replica_rng(11, 0);
        let k = 1_000_000;
        let samples: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = samples_to_quantile(&EmpiricalMeasure::new(samples).unwrap(), g).unwrap();
        assert!(f.mean().abs() < 3.0 / (k as f64).sqrt(), "mean {}", f.mean());
        assert!((f.norm_sq() - 1.0).abs() < 0.01, "second moment {}", f.norm_sq());
    }

    #[test]
    fn w2_examples() {
        let g = GridSpec::new(128).unwrap();
        let u = GridField::cosine_mode(g, 1);
        assert_eq!(w2(&u, &u).unwrap(), 0.0);
        let a = GridField::constant(g, 0.25);
        let b = GridField::constant(g, -1.5);
        assert!((w2(&a, &b).unwrap() - 1.75).abs() < 1e-15);

        // Uniform[0,1] and Uniform[0,2] quantile fields; midpoint rule on
        // int_0^1 (q - 2q)^2 dp with q(p) = p.
        let q1 = |x: f64| 1.0 - 2.0 * x.abs();
        let u1 = GridField::from_fn(g, q1).unwrap();
        let u2 = GridField::from_fn(g, |x| 2.0 * q1(x)).unwrap();
        let quad: f64 = (0..100_000)
            .map(|k| {
                let p = (k as f64 + 0.5) / 100_000.0;
                p * p
            })
            .sum::<f64>()
            / 100_000.0;
        let d = w2(&u1, &u2).unwrap();
        assert!((quad.sqrt() - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!((d - quad.sqrt()).abs() < 2.0 / g.n_points() as f64, "{d}");
        assert!(w2(&u, &GridField::zeros(GridSpec::new(64).unwrap())).is_err());
    }

    #[test]
    fn w2_matches_sorted_sample_estimator() {
        let g = GridSpec::new(64).unwrap();
        let mut rng = replica_rng(2, 0);
        let cell = 1.0 / g.n_points() as f64;
        for _ in 0..100 {
            let u = GridField::new(g, (0..64).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let v = GridField::new(g, (0..64).map(|_| rng.random_range(-1.0..3.0)).collect()).unwrap();
            let d = w2(&u, &v).unwrap();
            let (us, vs) = (rearrange(&u).unwrap().0, rearrange(&v).unwrap().0);
            let est = stratified_samples(&us, 640)
                .unwrap()
                .w2(&stratified_samples(&vs, 640).unwrap());
            let spread = us.max_abs() + vs.max_abs();
            assert!((d - est).abs() <= 2.0 * cell * spread + 1e-12, "{d} vs {est}");
            // Rearranging an argument first changes nothing.
            assert_eq!(w2(&us, &v).unwrap(), d);
            assert!((EmpiricalMeasure::of_field(&u).w2(&EmpiricalMeasure::of_field(&v)) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn unequal_size_w2() {
        let a = EmpiricalMeasure::new(vec![0.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(a.w2(&b) < 1e-15);
        let c = EmpiricalMeasure::new(vec![2.0, 2.0, 2.0]).unwrap();
        let exact = ((4.0 + 1.0) / 2.0f64).sqrt();
        assert!((a.w2(&c) - exact).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let m = EmpiricalMeasure::new(vec![0.1, -3.0, 2.5e-7]).unwrap();
        m.write_csv(&path).unwrap();
        assert_eq!(EmpiricalMeasure::read_csv(&path).unwrap(), m);
        std::fs::write(&path, "1\n2,3\n").unwrap();
        assert!(EmpiricalMeasure::read_csv(&path).is_err());
        assert!(EmpiricalMeasure::read_csv(&dir.path().join("missing.csv")).is_err());
    }
}
