//! Symmetric non-increasing rearrangement on the grid.
//!
//! Values are sorted in descending order and dealt out from the origin:
//! the largest at `j = 0`, then `+1, -1, +2, -2, ...`, the smallest landing
//! on the unpaired point `j = N/2`. Within a mirror pair the larger value
//! sits at the non-negative offset, so the output is symmetric up to one
//! sorted gap per pair.

use crate::error::{Error, Result};
use crate::spectral::{distance_sq, GridField, GridSpec};

/// Fields whose rearrangement moves them less than this are admissible.
pub const ADMISSIBLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RearrangeReport {
    /// `||u - u*||_2`, the size of the projection step.
    pub displacement: f64,
    pub was_already_sorted: bool,
}

/// Storage indices in dealing order: `j = 0, +1, -1, +2, -2, ..., N/2`.
pub fn placement_order(grid: GridSpec) -> Vec<usize> {
    let half = grid.half() as i64;
    let mut order = Vec::with_capacity(grid.n_points());
    order.push(grid.index(0));
    for k in 1..half {
        order.push(grid.index(k));
        order.push(grid.index(-k));
    }
    order.push(grid.index(half));
    order
}

pub fn rearrange(f: &GridField) -> Result<(GridField, RearrangeReport)> {
    if let Some(v) = f.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {v}")));
    }
    let order = placement_order(f.grid());
    let mut scratch = Vec::with_capacity(f.values().len());
    let mut out = f.values().to_vec();
    let disp_sq = rearrange_in_place(&order, &mut out, &mut scratch);
    let report = RearrangeReport {
        displacement: disp_sq.sqrt(),
        was_already_sorted: disp_sq == 0.0,
    };
    Ok((GridField::from_raw(f.grid(), out), report))
}

/// Rearranges `values` in place and returns `||before - after||_2^2`.
///
/// `order` must come from [`placement_order`] for the same grid.
pub(crate) fn rearrange_in_place(order: &[usize], values: &mut [f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(values);
    // Equal values are interchangeable, so an unstable sort yields the same
    // output as an index-stable one.
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut disp = 0.0;
    for (&p, &v) in order.iter().zip(scratch.iter()) {
        let d = values[p] - v;
        disp += d * d;
        values[p] = v;
    }
    disp / values.len() as f64
}

pub fn is_admissible(f: &GridField) -> bool {
    match rearrange(f) {
        Ok((_, report)) => report.displacement < ADMISSIBLE_TOL,
        Err(_) => false,
    }
}

/// `||u* - v*||_2`, used by the Wasserstein bridge.
pub(crate) fn rearranged_distance(u: &GridField, v: &GridField) -> Result<f64> {
    u.grid().check_same(&v.grid())?;
    let (us, _) = rearrange(u)?;
    let (vs, _) = rearrange(v)?;
    Ok(distance_sq(us.values(), vs.values()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{grad_norm_sq, SpectralField};
    use proptest::prelude::*;
    use std::f64::consts::{PI, SQRT_2};

    fn sorted_desc(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn cosine_is_a_fixed_point() {
        let g = GridSpec::new(32).unwrap();
        let e1 = GridField::cosine_mode(g, 1);
        let (out, rep) = rearrange(&e1).unwrap();
        assert_eq!(out, e1);
        assert_eq!(rep.displacement, 0.0);
        assert!(rep.was_already_sorted);
        assert!(is_admissible(&e1));
        assert!(is_admissible(&GridField::constant(g, -4.0)));
    }

    #[test]
    fn sine_rearranges_to_same_multiset() {
        let g = GridSpec::new(8).unwrap();
        let f = GridField::from_fn(g, |x| SQRT_2 * (2.0 * PI * x).sin()).unwrap();
        let (out, rep) = rearrange(&f).unwrap();
        assert_eq!(sorted_desc(out.values()), sorted_desc(f.values()));
        assert!(rep.displacement > 0.0);
        let (twice, rep2) = rearrange(&out).unwrap();
        assert_eq!(twice, out);
        assert_eq!(rep2.displacement, 0.0);
    }

    /// Brute force: among all permutations of the ramp's values, keep those
    /// that are non-increasing in |j| with the larger value of each mirror
    /// pair at the non-negative offset. That set is a singleton.
    #[test]
    fn ramp_matches_brute_force_placement() {
        let g = GridSpec::new(8).unwrap();
        let ramp: Vec<f64> = (1..=8).map(f64::from).collect();
        let f = GridField::new(g, ramp.clone()).unwrap();
        let (out, _) = rearrange(&f).unwrap();

        let mut candidates = Vec::new();
        let mut perm: Vec<usize> = (0..8).collect();
        permute(&mut perm, 0, &mut |p| {
            let vals: Vec<f64> = p.iter().map(|&i| ramp[i]).collect();
            if admissible_by_definition(g, &vals) {
                candidates.push(vals);
            }
        });
        candidates.dedup();
        assert_eq!(candidates.len(), 1);
        assert_eq!(out.values(), &candidates[0][..]);
    }

    fn admissible_by_definition(g: GridSpec, v: &[f64]) -> bool {
        let half = g.half() as i64;
        // Visit order by |j| with the non-negative side first.
        let mut seq = vec![v[g.index(0)]];
        for k in 1..half {
            if v[g.index(k)] < v[g.index(-k)] {
                return false;
            }
            seq.push(v[g.index(k)]);
            seq.push(v[g.index(-k)]);
        }
        seq.push(v[g.index(half)]);
        seq.windows(2).all(|w| w[0] >= w[1])
    }

    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }

    #[test]
    fn swapped_cosine_is_not_admissible() {
        let g = GridSpec::new(16).unwrap();
        let mut v = GridField::cosine_mode(g, 1).into_values();
        let (a, b) = (g.index(2), g.index(5));
        v.swap(a, b);
        let f = GridField::new(g, v).unwrap();
        assert!(!is_admissible(&f));
        let (fixed, rep) = rearrange(&f).unwrap();
        assert!(rep.displacement > 0.0);
        assert_eq!(fixed, GridField::cosine_mode(g, 1));
    }

    #[test]
    fn non_finite_rejected() {
        let g = GridSpec::new(8).unwrap();
        let mut f = GridField::zeros(g);
        f.values_mut()[2] = f64::NAN;
        assert!(rearrange(&f).is_err());
        assert!(!is_admissible(&f));
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = GridField> {
        proptest::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |v| GridField::new(GridSpec::new(n).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn preserves_multiset_and_is_idempotent(f in field_strategy(32)) {
            let (a, _) = rearrange(&f).unwrap();
            prop_assert_eq!(sorted_desc(a.values()), sorted_desc(f.values()));
            let (b, rep) = rearrange(&a).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(rep.was_already_sorted);
            prop_assert!((a.norm_sq() - f.norm_sq()).abs() <= 1e-12 * f.norm_sq().max(1.0));
        }

        #[test]
        fn l2_contraction(u in field_strategy(16), v in field_strategy(16)) {
            let d = u.distance(&v).unwrap();
            let ds = rearranged_distance(&u, &v).unwrap();
            prop_assert!(ds <= d * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn polya_szego_on_smooth_symmetric_fields(
            modes in proptest::collection::vec(-1.0f64..1.0, 17)
        ) {
            let g = GridSpec::new(32).unwrap();
            let s = SpectralField::new(g, modes).unwrap();
            let f = crate::spectral::to_grid(&s).unwrap();
            let (r, _) = rearrange(&f).unwrap();
            let gr = grad_norm_sq(&SpectralField::from_grid_symmetrizing(&r));
            prop_assert!(gr <= grad_norm_sq(&s) * (1.0 + 1e-6));
        }
    }
}
