//! Symmetric Latin hypercube designs.
//!
//! Per dimension the `m` points occupy the `m` equal-width strata exactly once.
//! Point `m-1-i` is the reflection of point `i` through the box centre; for odd
//! `m` the middle point sits at the centre.

use super::{DenseMatrix, NumericsError, RngStream};

pub fn lhs_sample(
    ranges: &[(f64, f64)],
    m: usize,
    rng: &mut RngStream,
) -> Result<DenseMatrix, NumericsError> {
    if m == 0 {
        return Err(NumericsError::InvalidArgument("design needs m >= 1 points".into()));
    }
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(NumericsError::InvalidArgument(format!(
                "range {i} is not a finite interval with lo < hi: [{lo}, {hi}]"
            )));
        }
    }
    let d = ranges.len();
    let half = m / 2;
    let mut design = DenseMatrix::zeros(m, d);
    let mut pairs: Vec<usize> = (0..half).collect();
    for (j, &(lo, hi)) in ranges.iter().enumerate() {
        let width = (hi - lo) / m as f64;
        rng.shuffle(&mut pairs);
        for (i, &k) in pairs.iter().enumerate() {
            let stratum = if rng.uniform() < 0.5 { k } else { m - 1 - k };
            let x = lo + (stratum as f64 + rng.uniform_open()) * width;
            design.set(i, j, x);
            design.set(m - 1 - i, j, lo + hi - x);
        }
        if m % 2 == 1 {
            design.set(half, j, 0.5 * (lo + hi));
        }
    }
    Ok(design)
}

/// Stratum index of `x` within `[lo, hi]` split into `m` bins.
pub fn stratum_of(x: f64, lo: f64, hi: f64, m: usize) -> usize {
    (((x - lo) / (hi - lo) * m as f64).floor() as usize).min(m - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_points_split_unit_interval() {
        let mut rng = RngStream::new(1, 0);
        let d = lhs_sample(&[(0.0, 1.0)], 2, &mut rng).unwrap();
        let mut xs = d.column(0);
        xs.sort_by(f64::total_cmp);
        assert!((0.0..0.5).contains(&xs[0]));
        assert!((0.5..=1.0).contains(&xs[1]));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(lhs_sample(&[(1.0, 1.0)], 4, &mut rng).is_err());
        assert!(lhs_sample(&[(0.0, 1.0)], 0, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_design() {
        let a = lhs_sample(&[(0.0, 1.0), (2.0, 5.0)], 17, &mut RngStream::new(4, 4)).unwrap();
        let b = lhs_sample(&[(0.0, 1.0), (2.0, 5.0)], 17, &mut RngStream::new(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_is_mirror_symmetric() {
        let ranges = [(0.0, 1.0), (-3.0, 7.0)];
        let d = lhs_sample(&ranges, 9, &mut RngStream::new(8, 0)).unwrap();
        for i in 0..9 {
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                assert!((d.get(i, j) + d.get(8 - i, j) - (lo + hi)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn every_stratum_hit_once(m in 1usize..60, d in 1usize..5, seed in any::<u64>()) {
            let ranges: Vec<(f64, f64)> = (0..d).map(|j| (j as f64 - 1.0, 2.0 * j as f64 + 0.5)).collect();
            let design = lhs_sample(&ranges, m, &mut RngStream::new(seed, 0)).unwrap();
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                let mut seen = vec![false; m];
                for i in 0..m {
                    let x = design.get(i, j);
                    prop_assert!(x >= lo && x <= hi);
                    let s = stratum_of(x, lo, hi, m);
                    prop_assert!(!seen[s], "stratum {} hit twice", s);
                    seen[s] = true;
                }
            }
        }
    }
}
