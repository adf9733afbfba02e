//! Closed-form normal-normal conjugate posterior and the Wang distortion that
//! carries prior survival probabilities to posterior ones. Every learner in
//! the crate is validated against this module.

use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no samples")]
    EmptySamples,
}

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Complementary error function, W. J. Cody's rational Chebyshev
/// approximations (relative error below 1e-15 across the real line).
pub fn erfc(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6e0,
        1.138_641_541_510_501_6e2,
        3.774_852_376_853_020_2e2,
        3.209_377_589_138_469_5e3,
        1.857_777_061_846_031_5e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412_1e1,
        2.440_246_379_344_441_7e2,
        1.282_616_526_077_372_3e3,
        2.844_236_833_439_170_6e3,
    ];
    const C: [f64; 9] = [
        5.641_884_969_886_700_9e-1,
        8.883_149_794_388_375_9e0,
        6.611_919_063_714_163e1,
        2.986_351_381_974_001_3e2,
        8.819_522_212_417_691e2,
        1.712_047_612_634_070_6e3,
        2.051_078_377_826_071_5e3,
        1.230_339_354_797_997_2e3,
        2.153_115_354_744_038_5e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_5e1,
        1.176_939_508_913_125e2,
        5.371_811_018_620_098_6e2,
        1.621_389_574_566_690_2e3,
        3.290_799_235_733_459_6e3,
        4.362_619_090_143_247e3,
        3.439_367_674_143_721_6e3,
        1.230_339_354_803_749_4e3,
    ];
    const P: [f64; 6] = [
        3.053_266_349_612_323_4e-1,
        3.603_448_999_498_044_4e-1,
        1.257_817_261_112_292_5e-1,
        1.608_378_514_874_227_7e-2,
        6.587_491_615_298_378e-4,
        1.631_538_713_730_209_8e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_4e0,
        1.872_952_849_923_467_3e0,
        5.279_051_029_514_284e-1,
        6.051_834_131_244_132e-2,
        2.335_204_976_268_691_8e-3,
    ];

    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    if y <= 0.468_75 {
        let ysq = y * y;
        let mut num = A[4] * ysq;
        let mut den = ysq;
        for i in 0..3 {
            num = (num + A[i]) * ysq;
            den = (den + B[i]) * ysq;
        }
        let erf = x * (num + A[3]) / (den + B[3]);
        return 1.0 - erf;
    }
    let tail = if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else if y < 27.3 {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0
    };
    // exp(-y²) split to limit cancellation error
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    let r = (-ysq * ysq).exp() * (-del).exp() * tail;
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Standard normal CDF Φ.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function 1 − Φ, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal quantile Φ⁻¹: Acklam's rational initial guess refined
/// with two Halley steps against [`normal_cdf`] on the lower-tail side.
pub fn normal_quantile(p: f64) -> Result<f64, AnalyticError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AnalyticError::ProbabilityOutOfRange(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work on the smaller tail mass so 1 - p never loses digits.
    let (q, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let mut x = acklam_lower(q);
    for _ in 0..2 {
        let e = normal_cdf(x) - q;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(if flip { -x } else { x })
}

fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    if p < 0.024_25 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// A univariate normal law parameterised by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

impl Normal {
    pub fn from_variance(mean: f64, variance: f64) -> Self {
        Self {
            mean,
            sd: variance.sqrt(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        normal_cdf((x - self.mean) / self.sd)
    }

    pub fn sf(&self, x: f64) -> f64 {
        normal_sf((x - self.mean) / self.sd)
    }

    pub fn quantile(&self, p: f64) -> Result<f64, AnalyticError> {
        Ok(self.mean + self.sd * normal_quantile(p)?)
    }
}

/// `yᵢ | θ ~ N(θ, σ²)`, `θ ~ N(μ, α²)`, summarised by `n` and `s = Σ yᵢ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalNormalModel {
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub noise_variance: f64,
    pub n: usize,
    pub sum: f64,
}

impl NormalNormalModel {
    pub fn new(
        prior_mean: f64,
        prior_variance: f64,
        noise_variance: f64,
        data: &[f64],
    ) -> Result<Self, AnalyticError> {
        Self::from_sufficient(prior_mean, prior_variance, noise_variance, data.len(), data.iter().sum())
    }

    pub fn from_sufficient(
        prior_mean: f64,
        prior_variance: f64,
        noise_variance: f64,
        n: usize,
        sum: f64,
    ) -> Result<Self, AnalyticError> {
        if !(prior_variance > 0.0) || !(noise_variance > 0.0) {
            return Err(AnalyticError::InvalidModel(format!(
                "variances must be positive (prior {prior_variance}, noise {noise_variance})"
            )));
        }
        if !prior_mean.is_finite() || !sum.is_finite() {
            return Err(AnalyticError::InvalidModel("non-finite mean or data".into()));
        }
        Ok(Self {
            prior_mean,
            prior_variance,
            noise_variance,
            n,
            sum,
        })
    }

    pub fn prior(&self) -> Normal {
        Normal::from_variance(self.prior_mean, self.prior_variance)
    }
}

/// Conjugate posterior together with its Wang distortion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPosterior {
    pub mean: f64,
    pub variance: f64,
    /// s = Σ yᵢ
    pub sum: f64,
    /// t = σ² + nα²
    pub t: f64,
    /// λ₁ = α / σ*
    pub lambda1: f64,
    /// λ = α λ₁ (s − nμ) / t
    pub lambda: f64,
}

impl AnalyticPosterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn normal(&self) -> Normal {
        Normal {
            mean: self.mean,
            sd: self.sd(),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64, AnalyticError> {
        self.normal().quantile(u)
    }
}

pub fn conjugate_posterior(model: &NormalNormalModel) -> AnalyticPosterior {
    let (mu, a2, s2) = (model.prior_mean, model.prior_variance, model.noise_variance);
    let n = model.n as f64;
    let t = s2 + n * a2;
    let mean = (s2 * mu + a2 * model.sum) / t;
    let variance = a2 * s2 / t;
    let alpha = a2.sqrt();
    let lambda1 = alpha / variance.sqrt();
    let lambda = alpha * lambda1 * (model.sum - n * mu) / t;
    AnalyticPosterior {
        mean,
        variance,
        sum: model.sum,
        t,
        lambda1,
        lambda,
    }
}

/// g(p) = Φ(λ₁ Φ⁻¹(p) + λ)
pub fn wang_distortion(p: f64, lambda1: f64, lambda: f64) -> Result<f64, AnalyticError> {
    Ok(normal_cdf(lambda1 * normal_quantile(p)? + lambda))
}

/// `g(1 − q)` computed as `Φ(λ − λ₁ Φ⁻¹(q))`, which stays exact when `1 − q`
/// would round to 1.
pub fn wang_distortion_complement(q: f64, lambda1: f64, lambda: f64) -> Result<f64, AnalyticError> {
    Ok(normal_cdf(lambda - lambda1 * normal_quantile(q)?))
}

/// Default level grid {0.1, …, 0.9} for [`conditional_quantile_check`].
pub fn default_level_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Checks `Q_{θ|y}(u) = Q_θ(s)` with `s` the empirical `u`-quantile of
/// `F_prior(θ)` under posterior draws. Returns the largest absolute gap
/// between `Q_prior(s)` and the analytic posterior quantile over `levels`.
pub fn conditional_quantile_check(
    posterior: &AnalyticPosterior,
    prior: Normal,
    samples: &[f64],
    levels: &[f64],
) -> Result<f64, AnalyticError> {
    if samples.is_empty() {
        return Err(AnalyticError::EmptySamples);
    }
    let mut transformed: Vec<f64> = samples.iter().map(|&th| prior.cdf(th)).collect();
    transformed.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for &u in levels {
        let s = stats::quantile_sorted(&transformed, u);
        let lhs = posterior.quantile(u)?;
        let rhs = prior.quantile(s)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    // Maclaurin series of erf, summed to convergence; accurate to ~1e-16 for |x| < 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        2.0 * FRAC_1_SQRT_PI * sum
    }

    // Lentz continued fraction for erfc, valid for x > 2.
    fn erfc_cf(x: f64) -> f64 {
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = 1.0 / d;
            c = x + a / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() * FRAC_1_SQRT_PI / f
    }

    #[test]
    fn cdf_matches_series_oracles() {
        for i in -300..=300 {
            let x = i as f64 / 100.0;
            let oracle = 0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
            assert!((normal_cdf(x) - oracle).abs() < 1e-15, "x = {x}");
        }
        for i in 0..=80 {
            let x = 3.0 + i as f64 / 10.0;
            let oracle = 0.5 * erfc_cf(x / std::f64::consts::SQRT_2);
            let got = normal_sf(x);
            assert!(((got - oracle) / oracle).abs() < 1e-13, "x = {x}: {got} vs {oracle}");
        }
    }

    #[test]
    fn cdf_at_zero_and_975() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn quantile_rejects_closed_endpoints() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn cdf_of_quantile_roundtrip() {
        let mut worst: f64 = 0.0;
        let mut p = 1e-10;
        while p < 1.0 - 1e-10 {
            worst = worst.max((normal_cdf(normal_quantile(p).unwrap()) - p).abs());
            worst = worst.max((normal_cdf(normal_quantile(1.0 - p).unwrap()) - (1.0 - p)).abs());
            p *= 1.37;
        }
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            worst = worst.max((normal_cdf(normal_quantile(p).unwrap()) - p).abs());
        }
        assert!(worst < 1e-12, "worst = {worst}");
    }

    #[test]
    fn quantile_of_cdf_roundtrip() {
        // Φ(x) for x > 0 is rounded to a spacing of 2⁻⁵³ near 1, which alone
        // moves Φ⁻¹ by up to 2⁻⁵⁴/φ(x) (≈1e-8 at x = 6); the upper half is
        // checked through the symmetric survival route instead.
        for i in -600..=600 {
            let x = i as f64 / 100.0;
            let back = if x <= 0.0 {
                normal_quantile(normal_cdf(x)).unwrap()
            } else {
                -normal_quantile(normal_sf(x)).unwrap()
            };
            assert!((back - x).abs() < 1e-9, "x = {x}: {back}");
        }
        for i in 0..=500 {
            let x = i as f64 / 100.0;
            assert!((normal_quantile(normal_cdf(x)).unwrap() - x).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_without_data_is_prior() {
        let m = NormalNormalModel::new(1.5, 4.0, 2.0, &[]).unwrap();
        let p = conjugate_posterior(&m);
        assert_eq!(p.mean, 1.5);
        assert_eq!(p.variance, 4.0);
        assert_eq!(p.lambda1, 1.0);
        assert_eq!(p.lambda, 0.0);
    }

    #[test]
    fn single_observation_hand_computed() {
        // t = 1 + 1 = 2, μ* = (0 + 2)/2 = 1, σ*² = 1/2
        let m = NormalNormalModel::new(0.0, 1.0, 1.0, &[2.0]).unwrap();
        let p = conjugate_posterior(&m);
        assert_eq!(p.t, 2.0);
        assert_eq!(p.mean, 1.0);
        assert_eq!(p.variance, 0.5);
    }

    #[test]
    fn single_observation_numeric_bayes() {
        // Trapezoid integration of prior × likelihood on a fine grid.
        let (lo, hi, k) = (-12.0, 14.0, 20_001);
        let h = (hi - lo) / (k - 1) as f64;
        let dens = |th: f64| (-0.5 * th * th - 0.5 * (2.0 - th).powi(2)).exp();
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..k {
            let th = lo + i as f64 * h;
            let w = if i == 0 || i == k - 1 { 0.5 } else { 1.0 } * dens(th);
            z += w;
            m1 += w * th;
            m2 += w * th * th;
        }
        let mean = m1 / z;
        assert!((mean - 1.0).abs() < 1e-10);
        assert!((m2 / z - mean * mean - 0.5).abs() < 1e-10);
    }

    #[test]
    fn invalid_variances_rejected() {
        assert!(NormalNormalModel::new(0.0, 0.0, 1.0, &[1.0]).is_err());
        assert!(NormalNormalModel::new(0.0, 1.0, -1.0, &[1.0]).is_err());
    }

    #[test]
    fn distortion_identity_and_median() {
        assert!((wang_distortion(0.3, 1.0, 0.0).unwrap() - 0.3).abs() < 1e-15);
        for l1 in [1.0, 2.5, 9.0] {
            assert!((wang_distortion(0.5, l1, 0.7).unwrap() - normal_cdf(0.7)).abs() < 1e-15);
        }
        assert!(wang_distortion(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn distortion_maps_prior_to_posterior_survival() {
        let mut rng = RngStream::new(77, 0);
        let data: Vec<f64> = (0..25).map(|_| 1.2 + 2.0 * rng.standard_normal()).collect();
        let m = NormalNormalModel::new(-0.5, 3.0, 4.0, &data).unwrap();
        let post = conjugate_posterior(&m);
        let prior = m.prior();
        for i in 0..=400 {
            let th = post.mean - 6.0 * post.sd() + 12.0 * post.sd() * i as f64 / 400.0;
            let lhs = post.normal().sf(th);
            let rhs = wang_distortion(prior.sf(th), post.lambda1, post.lambda).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn complement_form_agrees_and_survives_far_tails() {
        for &(q, l1, l) in &[(0.3, 2.0, 0.5), (0.01, 1.3, -1.0), (0.7, 4.0, 2.0)] {
            let a = wang_distortion(1.0 - q, l1, l).unwrap();
            let b = wang_distortion_complement(q, l1, l).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        // 1 − 1e-20 is 1 in f64; the complement form still resolves the tail.
        let g = wang_distortion_complement(1e-20, 1.0, 3.0).unwrap();
        let z = normal_quantile(1e-20).unwrap();
        assert!((1.0 - g - normal_cdf(z - 3.0)).abs() < 1e-25);
        assert!(wang_distortion(1.0 - 1e-20, 1.0, 3.0).is_err());
    }

    #[test]
    fn distortion_is_monotone_on_grid() {
        // Strict wherever f64 can still resolve the output from 1.
        let mut prev = 0.0;
        for i in 1..2000 {
            let g = wang_distortion(i as f64 / 2000.0, 3.1, -0.4).unwrap();
            assert!(g >= prev);
            if g < 1.0 - 1e-6 {
                assert!(g > prev, "i = {i}");
            }
            prev = g;
        }
    }

    fn posterior_draws(post: &AnalyticPosterior, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| post.mean + post.sd() * rng.standard_normal()).collect()
    }

    #[test]
    fn conditional_quantile_representation_holds() {
        let m = NormalNormalModel::from_sufficient(0.0, 5.0, 10.0, 100, 310.0).unwrap();
        let post = conjugate_posterior(&m);
        let draws = posterior_draws(&post, 100_000, 3);
        let dev = conditional_quantile_check(&post, m.prior(), &draws, &default_level_grid()).unwrap();
        assert!(dev < 0.05 * post.sd(), "dev = {dev}");
    }

    #[test]
    fn conditional_quantile_without_data_is_identity() {
        let m = NormalNormalModel::from_sufficient(2.0, 1.0, 1.0, 0, 0.0).unwrap();
        let post = conjugate_posterior(&m);
        let draws = posterior_draws(&post, 10_000, 5);
        // F_prior = F_post, so F_prior(θ) of posterior draws is uniform and s ≈ u.
        let mut pit: Vec<f64> = draws.iter().map(|&t| m.prior().cdf(t)).collect();
        pit.sort_by(f64::total_cmp);
        for u in default_level_grid() {
            assert!((stats::quantile_sorted(&pit, u) - u).abs() < 0.02);
        }
    }

    #[test]
    fn conditional_quantile_deviation_shrinks() {
        let m = NormalNormalModel::from_sufficient(0.0, 5.0, 10.0, 100, 310.0).unwrap();
        let post = conjugate_posterior(&m);
        let levels = default_level_grid();
        // average over a few seeds to make the comparison robust
        let avg = |n: usize| -> f64 {
            (0..8)
                .map(|s| {
                    let d = posterior_draws(&post, n, 100 + s);
                    conditional_quantile_check(&post, m.prior(), &d, &levels).unwrap()
                })
                .sum::<f64>()
                / 8.0
        };
        assert!(avg(100_000) < avg(1_000));
        assert!(conditional_quantile_check(&post, m.prior(), &[], &levels).is_err());
    }
}
