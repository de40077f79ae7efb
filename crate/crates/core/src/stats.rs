//! Kolmogorov distances, DKW noise floors, rate fits and the moment
//! statistics used by the lemma checks.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, map_shards, StreamSpec};
use crate::samplers::SampleBatch;

/// Finite values in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
    origin: Option<StreamSpec>,
}

impl SortedSample {
    pub fn new(mut values: Vec<f64>, origin: Option<StreamSpec>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample value {bad}")));
        }
        values.par_sort_unstable_by(f64::total_cmp);
        Ok(SortedSample { values, origin })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> Option<StreamSpec> {
        self.origin
    }

    /// Fraction of values `<= t`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.values.partition_point(|&v| v <= t) as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub distance: f64,
    pub dkw_floor: f64,
    pub m: usize,
    pub target: String,
    pub seed: Option<u64>,
    pub n: Option<usize>,
}

impl DistanceReport {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Confidence used for every reported floor.
pub const FLOOR_CONFIDENCE: f64 = 0.99;

/// `sqrt(ln(2/alpha) / (2m))` with `alpha = 1 - confidence`.
pub fn dkw_floor(m: usize, confidence: f64) -> f64 {
    assert!(m >= 1, "m must be positive");
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * m as f64)).sqrt()
}

/// Two-sample version: `sqrt(ln(2/alpha)/2 * (1/m1 + 1/m2))`.
pub fn dkw_floor_two_sample(m1: usize, m2: usize, confidence: f64) -> f64 {
    let h = 1.0 / (1.0 / m1 as f64 + 1.0 / m2 as f64);
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * h)).sqrt()
}

/// Kolmogorov distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_distance_vs_cdf<F: Fn(f64) -> f64>(sample: &SortedSample, cdf: F, target: &str) -> DistanceReport {
    let m = sample.len();
    let mf = m as f64;
    let distance = sample
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            ((i + 1) as f64 / mf - c).abs().max((c - i as f64 / mf).abs())
        })
        .fold(0.0, f64::max);
    DistanceReport {
        distance,
        dkw_floor: dkw_floor(m, FLOOR_CONFIDENCE),
        m,
        target: target.to_string(),
        seed: sample.origin.map(|s| s.seed),
        n: None,
    }
}

/// `sup_t |F1(t) - F2(t)|` over both empirical CDFs; ties are resolved by
/// stepping past every copy of a value before comparing.
pub fn ks_two_sample(s1: &SortedSample, s2: &SortedSample) -> DistanceReport {
    let (a, b) = (&s1.values, &s2.values);
    let (ma, mb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / ma - j as f64 / mb).abs());
    }
    DistanceReport {
        distance: d,
        dkw_floor: dkw_floor_two_sample(a.len(), b.len(), FLOOR_CONFIDENCE),
        m: a.len().min(b.len()),
        target: "two-sample".into(),
        seed: s1.origin.map(|s| s.seed),
        n: None,
    }
}

/// `max |cdf1 - cdf2|` over `points` equally spaced nodes of `[lo, hi]`,
/// with the maximizing node.
pub fn dense_grid_distance<F, G>(cdf1: F, cdf2: G, lo: f64, hi: f64, points: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    assert!(points >= 2 && hi > lo);
    let h = (hi - lo) / (points - 1) as f64;
    (0..points)
        .into_par_iter()
        .map(|i| {
            let t = lo + i as f64 * h;
            ((cdf1(t) - cdf2(t)).abs(), t)
        })
        .reduce(|| (0.0, lo), |x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit in log space.
    pub residual: f64,
}

/// Least-squares fit of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::DegenerateFit("coordinates must be positive and finite".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::DegenerateFit("all x values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit { slope, intercept, residual: (ss / k).sqrt() })
}

/// Mergeable mean/variance accumulator (Chan et al. pairwise update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: RunningMoments) -> RunningMoments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / count as f64;
        RunningMoments { count, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = RunningMoments::default();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// `Σ a_j^2 x_j^2` for every row.
pub fn quadratic_forms(batch: &SampleBatch, a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), batch.dim());
    batch
        .iter_rows()
        .map(|r| r.iter().zip(a).map(|(x, w)| w * w * x * x).sum())
        .collect()
}

pub fn sum_fourth_powers(a: &[f64]) -> f64 {
    a.iter().map(|w| w.powi(4)).sum()
}

/// Empirical `Var(Σ a_j^2 X_j^2) / Σ a_j^4`.
pub fn quadratic_variance_ratio(batch: &SampleBatch, a: &[f64]) -> f64 {
    let acc: RunningMoments = quadratic_forms(batch, a).into_iter().collect();
    acc.variance() / sum_fourth_powers(a)
}

/// Sums of `|x_1|^q` and `x_1^2` over the first coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerSums {
    pub count: u64,
    pub abs_q: f64,
    pub square: f64,
}

impl PowerSums {
    pub fn of(batch: &SampleBatch, q: f64) -> PowerSums {
        batch.iter_rows().fold(PowerSums::default(), |acc, r| PowerSums {
            count: acc.count + 1,
            abs_q: acc.abs_q + r[0].abs().powf(q),
            square: acc.square + r[0] * r[0],
        })
    }

    pub fn merge(self, o: PowerSums) -> PowerSums {
        PowerSums { count: self.count + o.count, abs_q: self.abs_q + o.abs_q, square: self.square + o.square }
    }

    pub fn ratio(&self, q: f64) -> f64 {
        let c = self.count as f64;
        (self.abs_q / c) / (self.square / c).powf(q / 2.0)
    }
}

/// Empirical `E|X_1|^q / (E X_1^2)^{q/2}`.
pub fn moment_ratio(batch: &SampleBatch, q: f64) -> f64 {
    assert!(q >= 1.0, "q must be at least 1");
    PowerSums::of(batch, q).ratio(q)
}

/// Fraction of `m` standard Gaussian vectors in `R^n` with
/// `||Z| - sqrt(n)| <= n^delta`.
pub fn chi_concentration(n: usize, delta: f64, m: usize, stream: StreamSpec) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/2)")));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be positive".into()));
    }
    let base = derive_seed(stream.seed, "chi", stream.stream_index);
    let (root, width) = ((n as f64).sqrt(), (n as f64).powf(delta));
    let hits: usize = map_shards(m, |k, _, len| {
        let mut rng = StreamSpec::new(base, k).rng();
        (0..len)
            .filter(|_| {
                let s: f64 = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * z
                    })
                    .sum();
                (s.sqrt() - root).abs() <= width
            })
            .count()
    })
    .into_iter()
    .sum();
    Ok(hits as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_normal_cdf;
    use crate::samplers::{sample_gaussian, sample_sphere};
    use proptest::prelude::*;

    fn normal_quantile(u: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn midpoint_quantiles_give_half_over_m() {
        let m = 1000;
        let v = (0..m).map(|i| normal_quantile((i as f64 + 0.5) / m as f64)).collect();
        let s = SortedSample::new(v, None).unwrap();
        let d = ks_distance_vs_cdf(&s, std_normal_cdf, "normal").distance;
        assert!((d - 0.5 / m as f64).abs() < 1e-12, "{d}");
    }

    #[test]
    fn uniform_law_vs_normal() {
        let r3 = 3f64.sqrt();
        let unif = |t: f64| ((t + r3) / (2.0 * r3)).clamp(0.0, 1.0);
        let (d, t) = dense_grid_distance(unif, std_normal_cdf, -4.0, 4.0, 800_001);
        assert!((d - 0.0572067).abs() < 1e-6, "{d}");
        assert!((t - 0.8044).abs() < 1e-3);
        let m = 100_000;
        let v = (0..m).map(|i| -r3 + 2.0 * r3 * (i as f64 + 0.5) / m as f64).collect();
        let s = SortedSample::new(v, None).unwrap();
        let ks = ks_distance_vs_cdf(&s, std_normal_cdf, "normal").distance;
        assert!((ks - d).abs() < 2.0 / m as f64);
    }

    #[test]
    fn sample_vs_own_ecdf_is_zero() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = SortedSample::new(v, None).unwrap();
        let d = ks_distance_vs_cdf(&s, |t| s.ecdf(t), "self").distance;
        assert!(d <= 1.0 / 50.0 + 1e-15);
        assert_eq!(ks_two_sample(&s, &s).distance, 0.0);
    }

    #[test]
    fn floor_values() {
        let f = dkw_floor(1_000_000, 0.99);
        assert!((f - (200f64.ln() / 2e6).sqrt()).abs() < 1e-15);
        assert!((f - 1.628e-3).abs() < 1e-6);
        assert!(dkw_floor(1001, 0.99) < dkw_floor(1000, 0.99));
        let two = dkw_floor_two_sample(1000, 1000, 0.99);
        assert!((two - dkw_floor(500, 0.99)).abs() < 1e-15);
    }

    #[test]
    fn two_sample_known_value() {
        let a = SortedSample::new(vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        let b = SortedSample::new(vec![3.5, 4.5, 5.5, 6.5], None).unwrap();
        assert_eq!(ks_two_sample(&a, &b).distance, 0.75);
        let c = SortedSample::new(vec![1.0, 1.0, 2.0, 2.0], None).unwrap();
        let d = SortedSample::new(vec![1.0, 2.0], None).unwrap();
        assert_eq!(ks_two_sample(&c, &d).distance, 0.0);
    }

    #[test]
    fn slope_examples() {
        let xs = [1.0f64, 2.0, 4.0, 8.0, 16.0];
        let f = loglog_slope(&xs.map(|x| (x, x.powf(-0.5)))).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && f.residual < 1e-12);
        let f = loglog_slope(&xs.map(|x| (x, 3.0))).unwrap();
        assert!(f.slope.abs() < 1e-12);
        let f = loglog_slope(&xs.map(|x| (x, 7.0 / x))).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.intercept - 7f64.ln()).abs() < 1e-12);
        assert!(matches!(loglog_slope(&[(2.0, 1.0), (2.0, 3.0), (2.0, 5.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(loglog_slope(&[(1.0, 1.0), (2.0, 3.0)]), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn running_moments_merge_matches_direct() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let all: RunningMoments = v.iter().copied().collect();
        let left: RunningMoments = v[..333].iter().copied().collect();
        let right: RunningMoments = v[333..].iter().copied().collect();
        let merged = left.merge(right);
        assert!((merged.mean - all.mean).abs() < 1e-12);
        assert!((merged.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_quadratic_ratio_is_two() {
        let (n, m) = (5, 200_000);
        let b = sample_gaussian(n, m, StreamSpec::new(11, 0)).unwrap();
        let a = [0.3, 0.5, 0.1, 0.7, 0.2];
        let r = quadratic_variance_ratio(&b, &a);
        assert!((r - 2.0).abs() < 0.05, "{r}");
        // single coordinate reduces to Var(X_1^2)
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let sq: RunningMoments = b.column(0).iter().map(|x| x * x).collect();
        assert!((quadratic_variance_ratio(&b, &e1) - sq.variance()).abs() < 1e-9);
    }

    #[test]
    fn gaussian_third_moment_ratio() {
        let b = sample_gaussian(1, 1_000_000, StreamSpec::new(12, 0)).unwrap();
        let r = moment_ratio(&b, 3.0);
        let exact = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((r - exact).abs() < 0.01 * exact, "{r}");
        assert!((moment_ratio(&b, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_probability_edges() {
        let s = StreamSpec::new(5, 0);
        let small = chi_concentration(400, 0.1, 4000, s).unwrap();
        let large = chi_concentration(400, 0.49, 4000, s).unwrap();
        assert!(small <= large);
        assert!(large > 0.99);
        let one = chi_concentration(1, 0.25, 1000, s).unwrap();
        assert!(one > 0.0 && one < 1.0);
        assert!(chi_concentration(4, 0.5, 10, s).is_err());
    }

    #[test]
    fn dkw_calibration_over_100_seeds() {
        let m = 2000;
        let covered = (0..100u64)
            .filter(|&seed| {
                let b = sample_gaussian(1, m, StreamSpec::new(seed, 0)).unwrap();
                let s = SortedSample::new(b.into_points(), None).unwrap();
                let r = ks_distance_vs_cdf(&s, std_normal_cdf, "normal");
                r.distance <= r.dkw_floor
            })
            .count();
        assert!(covered >= 99, "{covered} of 100");
    }

    #[test]
    fn report_json_fields() {
        let s = SortedSample::new(vec![0.0, 1.0], Some(StreamSpec::new(42, 0))).unwrap();
        let r = ks_distance_vs_cdf(&s, std_normal_cdf, "normal").with_n(3);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["distance", "dkw_floor", "m", "target", "seed", "n"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["seed"], 42);
    }

    #[test]
    fn sphere_coordinates_are_not_far_from_normal() {
        let n = 50;
        let b = sample_sphere(n, 20_000, StreamSpec::new(3, 0)).unwrap();
        let v: Vec<f64> = b.column(0).iter().map(|x| x * (n as f64).sqrt()).collect();
        let s = SortedSample::new(v, None).unwrap();
        let r = ks_distance_vs_cdf(&s, std_normal_cdf, "normal");
        assert!(r.distance < 0.02 + r.dkw_floor);
    }

    proptest! {
        #[test]
        fn ks_invariant_under_monotone_maps(v in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            let s = SortedSample::new(v.clone(), None).unwrap();
            let d1 = ks_distance_vs_cdf(&s, std_normal_cdf, "n").distance;
            let w: Vec<f64> = v.iter().map(|x| x.powi(3) + x).collect();
            let t = SortedSample::new(w, None).unwrap();
            // inverse of u -> u^3 + u, by bisection
            let inv = |y: f64| {
                let (mut lo, mut hi) = (-10.0f64, 10.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid.powi(3) + mid < y { lo = mid } else { hi = mid }
                }
                0.5 * (lo + hi)
            };
            let d2 = ks_distance_vs_cdf(&t, |y| std_normal_cdf(inv(y)), "n").distance;
            prop_assert!((d1 - d2).abs() < 1e-9);
        }

        #[test]
        fn two_sample_symmetric(a in prop::collection::vec(-3.0f64..3.0, 1..40),
                                b in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let (s1, s2) = (SortedSample::new(a, None).unwrap(), SortedSample::new(b, None).unwrap());
            prop_assert_eq!(ks_two_sample(&s1, &s2).distance, ks_two_sample(&s2, &s1).distance);
        }

        #[test]
        fn floor_decreasing(m in 1usize..1_000_000, c in 0.5f64..0.999) {
            prop_assert!(dkw_floor(m + 1, c) < dkw_floor(m, c));
        }

        #[test]
        fn exact_power_laws_are_recovered(k in -3.0f64..3.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = [3.0, 10.0, 31.0, 100.0].iter().map(|&x| (x, c * f64::powf(x, k))).collect();
            let fit = loglog_slope(&pts).unwrap();
            prop_assert!((fit.slope - k).abs() < 1e-9);
            prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
        }
    }
}
