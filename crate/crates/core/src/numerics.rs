//! Scalar kernel: the standard normal CDF, log-stable truncated powers and
//! adaptive Gauss–Kronrod quadrature carried out entirely in log space.
//!
//! Integrands here are radial weights like `r^(n-1) exp(-(n-1) f(r))` whose
//! logarithms reach thousands of nats, so nothing is ever exponentiated
//! without first subtracting a local maximum.

use crate::error::{Error, Result};

/// Natural log of a nonnegative quantity. `-inf` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    /// Wraps a log-magnitude. Panics on NaN or `+inf`.
    pub fn new(log: f64) -> Self {
        assert!(
            !log.is_nan() && log != f64::INFINITY,
            "LogValue must be finite or -inf, got {log}"
        );
        LogValue(log)
    }

    pub fn from_linear(x: f64) -> Self {
        assert!(x >= 0.0, "LogValue::from_linear of negative {x}");
        LogValue::new(x.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// `log(e^self + e^other)`.
    pub fn ln_add(self, other: LogValue) -> LogValue {
        let (hi, lo) = if self.0 >= other.0 { (self.0, other.0) } else { (other.0, self.0) };
        if hi == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        LogValue(hi + (lo - hi).exp().ln_1p())
    }

    /// `log(e^self * e^other)`.
    pub fn ln_mul(self, other: LogValue) -> LogValue {
        LogValue(self.0 + other.0)
    }

    /// `log(e^self / e^other)`; `other` must be nonzero.
    pub fn ln_div(self, other: LogValue) -> LogValue {
        assert!(!other.is_zero(), "division by a zero LogValue");
        LogValue(self.0 - other.0)
    }
}

/// Max-shifted log-sum-exp over a slice of raw log values.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `N * log(1 - z/N)` clamped to `-inf` once `z >= N`, i.e. the log of the
/// positive-part power `(1 - z/N)_+^N`.
pub fn log1m_pow(z: f64, cap: f64) -> LogValue {
    debug_assert!(cap > 0.0);
    if z >= cap {
        return LogValue::ZERO;
    }
    LogValue::new(cap * (-z / cap).ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub log_integral: LogValue,
    /// Estimated relative error of the integral, which is also the absolute
    /// error of its logarithm to first order.
    pub abs_log_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct QuadOptions {
    pub rel_tol: f64,
    /// Points where the integrand may have a kink. Subdivision starts there.
    pub breakpoints: Vec<f64>,
    pub max_evals: usize,
    /// For an infinite upper limit: the tail is cut once the log-integrand has
    /// fallen this many nats below the largest value seen and is decreasing.
    pub tail_drop: f64,
    /// Equal pieces each breakpoint segment is cut into before adapting.
    pub initial_splits: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            breakpoints: Vec::new(),
            max_evals: 400_000,
            tail_drop: 80.0,
            initial_splits: 4,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(rel_tol: f64) -> Self {
        QuadOptions { rel_tol, ..Default::default() }
    }

    pub fn breakpoints(mut self, points: &[f64]) -> Self {
        self.breakpoints = points.to_vec();
        self
    }

    pub fn initial_splits(mut self, splits: usize) -> Self {
        self.initial_splits = splits.max(1);
        self
    }
}

// Gauss–Kronrod 7/15 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    log_val: f64,
    log_err: f64,
}

fn gk15_log<F: Fn(f64) -> LogValue>(g: &F, lo: f64, hi: f64) -> Segment {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut vals = [0.0f64; 15];
    for j in 0..7 {
        let dx = half * XGK[j];
        vals[2 * j] = g(centre - dx).ln();
        vals[2 * j + 1] = g(centre + dx).ln();
    }
    vals[14] = g(centre).ln();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Segment { lo, hi, log_val: max, log_err: max };
    }
    let e = |v: f64| (v - max).exp();
    let mut kronrod = WGK[7] * e(vals[14]);
    let mut gauss = WG[3] * e(vals[14]);
    for j in 0..7 {
        let pair = e(vals[2 * j]) + e(vals[2 * j + 1]);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    let err = (kronrod - gauss).abs().max(50.0 * f64::EPSILON * kronrod);
    Segment {
        lo,
        hi,
        log_val: max + kronrod.ln(),
        log_err: max + err.ln(),
    }
}

/// Finds a finite replacement for an infinite upper limit by marching outward
/// with doubling steps until the integrand is `tail_drop` nats below its peak
/// and still falling.
fn tail_cut<F: Fn(f64) -> LogValue>(g: &F, start: f64, mut peak: f64, drop: f64) -> Option<(f64, usize)> {
    let step = start.abs().max(1.0);
    let mut prev = g(start).ln();
    peak = peak.max(prev);
    let mut evals = 1;
    let mut dist = step;
    for _ in 0..1100 {
        let x = start + dist;
        if !x.is_finite() {
            return None;
        }
        let v = g(x).ln();
        evals += 1;
        peak = peak.max(v);
        if v < peak - drop && v <= prev {
            return Some((x, evals));
        }
        prev = v;
        dist *= 2.0;
    }
    None
}

/// `log ∫_lo^hi exp(g(x)) dx` with default options and the given relative
/// tolerance. `hi` may be `+inf`.
pub fn integrate_log<F: Fn(f64) -> LogValue>(g: F, lo: f64, hi: f64, rel_tol: f64) -> Result<QuadratureResult> {
    integrate_log_with(g, lo, hi, &QuadOptions::with_tol(rel_tol))
}

pub fn integrate_log_with<F: Fn(f64) -> LogValue>(
    g: F,
    lo: f64,
    hi: f64,
    opts: &QuadOptions,
) -> Result<QuadratureResult> {
    if !(opts.rel_tol > 0.0 && opts.rel_tol <= 1e-3) {
        return Err(Error::InvalidParameter(format!("rel_tol {} outside (0, 1e-3]", opts.rel_tol)));
    }
    if !lo.is_finite() || hi.is_nan() || hi < lo {
        return Err(Error::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
    }
    let mut evaluations = 0;
    let mut hi = hi;
    if hi == f64::INFINITY {
        let mut start = lo;
        let mut peak = f64::NEG_INFINITY;
        for &b in &opts.breakpoints {
            if b > lo && b.is_finite() {
                start = start.max(b);
                peak = peak.max(g(b).ln());
                evaluations += 1;
            }
        }
        let (cut, evals) = tail_cut(&g, start, peak, opts.tail_drop).ok_or(Error::NonConvergence {
            lo,
            hi,
            evaluations,
            rel_error: f64::INFINITY,
        })?;
        evaluations += evals;
        hi = cut;
    }
    if hi == lo {
        return Ok(QuadratureResult { log_integral: LogValue::ZERO, abs_log_error: 0.0, evaluations });
    }

    let mut edges = vec![lo];
    edges.extend(opts.breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    edges.push(hi);
    edges.sort_by(|a, b| a.total_cmp(b));
    edges.dedup();

    let splits = opts.initial_splits.max(1);
    let mut segments = Vec::with_capacity(edges.len() * splits * 2);
    for w in edges.windows(2) {
        let width = (w[1] - w[0]) / splits as f64;
        for k in 0..splits {
            let a = w[0] + width * k as f64;
            let b = if k + 1 == splits { w[1] } else { a + width };
            segments.push(gk15_log(&g, a, b));
            evaluations += 15;
        }
    }

    let mut vals = Vec::with_capacity(segments.len() * 2);
    let mut errs = Vec::with_capacity(segments.len() * 2);
    loop {
        vals.clear();
        errs.clear();
        vals.extend(segments.iter().map(|s| s.log_val));
        errs.extend(segments.iter().map(|s| s.log_err));
        let total = log_sum_exp(&vals);
        if total == f64::NEG_INFINITY {
            return Ok(QuadratureResult { log_integral: LogValue::ZERO, abs_log_error: 0.0, evaluations });
        }
        let rel_error = (log_sum_exp(&errs) - total).exp();
        if rel_error <= opts.rel_tol {
            return Ok(QuadratureResult {
                log_integral: LogValue::new(total),
                abs_log_error: rel_error,
                evaluations,
            });
        }
        if evaluations >= opts.max_evals {
            return Err(Error::NonConvergence { lo, hi, evaluations, rel_error });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.log_err.total_cmp(&b.1.log_err))
            .map(|(i, _)| i)
            .unwrap();
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.lo + s.hi);
        segments.push(gk15_log(&g, s.lo, mid));
        segments.push(gk15_log(&g, mid, s.hi));
        evaluations += 30;
    }
}
