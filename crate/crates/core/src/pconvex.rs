//! p-convex combinations, the three-branch radial function, randomized
//! p-convexity certificates for functions and for the body
//! `K = {(x, y) : |y| < (1 - psi(x)/cap)_+}` with `psi(x) = (n-1) f(|x|)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{map_shards, StreamSpec};

/// Exponent `p` of a p-convex combination, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(PExponent(p))
        } else {
            Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")))
        }
    }

    pub fn half() -> Self {
        PExponent(0.5)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The combination weight `t^(1/p)`.
    pub fn weight(self, t: f64) -> f64 {
        t.powf(1.0 / self.0)
    }
}

/// `log a` on `[0, a]`, `log r` on `[a, 2a]`, `sqrt(r) - sqrt(2a) + log 2a`
/// beyond. Continuous and nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiecewiseRadialFunction {
    a: f64,
}

impl PiecewiseRadialFunction {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a.is_finite() {
            Ok(PiecewiseRadialFunction { a })
        } else {
            Err(Error::InvalidParameter(format!("breakpoint a = {a} must be positive")))
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn breakpoints(&self) -> [f64; 2] {
        [self.a, 2.0 * self.a]
    }

    pub fn eval(&self, r: f64) -> f64 {
        let a = self.a;
        if r <= a {
            a.ln()
        } else if r <= 2.0 * a {
            r.ln()
        } else {
            let two_a = 2.0 * a;
            r.sqrt() - two_a.sqrt() + two_a.ln()
        }
    }

    /// `sup {r >= 0 : f(r) < level}`, or `None` when the set is empty.
    pub fn level_radius(&self, level: f64) -> Option<f64> {
        let a = self.a;
        let two_a = 2.0 * a;
        if level <= a.ln() {
            None
        } else if level <= two_a.ln() {
            Some(level.exp())
        } else {
            let s = level - two_a.ln() + two_a.sqrt();
            Some(s * s)
        }
    }
}

/// `t^(1/p) x + (1-t)^(1/p) y`.
pub fn p_combine(p: PExponent, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "p_combine of points with different dimensions");
    let (wx, wy) = (p.weight(t), p.weight(1.0 - t));
    x.iter().zip(y).map(|(a, b)| wx * a + wy * b).collect()
}

pub fn p_combine_scalar(p: PExponent, t: f64, x: f64, y: f64) -> f64 {
    p.weight(t) * x + p.weight(1.0 - t) * y
}

/// `f(t^(1/p) x + (1-t)^(1/p) y) - t f(x) - (1-t) f(y)`; positive means the
/// p-convexity inequality fails at this triple.
pub fn pconvex_gap<F: Fn(f64) -> f64>(f: &F, p: PExponent, x: f64, y: f64, t: f64) -> f64 {
    f(p_combine_scalar(p, t, x, y)) - (t * f(x) + (1.0 - t) * f(y))
}

/// Sampling domain for the scalar checkers, cut into pieces at breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub breakpoints: Vec<f64>,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Domain { lo, hi, breakpoints: Vec::new() }
    }

    pub fn with_breakpoints(mut self, points: &[f64]) -> Self {
        self.breakpoints = points.to_vec();
        self
    }

    /// The domain used to certify the radial function: `[0, 10^6]` split at
    /// `a`, `2a` and `4a` (the case boundaries of the p-convexity argument).
    pub fn for_radial(f: &PiecewiseRadialFunction) -> Self {
        let a = f.a();
        Domain::new(0.0, 1e6).with_breakpoints(&[a, 2.0 * a, 4.0 * a])
    }

    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let mut edges = vec![self.lo];
        let mut inner: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .filter(|&b| b > self.lo && b < self.hi)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        edges.extend(inner);
        edges.push(self.hi);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Uniform on short pieces, log-uniform on pieces spanning decades so that
/// the lower end is not starved.
fn draw_in_piece<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    if lo > 0.0 && hi / lo > 16.0 {
        (lo.ln() + u * (hi / lo).ln()).exp().clamp(lo, hi)
    } else {
        lo + u * (hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub trials: u64,
    pub violations: u64,
    /// Largest observed `LHS - RHS`; `-inf` before any trial.
    pub worst_gap: f64,
    pub worst_witness: Option<Witness>,
    pub tolerance: f64,
}

impl ViolationReport {
    pub fn empty(tolerance: f64) -> Self {
        ViolationReport {
            trials: 0,
            violations: 0,
            worst_gap: f64::NEG_INFINITY,
            worst_witness: None,
            tolerance,
        }
    }

    pub fn record(&mut self, gap: f64, violated: bool, witness: impl FnOnce() -> Witness) {
        self.trials += 1;
        if violated {
            self.violations += 1;
        }
        if gap > self.worst_gap {
            self.worst_gap = gap;
            self.worst_witness = Some(witness());
        }
    }

    /// Associative merge; ties on the worst gap keep `self`'s witness.
    pub fn merge(mut self, other: ViolationReport) -> ViolationReport {
        self.trials += other.trials;
        self.violations += other.violations;
        if other.worst_gap > self.worst_gap {
            self.worst_gap = other.worst_gap;
            self.worst_witness = other.worst_witness;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn merge_all(tol: f64, parts: Vec<ViolationReport>) -> ViolationReport {
    parts.into_iter().fold(ViolationReport::empty(tol), ViolationReport::merge)
}

/// Randomized certificate of `f(t^(1/p) x + (1-t)^(1/p) y) <= t f(x) + (1-t) f(y) + tol`.
///
/// Trial `i` is assigned to the piece pair `i mod K`, `K` being the number of
/// unordered pairs of domain pieces, so every pair gets `floor(trials/K)` or
/// one more draws. `t` is uniform on `[0, 1]`.
pub fn check_pconvex_fn<F>(
    f: &F,
    p: PExponent,
    domain: &Domain,
    trials: u64,
    tol: f64,
    seed: u64,
) -> ViolationReport
where
    F: Fn(f64) -> f64 + Sync,
{
    let pieces = domain.pieces();
    let pairs: Vec<(usize, usize)> = (0..pieces.len())
        .flat_map(|i| (i..pieces.len()).map(move |j| (i, j)))
        .collect();
    let parts = map_shards(trials as usize, |shard, start, len| {
        let mut rng = StreamSpec::new(seed, shard).rng();
        let mut report = ViolationReport::empty(tol);
        for i in start..start + len {
            let (pi, pj) = pairs[i % pairs.len()];
            let x = draw_in_piece(&mut rng, pieces[pi]);
            let y = draw_in_piece(&mut rng, pieces[pj]);
            let t: f64 = rng.random();
            let gap = pconvex_gap(f, p, x, y, t);
            report.record(gap, gap > tol, || Witness { first: vec![x], second: vec![y], t });
        }
        report
    });
    merge_all(tol, parts)
}

/// Maximum of `g(t, c) = (1-t)^2 + t^2 c - c^t` over a `resolution x resolution`
/// grid on `[0,1] x [1,4]`, endpoints included.
pub fn check_weaklog_grid(resolution: usize) -> f64 {
    assert!(resolution >= 2, "grid resolution must be at least 2");
    let step = 1.0 / (resolution - 1) as f64;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..resolution {
        let t = i as f64 * step;
        for j in 0..resolution {
            let c = 1.0 + 3.0 * j as f64 * step;
            worst = worst.max(weaklog_g(t, c));
        }
    }
    worst
}

pub fn weaklog_g(t: f64, c: f64) -> f64 {
    (1.0 - t) * (1.0 - t) + t * t * c - c.powf(t)
}

/// Random ordered pairs `x < y`; a violation is `f(x) > f(y) + tol`.
pub fn check_monotone<F>(f: &F, domain: &Domain, trials: u64, tol: f64, seed: u64) -> ViolationReport
where
    F: Fn(f64) -> f64 + Sync,
{
    let pieces = domain.pieces();
    let pairs: Vec<(usize, usize)> = (0..pieces.len())
        .flat_map(|i| (i..pieces.len()).map(move |j| (i, j)))
        .collect();
    let parts = map_shards(trials as usize, |shard, start, len| {
        let mut rng = StreamSpec::new(seed, shard).rng();
        let mut report = ViolationReport::empty(tol);
        for i in start..start + len {
            let (pi, pj) = pairs[i % pairs.len()];
            let u = draw_in_piece(&mut rng, pieces[pi]);
            let v = draw_in_piece(&mut rng, pieces[pj]);
            let (x, y) = if u <= v { (u, v) } else { (v, u) };
            let gap = f(x) - f(y);
            report.record(gap, gap > tol, || Witness { first: vec![x], second: vec![y], t: f64::NAN });
        }
        report
    });
    merge_all(tol, parts)
}

/// Parameters of `K = {(x, y) : x in R^n, y in R^fiber_dim, |y| < (1 - psi(x)/cap)_+}`
/// with `psi(x) = (n-1) f(|x|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BodySpec {
    pub n: usize,
    pub cap: f64,
    pub f: PiecewiseRadialFunction,
    pub fiber_dim: usize,
}

impl BodySpec {
    pub fn new(n: usize, cap: f64, a: f64, fiber_dim: usize) -> Result<Self> {
        if n < 1 || fiber_dim < 1 {
            return Err(Error::InvalidParameter("body dimensions must be positive".into()));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidParameter(format!("cap {cap} must be positive")));
        }
        let spec = BodySpec { n, cap, f: PiecewiseRadialFunction::new(a)?, fiber_dim };
        if spec.psi_radial(0.0) >= cap {
            return Err(Error::InvalidParameter(format!(
                "cap {cap} must exceed psi(0) = {}",
                spec.psi_radial(0.0)
            )));
        }
        Ok(spec)
    }

    /// `a = 100`, `cap = fiber_dim = ceil(n^(5/2) ln^2 n)`.
    pub fn reference_instance(n: usize) -> Result<Self> {
        let cap = default_cap(n);
        BodySpec::new(n, cap, 100.0, cap as usize)
    }

    pub fn a(&self) -> f64 {
        self.f.a()
    }

    pub fn psi_radial(&self, r: f64) -> f64 {
        (self.n as f64 - 1.0) * self.f.eval(r)
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        self.psi_radial(norm(x))
    }

    /// `f_N(x)^(1/N) = (1 - psi(x)/cap)_+` as a function of `|x|`.
    pub fn fiber_radius(&self, r: f64) -> f64 {
        (1.0 - self.psi_radial(r) / self.cap).max(0.0)
    }

    /// `sup {r : psi(r) < cap}`; infinite when `n = 1`.
    pub fn support_radius(&self) -> Option<f64> {
        if self.n == 1 {
            return Some(f64::INFINITY);
        }
        self.f.level_radius(self.cap / (self.n as f64 - 1.0))
    }
}

/// `ceil(n^(5/2) (ln n)^2)`.
pub fn default_cap(n: usize) -> f64 {
    let nf = n as f64;
    (nf.powf(2.5) * nf.ln().powi(2)).ceil()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn body_membership(spec: &BodySpec, x: &[f64], y: &[f64]) -> bool {
    let psi = spec.psi(x);
    psi < spec.cap && norm(y) < 1.0 - psi / spec.cap
}

fn random_direction<R: Rng>(rng: &mut R, dim: usize, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut().take(dim) {
            *v = StandardNormal.sample(rng);
            s += *v * *v;
        }
        if s > 0.0 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Randomized certificate that `K` is closed under p-combinations.
///
/// Member points are built from the fibre structure of `K`: `|x|` is uniform
/// on `[0, s)` with `s` picked among the support radius, `4a` and `2a` (so
/// every branch of `f` is exercised), then `y` is uniform in the ball of
/// radius `(1 - psi(x)/cap)(1 - u)`.
pub fn check_body_pconvex(spec: &BodySpec, p: PExponent, trials: u64, seed: u64) -> Result<ViolationReport> {
    let support = spec
        .support_radius()
        .ok_or_else(|| Error::DegenerateSpec("psi(x) < cap has no solution".into()))?;
    if spec.fiber_radius(0.0) <= f64::EPSILON {
        return Err(Error::DegenerateSpec("fibre over the origin is numerically empty".into()));
    }
    let a = spec.a();
    let scales = [support, support.min(4.0 * a), support.min(2.0 * a)];
    let (n, d) = (spec.n, spec.fiber_dim);

    let draw_member = |rng: &mut rand_chacha::ChaCha8Rng, x: &mut [f64], y: &mut [f64]| {
        let scale = scales[rng.random_range(0..scales.len())];
        let r = scale * rng.random::<f64>();
        random_direction(rng, n, x);
        x.iter_mut().for_each(|v| *v *= r);
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let radius = spec.fiber_radius(r) * (1.0 - u) * rng.random::<f64>().powf(1.0 / d as f64);
        random_direction(rng, d, y);
        y.iter_mut().for_each(|v| *v *= radius);
    };

    let parts = map_shards(trials as usize, |shard, _start, len| {
        let mut rng = StreamSpec::new(seed, shard).rng();
        let mut report = ViolationReport::empty(0.0);
        let (mut x1, mut x2, mut xc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut y1, mut y2, mut yc) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        for _ in 0..len {
            draw_member(&mut rng, &mut x1, &mut y1);
            draw_member(&mut rng, &mut x2, &mut y2);
            let t: f64 = rng.random();
            let (w1, w2) = (p.weight(t), p.weight(1.0 - t));
            for i in 0..n {
                xc[i] = w1 * x1[i] + w2 * x2[i];
            }
            for i in 0..d {
                yc[i] = w1 * y1[i] + w2 * y2[i];
            }
            let member = body_membership(spec, &xc, &yc);
            let gap = norm(&yc) - (1.0 - spec.psi(&xc) / spec.cap);
            report.record(gap, !member, || Witness {
                first: x1.iter().chain(&y1).copied().collect(),
                second: x2.iter().chain(&y2).copied().collect(),
                t,
            });
        }
        report
    });
    Ok(merge_all(0.0, parts))
}
