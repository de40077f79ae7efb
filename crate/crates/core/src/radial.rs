//! Spherically symmetric densities built from the three-branch function `f`:
//!
//! * exponential kernel `exp(-(n-1) f(|x|))`,
//! * polynomial kernel `(1 - (n-1) f(|x|) / cap)_+^cap`,
//!
//! together with their radial laws, computed by log-space quadrature of the
//! radial weight `r^(n-1) * kernel(r)`. Normalizing constants are only ever
//! held as logarithms.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{integrate_log_with, log1m_pow, std_normal_cdf, LogValue, QuadOptions};
use crate::pconvex::PiecewiseRadialFunction;

/// Nats below the peak at which radial tails are truncated.
pub const TAIL_DROP: f64 = 80.0;

/// Default relative tolerance for moments.
pub const MOMENT_TOL: f64 = 1e-10;
/// Default relative tolerance for distribution functions.
pub const CDF_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelKind {
    Exponential,
    Polynomial { cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialProfile {
    n: usize,
    f: PiecewiseRadialFunction,
    kind: KernelKind,
}

/// `sqrt(3n/7)`: the shell `[a, 2a]` then carries `E|X|^2 = n` exactly.
pub fn default_a(n: usize) -> f64 {
    (3.0 * n as f64 / 7.0).sqrt()
}

impl RadialProfile {
    pub fn new(n: usize, a: f64, kind: KernelKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("dimension {n} must be at least 2")));
        }
        let f = PiecewiseRadialFunction::new(a)?;
        if let KernelKind::Polynomial { cap } = kind {
            let psi0 = (n as f64 - 1.0) * a.ln();
            if !(cap.is_finite() && cap > 0.0 && cap > psi0) {
                return Err(Error::InvalidParameter(format!(
                    "polynomial cap {cap} must exceed (n-1) log a = {psi0}"
                )));
            }
        }
        Ok(RadialProfile { n, f, kind })
    }

    pub fn exponential(n: usize) -> Result<Self> {
        RadialProfile::new(n, default_a(n), KernelKind::Exponential)
    }

    pub fn polynomial(n: usize, cap: f64) -> Result<Self> {
        RadialProfile::new(n, default_a(n), KernelKind::Polynomial { cap })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.f.a()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Exponential => format!("exp(n={},a={})", self.n, self.a()),
            KernelKind::Polynomial { cap } => format!("poly(n={},a={},cap={})", self.n, self.a(), cap),
        }
    }

    /// `log(r^(n-1) * kernel(r))`.
    pub fn log_radial_weight(&self, r: f64) -> LogValue {
        if r <= 0.0 {
            return LogValue::ZERO;
        }
        let m = self.n as f64 - 1.0;
        match self.kind {
            KernelKind::Exponential => LogValue::new(m * (r.ln() - self.f.eval(r))),
            KernelKind::Polynomial { cap } => {
                let k = log1m_pow(m * self.f.eval(r), cap);
                if k.is_zero() {
                    k
                } else {
                    LogValue::new(m * r.ln() + k.ln())
                }
            }
        }
    }

    /// `sup {r : (n-1) f(r) < cap}` for the polynomial kernel.
    pub fn cap_radius(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Exponential => None,
            KernelKind::Polynomial { cap } => self.f.level_radius(cap / (self.n as f64 - 1.0)),
        }
    }

    /// Radius beyond which the weight is below `peak - TAIL_DROP` nats (or
    /// identically zero past the cap).
    pub fn truncation_radius(&self) -> f64 {
        let a = self.a();
        let lw = |r: f64| self.log_radial_weight(r).ln();
        let peak = lw(a).max(lw(2.0 * a));
        let target = peak - TAIL_DROP;
        let start = 2.0 * a;
        let step = a.max(1.0);
        let mut prev_x = start;
        let mut prev = lw(start);
        let mut dist = step;
        let mut cut = f64::INFINITY;
        for _ in 0..1100 {
            let x = start + dist;
            let v = lw(x);
            if v < target && v <= prev {
                cut = if prev >= target { bisect_level(&lw, prev_x, x, target) } else { x };
                break;
            }
            prev_x = x;
            prev = v;
            dist *= 2.0;
        }
        match self.cap_radius() {
            Some(rc) => cut.min(rc),
            None => cut,
        }
    }

    fn breakpoints(&self, cut: f64) -> Vec<f64> {
        let mut b = self.f.breakpoints().to_vec();
        if let Some(rc) = self.cap_radius() {
            b.push(rc);
        }
        b.retain(|&x| x < cut);
        b
    }

    fn quad_opts(&self, rel_tol: f64, cut: f64) -> QuadOptions {
        QuadOptions::with_tol(rel_tol).breakpoints(&self.breakpoints(cut))
    }

    /// `log ∫_lo^hi r^extra_power w(r) dr`, with `hi` clipped to the truncation radius.
    pub fn log_moment(&self, extra_power: f64, lo: f64, hi: f64, rel_tol: f64) -> Result<LogValue> {
        let cut = self.truncation_radius();
        let hi = hi.min(cut);
        if hi <= lo {
            return Ok(LogValue::ZERO);
        }
        let g = |r: f64| {
            let w = self.log_radial_weight(r);
            if w.is_zero() || extra_power == 0.0 {
                w
            } else {
                LogValue::new(w.ln() + extra_power * r.ln())
            }
        };
        Ok(integrate_log_with(g, lo, hi, &self.quad_opts(rel_tol, cut))?.log_integral)
    }

    /// `log ∫_0^∞ w(r) dr`.
    pub fn log_normalizer(&self, rel_tol: f64) -> Result<LogValue> {
        self.log_moment(0.0, 0.0, f64::INFINITY, rel_tol)
    }

    /// `(E X_1^2, E X_1^2 - 1)`.
    pub fn coordinate_variance(&self, rel_tol: f64) -> Result<(f64, f64)> {
        let z = self.log_normalizer(rel_tol)?;
        let m2 = self.log_moment(2.0, 0.0, f64::INFINITY, rel_tol)?;
        let variance = m2.ln_div(z).exp() / self.n as f64;
        Ok((variance, variance - 1.0))
    }

    pub fn shell_probability(&self, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(format!("shell [{lo}, {hi}]")));
        }
        let z = self.log_normalizer(rel_tol)?;
        Ok(self.log_moment(0.0, lo, hi, rel_tol)?.ln_div(z).exp())
    }

    /// `P(|X| <= t)` by a single quadrature. For many evaluations build a
    /// [`RadialCdf`].
    pub fn radial_cdf(&self, t: f64, rel_tol: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.shell_probability(0.0, t, rel_tol)?.min(1.0))
    }
}

fn bisect_level<F: Fn(f64) -> f64>(g: &F, mut lo: f64, mut hi: f64, level: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Cells of the precomputed radial distribution function.
const CDF_CELLS: usize = 512;

/// Tabulated radial distribution function: cumulative masses on a fixed
/// cell grid plus one small quadrature inside the cell for each query.
#[derive(Debug, Clone)]
pub struct RadialCdf {
    profile: RadialProfile,
    cut: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
    log_total: f64,
    rel_tol: f64,
}

impl RadialCdf {
    pub fn new(profile: &RadialProfile, rel_tol: f64) -> Result<Self> {
        let cut = profile.truncation_radius();
        let mut edges: Vec<f64> = (0..=CDF_CELLS).map(|i| cut * i as f64 / CDF_CELLS as f64).collect();
        edges.extend(profile.breakpoints(cut));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let opts = QuadOptions::with_tol(rel_tol).initial_splits(1);
        let mut log_cum = Vec::with_capacity(edges.len());
        let mut acc = LogValue::ZERO;
        log_cum.push(acc);
        for w in edges.windows(2) {
            let cell = integrate_log_with(|r| profile.log_radial_weight(r), w[0], w[1], &opts)?;
            acc = acc.ln_add(cell.log_integral);
            log_cum.push(acc);
        }
        let log_total = acc.ln();
        if !log_total.is_finite() {
            return Err(Error::DegenerateSpec(format!("profile {} has no mass", profile.label())));
        }
        let cum = log_cum.iter().map(|l| (l.ln() - log_total).exp()).collect();
        Ok(RadialCdf { profile: *profile, cut, edges, cum, log_total, rel_tol })
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn support_end(&self) -> f64 {
        self.cut
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_total
    }

    pub fn density(&self, r: f64) -> f64 {
        (self.profile.log_radial_weight(r).ln() - self.log_total).exp()
    }

    /// Normalized mass of `[lo, hi]` for a short interval.
    pub fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let opts = QuadOptions::with_tol(self.rel_tol)
            .initial_splits(1)
            .breakpoints(&self.profile.breakpoints(self.cut));
        let m = integrate_log_with(|r| self.profile.log_radial_weight(r), lo, hi, &opts)?;
        Ok((m.log_integral.ln() - self.log_total).exp())
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        if t >= self.cut {
            return Ok(1.0);
        }
        let i = self.edges.partition_point(|&e| e <= t) - 1;
        Ok((self.cum[i] + self.mass_between(self.edges[i], t)?).min(1.0))
    }
}

/// Sup of `|F_1 - F_2|` over a uniform grid on `[a/2, 3a]`, starting at 2048
/// points and doubling until the sup moves by less than `1e-6`.
pub fn cdf_sup_distance(p1: &RadialProfile, p2: &RadialProfile, rel_tol: f64) -> Result<f64> {
    if p1.n() != p2.n() || p1.a() != p2.a() {
        return Err(Error::InvalidParameter("profiles must share n and a".into()));
    }
    if p1 == p2 {
        return Ok(0.0);
    }
    let (c1, c2) = (RadialCdf::new(p1, rel_tol)?, RadialCdf::new(p2, rel_tol)?);
    let a = p1.a();
    let (lo, hi) = (0.5 * a, 3.0 * a);
    let sup_on = |points: usize| -> Result<f64> {
        let mut sup = 0.0f64;
        for i in 0..points {
            let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            sup = sup.max((c1.cdf(t)? - c2.cdf(t)?).abs());
        }
        Ok(sup)
    };
    let mut points = 2048;
    let mut sup = sup_on(points)?;
    while points < 1 << 17 {
        points *= 2;
        let next = sup_on(points)?;
        let settled = (next - sup).abs() < 1e-6;
        sup = next;
        if settled {
            break;
        }
    }
    Ok(sup)
}

/// Quantile table of a radial law: knots `(u, q(u))`, strictly increasing in
/// both coordinates, denser toward both tails.
#[derive(Debug, Clone)]
pub struct InverseCdfTable {
    cdf: RadialCdf,
    knots: Vec<(f64, f64)>,
    /// `F(q)` as evaluated at each knot; differs from `u` by at most `tolerance`.
    knot_cdf: Vec<f64>,
    tolerance: f64,
}

/// Smallest tail probability given its own knot.
const TAIL_FLOOR: f64 = 1e-12;

fn knot_probabilities(knots: usize) -> Vec<f64> {
    let tail = knots / 8;
    let interior = knots - 2 - 2 * tail;
    let step = 1.0 / (interior + 1) as f64;
    let mut u = vec![0.0, 1.0];
    u.extend((1..=interior).map(|i| i as f64 * step));
    for j in 0..tail {
        let v = TAIL_FLOOR * (step / TAIL_FLOOR).powf(j as f64 / tail as f64);
        u.push(v);
        u.push(1.0 - v);
    }
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// Builds a quantile table with `knots >= 64` knots; each quantile is found by
/// bisection on the radial CDF to `1e-10` in radius.
pub fn build_inverse_cdf(profile: &RadialProfile, knots: usize, rel_tol: f64) -> Result<InverseCdfTable> {
    if knots < 64 {
        return Err(Error::InvalidParameter(format!("{knots} knots, need at least 64")));
    }
    let cdf = RadialCdf::new(profile, rel_tol)?;
    let cut = cdf.support_end();
    let mut table = Vec::with_capacity(knots);
    let mut knot_cdf = Vec::with_capacity(knots);
    let mut lo_bound = 0.0;
    for u in knot_probabilities(knots) {
        let q = if u == 0.0 {
            0.0
        } else if u == 1.0 {
            cut
        } else {
            let (mut lo, mut hi) = (lo_bound, cut);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if cdf.cdf(mid)? < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        lo_bound = q;
        knot_cdf.push(cdf.cdf(q)?);
        table.push((u, q));
    }
    let increasing = table.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    if !increasing {
        return Err(Error::DegenerateSpec(format!(
            "quantile table for {} is not strictly increasing",
            profile.label()
        )));
    }
    let tolerance = table
        .iter()
        .zip(&knot_cdf)
        .map(|((u, _), c)| (u - c).abs())
        .fold(0.0, f64::max);
    Ok(InverseCdfTable { cdf, knots: table, knot_cdf, tolerance })
}

impl InverseCdfTable {
    pub fn profile(&self) -> &RadialProfile {
        self.cdf.profile()
    }

    pub fn radial_cdf(&self) -> &RadialCdf {
        &self.cdf
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Largest `|F(q) - u|` over the knots.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `q(u)` for `u` in `[0, 1]`: linear interpolation between knots, then a
    /// safeguarded Newton/bisection refinement against the radial CDF to
    /// `1e-9` in radius.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        let u = u.clamp(0.0, 1.0);
        let i = (self.knots.partition_point(|k| k.0 <= u)).clamp(1, self.knots.len() - 1) - 1;
        let (u0, q0) = self.knots[i];
        let (u1, q1) = self.knots[i + 1];
        let c0 = self.knot_cdf[i];
        let (mut lo, mut hi) = (q0, q1);
        let mut r = q0 + (q1 - q0) * ((u - u0) / (u1 - u0)).clamp(0.0, 1.0);
        for _ in 0..100 {
            let resid = c0 + self.cdf.mass_between(q0, r)? - u;
            if resid < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            if hi - lo <= 1e-9 {
                break;
            }
            let dens = self.cdf.density(r);
            let newton = r - resid / dens;
            let next = if dens > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - r).abs() <= 1e-9 {
                r = next;
                break;
            }
            r = next;
        }
        Ok(r)
    }

    /// Two-column `u,q` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "q"])?;
        for (u, q) in &self.knots {
            w.write_record([format!("{u:.16e}"), format!("{q:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads back the `(u, q)` pairs written by [`InverseCdfTable::write_csv`].
pub fn read_quantile_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Io(format!("bad number {s:?}: {e}")));
        out.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(out)
}

/// Lower end `sqrt(3/7)` of the uniform factor `W` in the limiting law `G·W`.
pub fn gw_low() -> f64 {
    (3.0f64 / 7.0).sqrt()
}

/// CDF of `G·W`, `G` standard normal and `W` uniform on `[c, 2c]`,
/// `c = sqrt(3/7)`: `(1/c) ∫_c^{2c} Φ(t/w) dw`.
pub fn gw_cdf(t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    // Integrate the lower tail, where Φ is small and known to full relative
    // precision, and reflect for positive t.
    let s = -t.abs();
    let c = gw_low();
    let opts = QuadOptions::with_tol(1e-12).initial_splits(1);
    let lower = integrate_log_with(|w| LogValue::from_linear(std_normal_cdf(s / w)), c, 2.0 * c, &opts)
        .map(|r| r.log_integral.exp() / c)
        .expect("G·W quadrature on a smooth integrand");
    if t < 0.0 {
        lower
    } else {
        1.0 - lower
    }
}
