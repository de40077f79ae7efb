//! Exact random generators. Each `sample_*` function draws its whole batch
//! from the single stream named by its [`StreamSpec`]; large experiments
//! shard by calling them once per stream index and concatenating.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::pconvex::{body_membership, BodySpec};
use crate::radial::{gw_low, InverseCdfTable};
use crate::rng::StreamSpec;

/// `m x dim` row-major block of draws plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    points: Vec<f64>,
    rows: usize,
    dim: usize,
    generator: String,
    stream: StreamSpec,
}

impl SampleBatch {
    fn new(points: Vec<f64>, dim: usize, generator: String, stream: StreamSpec) -> Self {
        debug_assert_eq!(points.len() % dim.max(1), 0);
        debug_assert!(points.iter().all(|v| v.is_finite()));
        let rows = points.len().checked_div(dim).unwrap_or(0);
        SampleBatch { points, rows, dim, generator, stream }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn stream(&self) -> StreamSpec {
        self.stream
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.iter_rows().map(crate::pconvex::norm).collect()
    }

    /// `θ·x` for every row.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.dim);
        self.iter_rows()
            .map(|r| r.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    /// Concatenates batches in the given order. All must share the generator
    /// and dimension; the result keeps the first batch's stream.
    pub fn concat(parts: Vec<SampleBatch>) -> Result<SampleBatch> {
        let mut iter = parts.into_iter();
        let mut first = iter
            .next()
            .ok_or_else(|| Error::InvalidParameter("nothing to concatenate".into()))?;
        for b in iter {
            if b.dim != first.dim || b.generator != first.generator {
                return Err(Error::InvalidParameter("incompatible batches".into()));
            }
            first.points.extend(b.points);
            first.rows += b.rows;
        }
        Ok(first)
    }

    /// One CSV row per point, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for r in self.iter_rows() {
            w.write_record(r.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fill_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
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

fn require_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidParameter(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Uniform points on `S^{n-1}` (normalized Gaussian vectors).
pub fn sample_sphere(n: usize, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    require_positive("dimension", n)?;
    let mut rng = stream.rng();
    let mut pts = vec![0.0; n * m];
    for row in pts.chunks_exact_mut(n) {
        fill_direction(&mut rng, row);
    }
    Ok(SampleBatch::new(pts, n, format!("sphere(n={n})"), stream))
}

/// Standard Gaussian vectors in `R^n`.
pub fn sample_gaussian(n: usize, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    require_positive("dimension", n)?;
    let mut rng = stream.rng();
    let pts = (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(SampleBatch::new(pts, n, format!("gaussian(n={n})"), stream))
}

/// `sigma` with `sigma^2 = E x_1^2` for `x` uniform on `B_p^n`:
/// `Γ(3/p) Γ(n/p + 1) / (Γ(1/p) Γ((n+2)/p + 1))`.
pub fn coordinate_sigma(p: f64, n: usize) -> f64 {
    assert!(p > 0.0, "p must be positive");
    let nf = n as f64;
    let lg = libm::lgamma;
    let log_var = lg(3.0 / p) + lg(nf / p + 1.0) - lg(1.0 / p) - lg((nf + 2.0) / p + 1.0);
    (0.5 * log_var).exp()
}

/// Uniform on `c_{p,n} B_p^n` with `c_{p,n} = 1/coordinate_sigma(p, n)`.
///
/// Uses `x = g / (Σ|g_i|^p + W)^{1/p}` with `|g_i|^p ~ Gamma(1/p)`, uniform
/// signs and `W ~ Exp(1)`, which is exactly uniform on `B_p^n`.
pub fn sample_bpn(p: f64, n: usize, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must be positive")));
    }
    require_positive("dimension", n)?;
    let gamma = Gamma::new(1.0 / p, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let scale = 1.0 / coordinate_sigma(p, n);
    let inv_p = 1.0 / p;
    let mut rng = stream.rng();
    let mut pts = vec![0.0; n * m];
    let mut bits = 0u64;
    let mut left = 0u32;
    for row in pts.chunks_exact_mut(n) {
        let mut total = 0.0;
        for v in row.iter_mut() {
            let s: f64 = gamma.sample(&mut rng);
            *v = s;
            total += s;
        }
        let w: f64 = Exp1.sample(&mut rng);
        total += w;
        for v in row.iter_mut() {
            if left == 0 {
                bits = rng.random();
                left = 64;
            }
            let sign = if bits & 1 == 1 { -1.0 } else { 1.0 };
            bits >>= 1;
            left -= 1;
            *v = sign * scale * (*v / total).powf(inv_p);
        }
    }
    Ok(SampleBatch::new(pts, n, format!("bpn(p={p},n={n})"), stream))
}

/// Points of the radial law tabulated by `table`: inverse-CDF radius times a
/// uniform direction.
pub fn sample_radial(table: &InverseCdfTable, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    let n = table.profile().n();
    let mut rng = stream.rng();
    let mut pts = vec![0.0; n * m];
    for row in pts.chunks_exact_mut(n) {
        let u: f64 = rng.random();
        let r = table.quantile(u)?;
        fill_direction(&mut rng, row);
        row.iter_mut().for_each(|v| *v *= r);
    }
    Ok(SampleBatch::new(pts, n, format!("radial({})", table.profile().label()), stream))
}

/// Radii only, as a one-column batch.
pub fn sample_radii(table: &InverseCdfTable, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    let mut rng = stream.rng();
    let pts = (0..m)
        .map(|_| table.quantile(rng.random()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SampleBatch::new(pts, 1, format!("radius({})", table.profile().label()), stream))
}

/// Scalars `G·W`, `G` standard normal, `W` uniform on `[sqrt(3/7), 2 sqrt(3/7)]`.
pub fn sample_gw(m: usize, stream: StreamSpec) -> SampleBatch {
    let c = gw_low();
    let mut rng = stream.rng();
    let pts = (0..m)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            let w = c * (1.0 + rng.random::<f64>());
            g * w
        })
        .collect();
    SampleBatch::new(pts, 1, "gw".into(), stream)
}

/// Proposals after which a near-zero acceptance rate aborts the sampler.
const REJECTION_PATIENCE: u64 = 1_000_000;
const MIN_ACCEPTANCE: f64 = 1e-6;

/// Uniform points of a tiny body `K` by rejection from
/// `[-R, R]^n x (unit ball in R^fiber_dim)`; returns the `x` blocks and the
/// number of proposals used.
pub fn sample_body_tiny_counted(spec: &BodySpec, m: usize, stream: StreamSpec) -> Result<(SampleBatch, u64)> {
    if spec.n > 3 || spec.fiber_dim > 4 {
        return Err(Error::InvalidParameter(format!(
            "rejection sampling needs n <= 3 and fiber_dim <= 4, got {} and {}",
            spec.n, spec.fiber_dim
        )));
    }
    let radius = spec
        .support_radius()
        .filter(|r| r.is_finite())
        .ok_or_else(|| Error::DegenerateSpec("body has no bounded interior".into()))?;
    if spec.fiber_radius(0.0) > 1.0 {
        return Err(Error::InvalidParameter("fibres exceed the unit ball (need a >= 1)".into()));
    }
    let (n, d) = (spec.n, spec.fiber_dim);
    let mut rng = stream.rng();
    let mut pts = Vec::with_capacity(n * m);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; d]);
    let mut proposals = 0u64;
    let mut accepted = 0usize;
    while accepted < m {
        proposals += 1;
        for v in x.iter_mut() {
            *v = radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        fill_direction(&mut rng, &mut y);
        let rho = rng.random::<f64>().powf(1.0 / d as f64);
        y.iter_mut().for_each(|v| *v *= rho);
        if body_membership(spec, &x, &y) {
            pts.extend_from_slice(&x);
            accepted += 1;
        }
        if proposals >= REJECTION_PATIENCE && (accepted as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(Error::RejectionBudgetExceeded { accepted, proposals: proposals as usize });
        }
    }
    let id = format!("body(n={n},fiber={d},cap={},a={})", spec.cap, spec.a());
    Ok((SampleBatch::new(pts, n, id, stream), proposals))
}

pub fn sample_body_tiny(spec: &BodySpec, m: usize, stream: StreamSpec) -> Result<SampleBatch> {
    sample_body_tiny_counted(spec, m, stream).map(|(b, _)| b)
}
