//! Independent oracles for the derived reference values. Nothing here reuses
//! the library's quadrature; each oracle is a plain composite rule written
//! out in full.

use nonconvex_clt::numerics::std_normal_cdf;
use nonconvex_clt::pconvex::{default_cap, PiecewiseRadialFunction};
use nonconvex_clt::radial::{build_inverse_cdf, gw_cdf, RadialProfile, CDF_TOL, MOMENT_TOL};
use nonconvex_clt::samplers::coordinate_sigma;
use nonconvex_clt::stats::{dense_grid_distance, dkw_floor};

fn f_oracle(a: f64, r: f64) -> f64 {
    if r <= a {
        a.ln()
    } else if r <= 2.0 * a {
        r.ln()
    } else {
        r.sqrt() - (2.0 * a).sqrt() + (2.0 * a).ln()
    }
}

/// Composite Simpson rule with `panels` (even) panels.
fn simpson<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut s = g(lo) + g(hi);
    for i in 1..panels {
        s += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn midpoint<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / points as f64;
    (0..points).map(|i| g(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// `ln` of the unnormalized radial density, written from the definition.
fn log_weight(n: usize, a: f64, cap: Option<f64>, r: f64) -> f64 {
    let psi = (n as f64 - 1.0) * f_oracle(a, r);
    let rn = (n as f64 - 1.0) * r.ln();
    match cap {
        None => rn - psi,
        Some(c) if psi < c => rn + c * (1.0 - psi / c).ln(),
        Some(_) => f64::NEG_INFINITY,
    }
}

/// `(Z / a, E X_1^2, P(a <= |X| <= 2a))` by Simpson's rule on the pieces
/// `[0, a], [a, 2a], [2a, 4a], [4a, 2a + 200 sqrt(2a) + 400]` of the scaled
/// density.
fn radial_oracle(n: usize, cap: Option<f64>) -> (f64, f64, f64) {
    let a = (3.0 * n as f64 / 7.0).sqrt();
    let shift = log_weight(n, a, cap, a).max(log_weight(n, a, cap, 2.0 * a));
    let w = |r: f64| if r <= 0.0 { 0.0 } else { (log_weight(n, a, cap, r) - shift).exp() };
    let tail_end = 2.0 * a + 200.0 * (2.0 * a).sqrt() + 400.0;
    let pieces = [(0.0, a), (a, 2.0 * a), (2.0 * a, 4.0 * a), (4.0 * a, tail_end)];
    let panels = 200_000;
    let z: f64 = pieces.iter().map(|&(l, h)| simpson(w, l, h, panels)).sum();
    let m2: f64 = pieces.iter().map(|&(l, h)| simpson(|r| r * r * w(r), l, h, panels)).sum();
    let shell = simpson(w, a, 2.0 * a, panels);
    let z_lin = z * shift.exp();
    (z_lin / a, m2 / z / n as f64, shell / z)
}

#[test]
fn f_golden() {
    let f = PiecewiseRadialFunction::new(100.0).unwrap();
    for r in [0.0, 50.0, 100.0, 150.0, 200.0, 400.0, 1e4] {
        assert!((f.eval(r) - f_oracle(100.0, r)).abs() < 1e-12, "r = {r}");
    }
    assert!((f.eval(400.0) - 11.156181742817085).abs() < 1e-12);
}

#[test]
fn normal_cdf_against_midpoint_integration() {
    let pdf = |s: f64| (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for i in 0..=32 {
        let t = -8.0 + 0.5 * i as f64;
        // Φ(-8) is about 6e-16, far below the tolerance.
        let oracle = midpoint(pdf, -8.0, t, 1 << 18);
        assert!((std_normal_cdf(t) - oracle).abs() < 1e-9, "t = {t}");
    }
    assert!((std_normal_cdf(1.96) - 0.9750021048517795).abs() < 1e-15);
}

#[test]
fn exponential_profile_against_simpson() {
    for n in [25usize, 100, 400] {
        let p = RadialProfile::exponential(n).unwrap();
        let (z_over_a, var, shell) = radial_oracle(n, None);
        let lib_z = p.log_normalizer(MOMENT_TOL).unwrap().exp() / p.a();
        let (lib_var, _) = p.coordinate_variance(MOMENT_TOL).unwrap();
        let lib_shell = p.shell_probability(p.a(), 2.0 * p.a(), MOMENT_TOL).unwrap();
        assert!((lib_z / z_over_a - 1.0).abs() < 1e-8, "n = {n}: {lib_z} vs {z_over_a}");
        assert!((lib_var / var - 1.0).abs() < 1e-8, "n = {n}: {lib_var} vs {var}");
        assert!((lib_shell - shell).abs() < 1e-8, "n = {n}: {lib_shell} vs {shell}");
    }
}

#[test]
fn polynomial_profile_against_simpson() {
    for n in [25usize, 100] {
        let cap = default_cap(n);
        let p = RadialProfile::polynomial(n, cap).unwrap();
        let (z_over_a, var, shell) = radial_oracle(n, Some(cap));
        let lib_z = p.log_normalizer(MOMENT_TOL).unwrap().exp() / p.a();
        let (lib_var, _) = p.coordinate_variance(MOMENT_TOL).unwrap();
        let lib_shell = p.shell_probability(p.a(), 2.0 * p.a(), MOMENT_TOL).unwrap();
        assert!((lib_z / z_over_a - 1.0).abs() < 1e-8, "n = {n}");
        assert!((lib_var / var - 1.0).abs() < 1e-8, "n = {n}");
        assert!((lib_shell - shell).abs() < 1e-8, "n = {n}");
    }
}

#[test]
fn published_isotropy_values() {
    // pinned from the first trusted run, cross-checked against the oracle above
    let p = RadialProfile::exponential(100).unwrap();
    let (_, eps) = p.coordinate_variance(MOMENT_TOL).unwrap();
    assert!((eps - 0.012645).abs() < 1e-6, "{eps}");
    let z = p.log_normalizer(MOMENT_TOL).unwrap().exp() / p.a();
    assert!((z - 1.034931).abs() < 1e-6, "{z}");
}

#[test]
fn quantile_table_inverts_the_cdf() {
    let p = RadialProfile::polynomial(25, default_cap(25)).unwrap();
    let t = build_inverse_cdf(&p, 1024, CDF_TOL).unwrap();
    assert!(t.tolerance() < 1e-8);
    let a = p.a();
    for u in [1e-9, 0.001, 0.1, 0.37, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
        let q = t.quantile(u).unwrap();
        let back = t.radial_cdf().cdf(q).unwrap();
        assert!((back - u).abs() < 1e-7, "u = {u}: F(q) = {back}");
    }
    // the median lies in the shell
    let med = t.quantile(0.5).unwrap();
    assert!(med > a && med < 2.0 * a);
}

#[test]
fn gw_cdf_against_midpoint_integration() {
    let c = (3.0f64 / 7.0).sqrt();
    for t in [-4.0, -1.5, -0.3, 0.2, 0.7, 2.5, 5.0] {
        let oracle = midpoint(|w| std_normal_cdf(t / w), c, 2.0 * c, 20_000) / c;
        assert!((gw_cdf(t) - oracle).abs() < 1e-9, "t = {t}");
    }
    for t in [0.1, 1.0, 3.0] {
        assert!((gw_cdf(t) + gw_cdf(-t) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reference_distance_gw_vs_normal() {
    let c = (3.0f64 / 7.0).sqrt();
    let oracle_gw = |t: f64| midpoint(|w| std_normal_cdf(t / w), c, 2.0 * c, 4000) / c;
    let (d_oracle, t_oracle) = dense_grid_distance(oracle_gw, std_normal_cdf, 0.0, 3.0, 30_001);
    let (d, _) = dense_grid_distance(gw_cdf, std_normal_cdf, -8.0, 8.0, 16_001);
    assert!((d_oracle - 0.0101417).abs() < 2e-7, "{d_oracle}");
    assert!((t_oracle - 0.7009).abs() < 1e-3, "{t_oracle}");
    assert!((d - d_oracle).abs() < 1e-6);
}

#[test]
fn gw_has_unit_variance_and_excess_kurtosis() {
    // E (GW)^2 = E W^2 and E (GW)^4 = 3 E W^4 for W uniform on [c, 2c].
    let c = (3.0f64 / 7.0).sqrt();
    let ew2 = simpson(|w| w * w, c, 2.0 * c, 1000) / c;
    let ew4 = simpson(|w| w.powi(4), c, 2.0 * c, 1000) / c;
    assert!((ew2 - 1.0).abs() < 1e-12);
    assert!((3.0 * ew4 - 3.0 * 279.0 / 245.0).abs() < 1e-12);
}

#[test]
fn lp_scale_against_direct_integral() {
    // E x_1^2 for x uniform on B_p^n through the one-dimensional marginal
    // density proportional to (1 - |s|^p)^{(n-1)/p}.
    for (p, n) in [(0.5, 3usize), (0.5, 8), (1.0, 5), (2.0, 4)] {
        let e = (n as f64 - 1.0) / p;
        let dens = |s: f64| (1.0 - s.powf(p)).max(0.0).powf(e);
        let mass = midpoint(dens, 0.0, 1.0, 400_000);
        let second = midpoint(|s| s * s * dens(s), 0.0, 1.0, 400_000);
        let sigma = coordinate_sigma(p, n);
        assert!((sigma * sigma / (second / mass) - 1.0).abs() < 1e-6, "p = {p}, n = {n}");
    }
}

#[test]
fn floor_arithmetic() {
    assert!((dkw_floor(1_000_000, 0.99) - (200f64.ln() / 2e6).sqrt()).abs() < 1e-16);
}
