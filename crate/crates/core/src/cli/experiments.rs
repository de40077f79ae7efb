//! One runner per subcommand. Each returns its table plus the checks it
//! evaluated; failures of checks are data, only numeric or configuration
//! failures are errors.

use std::fs::File;

use super::goldens as g;
use super::table::{Cell, Table};
use super::{Check, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::numerics::std_normal_cdf;
use crate::pconvex::{
    check_body_pconvex, check_monotone, check_pconvex_fn, check_weaklog_grid, default_cap, BodySpec, Domain,
    PExponent, PiecewiseRadialFunction, ViolationReport,
};
use crate::radial::{build_inverse_cdf, cdf_sup_distance, default_a, gw_cdf, KernelKind, RadialProfile};
use crate::rng::{derive_seed, map_shards, StreamSpec};
use crate::samplers::{
    sample_body_tiny_counted, sample_bpn, sample_gaussian, sample_radial, sample_radii, sample_sphere, SampleBatch,
};
use crate::stats::{
    dense_grid_distance, ks_distance_vs_cdf, ks_two_sample, loglog_slope, quadratic_forms, sum_fourth_powers,
    PowerSums, RunningMoments, SortedSample,
};

/// Tolerance of the randomized p-convexity certificates.
pub const PCONVEX_TOL: f64 = 1e-9;
/// Grid resolution of the weak log-convexity check.
pub const WEAKLOG_RESOLUTION: usize = 1000;
pub const WEAKLOG_TOL: f64 = 1e-12;
/// Default `a` of the p-convexity suite.
pub const PCONVEX_A: f64 = 100.0;
/// Random directions per dimension in the CLT rate experiment.
pub const CLT_RANDOM_DIRECTIONS: usize = 10;
/// Random directions per dimension in the counterexample.
pub const COUNTEREXAMPLE_RANDOM_DIRECTIONS: usize = 5;
/// Knots of every quantile table.
pub const QUANTILE_KNOTS: usize = 4096;
/// Grid of the reference distance between `G·W` and the Gaussian.
pub const REFERENCE_GRID: (f64, f64, usize) = (-8.0, 8.0, 16_001);
/// Deltas of the chi concentration sweep; the checked one is 0.25.
pub const CHI_DELTAS: [f64; 3] = [0.1, 0.25, 0.4];
pub const CHI_DELTA: f64 = 0.25;
/// Tiny body of the projection oracle: `a`, and `cap = fiber_dim`.
pub const ORACLE_A: f64 = 2.0;
pub const ORACLE_CAP: f64 = 3.0;

fn point_seed(cfg: &ExperimentConfig, n: usize) -> u64 {
    derive_seed(cfg.seed, cfg.experiment.name(), n as u64)
}

fn fmt_report(r: &ViolationReport) -> String {
    format!("{} violations in {} trials, worst gap {:.3e}", r.violations, r.trials, r.worst_gap)
}

fn witness_text(r: &ViolationReport) -> String {
    match &r.worst_witness {
        Some(w) if r.violations > 0 => format!("x={:?} y={:?} t={}", w.first, w.second, w.t),
        _ => String::new(),
    }
}

fn cap_for(cfg: &ExperimentConfig, n: usize) -> f64 {
    cfg.cap_override.unwrap_or_else(|| default_cap(n))
}

fn fit_detail(points: &[(f64, f64)]) -> Result<f64> {
    loglog_slope(points).map(|f| f.slope)
}

pub fn run_pconvex_suite(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = PExponent::new(cfg.p)?;
    let a = cfg.a_override.unwrap_or(PCONVEX_A);
    let f = PiecewiseRadialFunction::new(a)?;
    let eval = |r: f64| f.eval(r);
    let domain = Domain::for_radial(&f);
    let trials = cfg.m as u64;
    let mut table = Table::new(
        "pconvex",
        &["check", "a", "p", "cap", "trials", "violations", "worst_gap", "witness"],
    );
    let mut checks = Vec::new();
    let seed = point_seed(cfg, 1);

    let mut push = |table: &mut Table, name: &str, n: usize, cap: f64, r: &ViolationReport| {
        table.push(
            n,
            cfg.seed,
            r.trials as usize,
            vec![
                name.into(),
                a.into(),
                cfg.p.into(),
                cap.into(),
                r.trials.into(),
                r.violations.into(),
                r.worst_gap.into(),
                witness_text(r).into(),
            ],
        );
        checks.push(Check::new(format!("pconvex/{name}/n={n}"), r.passed(), fmt_report(r)));
    };

    let fn_report = check_pconvex_fn(&eval, p, &domain, trials, PCONVEX_TOL, seed);
    push(&mut table, "function", 1, 0.0, &fn_report);

    let mono = check_monotone(&eval, &domain, (trials / 10).max(1), PCONVEX_TOL, derive_seed(seed, "monotone", 0));
    push(&mut table, "monotone", 1, 0.0, &mono);

    let worst = check_weaklog_grid(WEAKLOG_RESOLUTION);
    let mut grid = ViolationReport::empty(WEAKLOG_TOL);
    grid.trials = (WEAKLOG_RESOLUTION * WEAKLOG_RESOLUTION) as u64;
    grid.worst_gap = worst;
    grid.violations = u64::from(worst > WEAKLOG_TOL);
    push(&mut table, "weaklog_grid", 1, 0.0, &grid);

    for &n in &cfg.n_sweep {
        let cap = cap_for(cfg, n);
        let spec = BodySpec::new(n, cap, a, cap.ceil() as usize)?;
        let body = check_body_pconvex(&spec, p, (trials / 10).max(1), point_seed(cfg, n))?;
        push(&mut table, "body", n, cap, &body);
    }
    Ok(Outcome { tables: vec![table], checks })
}

pub fn run_isotropy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new(
        "isotropy",
        &["kind", "a", "cap", "variance", "epsilon", "shell_prob", "normalizer_gap", "sup_distance"],
    );
    let tol = cfg.rel_tol;
    let mut exp_eps = Vec::new();
    let mut exp_shell = Vec::new();
    let mut poly_eps = Vec::new();
    let mut sups = Vec::new();
    for &n in &cfg.n_sweep {
        let a = cfg.a_override.unwrap_or_else(|| default_a(n));
        let cap = cap_for(cfg, n);
        let exp = RadialProfile::new(n, a, KernelKind::Exponential)?;
        let poly = RadialProfile::new(n, a, KernelKind::Polynomial { cap })?;
        let sup = cdf_sup_distance(&exp, &poly, tol)?;
        for (profile, kind, cap_cell, sup_cell) in [(&exp, "exponential", 0.0, 0.0), (&poly, "polynomial", cap, sup)] {
            let (variance, eps) = profile.coordinate_variance(tol)?;
            let shell = profile.shell_probability(a, 2.0 * a, tol)?;
            let gap = profile.log_normalizer(tol)?.exp() / a - 1.0;
            table.push(
                n,
                cfg.seed,
                0,
                vec![
                    kind.into(),
                    a.into(),
                    cap_cell.into(),
                    variance.into(),
                    eps.into(),
                    shell.into(),
                    gap.into(),
                    sup_cell.into(),
                ],
            );
            if kind == "exponential" {
                exp_eps.push((n as f64, eps.abs()));
                exp_shell.push((n as f64, 1.0 - shell));
            } else {
                poly_eps.push((n as f64, eps.abs()));
            }
        }
        sups.push((n as f64, sup));
    }

    let mut checks = Vec::new();
    if cfg.n_sweep.len() >= 3 {
        for (name, pts) in [("isotropy/exp_epsilon_slope", &exp_eps), ("isotropy/shell_deficit_slope", &exp_shell)] {
            let check = match fit_detail(pts) {
                Ok(s) => Check::new(name, s <= g::ISO_MAX_SLOPE, format!("slope {s:.4} (need <= {})", g::ISO_MAX_SLOPE)),
                Err(e) => Check::new(name, false, e.to_string()),
            };
            checks.push(check);
        }
    }
    let scaled_max = |pts: &[(f64, f64)], power: f64| pts.iter().map(|(n, v)| v * n.powf(power)).fold(0.0, f64::max);
    let e = scaled_max(&exp_eps, 1.0);
    checks.push(Check::new(
        "isotropy/exp_epsilon_times_n",
        e <= g::ISO_EXP_EPS_TIMES_N,
        format!("max |eps| n = {e:.4} (golden {})", g::ISO_EXP_EPS_TIMES_N),
    ));
    let e = scaled_max(&poly_eps, 0.5);
    checks.push(Check::new(
        "isotropy/poly_epsilon_times_sqrt_n",
        e <= g::ISO_POLY_EPS_TIMES_SQRT_N,
        format!("max |eps'| sqrt(n) = {e:.4} (golden {})", g::ISO_POLY_EPS_TIMES_SQRT_N),
    ));
    let e = scaled_max(&sups, 0.5);
    checks.push(Check::new(
        "isotropy/sup_distance_times_sqrt_n",
        e <= g::ISO_SUP_DISTANCE_TIMES_SQRT_N,
        format!("max sup sqrt(n) = {e:.5} (golden {})", g::ISO_SUP_DISTANCE_TIMES_SQRT_N),
    ));
    let decreasing = sups.windows(2).all(|w| w[1].1 < w[0].1);
    checks.push(Check::new(
        "isotropy/sup_distance_decreasing",
        decreasing,
        format!("{:?}", sups.iter().map(|s| s.1).collect::<Vec<_>>()),
    ));
    Ok(Outcome { tables: vec![table], checks })
}

/// Generates `m` rows shard by shard (shard `k` on stream `(base, k)`) and
/// returns the projections on each direction in row order, plus the first
/// shard when `keep_first` is set.
fn project_sharded<G>(
    m: usize,
    thetas: &[Vec<f64>],
    base: u64,
    keep_first: bool,
    generate: G,
) -> Result<(Vec<Vec<f64>>, Option<SampleBatch>)>
where
    G: Fn(StreamSpec, usize) -> Result<SampleBatch> + Sync,
{
    let parts = map_shards(m, |k, _, len| -> Result<(Vec<Vec<f64>>, Option<SampleBatch>)> {
        let batch = generate(StreamSpec::new(base, k), len)?;
        let proj = thetas.iter().map(|t| batch.project(t)).collect();
        Ok((proj, (keep_first && k == 0).then_some(batch)))
    });
    let mut out = vec![Vec::with_capacity(m); thetas.len()];
    let mut first = None;
    for part in parts {
        let (proj, batch) = part?;
        out.iter_mut().zip(proj).for_each(|(o, p)| o.extend(p));
        first = first.or(batch);
    }
    Ok((out, first))
}

/// The diagonal direction followed by `k` uniform random unit directions.
fn directions(cfg: &ExperimentConfig, n: usize, k: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = vec![("diag".to_string(), vec![1.0 / (n as f64).sqrt(); n])];
    if k > 0 {
        let random = sample_sphere(n, k, StreamSpec::new(derive_seed(cfg.seed, "theta", n as u64), 0))?;
        out.extend(random.iter_rows().enumerate().map(|(i, r)| (format!("rand{i}"), r.to_vec())));
    }
    Ok(out)
}

fn dump(cfg: &ExperimentConfig, batch: Option<SampleBatch>) -> Result<()> {
    if let (Some(path), Some(b)) = (&cfg.dump_samples, batch) {
        b.write_csv(File::create(path)?)?;
    }
    Ok(())
}

pub fn run_clt_rate(cfg: &ExperimentConfig) -> Result<Outcome> {
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {} must lie in (0, 1)", cfg.p)));
    }
    let mut table = Table::new("clt-rate", &["p", "theta_id", "ks_distance", "sum_cubes", "dkw_floor"]);
    let mut diag = Vec::new();
    let mut bound_ok = true;
    let mut worst_ratio = 0.0f64;
    for (idx, &n) in cfg.n_sweep.iter().enumerate() {
        let seed = point_seed(cfg, n);
        let dirs = directions(cfg, n, CLT_RANDOM_DIRECTIONS)?;
        let thetas: Vec<Vec<f64>> = dirs.iter().map(|d| d.1.clone()).collect();
        let keep = idx == 0 && cfg.dump_samples.is_some();
        let (proj, first) = project_sharded(cfg.m, &thetas, seed, keep, |s, len| sample_bpn(cfg.p, n, len, s))?;
        dump(cfg, first)?;
        for ((id, theta), values) in dirs.iter().zip(proj) {
            let sample = SortedSample::new(values, Some(StreamSpec::new(seed, 0)))?;
            let r = ks_distance_vs_cdf(&sample, std_normal_cdf, "normal");
            let cubes: f64 = theta.iter().map(|t| t.abs().powi(3)).sum();
            table.push(
                n,
                cfg.seed,
                cfg.m,
                vec![cfg.p.into(), id.as_str().into(), r.distance.into(), cubes.into(), r.dkw_floor.into()],
            );
            bound_ok &= r.distance <= g::CLT_BERRY_ESSEEN * cubes + r.dkw_floor;
            worst_ratio = worst_ratio.max((r.distance - r.dkw_floor) / cubes);
            if id == "diag" {
                diag.push((n as f64, r.distance, r.dkw_floor));
            }
        }
    }
    let mut checks = Vec::new();
    if cfg.n_sweep.len() >= 3 {
        let kept: Vec<(f64, f64)> = diag.iter().filter(|d| d.1 >= 2.0 * d.2).map(|d| (d.0, d.1)).collect();
        let excluded = diag.len() - kept.len();
        let check = match fit_detail(&kept) {
            Ok(s) => Check::new(
                "clt-rate/diagonal_slope",
                (s - g::CLT_SLOPE_TARGET).abs() <= g::CLT_SLOPE_TOLERANCE,
                format!(
                    "slope {s:.4} from {} points, {excluded} below 2*dkw_floor (need {} +- {})",
                    kept.len(),
                    g::CLT_SLOPE_TARGET,
                    g::CLT_SLOPE_TOLERANCE
                ),
            ),
            Err(e) => Check::new(
                "clt-rate/diagonal_slope",
                false,
                format!("{e}; {excluded} of {} points below 2*dkw_floor", diag.len()),
            ),
        };
        checks.push(check);
    }
    checks.push(Check::new(
        "clt-rate/berry_esseen_bound",
        bound_ok,
        format!(
            "max (ks - dkw_floor) / sum|theta|^3 = {worst_ratio:.4} (golden {})",
            g::CLT_BERRY_ESSEEN
        ),
    ));
    Ok(Outcome { tables: vec![table], checks })
}

/// `sup_t |F_GW(t) - Φ(t)|` on a dense grid.
pub fn gw_reference_distance() -> f64 {
    let (lo, hi, points) = REFERENCE_GRID;
    dense_grid_distance(gw_cdf, std_normal_cdf, lo, hi, points).0
}

pub fn run_counterexample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let reference = gw_reference_distance();
    if reference <= 0.0 {
        return Err(Error::DegenerateSpec("reference distance is not positive".into()));
    }
    let mut table = Table::new(
        "counterexample",
        &["theta_id", "ks_vs_gaussian", "ks_vs_gw", "dkw_floor", "reference_distance"],
    );
    let (mut far_ok, mut near_ok, mut agree_ok) = (true, true, true);
    let (mut min_far, mut max_near, mut spread) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (idx, &n) in cfg.n_sweep.iter().enumerate() {
        let a = cfg.a_override.unwrap_or_else(|| default_a(n));
        let profile = RadialProfile::new(n, a, KernelKind::Polynomial { cap: cap_for(cfg, n) })?;
        let quantiles = build_inverse_cdf(&profile, QUANTILE_KNOTS, cfg.rel_tol)?;
        let seed = point_seed(cfg, n);
        let dirs = directions(cfg, n, COUNTEREXAMPLE_RANDOM_DIRECTIONS)?;
        let thetas: Vec<Vec<f64>> = dirs.iter().map(|d| d.1.clone()).collect();
        let keep = idx == 0 && cfg.dump_samples.is_some();
        let (proj, first) = project_sharded(cfg.m, &thetas, seed, keep, |s, len| sample_radial(&quantiles, len, s))?;
        dump(cfg, first)?;
        let mut random_ks = Vec::new();
        for ((id, _), values) in dirs.iter().zip(proj) {
            let sample = SortedSample::new(values, Some(StreamSpec::new(seed, 0)))?;
            let vs_normal = ks_distance_vs_cdf(&sample, std_normal_cdf, "normal");
            let vs_gw = ks_distance_vs_cdf(&sample, gw_cdf, "gw");
            let floor = vs_normal.dkw_floor;
            table.push(
                n,
                cfg.seed,
                cfg.m,
                vec![
                    id.as_str().into(),
                    vs_normal.distance.into(),
                    vs_gw.distance.into(),
                    floor.into(),
                    reference.into(),
                ],
            );
            far_ok &= vs_normal.distance >= 0.5 * reference;
            min_far = min_far.min(vs_normal.distance);
            near_ok &= vs_gw.distance <= g::COUNTEREXAMPLE_GW / (n as f64).sqrt() + 3.0 * floor;
            max_near = max_near.max(vs_gw.distance * (n as f64).sqrt());
            if id != "diag" {
                random_ks.push((vs_normal.distance, floor));
            }
        }
        for (i, x) in random_ks.iter().enumerate() {
            for y in &random_ks[i + 1..] {
                spread = spread.max((x.0 - y.0).abs());
                agree_ok &= (x.0 - y.0).abs() <= 2.0 * x.1;
            }
        }
    }
    let checks = vec![
        Check::new(
            "counterexample/far_from_gaussian",
            far_ok,
            format!("min ks vs normal {min_far:.5}, need >= 0.5 * {reference:.5}"),
        ),
        Check::new(
            "counterexample/close_to_gw",
            near_ok,
            format!(
                "max ks vs gw times sqrt(n) = {max_near:.4} (golden {} plus 3 dkw_floor sqrt(n))",
                g::COUNTEREXAMPLE_GW
            ),
        ),
        Check::new(
            "counterexample/directions_agree",
            agree_ok,
            format!("max pairwise difference {spread:.5}"),
        ),
    ];
    Ok(Outcome { tables: vec![table], checks })
}

fn lemma_point(
    m: usize,
    n: usize,
    base: u64,
    generate: impl Fn(StreamSpec, usize) -> Result<SampleBatch> + Sync,
) -> Result<(f64, f64)> {
    let weights = vec![1.0 / (n as f64).sqrt(); n];
    let parts = map_shards(m, |k, _, len| -> Result<(RunningMoments, PowerSums)> {
        let batch = generate(StreamSpec::new(base, k), len)?;
        let forms: RunningMoments = quadratic_forms(&batch, &weights).into_iter().collect();
        Ok((forms, PowerSums::of(&batch, 3.0)))
    });
    let (mut forms, mut sums) = (RunningMoments::default(), PowerSums::default());
    for part in parts {
        let (f, s) = part?;
        forms = forms.merge(f);
        sums = sums.merge(s);
    }
    Ok((forms.variance() / sum_fourth_powers(&weights), sums.ratio(3.0)))
}

pub fn run_lemma_checks(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new("lemmas", &["family", "p", "quadratic_ratio", "moment_ratio_q3"]);
    let mut bpn = Vec::new();
    for &n in &cfg.n_sweep {
        let seed = point_seed(cfg, n);
        let (q, r) = lemma_point(cfg.m, n, seed, |s, len| sample_bpn(cfg.p, n, len, s))?;
        table.push(n, cfg.seed, cfg.m, vec!["bpn".into(), cfg.p.into(), q.into(), r.into()]);
        bpn.push((n, q, r));
    }
    let n0 = cfg.n_sweep[0];
    let gauss_seed = derive_seed(cfg.seed, "lemmas-gaussian", n0 as u64);
    let (gq, gr) = lemma_point(cfg.m, n0, gauss_seed, |s, len| sample_gaussian(n0, len, s))?;
    table.push(n0, cfg.seed, cfg.m, vec!["gaussian".into(), Cell::Float(2.0), gq.into(), gr.into()]);

    let (q0, r0) = (bpn[0].1, bpn[0].2);
    let q_spread = bpn.iter().map(|b| (b.1 / q0).max(q0 / b.1)).fold(1.0, f64::max);
    let r_spread = bpn.iter().map(|b| (b.2 / r0 - 1.0).abs()).fold(0.0, f64::max);
    let exact_q3 = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let checks = vec![
        Check::new(
            "lemmas/quadratic_ratio_stable",
            q_spread <= g::LEMMA_VARIANCE_FACTOR,
            format!("max factor from n={n0}: {q_spread:.4}"),
        ),
        Check::new(
            "lemmas/moment_ratio_stable",
            r_spread <= g::LEMMA_MOMENT_SPREAD,
            format!("max relative change from n={n0}: {r_spread:.4}"),
        ),
        Check::new(
            "lemmas/gaussian_quadratic_ratio",
            (gq / g::GAUSSIAN_VARIANCE_RATIO - 1.0).abs() <= g::GAUSSIAN_VARIANCE_REL_TOL,
            format!("{gq:.5} vs 2"),
        ),
        Check::new(
            "lemmas/gaussian_moment_ratio",
            (gr / exact_q3 - 1.0).abs() <= g::GAUSSIAN_Q3_REL_TOL,
            format!("{gr:.5} vs {exact_q3:.5}"),
        ),
    ];
    Ok(Outcome { tables: vec![table], checks })
}

pub fn run_chi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Table::new("chi", &["delta", "probability"]);
    let mut checks = Vec::new();
    for &n in &cfg.n_sweep {
        let stream = StreamSpec::new(point_seed(cfg, n), 0);
        for delta in CHI_DELTAS {
            let prob = crate::stats::chi_concentration(n, delta, cfg.m, stream)?;
            table.push(n, cfg.seed, cfg.m, vec![delta.into(), prob.into()]);
            if delta == CHI_DELTA {
                checks.push(Check::new(
                    format!("chi/n={n}"),
                    prob >= g::CHI_MIN_PROBABILITY,
                    format!("P = {prob:.6} (need >= {})", g::CHI_MIN_PROBABILITY),
                ));
            }
        }
    }
    Ok(Outcome { tables: vec![table], checks })
}

pub fn run_projection_oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let a = cfg.a_override.unwrap_or(ORACLE_A);
    let cap = cfg.cap_override.unwrap_or(ORACLE_CAP);
    if cap.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!("cap {cap} must be an integer (it is the fibre dimension)")));
    }
    let mut table = Table::new(
        "projection-oracle",
        &["a", "cap", "fiber_dim", "acceptance", "ks_distance", "dkw_floor"],
    );
    let mut checks = Vec::new();
    for &n in &cfg.n_sweep {
        let seed = point_seed(cfg, n);
        let spec = BodySpec::new(n, cap, a, cap as usize)?;
        let (body, proposals) = sample_body_tiny_counted(&spec, cfg.m, StreamSpec::new(seed, 0))?;
        let profile = RadialProfile::new(n, a, KernelKind::Polynomial { cap })?;
        let quantiles = build_inverse_cdf(&profile, QUANTILE_KNOTS, cfg.rel_tol)?;
        let radii = sample_radii(&quantiles, cfg.m, StreamSpec::new(seed, 1))?;
        let s1 = SortedSample::new(body.norms(), Some(body.stream()))?;
        let s2 = SortedSample::new(radii.into_points(), None)?;
        let r = ks_two_sample(&s1, &s2);
        let acceptance = cfg.m as f64 / proposals as f64;
        table.push(
            n,
            cfg.seed,
            cfg.m,
            vec![
                a.into(),
                cap.into(),
                (cap as usize).into(),
                acceptance.into(),
                r.distance.into(),
                r.dkw_floor.into(),
            ],
        );
        checks.push(Check::new(
            format!("projection-oracle/n={n}"),
            r.distance <= r.dkw_floor,
            format!("ks {:.5} vs combined floor {:.5}", r.distance, r.dkw_floor),
        ));
        if n == cfg.n_sweep[0] {
            dump(cfg, Some(body))?;
        }
    }
    Ok(Outcome { tables: vec![table], checks })
}
