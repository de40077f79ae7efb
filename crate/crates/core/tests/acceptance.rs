//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Runs as a plain binary (no libtest harness) so the verdict lines are
//! always visible in `cargo test` output.

use std::process::Command;
use std::time::{Duration, Instant};

use nonconvex_clt::cli::experiments::{gw_reference_distance, PCONVEX_TOL, WEAKLOG_TOL};
use nonconvex_clt::cli::goldens as g;
use nonconvex_clt::cli::{run_experiment, Experiment, ExperimentConfig, Outcome};

/// Wall-clock budgets, pinned for a single core.
const PCONVEX_BUDGET: Duration = Duration::from_secs(30);
const ISOTROPY_BUDGET: Duration = Duration::from_secs(60);

struct Verdict {
    criterion: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn checks_pass(outcome: &Outcome, names: &[&str]) -> (bool, String) {
    let mut passed = true;
    let mut details = Vec::new();
    for name in names {
        match outcome.check(name) {
            Some(c) => {
                passed &= c.passed;
                details.push(format!("{} [{}]", c.detail, if c.passed { "ok" } else { "fail" }));
            }
            None => {
                passed = false;
                details.push(format!("{name} missing"));
            }
        }
    }
    (passed, details.join("; "))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn run(e: Experiment) -> (Outcome, Duration) {
    let (r, t) = timed(|| run_experiment(&ExperimentConfig::new(e)));
    (r.unwrap_or_else(|err| panic!("{} failed to run: {err}", e.name())), t)
}

fn criterion_1() -> Verdict {
    let (o, t) = run(Experiment::Pconvex);
    let (ok, detail) = checks_pass(
        &o,
        &["pconvex/function/n=1", "pconvex/weaklog_grid/n=1", "pconvex/body/n=8"],
    );
    let table = o.table("pconvex").unwrap();
    let trials = table.values_where("trials", |r| table.text(r, "check") == "function");
    let body_trials = table.values_where("trials", |r| table.text(r, "check") == "body");
    let scale = trials == [1e6] && body_trials == [1e5];
    let within = t < PCONVEX_BUDGET;
    Verdict {
        criterion: 1,
        title: "p-convexity certificates",
        passed: ok && scale && within,
        detail: format!("{detail}; tol {PCONVEX_TOL:e}/{WEAKLOG_TOL:e}; {:.1}s (budget {}s)", t.as_secs_f64(), PCONVEX_BUDGET.as_secs()),
    }
}

fn criteria_2_to_4() -> Vec<Verdict> {
    let (o, t) = run(Experiment::Isotropy);
    let within = t < ISOTROPY_BUDGET;
    let (ok2, d2) = checks_pass(&o, &["isotropy/exp_epsilon_slope", "isotropy/exp_epsilon_times_n"]);
    let (ok3, d3) = checks_pass(&o, &["isotropy/shell_deficit_slope"]);
    let (ok4, d4) = checks_pass(
        &o,
        &[
            "isotropy/sup_distance_times_sqrt_n",
            "isotropy/sup_distance_decreasing",
            "isotropy/poly_epsilon_times_sqrt_n",
        ],
    );
    vec![
        Verdict {
            criterion: 2,
            title: "isotropy decay, exponential profile",
            passed: ok2 && within,
            detail: format!("{d2}; quadrature {:.1}s (budget {}s)", t.as_secs_f64(), ISOTROPY_BUDGET.as_secs()),
        },
        Verdict { criterion: 3, title: "shell concentration", passed: ok3, detail: d3 },
        Verdict { criterion: 4, title: "polynomial approximation", passed: ok4, detail: d4 },
    ]
}

fn criterion_5() -> Verdict {
    let (o, t) = run(Experiment::CltRate);
    let (ok, detail) = checks_pass(&o, &["clt-rate/diagonal_slope", "clt-rate/berry_esseen_bound"]);
    Verdict {
        criterion: 5,
        title: "CLT rate on B_1/2^n",
        passed: ok,
        detail: format!("{detail}; {:.1}s", t.as_secs_f64()),
    }
}

fn criterion_6() -> Verdict {
    let reference = gw_reference_distance();
    let (o, t) = run(Experiment::Counterexample);
    let (ok, detail) = checks_pass(
        &o,
        &[
            "counterexample/far_from_gaussian",
            "counterexample/close_to_gw",
            "counterexample/directions_agree",
        ],
    );
    Verdict {
        criterion: 6,
        title: "counterexample marginal",
        passed: ok && reference > 0.0,
        detail: format!("D* = {reference:.7}; {detail}; {:.1}s", t.as_secs_f64()),
    }
}

fn criterion_7() -> Verdict {
    let (o, _) = run(Experiment::ProjectionOracle);
    let (ok, detail) = checks_pass(&o, &["projection-oracle/n=2"]);
    Verdict { criterion: 7, title: "projection oracle", passed: ok, detail }
}

fn criterion_8() -> Verdict {
    let (o, t) = run(Experiment::Lemmas);
    let (ok, detail) = checks_pass(
        &o,
        &[
            "lemmas/quadratic_ratio_stable",
            "lemmas/moment_ratio_stable",
            "lemmas/gaussian_quadratic_ratio",
            "lemmas/gaussian_moment_ratio",
        ],
    );
    Verdict {
        criterion: 8,
        title: "lemma suite",
        passed: ok,
        detail: format!(
            "{detail}; bounds x{} / {}% / {}% / {}%; {:.1}s",
            g::LEMMA_VARIANCE_FACTOR,
            g::LEMMA_MOMENT_SPREAD * 100.0,
            g::GAUSSIAN_VARIANCE_REL_TOL * 100.0,
            g::GAUSSIAN_Q3_REL_TOL * 100.0,
            t.as_secs_f64()
        ),
    }
}

fn criterion_9() -> Verdict {
    let (o, _) = run(Experiment::Chi);
    let (ok, detail) = checks_pass(&o, &["chi/n=400"]);
    Verdict { criterion: 9, title: "chi concentration", passed: ok, detail }
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_nonconvex-clt");
    let runs: [(&str, &[&str]); 4] = [
        ("clt-rate", &["--n", "16", "--n", "32", "--samples", "40000"]),
        ("counterexample", &["--n", "16", "--samples", "30000"]),
        ("pconvex", &["--samples", "50000"]),
        ("chi", &["--samples", "30000"]),
    ];
    let mut identical = true;
    let mut notes = Vec::new();
    for (exp, extra) in runs {
        let mut bytes = Vec::new();
        for (i, threads) in ["1", "4", "4"].iter().enumerate() {
            let path = dir.path().join(format!("{exp}-{i}.csv"));
            let status = Command::new(bin)
                .arg(exp)
                .args(extra)
                .args(["--threads", threads, "--out", path.to_str().unwrap()])
                .output()
                .expect("binary runs")
                .status;
            assert!(status.code().is_some_and(|c| c <= 1), "{exp} exited with {status}");
            bytes.push(std::fs::read(&path).unwrap());
        }
        let same = bytes.windows(2).all(|w| w[0] == w[1]);
        identical &= same;
        notes.push(format!("{exp}: {}", if same { "identical" } else { "differs" }));
    }
    Verdict {
        criterion: 10,
        title: "determinism across thread counts",
        passed: identical,
        detail: notes.join(", "),
    }
}

fn main() {
    // `cargo test -- <filter>` style arguments are accepted and ignored.
    let mut verdicts = vec![criterion_1()];
    verdicts.extend(criteria_2_to_4());
    verdicts.extend([criterion_5(), criterion_6(), criterion_7(), criterion_8(), criterion_9(), criterion_10()]);
    println!();
    for v in &verdicts {
        println!(
            "criterion {:>2} {:<36} {}  {}",
            v.criterion,
            v.title,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("\nacceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
