//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p pdomd --test acceptance`. Tolerances are pinned below.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pdomd::cli::{build_problem, ols_slope, run_experiment, sweep_rates, ExperimentConfig, Scenario};
use pdomd::geometry::{
    exponentiated_gradient_step, mirror_step, mix_toward_uniform, numeric_prox_step, pushback_check, Affine,
};
use pdomd::oracle::{dual_function, solve_static, SolverOptions, StaticProgram};
use pdomd::problems::{build_synthetic_problem, draw_slot};
use pdomd::telemetry::dpp_audit;
use pdomd::{parameter_schedule, run, DecisionSet, Geometry, Solver, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GEOMETRY_CASES: usize = 1000;
const PINSKER_TOL: f64 = 1e-12;
const MIXING_TOL: f64 = 1e-9;
const PROX_AGREEMENT_TOL: f64 = 1e-8;
const TELESCOPING_REL_TOL: f64 = 1e-6;
const DPP_TOL: f64 = 1e-6;
const REGRET_SLOPE: (f64, f64) = (0.3, 0.65);
const VIOLATION_SLOPE_MAX: f64 = 0.65;
const DUAL_GROWTH_MAX: f64 = 1.5;
const FEASIBILITY_TOL: f64 = 1e-6;
const GRID_TOL: f64 = 1e-3;
const PACING_DECAY_MAX: f64 = 0.2;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normalized(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(floor..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let kl = Geometry::NegativeEntropy;
    let (mut pinsker, mut convex, mut pushback, mut mixing, mut prox) = (0, 0, 0, 0, 0);
    let mut worst_prox: f64 = 0.0;
    for _ in 0..GEOMETRY_CASES {
        let d = rng.random_range(2..=10);
        let p = normalized(&mut rng, d, 1e-3);
        let q = normalized(&mut rng, d, 1e-3);
        let div = kl.divergence(&p, &q).unwrap();
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        pinsker += usize::from(div < 0.5 * l1 * l1 - PINSKER_TOL);

        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let e = Geometry::Euclidean;
        let n = e.primal_norm(&diff);
        convex += usize::from(e.divergence(&x, &y).unwrap() < e.modulus() * n * n / 2.0 - PINSKER_TOL);
        convex += usize::from(div < kl.modulus() * l1 * l1 / 2.0 - PINSKER_TOL);

        let simplex = DecisionSet::simplex(d).unwrap();
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let alpha = rng.random_range(0.1..100.0);
        let f = Affine { coeffs: c.clone(), offset: rng.random_range(-5.0..5.0) };
        pushback += usize::from(!pushback_check(kl, &simplex, &f, &p, alpha, &q).unwrap().holds);
        let boxed = DecisionSet::uniform_box(d, -1.0, 2.0).unwrap();
        let y0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
        let z0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
        pushback += usize::from(!pushback_check(e, &boxed, &f, &y0, alpha, &z0).unwrap().holds);

        let theta = rng.random_range(1e-6..0.5);
        let mixed = mix_toward_uniform(&q, theta).unwrap();
        let after = kl.divergence(&p, &mixed).unwrap();
        let df = d as f64;
        mixing += usize::from(after - div > theta * df.ln() + MIXING_TOL);
        mixing += usize::from(after > (df / theta).ln() + MIXING_TOL);

        let scaled: Vec<f64> = c.iter().map(|v| v / alpha).collect();
        let closed = exponentiated_gradient_step(&p, &scaled).unwrap();
        let numeric = numeric_prox_step(kl, &simplex, &p, &c, alpha).unwrap();
        let unit = DecisionSet::uniform_box(d, 0.0, 1.0).unwrap();
        let y1: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let clip = mirror_step(e, &unit, &y1, &c, alpha).unwrap();
        let clip_numeric = numeric_prox_step(e, &unit, &y1, &c, alpha).unwrap();
        let gap = linf(&closed, &numeric).max(linf(&clip, &clip_numeric));
        worst_prox = worst_prox.max(gap);
        prox += usize::from(gap > PROX_AGREEMENT_TOL);
    }
    check(
        pinsker + convex + pushback + mixing + prox == 0,
        format!(
            "{GEOMETRY_CASES} cases; failures: pinsker {pinsker}, strong convexity {convex}, pushback {pushback}, \
             mixing {mixing}, prox {prox} (worst prox gap {worst_prox:.2e} vs {PROX_AGREEMENT_TOL:.0e})"
        ),
    )
}

fn criterion_engine() -> Outcome {
    let horizon = 1600;
    let config = ExperimentConfig::new(Scenario::Synthetic, horizon);
    let built = build_problem(&config, horizon).unwrap();
    let problem = built.as_dyn();
    let geometry = Geometry::Euclidean;
    let params = parameter_schedule(horizon, Variant::General).unwrap();
    let k = problem.constants(geometry);
    let lower = -params.v * params.v * k.d1 * k.d1 / (2.0 * params.alpha * k.beta);
    let seed = 0;

    let mut solver = Solver::new(
        geometry,
        problem.decision_set().clone(),
        problem.num_inequalities(),
        problem.targets().to_vec(),
        params.clone(),
        Variant::General,
    )
    .unwrap();
    let (mut negative_q, mut prox_floor, mut drift_sum) = (0, 0, 0.0);
    for t in 0..horizon {
        let out = solver.step(&draw_slot(problem, seed, t)).unwrap();
        drift_sum += out.drift;
        negative_q += usize::from(solver.duals().q.iter().any(|&q| q < 0.0));
        if let Some(pen) = out.prox_penalty {
            prox_floor += usize::from(pen < lower - 1e-9 * lower.abs());
        }
    }
    let lyapunov = solver.duals().lyapunov();
    let telescoping = (drift_sum - lyapunov).abs() / lyapunov.max(1.0);

    let record = run(problem, horizon, &params, Variant::General, geometry, seed).unwrap();
    let audit = dpp_audit(&record, problem, 100, 1).unwrap();
    check(
        negative_q == 0 && prox_floor == 0 && telescoping <= TELESCOPING_REL_TOL && audit.worst_residual <= DPP_TOL,
        format!(
            "T={horizon}: negative Q slots {negative_q}, prox lower-bound violations {prox_floor}, telescoping rel err {telescoping:.2e} \
             (tol {TELESCOPING_REL_TOL:.0e}), DPP worst residual {:.2e} over {} checks (tol {DPP_TOL:.0e})",
            audit.worst_residual, audit.checks
        ),
    )
}

fn sweep_config(horizons: Vec<usize>) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(Scenario::Synthetic, *horizons.iter().max().unwrap());
    config.variant = Variant::Simplex;
    config.sweep_horizons = Some(horizons);
    config
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_rates() -> Outcome {
    let report = sweep_rates(&sweep_config(vec![100, 400, 1600, 6400])).unwrap();
    let ineq: Vec<f64> = report.points.iter().map(|p| p.ineq_violation_mean).collect();
    let eq: Vec<f64> = report.points.iter().map(|p| p.eq_violation_mean).collect();
    let regret_ok = report.regret.slope.is_some_and(|s| (REGRET_SLOPE.0..=REGRET_SLOPE.1).contains(&s));
    // A violation that is exactly zero from some horizon on has no log-log slope; its
    // T-scaled value does not grow, which satisfies the bound.
    let slope_ok = |fit: &pdomd::cli::SlopeFit, values: &[f64]| match fit.slope {
        Some(s) => s <= VIOLATION_SLOPE_MAX,
        None => values.last() == Some(&0.0),
    };
    let fmt = |fit: &pdomd::cli::SlopeFit| fit.slope.map_or("undefined (zero violation)".to_string(), |s| format!("{s:.3}"));
    let pass = regret_ok
        && non_increasing(&ineq)
        && non_increasing(&eq)
        && eq.last() < eq.first()
        && slope_ok(&report.ineq_violation, &ineq)
        && slope_ok(&report.eq_violation, &eq);
    check(
        pass,
        format!(
            "regret slope {} in [{}, {}]; ineq violation {:?}, T-scaled slope {}; eq violation {:?}, T-scaled slope {} (max {VIOLATION_SLOPE_MAX})",
            fmt(&report.regret),
            REGRET_SLOPE.0,
            REGRET_SLOPE.1,
            ineq.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            fmt(&report.ineq_violation),
            eq.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            fmt(&report.eq_violation),
        ),
    )
}

fn criterion_dual_growth() -> Outcome {
    let horizons: Vec<usize> = (0..7).map(|i| 100 << i).collect();
    let report = sweep_rates(&sweep_config(horizons)).unwrap();
    let ratios: Vec<f64> = report.points.iter().map(|p| p.dual_ratio_mean).collect();
    let growth: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    let worst = growth.iter().copied().fold(0.0, f64::max);
    check(
        worst <= DUAL_GROWTH_MAX,
        format!(
            "max dual norm / sqrt(T) at T=100..6400: {:?}; worst doubling growth {worst:.3}x (max {DUAL_GROWTH_MAX}x)",
            ratios.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    let opts = SolverOptions::default();
    let (mut weak, mut concave, mut worst_feas): (usize, usize, f64) = (0, 0, 0.0);
    for seed in 0..5 {
        let problem = build_synthetic_problem(10, 2, 2, seed).unwrap();
        let p = StaticProgram::window(&problem, 0, 1).unwrap();
        let sol = solve_static(&p, &opts).unwrap();
        worst_feas = worst_feas.max(p.infeasibility(&sol.mu));
        let mut duals = || {
            let s = 10f64.powf(rng.random_range(-2.0..2.0));
            let l: Vec<f64> = (0..2).map(|_| s * rng.random_range(0.0..1.0)).collect();
            let e: Vec<f64> = (0..2).map(|_| s * rng.random_range(-1.0..1.0)).collect();
            (l, e)
        };
        for _ in 0..100 {
            let (l, e) = duals();
            weak += usize::from(dual_function(&p, &l, &e).unwrap() > sol.value + 1e-9);
        }
        for _ in 0..100 {
            let ((l1, e1), (l2, e2)) = (duals(), duals());
            let s = 0.5;
            let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| s * x + (1.0 - s) * y).collect::<Vec<_>>();
            let chord = s * dual_function(&p, &l1, &e1).unwrap() + (1.0 - s) * dual_function(&p, &l2, &e2).unwrap();
            let mid = dual_function(&p, &mix(&l1, &l2), &mix(&e1, &e2)).unwrap();
            concave += usize::from(mid < chord - 1e-9 * (1.0 + chord.abs()));
        }
    }

    const STEPS: usize = 1000;
    let h = 1.0 / STEPS as f64;
    let mut worst_grid: f64 = 0.0;
    for seed in 0..3 {
        let problem = build_synthetic_problem(4, 2, 0, seed).unwrap();
        let p = StaticProgram::window(&problem, 0, 1).unwrap();
        let sol = solve_static(&p, &opts).unwrap();
        worst_feas = worst_feas.max(p.infeasibility(&sol.mu));
        let mut best = f64::INFINITY;
        for a in 0..=STEPS {
            for b in 0..=STEPS - a {
                for c in 0..=STEPS - a - b {
                    let mu = [a as f64 * h, b as f64 * h, c as f64 * h, (STEPS - a - b - c) as f64 * h];
                    if p.inequalities.iter().all(|g| g.value(&mu) <= 0.0) {
                        best = best.min(p.objective.value(&mu));
                    }
                }
            }
        }
        worst_grid = worst_grid.max((best - sol.value).abs());
    }
    check(
        weak == 0 && concave == 0 && worst_feas <= FEASIBILITY_TOL && worst_grid <= GRID_TOL,
        format!(
            "weak duality violations {weak}/500, concavity violations {concave}/500, worst feasibility {worst_feas:.2e} \
             (tol {FEASIBILITY_TOL:.0e}), worst grid gap {worst_grid:.2e} (tol {GRID_TOL:.0e})"
        ),
    )
}

/// Returns the three sub-criteria of the data-center experiment.
fn criterion_datacenter() -> [Outcome; 3] {
    let mut config = ExperimentConfig::new(Scenario::Datacenter, 2000);
    config.seeds = (0..5).collect();
    let report = run_experiment(&config).unwrap();
    let pacing = report.pacing.as_ref().unwrap().column("algorithm").unwrap();
    let ratio = pacing[pacing.len() - 1] / pacing[99];

    let cost = report.cost.as_ref().unwrap();
    let horizon = cost.values.len() as f64;
    let (ours, reac) = (
        cost.column("algorithm").unwrap().last().unwrap() / horizon,
        cost.column("reac").unwrap().last().unwrap() / horizon,
    );

    // Burn-in is the first tenth of the horizon; the trend is the least-squares slope
    // of the running average over the rest.
    let unserved = report.unserved.as_ref().unwrap().column("algorithm").unwrap();
    let burn_in = unserved.len() / 10;
    let ts: Vec<f64> = (burn_in..unserved.len()).map(|t| t as f64).collect();
    let slope = ols_slope(&ts, &unserved[burn_in..]);
    [
        check(
            ratio <= PACING_DECAY_MAX,
            format!(
                "pacing violation {:.3} at t=100, {:.3} at t=T; ratio {ratio:.3} (max {PACING_DECAY_MAX})",
                pacing[99],
                pacing[pacing.len() - 1]
            ),
        ),
        check(ours <= reac, format!("average cost per slot {ours:.1} vs Reac {reac:.1}")),
        check(
            slope < 0.0,
            format!(
                "running-average unserved jobs {:.2} at t={burn_in}, {:.2} at t=T; post-burn-in slope {slope:.3e} (must be < 0)",
                unserved[burn_in],
                unserved[unserved.len() - 1]
            ),
        ),
    ]
}

fn metric_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = ["summary.csv", "fig_cost.csv", "fig_unserved.csv", "fig_pacing.csv", "rates.csv"]
        .iter()
        .filter_map(|name| std::fs::read(dir.join(name)).ok().map(|b| (name.to_string(), b)))
        .collect();
    out.sort();
    out
}

fn criterion_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut configs = Vec::new();
    let mut dc = ExperimentConfig::new(Scenario::Datacenter, 300);
    dc.seeds = vec![0, 1];
    configs.push(("datacenter", dc));
    let mut syn = ExperimentConfig::new(Scenario::Synthetic, 400);
    syn.seeds = vec![0, 1, 2];
    configs.push(("synthetic", syn));
    let mut sweep = sweep_config(vec![100, 200, 400]);
    sweep.seeds = vec![0, 1, 2];

    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (name, config) in &configs {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|r| {
                let mut c = config.clone();
                c.output_dir = Some(tmp.path().join(format!("{name}_{r}")));
                run_experiment(&c).unwrap();
                metric_files(c.output_dir.as_ref().unwrap())
            })
            .collect();
        compared += runs[0].len();
        if runs[0] != runs[1] || runs[0].is_empty() {
            mismatches.push(name.to_string());
        }
    }
    let sweeps: Vec<_> = ["a", "b"]
        .iter()
        .map(|r| {
            let mut c = sweep.clone();
            c.output_dir = Some(tmp.path().join(format!("sweep_{r}")));
            sweep_rates(&c).unwrap();
            metric_files(c.output_dir.as_ref().unwrap())
        })
        .collect();
    compared += sweeps[0].len();
    if sweeps[0] != sweeps[1] || sweeps[0].is_empty() {
        mismatches.push("sweep".into());
    }
    check(mismatches.is_empty(), format!("{compared} metric CSVs compared across repeated runs; mismatched: {mismatches:?}"))
}

fn report(label: &str, outcome: &Outcome, elapsed: Duration) -> bool {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("{tag} {label} [{:.1}s]: {}", elapsed.as_secs_f64(), outcome.detail);
    outcome.pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() -> ExitCode {
    let mut all = true;
    let single: [Criterion; 5] = [
        ("1 geometry suite", criterion_geometry),
        ("2 engine algebra", criterion_engine),
        ("3 rate check", criterion_rates),
        ("4 dual boundedness", criterion_dual_growth),
        ("5 oracle suite", criterion_oracle),
    ];
    for (label, f) in single {
        let (outcome, elapsed) = timed(f);
        all &= report(label, &outcome, elapsed);
    }
    let (dc, elapsed) = timed(criterion_datacenter);
    for (label, outcome) in ["6a pacing decay", "6b cost vs Reac", "6c unserved trend"].iter().zip(&dc) {
        all &= report(label, outcome, elapsed);
    }
    let (outcome, elapsed) = timed(criterion_determinism);
    all &= report("7 determinism", &outcome, elapsed);

    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria fail");
        ExitCode::FAILURE
    }
}
