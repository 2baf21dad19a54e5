//! Acceptance suite: one line per criterion, nonzero exit if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ctjmdp::files;
use ctjmdp::pool::Pool;
use ctjmdp_core::catalog;
use ctjmdp_core::costs::{
    average_cost_abel, average_cost_cesaro, default_abel_alphas, default_cesaro_horizons, exact_curve,
    finite_horizon_cost, infinite_horizon_cost_exact, mc_discounted_cost_streaming, stationary_discounted_cost,
    truncation_horizon, PathCost,
};
use ctjmdp_core::experiments::battery::{assemble_battery, battery_size, run_battery_entry, BatteryConfig};
use ctjmdp_core::experiments::explosion::{run_explosion_demo, ExplosionConfig};
use ctjmdp_core::experiments::extension::{run_extension_battery, ExtensionConfig};
use ctjmdp_core::experiments::two_state::{run_example_two_state, TwoStateConfig};
use ctjmdp_core::forward::{feller_series, markov_marginals_with, substeps_for, OdeOptions, QFunction, SeriesOptions};
use ctjmdp_core::model::dirac_distribution;
use ctjmdp_core::runner::Runner;
use ctjmdp_core::simulator::{
    count_into, count_out_of, into_intensity, out_intensity, SimConfig, Simulation,
};
use ctjmdp_core::{MarkovPolicyGrid, Policy, StateSet, TimeGrid};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() <= limit
}

/// 1. Marginals of every battery policy equal those of its exact Markovization.
fn sufficiency(pool: &Pool) -> Outcome {
    let start = Instant::now();
    let cfg = BatteryConfig::default();
    let entries: Result<Vec<_>, _> = pool.map(battery_size(&cfg), |i| run_battery_entry(&cfg, i)).into_iter().collect();
    let r = assemble_battery(&cfg, entries.expect("battery runs"));
    let elapsed = start.elapsed();
    let models = cfg.model_seeds.len();
    let passed = models >= 5
        && r.entries.len() == 3 * models
        && r.equality_sup <= 1e-6
        && r.violation_sup <= 1e-6
        && within(elapsed, 60.0);
    outcome(
        passed,
        format!(
            "{} entries on {models} models: equality_sup {:.3e}, violation_sup {:.3e}, {:.1}s (limit 60s)",
            r.entries.len(),
            r.equality_sup,
            r.violation_sup,
            elapsed.as_secs_f64()
        ),
    )
}

/// 2. Equal marginals, strictly larger discounted cost for the Markovization.
fn counterexample(pool: &Pool) -> Outcome {
    let start = Instant::now();
    let cfg = TwoStateConfig::default();
    let r = run_example_two_state(&cfg, pool).expect("two-state example runs");
    let elapsed = start.elapsed();
    let expected_alphas = [0.25, 0.5, 1.0, 2.0];
    let mut passed = r.marginal_equality_sup <= 1e-6 && cfg.n_mc == 100_000 && within(elapsed, 120.0);
    passed &= r.rows.iter().map(|row| row.alpha).eq(expected_alphas);
    let mut parts = Vec::new();
    for row in &r.rows {
        let (mp, mf) = (row.mc_pi.expect("mc ran"), row.mc_phi.expect("mc ran"));
        passed &= row.gap > 0.0 && row.gap_residual <= 1e-6 && mp.z <= 3.0 && mf.z <= 3.0;
        parts.push(format!(
            "α={} gap {:.6} (residual {:.1e}, MC z {:.2}/{:.2})",
            row.alpha, row.gap, row.gap_residual, mp.z, mf.z
        ));
    }
    outcome(
        passed,
        format!(
            "{}; marginal sup {:.2e}; {:.1}s (limit 120s)",
            parts.join(", "),
            r.marginal_equality_sup,
            elapsed.as_secs_f64()
        ),
    )
}

/// 3. Series, ODE and uniformization agree on homogeneous Markov policies.
fn forward_cross_validation() -> Outcome {
    let grid = TimeGrid::new(0.005, 800).unwrap();
    let (mut so, mut ou, mut su) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone = true;
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        let phi = catalog::random_markov_policy(&model, seed);
        let gamma = vec![0.25; 4];
        let substeps = substeps_for(&model, grid.step);
        let ode = markov_marginals_with(&model, &phi, &gamma, grid, OdeOptions { substeps }).unwrap();
        let q = QFunction::new(&model, &phi).unwrap();
        let series = feller_series(
            &q,
            &gamma,
            grid,
            SeriesOptions {
                substeps,
                ..SeriesOptions::default()
            },
        )
        .unwrap();
        monotone &= series.term_min >= 0.0 && series.converged;
        let generator = common::generator(&model, &phi);
        let lambda = common::uniformization_rate(&model);
        for k in 0..grid.points() {
            let u = common::uniformization(&generator, lambda, &gamma, grid.time(k));
            for z in 0..4 {
                let (s, o) = (series.curve.prob(k, z), ode.prob(k, z));
                so = so.max((s - o).abs());
                ou = ou.max((o - u[z]).abs());
                su = su.max((s - u[z]).abs());
            }
        }
    }
    outcome(
        so <= 1e-4 && su <= 1e-4 && ou <= 1e-8 && monotone,
        format!("series-ODE {so:.2e}, series-uniformization {su:.2e}, ODE-uniformization {ou:.2e}, monotone {monotone}"),
    )
}

/// 4. Jump counts and integrated intensities have equal means.
fn compensator(pool: &Pool) -> Outcome {
    let model = catalog::figure_two();
    let policy = Policy::FiniteMemory(catalog::parity_policy(&model));
    let (t, n) = (2.0, 100_000);
    let cfg = SimConfig {
        horizon: t,
        max_jumps: 100_000,
        trajectories: n,
        seed: 4_242,
    };
    let sim = Simulation::new(&model, &policy, &dirac_distribution(2, 1), cfg).unwrap();
    let sets = [StateSet::singleton(2, 0), StateSet::singleton(2, 1)];
    let into: Vec<_> = sets.iter().map(|s| into_intensity(&model, &policy, s).unwrap()).collect();
    let out: Vec<_> = sets.iter().map(|s| out_intensity(&model, &policy, s).unwrap()).collect();
    // per path: count minus integrated intensity, into and out of each set
    let values = pool.run(n, 4, &|i, row| {
        let traj = sim.trajectory(i).unwrap();
        for (j, s) in sets.iter().enumerate() {
            row[2 * j] = count_into(&traj, s, t) as f64 - into[j].integrate(&traj, t);
            row[2 * j + 1] = count_out_of(&traj, s, t) as f64 - out[j].integrate(&traj, t);
        }
    });
    let mut passed = true;
    let mut parts = Vec::new();
    for (c, label) in ["into {1}", "out of {1}", "into {2}", "out of {2}"].iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| values[i * 4 + c]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let z = mean.abs() / se;
        passed &= z <= 3.0;
        parts.push(format!("{label}: z {z:.2}"));
    }
    outcome(passed, format!("T=2, N={n}: {}", parts.join(", ")))
}

/// 5. Pathwise discounted jump costs against the folded cost rate.
fn jump_cost_transformation(pool: &Pool) -> Outcome {
    let model = catalog::figure_two_with_jump_costs(0.0, 1.0);
    let policy = Policy::FiniteMemory(catalog::parity_policy(&model));
    let gamma = dirac_distribution(2, 1);
    let (alpha, eps, n) = (1.0, 1e-9, 100_000);
    let costs = model.costs();
    let exact = infinite_horizon_cost_exact(&model, &policy, &gamma, costs, alpha, eps, 0.001).unwrap();
    let t = truncation_horizon(&model, costs, alpha, eps).unwrap();
    let cfg = SimConfig {
        horizon: t,
        max_jumps: 1_000_000,
        trajectories: n,
        seed: 5_150,
    };
    let sim = Simulation::new(&model, &policy, &gamma, cfg).unwrap();
    let cost = PathCost::new(&model, &policy, costs, alpha, t).unwrap();
    let mc = mc_discounted_cost_streaming(pool, &sim, &cost).unwrap();
    let z = (mc.value - exact.value).abs() / mc.error_bound_or_se;
    outcome(
        z <= 3.0,
        format!(
            "α=1, N={n}: exact {:.6}, MC {:.6} ± {:.6}, z {z:.2}",
            exact.value, mc.value, mc.error_bound_or_se
        ),
    )
}

/// 6. Mass defects of truncated pure-birth chains and the mean explosion time.
fn explosion(pool: &Pool) -> Outcome {
    let cfg = ExplosionConfig::default();
    let r = run_explosion_demo(&cfg, pool).unwrap();
    let mc = r.mc.expect("simulation ran");
    let defects: Vec<String> = r.rows.iter().map(|row| format!("{}: {:.5}", row.depth, row.mass_defect)).collect();
    let passed = cfg.depths == [10, 50, 200]
        && r.nonincreasing_in_depth
        && r.defect_above_half
        && mc.depth == 200
        && mc.trajectories == 10_000
        && mc.within_3se;
    outcome(
        passed,
        format!(
            "defect at t=2 [{}], monotone (nonincreasing) {}, explosion time {:.4} ± {:.4} vs π²/6 (z {:.2})",
            defects.join(", "),
            r.nonincreasing_in_depth,
            mc.mean,
            mc.se,
            mc.z
        ),
    )
}

/// 7. The extension identity on every battery model.
fn extension() -> Outcome {
    let cfg = ExtensionConfig::default();
    let r = run_extension_battery(&cfg).unwrap();
    let passed = (cfg.u - std::f64::consts::LN_2).abs() < 1e-15 && r.residual_sup <= 1e-6 && r.passed;
    outcome(passed, format!("u=ln 2, {} checks, residual_sup {:.2e}", r.rows.len(), r.residual_sup))
}

/// 8. Abel and Cesàro averages on the flip chain family.
fn average_costs() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for rate in [1.0, 2.0, 4.0] {
        let model = catalog::flip_chain(rate);
        let phi = MarkovPolicyGrid::deterministic(&model, &[0, 0]).unwrap();
        let gamma = [1.0, 0.0];
        let costs = model.costs().clone();
        let abel = average_cost_abel(
            |a| stationary_discounted_cost(&model, &phi, &gamma, &costs, a),
            &default_abel_alphas(),
        )
        .unwrap();
        let horizons = default_cesaro_horizons();
        let policy = Policy::Markov(phi.clone());
        let curve = exact_curve(&model, &policy, &gamma, 0.01, *horizons.last().unwrap()).unwrap();
        let cesaro = average_cost_cesaro(
            |t| Ok(finite_horizon_cost(&curve, &model, &costs, 0.0, t)?.value),
            &horizons,
        )
        .unwrap();
        // the stationary law is uniform and the cost is 1 on one state
        let stationary = 0.5;
        passed &= (abel.estimate - stationary).abs() <= 2e-3
            && (cesaro.estimate - stationary).abs() <= 2e-3
            && abel.estimate <= cesaro.estimate + 1e-6;
        parts.push(format!("rate {rate}: Abel {:.6}, Cesàro {:.6}", abel.estimate, cesaro.estimate));
    }
    outcome(passed, format!("{} (stationary 0.5)", parts.join("; ")))
}

/// 9. Every subcommand, run twice with the same seed, writes the same bytes.
fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = catalog::figure_two_with_jump_costs(0.5, 1.0);
    let parity = catalog::parity_policy(&model);
    std::fs::write(d.join("model.json"), files::model_json(&model)).unwrap();
    std::fs::write(
        d.join("policy.json"),
        files::json_string(&files::finite_memory_policy_file(&model, &parity)),
    )
    .unwrap();
    std::fs::write(d.join("gamma.json"), "{\"2\": 1.0}\n").unwrap();
    let configs = [
        ("two-state", r#"{"alphas": [1.0], "step": 0.01, "eps": 1e-6, "n_mc": 2000}"#),
        ("battery", r#"{"model_seeds": [0, 1], "step": 0.01, "horizon": 1.0, "refine": 2, "horizons": [1.0], "infinite_alpha": null}"#),
        ("explosion", r#"{"depths": [5, 10], "n_mc": 500}"#),
        ("extension", r#"{"model_seeds": [0], "step": 0.02, "horizon": 1.0}"#),
    ];
    for (name, cfg) in configs {
        std::fs::write(d.join(format!("{name}.json")), cfg).unwrap();
    }
    let inputs = ["--model", "model.json", "--policy", "policy.json", "--gamma", "gamma.json"];
    let mut runs: Vec<(String, Vec<String>, Vec<&str>)> = vec![
        ("simulate".into(), vec!["simulate", "--horizon", "3", "--n", "200", "--grid-step", "0.5", "--marginals", "OUT_marg.json"], vec!["", "_marg.json"]),
        ("forward".into(), vec!["forward", "--grid-step", "0.05", "--horizon", "2", "--method", "both", "--actions"], vec![""]),
        ("markovize-exact".into(), vec!["markovize", "--grid-step", "0.1", "--horizon", "2"], vec![""]),
        ("markovize-mc".into(), vec!["markovize", "--grid-step", "0.1", "--horizon", "2", "--method", "mc", "--n", "2000"], vec![""]),
        ("verify".into(), vec!["verify", "--grid-step", "0.05", "--horizon", "2", "--refine", "2"], vec![""]),
        ("evaluate-exact".into(), vec!["evaluate", "--alpha", "1", "--infinite", "--grid-step", "0.01"], vec![""]),
        ("evaluate-mc".into(), vec!["evaluate", "--alpha", "1", "--horizon", "4", "--method", "mc", "--n", "5000"], vec![""]),
    ]
    .into_iter()
    .map(|(n, a, o)| (n, a.into_iter().map(String::from).collect(), o))
    .collect();
    for (name, _) in configs {
        runs.push((
            format!("experiment-{name}"),
            vec!["experiment".into(), name.into(), "--config".into(), format!("{name}.json"), "--csv".into(), "OUT.csv".into()],
            if name == "two-state" { vec!["", ".csv", "_curve.csv"] } else { vec!["", ".csv"] },
        ));
    }
    let run = |name: &str, args: &[String], rep: usize| -> (Option<i32>, String) {
        let prefix = format!("{name}-{rep}");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctjmdp"));
        cmd.current_dir(d).args(["--seed", "17", "--threads", "4", "--out", &format!("{prefix}.out")]);
        cmd.args(args.iter().map(|a| a.replace("OUT", &prefix)));
        if !name.starts_with("experiment") {
            cmd.args(inputs);
        }
        let output = cmd.output().unwrap();
        (output.status.code(), String::from_utf8_lossy(&output.stderr).into_owned())
    };
    let read = |p: &Path| std::fs::read(p).unwrap_or_default();
    let mut failures = Vec::new();
    let mut files_compared = 0;
    for (name, args, outputs) in &runs {
        let (c1, e1) = run(name, args, 1);
        let (c2, e2) = run(name, args, 2);
        if c1 != c2 || e1 != e2 || !matches!(c1, Some(0) | Some(2)) {
            failures.push(format!("{name} exit {c1:?}/{c2:?} {e1}"));
            continue;
        }
        for suffix in outputs {
            let file = |rep: usize| {
                if suffix.is_empty() {
                    d.join(format!("{name}-{rep}.out"))
                } else {
                    d.join(format!("{name}-{rep}{suffix}"))
                }
            };
            let (a, b) = (read(&file(1)), read(&file(2)));
            files_compared += 1;
            if a.is_empty() || a != b {
                failures.push(format!("{name}{suffix} differs or is empty"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} invocations, {files_compared} output files byte-identical across reruns", runs.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let pool = Pool::new(None).expect("thread pool");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 sufficiency equality", Box::new(|| sufficiency(&pool))),
        ("2 two-state counterexample", Box::new(|| counterexample(&pool))),
        ("3 forward cross-validation", Box::new(forward_cross_validation)),
        ("4 compensator identity", Box::new(|| compensator(&pool))),
        ("5 jump-cost transformation", Box::new(|| jump_cost_transformation(&pool))),
        ("6 explosion", Box::new(|| explosion(&pool))),
        ("7 extension identity", Box::new(extension)),
        ("8 average costs", Box::new(average_costs)),
        ("9 CLI reproducibility", Box::new(reproducibility)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
