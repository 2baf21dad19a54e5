use ctjmdp_core::catalog;
use ctjmdp_core::costs::{exact_curve, finite_horizon_cost, mc_discounted_cost_streaming, PathCost};
use ctjmdp_core::experiments::extension::{run_extension_battery, ExtensionConfig};
use ctjmdp_core::experiments::two_state::{run_example_two_state, TwoStateConfig};
use ctjmdp_core::model::CostStructure;
use ctjmdp_core::runner::Serial;
use ctjmdp_core::simulator::{SimConfig, Simulation};
use ctjmdp_core::Policy;

#[test]
fn finite_horizon_values_grow_with_the_horizon() {
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        for (name, sigma) in catalog::battery_policies(&model, seed) {
            let policy = Policy::FiniteMemory(sigma);
            let curve = exact_curve(&model, &policy, &[0.25; 4], 0.01, 4.0).unwrap();
            for alpha in [0.0, 1.0] {
                let values: Vec<f64> = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0]
                    .iter()
                    .map(|&t| finite_horizon_cost(&curve, &model, model.costs(), alpha, t).unwrap().value)
                    .collect();
                assert!(values.windows(2).all(|w| w[1] >= w[0]), "{seed} {name} {values:?}");
            }
        }
    }
}

/// Discounted jump costs charged pathwise against the exact integral of the equivalent
/// cost rate `Σ_y C(z, y) q̃(z, a, y)`.
#[test]
fn pathwise_jump_costs_match_the_folded_rate() {
    let (alpha, horizon) = (1.0, 4.0);
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        let mut jumps = CostStructure::zero(4, model.n_actions());
        for x in 0..4 {
            for y in 0..4 {
                jumps.set_jump(x, y, model.costs().jump(x, y));
            }
        }
        let (_, sigma) = catalog::battery_policies(&model, seed).swap_remove(1);
        let policy = Policy::FiniteMemory(sigma);
        let gamma = [0.25; 4];
        let curve = exact_curve(&model, &policy, &gamma, 0.005, horizon).unwrap();
        let exact = finite_horizon_cost(&curve, &model, &jumps, alpha, horizon).unwrap().value;
        let cfg = SimConfig {
            horizon,
            max_jumps: 1_000,
            trajectories: 20_000,
            seed: 500 + seed,
        };
        let sim = Simulation::new(&model, &policy, &gamma, cfg).unwrap();
        let cost = PathCost::new(&model, &policy, &jumps, alpha, horizon).unwrap();
        let mc = mc_discounted_cost_streaming(&Serial, &sim, &cost).unwrap();
        let z = (mc.value - exact).abs() / mc.error_bound_or_se;
        assert!(z <= 3.0, "seed {seed}: exact {exact} mc {} ± {}", mc.value, mc.error_bound_or_se);
    }
}

#[test]
fn experiments_are_pure_functions_of_their_config() {
    let ext = ExtensionConfig {
        model_seeds: vec![1, 2],
        step: 0.02,
        horizon: 1.0,
        ..ExtensionConfig::default()
    };
    assert_eq!(run_extension_battery(&ext).unwrap(), run_extension_battery(&ext).unwrap());
    let two = TwoStateConfig {
        alphas: vec![1.0],
        step: 0.01,
        eps: 1e-6,
        n_mc: 500,
        ..TwoStateConfig::default()
    };
    let a = run_example_two_state(&two, &Serial).unwrap();
    let b = run_example_two_state(&two, &Serial).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
