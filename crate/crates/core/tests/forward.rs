mod common;

use ctjmdp_core::catalog;
use ctjmdp_core::forward::{
    feller_series, finite_memory_marginals_with, markov_marginals_with, substeps_for, OdeOptions, QFunction, SeriesOptions,
};
use ctjmdp_core::model::{dirac_distribution, StateSet};
use ctjmdp_core::simulator::{estimate_marginals, simulate, SimConfig};
use ctjmdp_core::{MarkovPolicyGrid, Policy, TimeGrid};

fn opts(model: &ctjmdp_core::ModelSpec, step: f64) -> OdeOptions {
    OdeOptions {
        substeps: substeps_for(model, step),
    }
}

#[test]
fn ode_matches_uniformization() {
    let grid = TimeGrid::new(0.01, 400).unwrap();
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        let phi = catalog::random_markov_policy(&model, seed);
        let gamma = dirac_distribution(4, (seed % 4) as usize);
        let curve = markov_marginals_with(&model, &phi, &gamma, grid, opts(&model, grid.step)).unwrap();
        let q = common::generator(&model, &phi);
        let lambda = common::uniformization_rate(&model);
        let mut sup = 0.0f64;
        for k in 0..grid.points() {
            let exact = common::uniformization(&q, lambda, &gamma, grid.time(k));
            for z in 0..4 {
                sup = sup.max((curve.prob(k, z) - exact[z]).abs());
            }
        }
        assert!(sup <= 1e-8, "seed {seed}: {sup:e}");
    }
}

#[test]
fn series_partial_sums_stay_below_the_ode() {
    let grid = TimeGrid::new(0.01, 400).unwrap();
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        let phi = catalog::random_markov_policy(&model, seed);
        let gamma = vec![0.25; 4];
        let o = opts(&model, grid.step);
        let ode = markov_marginals_with(&model, &phi, &gamma, grid, o).unwrap();
        let q = QFunction::new(&model, &phi).unwrap();
        let s = feller_series(
            &q,
            &gamma,
            grid,
            SeriesOptions {
                substeps: o.substeps,
                ..SeriesOptions::default()
            },
        )
        .unwrap();
        assert!(s.converged);
        assert!(s.term_min >= 0.0);
        let mut sup = 0.0f64;
        for (a, b) in s.curve.probs.iter().zip(&ode.probs) {
            assert!(*a <= b + 1e-4);
            sup = sup.max((a - b).abs());
        }
        assert!(sup <= 1e-4, "seed {seed}: {sup:e}");
        // truncating the series earlier gives entrywise smaller sums
        let short = feller_series(
            &q,
            &gamma,
            grid,
            SeriesOptions {
                substeps: o.substeps,
                n_max: 3,
                ..SeriesOptions::default()
            },
        )
        .unwrap();
        for (a, b) in short.curve.probs.iter().zip(&s.curve.probs) {
            assert!(*a <= *b);
        }
    }
}

/// `P(t, Z) = γ(Z) + ∫_0^t [inflow into Z - outflow from Z] ds`, with the integrals taken
/// from the solver's state-action cell integrals.
#[test]
fn generalized_forward_equation_holds_on_every_set() {
    let grid = TimeGrid::new(0.01, 400).unwrap();
    for seed in 0..3 {
        let model = catalog::random_model(seed, 4, 3);
        let gamma = vec![0.1, 0.2, 0.3, 0.4];
        for (name, sigma) in catalog::battery_policies(&model, seed) {
            let curve = finite_memory_marginals_with(&model, &sigma, &gamma, grid, opts(&model, grid.step))
                .unwrap()
                .marginal;
            let acts = curve.actions.as_ref().unwrap();
            for mask in 1u32..15 {
                let members: Vec<bool> = (0..4).map(|z| mask & (1 << z) != 0).collect();
                let set = StateSet::from_mask(members.clone());
                let mut integral = 0.0;
                let mut residual = 0.0f64;
                for k in 0..=grid.cells {
                    let p: f64 = set.iter().map(|z| curve.prob(k, z)).sum();
                    let g: f64 = set.iter().map(|z| gamma[z]).sum();
                    residual = residual.max((p - g - integral).abs());
                    if k == grid.cells {
                        break;
                    }
                    for z in 0..4 {
                        for a in 0..3 {
                            let mass = acts.cell_mass[(k * 4 + z) * 3 + a];
                            if mass == 0.0 {
                                continue;
                            }
                            for y in 0..4 {
                                if y == z || members[y] == members[z] {
                                    continue;
                                }
                                let flow = mass * model.rate(z, a, y);
                                integral += if members[y] { flow } else { -flow };
                            }
                        }
                    }
                }
                assert!(residual <= 1e-6, "seed {seed} {name} set {mask:04b}: {residual:e}");
            }
        }
    }
}

#[test]
fn mass_is_conserved_without_explosion() {
    let grid = TimeGrid::new(0.01, 400).unwrap();
    for seed in 0..5 {
        let model = catalog::random_model(seed, 4, 3);
        for (_, sigma) in catalog::battery_policies(&model, seed) {
            let curve = finite_memory_marginals_with(&model, &sigma, &[0.25; 4], grid, opts(&model, grid.step))
                .unwrap()
                .marginal;
            assert!(curve.mass_defects().iter().all(|&d| d.abs() <= 1e-9));
        }
    }
    let birth = catalog::pure_birth(30);
    let phi = MarkovPolicyGrid::deterministic(&birth, &[0; 31]).unwrap();
    let grid = TimeGrid::new(0.01, 300).unwrap();
    let curve = markov_marginals_with(&birth, &phi, &dirac_distribution(31, 0), grid, opts(&birth, grid.step)).unwrap();
    let d = curve.mass_defects();
    assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!(d[d.len() - 1] > 0.5);
}

#[test]
fn finite_memory_occupancy_matches_product_chain() {
    let model = catalog::figure_two();
    let sigma = catalog::parity_policy(&model);
    let gamma = dirac_distribution(2, 1);
    let grid = TimeGrid::new(0.25, 8).unwrap();
    let exact = finite_memory_marginals_with(&model, &sigma, &gamma, grid, opts(&model, 0.25)).unwrap();
    let cfg = SimConfig {
        horizon: 2.0,
        max_jumps: 10_000,
        trajectories: 20_000,
        seed: 11,
    };
    let policy = Policy::FiniteMemory(sigma.clone());
    let trajs = simulate(&model, &policy, &gamma, cfg).unwrap();
    let est = estimate_marginals(&trajs, &model, &policy, grid).unwrap();
    for k in 1..grid.points() {
        for z in 0..2 {
            // the product chain marginal summed over memory
            let p: f64 = (0..2).map(|m| exact.augmented.prob(k, exact.augmentation.index(z, m))).sum();
            assert!((p - exact.marginal.prob(k, z)).abs() < 1e-12);
            let se = (p * (1.0 - p) / cfg.trajectories as f64).sqrt();
            assert!((est.state(k, z) - p).abs() <= 4.0 * se, "t {} z {z}", grid.time(k));
        }
    }
}
