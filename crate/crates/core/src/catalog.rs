//! Canned models and policies used by the experiments and tests.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{ModelBuilder, ModelSpec, RelaxedAction};
use crate::policy::{FiniteMemoryPolicy, MarkovPolicyGrid, TimeGrid};
use crate::rng::StreamRng;

/// Two states `1, 2`, actions `b, c`, `A(1) = {b}`, `A(2) = {b, c}`,
/// `q(1,b) = q(2,b) = 2`, `q(2,c) = 1`, no costs.
pub fn figure_two() -> ModelSpec {
    figure_two_with_jump_costs(0.0, 0.0)
}

/// [`figure_two`] with action-independent jump costs `C(1,2)` and `C(2,1)`.
pub fn figure_two_with_jump_costs(c12: f64, c21: f64) -> ModelSpec {
    let mut b = ModelBuilder::new(["1", "2"], ["b", "c"]);
    b.feasible(0, &[0]).feasible(1, &[0, 1]);
    b.rate(0, 0, 1, 2.0).rate(1, 0, 0, 2.0).rate(1, 1, 0, 1.0);
    b.jump_cost(0, 1, c12).jump_cost(1, 0, c21);
    b.build().expect("figure-two model is valid")
}

/// Parity policy on [`figure_two`]: `b` in state 1; in state 2, `b` if the number of
/// jumps into 2 so far is even (or zero) and `c` if it is odd.
pub fn parity_policy(model: &ModelSpec) -> FiniteMemoryPolicy {
    let na = model.n_actions();
    let two = model.state_index("2").expect("state 2");
    let b = model.action_index("b").expect("action b");
    let c = model.action_index("c").expect("action c");
    FiniteMemoryPolicy::from_fn(
        model,
        vec!["even".to_string(), "odd".to_string()],
        0,
        TimeGrid { step: 1.0, cells: 1 },
        |m, _, to| if to == two { 1 - m } else { m },
        |_, z, m| {
            if z == two && m == 1 {
                RelaxedAction::dirac(na, c)
            } else {
                RelaxedAction::dirac(na, b)
            }
        },
    )
    .expect("parity policy is valid")
}

/// Two states flipping at rate `rate` in both directions, one action, cost rate
/// `1{z = 1}`.
pub fn flip_chain(rate: f64) -> ModelSpec {
    let mut b = ModelBuilder::new(["1", "2"], ["a"]);
    b.feasible(0, &[0]).feasible(1, &[0]);
    b.rate(0, 0, 1, rate).rate(1, 0, 0, rate);
    b.cost_rate(0, 0, 1.0);
    b.build().expect("flip chain is valid")
}

/// Pure-birth chain `0 → 1 → … → depth-1 → ∞` with rates `(n+1)^2`, truncated at
/// `depth` states; the last birth enters the absorbing cemetery state `inf`.
pub fn pure_birth(depth: usize) -> ModelSpec {
    let mut names: Vec<String> = (0..depth).map(|n| n.to_string()).collect();
    names.push("inf".to_string());
    let mut b = ModelBuilder::new(names, ["birth"]);
    for n in 0..=depth {
        b.feasible(n, &[0]);
    }
    for n in 0..depth {
        let r = ((n + 1) * (n + 1)) as f64;
        b.rate(n, 0, n + 1, r);
    }
    b.cemetery(depth);
    b.build().expect("pure-birth chain is valid")
}

/// Random bounded-rate model with nonnegative costs.
///
/// Every state gets between one and `max_actions` feasible actions. For each feasible
/// pair the exit rate is uniform on `[0.2, 3]` and is split over the other states with
/// uniform random proportions. Cost rates are uniform on `[0, 2]`, jump costs on
/// `[0, 1]`, and one instant cost with values on `[0, 1]` is charged at `t = 1`.
pub fn random_model(seed: u64, n_states: usize, max_actions: usize) -> ModelSpec {
    let mut rng = StreamRng::new(seed, 0x6d6f64656c);
    let states: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (0..max_actions).map(|i| format!("a{i}")).collect();
    let mut b = ModelBuilder::new(states, actions);
    for x in 0..n_states {
        let count = 1 + rng.below(max_actions);
        let mut pool: Vec<usize> = (0..max_actions).collect();
        let mut chosen = Vec::with_capacity(count);
        for _ in 0..count {
            chosen.push(pool.swap_remove(rng.below(pool.len())));
        }
        b.feasible(x, &chosen);
        for &a in &chosen {
            let exit = rng.range(0.2, 3.0);
            let raw: Vec<f64> = (0..n_states)
                .map(|y| if y == x { 0.0 } else { rng.uniform() })
                .collect();
            let total: f64 = raw.iter().sum();
            for (y, w) in raw.iter().enumerate() {
                if y != x {
                    b.rate(x, a, y, exit * w / total);
                }
            }
            b.cost_rate(x, a, rng.range(0.0, 2.0));
        }
    }
    for x in 0..n_states {
        for y in 0..n_states {
            if x != y {
                b.jump_cost(x, y, rng.range(0.0, 1.0));
            }
        }
    }
    let instant: Vec<f64> = (0..n_states * max_actions).map(|_| rng.uniform()).collect();
    b.instant_cost(1.0, instant);
    b.build().expect("random model is valid")
}

fn random_relaxed(rng: &mut StreamRng, model: &ModelSpec, z: usize) -> RelaxedAction {
    let mut w = vec![0.0; model.n_actions()];
    for &a in model.feasible(z) {
        w[a] = 0.1 + rng.uniform();
    }
    RelaxedAction::normalized(w).expect("positive weights")
}

fn random_pure(rng: &mut StreamRng, model: &ModelSpec, z: usize) -> RelaxedAction {
    let acts = model.feasible(z);
    RelaxedAction::dirac(model.n_actions(), acts[rng.below(acts.len())])
}

/// Random time-homogeneous relaxed Markov policy.
pub fn random_markov_policy(model: &ModelSpec, seed: u64) -> MarkovPolicyGrid {
    let mut rng = StreamRng::new(seed, 0x6d61726b6f76);
    let table: Vec<_> = (0..model.n_states())
        .map(|z| random_relaxed(&mut rng, model, z))
        .collect();
    MarkovPolicyGrid::constant(model, &table).expect("random policy is valid")
}

/// Three history-dependent policies for the sufficiency battery:
///
/// - `parity`: memory is the parity of the number of jumps into state 0, deterministic
///   random decisions per (state, memory);
/// - `last-state`: memory is the previously visited state, random relaxed decisions;
/// - `count-timed`: memory is the jump count mod 3, deterministic random decisions that
///   change on the unit time grid over `[0, 4)`.
pub fn battery_policies(model: &ModelSpec, seed: u64) -> Vec<(String, FiniteMemoryPolicy)> {
    let ns = model.n_states();
    let mut rng = StreamRng::new(seed, 0x706f6c696379);
    let homogeneous = TimeGrid { step: 1.0, cells: 1 };

    let parity_table: Vec<RelaxedAction> = (0..ns * 2)
        .map(|i| random_pure(&mut rng, model, i / 2))
        .collect();
    let parity = FiniteMemoryPolicy::from_fn(
        model,
        vec!["even".into(), "odd".into()],
        0,
        homogeneous,
        |m, _, to| if to == 0 { 1 - m } else { m },
        |_, z, m| parity_table[z * 2 + m].clone(),
    )
    .expect("parity policy is valid");

    let last_table: Vec<RelaxedAction> = (0..ns * ns)
        .map(|i| random_relaxed(&mut rng, model, i / ns))
        .collect();
    let last_state = FiniteMemoryPolicy::from_fn(
        model,
        (0..ns).map(|m| format!("from-{}", model.state_name(m))).collect(),
        0,
        homogeneous,
        |_, from, _| from,
        |_, z, m| last_table[z * ns + m].clone(),
    )
    .expect("last-state policy is valid");

    let timed_grid = TimeGrid { step: 1.0, cells: 4 };
    let timed_table: Vec<RelaxedAction> = (0..4 * ns * 3)
        .map(|i| random_pure(&mut rng, model, (i / 3) % ns))
        .collect();
    let timed = FiniteMemoryPolicy::from_fn(
        model,
        vec!["0".into(), "1".into(), "2".into()],
        0,
        timed_grid,
        |m, _, _| (m + 1) % 3,
        |k, z, m| timed_table[(k * ns + z) * 3 + m].clone(),
    )
    .expect("timed policy is valid");

    vec![
        ("parity".into(), parity),
        ("last-state".into(), last_state),
        ("count-timed".into(), timed),
    ]
}
