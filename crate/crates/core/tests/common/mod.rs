//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ctjmdp_core::{MarkovPolicyGrid, ModelSpec};

/// Generator `Q_φ(z, y) = Σ_a φ(a|z) q(z, a, y)` of a time-homogeneous Markov policy,
/// row-major, diagonal included.
pub fn generator(model: &ModelSpec, phi: &MarkovPolicyGrid) -> Vec<f64> {
    let n = model.n_states();
    let mut q = vec![0.0; n * n];
    for z in 0..n {
        let p = phi.cell_action(0, z);
        for a in 0..model.n_actions() {
            if p[a] == 0.0 {
                continue;
            }
            for y in 0..n {
                if y != z {
                    let r = p[a] * model.rate(z, a, y);
                    q[z * n + y] += r;
                    q[z * n + z] -= r;
                }
            }
        }
    }
    q
}

/// `γ e^{tQ} = Σ_k e^{-λt} (λt)^k / k! · γ Π^k` with `Π = I + Q/λ`, summed past the
/// Poisson mode until the weights drop below `1e-18`.
pub fn uniformization(q: &[f64], lambda: f64, gamma: &[f64], t: f64) -> Vec<f64> {
    let n = gamma.len();
    if lambda == 0.0 || t == 0.0 {
        return gamma.to_vec();
    }
    let lt = lambda * t;
    let mut v = gamma.to_vec();
    let mut weight = (-lt).exp();
    let mut out: Vec<f64> = v.iter().map(|x| weight * x).collect();
    let mut k = 0usize;
    while (k as f64) < lt || weight > 1e-18 {
        k += 1;
        let mut next = vec![0.0; n];
        for z in 0..n {
            if v[z] == 0.0 {
                continue;
            }
            for y in 0..n {
                let pi = if z == y { 1.0 + q[z * n + y] / lambda } else { q[z * n + y] / lambda };
                next[y] += v[z] * pi;
            }
        }
        v = next;
        weight *= lt / k as f64;
        for (o, x) in out.iter_mut().zip(&v) {
            *o += weight * x;
        }
    }
    out
}

/// `max_z q̄(z)`
pub fn uniformization_rate(model: &ModelSpec) -> f64 {
    (0..model.n_states()).map(|z| model.max_exit_rate(z)).fold(0.0, f64::max)
}
