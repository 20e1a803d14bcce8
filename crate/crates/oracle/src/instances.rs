//! Random small scenarios and capacity vectors for property checks.

use rand::Rng;

use vcc_core::bilevel::FeasibleSet;
use vcc_core::game::{EquilibriumResult, GameMatrices};
use vcc_core::{ComputeJob, DataCenterFleet, Edge, Grid, Scenario, SolverParams};

/// Size limits for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceLimits {
    pub max_jobs: usize,
    pub max_dcs: usize,
    pub max_horizon: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        InstanceLimits {
            max_jobs: 3,
            max_dcs: 3,
            max_horizon: 3,
        }
    }
}

/// A valid scenario with `epsilon` log-uniform in `[1e-3, 1e-1]` whose
/// capacity box admits every job.
pub fn random_scenario(rng: &mut impl Rng, limits: InstanceLimits) -> Scenario {
    loop {
        let dn = rng.gen_range(1..=limits.max_dcs);
        let tn = rng.gen_range(1..=limits.max_horizon);
        let jn = rng.gen_range(1..=limits.max_jobs);
        let jobs: Vec<ComputeJob> = (0..jn)
            .map(|i| ComputeJob {
                id: i as u64 + 1,
                home: rng.gen_range(0..dn),
                volume: rng.gen_range(0.5..2.0),
                priority: rng.gen_range(0.5..5.0),
            })
            .collect();
        let total: f64 = jobs.iter().map(|j| j.volume).sum();
        let mut edges: Vec<Edge> = (1..dn)
            .map(|d| Edge {
                a: rng.gen_range(0..d),
                b: d,
                price: rng.gen_range(0.1..2.0),
            })
            .collect();
        if dn >= 3 && rng.gen_bool(0.5) {
            edges.push(Edge { a: 0, b: dn - 1, price: rng.gen_range(0.1..2.0) });
        }
        let physical: Vec<f64> = (0..dn).map(|_| total * rng.gen_range(0.4..1.2)).collect();
        let inflexible = Grid::from_fn(dn, tn, |d, _| physical[d] * rng.gen_range(0.0..0.3));
        let carbon = Grid::from_fn(dn, tn, |_, _| rng.gen_range(50.0..500.0));
        let params = SolverParams {
            epsilon: 10f64.powf(rng.gen_range(-3.0..-1.0)),
            ..SolverParams::default()
        };
        let Ok(fleet) = DataCenterFleet::new(dn, edges, physical) else { continue };
        let Ok(s) = Scenario::new("random", fleet, None, jobs, tn, carbon, inflexible, params) else { continue };
        let Ok(set) = FeasibleSet::new(&s) else { continue };
        let Ok(m) = GameMatrices::assemble(&s) else { continue };
        if m.certify_feasible(&set.upper).is_ok() {
            return s;
        }
    }
}

/// A random point of the feasible VCC set, pushed towards the box corner
/// until it carries at least `1.05 V` where possible.
pub fn random_capacity(set: &FeasibleSet, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = set.upper.iter().map(|&u| u * rng.gen_range(0.0..1.0)).collect();
    let cap: f64 = set.upper.iter().sum();
    let target = (1.05 * set.demand).min(cap);
    let sum: f64 = x.iter().sum();
    if sum < target {
        let theta = (target - sum) / (cap - sum);
        for (xi, &u) in x.iter_mut().zip(&set.upper) {
            *xi += theta * (u - *xi);
        }
    }
    x
}

/// Strict complementarity at a solved equilibrium: every active row carries a
/// multiplier above `margin` and every other nonconstant row has slack above
/// `margin`.
pub fn strictly_complementary(m: &GameMatrices, eq: &EquilibriumResult, x: &[f64], margin: f64) -> bool {
    let slack = m.rhs(x) - &m.g_tilde * &eq.y_tilde_star;
    let active = |k: usize| eq.active_set.binary_search(&k).is_ok();
    (0..m.g_tilde.nrows()).all(|k| {
        if active(k) {
            eq.lambda[k] > margin
        } else {
            m.g_tilde.row(k).amax() == 0.0 || slack[k] > margin
        }
    })
}
