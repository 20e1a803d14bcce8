//! Operator-side problem: objective, feasible VCC set, hypergradient and the
//! projected descent loop over the equilibrium map.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::game::{
    aggregate_load, build_layout, solve_game_warm, DecisionLayout, EquilibriumResult, GameError,
    GameMatrices,
};
use crate::params::{SolverParams, StepRule};
use crate::scenario::Scenario;
use crate::sensitivity::{compute_sensitivity, SensitivityError};

#[derive(Debug, Error)]
pub enum BilevelError {
    #[error("feasible VCC set is empty: usable capacity {available} < total volume {demand}")]
    EmptyX { available: f64, demand: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error("leader objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize, trace: Box<SolverTrace> },
    #[error("invalid solver parameters: {0}")]
    Params(String),
}

/// Box `[0, u]` intersected with `sum(x) >= V`.
///
/// `u` folds the physical limit and, at the first step, the volume uploaded
/// at each DC.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub upper: Vec<f64>,
    pub demand: f64,
}

impl FeasibleSet {
    pub fn new(scenario: &Scenario) -> Result<Self, BilevelError> {
        let cap = scenario.effective_capacity();
        let (dn, tn) = (scenario.dc_count(), scenario.horizon);
        let mut upper = cap.as_slice().to_vec();
        for d in 0..dn {
            upper[d * tn] = upper[d * tn].min(scenario.home_volume(d));
        }
        let demand = scenario.total_volume();
        let available: f64 = upper.iter().sum();
        if available < demand * (1.0 - 1e-12) {
            return Err(BilevelError::EmptyX { available, demand });
        }
        // A set pinned to its upper corner can lose the tie to summation order.
        Ok(FeasibleSet { upper, demand: demand.min(available) })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.upper.len()
            && x.iter().zip(&self.upper).all(|(&v, &u)| v >= -tol && v <= u + tol)
            && x.iter().sum::<f64>() >= self.demand - tol
    }

    /// Euclidean projection. The minimiser is `clip(v + mu, 0, u)` with the
    /// smallest `mu >= 0` meeting the demand; `mu` is found exactly by walking
    /// the breakpoints of the piecewise-linear sum.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.upper.len(), "dimension mismatch");
        let clip = |mu: f64| -> Vec<f64> {
            v.iter()
                .zip(&self.upper)
                .map(|(&vi, &ui)| (vi + mu).clamp(0.0, ui))
                .collect()
        };
        let total = |mu: f64| -> f64 {
            v.iter()
                .zip(&self.upper)
                .map(|(&vi, &ui)| (vi + mu).clamp(0.0, ui))
                .sum()
        };
        if total(0.0) >= self.demand {
            return clip(0.0);
        }
        let mut breaks: Vec<f64> = v
            .iter()
            .zip(&self.upper)
            .flat_map(|(&vi, &ui)| [-vi, ui - vi])
            .filter(|&b| b > 0.0)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut lo = 0.0;
        let mut s_lo = total(0.0);
        for &b in &breaks {
            let s_b = total(b);
            if s_b >= self.demand {
                let mu = if s_b > s_lo {
                    lo + (self.demand - s_lo) * (b - lo) / (s_b - s_lo)
                } else {
                    b
                };
                let mut x = clip(mu.min(b));
                // Rounding can leave the sum a hair short of the demand.
                let short = self.demand - x.iter().sum::<f64>();
                if short > 0.0 {
                    if let Some((xi, ui)) = x
                        .iter_mut()
                        .zip(&self.upper)
                        .filter(|(xi, ui)| **xi > 0.0 && **xi < **ui)
                        .max_by(|a, b| (*a.1 - *a.0).total_cmp(&(*b.1 - *b.0)))
                    {
                        *xi = (*xi + short).min(*ui);
                    }
                }
                return x;
            }
            lo = b;
            s_lo = s_b;
        }
        // Only reachable if the set is empty, which `new` rules out.
        self.upper.clone()
    }

    /// Capacity-shaped start: `u * min(1, 1.05 V / sum(u))`, projected.
    pub fn initial_point(&self) -> Vec<f64> {
        let total: f64 = self.upper.iter().sum();
        let scale = if total > 0.0 { (1.05 * self.demand / total).min(1.0) } else { 0.0 };
        let raw: Vec<f64> = self.upper.iter().map(|u| u * scale).collect();
        self.project(&raw)
    }
}

/// `|v|_p` and its gradient `(v / |v|_p)^(p-1)`, computed with max-scaling.
/// Both are zero at `v = 0`.
pub fn p_norm_with_grad(v: &[f64], p: u32) -> (f64, Vec<f64>) {
    let m = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if m == 0.0 {
        return (0.0, vec![0.0; v.len()]);
    }
    let pf = p as f64;
    let s: f64 = v.iter().map(|&x| (x / m).abs().powi(p as i32)).sum();
    let norm = m * s.powf(1.0 / pf);
    let grad = v
        .iter()
        .map(|&x| {
            let r = x / norm;
            r.abs().powi(p as i32 - 1) * r.signum()
        })
        .collect();
    (norm, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiParts {
    pub carbon: f64,
    pub peak: f64,
    pub migration: f64,
    pub uniform: f64,
    pub total: f64,
}

/// The operator's objective `carbon + peak + xi*migration + w/2 * 1'x`.
#[derive(Debug, Clone)]
pub struct LeaderObjective {
    pub layout: DecisionLayout,
    /// Carbon intensity, flattened like `x`.
    pub rho: Vec<f64>,
    pub p: u32,
    pub xi: f64,
    pub uniform_weight: f64,
    /// `tau_i * price(home_i -> d)` on foreign transfer coordinates, zero elsewhere.
    pub migration_coef: DVector<f64>,
}

impl LeaderObjective {
    pub fn new(scenario: &Scenario) -> Self {
        let layout = build_layout(scenario);
        let mut migration_coef = DVector::zeros(layout.n_y());
        for (i, job) in scenario.jobs.iter().enumerate() {
            for d in (0..layout.dc_count).filter(|&d| d != job.home) {
                let price = scenario.paths.price(job.home, d);
                for t in 0..layout.horizon - 1 {
                    migration_coef[layout.z(i, d, t)] = job.priority * price;
                }
            }
        }
        LeaderObjective {
            rho: scenario.carbon.as_slice().to_vec(),
            p: scenario.params.p,
            xi: scenario.params.xi,
            uniform_weight: scenario.params.uniform_weight,
            layout,
            migration_coef,
        }
    }

    fn peak(&self, load: &[f64]) -> (f64, Vec<f64>) {
        let tn = self.layout.horizon;
        let mut total = 0.0;
        let mut grad = vec![0.0; load.len()];
        for d in 0..self.layout.dc_count {
            let (n, g) = p_norm_with_grad(&load[d * tn..(d + 1) * tn], self.p);
            total += n;
            grad[d * tn..(d + 1) * tn].copy_from_slice(&g);
        }
        (total, grad)
    }

    pub fn parts(&self, x: &[f64], y: &DVector<f64>) -> PhiParts {
        let load = aggregate_load(&self.layout, y);
        let carbon: f64 = self.rho.iter().zip(&load).map(|(r, l)| r * l).sum();
        let (peak, _) = self.peak(&load);
        let migration = self.migration_coef.dot(y);
        let uniform = 0.5 * self.uniform_weight * x.iter().sum::<f64>();
        PhiParts {
            carbon,
            peak,
            migration,
            uniform,
            total: carbon + peak + self.xi * migration + uniform,
        }
    }

    pub fn value(&self, x: &[f64], y: &DVector<f64>) -> f64 {
        self.parts(x, y).total
    }

    /// Partial gradients with respect to `x` and `y`.
    pub fn gradients(&self, x: &[f64], y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let l = &self.layout;
        let grad_x = DVector::from_element(x.len(), 0.5 * self.uniform_weight);
        let load = aggregate_load(l, y);
        let (_, peak_grad) = self.peak(&load);
        let mut grad_y = &self.migration_coef * self.xi;
        for i in 0..l.jobs {
            for d in 0..l.dc_count {
                for t in 0..l.horizon {
                    let k = l.x(d, t);
                    grad_y[l.y(i, d, t)] += self.rho[k] + peak_grad[k];
                }
            }
        }
        (grad_x, grad_y)
    }
}

/// `grad_1 + S' grad_2` with `S = dy*/dx`.
pub fn hypergradient(grad_x: &DVector<f64>, grad_y: &DVector<f64>, sensitivity: &DMatrix<f64>) -> DVector<f64> {
    grad_x + sensitivity.tr_mul(grad_y)
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub phi: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub step_norm: f64,
    pub qp_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Converged,
    MaxIterations,
    Aborted,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub status: TraceStatus,
}

impl SolverTrace {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "k",
            "phi",
            "grad_norm",
            "alpha",
            "step_norm",
            "qp_iterations",
            "wall_time_s",
            "x",
        ])
        .expect("in-memory write");
        for r in &self.records {
            let x = r.x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";");
            w.write_record([
                r.k.to_string(),
                format!("{}", r.phi),
                format!("{}", r.grad_norm),
                format!("{}", r.alpha),
                format!("{}", r.step_norm),
                r.qp_iterations.to_string(),
                format!("{}", r.wall_time_s),
                x,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone)]
pub struct BilevelOutcome {
    pub x: Vec<f64>,
    pub equilibrium: EquilibriumResult,
    pub phi: f64,
    pub trace: SolverTrace,
}

/// Everything the loop needs at one capacity vector.
pub struct Evaluation {
    pub equilibrium: EquilibriumResult,
    pub phi: f64,
    pub gradient: DVector<f64>,
}

/// Solves the game at `x` and assembles `phi_e(x)` and its hypergradient.
pub fn evaluate(
    matrices: &GameMatrices,
    leader: &LeaderObjective,
    x: &[f64],
    warm: Option<&crate::qp::QpFactor>,
) -> Result<Evaluation, BilevelError> {
    let equilibrium = solve_game_warm(matrices, x, warm)?;
    let sens = compute_sensitivity(matrices, &equilibrium)?;
    let phi = leader.value(x, &equilibrium.y_star);
    let (gx, gy) = leader.gradients(x, &equilibrium.y_star);
    let gradient = hypergradient(&gx, &gy, &sens.jacobian_full);
    Ok(Evaluation {
        equilibrium,
        phi,
        gradient,
    })
}

fn step_size(params: &SolverParams, alpha0: f64, k: usize) -> f64 {
    match params.step_rule {
        StepRule::Constant => alpha0,
        StepRule::Diminishing => alpha0 / ((k + 1) as f64).powf(params.decay),
    }
}

/// Projected hypergradient descent on `phi_e`, returning the best iterate.
///
/// Wall-clock times are recorded only when `record_timing` is set, so traces
/// are reproducible by default.
pub fn run_big_hype(scenario: &Scenario, record_timing: bool) -> Result<BilevelOutcome, BilevelError> {
    let params = &scenario.params;
    params.validate().map_err(BilevelError::Params)?;
    let set = FeasibleSet::new(scenario)?;
    let matrices = GameMatrices::assemble(scenario)?;
    let leader = LeaderObjective::new(scenario);
    let start = Instant::now();
    let clock = || if record_timing { start.elapsed().as_secs_f64() } else { 0.0 };

    let mut x = set.initial_point();
    let mut cur = evaluate(&matrices, &leader, &x, None)?;
    let x_max = scenario.effective_capacity().as_slice().iter().fold(0.0f64, |a, &b| a.max(b));
    let alpha0 = params
        .alpha0
        .unwrap_or(0.1 * x_max / (1.0 + cur.gradient.amax()));

    let mut trace = SolverTrace {
        records: vec![TraceRecord {
            k: 0,
            x: x.clone(),
            phi: cur.phi,
            grad_norm: cur.gradient.norm(),
            alpha: 0.0,
            step_norm: 0.0,
            qp_iterations: cur.equilibrium.qp_iterations,
            wall_time_s: clock(),
        }],
        status: TraceStatus::MaxIterations,
    };
    if !cur.phi.is_finite() {
        trace.status = TraceStatus::Aborted;
        return Err(BilevelError::NonFiniteObjective {
            iteration: 0,
            trace: Box::new(trace),
        });
    }
    let mut best = (cur.phi, x.clone(), cur.equilibrium.clone());

    for k in 0..params.k_max {
        let alpha = step_size(params, alpha0, k);
        let raw: Vec<f64> = x.iter().zip(cur.gradient.iter()).map(|(xi, gi)| xi - alpha * gi).collect();
        let next = set.project(&raw);
        let step = next.iter().zip(&x).fold(0.0f64, |a, (n, o)| a.max((n - o).abs()));
        let eval = evaluate(&matrices, &leader, &next, Some(&cur.equilibrium.factor))?;
        trace.records.push(TraceRecord {
            k: k + 1,
            x: next.clone(),
            phi: eval.phi,
            grad_norm: eval.gradient.norm(),
            alpha,
            step_norm: step,
            qp_iterations: eval.equilibrium.qp_iterations,
            wall_time_s: clock(),
        });
        if !eval.phi.is_finite() {
            trace.status = TraceStatus::Aborted;
            return Err(BilevelError::NonFiniteObjective {
                iteration: k + 1,
                trace: Box::new(trace),
            });
        }
        if eval.phi < best.0 {
            best = (eval.phi, next.clone(), eval.equilibrium.clone());
        }
        x = next;
        cur = eval;
        let scale = 1.0 + x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if step <= params.tol_x * scale {
            trace.status = TraceStatus::Converged;
            break;
        }
    }
    if params.k_max == 0 {
        trace.status = TraceStatus::Converged;
    }
    Ok(BilevelOutcome {
        x: best.1,
        equilibrium: best.2,
        phi: best.0,
        trace,
    })
}
