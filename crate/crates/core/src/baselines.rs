//! Comparison schedulers: a priority-greedy fill at full capacity and the
//! two-step scheme that sizes VCCs without modelling the teams' response.

use nalgebra::DVector;
use thiserror::Error;

use crate::bilevel::{p_norm_with_grad, BilevelError, FeasibleSet};
use crate::game::{build_layout, solve_game, validate_allocation, AllocationViolation, GameError, GameMatrices};
use crate::report::{compute_metrics, MetricsBundle, ReportError};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("job {job} does not fit its home DC over the horizon ({left} units left)")]
    Infeasible { job: u64, left: f64 },
    #[error(transparent)]
    Bilevel(#[from] BilevelError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Allocation(#[from] AllocationViolation),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineLabel {
    Naive,
    Sequential,
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub label: BaselineLabel,
    pub x_used: Vec<f64>,
    pub y: DVector<f64>,
    pub metrics: MetricsBundle,
}

/// Jobs in descending priority (ties by id) fill the earliest free steps of
/// their home DC; nothing migrates.
pub fn naive_schedule(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let layout = build_layout(scenario);
    let cap = scenario.effective_capacity();
    let mut used = vec![0.0f64; cap.as_slice().len()];
    let mut order: Vec<usize> = (0..scenario.jobs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ja, jb) = (&scenario.jobs[a], &scenario.jobs[b]);
        jb.priority.total_cmp(&ja.priority).then(ja.id.cmp(&jb.id))
    });

    let mut y = DVector::zeros(layout.n_y());
    for &i in &order {
        let job = &scenario.jobs[i];
        let mut left = job.volume;
        for t in 0..layout.horizon {
            let k = layout.x(job.home, t);
            let room = cap.as_slice()[k];
            let mut take = left.min(room - used[k]).max(0.0);
            // Keep the summed slot load at or below capacity after rounding.
            while take > 0.0 && used[k] + take > room {
                take = take.next_down();
            }
            y[layout.y(i, job.home, t)] = take;
            used[k] += take;
            left -= take;
            if t + 1 < layout.horizon {
                y[layout.z(i, job.home, t)] = left;
            }
        }
        if left > 1e-9 * job.volume.max(1.0) {
            return Err(BaselineError::Infeasible { job: job.id, left });
        }
    }
    let x_used = cap.as_slice().to_vec();
    let volumes: Vec<f64> = scenario.jobs.iter().map(|j| j.volume).collect();
    validate_allocation(&layout, &volumes, &y, Some(&x_used))?;
    let metrics = compute_metrics(scenario, &y)?;
    Ok(BaselineResult {
        label: BaselineLabel::Naive,
        x_used,
        y,
        metrics,
    })
}

/// Forecast objective with the VCCs standing in for the loads:
/// `sum rho*x + sum_d |x_d|_p`.
pub fn forecast_objective(scenario: &Scenario, x: &[f64]) -> (f64, Vec<f64>) {
    let tn = scenario.horizon;
    let rho = scenario.carbon.as_slice();
    let mut value: f64 = rho.iter().zip(x).map(|(r, v)| r * v).sum();
    let mut grad = rho.to_vec();
    for d in 0..scenario.dc_count() {
        let (n, g) = p_norm_with_grad(&x[d * tn..(d + 1) * tn], scenario.params.p);
        value += n;
        for (gk, gd) in grad[d * tn..(d + 1) * tn].iter_mut().zip(g) {
            *gk += gd;
        }
    }
    (value, grad)
}

/// Projected gradient with Armijo backtracking on the forecast objective.
pub fn minimize_forecast(scenario: &Scenario, set: &FeasibleSet) -> Vec<f64> {
    let mut x = set.initial_point();
    let (mut f, mut g) = forecast_objective(scenario, &x);
    let scale = set.upper.iter().fold(0.0f64, |a, &b| a.max(b)).max(1.0);
    let mut alpha = scale / (1.0 + g.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
    let mut quiet = 0;
    for _ in 0..20_000 {
        let mut accepted = None;
        let mut trial = alpha;
        while trial > 1e-16 * scale {
            let raw: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - trial * gi).collect();
            let xn = set.project(&raw);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let (fnew, gnew) = forecast_objective(scenario, &xn);
            if fnew <= f + 1e-4 * decrease {
                accepted = Some((xn, fnew, gnew, trial));
                break;
            }
            trial *= 0.5;
        }
        let Some((xn, fnew, gnew, used)) = accepted else { break };
        let step = xn.iter().zip(&x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        let gain = f - fnew;
        x = xn;
        f = fnew;
        g = gnew;
        alpha = (used * 2.0).min(1e6 * scale);
        if step <= 1e-12 * scale || gain <= 1e-13 * f.abs().max(1.0) {
            quiet += 1;
            if quiet >= 5 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    x
}

/// Step 1 sizes the VCCs on the forecast objective; step 2 lets the teams
/// settle under them.
pub fn sequential_optimize(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let set = FeasibleSet::new(scenario)?;
    let x_bar = minimize_forecast(scenario, &set);
    let matrices = GameMatrices::assemble(scenario)?;
    let eq = solve_game(&matrices, &x_bar)?;
    validate_allocation(&matrices.layout, matrices.volumes(), &eq.y_star, Some(&x_bar))?;
    let metrics = compute_metrics(scenario, &eq.y_star)?;
    Ok(BaselineResult {
        label: BaselineLabel::Sequential,
        x_used: x_bar,
        y: eq.y_star,
        metrics,
    })
}
