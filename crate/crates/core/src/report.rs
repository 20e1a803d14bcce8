//! Allocation metrics, migration-price sweeps and method comparisons.
//!
//! Wall times are reported as zero unless timing is requested, keeping the
//! emitted files byte-for-byte reproducible.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baselines::{naive_schedule, sequential_optimize};
use crate::bilevel::{run_big_hype, LeaderObjective};
use crate::game::{build_layout, validate_allocation, AllocationViolation};
use crate::scenario::Scenario;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(#[from] AllocationViolation),
    #[error("xi values must be a nonempty, nondecreasing list of nonnegative numbers")]
    InvalidXi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsBundle {
    pub carbon_total: f64,
    pub carbon_per_volume: f64,
    pub peak_price: f64,
    pub migration_cost: f64,
    pub waiting_total: f64,
    /// Population standard deviation of waiting time per unit volume.
    pub fairness: f64,
}

pub fn compute_metrics(scenario: &Scenario, y: &DVector<f64>) -> Result<MetricsBundle, ReportError> {
    let layout = build_layout(scenario);
    let volumes: Vec<f64> = scenario.jobs.iter().map(|j| j.volume).collect();
    validate_allocation(&layout, &volumes, y, None)?;
    let leader = LeaderObjective::new(scenario);
    let parts = leader.parts(&vec![0.0; layout.n_x()], y);

    let tn = layout.horizon as f64;
    let waits: Vec<f64> = scenario
        .jobs
        .iter()
        .enumerate()
        .map(|(i, job)| {
            let mut w = 0.0;
            for d in 0..layout.dc_count {
                for t in 0..layout.horizon {
                    w += job.priority * ((t + 1) as f64 / tn) * y[layout.y(i, d, t)];
                }
            }
            w
        })
        .collect();
    let waiting_total: f64 = waits.iter().sum();
    let ratios: Vec<f64> = waits.iter().zip(&volumes).map(|(w, v)| w / v).collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let fairness = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();

    // Tiny negative rounding on an otherwise nonnegative quantity is clipped.
    let clip = |v: f64| if v < 0.0 && v > -1e-9 { 0.0 } else { v };
    Ok(MetricsBundle {
        carbon_total: clip(parts.carbon),
        carbon_per_volume: clip(parts.carbon / scenario.total_volume()),
        peak_price: clip(parts.peak),
        migration_cost: clip(parts.migration),
        waiting_total: clip(waiting_total),
        fairness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bilevel,
    Naive,
    Sequential,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bilevel => "bilevel",
            Method::Naive => "naive",
            Method::Sequential => "sequential",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilevel" => Ok(Method::Bilevel),
            "naive" => Ok(Method::Naive),
            "sequential" => Ok(Method::Sequential),
            other => Err(format!("unknown method '{other}' (expected bilevel, naive or sequential)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }

    fn label(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed(_) => "failed",
        }
    }
}

/// Outcome of one method on one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct MethodRun {
    pub method: Method,
    pub xi: f64,
    pub status: RunStatus,
    pub metrics: Option<MetricsBundle>,
    pub x: Option<Vec<f64>>,
    #[serde(skip)]
    pub y: Option<DVector<f64>>,
    pub wall_time_s: f64,
}

pub fn run_method(scenario: &Scenario, method: Method, timing: bool) -> MethodRun {
    let start = Instant::now();
    let outcome: Result<(Vec<f64>, DVector<f64>, MetricsBundle), String> = match method {
        Method::Bilevel => run_big_hype(scenario, timing)
            .map_err(|e| e.to_string())
            .and_then(|out| {
                let m = compute_metrics(scenario, &out.equilibrium.y_star).map_err(|e| e.to_string())?;
                Ok((out.x, out.equilibrium.y_star, m))
            }),
        Method::Naive => naive_schedule(scenario)
            .map(|r| (r.x_used, r.y, r.metrics))
            .map_err(|e| e.to_string()),
        Method::Sequential => sequential_optimize(scenario)
            .map(|r| (r.x_used, r.y, r.metrics))
            .map_err(|e| e.to_string()),
    };
    let wall_time_s = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    match outcome {
        Ok((x, y, metrics)) => MethodRun {
            method,
            xi: scenario.params.xi,
            status: RunStatus::Ok,
            metrics: Some(metrics),
            x: Some(x),
            y: Some(y),
            wall_time_s,
        },
        Err(reason) => MethodRun {
            method,
            xi: scenario.params.xi,
            status: RunStatus::Failed(reason),
            metrics: None,
            x: None,
            y: None,
            wall_time_s,
        },
    }
}

/// One row per `xi`, each solved from a fresh start. Rows run in parallel and
/// keep input order; a failed row does not stop the others.
pub fn sweep_xi(
    scenario: &Scenario,
    xi_values: &[f64],
    method: Method,
    timing: bool,
) -> Result<Vec<MethodRun>, ReportError> {
    let valid = !xi_values.is_empty()
        && xi_values.iter().all(|x| x.is_finite() && *x >= 0.0)
        && xi_values.windows(2).all(|w| w[0] <= w[1]);
    if !valid {
        return Err(ReportError::InvalidXi);
    }
    Ok(xi_values
        .par_iter()
        .map(|&xi| {
            let s = scenario.with_params(scenario.params.with_xi(xi));
            run_method(&s, method, timing)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodDelta {
    pub baseline: Method,
    pub carbon_total: f64,
    pub carbon_per_volume: f64,
    pub peak_price: f64,
    pub migration_cost: f64,
    pub waiting_total: f64,
    pub fairness: f64,
    /// Carbon avoided by the bilevel scheme per unit of compute volume.
    pub carbon_savings_per_volume: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub scenario: String,
    pub xi: f64,
    pub total_volume: f64,
    pub runs: Vec<MethodRun>,
    /// `bilevel - baseline` for each baseline that succeeded alongside bilevel.
    pub deltas: Vec<MethodDelta>,
}

impl ComparisonReport {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.status.is_ok())
    }

    pub fn run(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

pub fn compare_methods(scenario: &Scenario, timing: bool) -> ComparisonReport {
    let methods = [Method::Bilevel, Method::Naive, Method::Sequential];
    let runs: Vec<MethodRun> = methods.par_iter().map(|&m| run_method(scenario, m, timing)).collect();
    let volume = scenario.total_volume();
    let mut deltas = Vec::new();
    if let Some(b) = runs[0].metrics {
        for run in &runs[1..] {
            if let Some(o) = run.metrics {
                deltas.push(MethodDelta {
                    baseline: run.method,
                    carbon_total: b.carbon_total - o.carbon_total,
                    carbon_per_volume: b.carbon_per_volume - o.carbon_per_volume,
                    peak_price: b.peak_price - o.peak_price,
                    migration_cost: b.migration_cost - o.migration_cost,
                    waiting_total: b.waiting_total - o.waiting_total,
                    fairness: b.fairness - o.fairness,
                    carbon_savings_per_volume: (o.carbon_total - b.carbon_total) / volume,
                });
            }
        }
    }
    ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        xi: scenario.params.xi,
        total_volume: volume,
        runs,
        deltas,
    }
}

pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "xi",
    "carbon_total",
    "carbon_per_volume",
    "peak_price",
    "migration_cost",
    "waiting_total",
    "fairness",
    "status",
    "wall_time_s",
];

pub fn runs_to_csv(runs: &[MethodRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in runs {
        let metric = |f: fn(&MetricsBundle) -> f64| r.metrics.as_ref().map_or(String::new(), |m| format!("{}", f(m)));
        w.write_record([
            r.method.to_string(),
            format!("{}", r.xi),
            metric(|m| m.carbon_total),
            metric(|m| m.carbon_per_volume),
            metric(|m| m.peak_price),
            metric(|m| m.migration_cost),
            metric(|m| m.waiting_total),
            metric(|m| m.fairness),
            r.status.label().to_string(),
            format!("{}", r.wall_time_s),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::scenario;
    use approx::assert_relative_eq;

    fn at_first_step(s: &Scenario) -> DVector<f64> {
        let l = build_layout(s);
        let mut y = DVector::zeros(l.n_y());
        for (i, j) in s.jobs.iter().enumerate() {
            y[l.y(i, j.home, 0)] = j.volume;
        }
        y
    }

    #[test]
    fn equal_completion_is_perfectly_fair() {
        let s = scenario(2, 2, &[(0, 1.0, 2.0), (1, 3.0, 2.0)], 5.0);
        let m = compute_metrics(&s, &at_first_step(&s)).unwrap();
        assert_eq!(m.fairness, 0.0);
        assert_relative_eq!(m.carbon_per_volume, 1.0);
    }

    #[test]
    fn waiting_time_formula() {
        let s = scenario(1, 2, &[(0, 1.0, 1.0)], 5.0);
        let m = compute_metrics(&s, &at_first_step(&s)).unwrap();
        assert_relative_eq!(m.waiting_total, 0.5);
    }

    #[test]
    fn infeasible_allocation_is_rejected() {
        let s = scenario(1, 2, &[(0, 1.0, 1.0)], 5.0);
        let y = DVector::zeros(build_layout(&s).n_y());
        assert!(matches!(compute_metrics(&s, &y), Err(ReportError::InfeasibleAllocation(_))));
    }

    #[test]
    fn metrics_are_idempotent() {
        let s = scenario(2, 2, &[(0, 1.0, 2.0), (1, 3.0, 1.0)], 5.0);
        let y = at_first_step(&s);
        let a = compute_metrics(&s, &y).unwrap();
        let b = compute_metrics(&s, &y).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn sweep_contract() {
        let mut s = scenario(1, 2, &[(0, 1.0, 1.0)], 5.0);
        s.params.k_max = 5;
        assert!(matches!(sweep_xi(&s, &[], Method::Bilevel, false), Err(ReportError::InvalidXi)));
        assert!(matches!(sweep_xi(&s, &[2.0, 1.0], Method::Bilevel, false), Err(ReportError::InvalidXi)));
        let rows = sweep_xi(&s, &[3.0], Method::Naive, false).unwrap();
        assert_eq!(rows.len(), 1);
        let csv = runs_to_csv(&rows);
        assert!(csv.starts_with("method,xi,carbon_total,carbon_per_volume,peak_price,migration_cost,waiting_total,fairness,status,wall_time_s\n"));
        assert!(csv.contains("naive,3,"));
    }

    #[test]
    fn failed_naive_keeps_other_methods() {
        let mut s = scenario(2, 2, &[(0, 3.0, 1.0)], 2.0);
        s.fleet.physical_capacity = vec![1.0, 10.0];
        s.params.k_max = 5;
        let report = compare_methods(&s, false);
        assert!(!report.run(Method::Naive).unwrap().status.is_ok());
        assert!(report.run(Method::Bilevel).unwrap().status.is_ok());
        assert!(report.run(Method::Sequential).unwrap().status.is_ok());
        assert!(!report.all_ok());
        assert!(runs_to_csv(&report.runs).contains("naive,1,,,,,,,failed,0"));
    }
}
