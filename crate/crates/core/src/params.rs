//! Tunable parameters shared by the equilibrium, bilevel and baseline solvers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `alpha0 / (k + 1)^decay`
    Diminishing,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Weight of the proximal term in every team's objective.
    pub epsilon: f64,
    /// Exponent of the peak-shaving norm. Must be an even integer >= 2.
    pub p: u32,
    /// Weight on the operator's migration cost.
    pub xi: f64,
    /// Coefficient of the conditioning term `1/2 * 1'x`.
    pub uniform_weight: f64,
    /// Initial step; `None` selects `0.1 * |x_max|_inf / (1 + |grad_0|_inf)`.
    pub alpha0: Option<f64>,
    pub decay: f64,
    pub step_rule: StepRule,
    pub k_max: usize,
    /// Relative tolerance on `|x^{k+1} - x^k|_inf`.
    pub tol_x: f64,
    /// Relative multiplier threshold for active-set extraction.
    pub lambda_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 2e-8,
            p: 6,
            xi: 1.0,
            uniform_weight: 1.0,
            alpha0: None,
            decay: 0.51,
            step_rule: StepRule::Diminishing,
            k_max: 500,
            tol_x: 1e-5,
            lambda_tol: 1e-7,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.p < 2 || self.p % 2 != 0 {
            return Err(format!("p must be an even integer >= 2, got {}", self.p));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(format!("xi must be nonnegative, got {}", self.xi));
        }
        if !(self.uniform_weight.is_finite() && self.uniform_weight >= 0.0) {
            return Err(format!(
                "uniform_weight must be nonnegative, got {}",
                self.uniform_weight
            ));
        }
        if let Some(a) = self.alpha0 {
            if !(a.is_finite() && a > 0.0) {
                return Err(format!("alpha0 must be positive, got {a}"));
            }
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(format!("decay must be nonnegative, got {}", self.decay));
        }
        if !(self.tol_x.is_finite() && self.tol_x >= 0.0) {
            return Err(format!("tol_x must be nonnegative, got {}", self.tol_x));
        }
        if !(self.lambda_tol.is_finite() && self.lambda_tol > 0.0) {
            return Err(format!("lambda_tol must be positive, got {}", self.lambda_tol));
        }
        Ok(())
    }

    pub fn with_xi(&self, xi: f64) -> Self {
        SolverParams { xi, ..self.clone() }
    }
}
