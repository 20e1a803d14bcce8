//! Jacobian of the equilibrium with respect to the capacity vector.
//!
//! On a fixed active set `a` the reduced KKT differential reads
//! `eps*dy + G_a' dlam = 0`, `G_a dy = H_a dx`. The first equation puts `dy`
//! in the row space of `G_a`, so `dy = G_a^+ H_a dx`. The solver's own
//! factorisation is reused when it covers the active rows; otherwise one QR
//! factorisation of `G_a'` serves all columns.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::game::{solve_game_warm, EquilibriumResult, GameError, GameMatrices, QpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("equilibrium was not solved")]
    NotSolved,
}

#[derive(Debug, Clone)]
pub struct SensitivityResult {
    /// `d y_tilde / d x`, `n_reduced x n_x`.
    pub jacobian_reduced: DMatrix<f64>,
    /// `F_T * jacobian_reduced`, `n_y x n_x`.
    pub jacobian_full: DMatrix<f64>,
    pub active_rows: Vec<usize>,
    /// Weakly active rows were present, or the active rows were rank deficient.
    pub degenerate: bool,
}

pub fn compute_sensitivity(
    matrices: &GameMatrices,
    eq: &EquilibriumResult,
) -> Result<SensitivityResult, SensitivityError> {
    if eq.qp_status != QpStatus::Solved {
        return Err(SensitivityError::NotSolved);
    }
    let n_red = matrices.n_reduced();
    let n_x = matrices.layout.n_x();
    let rows = &eq.active_set;
    let na = rows.len();
    let mut degenerate = eq.degenerate();

    let fast = if na == 0 { None } else { matrices.active_solve(&eq.factor, rows) };
    let jacobian_reduced = if na == 0 {
        DMatrix::zeros(n_red, n_x)
    } else if let Some(j) = fast {
        j
    } else {
        let mut gt = DMatrix::zeros(n_red, na);
        let mut ha = DMatrix::zeros(na, n_x);
        for (j, &k) in rows.iter().enumerate() {
            gt.set_column(j, &matrices.g_tilde.row(k).transpose());
            ha.set_row(j, &matrices.h_x.row(k));
        }
        match factor_solve(&gt, &ha) {
            Some(j) => j,
            None => {
                degenerate = true;
                let pinv = gt
                    .transpose()
                    .pseudo_inverse(1e-10 * gt.amax().max(1.0))
                    .expect("nonnegative tolerance");
                pinv * ha
            }
        }
    };
    let jacobian_full = matrices.lift(&jacobian_reduced);
    Ok(SensitivityResult {
        jacobian_reduced,
        jacobian_full,
        active_rows: rows.clone(),
        degenerate,
    })
}

/// `Q R^{-T} H` from `G_a' = Q R`; `None` when `G_a` is rank deficient.
fn factor_solve(gt: &DMatrix<f64>, ha: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, na) = gt.shape();
    if na > n {
        return None;
    }
    let qr = gt.clone().qr();
    let r = qr.r();
    let scale = gt.column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if (0..na).any(|i| r[(i, i)].abs() <= 1e-10 * scale) {
        return None;
    }
    let w = r.tr_solve_upper_triangular(ha)?;
    Some(qr.q() * w)
}

/// Central differences of `y_star` in each coordinate of `x`.
pub fn finite_difference_jacobian(
    matrices: &GameMatrices,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>, GameError> {
    let n_x = x.len();
    let mut jac = DMatrix::zeros(matrices.layout.n_y(), n_x);
    let mut xp = x.to_vec();
    for j in 0..n_x {
        xp[j] = x[j] + h;
        let plus = solve_game_warm(matrices, &xp, None)?;
        xp[j] = x[j] - h;
        let minus = solve_game_warm(matrices, &xp, None)?;
        xp[j] = x[j];
        jac.set_column(j, &((plus.y_star - minus.y_star) / (2.0 * h)));
    }
    Ok(jac)
}
