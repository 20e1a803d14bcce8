//! Lower-level allocation game and its eliminated surrogate QP.
//!
//! Every job `i` owns a block of `D*(2T-1)` coordinates: the allocations
//! `y[d][t]` followed by the transfers `z[d][t]`, `t < T-1`. For a foreign DC
//! `z[d][t]` is the volume migrated there for step `t+1`; for the home DC it is
//! the queue of unprocessed volume left after step `t`.
//!
//! The equalities are block-diagonal by job, so the null-space basis `F_T` and
//! the minimum-norm particular solution are computed job by job.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qp::{self, PreparedRows, QpError, QpFactor, QpSettings};
use crate::scenario::{write_atomic, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("equality system is inconsistent (residual {residual:.3e})")]
    InfeasibleEqualities { residual: f64 },
    #[error("allocation set is empty for this capacity vector: {0}")]
    Infeasible(String),
    #[error("equilibrium solver failed: {0}")]
    SolverFailure(String),
    #[error("capacity vector has length {found}, expected {expected}")]
    Shape { expected: usize, found: usize },
}

/// Index bookkeeping for the stacked decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionLayout {
    pub jobs: usize,
    pub dc_count: usize,
    pub horizon: usize,
    /// Home DC of each job.
    pub homes: Vec<usize>,
}

impl DecisionLayout {
    pub fn block_len(&self) -> usize {
        self.dc_count * (2 * self.horizon - 1)
    }

    pub fn n_y(&self) -> usize {
        self.jobs * self.block_len()
    }

    pub fn n_x(&self) -> usize {
        self.dc_count * self.horizon
    }

    pub fn block_offset(&self, job: usize) -> usize {
        job * self.block_len()
    }

    pub fn y(&self, job: usize, d: usize, t: usize) -> usize {
        debug_assert!(d < self.dc_count && t < self.horizon);
        self.block_offset(job) + d * self.horizon + t
    }

    /// Transfer after step `t`, `t < T-1`.
    pub fn z(&self, job: usize, d: usize, t: usize) -> usize {
        debug_assert!(d < self.dc_count && t + 1 < self.horizon);
        self.block_offset(job) + self.dc_count * self.horizon + d * (self.horizon - 1) + t
    }

    pub fn x(&self, d: usize, t: usize) -> usize {
        d * self.horizon + t
    }
}

pub fn build_layout(scenario: &Scenario) -> DecisionLayout {
    DecisionLayout {
        jobs: scenario.jobs.len(),
        dc_count: scenario.dc_count(),
        horizon: scenario.horizon,
        homes: scenario.jobs.iter().map(|j| j.home).collect(),
    }
}

fn job_equalities(
    layout: &DecisionLayout,
    job: usize,
    volume: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let (dn, tn) = (layout.dc_count, layout.horizon);
    let home = layout.homes[job];
    let off = layout.block_offset(job);
    let n = layout.block_len();
    let rows = 1 + (dn - 1) * (tn - 1) + (tn - 1) + (dn - 1);
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut r = 0;

    for d in 0..dn {
        for t in 0..tn {
            a[(r, layout.y(job, d, t) - off)] = 1.0;
        }
    }
    b[r] = volume;
    r += 1;

    for d in (0..dn).filter(|&d| d != home) {
        for t in 0..tn - 1 {
            a[(r, layout.y(job, d, t + 1) - off)] = 1.0;
            a[(r, layout.z(job, d, t) - off)] = -1.0;
            r += 1;
        }
    }

    for t in 0..tn - 1 {
        for l in 0..=t {
            a[(r, layout.y(job, home, l) - off)] = 1.0;
            for j in (0..dn).filter(|&j| j != home) {
                a[(r, layout.z(job, j, l) - off)] = 1.0;
            }
        }
        a[(r, layout.z(job, home, t) - off)] = 1.0;
        b[r] = volume;
        r += 1;
    }

    for d in (0..dn).filter(|&d| d != home) {
        a[(r, layout.y(job, d, 0) - off)] = 1.0;
        r += 1;
    }
    debug_assert_eq!(r, rows);
    (a, b)
}

/// Stacked equalities `A y = b`, block-diagonal by job.
pub fn assemble_equalities(scenario: &Scenario, layout: &DecisionLayout) -> (DMatrix<f64>, DVector<f64>) {
    let blocks: Vec<_> = (0..layout.jobs)
        .map(|i| job_equalities(layout, i, scenario.jobs[i].volume))
        .collect();
    let rows: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
    let mut a = DMatrix::zeros(rows, layout.n_y());
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for (i, (ai, bi)) in blocks.iter().enumerate() {
        a.view_mut((r, layout.block_offset(i)), ai.shape()).copy_from(ai);
        b.rows_mut(r, bi.len()).copy_from(bi);
        r += ai.nrows();
    }
    (a, b)
}

/// Inequalities `G y <= h + H x`: nonnegativity of every coordinate followed by
/// one coupling row per `(d, t)` in `x` order.
pub fn assemble_inequalities(layout: &DecisionLayout) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n_y = layout.n_y();
    let n_x = layout.n_x();
    let mut g = DMatrix::zeros(n_y + n_x, n_y);
    let mut hx = DMatrix::zeros(n_y + n_x, n_x);
    for k in 0..n_y {
        g[(k, k)] = -1.0;
    }
    for d in 0..layout.dc_count {
        for t in 0..layout.horizon {
            let row = n_y + layout.x(d, t);
            for i in 0..layout.jobs {
                g[(row, layout.y(i, d, t))] = 1.0;
            }
            hx[(row, layout.x(d, t))] = 1.0;
        }
    }
    (g, DVector::zeros(n_y + n_x), hx)
}

/// Linear cost: waiting `tau*(t/T)` on allocations, `tau*price` on migrations.
pub fn assemble_cost(scenario: &Scenario, layout: &DecisionLayout) -> DVector<f64> {
    let mut q = DVector::zeros(layout.n_y());
    let tn = layout.horizon as f64;
    for (i, job) in scenario.jobs.iter().enumerate() {
        for d in 0..layout.dc_count {
            for t in 0..layout.horizon {
                q[layout.y(i, d, t)] = job.priority * ((t + 1) as f64 / tn);
            }
            if d != job.home {
                let price = scenario.paths.price(job.home, d);
                for t in 0..layout.horizon - 1 {
                    q[layout.z(i, d, t)] = job.priority * price;
                }
            }
        }
    }
    q
}

/// Orthonormal null-space basis and minimum-norm solution of `A y = b`.
#[derive(Debug, Clone)]
pub struct Elimination {
    pub basis: DMatrix<f64>,
    pub particular: DVector<f64>,
    pub rank: usize,
}

const SNAP: f64 = 1e-14;

/// Rank-revealing elimination via SVD; dependent rows are dropped at `1e-10 * sigma_max`.
pub fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Elimination, GameError> {
    let (r, n) = a.shape();
    // Padding to at least n rows makes the thin SVD return a full V.
    let mut padded = DMatrix::zeros(r.max(n), n);
    padded.view_mut((0, 0), (r, n)).copy_from(a);
    let mut rhs = DVector::zeros(r.max(n));
    rhs.rows_mut(0, r).copy_from(b);
    let svd = padded.svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V requested");
    let sigma_max = svd.singular_values.max();
    let tol = 1e-10 * sigma_max;

    let mut particular = DVector::zeros(n);
    let mut null_cols = Vec::new();
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if sigma_max > 0.0 && s > tol {
            rank += 1;
            let coef = u.column(k).dot(&rhs) / s;
            particular.axpy(coef, &v_t.row(k).transpose(), 1.0);
        } else {
            null_cols.push(k);
        }
    }
    let mut basis = DMatrix::zeros(n, null_cols.len());
    for (j, &k) in null_cols.iter().enumerate() {
        basis.set_column(j, &v_t.row(k).transpose());
    }
    basis.apply(|f| {
        if f.abs() <= SNAP {
            *f = 0.0;
        }
    });
    particular.apply(|f| {
        if f.abs() <= SNAP * (1.0 + b.amax()) {
            *f = 0.0;
        }
    });

    let residual = (a * &particular - b).amax();
    if residual > 1e-8 * (1.0 + b.amax()) {
        return Err(GameError::InfeasibleEqualities { residual });
    }
    Ok(Elimination {
        basis,
        particular,
        rank,
    })
}

#[derive(Debug, Clone)]
pub struct GameMatrices {
    pub layout: DecisionLayout,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub h_x: DMatrix<f64>,
    pub q: DVector<f64>,
    pub f_t: DMatrix<f64>,
    /// Minimum-norm particular solution; doubles as the proximal anchor.
    pub y_dagger: DVector<f64>,
    pub g_tilde: DMatrix<f64>,
    pub h_tilde: DVector<f64>,
    pub epsilon: f64,
    pub lambda_tol: f64,
    /// `F_T' q / epsilon`, the linear term of the scaled reduced QP.
    linear: DVector<f64>,
    /// Rows of `G` handed to the QP; the rest duplicate a kept row.
    qp_rows: Vec<usize>,
    prepared: PreparedRows,
    /// First reduced column of each job's block of `F_T`.
    reduced_offsets: Vec<usize>,
    volumes: Vec<f64>,
    home_volume: Vec<f64>,
}

impl GameMatrices {
    pub fn assemble(scenario: &Scenario) -> Result<Self, GameError> {
        let layout = build_layout(scenario);
        let (a, b) = assemble_equalities(scenario, &layout);
        let (g, h, h_x) = assemble_inequalities(&layout);
        let q = assemble_cost(scenario, &layout);
        let (dn, tn) = (layout.dc_count, layout.horizon);
        let n_y = layout.n_y();

        let mut blocks = Vec::with_capacity(layout.jobs);
        for (i, job) in scenario.jobs.iter().enumerate() {
            let (ai, bi) = job_equalities(&layout, i, job.volume);
            let mut el = eliminate(&ai, &bi)?;
            // y[d][t+1] and z[d][t] coincide for foreign d; make their rows
            // bit-identical so the duplicated nonnegativity rows can be merged.
            let off = layout.block_offset(i);
            for d in (0..dn).filter(|&d| d != job.home) {
                for t in 0..tn - 1 {
                    let (ys, zs) = (layout.y(i, d, t + 1) - off, layout.z(i, d, t) - off);
                    let row = el.basis.row(zs).into_owned();
                    el.basis.set_row(ys, &row);
                    el.particular[ys] = el.particular[zs];
                }
            }
            blocks.push(el);
        }
        let n_red: usize = blocks.iter().map(|e| e.basis.ncols()).sum();
        let mut f_t = DMatrix::zeros(n_y, n_red);
        let mut y_dagger = DVector::zeros(n_y);
        let mut col = 0;
        let mut reduced_offsets = Vec::with_capacity(layout.jobs + 1);
        for (i, el) in blocks.iter().enumerate() {
            reduced_offsets.push(col);
            let off = layout.block_offset(i);
            f_t.view_mut((off, col), el.basis.shape()).copy_from(&el.basis);
            y_dagger.rows_mut(off, layout.block_len()).copy_from(&el.particular);
            col += el.basis.ncols();
        }
        reduced_offsets.push(col);

        // G F_T and h - G y_dagger, exploiting the structure of G.
        let n_g = g.nrows();
        let mut g_tilde = DMatrix::zeros(n_g, n_red);
        let mut h_tilde = DVector::zeros(n_g);
        for k in 0..n_y {
            g_tilde.set_row(k, &(-f_t.row(k)));
            h_tilde[k] = y_dagger[k];
        }
        for d in 0..dn {
            for t in 0..tn {
                let row = n_y + layout.x(d, t);
                let mut acc = g_tilde.row(row).into_owned();
                let mut rhs = 0.0;
                for i in 0..layout.jobs {
                    let k = layout.y(i, d, t);
                    acc += f_t.row(k);
                    rhs -= y_dagger[k];
                }
                g_tilde.set_row(row, &acc);
                h_tilde[row] = rhs;
            }
        }

        let mut duplicate = vec![false; n_g];
        for (i, job) in scenario.jobs.iter().enumerate() {
            for d in (0..dn).filter(|&d| d != job.home) {
                for t in 0..tn - 1 {
                    duplicate[layout.y(i, d, t + 1)] = true;
                }
            }
        }
        let qp_rows: Vec<usize> = (0..n_g).filter(|&k| !duplicate[k]).collect();
        let mut kept = DMatrix::zeros(qp_rows.len(), n_red);
        for (p, &k) in qp_rows.iter().enumerate() {
            kept.set_row(p, &g_tilde.row(k));
        }
        let prepared = PreparedRows::new(&kept);

        let epsilon = scenario.params.epsilon;
        let linear = f_t.tr_mul(&q) / epsilon;
        Ok(GameMatrices {
            home_volume: (0..dn).map(|d| scenario.home_volume(d)).collect(),
            volumes: scenario.jobs.iter().map(|j| j.volume).collect(),
            layout,
            a,
            b,
            g,
            h,
            h_x,
            q,
            f_t,
            y_dagger,
            g_tilde,
            h_tilde,
            epsilon,
            lambda_tol: scenario.params.lambda_tol,
            linear,
            qp_rows,
            prepared,
            reduced_offsets,
        })
    }

    /// `F_T * m`, using the block-diagonal structure of `F_T`.
    pub fn lift(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let bl = self.layout.block_len();
        let mut out = DMatrix::zeros(self.layout.n_y(), m.ncols());
        for i in 0..self.layout.jobs {
            let (c0, c1) = (self.reduced_offsets[i], self.reduced_offsets[i + 1]);
            if c1 == c0 {
                continue;
            }
            let off = self.layout.block_offset(i);
            let block = self.f_t.view((off, c0), (bl, c1 - c0));
            out.view_mut((off, 0), (bl, m.ncols())).copy_from(&(block * m.rows(c0, c1 - c0)));
        }
        out
    }

    /// Minimum-norm `W` with `G_tilde[rows] W = h_x[rows]`, reusing the
    /// factorisation of a solve whose working set contains `rows`.
    pub(crate) fn active_solve(&self, factor: &QpFactor, rows: &[usize]) -> Option<DMatrix<f64>> {
        let mut wanted: Vec<usize> = Vec::with_capacity(rows.len());
        for &k in rows {
            wanted.push(self.qp_rows.binary_search(&k).ok()?);
        }
        wanted.sort_unstable();
        let n_x = self.layout.n_x();
        qp::solve_on_working_set(
            &self.prepared,
            factor,
            &wanted,
            |p| self.h_x.row(self.qp_rows[p]).iter().copied().collect(),
            n_x,
        )
    }

    pub fn n_reduced(&self) -> usize {
        self.f_t.ncols()
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// `h_tilde + H x`.
    pub fn rhs(&self, x: &[f64]) -> DVector<f64> {
        let n_y = self.layout.n_y();
        let mut r = self.h_tilde.clone();
        for (j, &xj) in x.iter().enumerate() {
            r[n_y + j] += xj;
        }
        r
    }

    /// Sum of team objectives `q'y + eps/2 |y - y_dagger|^2`.
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        self.q.dot(y) + 0.5 * self.epsilon * (y - &self.y_dagger).norm_squared()
    }

    /// Stacked pseudo-gradient: each team's gradient of its own objective.
    pub fn pseudo_gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.q + (y - &self.y_dagger) * self.epsilon
    }

    /// Exact emptiness test for the allocation set at `x`.
    ///
    /// At the first step only home volume can run, so DC `d` absorbs at most
    /// `min(x[d][0], V_d)`; afterwards every job can reach every DC.
    pub fn certify_feasible(&self, x: &[f64]) -> Result<(), GameError> {
        let (dn, tn) = (self.layout.dc_count, self.layout.horizon);
        let total: f64 = self.volumes.iter().sum();
        let tol = 1e-9 * (1.0 + total);
        if let Some(j) = x.iter().position(|&v| !(v >= -tol) || !v.is_finite()) {
            return Err(GameError::Infeasible(format!(
                "capacity entry {j} is negative or not finite ({})",
                x[j]
            )));
        }
        if tn == 1 {
            for d in 0..dn {
                if x[d] < self.home_volume[d] - tol {
                    return Err(GameError::Infeasible(format!(
                        "single-step horizon needs x[{}] >= {}",
                        d + 1,
                        self.home_volume[d]
                    )));
                }
            }
            return Ok(());
        }
        let mut reachable = 0.0;
        for d in 0..dn {
            reachable += x[self.layout.x(d, 0)].min(self.home_volume[d]);
            for t in 1..tn {
                reachable += x[self.layout.x(d, t)];
            }
        }
        if reachable < total - tol {
            return Err(GameError::Infeasible(format!(
                "usable capacity {reachable} is below total volume {total}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub y_star: DVector<f64>,
    pub y_tilde_star: DVector<f64>,
    /// Multipliers of the rows of `G_tilde`, on the scale of the team objectives.
    pub lambda: DVector<f64>,
    pub active_set: Vec<usize>,
    /// Rows with vanishing slack whose multiplier is below the threshold.
    pub weakly_active: Vec<usize>,
    pub qp_status: QpStatus,
    pub objective_value: f64,
    /// Sorted rows of the final QP working set.
    pub working_set: Vec<usize>,
    /// Factorisation to hot-start the next solve with.
    pub factor: QpFactor,
    pub qp_iterations: usize,
    pub warm_started: bool,
}

impl EquilibriumResult {
    pub fn degenerate(&self) -> bool {
        !self.weakly_active.is_empty()
    }
}

pub fn solve_game(matrices: &GameMatrices, x: &[f64]) -> Result<EquilibriumResult, GameError> {
    solve_game_warm(matrices, x, None)
}

/// Solves the reduced QP, hot-starting from a previous solve's factorisation.
pub fn solve_game_warm(
    matrices: &GameMatrices,
    x: &[f64],
    warm: Option<&QpFactor>,
) -> Result<EquilibriumResult, GameError> {
    let n_x = matrices.layout.n_x();
    if x.len() != n_x {
        return Err(GameError::Shape {
            expected: n_x,
            found: x.len(),
        });
    }
    matrices.certify_feasible(x)?;

    let full_rhs = matrices.rhs(x);
    let rhs = DVector::from_iterator(matrices.qp_rows.len(), matrices.qp_rows.iter().map(|&k| full_rhs[k]));
    let sol = qp::solve(&matrices.prepared, &rhs, &matrices.linear, warm, QpSettings::default()).map_err(|e| match e {
        QpError::Infeasible { row } => GameError::Infeasible(format!(
            "equilibrium QP reported row {} infeasible",
            matrices.qp_rows[row]
        )),
        other => GameError::SolverFailure(other.to_string()),
    })?;

    let y_tilde = sol.w;
    let y_star = &matrices.f_t * &y_tilde + &matrices.y_dagger;
    let n_g = matrices.g_tilde.nrows();
    let mut lambda = DVector::zeros(n_g);
    for (p, &k) in matrices.qp_rows.iter().enumerate() {
        lambda[k] = matrices.epsilon * sol.multipliers[p];
    }
    let threshold = matrices.lambda_tol * (1.0 + lambda.amax());
    let slack = &full_rhs - &matrices.g_tilde * &y_tilde;
    let slack_tol = 1e-9 * (1.0 + full_rhs.amax());
    let mut active_set = Vec::new();
    let mut weakly_active = Vec::new();
    for &k in &matrices.qp_rows {
        if lambda[k] > threshold {
            active_set.push(k);
        } else if slack[k].abs() <= slack_tol && matrices.g_tilde.row(k).amax() > 0.0 {
            weakly_active.push(k);
        }
    }
    let objective_value = matrices.objective(&y_star);
    Ok(EquilibriumResult {
        y_star,
        y_tilde_star: y_tilde,
        lambda,
        active_set,
        weakly_active,
        qp_status: QpStatus::Solved,
        objective_value,
        working_set: sol.working_set.iter().map(|&p| matrices.qp_rows[p]).collect(),
        factor: sol.factor,
        qp_iterations: sol.iterations,
        warm_started: sol.warm_started,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationViolation {
    #[error("job {job}: allocated volume {found} differs from {expected}")]
    Conservation { job: usize, expected: f64, found: f64 },
    #[error("job {job}: queue balance after step {step} is off by {residual:.3e}")]
    Queue { job: usize, step: usize, residual: f64 },
    #[error("job {job}: migration into DC {dc} before step {step} does not match its allocation")]
    Migration { job: usize, dc: usize, step: usize },
    #[error("job {job}: foreign DC {dc} used at the first step")]
    FirstStep { job: usize, dc: usize },
    #[error("coordinate {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("DC {dc} at step {step} carries {load}, above capacity {cap}")]
    Capacity { dc: usize, step: usize, load: f64, cap: f64 },
    #[error("vector has length {found}, expected {expected}")]
    Shape { expected: usize, found: usize },
}

/// Checks an allocation against conservation, migration, queue, sign and
/// (when `x` is given) capacity constraints. Job and DC ids are one-based.
pub fn validate_allocation(
    layout: &DecisionLayout,
    volumes: &[f64],
    y: &DVector<f64>,
    x: Option<&[f64]>,
) -> Result<(), AllocationViolation> {
    if y.len() != layout.n_y() {
        return Err(AllocationViolation::Shape {
            expected: layout.n_y(),
            found: y.len(),
        });
    }
    let (dn, tn) = (layout.dc_count, layout.horizon);
    for (i, &v) in volumes.iter().enumerate() {
        let home = layout.homes[i];
        let tol = 1e-8 * v.max(1.0);
        let total: f64 = (0..dn).flat_map(|d| (0..tn).map(move |t| (d, t))).map(|(d, t)| y[layout.y(i, d, t)]).sum();
        if (total - v).abs() > tol {
            return Err(AllocationViolation::Conservation {
                job: i + 1,
                expected: v,
                found: total,
            });
        }
        let mut processed = 0.0;
        for t in 0..tn - 1 {
            processed += y[layout.y(i, home, t)];
            for j in (0..dn).filter(|&j| j != home) {
                processed += y[layout.z(i, j, t)];
            }
            let residual = v - processed - y[layout.z(i, home, t)];
            if residual.abs() > tol {
                return Err(AllocationViolation::Queue {
                    job: i + 1,
                    step: t + 1,
                    residual,
                });
            }
        }
        for d in (0..dn).filter(|&d| d != home) {
            if y[layout.y(i, d, 0)].abs() > tol {
                return Err(AllocationViolation::FirstStep { job: i + 1, dc: d + 1 });
            }
            for t in 0..tn - 1 {
                if (y[layout.y(i, d, t + 1)] - y[layout.z(i, d, t)]).abs() > tol {
                    return Err(AllocationViolation::Migration {
                        job: i + 1,
                        dc: d + 1,
                        step: t + 2,
                    });
                }
            }
        }
    }
    // Inequalities share the equilibrium's primal tolerance `1e-6 * (1 + scale)`.
    let ineq_tol = 1e-6 * (1.0 + volumes.iter().fold(0.0f64, |m, &v| m.max(v)));
    for (k, &v) in y.iter().enumerate() {
        if v < -ineq_tol {
            return Err(AllocationViolation::Negative { index: k, value: v });
        }
    }
    if let Some(x) = x {
        for d in 0..dn {
            for t in 0..tn {
                let load: f64 = (0..layout.jobs).map(|i| y[layout.y(i, d, t)]).sum();
                let cap = x[layout.x(d, t)];
                if load > cap + ineq_tol {
                    return Err(AllocationViolation::Capacity {
                        dc: d + 1,
                        step: t + 1,
                        load,
                        cap,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Aggregate load `L[d][t] = sum_i y[i][d][t]`, flattened like `x`.
pub fn aggregate_load(layout: &DecisionLayout, y: &DVector<f64>) -> Vec<f64> {
    let mut load = vec![0.0; layout.n_x()];
    for i in 0..layout.jobs {
        for d in 0..layout.dc_count {
            for t in 0..layout.horizon {
                load[layout.x(d, t)] += y[layout.y(i, d, t)];
            }
        }
    }
    load
}

/// Dense matrix in MatrixMarket coordinate format (nonzeros only, one-based).
pub fn matrix_market(m: &DMatrix<f64>) -> String {
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.nrows(), m.ncols(), nnz);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
    }
    s
}

fn vector_market(v: &DVector<f64>) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} 1", v.len());
    for x in v.iter() {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

/// Writes `A, b, G, h, H, q` and optionally the solution into `dir`.
pub fn dump_debug(dir: &Path, m: &GameMatrices, eq: Option<&EquilibriumResult>) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("A.mtx"), matrix_market(&m.a).as_bytes())?;
    write_atomic(&dir.join("b.mtx"), vector_market(&m.b).as_bytes())?;
    write_atomic(&dir.join("G.mtx"), matrix_market(&m.g).as_bytes())?;
    write_atomic(&dir.join("h.mtx"), vector_market(&m.h).as_bytes())?;
    write_atomic(&dir.join("H.mtx"), matrix_market(&m.h_x).as_bytes())?;
    write_atomic(&dir.join("q.mtx"), vector_market(&m.q).as_bytes())?;
    if let Some(eq) = eq {
        write_atomic(&dir.join("y_star.mtx"), vector_market(&eq.y_star).as_bytes())?;
        write_atomic(&dir.join("lambda.mtx"), vector_market(&eq.lambda).as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fleet::{DataCenterFleet, Edge};
    use crate::grid::Grid;
    use crate::params::SolverParams;
    use crate::scenario::ComputeJob;
    use approx::assert_relative_eq;

    pub(crate) fn scenario(dn: usize, tn: usize, jobs: &[(usize, f64, f64)], cap: f64) -> Scenario {
        let edges = (1..dn).map(|d| Edge { a: d - 1, b: d, price: 1.0 }).collect();
        let fleet = DataCenterFleet::new(dn, edges, vec![cap; dn]).unwrap();
        let jobs = jobs
            .iter()
            .enumerate()
            .map(|(k, &(home, volume, priority))| ComputeJob {
                id: k as u64 + 1,
                home,
                volume,
                priority,
            })
            .collect();
        Scenario::new(
            "t",
            fleet,
            None,
            jobs,
            tn,
            Grid::from_fn(dn, tn, |_, _| 1.0),
            Grid::zeros(dn, tn),
            SolverParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn stacked_dimension() {
        let s = scenario(2, 2, &[(0, 1.0, 1.0)], 5.0);
        assert_eq!(build_layout(&s).n_y(), 6);
        let s = scenario(12, 5, &[(0, 1.0, 1.0), (3, 1.0, 1.0), (7, 1.0, 1.0)], 5.0);
        assert_eq!(build_layout(&s).n_y(), 324);
        let s = scenario(1, 1, &[(0, 1.0, 1.0)], 5.0);
        assert_eq!(build_layout(&s).n_y(), 1);
    }

    #[test]
    fn layout_is_a_bijection() {
        let s = scenario(3, 4, &[(0, 1.0, 1.0), (2, 1.0, 1.0)], 5.0);
        let l = build_layout(&s);
        let mut seen = vec![false; l.n_y()];
        for i in 0..l.jobs {
            for d in 0..3 {
                for t in 0..4 {
                    seen[l.y(i, d, t)] = true;
                    if t < 3 {
                        seen[l.z(i, d, t)] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn equality_row_counts() {
        let s = scenario(2, 2, &[(0, 1.0, 1.0)], 5.0);
        let (a, _) = assemble_equalities(&s, &build_layout(&s));
        assert_eq!(a.shape(), (4, 6));
        let s = scenario(1, 4, &[(0, 1.0, 1.0)], 5.0);
        let (a, _) = assemble_equalities(&s, &build_layout(&s));
        assert_eq!(a.nrows(), 4);
    }

    #[test]
    fn run_everything_at_home_first_is_feasible() {
        let s = scenario(3, 3, &[(1, 2.5, 1.0), (0, 1.0, 3.0)], 5.0);
        let l = build_layout(&s);
        let (a, b) = assemble_equalities(&s, &l);
        let mut y = DVector::zeros(l.n_y());
        for (i, j) in s.jobs.iter().enumerate() {
            y[l.y(i, j.home, 0)] = j.volume;
        }
        assert_relative_eq!((a * &y - b).amax(), 0.0);
        validate_allocation(&l, &[2.5, 1.0], &y, None).unwrap();
    }

    #[test]
    fn inequality_rows_and_coupling() {
        let s = scenario(2, 2, &[(0, 1.0, 1.0)], 5.0);
        let l = build_layout(&s);
        let (g, h, hx) = assemble_inequalities(&l);
        assert_eq!(g.nrows(), 10);
        assert_eq!(h.len(), 10);
        for row in 0..6 {
            assert_eq!(hx.row(row).amax(), 0.0);
        }
        for row in 6..10 {
            assert_eq!(hx.row(row).sum(), 1.0);
        }

        let s = scenario(1, 2, &[(0, 1.0, 1.0), (0, 1.0, 1.0)], 5.0);
        let l = build_layout(&s);
        let (g, _, _) = assemble_inequalities(&l);
        let row = l.n_y() + l.x(0, 0);
        assert_eq!(g[(row, l.y(0, 0, 0))], 1.0);
        assert_eq!(g[(row, l.y(1, 0, 0))], 1.0);
    }

    #[test]
    fn cost_coefficients() {
        let s = scenario(2, 4, &[(0, 1.0, 2.0)], 5.0);
        let l = build_layout(&s);
        let q = assemble_cost(&s, &l);
        assert_relative_eq!(q[l.y(0, 0, 1)], 1.0);
        assert_eq!(q[l.z(0, 0, 1)], 0.0);

        let mut s = scenario(2, 3, &[(0, 1.0, 3.0)], 5.0);
        s.fleet.edges[0].price = 2.0;
        s.paths = crate::fleet::PathTable::new(&s.fleet);
        let l = build_layout(&s);
        assert_relative_eq!(assemble_cost(&s, &l)[l.z(0, 1, 0)], 6.0);
    }

    #[test]
    fn eliminate_single_constraint() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let el = eliminate(&a, &DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(el.particular, DVector::from_vec(vec![0.5, 0.5]), epsilon = 1e-14);
        assert_eq!(el.basis.ncols(), 1);
        let f = el.basis.column(0);
        assert_relative_eq!(f[0].abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(f[0], -f[1], epsilon = 1e-14);
    }

    #[test]
    fn eliminate_rejects_inconsistent_duplicates() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = eliminate(&a, &DVector::from_vec(vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, GameError::InfeasibleEqualities { .. }));
        // Consistent duplicates are dropped silently.
        let el = eliminate(&a, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(el.rank, 1);
    }

    #[test]
    fn assembled_basis_is_orthonormal_null_space() {
        let s = scenario(3, 4, &[(0, 2.0, 1.0), (2, 1.5, 2.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        assert!((&m.a * &m.f_t).amax() <= 1e-10 * m.a.amax());
        let gram = m.f_t.tr_mul(&m.f_t);
        assert!((gram - DMatrix::identity(m.n_reduced(), m.n_reduced())).amax() <= 1e-10);
        assert!((&m.a * &m.y_dagger - &m.b).amax() <= 1e-8 * m.b.amax());
        assert!((&m.g_tilde - &m.g * &m.f_t).amax() <= 1e-12);
        assert!((&m.h_tilde - (&m.h - &m.g * &m.y_dagger)).amax() <= 1e-12);
    }

    #[test]
    fn single_job_prefers_the_first_step() {
        let s = scenario(1, 2, &[(0, 1.0, 1.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &[1.0, 1.0]).unwrap();
        let l = &m.layout;
        assert_relative_eq!(eq.y_star[l.y(0, 0, 0)], 1.0, epsilon = 1e-6);
        assert_relative_eq!(eq.y_star[l.y(0, 0, 1)], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn binding_capacity_pushes_volume_later() {
        let s = scenario(1, 2, &[(0, 1.0, 1.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &[0.4, 1.0]).unwrap();
        let l = &m.layout;
        assert_relative_eq!(eq.y_star[l.y(0, 0, 0)], 0.4, epsilon = 1e-6);
        assert_relative_eq!(eq.y_star[l.y(0, 0, 1)], 0.6, epsilon = 1e-6);
        assert!(eq.active_set.contains(&(l.n_y() + l.x(0, 0))));
        validate_allocation(l, m.volumes(), &eq.y_star, Some(&[0.4, 1.0])).unwrap();
    }

    #[test]
    fn higher_priority_job_goes_first() {
        let s = scenario(1, 2, &[(0, 1.0, 4.0), (0, 1.0, 1.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &[1.0, 1.0]).unwrap();
        let l = &m.layout;
        assert_relative_eq!(eq.y_star[l.y(0, 0, 0)], 1.0, epsilon = 1e-6);
        assert_relative_eq!(eq.y_star[l.y(1, 0, 1)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn empty_allocation_set_is_certified() {
        let s = scenario(2, 2, &[(0, 1.0, 1.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        // Volume cannot leave the home DC at the first step.
        assert!(matches!(solve_game(&m, &[0.0, 0.0, 1.0, 0.0]), Err(GameError::Infeasible(_))));
        assert!(solve_game(&m, &[0.0, 0.5, 0.0, 0.5]).is_ok());
        assert!(matches!(solve_game(&m, &[1.0; 3]), Err(GameError::Shape { .. })));
    }

    #[test]
    fn warm_start_reproduces_cold_solution() {
        let s = scenario(2, 3, &[(0, 2.0, 2.0), (1, 1.0, 1.0)], 5.0);
        let m = GameMatrices::assemble(&s).unwrap();
        let x = [1.0, 0.5, 0.8, 0.3, 0.7, 0.6];
        let cold = solve_game(&m, &x).unwrap();
        let warm = solve_game_warm(&m, &x, Some(&cold.factor)).unwrap();
        assert!(warm.warm_started);
        assert!((&warm.y_star - &cold.y_star).amax() <= 1e-9);
    }

    #[test]
    fn matrix_market_lists_nonzeros() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let s = matrix_market(&m);
        assert!(s.contains("2 2 2\n"));
        assert!(s.contains("2 2 -2e0"));
    }
}
