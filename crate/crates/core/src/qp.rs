//! Dense dual active-set solver for strictly convex QPs with identity Hessian:
//!
//! ```text
//!     minimize    1/2 |w|^2 + c'w
//!     subject to  N w <= r
//! ```
//!
//! This is the Goldfarb-Idnani method specialised to `Q = I`, so the initial
//! factor `J = L^{-T}` is the identity. Rows are normalised up front and zero
//! rows are screened out.
//!
//! When `c` is large (small proximal weights), the iterates start far from the
//! feasible region and rounding accumulates. After the active-set loop
//! terminates the solution is recomputed from the working set alone
//! ("polished"), which makes the result depend on `r` only through
//! `C_W^+ r_W`. Working sets are also accepted as warm starts: a guessed set
//! is used only if the recomputed point passes the KKT check.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraints are infeasible (detected at row {row})")]
    Infeasible { row: usize },
    #[error("active-set iteration limit {0} reached")]
    MaxIterations(usize),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}

/// Normalised constraint rows, prepared once per constraint matrix.
#[derive(Debug, Clone)]
pub struct PreparedRows {
    /// Unit-norm rows, one per kept constraint.
    mat: DMatrix<f64>,
    /// Original row index of each kept row.
    original: Vec<usize>,
    norms: Vec<f64>,
    /// Original rows whose norm vanished.
    zero_rows: Vec<usize>,
    /// Kept position of each original row, if kept.
    position: Vec<Option<usize>>,
}

const ZERO_ROW: f64 = 1e-12;
const DEPENDENT: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

impl PreparedRows {
    pub fn new(rows: &DMatrix<f64>) -> Self {
        let (k, m) = rows.shape();
        let mut original = Vec::new();
        let mut norms = Vec::new();
        let mut zero_rows = Vec::new();
        let mut position = vec![None; k];
        for i in 0..k {
            let nrm = rows.row(i).norm();
            if nrm <= ZERO_ROW {
                zero_rows.push(i);
            } else {
                position[i] = Some(original.len());
                original.push(i);
                norms.push(nrm);
            }
        }
        let mut mat = DMatrix::zeros(original.len(), m);
        for (p, &i) in original.iter().enumerate() {
            mat.set_row(p, &(rows.row(i) / norms[p]));
        }
        PreparedRows {
            mat,
            original,
            norms,
            zero_rows,
            position,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.position.len()
    }

    fn scaled_rhs(&self, rhs: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.original.len(),
            self.original.iter().zip(&self.norms).map(|(&i, &n)| rhs[i] / n),
        )
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub w: DVector<f64>,
    /// Multipliers for the original (unnormalised) rows.
    pub multipliers: DVector<f64>,
    /// Sorted original indices of the final working set.
    pub working_set: Vec<usize>,
    pub iterations: usize,
    pub warm_started: bool,
    pub factor: QpFactor,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iterations: 100_000,
        }
    }
}

struct Tolerances {
    /// Constraint violation accepted in the final answer.
    feasibility: f64,
    /// Violation threshold while far from the solution.
    loose: f64,
}

impl Tolerances {
    fn new(r: &DVector<f64>, c: &DVector<f64>) -> Self {
        let tight = 1e-10 * (1.0 + r.amax());
        let noise = f64::EPSILON * c.amax();
        Tolerances {
            feasibility: tight + 16.0 * noise,
            loose: tight + 64.0 * noise,
        }
    }
}

/// Minimiser of the equality-constrained subproblem on a working set.
struct SubspacePoint {
    w: DVector<f64>,
    mu: DVector<f64>,
}

/// Solves `min 1/2|w|^2 + c'w s.t. C_W w = r_W` through a QR factorisation of `C_W'`.
fn subspace_solve(
    mat: &DMatrix<f64>,
    r: &DVector<f64>,
    c: &DVector<f64>,
    set: &[usize],
) -> Option<SubspacePoint> {
    let m = mat.ncols();
    if set.is_empty() {
        return Some(SubspacePoint {
            w: -c,
            mu: DVector::zeros(0),
        });
    }
    if set.len() > m {
        return None;
    }
    // Square padding makes the QR return the full orthogonal factor; its
    // trailing columns span the null space of C_W.
    let nw = set.len();
    let mut ct = DMatrix::zeros(m, m);
    for (j, &k) in set.iter().enumerate() {
        ct.set_column(j, &mat.row(k).transpose());
    }
    let qr = ct.qr();
    let q = qr.q();
    let rr = qr.r().view((0, 0), (nw, nw)).into_owned();
    if (0..nw).any(|i| rr[(i, i)].abs() <= RANK_TOL) {
        return None;
    }
    let q1 = q.columns(0, nw);
    let q2 = q.columns(nw, m - nw);
    let rw = DVector::from_iterator(nw, set.iter().map(|&k| r[k]));
    let u = rr.tr_solve_upper_triangular(&rw)?;
    let qc = q1.tr_mul(c);
    let w = &q1 * &u - &q2 * q2.tr_mul(c);
    let mu = -rr.solve_upper_triangular(&(&u + &qc))?;
    Some(SubspacePoint { w, mu })
}

fn max_violation(mat: &DMatrix<f64>, r: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let s = r - mat * w;
    s.iter().fold(0.0f64, |acc, &v| acc.max(-v))
}

/// Factorisation left behind by a solve; reusable while the constraint
/// matrix stays fixed and only the right-hand side moves.
#[derive(Debug, Clone)]
pub struct QpFactor {
    active: Vec<usize>,
    jmat: DMatrix<f64>,
    rmat: DMatrix<f64>,
    /// Consecutive hot starts since the last cold factorisation.
    generation: usize,
}

/// Hot starts allowed before the factorisation is rebuilt from scratch.
const MAX_GENERATIONS: usize = 64;

/// Solves the QP, hot-starting from `start` when given.
///
/// A cold solve finishes with a QR-based recomputation on the sorted working
/// set, so its output depends only on that set and `r`. A hot solve reuses the
/// previous factorisation and finishes with the equivalent O(m^2) update.
pub fn solve(
    rows: &PreparedRows,
    rhs: &DVector<f64>,
    c: &DVector<f64>,
    start: Option<&QpFactor>,
    settings: QpSettings,
) -> Result<QpSolution, QpError> {
    assert_eq!(rhs.len(), rows.n_rows(), "rhs length must match row count");
    assert_eq!(c.len(), rows.dim(), "linear term length must match dimension");
    let r = rows.scaled_rhs(rhs);
    let tol = Tolerances::new(&r, c);

    for &z in &rows.zero_rows {
        if rhs[z] < -tol.feasibility {
            return Err(QpError::Infeasible { row: z });
        }
    }

    if let Some(f) = start.filter(|f| f.generation < MAX_GENERATIONS && f.jmat.nrows() == rows.dim()) {
        let mut solver = DualActiveSet::from_factor(&rows.mat, &r, c, f);
        let settled = (|| -> Result<bool, QpError> {
            solver.release_negative()?;
            for _round in 0..4 {
                solver.run(tol.feasibility, settings.max_iterations)?;
                solver.recompute()?;
                if max_violation(&rows.mat, &r, &solver.x) <= tol.feasibility {
                    return Ok(true);
                }
            }
            Ok(false)
        })();
        if let Ok(true) = settled {
            return Ok(solver.into_solution(rows, f.generation + 1, true));
        }
    }

    let mut solver = DualActiveSet::new(&rows.mat, &r, c);
    let mut select_tol = tol.loose;
    for _round in 0..8 {
        solver.run(select_tol, settings.max_iterations)?;
        let mut set = solver.active.clone();
        set.sort_unstable();
        if let Some(pt) = subspace_solve(&rows.mat, &r, c, &set) {
            let dual_tol = 1e-9 * (1.0 + pt.mu.amax());
            if pt.mu.iter().all(|&v| v >= -dual_tol) {
                solver.adopt(&pt, &set);
            }
        }
        if max_violation(&rows.mat, &r, &solver.x) <= tol.feasibility {
            return Ok(solver.into_solution(rows, 0, false));
        }
        select_tol = tol.feasibility;
    }
    Err(QpError::Numerical(
        "working set did not settle after polishing".into(),
    ))
}

/// Goldfarb-Idnani state. Constraints are handled in the `a'w >= b` form with
/// `a = -n_k`, `b = -r_k`, so the slack `a'w - b` equals `r_k - n_k'w`.
struct DualActiveSet<'a> {
    mat: &'a DMatrix<f64>,
    r: &'a DVector<f64>,
    c: &'a DVector<f64>,
    x: DVector<f64>,
    /// Orthogonal factor; `J' C_A = [R; 0]`.
    jmat: DMatrix<f64>,
    rmat: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    is_active: Vec<bool>,
    iterations: usize,
}

impl<'a> DualActiveSet<'a> {
    fn new(mat: &'a DMatrix<f64>, r: &'a DVector<f64>, c: &'a DVector<f64>) -> Self {
        let m = mat.ncols();
        DualActiveSet {
            mat,
            r,
            c,
            x: -c,
            jmat: DMatrix::identity(m, m),
            rmat: DMatrix::zeros(m, m),
            active: Vec::new(),
            u: Vec::new(),
            is_active: vec![false; mat.nrows()],
            iterations: 0,
        }
    }

    fn from_factor(mat: &'a DMatrix<f64>, r: &'a DVector<f64>, c: &'a DVector<f64>, f: &QpFactor) -> Self {
        let mut is_active = vec![false; mat.nrows()];
        for &k in &f.active {
            is_active[k] = true;
        }
        DualActiveSet {
            mat,
            r,
            c,
            x: -c,
            jmat: f.jmat.clone(),
            rmat: f.rmat.clone(),
            active: f.active.clone(),
            u: vec![0.0; f.active.len()],
            is_active,
            iterations: 0,
        }
    }

    /// Optimum and multipliers on the current active set from the factors:
    /// `x = J1 R^{-T} b - J2 J2' c`, `u = R^{-1} (R^{-T} b + J1' c)`.
    fn recompute(&mut self) -> Result<(), QpError> {
        let m = self.x.len();
        let q = self.active.len();
        let c = self.c;
        let j2 = self.jmat.columns(q, m - q);
        let mut x = -(&j2 * j2.tr_mul(c));
        if q > 0 {
            let b = DVector::from_iterator(q, self.active.iter().map(|&k| -self.r[k]));
            let rq = self.rmat.view((0, 0), (q, q));
            let singular = || QpError::Numerical("singular R factor".into());
            let v = rq.tr_solve_upper_triangular(&b).ok_or_else(singular)?;
            let j1 = self.jmat.columns(0, q);
            x += &j1 * &v;
            let u = rq.solve_upper_triangular(&(v + j1.tr_mul(c))).ok_or_else(singular)?;
            self.u = u.iter().copied().collect();
        }
        self.x = x;
        Ok(())
    }

    /// Drops constraints with negative multipliers until the point is dual feasible.
    fn release_negative(&mut self) -> Result<(), QpError> {
        self.recompute()?;
        loop {
            let floor = -1e-12 * (1.0 + self.u.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
            let worst = self
                .u
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < floor)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j);
            let Some(j) = worst else { break };
            self.drop_constraint(j);
            self.recompute()?;
        }
        for u in &mut self.u {
            *u = u.max(0.0);
        }
        Ok(())
    }

    fn into_solution(self, rows: &PreparedRows, generation: usize, warm: bool) -> QpSolution {
        let mut order: Vec<usize> = (0..self.active.len()).collect();
        order.sort_unstable_by_key(|&j| self.active[j]);
        let mut multipliers = DVector::zeros(rows.n_rows());
        for &j in &order {
            let k = self.active[j];
            multipliers[rows.original[k]] = self.u[j].max(0.0) / rows.norms[k];
        }
        QpSolution {
            w: self.x,
            multipliers,
            working_set: order.iter().map(|&j| rows.original[self.active[j]]).collect(),
            iterations: self.iterations,
            warm_started: warm,
            factor: QpFactor {
                active: self.active,
                jmat: self.jmat,
                rmat: self.rmat,
                generation,
            },
        }
    }

    fn adopt(&mut self, pt: &SubspacePoint, sorted_set: &[usize]) {
        self.x.copy_from(&pt.w);
        for (j, &k) in self.active.iter().enumerate() {
            let pos = sorted_set.binary_search(&k).expect("same working set");
            self.u[j] = pt.mu[pos].max(0.0);
        }
    }

    fn run(&mut self, select_tol: f64, max_iterations: usize) -> Result<(), QpError> {
        let m = self.x.len();
        loop {
            self.iterations += 1;
            if self.iterations > max_iterations {
                return Err(QpError::MaxIterations(max_iterations));
            }
            let slack = self.r - self.mat * &self.x;
            let mut pick: Option<(usize, f64)> = None;
            for (k, &s) in slack.iter().enumerate() {
                if !self.is_active[k] && s < -select_tol && pick.map_or(true, |(_, best)| s < best) {
                    pick = Some((k, s));
                }
            }
            let Some((p, mut s_p)) = pick else {
                return Ok(());
            };
            let a: DVector<f64> = -self.mat.row(p).transpose();
            let mut u_p = 0.0;

            loop {
                let q = self.active.len();
                let d = self.jmat.tr_mul(&a);
                let d2 = d.rows(q, m - q);
                let z = self.jmat.columns(q, m - q) * d2;
                let rv = if q > 0 {
                    self.rmat
                        .view((0, 0), (q, q))
                        .solve_upper_triangular(&d.rows(0, q))
                        .ok_or_else(|| QpError::Numerical("singular R factor".into()))?
                } else {
                    DVector::zeros(0)
                };

                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for j in 0..q {
                    if rv[j] > 0.0 {
                        let ratio = self.u[j] / rv[j];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(j);
                        }
                    }
                }
                let za = d2.norm_squared();
                let t2 = if za.sqrt() > DEPENDENT { -s_p / za } else { f64::INFINITY };

                if t1.is_infinite() && t2.is_infinite() {
                    return Err(QpError::Infeasible { row: p });
                }
                if t2.is_infinite() {
                    for j in 0..q {
                        self.u[j] -= t1 * rv[j];
                    }
                    u_p += t1;
                    self.drop_constraint(drop_at.unwrap());
                    continue;
                }
                let t = t1.min(t2);
                self.x.axpy(t, &z, 1.0);
                for j in 0..q {
                    self.u[j] -= t * rv[j];
                }
                u_p += t;
                s_p += t * za;
                if t2 <= t1 {
                    self.add_constraint(p, d, u_p);
                    break;
                }
                self.drop_constraint(drop_at.unwrap());
            }
        }
    }

    fn add_constraint(&mut self, p: usize, mut d: DVector<f64>, u_p: f64) {
        let m = self.x.len();
        let q = self.active.len();
        for j in (q + 1..m).rev() {
            let (a, b) = (d[j - 1], d[j]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            d[j - 1] = h;
            d[j] = 0.0;
            rotate_columns(&mut self.jmat, j - 1, j, cs, sn);
        }
        for i in 0..=q {
            self.rmat[(i, q)] = d[i];
        }
        self.active.push(p);
        self.u.push(u_p);
        self.is_active[p] = true;
    }

    fn drop_constraint(&mut self, l: usize) {
        givens_drop(&mut self.jmat, &mut self.rmat, self.active.len(), l);
        let k = self.active.remove(l);
        self.u.remove(l);
        self.is_active[k] = false;
    }
}

/// Removes column `l` of the `q`-column factor and restores triangularity.
fn givens_drop(jmat: &mut DMatrix<f64>, rmat: &mut DMatrix<f64>, q: usize, l: usize) {
    for j in l..q - 1 {
        for i in 0..=j + 1 {
            rmat[(i, j)] = rmat[(i, j + 1)];
        }
    }
    for i in 0..q {
        rmat[(i, q - 1)] = 0.0;
    }
    for j in l..q - 1 {
        let (a, b) = (rmat[(j, j)], rmat[(j + 1, j)]);
        if b == 0.0 {
            continue;
        }
        let h = a.hypot(b);
        let (cs, sn) = (a / h, b / h);
        for col in j..q - 1 {
            let (x, y) = (rmat[(j, col)], rmat[(j + 1, col)]);
            rmat[(j, col)] = cs * x + sn * y;
            rmat[(j + 1, col)] = -sn * x + cs * y;
        }
        rmat[(j + 1, j)] = 0.0;
        rotate_columns(jmat, j, j + 1, cs, sn);
    }
}

/// Minimum-norm solution `W` of `C_S W = B`, where `C_S` holds the original
/// (unnormalised) rows listed in `wanted`, taken from the factor of a previous
/// solve. `rhs(row)` returns the matching row of `B`. The factor is downdated
/// rather than refactorised. `None` signals that a wanted row is missing from
/// the factor or that the rows are rank deficient.
pub fn solve_on_working_set(
    rows: &PreparedRows,
    factor: &QpFactor,
    wanted: &[usize],
    rhs: impl Fn(usize) -> Vec<f64>,
    ncols: usize,
) -> Option<DMatrix<f64>> {
    let keep = |k: usize| wanted.binary_search(&rows.original[k]).is_ok();
    if factor.active.iter().filter(|&&k| keep(k)).count() != wanted.len() {
        return None;
    }
    let mut jmat = factor.jmat.clone();
    let mut rmat = factor.rmat.clone();
    let mut active = factor.active.clone();
    let mut l = active.len();
    while l > 0 {
        l -= 1;
        if !keep(active[l]) {
            givens_drop(&mut jmat, &mut rmat, active.len(), l);
            active.remove(l);
        }
    }
    let q = active.len();
    let m = jmat.nrows();
    if q == 0 {
        return Some(DMatrix::zeros(m, ncols));
    }
    let rq = rmat.view((0, 0), (q, q));
    let scale = (0..q).map(|i| rq[(i, i)].abs()).fold(0.0f64, f64::max);
    if (0..q).any(|i| rq[(i, i)].abs() <= RANK_TOL * scale.max(1.0)) {
        return None;
    }
    // Original rows are -norm_k * a_k with a_k the factor's columns, so
    // C_S = -D R' J1' and W = J1 R^{-T} (-D^{-1} B).
    let mut b = DMatrix::zeros(q, ncols);
    for (j, &k) in active.iter().enumerate() {
        let row = rhs(rows.original[k]);
        for (c, v) in row.into_iter().enumerate() {
            b[(j, c)] = -v / rows.norms[k];
        }
    }
    let v = rq.tr_solve_upper_triangular(&b)?;
    Some(jmat.columns(0, q) * v)
}

/// `J <- J G'` for the Givens rotation acting on coordinates `(i, j)`.
fn rotate_columns(jmat: &mut DMatrix<f64>, i: usize, j: usize, cs: f64, sn: f64) {
    let n = jmat.nrows();
    for row in 0..n {
        let (x, y) = (jmat[(row, i)], jmat[(row, j)]);
        jmat[(row, i)] = cs * x + sn * y;
        jmat[(row, j)] = -sn * x + cs * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solve_cold(n: DMatrix<f64>, r: Vec<f64>, c: Vec<f64>) -> QpSolution {
        let rows = PreparedRows::new(&n);
        solve(&rows, &DVector::from_vec(r), &DVector::from_vec(c), None, QpSettings::default()).unwrap()
    }

    #[test]
    fn unconstrained_minimum_when_nothing_binds() {
        let sol = solve_cold(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![10.0], vec![-1.0, -2.0]);
        assert_relative_eq!(sol.w, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-12);
        assert!(sol.working_set.is_empty());
    }

    #[test]
    fn projection_onto_halfspace() {
        // min 1/2|w - (1, 1)|^2 s.t. w1 + w2 <= 1  ->  (0.5, 0.5), multiplier 0.5
        let sol = solve_cold(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![1.0], vec![-1.0, -1.0]);
        assert_relative_eq!(sol.w, DVector::from_vec(vec![0.5, 0.5]), epsilon = 1e-12);
        assert_relative_eq!(sol.multipliers[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quadprog_reference_problem() {
        // min 1/2 (x^2 + y^2) + x  s.t. x + 2y >= 1  ->  (-0.6, 0.8)
        let sol = solve_cold(DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]), vec![-1.0], vec![1.0, 0.0]);
        assert_relative_eq!(sol.w, DVector::from_vec(vec![-0.6, 0.8]), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_vertex_with_duplicate_rows() {
        // Box [0,1]^2 with a duplicated upper bound and a redundant diagonal cut through the corner.
        let n = DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, -1.0, 0.0],
        );
        let sol = solve_cold(n, vec![1.0, 1.0, 1.0, 2.0, 0.0], vec![-3.0, -3.0]);
        assert_relative_eq!(sol.w, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-10);
        // KKT: c + w + N' lambda = 0 with lambda >= 0.
        let total_x = sol.multipliers[0] + sol.multipliers[2] + sol.multipliers[3];
        let total_y = sol.multipliers[1] + sol.multipliers[3];
        assert_relative_eq!(total_x, 2.0, epsilon = 1e-10);
        assert_relative_eq!(total_y, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn infeasible_system_is_detected() {
        let n = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let rows = PreparedRows::new(&n);
        let err = solve(&rows, &DVector::from_vec(vec![0.0, -1.0]), &DVector::from_vec(vec![0.0]), None, QpSettings::default());
        assert!(matches!(err, Err(QpError::Infeasible { .. })));
    }

    #[test]
    fn zero_rows_are_screened() {
        let n = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let rows = PreparedRows::new(&n);
        let ok = solve(&rows, &DVector::from_vec(vec![0.0, 0.5]), &DVector::from_vec(vec![-1.0]), None, QpSettings::default()).unwrap();
        assert_relative_eq!(ok.w[0], 0.5, epsilon = 1e-12);
        let bad = solve(&rows, &DVector::from_vec(vec![-1.0, 0.5]), &DVector::from_vec(vec![-1.0]), None, QpSettings::default());
        assert_eq!(bad.unwrap_err(), QpError::Infeasible { row: 0 });
    }

    #[test]
    fn hot_start_tracks_a_moving_rhs() {
        let n = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let rows = PreparedRows::new(&n);
        let c = DVector::from_vec(vec![-1.0, -1.0]);
        let cold = solve(&rows, &DVector::from_vec(vec![1.0]), &c, None, QpSettings::default()).unwrap();
        let warm = solve(&rows, &DVector::from_vec(vec![0.8]), &c, Some(&cold.factor), QpSettings::default()).unwrap();
        assert!(warm.warm_started);
        assert_relative_eq!(warm.w, DVector::from_vec(vec![0.4, 0.4]), epsilon = 1e-12);
        // The constraint turns slack: its multiplier goes negative and it is released.
        let relaxed = solve(&rows, &DVector::from_vec(vec![5.0]), &c, Some(&warm.factor), QpSettings::default()).unwrap();
        assert!(relaxed.working_set.is_empty());
        assert_relative_eq!(relaxed.w, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn hot_and_cold_solves_agree_on_random_problems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (k, m) = (12, 5);
            let n = DMatrix::from_fn(k, m, |_, _| rng.gen_range(-1.0..1.0));
            let rows = PreparedRows::new(&n);
            let c = DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0));
            let mut rhs = DVector::from_fn(k, |_, _| rng.gen_range(0.1..1.0));
            let mut prev = solve(&rows, &rhs, &c, None, QpSettings::default()).unwrap();
            for _ in 0..10 {
                for v in rhs.iter_mut() {
                    *v = (*v + rng.gen_range(-0.2..0.2)).max(0.05);
                }
                let cold = solve(&rows, &rhs, &c, None, QpSettings::default()).unwrap();
                let hot = solve(&rows, &rhs, &c, Some(&prev.factor), QpSettings::default()).unwrap();
                assert!((&cold.w - &hot.w).amax() <= 1e-9);
                assert!((&cold.multipliers - &hot.multipliers).amax() <= 1e-8);
                prev = hot;
            }
        }
    }

    #[test]
    fn large_linear_term_is_polished() {
        // c ~ 1e9 mimics a tiny proximal weight; the answer is the box corner.
        let n = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let sol = solve_cold(n, vec![0.3, 0.7, 0.0, 0.0], vec![-1e9, 2e9]);
        assert_eq!(sol.w[0], 0.3);
        assert_eq!(sol.w[1], 0.0);
    }
}
