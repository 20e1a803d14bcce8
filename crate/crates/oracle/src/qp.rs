//! Thin wrapper around the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};

/// `min 1/2 x'Px + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in`.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub x: DVector<f64>,
    /// Multipliers of the inequality rows, nonnegative.
    pub ineq_duals: DVector<f64>,
    pub objective: f64,
}

fn csc(m: &DMatrix<f64>, upper_only: bool) -> CscMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut colptr = Vec::with_capacity(cols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for j in 0..cols {
        let last = if upper_only { (j + 1).min(rows) } else { rows };
        for i in 0..last {
            let v = m[(i, j)];
            if v != 0.0 {
                rowval.push(i);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

impl DenseQp {
    pub fn solve(&self) -> Result<QpResult, String> {
        let n = self.q.len();
        let (me, mi) = (self.a_eq.nrows(), self.a_in.nrows());
        let mut a = DMatrix::zeros(me + mi, n);
        a.rows_mut(0, me).copy_from(&self.a_eq);
        a.rows_mut(me, mi).copy_from(&self.a_in);
        let b: Vec<f64> = self.b_eq.iter().chain(self.b_in.iter()).copied().collect();
        let mut cones = Vec::new();
        if me > 0 {
            cones.push(SupportedConeT::ZeroConeT(me));
        }
        if mi > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(mi));
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 500,
            tol_gap_abs: 1e-12,
            tol_gap_rel: 1e-12,
            tol_feas: 1e-12,
            tol_ktratio: 1e-10,
            ..DefaultSettings::default()
        };
        let p = csc(&self.p, true);
        let a = csc(&a, false);
        let q: Vec<f64> = self.q.iter().copied().collect();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).map_err(|e| format!("{e:?}"))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            other => return Err(format!("clarabel status {other:?}")),
        }
        let x = DVector::from_vec(sol.x.clone());
        let ineq_duals = DVector::from_iterator(mi, sol.z[me..].iter().copied());
        let objective = 0.5 * x.dot(&(&self.p * &x)) + self.q.dot(&x);
        Ok(QpResult { x, ineq_duals, objective })
    }
}

/// Euclidean projection of `v` onto `{0 <= x <= upper, sum(x) >= demand}`.
pub fn project_box_halfspace(v: &[f64], upper: &[f64], demand: f64) -> Result<Vec<f64>, String> {
    let n = v.len();
    let mut a_in = DMatrix::zeros(2 * n + 1, n);
    let mut b_in = DVector::zeros(2 * n + 1);
    for k in 0..n {
        a_in[(k, k)] = -1.0;
        a_in[(n + k, k)] = 1.0;
        b_in[n + k] = upper[k];
        a_in[(2 * n, k)] = -1.0;
    }
    b_in[2 * n] = -demand;
    let qp = DenseQp {
        p: DMatrix::identity(n, n),
        q: -DVector::from_column_slice(v),
        a_eq: DMatrix::zeros(0, n),
        b_eq: DVector::zeros(0),
        a_in,
        b_in,
    };
    Ok(qp.solve()?.x.iter().copied().collect())
}
