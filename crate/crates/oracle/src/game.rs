//! The allocation game written out directly over `Y(x)`, without the
//! null-space reduction, and solved with Clarabel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use vcc_core::game::{build_layout, DecisionLayout};
use vcc_core::Scenario;

use crate::qp::DenseQp;

/// Cheapest route prices between all DC pairs, by Floyd-Warshall.
pub fn route_prices(scenario: &Scenario) -> Vec<Vec<f64>> {
    let n = scenario.dc_count();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (d, row) in dist.iter_mut().enumerate() {
        row[d] = 0.0;
    }
    for e in &scenario.fleet.edges {
        dist[e.a][e.b] = dist[e.a][e.b].min(e.price);
        dist[e.b][e.a] = dist[e.b][e.a].min(e.price);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
struct JobBlock {
    a: DMatrix<f64>,
    b: DVector<f64>,
    q: DVector<f64>,
    anchor: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct DirectGame {
    pub layout: DecisionLayout,
    pub epsilon: f64,
    pub volumes: Vec<f64>,
    blocks: Vec<JobBlock>,
}

impl DirectGame {
    pub fn new(scenario: &Scenario) -> Self {
        let layout = build_layout(scenario);
        let prices = route_prices(scenario);
        let (dn, tn) = (layout.dc_count, layout.horizon);
        let n = layout.block_len();
        // Local coordinates: y[d][t] at d*T + t, transfers z[d][t] after all y.
        let yi = |d: usize, t: usize| d * tn + t;
        let zi = |d: usize, t: usize| dn * tn + d * (tn - 1) + t;
        let mut blocks = Vec::new();
        for job in &scenario.jobs {
            let home = job.home;
            let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
            rows.push(((0..dn).flat_map(|d| (0..tn).map(move |t| (yi(d, t), 1.0))).collect(), job.volume));
            for d in (0..dn).filter(|&d| d != home) {
                rows.push((vec![(yi(d, 0), 1.0)], 0.0));
                for t in 1..tn {
                    rows.push((vec![(yi(d, t), 1.0), (zi(d, t - 1), -1.0)], 0.0));
                }
            }
            // Volume processed or shipped out so far, plus what still waits, is the whole job.
            for t in 0..tn.saturating_sub(1) {
                let mut coefs = vec![(zi(home, t), 1.0)];
                for l in 0..=t {
                    coefs.push((yi(home, l), 1.0));
                    for d in (0..dn).filter(|&d| d != home) {
                        coefs.push((zi(d, l), 1.0));
                    }
                }
                rows.push((coefs, job.volume));
            }
            let mut a = DMatrix::zeros(rows.len(), n);
            let mut b = DVector::zeros(rows.len());
            for (r, (coefs, rhs)) in rows.into_iter().enumerate() {
                for (c, v) in coefs {
                    a[(r, c)] += v;
                }
                b[r] = rhs;
            }
            let mut q = DVector::zeros(n);
            for d in 0..dn {
                for t in 0..tn {
                    q[yi(d, t)] = job.priority * (t + 1) as f64 / tn as f64;
                }
                if d != home {
                    for t in 0..tn - 1 {
                        q[zi(d, t)] = job.priority * prices[home][d];
                    }
                }
            }
            let anchor = a.clone().svd(true, true).solve(&b, 1e-12).expect("svd with both factors");
            blocks.push(JobBlock { a, b, q, anchor });
        }
        DirectGame {
            layout,
            epsilon: scenario.params.epsilon,
            volumes: scenario.jobs.iter().map(|j| j.volume).collect(),
            blocks,
        }
    }

    fn local_to_stacked(&self, job: usize, k: usize) -> usize {
        let (dn, tn) = (self.layout.dc_count, self.layout.horizon);
        if k < dn * tn {
            self.layout.y(job, k / tn, k % tn)
        } else {
            let r = k - dn * tn;
            self.layout.z(job, r / (tn - 1), r % (tn - 1))
        }
    }

    fn gather(&self, job: usize, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.layout.block_len(), (0..self.layout.block_len()).map(|k| y[self.local_to_stacked(job, k)]))
    }

    fn scatter(&self, job: usize, local: &DVector<f64>, y: &mut DVector<f64>) {
        for k in 0..local.len() {
            y[self.local_to_stacked(job, k)] = local[k];
        }
    }

    /// Linear costs in stacked order.
    pub fn cost(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.layout.n_y());
        for (i, blk) in self.blocks.iter().enumerate() {
            self.scatter(i, &blk.q, &mut q);
        }
        q
    }

    /// Minimum-norm solutions of each job's equalities, stacked.
    pub fn anchor(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.layout.n_y());
        for (i, blk) in self.blocks.iter().enumerate() {
            self.scatter(i, &blk.anchor, &mut y);
        }
        y
    }

    /// Team `job`'s cost at the stacked allocation `y`.
    pub fn team_objective(&self, job: usize, y: &DVector<f64>) -> f64 {
        let blk = &self.blocks[job];
        let yl = self.gather(job, y);
        blk.q.dot(&yl) + 0.5 * self.epsilon * (&yl - &blk.anchor).norm_squared()
    }

    pub fn total_objective(&self, y: &DVector<f64>) -> f64 {
        (0..self.blocks.len()).map(|i| self.team_objective(i, y)).sum()
    }

    /// Each team's gradient of its own cost, stacked.
    pub fn pseudo_gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        self.cost() + (y - self.anchor()) * self.epsilon
    }

    fn loads(&self, y: &DVector<f64>) -> Vec<f64> {
        let l = &self.layout;
        let mut load = vec![0.0; l.n_x()];
        for i in 0..l.jobs {
            for d in 0..l.dc_count {
                for t in 0..l.horizon {
                    load[l.x(d, t)] += y[l.y(i, d, t)];
                }
            }
        }
        load
    }

    /// Largest violation of the equalities, sign constraints and capacities.
    pub fn feasibility_residual(&self, y: &DVector<f64>, x: &[f64]) -> f64 {
        let mut worst = y.iter().fold(0.0f64, |a, &v| a.max(-v));
        for (i, blk) in self.blocks.iter().enumerate() {
            let r = &blk.a * self.gather(i, y) - &blk.b;
            worst = worst.max(r.amax());
        }
        for (load, cap) in self.loads(y).iter().zip(x) {
            worst = worst.max(load - cap);
        }
        worst
    }

    /// Builds `min sum_i J_i` over the jobs in `jobs`, with `spare` capacity.
    fn program(&self, jobs: &[usize], spare: &[f64], extra_quad: Option<&DVector<f64>>) -> DenseQp {
        let l = &self.layout;
        let n = l.block_len();
        let nv = n * jobs.len();
        let me: usize = jobs.iter().map(|&i| self.blocks[i].a.nrows()).sum();
        let mut a_eq = DMatrix::zeros(me, nv);
        let mut b_eq = DVector::zeros(me);
        let mut q = DVector::zeros(nv);
        let mut p = DMatrix::identity(nv, nv) * self.epsilon;
        let mut r = 0;
        for (s, &i) in jobs.iter().enumerate() {
            let blk = &self.blocks[i];
            a_eq.view_mut((r, s * n), blk.a.shape()).copy_from(&blk.a);
            b_eq.rows_mut(r, blk.b.len()).copy_from(&blk.b);
            r += blk.a.nrows();
            q.rows_mut(s * n, n).copy_from(&(&blk.q - &blk.anchor * self.epsilon));
        }
        if let Some(target) = extra_quad {
            // Replace the game costs by a plain distance to `target`.
            p = DMatrix::identity(nv, nv);
            q = -target.clone();
        }
        let (dn, tn) = (l.dc_count, l.horizon);
        let mut a_in = DMatrix::zeros(nv + dn * tn, nv);
        let mut b_in = DVector::zeros(nv + dn * tn);
        for k in 0..nv {
            a_in[(k, k)] = -1.0;
        }
        for d in 0..dn {
            for t in 0..tn {
                let row = nv + l.x(d, t);
                for s in 0..jobs.len() {
                    a_in[(row, s * n + d * tn + t)] = 1.0;
                }
                b_in[row] = spare[l.x(d, t)];
            }
        }
        DenseQp { p, q, a_eq, b_eq, a_in, b_in }
    }

    /// Minimiser of the summed team costs over `Y(x)`.
    pub fn solve(&self, x: &[f64]) -> Result<(DVector<f64>, f64), String> {
        let jobs: Vec<usize> = (0..self.blocks.len()).collect();
        let res = self.program(&jobs, x, None).solve()?;
        let y = self.unstack(&jobs, &res.x);
        let obj = self.total_objective(&y);
        Ok((y, obj))
    }

    fn unstack(&self, jobs: &[usize], v: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.block_len();
        let mut y = DVector::zeros(self.layout.n_y());
        for (s, &i) in jobs.iter().enumerate() {
            self.scatter(i, &v.rows(s * n, n).into_owned(), &mut y);
        }
        y
    }

    /// Team `job`'s cost at `y` and at its best response to the other teams.
    pub fn best_response(&self, x: &[f64], y: &DVector<f64>, job: usize) -> Result<(f64, f64), String> {
        let l = &self.layout;
        let mut spare = x.to_vec();
        for i in (0..l.jobs).filter(|&i| i != job) {
            for d in 0..l.dc_count {
                for t in 0..l.horizon {
                    spare[l.x(d, t)] -= y[l.y(i, d, t)];
                }
            }
        }
        let spare: Vec<f64> = spare.into_iter().map(|s| s.max(0.0)).collect();
        let res = self.program(&[job], &spare, None).solve()?;
        let mut br = y.clone();
        self.scatter(job, &res.x, &mut br);
        Ok((self.team_objective(job, y), self.team_objective(job, &br)))
    }

    /// Euclidean projection onto `Y(x)`.
    pub fn project(&self, x: &[f64], target: &DVector<f64>) -> Result<DVector<f64>, String> {
        let jobs: Vec<usize> = (0..self.blocks.len()).collect();
        let local = DVector::from_iterator(
            target.len(),
            jobs.iter().flat_map(|&i| self.gather(i, target).iter().copied().collect::<Vec<_>>()),
        );
        let res = self.program(&jobs, x, Some(&local)).solve()?;
        Ok(self.unstack(&jobs, &res.x))
    }

    /// `count` points of `Y(x)`: random convex combinations of projections of
    /// random vectors and of `extra`.
    pub fn random_feasible(
        &self,
        x: &[f64],
        extra: &[DVector<f64>],
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<DVector<f64>>, String> {
        let scale = self.volumes.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut corners: Vec<DVector<f64>> = extra.to_vec();
        for _ in 0..8 {
            let target = DVector::from_fn(self.layout.n_y(), |_, _| rng.gen_range(-1.0..2.0) * scale);
            corners.push(self.project(x, &target)?);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut w: Vec<f64> = corners.iter().map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            // Occasionally stay on a single corner so faces are sampled too.
            if rng.gen_bool(0.2) {
                let pick = rng.gen_range(0..w.len());
                w.iter_mut().enumerate().for_each(|(k, v)| *v = if k == pick { 1.0 } else { 0.0 });
            }
            let s: f64 = w.iter().sum();
            let mut y = DVector::zeros(self.layout.n_y());
            for (c, wk) in corners.iter().zip(&w) {
                y += c * (wk / s);
            }
            out.push(y);
        }
        Ok(out)
    }
}
