//! Exhaustive grid search over the feasible VCC set.

use vcc_core::bilevel::{FeasibleSet, LeaderObjective};
use vcc_core::game::{solve_game, GameMatrices};
use vcc_core::Scenario;

#[derive(Debug, Clone)]
pub struct GridOptimum {
    pub x: Vec<f64>,
    pub phi: f64,
    pub points: usize,
}

/// Evaluates the leader objective at every point of the lattice with spacing
/// `pitch * x_max` per coordinate (plus each coordinate's upper bound) that
/// lies in the feasible set.
pub fn grid_search(scenario: &Scenario, pitch: f64) -> Result<GridOptimum, String> {
    let set = FeasibleSet::new(scenario).map_err(|e| e.to_string())?;
    let m = GameMatrices::assemble(scenario).map_err(|e| e.to_string())?;
    let leader = LeaderObjective::new(scenario);
    let xmax = scenario.effective_capacity();
    let axes: Vec<Vec<f64>> = set
        .upper
        .iter()
        .zip(xmax.as_slice())
        .map(|(&u, &full)| {
            let step = pitch * full;
            let mut vals = Vec::new();
            let mut k = 0;
            while step > 0.0 && k as f64 * step < u {
                vals.push(k as f64 * step);
                k += 1;
            }
            vals.push(u);
            vals
        })
        .collect();

    let mut best: Option<GridOptimum> = None;
    let mut points = 0;
    let mut idx = vec![0usize; axes.len()];
    let tol = 1e-12 * (1.0 + set.demand);
    loop {
        let x: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        if x.iter().sum::<f64>() >= set.demand - tol {
            if let Ok(eq) = solve_game(&m, &x) {
                points += 1;
                let phi = leader.value(&x, &eq.y_star);
                if best.as_ref().map_or(true, |b| phi < b.phi) {
                    best = Some(GridOptimum { x, phi, points: 0 });
                }
            }
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    let mut best = best.ok_or("no feasible grid point")?;
    best.points = points;
    Ok(best)
}
