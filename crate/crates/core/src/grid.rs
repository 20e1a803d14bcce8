use serde::{Deserialize, Serialize};

/// Dense `D x T` grid stored row-major as `[d][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dc_count: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(dc_count: usize, horizon: usize) -> Self {
        Grid {
            dc_count,
            horizon,
            data: vec![0.0; dc_count * horizon],
        }
    }

    pub fn from_fn(dc_count: usize, horizon: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dc_count * horizon);
        for d in 0..dc_count {
            for t in 0..horizon {
                data.push(f(d, t));
            }
        }
        Grid {
            dc_count,
            horizon,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return None;
        }
        Some(Grid {
            dc_count: rows.len(),
            horizon,
            data: rows.concat(),
        })
    }

    pub fn dc_count(&self) -> usize {
        self.dc_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, d: usize, t: usize) -> f64 {
        self.data[d * self.horizon + t]
    }

    pub fn set(&mut self, d: usize, t: usize, v: f64) {
        self.data[d * self.horizon + t] = v;
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.data[d * self.horizon..(d + 1) * self.horizon]
    }

    /// Flattened values, index `d * T + t`.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dc_count).map(|d| self.row(d).to_vec()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// On-disk representation with explicit dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    #[serde(rename = "D")]
    pub dc_count: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub values: Vec<Vec<f64>>,
}

impl From<&Grid> for GridFile {
    fn from(g: &Grid) -> Self {
        GridFile {
            dc_count: g.dc_count,
            horizon: g.horizon,
            values: g.rows(),
        }
    }
}

impl GridFile {
    pub fn to_grid(&self, what: &str) -> Result<Grid, String> {
        if self.values.len() != self.dc_count
            || self.values.iter().any(|r| r.len() != self.horizon)
        {
            return Err(format!(
                "{what} grid must have exactly D x T = {} x {} entries",
                self.dc_count, self.horizon
            ));
        }
        Ok(Grid::from_rows(&self.values).unwrap_or_else(|| Grid::zeros(0, self.horizon)))
    }
}
