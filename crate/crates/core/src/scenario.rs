//! Scenario data model, file formats and synthetic generators.
//!
//! A scenario file is a single JSON document:
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "name": "demo",
//!   "horizon": 5,
//!   "fleet": {
//!     "dc_count": 2,
//!     "names": ["west", "east"],
//!     "physical_capacity": [10.0, 12.0],
//!     "edges": [{"from": 1, "to": 2, "price": 1.5}]
//!   },
//!   "jobs": [{"id": 1, "home": 1, "volume": 4.0, "priority": 2.0}],
//!   "carbon": {"D": 2, "T": 5, "values": [[...], [...]]},
//!   "inflexible": {"D": 2, "T": 5, "values": [[...], [...]]},
//!   "params": {"xi": 1.0}
//! }
//! ```
//!
//! DC ids in files are one-based. `carbon` may instead reference a CSV file:
//! `{"csv": "carbon.csv", "columns": {"Oregon": 1, "Finland": 2}}`, resolved
//! relative to the scenario file.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{DataCenterFleet, Edge, FleetError, PathTable};
use crate::grid::{Grid, GridFile};
use crate::params::SolverParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario ({0})")]
    Validation(String),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Carbon(#[from] CarbonCsvError),
}

#[derive(Debug, Error, PartialEq)]
pub enum CarbonCsvError {
    #[error("carbon CSV has no column named {0:?}")]
    MissingColumn(String),
    #[error("negative carbon intensity {value} in column {column:?}, row {row}")]
    NegativeIntensity {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("carbon CSV has {found} data rows, horizon needs {needed}")]
    TooFewRows { needed: usize, found: usize },
    #[error("carbon CSV: {0}")]
    Parse(String),
    #[error("carbon CSV column mapping must assign each of the {dc_count} DCs exactly once")]
    Mapping { dc_count: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("inflexible load base {base} +/- amplitude {amplitude} leaves [0, 1]")]
    AmplitudeOutOfRange { base: f64, amplitude: f64 },
    #[error("expected {expected} phases, found {found}")]
    PhaseCount { expected: usize, found: usize },
    #[error("job mix budget {budget} admits no job of the requested kind")]
    BudgetInfeasible { budget: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeJob {
    pub id: u64,
    /// Zero-based home DC index.
    pub home: usize,
    pub volume: f64,
    pub priority: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub fleet: DataCenterFleet,
    pub dc_names: Vec<String>,
    pub jobs: Vec<ComputeJob>,
    pub horizon: usize,
    /// Carbon intensity `rho[d][t]`.
    pub carbon: Grid,
    pub inflexible: Grid,
    pub params: SolverParams,
    pub paths: PathTable,
}

impl Scenario {
    /// Validates all invariants and precomputes migration paths.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        fleet: DataCenterFleet,
        dc_names: Option<Vec<String>>,
        jobs: Vec<ComputeJob>,
        horizon: usize,
        carbon: Grid,
        inflexible: Grid,
        params: SolverParams,
    ) -> Result<Self, ScenarioError> {
        crate::fleet::validate_fleet(&fleet)?;
        let d_count = fleet.dc_count;
        let dc_names = dc_names.unwrap_or_else(|| (1..=d_count).map(|d| format!("dc{d}")).collect());
        let invalid = |msg: String| Err(ScenarioError::Validation(msg));

        if dc_names.len() != d_count {
            return invalid(format!(
                "dc names: expected {d_count} names, found {}",
                dc_names.len()
            ));
        }
        if horizon == 0 {
            return invalid("horizon positive: T must be at least 1".into());
        }
        if jobs.is_empty() {
            return invalid("job list nonempty: scenario has no jobs".into());
        }
        let mut ids = HashSet::new();
        for job in &jobs {
            if !ids.insert(job.id) {
                return invalid(format!("unique job ids: id {} repeats", job.id));
            }
            if !(job.volume.is_finite() && job.volume > 0.0) {
                return invalid(format!(
                    "job volume positive: job {} has volume {}",
                    job.id, job.volume
                ));
            }
            if !(job.priority.is_finite() && job.priority > 0.0) {
                return invalid(format!(
                    "job priority positive: job {} has priority {}",
                    job.id, job.priority
                ));
            }
            if job.home >= d_count {
                return invalid(format!(
                    "job home valid: job {} names DC {} of {d_count}",
                    job.id,
                    job.home + 1
                ));
            }
        }
        for (what, g) in [("carbon", &carbon), ("inflexible", &inflexible)] {
            if g.dc_count() != d_count || g.horizon() != horizon {
                return invalid(format!(
                    "grid shape: {what} is {}x{}, expected D x T = {d_count}x{horizon}",
                    g.dc_count(),
                    g.horizon()
                ));
            }
            if let Some(v) = g.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return invalid(format!("{what} nonnegative: found value {v}"));
            }
        }
        for d in 0..d_count {
            for t in 0..horizon {
                let load = inflexible.get(d, t);
                let cap = fleet.physical_capacity[d];
                if load > cap {
                    return invalid(format!(
                        "effective capacity nonnegative: inflexible load {load} exceeds physical capacity {cap} at DC {}, step {}",
                        d + 1,
                        t + 1
                    ));
                }
            }
        }
        let total_volume: f64 = jobs.iter().map(|j| j.volume).sum();
        let total_capacity: f64 = (0..d_count)
            .map(|d| (0..horizon).map(|t| fleet.physical_capacity[d] - inflexible.get(d, t)).sum::<f64>())
            .sum();
        if total_volume > total_capacity {
            return invalid(format!(
                "aggregate feasibility: total job volume {total_volume} exceeds total effective capacity {total_capacity}"
            ));
        }
        params.validate().map_err(ScenarioError::Validation)?;

        let paths = PathTable::new(&fleet);
        Ok(Scenario {
            name: name.into(),
            fleet,
            dc_names,
            jobs,
            horizon,
            carbon,
            inflexible,
            params,
            paths,
        })
    }

    pub fn dc_count(&self) -> usize {
        self.fleet.dc_count
    }

    /// `x_max[d][t] = x_d_max - inflexible[d][t]`.
    pub fn effective_capacity(&self) -> Grid {
        Grid::from_fn(self.dc_count(), self.horizon, |d, t| {
            (self.fleet.physical_capacity[d] - self.inflexible.get(d, t)).max(0.0)
        })
    }

    pub fn total_volume(&self) -> f64 {
        self.jobs.iter().map(|j| j.volume).sum()
    }

    /// Cumulative volume of jobs uploaded at DC `d`.
    pub fn home_volume(&self, d: usize) -> f64 {
        self.jobs.iter().filter(|j| j.home == d).map(|j| j.volume).sum()
    }

    pub fn with_params(&self, params: SolverParams) -> Self {
        Scenario {
            params,
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    horizon: usize,
    fleet: FleetFile,
    jobs: Vec<JobFile>,
    carbon: CarbonSource,
    inflexible: GridFile,
    #[serde(default)]
    params: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetFile {
    dc_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    physical_capacity: Vec<f64>,
    edges: Vec<EdgeFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    from: usize,
    to: usize,
    price: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobFile {
    id: u64,
    home: usize,
    volume: f64,
    priority: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CarbonSource {
    Inline(GridFile),
    Csv {
        csv: PathBuf,
        columns: BTreeMap<String, usize>,
    },
}

fn to_zero_based(id: usize, what: &str) -> Result<usize, ScenarioError> {
    id.checked_sub(1)
        .ok_or_else(|| ScenarioError::Validation(format!("{what}: DC ids are one-based, found 0")))
}

/// Parses a scenario document. `base_dir` resolves relative CSV references.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Parse(format!(
            "unsupported schema_version {}, expected {SCHEMA_VERSION}",
            file.schema_version
        )));
    }
    let mut edges = Vec::with_capacity(file.fleet.edges.len());
    for e in &file.fleet.edges {
        edges.push(Edge {
            a: to_zero_based(e.from, "edge endpoint")?,
            b: to_zero_based(e.to, "edge endpoint")?,
            price: e.price,
        });
    }
    let fleet = DataCenterFleet {
        dc_count: file.fleet.dc_count,
        edges,
        physical_capacity: file.fleet.physical_capacity,
    };
    let mut jobs = Vec::with_capacity(file.jobs.len());
    for j in &file.jobs {
        jobs.push(ComputeJob {
            id: j.id,
            home: to_zero_based(j.home, "job home")?,
            volume: j.volume,
            priority: j.priority,
        });
    }
    let carbon = match &file.carbon {
        CarbonSource::Inline(g) => g.to_grid("carbon").map_err(ScenarioError::Validation)?,
        CarbonSource::Csv { csv, columns } => {
            let mut mapping = BTreeMap::new();
            for (name, id) in columns {
                mapping.insert(name.clone(), to_zero_based(*id, "carbon column mapping")?);
            }
            ingest_carbon_csv(&base_dir.join(csv), &mapping, fleet.dc_count, file.horizon)?
        }
    };
    let inflexible = file
        .inflexible
        .to_grid("inflexible")
        .map_err(ScenarioError::Validation)?;
    let params: SolverParams = if file.params.is_null() {
        SolverParams::default()
    } else {
        serde_json::from_value(file.params).map_err(|e| ScenarioError::Parse(format!("params: {e}")))?
    };
    Scenario::new(
        file.name,
        fleet,
        file.fleet.names,
        jobs,
        file.horizon,
        carbon,
        inflexible,
        params,
    )
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Serializes a scenario with all grids inline.
pub fn scenario_to_json(s: &Scenario) -> String {
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        name: s.name.clone(),
        horizon: s.horizon,
        fleet: FleetFile {
            dc_count: s.fleet.dc_count,
            names: Some(s.dc_names.clone()),
            physical_capacity: s.fleet.physical_capacity.clone(),
            edges: s
                .fleet
                .edges
                .iter()
                .map(|e| EdgeFile {
                    from: e.a + 1,
                    to: e.b + 1,
                    price: e.price,
                })
                .collect(),
        },
        jobs: s
            .jobs
            .iter()
            .map(|j| JobFile {
                id: j.id,
                home: j.home + 1,
                volume: j.volume,
                priority: j.priority,
            })
            .collect(),
        carbon: CarbonSource::Inline(GridFile::from(&s.carbon)),
        inflexible: GridFile::from(&s.inflexible),
        params: serde_json::to_value(&s.params).expect("params serialize"),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("scenario serialize");
    text.push('\n');
    text
}

pub fn save_scenario(path: &Path, s: &Scenario) -> std::io::Result<()> {
    write_atomic(path, scenario_to_json(s).as_bytes())
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Carbon CSV

/// Reads a carbon-intensity CSV: a header of location names, one row per step.
///
/// `dc_mapping` maps column names to zero-based DC indices and must cover
/// every DC once. Rows beyond the horizon are ignored.
pub fn ingest_carbon_csv(
    path: &Path,
    dc_mapping: &BTreeMap<String, usize>,
    dc_count: usize,
    horizon: usize,
) -> Result<Grid, CarbonCsvError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CarbonCsvError::Parse(format!("{}: {e}", path.display())))?;
    parse_carbon_csv(&text, dc_mapping, dc_count, horizon)
}

pub fn parse_carbon_csv(
    text: &str,
    dc_mapping: &BTreeMap<String, usize>,
    dc_count: usize,
    horizon: usize,
) -> Result<Grid, CarbonCsvError> {
    let mut assigned = vec![false; dc_count];
    for &d in dc_mapping.values() {
        if d >= dc_count || assigned[d] {
            return Err(CarbonCsvError::Mapping { dc_count });
        }
        assigned[d] = true;
    }
    if assigned.iter().any(|a| !a) {
        return Err(CarbonCsvError::Mapping { dc_count });
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CarbonCsvError::Parse(e.to_string()))?
        .clone();
    let mut columns = Vec::with_capacity(dc_count);
    for (name, &d) in dc_mapping {
        let col = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CarbonCsvError::MissingColumn(name.clone()))?;
        columns.push((name.as_str(), col, d));
    }

    let mut grid = Grid::zeros(dc_count, horizon);
    let mut rows = 0;
    for record in reader.records() {
        if rows == horizon {
            break;
        }
        let record = record.map_err(|e| CarbonCsvError::Parse(e.to_string()))?;
        for &(name, col, d) in &columns {
            let raw = record.get(col).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| {
                CarbonCsvError::Parse(format!("row {}, column {name:?}: {raw:?} is not a number", rows + 1))
            })?;
            if !value.is_finite() {
                return Err(CarbonCsvError::Parse(format!(
                    "row {}, column {name:?}: non-finite value",
                    rows + 1
                )));
            }
            if value < 0.0 {
                return Err(CarbonCsvError::NegativeIntensity {
                    column: name.to_string(),
                    row: rows + 1,
                    value,
                });
            }
            grid.set(d, rows, value);
        }
        rows += 1;
    }
    if rows < horizon {
        return Err(CarbonCsvError::TooFewRows {
            needed: horizon,
            found: rows,
        });
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Synthetic inputs

/// Sinusoidal inflexible load, `x_d_max * (base + amplitude * sin(2 pi t / T + phase_d))`
/// with `t` counted from zero, clamped to `[0, x_d_max]`.
pub fn synth_inflexible_load(
    physical_capacity: &[f64],
    horizon: usize,
    amplitude: f64,
    phases: &[f64],
    base: f64,
) -> Result<Grid, SynthError> {
    if phases.len() != physical_capacity.len() {
        return Err(SynthError::PhaseCount {
            expected: physical_capacity.len(),
            found: phases.len(),
        });
    }
    if !(amplitude >= 0.0 && base - amplitude >= 0.0 && base + amplitude <= 1.0) {
        return Err(SynthError::AmplitudeOutOfRange { base, amplitude });
    }
    Ok(Grid::from_fn(physical_capacity.len(), horizon, |d, t| {
        let cap = physical_capacity[d];
        let angle = 2.0 * PI * t as f64 / horizon as f64 + phases[d];
        (cap * (base + amplitude * angle.sin())).clamp(0.0, cap)
    }))
}

/// Phases spread evenly over `[0, 2 pi)`.
pub fn default_phases(dc_count: usize) -> Vec<f64> {
    (0..dc_count)
        .map(|d| 2.0 * PI * d as f64 / dc_count as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobMixKind {
    /// Every job exceeds one step of its home DC's effective capacity.
    Large,
    /// Every job fits into any single step at its home DC.
    Small,
    Mixed,
}

impl std::str::FromStr for JobMixKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "large" => Ok(JobMixKind::Large),
            "small" => Ok(JobMixKind::Small),
            "mixed" => Ok(JobMixKind::Mixed),
            other => Err(format!("unknown job mix {other:?}, expected large|small|mixed")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobMixConfig {
    pub kind: JobMixKind,
    pub seed: u64,
    /// Fraction of total effective capacity the mix may consume, in (0, 1].
    pub budget: f64,
    pub priorities: Vec<f64>,
    pub max_jobs: usize,
}

impl JobMixConfig {
    pub fn new(kind: JobMixKind, seed: u64, budget: f64) -> Self {
        JobMixConfig {
            kind,
            seed,
            budget,
            priorities: vec![1.0, 2.0, 4.0, 8.0],
            max_jobs: 12,
        }
    }
}

/// Draws a deterministic job mix against the effective capacity grid.
///
/// Total volume stays within `budget * sum(x_max)`, and so does each home
/// DC's volume relative to its own horizon capacity, so the mix always fits
/// the aggregate feasibility invariant.
pub fn generate_jobmix(config: &JobMixConfig, capacity: &Grid) -> Result<Vec<ComputeJob>, SynthError> {
    let budget = config.budget;
    if !(budget > 0.0 && budget <= 1.0) || config.priorities.is_empty() {
        return Err(SynthError::BudgetInfeasible { budget });
    }
    let d_count = capacity.dc_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let limit = budget * capacity.sum();
    let home_limit: Vec<f64> = (0..d_count)
        .map(|d| budget * capacity.row(d).iter().sum::<f64>())
        .collect();
    let mut used = 0.0;
    let mut used_home = vec![0.0; d_count];
    let mut jobs = Vec::new();
    let attempts = 20 * config.max_jobs.max(1);

    for _ in 0..attempts {
        if jobs.len() >= config.max_jobs {
            break;
        }
        let home = rng.gen_range(0..d_count);
        let large = match config.kind {
            JobMixKind::Large => true,
            JobMixKind::Small => false,
            JobMixKind::Mixed => rng.gen_bool(0.5),
        };
        let row = capacity.row(home);
        let volume = if large {
            let peak = row.iter().copied().fold(0.0, f64::max);
            peak * rng.gen_range(1.1..2.0)
        } else {
            let floor = row.iter().copied().fold(f64::INFINITY, f64::min);
            floor * rng.gen_range(0.25..1.0)
        };
        let priority = config.priorities[rng.gen_range(0..config.priorities.len())];
        if volume <= 0.0 || used + volume > limit || used_home[home] + volume > home_limit[home] {
            continue;
        }
        used += volume;
        used_home[home] += volume;
        jobs.push(ComputeJob {
            id: jobs.len() as u64 + 1,
            home,
            volume,
            priority,
        });
    }
    if jobs.is_empty() {
        return Err(SynthError::BudgetInfeasible { budget });
    }
    Ok(jobs)
}

/// Recipe for a complete synthetic scenario.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub name: String,
    pub dc_count: usize,
    pub horizon: usize,
    pub jobmix: JobMixConfig,
    pub base: f64,
    pub amplitude: f64,
    pub params: SolverParams,
}

impl SyntheticSpec {
    pub fn new(dc_count: usize, horizon: usize, jobmix: JobMixConfig) -> Self {
        SyntheticSpec {
            name: format!("synthetic-{dc_count}dc-{:?}-seed{}", jobmix.kind, jobmix.seed).to_lowercase(),
            dc_count,
            horizon,
            jobmix,
            base: 0.5,
            amplitude: 0.3,
            params: SolverParams::default(),
        }
    }
}

/// Builds a ring-plus-chords fleet with regionally varying carbon intensity.
pub fn synthetic_scenario(spec: &SyntheticSpec) -> Result<Scenario, ScenarioError> {
    let n = spec.dc_count;
    let t_len = spec.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.jobmix.seed ^ 0x5eed_f1ee7);
    let capacity: Vec<f64> = (0..n).map(|_| rng.gen_range(80.0..120.0)).collect();

    let mut edges = Vec::new();
    if n > 1 {
        for d in 0..n {
            let next = (d + 1) % n;
            if n == 2 && d == 1 {
                break;
            }
            edges.push(Edge {
                a: d,
                b: next,
                price: rng.gen_range(0.5..2.0),
            });
        }
        for d in (0..n).step_by(3) {
            let across = (d + n / 2) % n;
            if across != d && across != (d + 1) % n && (across + 1) % n != d {
                edges.push(Edge {
                    a: d.min(across),
                    b: d.max(across),
                    price: rng.gen_range(1.0..3.0),
                });
            }
        }
    }
    let fleet = DataCenterFleet::new(n, edges, capacity.clone())?;

    // Region-level intensity with a diurnal swing; ranges loosely follow
    // low-carbon hydro/nuclear grids up to coal-heavy ones.
    let carbon = {
        let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(40.0..650.0)).collect();
        let phases: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        Grid::from_fn(n, t_len, |d, t| {
            let swing = 0.35 * (2.0 * PI * t as f64 / t_len as f64 + phases[d]).sin();
            levels[d] * (1.0 + swing)
        })
    };
    let inflexible = synth_inflexible_load(&capacity, t_len, spec.amplitude, &default_phases(n), spec.base)
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
    let effective = Grid::from_fn(n, t_len, |d, t| capacity[d] - inflexible.get(d, t));
    let jobs = generate_jobmix(&spec.jobmix, &effective).map_err(|e| ScenarioError::Validation(e.to_string()))?;
    Scenario::new(
        spec.name.clone(),
        fleet,
        None,
        jobs,
        t_len,
        carbon,
        inflexible,
        spec.params.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dc(volume: f64, capacity: f64) -> String {
        format!(
            r#"{{
              "schema_version": 1,
              "name": "minimal",
              "horizon": 1,
              "fleet": {{"dc_count": 1, "physical_capacity": [{capacity}], "edges": []}},
              "jobs": [{{"id": 1, "home": 1, "volume": {volume}, "priority": 1.0}}],
              "carbon": {{"D": 1, "T": 1, "values": [[100.0]]}},
              "inflexible": {{"D": 1, "T": 1, "values": [[0.0]]}}
            }}"#
        )
    }

    #[test]
    fn minimal_file_loads() {
        let s = parse_scenario(&one_dc(1.0, 2.0), Path::new(".")).unwrap();
        assert_eq!(s.dc_count(), 1);
        assert_eq!(s.horizon, 1);
        assert_eq!(s.effective_capacity().get(0, 0), 2.0);
        assert_eq!(s.params, SolverParams::default());
    }

    #[test]
    fn oversubscribed_file_names_the_invariant() {
        let err = parse_scenario(&one_dc(3.0, 2.0), Path::new(".")).unwrap_err();
        match err {
            ScenarioError::Validation(msg) => assert!(msg.contains("aggregate feasibility"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let err = parse_scenario("{\"schema_version\": 1", Path::new(".")).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
        let err = parse_scenario(&one_dc(1.0, 2.0).replace("\"schema_version\": 1", "\"schema_version\": 7"), Path::new("."))
            .unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn inflexible_above_capacity_is_rejected() {
        let text = one_dc(1.0, 2.0).replace("[[0.0]]", "[[2.5]]");
        let err = parse_scenario(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("effective capacity nonnegative"));
    }

    fn mapping(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn csv_transcribes_columns_to_rows() {
        let g = parse_carbon_csv("A,B\n100.0,200.0\n50.0,250.0\n", &mapping(&[("A", 0), ("B", 1)]), 2, 2).unwrap();
        assert_eq!(g.rows(), vec![vec![100.0, 50.0], vec![200.0, 250.0]]);
    }

    #[test]
    fn csv_errors() {
        let m = mapping(&[("A", 0)]);
        assert!(matches!(
            parse_carbon_csv("A\n-1.0\n", &m, 1, 1),
            Err(CarbonCsvError::NegativeIntensity { row: 1, .. })
        ));
        assert_eq!(
            parse_carbon_csv("A\n1.0\n", &m, 1, 3),
            Err(CarbonCsvError::TooFewRows { needed: 3, found: 1 })
        );
        assert_eq!(
            parse_carbon_csv("B\n1.0\n", &m, 1, 1),
            Err(CarbonCsvError::MissingColumn("A".into()))
        );
    }

    #[test]
    fn csv_single_column_passthrough_ignores_extra_rows() {
        let g = parse_carbon_csv("Only\n1\n2\n3\n4\n5\n6\n", &mapping(&[("Only", 0)]), 1, 5).unwrap();
        assert_eq!(g.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn flat_sinusoid_is_constant() {
        let g = synth_inflexible_load(&[10.0, 4.0], 3, 0.0, &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(g.row(0), &[5.0; 3]);
        assert_eq!(g.row(1), &[2.0; 3]);
    }

    #[test]
    fn extremal_phase_hits_zero() {
        let g = synth_inflexible_load(&[10.0], 4, 0.5, &[-PI / 2.0], 0.5).unwrap();
        assert!(g.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn anti_phase_grids_mirror() {
        let g = synth_inflexible_load(&[1.0, 1.0], 4, 0.2, &[0.0, PI], 0.3).unwrap();
        // Pointwise formula: 0.3 + 0.2 sin(pi t / 2 + phase).
        let expected0 = [0.3, 0.5, 0.3, 0.1];
        let expected1 = [0.3, 0.1, 0.3, 0.5];
        for t in 0..4 {
            assert!((g.get(0, t) - expected0[t]).abs() < 1e-12);
            assert!((g.get(1, t) - expected1[t]).abs() < 1e-12);
            assert!((g.get(0, t) + g.get(1, t) - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_out_of_range() {
        assert!(matches!(
            synth_inflexible_load(&[1.0], 2, 0.6, &[0.0], 0.5),
            Err(SynthError::AmplitudeOutOfRange { .. })
        ));
    }

    fn flat_capacity() -> Grid {
        Grid::from_fn(1, 2, |_, _| 10.0)
    }

    #[test]
    fn small_jobs_fit_one_step() {
        let jobs = generate_jobmix(&JobMixConfig::new(JobMixKind::Small, 3, 0.5), &flat_capacity()).unwrap();
        assert!(jobs.iter().all(|j| j.volume <= 10.0));
        assert!(jobs.iter().map(|j| j.volume).sum::<f64>() <= 10.0);
    }

    #[test]
    fn large_jobs_exceed_one_step() {
        let jobs = generate_jobmix(&JobMixConfig::new(JobMixKind::Large, 3, 0.75), &flat_capacity()).unwrap();
        assert!(jobs.iter().all(|j| j.volume > 10.0));
        assert!(jobs.iter().map(|j| j.volume).sum::<f64>() <= 15.0);
    }

    #[test]
    fn large_jobs_need_room_in_the_budget() {
        assert_eq!(
            generate_jobmix(&JobMixConfig::new(JobMixKind::Large, 3, 0.5), &flat_capacity()),
            Err(SynthError::BudgetInfeasible { budget: 0.5 })
        );
    }

    #[test]
    fn jobmix_is_deterministic_in_seed() {
        let cap = Grid::from_fn(3, 5, |d, t| 10.0 + d as f64 + t as f64);
        let cfg = JobMixConfig::new(JobMixKind::Mixed, 42, 0.6);
        assert_eq!(generate_jobmix(&cfg, &cap).unwrap(), generate_jobmix(&cfg, &cap).unwrap());
    }

    #[test]
    fn synthetic_twelve_dc_scenario() {
        let spec = SyntheticSpec::new(12, 5, JobMixConfig::new(JobMixKind::Mixed, 7, 0.4));
        let s = synthetic_scenario(&spec).unwrap();
        assert_eq!(s.dc_count(), 12);
        assert_eq!(s.carbon.horizon(), 5);
        let text = scenario_to_json(&s);
        let back = parse_scenario(&text, Path::new(".")).unwrap();
        assert_eq!(back, s);
    }
}
