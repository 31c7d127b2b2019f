//! Grids of (dataset × method × configuration) cells run in parallel, with
//! results collected in cell order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::par::{map_ordered, Parallelism};
use crate::rcfr::{RcfrModel, TrainConfig};

use super::csv_io::load_cate_csv;
use super::data::CateDataset;
use super::eval::mean_and_se;
use super::methods::{cate_label, run_cate, run_da, CateMethod, DaMethod};
use super::split::SplitConfig;
use super::synthetic::{gen_synthetic_cate, gen_synthetic_da, CateSpec, DaSpec};

pub const RESULTS_HEADER: [&str; 12] = [
    "method",
    "dataset",
    "seed",
    "alpha",
    "lambda_w",
    "lambda_h",
    "rmse_tau",
    "target_risk",
    "risk_arm0",
    "risk_arm1",
    "wall_ms",
    "status",
];

/// One line of the results table. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub dataset: String,
    /// Run seed, or `mean` / `se` on summary rows.
    pub seed: String,
    pub alpha: Option<f64>,
    pub lambda_w: Option<f64>,
    pub lambda_h: Option<f64>,
    pub rmse_tau: Option<f64>,
    pub target_risk: Option<f64>,
    pub risk_arm0: Option<f64>,
    pub risk_arm1: Option<f64>,
    pub wall_ms: Option<u64>,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
}

impl ResultRow {
    fn blank(method: String, dataset: String, seed: u64) -> Self {
        Self {
            method,
            dataset,
            seed: seed.to_string(),
            alpha: None,
            lambda_w: None,
            lambda_h: None,
            rmse_tau: None,
            target_risk: None,
            risk_arm0: None,
            risk_arm1: None,
            wall_ms: None,
            status: "ok".into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        vec![
            self.method.clone(),
            self.dataset.clone(),
            self.seed.clone(),
            f(self.alpha),
            f(self.lambda_w),
            f(self.lambda_h),
            f(self.rmse_tau),
            f(self.target_risk),
            f(self.risk_arm0),
            f(self.risk_arm1),
            self.wall_ms.map_or_else(String::new, |v| v.to_string()),
            self.status.clone(),
        ]
    }
}

pub fn write_results_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Per (method, dataset family) `mean` and `se` rows over successful runs,
/// in order of first appearance. `family` maps a dataset label to its group.
pub fn summarize(rows: &[ResultRow], family: impl Fn(&str) -> String) -> Vec<ResultRow> {
    let mut groups: Vec<((String, String), Vec<&ResultRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let key = (r.method.clone(), family(&r.dataset));
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = Vec::new();
    for ((method, dataset), g) in groups {
        let stat = |get: fn(&ResultRow) -> Option<f64>| {
            let v: Vec<f64> = g.iter().filter_map(|r| get(r)).collect();
            (!v.is_empty()).then(|| mean_and_se(&v))
        };
        let cols = [
            stat(|r| r.alpha),
            stat(|r| r.lambda_w),
            stat(|r| r.lambda_h),
            stat(|r| r.rmse_tau),
            stat(|r| r.target_risk),
            stat(|r| r.risk_arm0),
            stat(|r| r.risk_arm1),
        ];
        for (label, pick) in [("mean", 0usize), ("se", 1)] {
            let v = |c: Option<(f64, f64)>| c.map(|(m, s)| if pick == 0 { m } else { s });
            out.push(ResultRow {
                method: method.clone(),
                dataset: dataset.clone(),
                seed: label.into(),
                alpha: v(cols[0]),
                lambda_w: v(cols[1]),
                lambda_h: v(cols[2]),
                rmse_tau: v(cols[3]),
                target_risk: v(cols[4]),
                risk_arm0: v(cols[5]),
                risk_arm1: v(cols[6]),
                wall_ms: None,
                status: format!("n={}", g.len()),
            });
        }
    }
    out
}

/// Data source of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    SyntheticDa(DaSpec),
    SyntheticCate(CateSpec),
    /// Realizations from a file or directory in the treatment-effect schema.
    Csv {
        path: PathBuf,
        /// Use only the first `limit` realizations.
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::SyntheticDa(s) => format!("synth-da-n{}-m{}-d{}", s.n, s.m, s.d),
            DatasetSpec::SyntheticCate(s) => format!(
                "synth-cate-n{}-d{}-{}-g{}",
                s.n,
                s.d,
                match s.effect {
                    super::synthetic::EffectFamily::Linear => "linear",
                    super::synthetic::EffectFamily::Quadratic => "quadratic",
                },
                s.gamma
            ),
            DatasetSpec::Csv { path, .. } => path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    fn is_da(&self) -> bool {
        matches!(self, DatasetSpec::SyntheticDa(_))
    }
}

/// JSON sweep description. `base` holds [`TrainConfig`] keys applied to the
/// defaults of each dataset kind; `grid` maps `TrainConfig` keys to lists of
/// values whose cartesian product is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub base: serde_json::Map<String, Value>,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    pub methods: Vec<String>,
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub split: SplitConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Da(DaMethod),
    Cate(CateMethod),
}

/// A fully resolved unit of work.
#[derive(Debug, Clone)]
pub struct Cell {
    pub index: usize,
    dataset: usize,
    replicate: usize,
    method: Method,
    pub seed: u64,
    pub config: TrainConfig,
}

/// A validated sweep ready to run.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub cells: Vec<Cell>,
    datasets: Vec<DatasetSpec>,
    csv_data: Vec<Option<Vec<CateDataset>>>,
    split: SplitConfig,
}

/// Apply `overrides` to `base` through the JSON form so every field is
/// addressable by key and unknown keys are rejected.
pub fn apply_overrides(base: &TrainConfig, overrides: &serde_json::Map<String, Value>) -> Result<TrainConfig> {
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("config serializes to an object");
    for (k, val) in overrides {
        if !obj.contains_key(k) {
            return Err(Error::Config(format!("unknown config key `{k}`")));
        }
        obj.insert(k.clone(), val.clone());
    }
    let cfg: TrainConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn grid_points(grid: &BTreeMap<String, Vec<Value>>) -> Result<Vec<serde_json::Map<String, Value>>> {
    let mut points = vec![serde_json::Map::new()];
    for (key, values) in grid {
        if values.is_empty() {
            return Err(Error::Config(format!("grid key `{key}` has no values")));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Expand into cells. Replicate `r` of every dataset uses run seed
    /// `seed + r` for data, split and training, so methods are compared on
    /// the same draws. CSV datasets use one replicate per realization.
    pub fn build(&self) -> Result<Sweep> {
        if self.methods.is_empty() || self.datasets.is_empty() {
            return Err(Error::Config("a sweep needs at least one method and one dataset".into()));
        }
        self.split.validate()?;
        let points = grid_points(&self.grid)?;
        let mut cells = Vec::new();
        let mut csv_data = Vec::new();
        for (di, ds) in self.datasets.iter().enumerate() {
            let defaults = if ds.is_da() { TrainConfig::synthetic_da() } else { TrainConfig::cate() };
            let base = apply_overrides(&defaults, &self.base)?;
            let (replicates, loaded) = match ds {
                DatasetSpec::Csv { path, limit } => {
                    let mut data = load_cate_csv(path)?;
                    if let Some(k) = limit {
                        data.truncate(*k);
                    }
                    (data.len(), Some(data))
                }
                DatasetSpec::SyntheticDa(s) => {
                    s.validate()?;
                    (self.replicates, None)
                }
                DatasetSpec::SyntheticCate(s) => {
                    s.validate()?;
                    (self.replicates, None)
                }
            };
            csv_data.push(loaded);
            let methods = self
                .methods
                .iter()
                .map(|m| {
                    if ds.is_da() {
                        m.parse().map(Method::Da)
                    } else {
                        m.parse().map(Method::Cate)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            for r in 0..replicates {
                let seed = self.seed.wrapping_add(r as u64);
                for &method in &methods {
                    for p in &points {
                        let config = TrainConfig {
                            seed,
                            ..apply_overrides(&base, p)?
                        };
                        cells.push(Cell {
                            index: cells.len(),
                            dataset: di,
                            replicate: r,
                            method,
                            seed,
                            config,
                        });
                    }
                }
            }
        }
        Ok(Sweep {
            cells,
            datasets: self.datasets.clone(),
            csv_data,
            split: self.split,
        })
    }
}

impl Sweep {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Run every cell; failures become rows with an error status. With
    /// `timing` the wall-clock column is filled (and output is no longer
    /// reproducible byte for byte).
    pub fn run(&self, parallelism: Parallelism, timing: bool) -> Vec<ResultRow> {
        self.run_detailed(parallelism, timing).into_iter().map(|o| o.row).collect()
    }

    /// Like [`Sweep::run`], also keeping fitted networks and errors.
    pub fn run_detailed(&self, parallelism: Parallelism, timing: bool) -> Vec<CellOutcome> {
        map_ordered(self.cells.iter().collect(), parallelism, |cell| {
            let start = Instant::now();
            let mut out = self.run_cell(cell);
            if timing {
                out.row.wall_ms = Some(start.elapsed().as_millis() as u64);
            }
            out
        })
    }

    fn run_cell(&self, cell: &Cell) -> CellOutcome {
        let ds = &self.datasets[cell.dataset];
        let dataset = match ds {
            DatasetSpec::Csv { .. } => format!("{}#{}", ds.label(), cell.replicate),
            _ => ds.label(),
        };
        let cfg = &cell.config;
        let name = match cell.method {
            Method::Da(m) => m.name().to_string(),
            Method::Cate(m) => cate_label(m, cfg.alpha_mode),
        };
        let mut row = ResultRow::blank(name, dataset, cell.seed);
        let mut model = None;
        let outcome: Result<()> = (|| {
            match (cell.method, ds) {
                (Method::Da(m), DatasetSpec::SyntheticDa(spec)) => {
                    let problem = gen_synthetic_da(spec, cell.seed)?;
                    let run = run_da(&problem, m, cfg)?;
                    row.target_risk = Some(run.target_rmse);
                    row.lambda_h = Some(cfg.lambda_h);
                    if m == DaMethod::Rcfr {
                        row.alpha = Some(run.model.alpha);
                        row.lambda_w = Some(cfg.lambda_w);
                    }
                    model = Some(run.model);
                }
                (Method::Cate(m), _) => {
                    let generated;
                    let data = match ds {
                        DatasetSpec::SyntheticCate(spec) => {
                            generated = gen_synthetic_cate(spec, cell.seed)?;
                            &generated
                        }
                        _ => &self.csv_data[cell.dataset].as_ref().expect("loaded")[cell.replicate],
                    };
                    let run = run_cate(data, m, cfg, &self.split, cell.seed)?;
                    row.alpha = run.alpha;
                    if m.is_network() {
                        row.lambda_h = Some(cfg.lambda_h);
                    }
                    if matches!(m, CateMethod::Rcfr | CateMethod::IpmWnn) {
                        row.lambda_w = Some(cfg.lambda_w);
                    }
                    row.rmse_tau = Some(run.metrics.rmse_tau);
                    row.target_risk = Some(run.metrics.target_risk);
                    row.risk_arm0 = Some(run.metrics.risk_arm0);
                    row.risk_arm1 = Some(run.metrics.risk_arm1);
                    model = run.model;
                }
                _ => unreachable!("methods are parsed per dataset kind"),
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => CellOutcome { row, model, error: None },
            Err(e) => CellOutcome {
                row: ResultRow {
                    status: format!("error: {e}"),
                    ..ResultRow::blank(row.method, row.dataset, cell.seed)
                },
                model: None,
                error: Some(e),
            },
        }
    }
}

/// A finished cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub model: Option<RcfrModel>,
    pub error: Option<Error>,
}

/// Dataset family of a label: CSV realizations `name#k` group under `name`.
pub fn dataset_family(label: &str) -> String {
    label.split('#').next().unwrap_or(label).to_string()
}
