//! Data generation, ingestion, evaluation and sweeps for the
//! domain-adaptation and treatment-effect experiments.

mod csv_io;
mod data;
mod eval;
mod methods;
mod split;
mod sweep;
mod synthetic;

pub use csv_io::{block_header, load_cate_csv, load_cate_csv_with, read_cate_csv, write_cate_csv, CATE_FEATURES};
pub use data::{CateDataset, SourceSample, TargetSample};
pub use eval::{eval_cate, eval_da, mean_and_se, prop1_check, CateMetrics, Prop1Check, PROP1_SLACK};
pub use methods::{cate_label, run_cate, run_da, CateMethod, CateRun, DaMethod, DaRun};
pub use split::{Split, SplitConfig};
pub use sweep::{apply_overrides, dataset_family, CellOutcome, summarize, write_results_csv, Cell, DatasetSpec, ResultRow, Sweep, SweepConfig, RESULTS_HEADER};
pub use synthetic::{gen_synthetic_cate, gen_synthetic_da, CateSpec, DaOracle, DaProblem, DaSpec, EffectFamily, BETA_VARIANCE};
