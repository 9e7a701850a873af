//! Benchmark harness for the `pisto` optimizers: scene generation, seeded
//! runs over planning scenes and control tasks, CSV output and summaries.
//!
//! Results go to a single CSV with a fixed header ([`runner::CSV_HEADER`]).
//! Each run contributes one `iteration` row per optimizer iteration and one
//! final `summary` row; the summary row names a JSON sidecar holding the
//! reported solution.

pub mod config;
pub mod runner;
pub mod scenes;
pub mod summary;
pub mod task;

pub use config::ExperimentConfig;
pub use runner::{read_rows, run_experiment, write_results, CsvRow, RunRecord, CSV_HEADER};
pub use scenes::{generate_scenes, write_scenes};
pub use summary::{summarize, MethodSummary};
pub use task::{load_tasks, Task};
