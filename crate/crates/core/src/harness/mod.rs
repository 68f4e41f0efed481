//! Experiment harness: TOML configuration, hyperparameter sweeps with
//! macro- and microreplications, gradient-fidelity studies, reference
//! generation and bit-exact replay of single runs.
//!
//! Output layout of a sweep:
//!
//! ```text
//! <output_dir>/config.toml    effective configuration
//! <output_dir>/configs.csv    config_id, method, hyperparameters
//! <output_dir>/manifest.csv   one row per run with status and seed
//! <output_dir>/summary.csv    mean final crisp objective per configuration
//! <output_dir>/traces/<run id>.csv
//! ```

mod config;
mod fidelity;
mod grid;
mod seeds;
mod sweep;

pub use config::{
    FidelitySection, GaGrid, GdGrid, HarnessConfig, HeavisideSection, MutationKind, PsoGrid, ReferenceMode,
    ReferenceSection, RunSection, ScenarioKind, SweepSection, DEFAULTS_TOML,
};
pub use fidelity::{make_reference, reference_seeds, run_fidelity, FidelityOutcome, FidelityRow, MaeRow, FIDELITY_COLUMNS};
pub use grid::{expand_grid, GridEntry, MethodConfig};
pub use seeds::{derive_seed, stream, streams, RunCoordinates};
pub use sweep::{
    parse_run_id, read_trace, replay, run_id, run_study, run_sweep, summarize_traces, trace_header, trace_records,
    traces_dir, write_trace, ReplayReport, RunRecord, RunStatus, Study, SummaryRow, SweepOutcome, TRACE_COLUMNS,
};
