//! Calibration scenarios.
//!
//! * Bottleneck: a few agents pass a single door; the objective is the
//!   squared error of either the mean final position (continuous) or the
//!   number of agents past the door (discrete, via tracked branches).
//! * Exit selection: agents choose among four doors by weighing distance
//!   against congestion with a per-agent coefficient drawn from a 20-bin
//!   input histogram; the objective is the Wasserstein distance between the
//!   evacuation-time histogram and a reference.

mod bottleneck;
mod exit_selection;
mod histogram;
mod reference;

pub use bottleneck::{
    bottleneck_measure, initial_positions, run_bottleneck, simulate_bottleneck, BottleneckConfig, BottleneckObjective,
    BottleneckProgram, SITE_EVACUATED,
};
pub use exit_selection::{
    coefficient_uniforms, draw_coefficients, plain_coefficients, run_exit_selection, simulate_exit_selection, Exit,
    ExitDecision, ExitOutcome, ExitSelectionConfig, ExitSelectionProgram, EXITS, SITE_EXIT_CHOICE,
};
pub use histogram::{
    sample_coefficient, wasserstein_1d, CoefficientDraw, Histogram20, BINS, MIN_BIN_WEIGHT, SITE_COEFFICIENT,
};
pub use reference::{make_bottleneck_reference, make_exit_reference, Reference, ReferenceValue};
