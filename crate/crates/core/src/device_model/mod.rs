//! Phenomenological model of the ferroelectric synapse.
//!
//! A programming pulse moves the normalized conductance `W ∈ [0, 1]` by a
//! Beta-shaped, state-dependent step that vanishes at both ends of the range.
//! This module evaluates that kernel, calibrates it from characterization
//! logs and summarizes per-level programming variability.

mod characterization;
mod fit;
mod kernel;

pub use characterization::{
    derive_samples, group_by_amplitude, level_statistics, read_pulse_log, synthesize_pulse_log,
    write_pulse_log, ConductanceNormalization, LevelStatistics, PositivePulse, PulseLogSpec,
    PulseRecord,
};
pub use fit::{fit_kernel, fit_kernel_with, fit_polarity, CharacterizationSample, FitOptions, KernelFit, PolarityFit};
pub use kernel::{apply_pulse, delta_w, BetaKernel, FerroKernelParams, Polarity};
