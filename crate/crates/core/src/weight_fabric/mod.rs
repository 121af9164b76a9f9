//! Bridge between network weights and modeled devices.
//!
//! A signed weight in `[-bound, bound]` is stored as the conductance of one
//! active device, `w⁺ = 0.5·w/bound + 0.5`, read against a reference device
//! fixed at 0.5. Training deltas are accumulated digitally per synapse and
//! only turned into programming pulses once they cross a threshold.

mod events;
mod mapping;
mod quantize;
mod synapse;

pub use events::{event_report, EventLog, EventReport, EventRow, LayerEvents};
pub use mapping::{map_from_device, map_to_device, LayerBound, W_MINUS_REF};
pub use quantize::{add_program_noise, quantize, quantize_value};
pub use synapse::{
    CommitSummary, DifferentialSynapseArray, ProgrammingEvent, ProgrammingPolicy, ThresholdSpan, WriteNoise,
};
