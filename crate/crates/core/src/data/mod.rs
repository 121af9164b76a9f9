//! Recording ingestion, trial extraction, folds and synthetic data.

mod cache;
mod edf;
mod filter;
mod folds;
mod grid;
mod normalize;
mod physionet;
mod synth;
mod trials;

pub use cache::{read_trial_cache, write_trial_cache, CacheSettings};
pub use edf::{
    parse_edf, parse_tals, read_edf, write_edf, Annotation, EdfBuilder, EdfHeader, EdfRecording, RawAnnotation,
    SignalHeader,
};
pub use filter::{bandpass, Bandpass, BandpassSpec, Biquad};
pub use folds::{make_folds, protocol_folds, FoldPlan, FoldSplit, CORPUS_SUBJECTS, PROTOCOL_SUBJECTS};
pub use grid::{normalize_label, Electrode, GridLayout};
pub use normalize::Normalizer;
pub use physionet::{load_corpus, parse_run_name, Corpus, CorpusOptions};
pub use synth::{synth_dataset, synth_subjects, Blob, SynthSpec};
pub use trials::{extract_trials, CueTable, Extraction, Label, Trial, TrialWindow};
