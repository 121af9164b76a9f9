//! Trial cache in the tensor container so recordings are parsed once.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::BandpassSpec;
use super::trials::{Label, Trial, TrialWindow};
use crate::container::{TensorReader, TensorWriter};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSettings {
    pub window: TrialWindow,
    pub filter: Option<BandpassSpec>,
    pub grid: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrialMeta {
    subject: u32,
    run: u32,
    label: Label,
    onset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CacheMeta {
    settings: CacheSettings,
    timesteps: usize,
    trials: Vec<TrialMeta>,
}

pub fn write_trial_cache(stem: &Path, trials: &[Trial], settings: &CacheSettings) -> Result<()> {
    let timesteps = trials.first().map_or(0, |t| t.timesteps);
    let cells = settings.grid.0 * settings.grid.1;
    let mut data = Vec::with_capacity(trials.len() * timesteps * cells);
    for t in trials {
        if t.timesteps != timesteps || t.input.len() != timesteps * cells {
            return Err(Error::shape("cached trial", timesteps * cells, t.input.len()));
        }
        data.extend_from_slice(&t.input);
    }
    let mut w = TensorWriter::new();
    w.push_f32("inputs", &[trials.len(), timesteps, settings.grid.0, settings.grid.1], &data)?;
    let meta = CacheMeta {
        settings: settings.clone(),
        timesteps,
        trials: trials.iter().map(|t| TrialMeta { subject: t.subject, run: t.run, label: t.label, onset: t.onset }).collect(),
    };
    w.set_meta(serde_json::to_value(meta)?);
    w.write(stem)
}

/// Loads a cache; fails when it was built with different settings.
pub fn read_trial_cache(stem: &Path, expected: &CacheSettings) -> Result<Vec<Trial>> {
    let r = TensorReader::open(stem)?;
    let meta: CacheMeta = serde_json::from_value(r.manifest.meta.clone())?;
    if &meta.settings != expected {
        return Err(Error::Container(format!("trial cache {} built with other settings", stem.display())));
    }
    let data = r.f32("inputs")?;
    let per = if meta.trials.is_empty() { 0 } else { data.len() / meta.trials.len() };
    Ok(meta
        .trials
        .into_iter()
        .enumerate()
        .map(|(k, m)| Trial {
            input: data[k * per..(k + 1) * per].to_vec(),
            timesteps: meta.timesteps,
            label: m.label,
            subject: m.subject,
            run: m.run,
            onset: m.onset,
        })
        .collect())
}
