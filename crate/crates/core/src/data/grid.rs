//! Electrode-to-grid layouts and channel projection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_LAYOUT: &str = include_str!("../../data/layout_10x11.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Electrode {
    pub label: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub electrodes: Vec<Electrode>,
}

/// Upper case without the trailing dots some recordings pad labels with.
pub fn normalize_label(label: &str) -> String {
    label.trim().trim_end_matches('.').replace('.', "").to_uppercase()
}

impl GridLayout {
    /// The shipped 64-electrode layout on a 10×11 grid.
    pub fn standard() -> Self {
        let layout: Self = serde_json::from_str(DEFAULT_LAYOUT).expect("shipped layout parses");
        layout.validate().expect("shipped layout is valid");
        layout
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let mut cells: HashMap<(usize, usize), &str> = HashMap::new();
        let mut labels: HashMap<String, ()> = HashMap::new();
        for e in &self.electrodes {
            if e.row >= self.rows || e.col >= self.cols {
                return Err(Error::Config(format!(
                    "electrode {} at ({}, {}) outside the {}×{} grid",
                    e.label, e.row, e.col, self.rows, self.cols
                )));
            }
            if let Some(other) = cells.insert((e.row, e.col), &e.label) {
                return Err(Error::Config(format!(
                    "electrodes {other} and {} share cell ({}, {})",
                    e.label, e.row, e.col
                )));
            }
            if labels.insert(normalize_label(&e.label), ()).is_some() {
                return Err(Error::Config(format!("electrode {} listed twice", e.label)));
            }
        }
        Ok(())
    }

    /// Flat cell index per normalized label.
    pub fn index(&self) -> BTreeMap<String, usize> {
        self.electrodes
            .iter()
            .map(|e| (normalize_label(&e.label), e.row * self.cols + e.col))
            .collect()
    }

    /// Destination cell for each recording channel; channels absent from
    /// the layout map to `None`. Every layout electrode must be present.
    pub fn channel_map<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<Option<usize>>> {
        let index = self.index();
        let map: Vec<Option<usize>> = labels.iter().map(|l| index.get(&normalize_label(l.as_ref())).copied()).collect();
        let found: std::collections::HashSet<usize> = map.iter().flatten().copied().collect();
        if found.len() != index.len() {
            let missing: Vec<&String> = index.iter().filter(|(_, c)| !found.contains(c)).map(|(l, _)| l).collect();
            return Err(Error::Config(format!("recording lacks layout electrodes {missing:?}")));
        }
        Ok(map)
    }

    /// Places channel values on the grid; cells without an electrode are 0.
    pub fn project<S: AsRef<str>>(&self, values: &[f64], labels: &[S]) -> Result<Vec<f64>> {
        if values.len() != labels.len() {
            return Err(Error::shape("grid projection", labels.len(), values.len()));
        }
        let map = self.channel_map(labels)?;
        let mut frame = vec![0.0; self.cells()];
        for (v, cell) in values.iter().zip(map) {
            if let Some(c) = cell {
                frame[c] = *v;
            }
        }
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(l: &GridLayout) -> Vec<String> {
        l.electrodes.iter().map(|e| e.label.clone()).collect()
    }

    #[test]
    fn standard_layout_covers_montage() {
        let l = GridLayout::standard();
        assert_eq!((l.rows, l.cols), (10, 11));
        assert_eq!(l.electrodes.len(), 64);
        let idx = l.index();
        for name in ["C3", "CZ", "C4", "FCZ", "IZ", "T9", "T10", "FPZ", "POZ", "CPZ"] {
            assert!(idx.contains_key(name), "{name}");
        }
        assert_eq!(idx["CZ"], 4 * 11 + 5);
    }

    #[test]
    fn ones_sum_to_64() {
        let l = GridLayout::standard();
        let names = labels(&l);
        let frame = l.project(&vec![1.0; 64], &names).unwrap();
        assert_eq!(frame.iter().sum::<f64>(), 64.0);
        assert_eq!(frame.iter().filter(|&&v| v == 0.0).count(), 46);
    }

    #[test]
    fn swap_moves_two_cells() {
        let l = GridLayout::standard();
        let mut names = labels(&l);
        let vals: Vec<f64> = (0..64).map(f64::from).collect();
        let a = l.project(&vals, &names).unwrap();
        names.swap(3, 40);
        let b = l.project(&vals, &names).unwrap();
        assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 2);
    }

    #[test]
    fn physionet_style_labels() {
        let l = GridLayout::standard();
        let mut names: Vec<String> = labels(&l).iter().map(|s| format!("{:.<4}", capitalize(s))).collect();
        names.push("EDF Annotations".into());
        let map = l.channel_map(&names).unwrap();
        assert_eq!(map.iter().flatten().count(), 64);
        assert_eq!(map[64], None);
        assert!(l.channel_map(&names[1..]).is_err());
    }

    fn capitalize(s: &str) -> String {
        let mut c = s.chars();
        let first = c.next().unwrap();
        first.to_string() + &c.as_str().to_lowercase()
    }

    #[test]
    fn duplicate_cell_rejected() {
        let mut l = GridLayout::standard();
        l.electrodes[1].row = l.electrodes[0].row;
        l.electrodes[1].col = l.electrodes[0].col;
        assert!(matches!(l.validate(), Err(Error::Config(m)) if m.contains("share")));
        let mut l = GridLayout::standard();
        l.electrodes[0].col = 11;
        assert!(l.validate().is_err());
    }
}
