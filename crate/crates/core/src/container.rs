//! Flat little-endian tensor container.
//!
//! `<stem>.bin` holds the raw tensor bytes back to back; `<stem>.json` is the
//! manifest listing each tensor's name, shape, byte offset, element width and
//! optional weight bound, plus free-form metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "ferrosyn-tensors";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    /// Bytes per element: 8 for f64, 4 for f32.
    pub dtype_width: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub byte_order: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

#[derive(Debug, Default)]
pub struct TensorWriter {
    entries: Vec<TensorEntry>,
    data: Vec<u8>,
    meta: serde_json::Value,
}

impl TensorWriter {
    pub fn new() -> Self {
        Self::default()
    }

    fn check(&self, name: &str, shape: &[usize], len: usize) -> Result<()> {
        if shape.iter().product::<usize>() != len {
            return Err(Error::shape(format!("tensor {name}"), shape.iter().product(), len));
        }
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Container(format!("duplicate tensor {name}")));
        }
        Ok(())
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], values: &[f64], bound: Option<f64>) -> Result<()> {
        self.check(name, shape, values.len())?;
        self.entries.push(TensorEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.data.len() as u64,
            dtype_width: 8,
            bound,
        });
        self.data.reserve(values.len() * 8);
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    pub fn push_f32(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        self.check(name, shape, values.len())?;
        self.entries.push(TensorEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.data.len() as u64,
            dtype_width: 4,
            bound: None,
        });
        self.data.reserve(values.len() * 4);
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    pub fn set_meta(&mut self, meta: serde_json::Value) {
        self.meta = meta;
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: FORMAT.into(),
            version: 1,
            byte_order: "little".into(),
            tensors: self.entries.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        let (bin, json) = paths(stem);
        if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&bin, &self.data).map_err(|e| Error::io(&bin, e))?;
        let text = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }
}

#[derive(Debug)]
pub struct TensorReader {
    pub manifest: Manifest,
    data: Vec<u8>,
}

impl TensorReader {
    pub fn open(stem: &Path) -> Result<Self> {
        let (bin, json) = paths(stem);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let data = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        Self::from_parts(manifest, data)
    }

    pub fn from_parts(manifest: Manifest, data: Vec<u8>) -> Result<Self> {
        if manifest.format != FORMAT || manifest.byte_order != "little" {
            return Err(Error::Container(format!(
                "unsupported container {} / {}",
                manifest.format, manifest.byte_order
            )));
        }
        for e in &manifest.tensors {
            let end = e.offset as usize + e.len() * e.dtype_width as usize;
            if end > data.len() {
                return Err(Error::Container(format!(
                    "tensor {} extends past end of data ({end} > {})",
                    e.name,
                    data.len()
                )));
            }
        }
        Ok(Self { manifest, data })
    }

    pub fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.manifest
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name}")))
    }

    pub fn f64(&self, name: &str) -> Result<Vec<f64>> {
        let e = self.entry(name)?;
        if e.dtype_width != 8 {
            return Err(Error::Container(format!("tensor {name} is not f64")));
        }
        let start = e.offset as usize;
        Ok(self.data[start..start + e.len() * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn f32(&self, name: &str) -> Result<Vec<f32>> {
        let e = self.entry(name)?;
        if e.dtype_width != 4 {
            return Err(Error::Container(format!("tensor {name} is not f32")));
        }
        let start = e.offset as usize;
        Ok(self.data[start..start + e.len() * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}
