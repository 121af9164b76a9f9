//! Run-length encoded binary spike records.
//!
//! Layout per layer: name length (u16), name bytes, neurons (u32),
//! timesteps (u32), run count (u32), then alternating run lengths (u32)
//! starting with a run of zeros. All little-endian.

use std::io::{Read, Write};

use super::network::Trace;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeDump {
    pub layer: String,
    pub neurons: usize,
    pub timesteps: usize,
    pub runs: Vec<u32>,
}

impl SpikeDump {
    /// Encodes binary spikes; any non-zero value counts as a spike.
    pub fn encode(layer: &str, trace: &Trace) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &s in &trace.s {
            let bit = s != 0.0;
            if bit != current {
                runs.push(len);
                len = 0;
                current = bit;
            }
            len += 1;
        }
        runs.push(len);
        Self {
            layer: layer.to_string(),
            neurons: trace.n,
            timesteps: if trace.n == 0 { 0 } else { trace.s.len() / trace.n },
            runs,
        }
    }

    /// Spikes as `T × n` zeros and ones.
    pub fn decode(&self) -> Result<Vec<f64>> {
        let total = self.neurons * self.timesteps;
        let mut out = Vec::with_capacity(total);
        for (k, &r) in self.runs.iter().enumerate() {
            let v = if k % 2 == 0 { 0.0 } else { 1.0 };
            out.extend(std::iter::repeat(v).take(r as usize));
        }
        if out.len() != total {
            return Err(Error::Container(format!(
                "spike dump for {} decodes to {} values, expected {total}",
                self.layer,
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let name = self.layer.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(self.neurons as u32).to_le_bytes())?;
        w.write_all(&(self.timesteps as u32).to_le_bytes())?;
        w.write_all(&(self.runs.len() as u32).to_le_bytes())?;
        for r in &self.runs {
            w.write_all(&r.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one layer record; `Ok(None)` at a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut b2 = [0u8; 2];
        match r.read_exact(&mut b2) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::Container(e.to_string())),
        }
        let truncated = |e: std::io::Error| Error::Container(format!("truncated spike dump: {e}"));
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name).map_err(truncated)?;
        let mut u32s = |n: usize| -> Result<Vec<u32>> {
            let mut buf = vec![0u8; 4 * n];
            r.read_exact(&mut buf).map_err(truncated)?;
            Ok(buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let head = u32s(3)?;
        let runs = u32s(head[2] as usize)?;
        Ok(Some(Self {
            layer: String::from_utf8(name).map_err(|e| Error::Container(e.to_string()))?,
            neurons: head[0] as usize,
            timesteps: head[1] as usize,
            runs,
        }))
    }
}

pub fn write_dumps(path: &std::path::Path, dumps: &[SpikeDump]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for d in dumps {
        d.write_to(&mut f).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dumps(path: &std::path::Path) -> Result<Vec<SpikeDump>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    while let Some(d) = SpikeDump::read_from(&mut f)? {
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(bits: &[bool], n: usize) -> Trace {
        let s: Vec<f64> = bits.iter().map(|&b| f64::from(u8::from(b))).collect();
        Trace { n, i: vec![0.0; s.len()], v: vec![0.0; s.len()], s }
    }

    #[test]
    fn runs_start_with_zeros() {
        let d = SpikeDump::encode("fc1", &trace(&[true, true, false, true], 2));
        assert_eq!(d.runs, vec![0, 2, 1, 1]);
        assert_eq!(d.timesteps, 2);
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let tr = trace(&bits, 1);
            let d = SpikeDump::encode("x", &tr);
            prop_assert_eq!(d.decode().unwrap(), tr.s.clone());
            let mut buf = Vec::new();
            d.write_to(&mut buf).unwrap();
            let back = SpikeDump::read_from(&mut buf.as_slice()).unwrap().unwrap();
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn truncated_stream_errors() {
        let d = SpikeDump::encode("c", &trace(&[false, true, true], 3));
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(SpikeDump::read_from(&mut buf.as_slice()).is_err());
    }
}
