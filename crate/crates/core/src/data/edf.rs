//! EDF and EDF+ reading and writing.
//!
//! Header fields are kept as the exact text found in the file (right
//! padding removed) so that writing a parsed recording reproduces the input
//! byte for byte. Annotation signals are stored as raw 16-bit words like any
//! other signal and decoded into time-stamped annotation lists on the side.

use crate::error::{Error, Result};

const ANNOTATION_LABEL: &str = "EDF Annotations";
const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    /// "EDF+C" or "EDF+D" for EDF+ files, otherwise free text.
    pub reserved: String,
    /// Number of data records, or −1 when unknown at write time.
    pub record_count: i64,
    /// Duration of one data record in seconds.
    pub record_duration: f64,
    pub record_duration_text: String,
    pub signal_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
    /// Original text of the numeric fields, in header order.
    pub numeric_text: [String; 5],
}

impl SignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    /// Digital-to-physical conversion.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let span_d = f64::from(self.digital_max) - f64::from(self.digital_min);
        (f64::from(digital) - f64::from(self.digital_min)) * (self.physical_max - self.physical_min) / span_d
            + self.physical_min
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub onset: f64,
    pub duration: Option<f64>,
    pub label: String,
}

/// Annotation bytes that did not follow the TAL grammar, kept verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct RawAnnotation {
    pub record: usize,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdfRecording {
    pub header: EdfHeader,
    pub signals: Vec<SignalHeader>,
    /// Per signal, all records concatenated.
    pub samples: Vec<Vec<i16>>,
    pub annotations: Vec<Annotation>,
    /// Start time of each record from the time-keeping annotations.
    pub record_onsets: Vec<f64>,
    pub unparsed_annotations: Vec<RawAnnotation>,
}

impl EdfRecording {
    pub fn record_count(&self) -> usize {
        self.header.record_count.max(0) as usize
    }

    /// Ordinary (non-annotation) signal indices.
    pub fn data_signals(&self) -> impl Iterator<Item = usize> + '_ {
        self.signals.iter().enumerate().filter(|(_, s)| !s.is_annotation()).map(|(k, _)| k)
    }

    pub fn sampling_rate(&self, signal: usize) -> f64 {
        self.signals[signal].samples_per_record as f64 / self.header.record_duration
    }

    pub fn physical(&self, signal: usize) -> Vec<f64> {
        let sh = &self.signals[signal];
        self.samples[signal].iter().map(|&d| sh.to_physical(d)).collect()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, width: usize, what: &str) -> Result<String> {
        let end = self.pos + width;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| Error::Edf {
            offset: self.bytes.len(),
            message: format!("header truncated inside field {what}"),
        })?;
        if let Some(k) = raw.iter().position(|b| !(0x20..=0x7e).contains(b)) {
            return Err(Error::Edf {
                offset: self.pos + k,
                message: format!("non-ASCII byte in field {what}"),
            });
        }
        self.pos = end;
        Ok(String::from_utf8_lossy(raw).trim_end().to_string())
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<(T, String)> {
        let at = self.pos;
        let text = self.field(width, what)?;
        let v = text.trim().parse().map_err(|_| Error::Edf {
            offset: at,
            message: format!("field {what} is not a number: {text:?}"),
        })?;
        Ok((v, text))
    }
}

pub fn parse_edf(bytes: &[u8]) -> Result<EdfRecording> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::Edf {
            offset: bytes.len(),
            message: format!("file shorter than the {FIXED_HEADER}-byte fixed header"),
        });
    }
    let mut c = Cursor { bytes, pos: 0 };
    let version = c.field(8, "version")?;
    let patient_id = c.field(80, "patient id")?;
    let recording_id = c.field(80, "recording id")?;
    let start_date = c.field(8, "start date")?;
    let start_time = c.field(8, "start time")?;
    let (header_bytes, _) = c.number::<usize>(8, "header bytes")?;
    let reserved = c.field(44, "reserved")?;
    let (record_count, _) = c.number::<i64>(8, "record count")?;
    let (record_duration, record_duration_text) = c.number::<f64>(8, "record duration")?;
    let (signal_count, _) = c.number::<usize>(4, "signal count")?;
    let expected_header = FIXED_HEADER + SIGNAL_HEADER * signal_count;
    if header_bytes != expected_header {
        return Err(Error::Edf {
            offset: 184,
            message: format!("header length field says {header_bytes}, {signal_count} signals need {expected_header}"),
        });
    }
    if bytes.len() < expected_header {
        return Err(Error::Edf {
            offset: bytes.len(),
            message: format!("signal headers truncated, need {expected_header} bytes"),
        });
    }

    // signal headers are stored field-major
    let ns = signal_count;
    let mut col = |width: usize, what: &str| -> Result<Vec<String>> { (0..ns).map(|_| c.field(width, what)).collect() };
    let labels = col(16, "label")?;
    let transducers = col(80, "transducer")?;
    let dims = col(8, "physical dimension")?;
    let num_cols: Vec<Vec<String>> = ["physical min", "physical max", "digital min", "digital max"]
        .iter()
        .map(|w| col(8, w))
        .collect::<Result<_>>()?;
    let prefilters = col(80, "prefiltering")?;
    let spr_text = col(8, "samples per record")?;
    let reserved_sig = col(32, "signal reserved")?;
    let mut signals = Vec::with_capacity(ns);
    for k in 0..ns {
        let field_off = |field_start: usize| FIXED_HEADER + field_start * ns + k * 8;
        let num = |text: &str, off: usize, what: &str| -> Result<f64> {
            text.trim().parse().map_err(|_| Error::Edf {
                offset: off,
                message: format!("signal {k} {what} is not a number: {text:?}"),
            })
        };
        // byte offsets of the numeric columns within the signal header block
        let pmin = num(&num_cols[0][k], field_off(104), "physical min")?;
        let pmax = num(&num_cols[1][k], field_off(112), "physical max")?;
        let dmin = num(&num_cols[2][k], field_off(120), "digital min")? as i32;
        let dmax = num(&num_cols[3][k], field_off(128), "digital max")? as i32;
        let spr = num(&spr_text[k], FIXED_HEADER + 216 * ns + k * 8, "samples per record")? as usize;
        if dmax <= dmin {
            return Err(Error::Edf {
                offset: field_off(128),
                message: format!("signal {k} digital max {dmax} not above digital min {dmin}"),
            });
        }
        signals.push(SignalHeader {
            label: labels[k].clone(),
            transducer: transducers[k].clone(),
            physical_dimension: dims[k].clone(),
            physical_min: pmin,
            physical_max: pmax,
            digital_min: dmin,
            digital_max: dmax,
            prefiltering: prefilters[k].clone(),
            samples_per_record: spr,
            reserved: reserved_sig[k].clone(),
            numeric_text: [
                num_cols[0][k].clone(),
                num_cols[1][k].clone(),
                num_cols[2][k].clone(),
                num_cols[3][k].clone(),
                spr_text[k].clone(),
            ],
        });
    }

    let record_words: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = 2 * record_words;
    let payload = bytes.len() - expected_header;
    let records = if record_count < 0 {
        if record_bytes == 0 || payload % record_bytes != 0 {
            return Err(Error::Edf {
                offset: expected_header + payload / record_bytes.max(1) * record_bytes,
                message: "trailing partial data record".into(),
            });
        }
        payload / record_bytes
    } else {
        let n = record_count as usize;
        if payload < n * record_bytes {
            let whole = payload / record_bytes.max(1);
            return Err(Error::Edf {
                offset: expected_header + whole * record_bytes,
                message: format!("data record {whole} truncated: header declares {n} records"),
            });
        }
        if payload > n * record_bytes {
            return Err(Error::Edf {
                offset: expected_header + n * record_bytes,
                message: format!("record-count mismatch: {} bytes beyond the declared {n} records", payload - n * record_bytes),
            });
        }
        n
    };

    let mut samples: Vec<Vec<i16>> = signals.iter().map(|s| Vec::with_capacity(s.samples_per_record * records)).collect();
    let mut pos = expected_header;
    for _ in 0..records {
        for (k, s) in signals.iter().enumerate() {
            let chunk = &bytes[pos..pos + 2 * s.samples_per_record];
            samples[k].extend(chunk.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])));
            pos += chunk.len();
        }
    }

    let header = EdfHeader {
        version,
        patient_id,
        recording_id,
        start_date,
        start_time,
        header_bytes,
        reserved,
        record_count: records as i64,
        record_duration,
        record_duration_text,
        signal_count,
    };
    let mut rec = EdfRecording {
        header,
        signals,
        samples,
        annotations: Vec::new(),
        record_onsets: Vec::new(),
        unparsed_annotations: Vec::new(),
    };
    decode_annotations(&mut rec, records);
    Ok(rec)
}

fn decode_annotations(rec: &mut EdfRecording, records: usize) {
    let ann: Vec<usize> = rec.signals.iter().enumerate().filter(|(_, s)| s.is_annotation()).map(|(k, _)| k).collect();
    for r in 0..records {
        for (n, &k) in ann.iter().enumerate() {
            let spr = rec.signals[k].samples_per_record;
            let bytes: Vec<u8> = rec.samples[k][r * spr..(r + 1) * spr].iter().flat_map(|w| w.to_le_bytes()).collect();
            match parse_tals(&bytes) {
                Ok(tals) => {
                    for (i, (onset, duration, labels)) in tals.into_iter().enumerate() {
                        // the first TAL of the first annotation signal keeps time
                        if i == 0 && n == 0 {
                            rec.record_onsets.push(onset);
                        }
                        for label in labels.into_iter().filter(|l| !l.is_empty()) {
                            rec.annotations.push(Annotation { onset, duration, label });
                        }
                    }
                }
                Err(msg) => {
                    log::warn!("record {r}: unreadable annotation bytes kept verbatim ({msg})");
                    rec.unparsed_annotations.push(RawAnnotation { record: r, bytes });
                }
            }
        }
    }
}

type Tal = (f64, Option<f64>, Vec<String>);

/// Decodes the time-stamped annotation lists of one record's annotation
/// bytes: `±onset[\x15duration]\x14label\x14...\x00`, zero padded.
pub fn parse_tals(bytes: &[u8]) -> std::result::Result<Vec<Tal>, String> {
    let mut out = Vec::new();
    let mut rest = bytes;
    loop {
        while let [0, tail @ ..] = rest {
            rest = tail;
        }
        if rest.is_empty() {
            return Ok(out);
        }
        let end = rest.iter().position(|&b| b == 0).ok_or("unterminated TAL")?;
        let tal = &rest[..end];
        rest = &rest[end + 1..];
        let text = std::str::from_utf8(tal).map_err(|e| format!("invalid UTF-8: {e}"))?;
        let mut parts = text.split('\x14');
        let stamp = parts.next().unwrap_or_default();
        if !stamp.starts_with(['+', '-']) {
            return Err(format!("onset must start with a sign: {stamp:?}"));
        }
        let (onset_s, dur_s) = match stamp.split_once('\x15') {
            Some((o, d)) => (o, Some(d)),
            None => (stamp, None),
        };
        let onset: f64 = onset_s.trim().parse().map_err(|_| format!("bad onset {onset_s:?}"))?;
        let duration = dur_s
            .map(|d| d.trim().parse::<f64>().map_err(|_| format!("bad duration {d:?}")))
            .transpose()?;
        let labels: Vec<&str> = parts.collect();
        // the trailing \x14 leaves one empty element
        if labels.last() != Some(&"") {
            return Err("annotation list not closed by \\x14".into());
        }
        let labels = labels[..labels.len() - 1].iter().map(|s| s.to_string()).collect();
        out.push((onset, duration, labels));
    }
}

fn encode_tal(onset: f64, duration: Option<f64>, labels: &[&str]) -> Vec<u8> {
    let mut s = format!("{}{}", if onset < 0.0 { "-" } else { "+" }, format_seconds(onset.abs()));
    if let Some(d) = duration {
        s.push('\x15');
        s.push_str(&format_seconds(d));
    }
    s.push('\x14');
    for l in labels {
        s.push_str(l);
        s.push('\x14');
    }
    let mut b = s.into_bytes();
    b.push(0);
    b
}

fn format_seconds(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".into() } else { s.to_string() }
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) {
    let b = text.as_bytes();
    let n = b.len().min(width);
    out.extend_from_slice(&b[..n]);
    out.extend(std::iter::repeat(b' ').take(width - n));
}

/// Serializes a recording. Header text is written as stored, so a parsed
/// conforming file is reproduced exactly.
pub fn write_edf(rec: &EdfRecording) -> Result<Vec<u8>> {
    let ns = rec.signals.len();
    let records = rec.record_count();
    for (k, s) in rec.signals.iter().enumerate() {
        if rec.samples[k].len() != s.samples_per_record * records {
            return Err(Error::shape(format!("EDF signal {}", s.label), s.samples_per_record * records, rec.samples[k].len()));
        }
    }
    let h = &rec.header;
    let mut out = Vec::with_capacity(FIXED_HEADER * (ns + 1));
    put(&mut out, &h.version, 8);
    put(&mut out, &h.patient_id, 80);
    put(&mut out, &h.recording_id, 80);
    put(&mut out, &h.start_date, 8);
    put(&mut out, &h.start_time, 8);
    put(&mut out, &(FIXED_HEADER + SIGNAL_HEADER * ns).to_string(), 8);
    put(&mut out, &h.reserved, 44);
    put(&mut out, &h.record_count.to_string(), 8);
    put(&mut out, &h.record_duration_text, 8);
    put(&mut out, &ns.to_string(), 4);
    let cols: [(usize, &dyn Fn(&SignalHeader) -> &str); 10] = [
        (16, &|s| &s.label),
        (80, &|s| &s.transducer),
        (8, &|s| &s.physical_dimension),
        (8, &|s| &s.numeric_text[0]),
        (8, &|s| &s.numeric_text[1]),
        (8, &|s| &s.numeric_text[2]),
        (8, &|s| &s.numeric_text[3]),
        (80, &|s| &s.prefiltering),
        (8, &|s| &s.numeric_text[4]),
        (32, &|s| &s.reserved),
    ];
    for (width, get) in cols {
        for s in &rec.signals {
            put(&mut out, get(s), width);
        }
    }
    for r in 0..records {
        for (k, s) in rec.signals.iter().enumerate() {
            let n = s.samples_per_record;
            for w in &rec.samples[k][r * n..(r + 1) * n] {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_edf(path: &std::path::Path) -> Result<EdfRecording> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_edf(&bytes)
}

/// Assembles conforming EDF+ recordings, mainly for fixtures and synthetic
/// exports.
#[derive(Clone, Debug)]
pub struct EdfBuilder {
    record_duration: f64,
    signals: Vec<(SignalHeader, Vec<i16>)>,
    annotations: Vec<Annotation>,
}

impl EdfBuilder {
    pub fn new(record_duration: f64) -> Self {
        Self {
            record_duration,
            signals: Vec::new(),
            annotations: Vec::new(),
        }
    }

    /// Adds a signal with physical range `(pmin, pmax)` mapped onto the full
    /// 16-bit digital range.
    pub fn signal(mut self, label: &str, samples_per_record: usize, physical: (f64, f64), samples: Vec<i16>) -> Self {
        let num = |x: f64| format_seconds(x).to_string();
        let header = SignalHeader {
            label: label.into(),
            transducer: String::new(),
            physical_dimension: "uV".into(),
            physical_min: physical.0,
            physical_max: physical.1,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record,
            reserved: String::new(),
            numeric_text: [
                signed_text(physical.0, &num),
                signed_text(physical.1, &num),
                "-32768".into(),
                "32767".into(),
                samples_per_record.to_string(),
            ],
        };
        self.signals.push((header, samples));
        self
    }

    pub fn annotation(mut self, onset: f64, duration: Option<f64>, label: &str) -> Self {
        self.annotations.push(Annotation { onset, duration, label: label.into() });
        self
    }

    pub fn build(self) -> Result<EdfRecording> {
        let records = match self.signals.first() {
            Some((h, s)) if h.samples_per_record > 0 => s.len() / h.samples_per_record,
            _ => 0,
        };
        for (h, s) in &self.signals {
            if s.len() != h.samples_per_record * records {
                return Err(Error::shape(format!("EDF signal {}", h.label), h.samples_per_record * records, s.len()));
            }
        }
        // annotations go to the record containing their onset
        let mut per_record: Vec<Vec<u8>> = (0..records)
            .map(|r| encode_tal(r as f64 * self.record_duration, None, &[""]))
            .collect();
        for a in &self.annotations {
            let r = ((a.onset / self.record_duration).floor().max(0.0) as usize).min(records.saturating_sub(1));
            if let Some(buf) = per_record.get_mut(r) {
                buf.extend(encode_tal(a.onset, a.duration, &[&a.label]));
            }
        }
        let words = per_record.iter().map(|b| b.len().div_ceil(2)).max().unwrap_or(1).max(1);
        let mut ann_samples = Vec::with_capacity(words * records);
        for mut b in per_record {
            b.resize(words * 2, 0);
            ann_samples.extend(b.chunks_exact(2).map(|p| i16::from_le_bytes([p[0], p[1]])));
        }
        let mut signals = Vec::new();
        let mut samples = Vec::new();
        for (h, s) in self.signals {
            signals.push(h);
            samples.push(s);
        }
        let ann = SignalHeader {
            label: ANNOTATION_LABEL.into(),
            transducer: String::new(),
            physical_dimension: String::new(),
            physical_min: -1.0,
            physical_max: 1.0,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: words,
            reserved: String::new(),
            numeric_text: ["-1".into(), "1".into(), "-32768".into(), "32767".into(), words.to_string()],
        };
        signals.push(ann);
        samples.push(ann_samples);
        let bytes = write_edf(&EdfRecording {
            header: EdfHeader {
                version: "0".into(),
                patient_id: "X X X X".into(),
                recording_id: "Startdate X X X X".into(),
                start_date: "01.01.00".into(),
                start_time: "00.00.00".into(),
                header_bytes: FIXED_HEADER * (signals.len() + 1),
                reserved: "EDF+C".into(),
                record_count: records as i64,
                record_duration: self.record_duration,
                record_duration_text: format_seconds(self.record_duration),
                signal_count: signals.len(),
            },
            signals,
            samples,
            annotations: Vec::new(),
            record_onsets: Vec::new(),
            unparsed_annotations: Vec::new(),
        })?;
        parse_edf(&bytes)
    }
}

fn signed_text(x: f64, f: &dyn Fn(f64) -> String) -> String {
    if x < 0.0 {
        format!("-{}", f(-x))
    } else {
        f(x)
    }
}
