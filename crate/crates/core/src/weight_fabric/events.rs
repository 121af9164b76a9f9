use std::io::Write;

use serde::{Deserialize, Serialize};

use super::synapse::DifferentialSynapseArray;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEvents {
    pub layer: String,
    pub ltp: u64,
    pub ltd: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventReport {
    pub layers: Vec<LayerEvents>,
    pub total_ltp: u64,
    pub total_ltd: u64,
}

impl EventReport {
    pub fn total(&self) -> u64 {
        self.total_ltp + self.total_ltd
    }
}

/// Programming-event counters since the last reset.
pub fn event_report<'a>(arrays: impl IntoIterator<Item = &'a DifferentialSynapseArray>) -> EventReport {
    let mut report = EventReport::default();
    for a in arrays {
        report.total_ltp += a.ltp_events();
        report.total_ltd += a.ltd_events();
        report.layers.push(LayerEvents {
            layer: a.name.clone(),
            ltp: a.ltp_events(),
            ltd: a.ltd_events(),
        });
    }
    report
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub epoch: usize,
    pub batch: usize,
    pub layer: String,
    pub ltp_events: u64,
    pub ltd_events: u64,
    pub cumulative_total: u64,
}

/// Per-batch, per-layer event log with a running total across all layers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub rows: Vec<EventRow>,
    cumulative: u64,
}

impl EventLog {
    pub fn record(&mut self, epoch: usize, batch: usize, layer: &str, ltp: u64, ltd: u64) {
        self.cumulative += ltp + ltd;
        self.rows.push(EventRow {
            epoch,
            batch,
            layer: layer.to_string(),
            ltp_events: ltp,
            ltd_events: ltd,
            cumulative_total: self.cumulative,
        });
    }

    pub fn cumulative_total(&self) -> u64 {
        self.cumulative
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("event log", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::FerroKernelParams;
    use crate::rng;
    use crate::weight_fabric::{LayerBound, ProgrammingPolicy};

    #[test]
    fn fresh_arrays_report_zero() {
        let a = DifferentialSynapseArray::from_weights("a", &[0.0; 3], LayerBound::from_fan_in(4));
        let r = event_report([&a]);
        assert_eq!(r.total(), 0);
        assert_eq!(r.layers[0].layer, "a");
    }

    #[test]
    fn commit_counts_are_reported() {
        let b = LayerBound::from_fan_in(4);
        let mut a = DifferentialSynapseArray::from_weights("a", &[0.0; 4], b);
        a.accumulate(&[1.0, -1.0, 1.0, 0.0]).unwrap();
        let s = a
            .commit(&ProgrammingPolicy::default(), &FerroKernelParams::default(), &mut rng::stream(0, &[]))
            .unwrap();
        let r = event_report([&a]);
        assert_eq!(r.total(), s.total());
        assert_eq!((r.total_ltp, r.total_ltd), (2, 1));
    }

    #[test]
    fn csv_has_cumulative_column() {
        let mut log = EventLog::default();
        log.record(0, 0, "fc1", 3, 1);
        log.record(0, 0, "fc2", 0, 2);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epoch,batch,layer,ltp_events,ltd_events,cumulative_total\n0,0,fc1,3,1,4\n0,0,fc2,0,2,6\n"
        );
    }
}
