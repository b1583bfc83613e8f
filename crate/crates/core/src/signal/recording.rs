use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, Result};

/// A trial onset: sample index into the recording and its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub class_id: usize,
}

/// Continuous multichannel signal with event markers.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousRecording {
    /// `data[channel][sample]`.
    pub data: Vec<Vec<f64>>,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub events: Vec<Event>,
    pub class_names: Vec<String>,
}

impl ContinuousRecording {
    pub fn new(
        data: Vec<Vec<f64>>,
        fs: f64,
        channel_names: Vec<String>,
        events: Vec<Event>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let rec = Self {
            data,
            fs,
            channel_names,
            events,
            class_names,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(config_err!("sampling rate must be positive, got {}", self.fs));
        }
        if self.data.is_empty() {
            return Err(data_err!("recording has no channels"));
        }
        if self.channel_names.len() != self.data.len() {
            return Err(data_err!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.data.len()
            ));
        }
        let n = self.data[0].len();
        if self.data.iter().any(|c| c.len() != n) {
            return Err(data_err!("channels have unequal lengths"));
        }
        for e in &self.events {
            if e.sample >= n {
                return Err(data_err!("event at sample {} beyond recording length {n}", e.sample));
            }
            if e.class_id >= self.class_names.len() {
                return Err(data_err!(
                    "event class {} out of range for {} classes",
                    e.class_id,
                    self.class_names.len()
                ));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    /// Applies `f` to every channel, keeping metadata.
    pub fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> ContinuousRecording {
        ContinuousRecording {
            data: self.data.iter().map(|c| f(c)).collect(),
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            events: self.events.clone(),
            class_names: self.class_names.clone(),
        }
    }
}
