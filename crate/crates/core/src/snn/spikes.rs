use std::ops::Range;

/// One spike: simulation step and global neuron index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpikeEvent {
    pub step: u64,
    pub neuron: u32,
}

/// Time-ordered spike record.
///
/// `n_steps` is the length of the recorded run (steps `0..n_steps`). When
/// several image presentations are concatenated, each one occupies a slot of
/// `segment_len` steps so that analyses can avoid straddling two images.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpikeLog {
    pub events: Vec<SpikeEvent>,
    pub n_steps: u64,
    pub segment_len: Option<u64>,
}

impl SpikeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: u64, neuron: usize) {
        debug_assert!(self.events.last().map_or(true, |e| e.step <= step));
        self.events.push(SpikeEvent {
            step,
            neuron: neuron as u32,
        });
        self.n_steps = self.n_steps.max(step + 1);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `step < horizon`.
    pub fn before(&self, horizon: u64) -> &[SpikeEvent] {
        let end = self.events.partition_point(|e| e.step < horizon);
        &self.events[..end]
    }

    /// Events with step in `range`.
    pub fn in_steps(&self, range: Range<u64>) -> &[SpikeEvent] {
        let start = self.events.partition_point(|e| e.step < range.start);
        let end = self.events.partition_point(|e| e.step < range.end);
        &self.events[start..end]
    }

    /// Copy truncated at `horizon` steps.
    pub fn truncated(&self, horizon: u64) -> SpikeLog {
        SpikeLog {
            events: self.before(horizon).to_vec(),
            n_steps: horizon.min(self.n_steps),
            segment_len: self.segment_len,
        }
    }

    /// Appends `other`, shifting its steps past the end of this log.
    pub fn append_shifted(&mut self, other: &SpikeLog) {
        let shift = self.n_steps;
        self.events.extend(other.events.iter().map(|e| SpikeEvent {
            step: e.step + shift,
            neuron: e.neuron,
        }));
        self.n_steps += other.n_steps;
    }

    /// Index of the segment containing `step`, if the log is segmented.
    pub fn segment_of(&self, step: u64) -> Option<u64> {
        self.segment_len.map(|len| step / len)
    }

    pub fn is_time_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].step <= w[1].step)
    }
}
