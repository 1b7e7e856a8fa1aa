//! Memory group sampling and the fixed-size sliding-window baseline.
//!
//! The memory group sampler keeps a retained group `M` of exactly `n`
//! frames. Every time `n` fresh frames have queued up it emits a batch:
//! the whole queue on the first emission, afterwards half of `M`
//! interleaved before half of the queue, and the emitted batch becomes the
//! new `M`. Halving is deterministic even-index selection, so frames from
//! older epochs thin out geometrically while the stream's first frame is
//! retained as a long-term anchor.

use crate::error::{Error, Result};
use crate::skeleton::SkeletonFrame;

/// Deterministic 50% selection: the elements at even positions, order
/// preserved (`ceil(m/2)` of `m`).
pub fn halve(frames: &[SkeletonFrame]) -> Result<Vec<SkeletonFrame>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("cannot halve an empty frame list"));
    }
    Ok(frames.iter().step_by(2).cloned().collect())
}

/// A batch of exactly `n` frames handed to the classifier, tagged with the
/// sampling step `T` at which it was emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub frames: Vec<SkeletonFrame>,
    pub step: u64,
}

/// State of the memory group sampler.
#[derive(Debug, Clone)]
pub struct SamplerState {
    n: usize,
    queue: Vec<SkeletonFrame>,
    memory: Vec<SkeletonFrame>,
    received: u64,
    emitted: u64,
    last_index: Option<u64>,
}

impl SamplerState {
    /// `n` must be even and at least 2 so the 50/50 mix is exact.
    pub fn new(n: usize) -> Result<SamplerState> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidSampleSize(n));
        }
        Ok(SamplerState {
            n,
            queue: Vec::with_capacity(n),
            memory: Vec::new(),
            received: 0,
            emitted: 0,
            last_index: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    /// The sampling counter T after the latest emission (`floor(j/n) - 1`),
    /// or None before the first one.
    pub fn step(&self) -> Option<u64> {
        self.emitted.checked_sub(1)
    }

    pub fn reset(&mut self) {
        self.queue.clear();
        self.memory.clear();
        self.received = 0;
        self.emitted = 0;
        self.last_index = None;
    }

    /// Feed one frame; emits a batch on every n-th push.
    pub fn push(&mut self, frame: SkeletonFrame) -> Result<Option<SampleBatch>> {
        if let Some(prev) = self.last_index {
            if frame.index <= prev {
                return Err(Error::OutOfOrderFrame {
                    prev,
                    next: frame.index,
                });
            }
        }
        self.last_index = Some(frame.index);
        self.queue.push(frame);
        self.received += 1;
        if self.queue.len() < self.n {
            return Ok(None);
        }
        let batch = if self.memory.is_empty() {
            std::mem::take(&mut self.queue)
        } else {
            let mut mixed = halve(&self.memory)?;
            mixed.extend(halve(&self.queue)?);
            self.queue.clear();
            mixed
        };
        self.memory = batch.clone();
        self.emitted += 1;
        Ok(Some(SampleBatch {
            frames: batch,
            step: self.emitted - 1,
        }))
    }
}

/// The baseline: keep only the most recent `n` frames, emitting on the same
/// cadence as the memory group sampler so comparisons are controlled.
#[derive(Debug, Clone)]
pub struct SlidingWindowState {
    n: usize,
    buffer: std::collections::VecDeque<SkeletonFrame>,
    received: u64,
    last_index: Option<u64>,
}

impl SlidingWindowState {
    pub fn new(n: usize) -> Result<SlidingWindowState> {
        if n == 0 {
            return Err(Error::InvalidSampleSize(n));
        }
        Ok(SlidingWindowState {
            n,
            buffer: std::collections::VecDeque::with_capacity(n + 1),
            received: 0,
            last_index: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.received = 0;
        self.last_index = None;
    }

    pub fn push(&mut self, frame: SkeletonFrame) -> Result<Option<SampleBatch>> {
        if let Some(prev) = self.last_index {
            if frame.index <= prev {
                return Err(Error::OutOfOrderFrame {
                    prev,
                    next: frame.index,
                });
            }
        }
        self.last_index = Some(frame.index);
        self.buffer.push_back(frame);
        if self.buffer.len() > self.n {
            self.buffer.pop_front();
        }
        self.received += 1;
        if self.received % self.n as u64 == 0 {
            Ok(Some(SampleBatch {
                frames: self.buffer.iter().cloned().collect(),
                step: self.received / self.n as u64 - 1,
            }))
        } else {
            Ok(None)
        }
    }
}
