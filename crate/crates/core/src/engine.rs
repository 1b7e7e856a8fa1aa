//! The online recognition engine: stream in, sampler batch out, feature
//! tensor through the classifier, probabilities averaged across steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::assemble_sequence_tensor;
use crate::nn::{Mode, Model};
use crate::sampler::{SamplerState, SlidingWindowState};
use crate::schema::FeatureSchema;
use crate::skeleton::{SkeletonFrame, StreamEvent};

/// How the running prediction folds in each new instant prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// `p_a <- (p_a + p) / 2`: recent steps dominate geometrically.
    Pairwise,
    /// Running arithmetic mean over all steps so far.
    Cumulative,
}

/// Which sampling strategy feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    MemoryGroup,
    SlidingWindow,
}

enum SamplerImpl {
    MemoryGroup(SamplerState),
    SlidingWindow(SlidingWindowState),
}

pub struct EngineConfig {
    pub n: usize,
    pub schema: FeatureSchema,
    pub model: Model,
    pub averaging: Averaging,
    pub sampler: SamplerKind,
    /// Reset sampler and averaged probabilities when the stream ends.
    pub reset_on_end: bool,
}

impl EngineConfig {
    pub fn new(schema: FeatureSchema, model: Model) -> EngineConfig {
        EngineConfig {
            n: 16,
            schema,
            model,
            averaging: Averaging::Pairwise,
            sampler: SamplerKind::MemoryGroup,
            reset_on_end: false,
        }
    }
}

/// One emitted recognition result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub step: u64,
    pub probs_instant: Vec<f64>,
    pub probs_averaged: Vec<f64>,
    /// Smallest class index attaining the maximum of `probs_averaged`.
    pub argmax: usize,
    /// Set when the maximum is attained more than once (within 1e-12).
    pub tie_broken: bool,
}

/// Fold an instant prediction into the running one. `prior_steps` is the
/// number of predictions already folded into `prior` (used by the
/// cumulative mean).
pub fn average_probabilities(
    prior: Option<&[f64]>,
    prior_steps: u64,
    p: &[f64],
    mode: Averaging,
) -> Result<Vec<f64>> {
    match prior {
        None => Ok(p.to_vec()),
        Some(pa) => {
            if pa.len() != p.len() {
                return Err(Error::ShapeMismatch(format!(
                    "probability lengths differ: {} vs {}",
                    pa.len(),
                    p.len()
                )));
            }
            match mode {
                Averaging::Pairwise => {
                    Ok(pa.iter().zip(p).map(|(a, b)| (a + b) / 2.0).collect())
                }
                Averaging::Cumulative => {
                    let k = prior_steps as f64;
                    Ok(pa
                        .iter()
                        .zip(p)
                        .map(|(a, b)| (a * k + b) / (k + 1.0))
                        .collect())
                }
            }
        }
    }
}

fn argmax_with_ties(p: &[f64]) -> (usize, bool) {
    let mut best = 0usize;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    let ties = p
        .iter()
        .enumerate()
        .filter(|(i, v)| *i != best && (p[best] - **v).abs() <= 1e-12)
        .count();
    (best, ties > 0)
}

pub struct Engine {
    n: usize,
    schema: FeatureSchema,
    model: Model,
    averaging: Averaging,
    reset_on_end: bool,
    sampler: SamplerImpl,
    averaged: Option<Vec<f64>>,
    emissions: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Engine> {
        let expected_channels = config.schema.channels_with_motion();
        if config.model.config.input_frames != config.n
            || config.model.config.input_channels != expected_channels
        {
            return Err(Error::ConfigMismatch(format!(
                "model expects {}x{}, engine provides {}x{}",
                config.model.config.input_frames,
                config.model.config.input_channels,
                config.n,
                expected_channels
            )));
        }
        let sampler = match config.sampler {
            SamplerKind::MemoryGroup => SamplerImpl::MemoryGroup(SamplerState::new(config.n)?),
            SamplerKind::SlidingWindow => {
                SamplerImpl::SlidingWindow(SlidingWindowState::new(config.n)?)
            }
        };
        Ok(Engine {
            n: config.n,
            schema: config.schema,
            model: config.model,
            averaging: config.averaging,
            reset_on_end: config.reset_on_end,
            sampler,
            averaged: None,
            emissions: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Clear sampler state and the running prediction; the model and schema
    /// are untouched.
    pub fn reset(&mut self) {
        match &mut self.sampler {
            SamplerImpl::MemoryGroup(s) => s.reset(),
            SamplerImpl::SlidingWindow(s) => s.reset(),
        }
        self.averaged = None;
        self.emissions = 0;
    }

    /// Feed one frame; returns a prediction whenever the sampler emits.
    pub fn step(&mut self, frame: SkeletonFrame) -> Result<Option<Prediction>> {
        let batch = match &mut self.sampler {
            SamplerImpl::MemoryGroup(s) => s.push(frame)?,
            SamplerImpl::SlidingWindow(s) => s.push(frame)?,
        };
        let Some(batch) = batch else {
            return Ok(None);
        };
        let tensor = assemble_sequence_tensor(&batch.frames, &self.schema, self.n)?;
        let instant = self.model.forward(&tensor, Mode::Infer)?;
        let averaged = average_probabilities(
            self.averaged.as_deref(),
            self.emissions,
            &instant,
            self.averaging,
        )?;
        self.averaged = Some(averaged.clone());
        self.emissions += 1;
        let (argmax, tie_broken) = argmax_with_ties(&averaged);
        Ok(Some(Prediction {
            step: batch.step,
            probs_instant: instant,
            probs_averaged: averaged,
            argmax,
            tie_broken,
        }))
    }

    /// Feed one stream event.
    pub fn handle_event(&mut self, event: StreamEvent) -> Result<Option<Prediction>> {
        match event {
            StreamEvent::Frame(f) => self.step(f),
            StreamEvent::EndOfStream => {
                if self.reset_on_end {
                    self.reset();
                }
                Ok(None)
            }
        }
    }
}
