//! Evaluation: accuracy, per-class online recognition rates and confusion
//! matrices, for offline classification and both online sampling methods.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use skelact::engine::SamplerKind;
use skelact::nn::{Mode, Model};
use skelact::{
    assemble_sequence_tensor, resample_sequence, Averaging, Engine, EngineConfig, FeatureSchema,
    SkeletonSequence,
};

use crate::error::{HarnessError, Result};

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: &mut W, classes: &[String]) -> Result<()> {
        writeln!(writer, "truth\\prediction,{}", classes.join(","))?;
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(writer, "{},{}", classes[i], cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Offline,
    OnlineMemoryGroup,
    OnlineSlidingWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub wall_seconds: f64,
    pub sequences: usize,
    pub frames: u64,
    pub frames_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaging: Option<Averaging>,
    pub classes: Vec<String>,
    /// Correct final predictions over all test sequences (sequences too
    /// short to produce any prediction count as negative).
    pub accuracy: f64,
    /// Recognition rate per class, denominators include short sequences.
    pub per_class_rate: Vec<f64>,
    /// Unweighted mean of the per-class rates.
    pub mean_rate: f64,
    /// Confusion counts over sequences that produced a prediction.
    pub confusion: ConfusionMatrix,
    pub total_sequences: usize,
    /// Sequences that never filled a sampling window.
    pub short_sequences: usize,
    pub timing: TimingStats,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn require_label(seq: &SkeletonSequence) -> Result<usize> {
    seq.label.ok_or_else(|| {
        HarnessError::MissingLabels(format!(
            "unlabeled sequence {}",
            seq.meta.as_deref().unwrap_or("<memory>")
        ))
    })
}

fn finish_report(
    mode: EvalMode,
    averaging: Option<Averaging>,
    classes: &[String],
    confusion: ConfusionMatrix,
    class_totals: &[u64],
    short_sequences: usize,
    started: Instant,
    frames: u64,
) -> EvalReport {
    let total: u64 = class_totals.iter().sum();
    let accuracy = confusion.trace() as f64 / total as f64;
    let per_class_rate: Vec<f64> = (0..classes.len())
        .map(|c| {
            if class_totals[c] == 0 {
                0.0
            } else {
                confusion.counts[c][c] as f64 / class_totals[c] as f64
            }
        })
        .collect();
    let populated = class_totals.iter().filter(|&&t| t > 0).count().max(1);
    let mean_rate = (0..classes.len())
        .filter(|&c| class_totals[c] > 0)
        .map(|c| per_class_rate[c])
        .sum::<f64>()
        / populated as f64;
    let wall = started.elapsed().as_secs_f64();
    EvalReport {
        mode,
        averaging,
        classes: classes.to_vec(),
        accuracy,
        per_class_rate,
        mean_rate,
        confusion,
        total_sequences: total as usize,
        short_sequences,
        timing: TimingStats {
            wall_seconds: wall,
            sequences: total as usize,
            frames,
            frames_per_second: if wall > 0.0 { frames as f64 / wall } else { 0.0 },
        },
    }
}

/// Classify each test sequence once after resampling it to the model's
/// input length.
pub fn eval_offline(
    model: &Model,
    schema: &FeatureSchema,
    test: &[SkeletonSequence],
    classes: &[String],
) -> Result<EvalReport> {
    if model.config.num_classes != classes.len() {
        return Err(HarnessError::Manifest(format!(
            "model has {} classes, manifest {}",
            model.config.num_classes,
            classes.len()
        )));
    }
    let started = Instant::now();
    let n = model.config.input_frames;
    let mut confusion = ConfusionMatrix::new(classes.len());
    let mut class_totals = vec![0u64; classes.len()];
    let mut frames = 0u64;
    for seq in test {
        let label = require_label(seq)?;
        class_totals[label] += 1;
        frames += seq.len() as u64;
        let resampled = resample_sequence(seq, n)?;
        let tensor = assemble_sequence_tensor(&resampled.frames, schema, n)?;
        let probs = model.forward(&tensor, Mode::Infer)?;
        confusion.add(label, argmax(&probs));
    }
    Ok(finish_report(
        EvalMode::Offline,
        None,
        classes,
        confusion,
        &class_totals,
        0,
        started,
        frames,
    ))
}

/// One JSON-lines record per emission when a prediction log is requested.
#[derive(Serialize)]
struct PredictionLogRecord<'a> {
    sequence: &'a str,
    label: usize,
    step: u64,
    probs_instant: &'a [f64],
    probs_averaged: &'a [f64],
    argmax: usize,
    class: &'a str,
    tie_broken: bool,
}

/// Replay each test sequence frame-by-frame through a fresh engine; a
/// sequence counts positive when the argmax of its final averaged
/// prediction matches the label. Sequences shorter than one window emit
/// nothing and count negative.
pub fn eval_online(
    model: &Model,
    schema: &FeatureSchema,
    test: &[SkeletonSequence],
    classes: &[String],
    method: SamplerKind,
    averaging: Averaging,
    mut log: Option<&mut dyn Write>,
) -> Result<EvalReport> {
    if model.config.num_classes != classes.len() {
        return Err(HarnessError::Manifest(format!(
            "model has {} classes, manifest {}",
            model.config.num_classes,
            classes.len()
        )));
    }
    let started = Instant::now();
    let mut config = EngineConfig::new(schema.clone(), model.clone());
    config.n = model.config.input_frames;
    config.averaging = averaging;
    config.sampler = method;
    let mut engine = Engine::new(config)?;

    let mode = match method {
        SamplerKind::MemoryGroup => EvalMode::OnlineMemoryGroup,
        SamplerKind::SlidingWindow => EvalMode::OnlineSlidingWindow,
    };
    let mut confusion = ConfusionMatrix::new(classes.len());
    let mut class_totals = vec![0u64; classes.len()];
    let mut short_sequences = 0usize;
    let mut frames = 0u64;
    for seq in test {
        let label = require_label(seq)?;
        class_totals[label] += 1;
        frames += seq.len() as u64;
        engine.reset();
        let name = seq.meta.clone().unwrap_or_default();
        let mut last = None;
        for frame in &seq.frames {
            if let Some(prediction) = engine.step(frame.clone())? {
                if let Some(out) = log.as_deref_mut() {
                    let record = PredictionLogRecord {
                        sequence: &name,
                        label,
                        step: prediction.step,
                        probs_instant: &prediction.probs_instant,
                        probs_averaged: &prediction.probs_averaged,
                        argmax: prediction.argmax,
                        class: &classes[prediction.argmax],
                        tie_broken: prediction.tie_broken,
                    };
                    writeln!(out, "{}", serde_json::to_string(&record)?)?;
                }
                last = Some(prediction);
            }
        }
        match last {
            Some(prediction) => confusion.add(label, prediction.argmax),
            None => short_sequences += 1,
        }
    }
    Ok(finish_report(
        mode,
        Some(averaging),
        classes,
        confusion,
        &class_totals,
        short_sequences,
        started,
        frames,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use skelact::nn::ModelConfig;
    use skelact::schema::{build_schema, SchemaConfig};
    use skelact::{SkeletonFrame, Topology};

    fn topo() -> Topology {
        let t = Topology {
            name: "mini".into(),
            dim: 2,
            joint_names: vec!["r".into(), "a".into(), "b".into()],
            edges: vec![(0, 1), (0, 2)],
            end_joints: vec![1, 2],
            root_joint: 0,
            plane_triples: vec![],
            mirror_pairs: vec![],
        };
        t.validate().unwrap();
        t
    }

    fn sequence(label: usize, frames: usize) -> SkeletonSequence {
        let mut seq = SkeletonSequence::new(
            (0..frames)
                .map(|i| {
                    SkeletonFrame::new(
                        i as u64,
                        vec![
                            [0.0, 0.0, 0.0],
                            [(i as f64 * 0.3).sin(), 1.0, 0.0],
                            [1.0, 0.5, 0.0],
                        ],
                    )
                })
                .collect(),
        );
        seq.label = Some(label);
        seq
    }

    fn fresh_model(schema: &FeatureSchema, classes: usize) -> Model {
        let mut mc = ModelConfig::new(16, schema.channels_with_motion(), classes);
        mc.base_filters = 2;
        mc.fc_width = 4;
        Model::new(mc).unwrap()
    }

    #[test]
    fn confusion_matrix_math() {
        let mut cm = ConfusionMatrix::new(3);
        cm.add(0, 0);
        cm.add(0, 1);
        cm.add(1, 1);
        cm.add(2, 2);
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.row_total(0), 2);
        let mut buf = Vec::new();
        cm.write_csv(&mut buf, &["a".into(), "b".into(), "c".into()])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() == 4);
        assert!(text.contains("a,1,1,0"));
    }

    #[test]
    fn constant_output_model_scores_chance_on_balanced_split() {
        // a fresh model has a zero class layer: uniform probabilities, so
        // argmax ties break to class 0 and a balanced 10-class split scores
        // exactly 0.10
        let topo = topo();
        let schema = build_schema(&topo, &SchemaConfig::default());
        let model = fresh_model(&schema, 10);
        let classes: Vec<String> = (0..10).map(|c| format!("c{c}")).collect();
        let test: Vec<SkeletonSequence> =
            (0..10).flat_map(|c| (0..3).map(move |_| sequence(c, 20))).collect();
        let report = eval_offline(&model, &schema, &test, &classes).unwrap();
        assert!((report.accuracy - 0.10).abs() < 1e-12);
        // accuracy always equals trace / total
        assert_eq!(report.confusion.trace(), 3);
        assert_eq!(report.total_sequences, 30);
    }

    #[test]
    fn all_correct_predictions_give_unit_accuracy_and_diagonal_matrix() {
        // a fresh model always predicts class 0, so on a class-0-only split
        // it is a perfect classifier
        let topo = topo();
        let schema = build_schema(&topo, &SchemaConfig::default());
        let model = fresh_model(&schema, 3);
        let classes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let test: Vec<SkeletonSequence> = (0..6).map(|_| sequence(0, 24)).collect();
        let report = eval_offline(&model, &schema, &test, &classes).unwrap();
        assert_eq!(report.accuracy, 1.0);
        for (i, row) in report.confusion.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == 0 && j == 0 { 6 } else { 0 });
            }
        }
    }

    #[test]
    fn online_counts_short_sequences_negative() {
        let topo = topo();
        let schema = build_schema(&topo, &SchemaConfig::default());
        let model = fresh_model(&schema, 2);
        let classes = vec!["a".to_string(), "b".to_string()];
        // 10 frames < n=16: no emission
        let test = vec![sequence(0, 10), sequence(1, 32)];
        let report = eval_online(
            &model,
            &schema,
            &test,
            &classes,
            SamplerKind::MemoryGroup,
            Averaging::Pairwise,
            None,
        )
        .unwrap();
        assert_eq!(report.short_sequences, 1);
        assert_eq!(report.total_sequences, 2);
        assert_eq!(report.confusion.total(), 1);
        // the short class-0 sequence counts negative
        assert_eq!(report.per_class_rate[0], 0.0);
    }

    #[test]
    fn online_prediction_log_is_written() {
        let topo = topo();
        let schema = build_schema(&topo, &SchemaConfig::default());
        let model = fresh_model(&schema, 2);
        let classes = vec!["a".to_string(), "b".to_string()];
        let test = vec![sequence(0, 48)];
        let mut log = Vec::new();
        let report = eval_online(
            &model,
            &schema,
            &test,
            &classes,
            SamplerKind::SlidingWindow,
            Averaging::Cumulative,
            Some(&mut log),
        )
        .unwrap();
        assert_eq!(report.mode, EvalMode::OnlineSlidingWindow);
        let text = String::from_utf8(log).unwrap();
        // 48 frames, n = 16: exactly 3 emissions
        assert_eq!(text.lines().count(), 3);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["step"], 0);
        assert!(first["probs_averaged"].is_array());
    }

    #[test]
    fn class_count_mismatch_rejected() {
        let topo = topo();
        let schema = build_schema(&topo, &SchemaConfig::default());
        let model = fresh_model(&schema, 2);
        let classes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        assert!(eval_offline(&model, &schema, &[sequence(0, 20)], &classes).is_err());
    }
}
