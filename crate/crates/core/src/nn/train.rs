//! Backpropagation, the Adam training step, and the epoch loop with a
//! reduce-on-plateau learning-rate schedule.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::layers::{
    apply_channel_mask, gap_backward, leaky_relu_backward, max_pool_backward, Mat,
};
use super::{ForwardCache, Mode, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::features::SequenceFeatureTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.001,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_lr: 0.00001,
            max_epochs: 400,
            batch_size: 32,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigMismatch(m));
        if !(0.0..1.0).contains(&self.plateau_factor) || self.plateau_factor == 0.0 {
            return fail(format!("plateau factor must be in (0,1): {}", self.plateau_factor));
        }
        if self.min_lr >= self.initial_lr {
            return fail("min_lr must be below the initial learning rate".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.plateau_patience == 0 {
            return fail("batch size, epochs and patience must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation fraction must be in [0,1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub final_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
}

/// Learning-rate state: halve after `patience` consecutive epochs without
/// the monitored loss improving by more than 1e-6, floored at `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

const IMPROVEMENT_EPS: f64 = 1e-6;

impl PlateauSchedule {
    pub fn new(config: &TrainConfig) -> PlateauSchedule {
        PlateauSchedule {
            lr: config.initial_lr,
            factor: config.plateau_factor,
            patience: config.plateau_patience,
            min_lr: config.min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Record one epoch's monitored loss; returns true when it improved.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best - IMPROVEMENT_EPS {
            self.best = loss;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
            false
        }
    }
}

/// Index helpers into the canonical parameter-block order: each conv stage
/// owns four blocks (conv w/b, bn gamma/beta), followed by the four dense
/// blocks.
fn stage_base(model: &Model, block_idx: usize, stage_idx: usize) -> usize {
    let mut stages = 0;
    for b in &model.blocks[..block_idx] {
        stages += b.stages.len();
    }
    (stages + stage_idx) * 4
}

fn dense_base(model: &Model) -> usize {
    let stages: usize = model.blocks.iter().map(|b| b.stages.len()).sum();
    stages * 4
}

fn two_muts(grads: &mut [Vec<f64>], i: usize, j: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    debug_assert!(i < j);
    let (left, right) = grads.split_at_mut(j);
    (&mut left[i], &mut right[0])
}

/// Mean cross-entropy of the cached batch probabilities.
pub(crate) fn batch_loss(cache: &ForwardCache, labels: &[usize]) -> f64 {
    let b = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -cache.probs[i][y].ln())
        .sum::<f64>()
        / b
}

/// Full backward pass; gradient blocks come back in canonical order.
pub(crate) fn compute_grads(
    model: &Model,
    cache: &ForwardCache,
    labels: &[usize],
) -> Vec<Vec<f64>> {
    let mut grads: Vec<Vec<f64>> = Vec::new();
    model.visit_params(|_, block| grads.push(vec![0.0; block.len()]));
    let n = labels.len();
    let bsz = n as f64;
    let slope = model.config.activation.slope();
    let fc = dense_base(model);

    // class layer
    let mut d_fc1_act: Vec<Vec<f64>> = Vec::with_capacity(n);
    {
        let (dw, db) = two_muts(&mut grads, fc + 2, fc + 3);
        for i in 0..n {
            let mut dlogits = cache.probs[i].clone();
            dlogits[labels[i]] -= 1.0;
            for v in &mut dlogits {
                *v /= bsz;
            }
            d_fc1_act.push(model.fc_class.backward(&cache.fc1_act[i], &dlogits, dw, db));
        }
    }

    // hidden layer (through its activation)
    let mut d_gap: Vec<Vec<f64>> = Vec::with_capacity(n);
    {
        let (dw, db) = two_muts(&mut grads, fc, fc + 1);
        for i in 0..n {
            let mut d_pre = d_fc1_act[i].clone();
            for (g, &p) in d_pre.iter_mut().zip(&cache.fc1_pre[i]) {
                if p <= 0.0 {
                    *g *= slope;
                }
            }
            d_gap.push(model.fc_hidden.backward(&cache.gap_out[i], &d_pre, dw, db));
        }
    }

    let mut d_cur: Vec<Mat> = d_gap
        .iter()
        .map(|dy| gap_backward(dy, cache.gap_rows))
        .collect();
    if let Some(masks) = &cache.dropout_mask {
        d_cur = d_cur
            .iter()
            .zip(masks)
            .map(|(dy, m)| apply_channel_mask(dy, m))
            .collect();
    }

    for (bi, (block, bcache)) in model.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        if let Some(pc) = &bcache.pool {
            d_cur = d_cur
                .iter()
                .zip(&pc.argmax)
                .map(|(dy, arg)| max_pool_backward(dy, arg, pc.in_rows))
                .collect();
        }
        for (si, (stage, scache)) in block.stages.iter().zip(&bcache.stages).enumerate().rev() {
            let d_act: Vec<Mat> = d_cur
                .iter()
                .zip(&scache.pre_act)
                .map(|(dy, pre)| leaky_relu_backward(pre, dy, slope))
                .collect();
            let base = stage_base(model, bi, si);
            let d_bn = {
                let (dgamma, dbeta) = two_muts(&mut grads, base + 2, base + 3);
                stage.bn.backward(&scache.bn_cache, &d_act, dgamma, dbeta)
            };
            let (dw, db) = two_muts(&mut grads, base, base + 1);
            d_cur = d_bn
                .iter()
                .zip(&scache.conv_in)
                .map(|(dy, x)| stage.conv.backward(x, dy, dw, db))
                .collect();
        }
    }
    grads
}

/// Train-mode loss of a batch without touching any state (used by the
/// gradient checker).
pub(crate) fn loss_only(model: &Model, mats: &[Mat], labels: &[usize]) -> f64 {
    let (_, cache) = model.forward_train_mats(mats, None);
    batch_loss(&cache, labels)
}

pub(crate) fn tensors_to_mats(batch: &[(&SequenceFeatureTensor, usize)]) -> Vec<Mat> {
    batch
        .iter()
        .map(|(x, _)| Mat::from_vec(x.frames, x.channels, x.data.clone()))
        .collect()
}

/// One training step: mean cross-entropy over the batch, backprop, one Adam
/// update. Returns the pre-update loss.
pub fn backward_and_step(
    model: &mut Model,
    opt: &mut AdamState,
    batch: &[(&SequenceFeatureTensor, usize)],
    lr: f64,
    dropout_rng: &mut ChaCha20Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    for (x, y) in batch {
        model.check_input(x)?;
        if *y >= model.config.num_classes {
            return Err(Error::LabelOutOfRange {
                label: *y,
                num_classes: model.config.num_classes,
            });
        }
    }
    let mats = tensors_to_mats(batch);
    let labels: Vec<usize> = batch.iter().map(|(_, y)| *y).collect();
    let (_, cache) = model.forward_train_mats(&mats, Some(dropout_rng));
    let loss = batch_loss(&cache, &labels);
    if !loss.is_finite() {
        return Err(Error::NumericFailure(opt.steps() as usize));
    }
    let grads = compute_grads(model, &cache, &labels);
    opt.step(model, &grads, lr);
    for (block, bcache) in model.blocks.iter_mut().zip(&cache.blocks) {
        for (stage, scache) in block.stages.iter_mut().zip(&bcache.stages) {
            stage.bn.update_running(&scache.bn_cache);
        }
    }
    Ok(loss)
}

/// Stratified validation pick, independent of label values: walk a seeded
/// permutation of the dataset and take the first `quota(class)` examples of
/// each class.
fn split_validation(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    rng: &mut ChaCha20Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.shuffle(rng);
    let mut class_sizes = vec![0usize; num_classes];
    for &y in labels {
        class_sizes[y] += 1;
    }
    let quota: Vec<usize> = class_sizes
        .iter()
        .map(|&m| {
            if fraction == 0.0 || m < 2 {
                0
            } else {
                ((fraction * m as f64).round() as usize).clamp(1, m - 1)
            }
        })
        .collect();
    let mut taken = vec![0usize; num_classes];
    let mut val = Vec::new();
    let mut train = Vec::new();
    for &i in &perm {
        let y = labels[i];
        if taken[y] < quota[y] {
            taken[y] += 1;
            val.push(i);
        } else {
            train.push(i);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn mean_infer_loss(
    model: &Model,
    data: &[(SequenceFeatureTensor, usize)],
    idx: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        let (x, y) = &data[i];
        let p = model.forward(x, Mode::Infer)?;
        total += -p[*y].ln();
    }
    Ok(total / idx.len() as f64)
}

/// Train a fresh model on labeled tensors. Splits off a stratified
/// validation set, runs up to `max_epochs` epochs under the plateau
/// schedule, and returns the parameters from the epoch with the best
/// validation loss.
pub fn train(
    data: &[(SequenceFeatureTensor, usize)],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    train_config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let labels: Vec<usize> = data.iter().map(|(_, y)| *y).collect();
    let mut present = vec![false; model_config.num_classes];
    for &y in &labels {
        if y >= model_config.num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: model_config.num_classes,
            });
        }
        present[y] = true;
    }
    let seen = present.iter().filter(|&&p| p).count();
    if seen < model_config.num_classes {
        return Err(Error::DegenerateDataset(format!(
            "{seen} of {} classes have examples",
            model_config.num_classes
        )));
    }

    let start = std::time::Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(train_config.seed);
    let (mut train_idx, val_idx) = split_validation(
        &labels,
        model_config.num_classes,
        train_config.validation_fraction,
        &mut rng,
    );
    if train_idx.is_empty() {
        return Err(Error::DegenerateDataset("no training examples after split".into()));
    }

    let mut model = Model::new(model_config.clone())?;
    let mut opt = AdamState::new();
    let mut schedule = PlateauSchedule::new(train_config);
    let mut best_model = model.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut epochs = Vec::with_capacity(train_config.max_epochs);

    for epoch in 0..train_config.max_epochs {
        let lr = schedule.lr();
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(train_config.batch_size) {
            let batch: Vec<(&SequenceFeatureTensor, usize)> =
                chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let loss = backward_and_step(&mut model, &mut opt, &batch, lr, &mut rng)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            mean_infer_loss(&model, data, &val_idx)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NumericFailure(epoch));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if schedule.observe(val_loss) {
            best_val = val_loss;
            best_epoch = epoch;
            best_model = model.clone();
        }
    }

    let report = TrainReport {
        final_epoch: epochs.len().saturating_sub(1),
        best_epoch,
        best_val_loss: best_val,
        wall_seconds: start.elapsed().as_secs_f64(),
        epochs,
    };
    Ok((best_model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::new(16, 4, 2);
        c.base_filters = 2;
        c.fc_width = 4;
        c.seed = 3;
        c
    }

    fn random_tensor(rng: &mut ChaCha20Rng, channels: usize) -> SequenceFeatureTensor {
        SequenceFeatureTensor {
            frames: 16,
            channels,
            data: (0..16 * channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            layout_version: 1,
        }
    }

    /// Two easily separated classes: constant offset +/- plus noise.
    fn toy_dataset(
        n_per_class: usize,
        channels: usize,
        seed: u64,
    ) -> Vec<(SequenceFeatureTensor, usize)> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for class in 0..2usize {
            for _ in 0..n_per_class {
                let mut x = random_tensor(&mut rng, channels);
                let shift = if class == 0 { 1.0 } else { -1.0 };
                for (i, v) in x.data.iter_mut().enumerate() {
                    if i % channels == 0 {
                        *v += shift;
                    }
                }
                data.push((x, class));
            }
        }
        data
    }

    #[test]
    fn uniform_prediction_loss_is_ln_k() {
        // fresh model has a zero class layer, so probabilities are uniform
        let model = Model::new(tiny_config()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, 4);
        let mats = tensors_to_mats(&[(&x, 0)]);
        let loss = loss_only(&model, &mats, &[0]);
        assert!((loss - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut model = Model::new(tiny_config()).unwrap();
        let mut opt = AdamState::new();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 4);
        let mut before = Vec::new();
        model.visit_params(|_, b| before.push(b.clone()));
        let l1 =
            backward_and_step(&mut model, &mut opt, &[(&x, 0)], 0.0, &mut rng).unwrap();
        let l2 =
            backward_and_step(&mut model, &mut opt, &[(&x, 0)], 0.0, &mut rng).unwrap();
        assert_eq!(l1, l2);
        let mut after = Vec::new();
        model.visit_params(|_, b| after.push(b.clone()));
        assert_eq!(before, after);
    }

    #[test]
    fn overfits_a_single_example() {
        let mut model = Model::new(tiny_config()).unwrap();
        let mut opt = AdamState::new();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let x = random_tensor(&mut rng, 4);
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            last = backward_and_step(&mut model, &mut opt, &[(&x, 1)], 0.01, &mut rng)
                .unwrap();
            if last < 0.01 {
                break;
            }
        }
        assert!(last < 0.01, "loss stuck at {last}");
    }

    #[test]
    fn empty_batch_and_bad_label_rejected() {
        let mut model = Model::new(tiny_config()).unwrap();
        let mut opt = AdamState::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            backward_and_step(&mut model, &mut opt, &[], 0.1, &mut rng),
            Err(Error::EmptyInput(_))
        ));
        let x = random_tensor(&mut rng, 4);
        assert!(matches!(
            backward_and_step(&mut model, &mut opt, &[(&x, 2)], 0.1, &mut rng),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn plateau_schedule_halves_to_the_floor() {
        let config = TrainConfig::default();
        let mut schedule = PlateauSchedule::new(&config);
        let mut trace = vec![schedule.lr()];
        schedule.observe(1.0); // first epoch improves over +inf
        for _ in 0..40 {
            schedule.observe(1.0);
            trace.push(schedule.lr());
        }
        let mut reductions: Vec<f64> = trace.clone();
        reductions.dedup();
        assert_eq!(
            reductions,
            vec![0.001, 0.0005, 0.00025, 0.000125, 0.0000625, 0.00003125, 0.000015625, 0.00001]
        );
        // non-increasing throughout
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        // and it stays at the floor
        schedule.observe(1.0);
        for _ in 0..10 {
            schedule.observe(1.0);
        }
        assert_eq!(schedule.lr(), 0.00001);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(6, 4, 23);
        let mc = tiny_config();
        let tc = TrainConfig {
            max_epochs: 8,
            batch_size: 4,
            seed: 77,
            ..Default::default()
        };
        let (_, r1) = train(&data, &mc, &tc).unwrap();
        let (_, r2) = train(&data, &mc, &tc).unwrap();
        assert_eq!(r1.epochs, r2.epochs);
    }

    #[test]
    fn training_learns_the_toy_problem() {
        let data = toy_dataset(10, 4, 31);
        let mc = tiny_config();
        let tc = TrainConfig {
            max_epochs: 40,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let (model, report) = train(&data, &mc, &tc).unwrap();
        assert!(report.best_val_loss < 0.5, "val loss {}", report.best_val_loss);
        // the returned model classifies the training data well
        let mut correct = 0;
        for (x, y) in &data {
            let p = model.forward(x, Mode::Infer).unwrap();
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if argmax == *y {
                correct += 1;
            }
        }
        assert!(correct >= 18, "only {correct}/20 correct");
        // learning rate trace is non-increasing
        assert!(report
            .epochs
            .windows(2)
            .all(|w| w[1].lr <= w[0].lr));
    }

    #[test]
    fn one_class_dataset_rejected() {
        let data: Vec<_> = toy_dataset(6, 4, 23)
            .into_iter()
            .filter(|(_, y)| *y == 0)
            .collect();
        let res = train(&data, &tiny_config(), &TrainConfig::default());
        assert!(matches!(res, Err(Error::DegenerateDataset(_))));
    }

    #[test]
    fn validation_split_is_stratified() {
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (train, val) = split_validation(&labels, 2, 0.1, &mut rng);
        assert_eq!(val.len(), 4);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 2);
        assert_eq!(train.len(), 36);
    }
}
