//! From-scratch 1D CNN classifier: three conv blocks with batch norm and a
//! leaky rectifier, spatial dropout, global average pooling and two
//! fully-connected layers, trained with Adam under a
//! reduce-on-plateau learning-rate schedule.

mod adam;
mod gradcheck;
mod layers;
mod train;

pub use adam::AdamState;
pub use gradcheck::{default_gradcheck_config, numeric_gradient_check, BlockCheck, GradCheckReport};
pub use layers::{BatchNorm1d, Conv1d, Dense};
pub use train::{backward_and_step, train, EpochStats, TrainConfig, TrainReport};

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SequenceFeatureTensor;
use layers::{
    apply_channel_mask, gap, leaky_relu, leaky_relu_vec, max_pool, softmax,
    spatial_dropout_mask, Mat,
};

pub const MODEL_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.1 }
    }
}

impl Activation {
    fn slope(&self) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => *slope,
        }
    }
}

/// Architecture hyperparameters. Filter widths double per block
/// (`base_filters`, 2x, 4x); kernel size is fixed at 3 and pooling stride
/// at 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_frames: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub base_filters: usize,
    pub conv_kernel: usize,
    pub pool_stride: usize,
    pub spatial_dropout: f64,
    pub fc_width: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_frames: usize, input_channels: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_frames,
            input_channels,
            num_classes,
            base_filters: 64,
            conv_kernel: 3,
            pool_stride: 2,
            spatial_dropout: 0.1,
            fc_width: 128,
            activation: Activation::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigMismatch(m));
        if self.conv_kernel != 3 {
            return fail(format!("conv kernel is fixed at 3, got {}", self.conv_kernel));
        }
        if self.pool_stride != 2 {
            return fail(format!("pool stride is fixed at 2, got {}", self.pool_stride));
        }
        if self.input_frames < 4 {
            return fail(format!(
                "input must span at least 4 frames to survive two poolings, got {}",
                self.input_frames
            ));
        }
        if self.input_channels == 0 || self.num_classes < 2 || self.base_filters == 0 {
            return fail("channel, class and filter counts must be positive (>= 2 classes)".into());
        }
        if self.fc_width == 0 {
            return fail("fc width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.spatial_dropout) {
            return fail(format!(
                "dropout rate must be in [0, 1), got {}",
                self.spatial_dropout
            ));
        }
        Ok(())
    }

    /// Conv channel widths per block.
    fn block_widths(&self) -> [usize; 3] {
        [self.base_filters, 2 * self.base_filters, 4 * self.base_filters]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvStage {
    pub conv: Conv1d,
    pub bn: BatchNorm1d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvBlock {
    pub stages: Vec<ConvStage>,
    pub pool: bool,
}

/// The classifier: parameters plus the running batch-norm statistics.
/// Optimizer state lives in [`AdamState`], owned by the trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    pub fc_hidden: Dense,
    pub fc_class: Dense,
    pub layout_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Conv,
    BatchNorm,
    Dense,
}

/// Inference runs on running statistics with dropout off and is
/// deterministic; train mode uses batch statistics. Dropout is applied only
/// inside training steps, which own the RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl Model {
    /// Build a freshly initialized model: fan-in-scaled uniform conv and
    /// hidden weights (seeded), zero biases, and a zero class layer so the
    /// initial output is uniform and class labels enter symmetrically.
    pub fn new(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let widths = config.block_widths();
        let k = config.conv_kernel;
        let mut blocks = Vec::with_capacity(3);
        let mut in_ch = config.input_channels;
        for (bi, &out_ch) in widths.iter().enumerate() {
            let mut stages = Vec::with_capacity(2);
            for _ in 0..2 {
                let fan_in = in_ch * k;
                let scale = (1.0 / fan_in as f64).sqrt();
                let w: Vec<f64> = (0..out_ch * k * in_ch)
                    .map(|_| rng.gen_range(-scale..scale))
                    .collect();
                stages.push(ConvStage {
                    conv: Conv1d {
                        in_ch,
                        out_ch,
                        kernel: k,
                        w,
                        b: vec![0.0; out_ch],
                    },
                    bn: BatchNorm1d::new(out_ch),
                });
                in_ch = out_ch;
            }
            blocks.push(ConvBlock {
                stages,
                pool: bi < 2,
            });
        }
        let fc_in = widths[2];
        let scale = (1.0 / fc_in as f64).sqrt();
        let fc_hidden = Dense {
            in_dim: fc_in,
            out_dim: config.fc_width,
            w: (0..config.fc_width * fc_in)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
            b: vec![0.0; config.fc_width],
        };
        let fc_class = Dense {
            in_dim: config.fc_width,
            out_dim: config.num_classes,
            w: vec![0.0; config.num_classes * config.fc_width],
            b: vec![0.0; config.num_classes],
        };
        Ok(Model {
            config,
            blocks,
            fc_hidden,
            fc_class,
            layout_version: MODEL_LAYOUT_VERSION,
        })
    }

    fn check_input(&self, x: &SequenceFeatureTensor) -> Result<()> {
        if x.frames != self.config.input_frames || x.channels != self.config.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {}x{}, got {}x{}",
                self.config.input_frames, self.config.input_channels, x.frames, x.channels
            )));
        }
        if !x.data.iter().all(|v| v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite input tensor".into()));
        }
        Ok(())
    }

    /// Class probabilities for one tensor. Always a simplex point.
    pub fn forward(&self, x: &SequenceFeatureTensor, mode: Mode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mat = Mat::from_vec(x.frames, x.channels, x.data.clone());
        match mode {
            Mode::Infer => Ok(self.forward_infer_mat(&mat)),
            Mode::Train => {
                let (probs, _) = self.forward_train_mats(std::slice::from_ref(&mat), None);
                Ok(probs.into_iter().next().unwrap())
            }
        }
    }

    fn forward_infer_mat(&self, x: &Mat) -> Vec<f64> {
        let slope = self.config.activation.slope();
        let mut cur = x.clone();
        for block in &self.blocks {
            for stage in &block.stages {
                let conv_out = stage.conv.forward(&cur);
                let bn_out = stage.bn.forward_infer(&conv_out);
                cur = leaky_relu(&bn_out, slope);
            }
            if block.pool {
                cur = max_pool(&cur, self.config.pool_stride).0;
            }
        }
        let pooled = gap(&cur);
        let mut hidden = self.fc_hidden.forward(&pooled);
        leaky_relu_vec(&mut hidden, slope);
        softmax(&self.fc_class.forward(&hidden))
    }

    /// Train-mode batch forward (batch statistics; dropout only when an RNG
    /// is supplied). Returns per-sample probabilities and the cache.
    pub(crate) fn forward_train_mats(
        &self,
        xs: &[Mat],
        dropout_rng: Option<&mut ChaCha20Rng>,
    ) -> (Vec<Vec<f64>>, ForwardCache) {
        let slope = self.config.activation.slope();
        let mut cur: Vec<Mat> = xs.to_vec();
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let mut stage_caches = Vec::with_capacity(block.stages.len());
            for stage in &block.stages {
                let conv_in = cur.clone();
                let conv_out: Vec<Mat> = cur.iter().map(|x| stage.conv.forward(x)).collect();
                let (bn_out, bn_cache) = stage.bn.forward_train(&conv_out);
                cur = bn_out.iter().map(|m| leaky_relu(m, slope)).collect();
                stage_caches.push(StageCache {
                    conv_in,
                    bn_cache,
                    pre_act: bn_out,
                });
            }
            let pool_cache = if block.pool {
                let in_rows = cur[0].rows;
                let mut args = Vec::with_capacity(cur.len());
                cur = cur
                    .iter()
                    .map(|x| {
                        let (y, arg) = max_pool(x, self.config.pool_stride);
                        args.push(arg);
                        y
                    })
                    .collect();
                Some(PoolCache { argmax: args, in_rows })
            } else {
                None
            };
            block_caches.push(BlockCache {
                stages: stage_caches,
                pool: pool_cache,
            });
        }
        let dropout_mask = match dropout_rng {
            Some(rng) if self.config.spatial_dropout > 0.0 => {
                let masks: Vec<Vec<f64>> = cur
                    .iter()
                    .map(|x| spatial_dropout_mask(x.cols, self.config.spatial_dropout, rng))
                    .collect();
                cur = cur
                    .iter()
                    .zip(&masks)
                    .map(|(x, m)| apply_channel_mask(x, m))
                    .collect();
                Some(masks)
            }
            _ => None,
        };
        let gap_rows = cur[0].rows;
        let gap_out: Vec<Vec<f64>> = cur.iter().map(gap).collect();
        let fc1_pre: Vec<Vec<f64>> = gap_out.iter().map(|g| self.fc_hidden.forward(g)).collect();
        let fc1_act: Vec<Vec<f64>> = fc1_pre
            .iter()
            .map(|h| {
                let mut a = h.clone();
                leaky_relu_vec(&mut a, slope);
                a
            })
            .collect();
        let probs: Vec<Vec<f64>> = fc1_act
            .iter()
            .map(|a| softmax(&self.fc_class.forward(a)))
            .collect();
        let cache = ForwardCache {
            blocks: block_caches,
            dropout_mask,
            gap_rows,
            gap_out,
            fc1_pre,
            fc1_act,
            probs: probs.clone(),
        };
        (probs, cache)
    }

    /// Visit every trainable parameter block in canonical order.
    pub(crate) fn visit_params<F: FnMut(ParamKind, &Vec<f64>)>(&self, mut f: F) {
        for block in &self.blocks {
            for stage in &block.stages {
                f(ParamKind::Conv, &stage.conv.w);
                f(ParamKind::Conv, &stage.conv.b);
                f(ParamKind::BatchNorm, &stage.bn.gamma);
                f(ParamKind::BatchNorm, &stage.bn.beta);
            }
        }
        f(ParamKind::Dense, &self.fc_hidden.w);
        f(ParamKind::Dense, &self.fc_hidden.b);
        f(ParamKind::Dense, &self.fc_class.w);
        f(ParamKind::Dense, &self.fc_class.b);
    }

    pub(crate) fn visit_params_mut<F: FnMut(ParamKind, &mut Vec<f64>)>(&mut self, mut f: F) {
        for block in &mut self.blocks {
            for stage in &mut block.stages {
                f(ParamKind::Conv, &mut stage.conv.w);
                f(ParamKind::Conv, &mut stage.conv.b);
                f(ParamKind::BatchNorm, &mut stage.bn.gamma);
                f(ParamKind::BatchNorm, &mut stage.bn.beta);
            }
        }
        f(ParamKind::Dense, &mut self.fc_hidden.w);
        f(ParamKind::Dense, &mut self.fc_hidden.b);
        f(ParamKind::Dense, &mut self.fc_class.w);
        f(ParamKind::Dense, &mut self.fc_class.b);
    }

    /// Human-readable names parallel to the visit order.
    pub(crate) fn param_block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (s, _) in block.stages.iter().enumerate() {
                names.push(format!("block{b}.conv{s}.weight"));
                names.push(format!("block{b}.conv{s}.bias"));
                names.push(format!("block{b}.bn{s}.gamma"));
                names.push(format!("block{b}.bn{s}.beta"));
            }
        }
        names.push("fc_hidden.weight".into());
        names.push("fc_hidden.bias".into());
        names.push("fc_class.weight".into());
        names.push("fc_class.bias".into());
        names
    }

    fn running_stat_entries(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (s, stage) in block.stages.iter().enumerate() {
                out.push((format!("block{b}.bn{s}.running_mean"), stage.bn.running_mean.clone()));
                out.push((format!("block{b}.bn{s}.running_var"), stage.bn.running_var.clone()));
            }
        }
        out
    }
}

pub(crate) struct StageCache {
    pub conv_in: Vec<Mat>,
    pub bn_cache: layers::BnCache,
    pub pre_act: Vec<Mat>,
}

pub(crate) struct PoolCache {
    pub argmax: Vec<Vec<usize>>,
    pub in_rows: usize,
}

pub(crate) struct BlockCache {
    pub stages: Vec<StageCache>,
    pub pool: Option<PoolCache>,
}

pub(crate) struct ForwardCache {
    pub blocks: Vec<BlockCache>,
    pub dropout_mask: Option<Vec<Vec<f64>>>,
    pub gap_rows: usize,
    pub gap_out: Vec<Vec<f64>>,
    pub fc1_pre: Vec<Vec<f64>>,
    pub fc1_act: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    layout_version: u32,
    config: ModelConfig,
    params: Vec<(String, Vec<f64>)>,
    running_stats: Vec<(String, Vec<f64>)>,
}

/// Write the model as a versioned JSON container: config plus flat
/// parameter arrays in canonical layer order. Exact round trip.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let names = model.param_block_names();
    let mut params = Vec::with_capacity(names.len());
    let mut idx = 0;
    model.visit_params(|_, block| {
        params.push((names[idx].clone(), block.clone()));
        idx += 1;
    });
    let file = ModelFile {
        layout_version: model.layout_version,
        config: model.config.clone(),
        params,
        running_stats: model.running_stat_entries(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptModel(e.to_string()))?;
    let found = value
        .get("layout_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptModel("missing layout_version".into()))?;
    if found != MODEL_LAYOUT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found as u32,
            supported: MODEL_LAYOUT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let mut model = Model::new(file.config)?;
    let names = model.param_block_names();
    if file.params.len() != names.len() {
        return Err(Error::CorruptModel(format!(
            "expected {} parameter blocks, found {}",
            names.len(),
            file.params.len()
        )));
    }
    let mut idx = 0;
    let mut err: Option<Error> = None;
    model.visit_params_mut(|_, block| {
        let (name, values) = &file.params[idx];
        if name != &names[idx] || values.len() != block.len() {
            err.get_or_insert(Error::CorruptModel(format!(
                "parameter block {idx} mismatch: {name}"
            )));
        } else {
            block.copy_from_slice(values);
        }
        idx += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    let expected_running = model.running_stat_entries();
    if file.running_stats.len() != expected_running.len() {
        return Err(Error::CorruptModel("running statistics missing".into()));
    }
    let mut stats = file.running_stats.into_iter();
    for block in &mut model.blocks {
        for stage in &mut block.stages {
            for target in [&mut stage.bn.running_mean, &mut stage.bn.running_var] {
                let (_, values) = stats.next().unwrap();
                if values.len() != target.len() {
                    return Err(Error::CorruptModel("running statistics length".into()));
                }
                target.copy_from_slice(&values);
            }
        }
    }
    if !finite(&model) {
        return Err(Error::CorruptModel("non-finite parameters".into()));
    }
    Ok(model)
}

fn finite(model: &Model) -> bool {
    let mut ok = true;
    model.visit_params(|_, block| {
        if !block.iter().all(|v| v.is_finite()) {
            ok = false;
        }
    });
    ok
}
