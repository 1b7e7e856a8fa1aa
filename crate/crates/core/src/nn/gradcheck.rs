//! Central-finite-difference oracle for the backward pass.
//!
//! Every analytic gradient block is compared against `(f(w+h) - f(w-h)) /
//! 2h` on a fixed seeded batch. Errors are measured relative to the largest
//! gradient magnitude in the block. Batch statistics couple every element
//! of a batch-norm channel, so those blocks are checked at a 10x looser
//! threshold.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::train::{compute_grads, loss_only};
use super::{layers::Mat, Model, ModelConfig, ParamKind};
use crate::error::Result;

const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub kind: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub h: f64,
    pub blocks: Vec<BlockCheck>,
    pub max_rel_err: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn worst_of(&self, kind: &str) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.kind == kind)
            .map(|b| b.max_rel_err)
            .fold(0.0, f64::max)
    }
}

/// A config small enough to difference every parameter in seconds.
pub fn default_gradcheck_config() -> ModelConfig {
    let mut c = ModelConfig::new(16, 8, 2);
    c.base_filters = 4;
    c.fc_width = 8;
    c.spatial_dropout = 0.0;
    c.seed = 7;
    c
}

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Conv => "conv",
        ParamKind::BatchNorm => "batch-norm",
        ParamKind::Dense => "dense",
    }
}

fn set_param(model: &mut Model, block: usize, elem: usize, value: f64) {
    let mut idx = 0;
    model.visit_params_mut(|_, b| {
        if idx == block {
            b[elem] = value;
        }
        idx += 1;
    });
}

fn get_param(model: &Model, block: usize, elem: usize) -> f64 {
    let mut idx = 0;
    let mut out = 0.0;
    model.visit_params(|_, b| {
        if idx == block {
            out = b[elem];
        }
        idx += 1;
    });
    out
}

/// Compare analytic gradients against central finite differences for every
/// parameter block on a fixed random input. `tolerance` applies to conv and
/// dense blocks; batch-norm blocks get 10x.
pub fn numeric_gradient_check(config: &ModelConfig, tolerance: f64) -> Result<GradCheckReport> {
    let mut cfg = config.clone();
    // dropout has no parameters; a random mask would only add noise
    cfg.spatial_dropout = 0.0;
    let mut model = Model::new(cfg.clone())?;

    // Re-randomize everything (the class layer starts at zero, which would
    // zero out every upstream gradient); gammas stay near 1.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed_cafe);
    let names = model.param_block_names();
    let mut idx = 0;
    model.visit_params_mut(|_, block| {
        let around_one = names[idx].ends_with("gamma");
        for v in block.iter_mut() {
            let r = rng.gen_range(-0.3..0.3);
            *v = if around_one { 1.0 + r } else { r };
        }
        idx += 1;
    });

    let mats: Vec<Mat> = (0..2)
        .map(|_| {
            Mat::from_vec(
                cfg.input_frames,
                cfg.input_channels,
                (0..cfg.input_frames * cfg.input_channels)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
        })
        .collect();
    let labels: Vec<usize> = vec![0, 1 % cfg.num_classes];

    let (_, cache) = model.forward_train_mats(&mats, None);
    let analytic = compute_grads(&model, &cache, &labels);

    let mut kinds = Vec::new();
    model.visit_params(|kind, _| kinds.push(kind));

    let mut blocks = Vec::with_capacity(analytic.len());
    for (bi, grad) in analytic.iter().enumerate() {
        let mut max_abs_diff = 0.0f64;
        let mut scale = 0.0f64;
        for ei in 0..grad.len() {
            let orig = get_param(&model, bi, ei);
            set_param(&mut model, bi, ei, orig + FD_STEP);
            let up = loss_only(&model, &mats, &labels);
            set_param(&mut model, bi, ei, orig - FD_STEP);
            let down = loss_only(&model, &mats, &labels);
            set_param(&mut model, bi, ei, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_abs_diff = max_abs_diff.max((grad[ei] - numeric).abs());
            scale = scale.max(grad[ei].abs()).max(numeric.abs());
        }
        // Floor the scale at the finite-difference noise level. A conv bias
        // feeding batch norm has an exactly zero gradient (the channel mean
        // absorbs it); differencing such a block measures ulp noise of the
        // loss divided by 2h, around 1e-12, which must not read as error.
        let rel = max_abs_diff / scale.max(1e-6);
        let tol = match kinds[bi] {
            ParamKind::BatchNorm => tolerance * 10.0,
            _ => tolerance,
        };
        blocks.push(BlockCheck {
            name: names[bi].clone(),
            kind: kind_name(kinds[bi]).to_string(),
            max_rel_err: rel,
            tolerance: tol,
            pass: rel < tol,
        });
    }
    let max_rel_err = blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
    let pass = blocks.iter().all(|b| b.pass);
    Ok(GradCheckReport {
        h: FD_STEP,
        blocks,
        max_rel_err,
        pass,
    })
}
