//! Layer kernels for the 1D CNN: forward passes and hand-derived backward
//! passes over a plain time-major matrix type.

use serde::{Deserialize, Serialize};

/// Dense `rows x cols` matrix, row-major; rows are time steps.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub d: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            d: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, d: Vec<f64>) -> Mat {
        debug_assert_eq!(d.len(), rows * cols);
        Mat { rows, cols, d }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.d[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.d[r * self.cols..(r + 1) * self.cols]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Same-padded 1D convolution. Weights are laid out `[out][tap][in]` so the
/// innermost loop runs over contiguous input channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    pub(crate) fn forward(&self, x: &Mat) -> Mat {
        let half = self.kernel / 2;
        let mut y = Mat::zeros(x.rows, self.out_ch);
        for t in 0..x.rows {
            for oc in 0..self.out_ch {
                let mut acc = self.b[oc];
                for tap in 0..self.kernel {
                    let src = t + tap;
                    if src < half || src - half >= x.rows {
                        continue;
                    }
                    let off = (oc * self.kernel + tap) * self.in_ch;
                    acc += dot(&self.w[off..off + self.in_ch], x.row(src - half));
                }
                y.row_mut(t)[oc] = acc;
            }
        }
        y
    }

    /// Accumulates dw/db and returns dx.
    pub(crate) fn backward(
        &self,
        x: &Mat,
        dy: &Mat,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Mat {
        let half = self.kernel / 2;
        let mut dx = Mat::zeros(x.rows, self.in_ch);
        for t in 0..x.rows {
            let dyrow = dy.row(t);
            for oc in 0..self.out_ch {
                let g = dyrow[oc];
                if g == 0.0 {
                    continue;
                }
                db[oc] += g;
                for tap in 0..self.kernel {
                    let src = t + tap;
                    if src < half || src - half >= x.rows {
                        continue;
                    }
                    let src = src - half;
                    let off = (oc * self.kernel + tap) * self.in_ch;
                    let xrow = x.row(src);
                    let dxrow = dx.row_mut(src);
                    for ic in 0..self.in_ch {
                        dw[off + ic] += g * xrow[ic];
                        dxrow[ic] += g * self.w[off + ic];
                    }
                }
            }
        }
        dx
    }
}

pub(crate) const BN_EPS: f64 = 1e-5;
/// `running <- BN_MOMENTUM * running + (1 - BN_MOMENTUM) * batch`
pub(crate) const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over batch and time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub ch: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

pub(crate) struct BnCache {
    pub x_hat: Vec<Mat>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub count: usize,
}

impl BatchNorm1d {
    pub(crate) fn new(ch: usize) -> BatchNorm1d {
        BatchNorm1d {
            ch,
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
        }
    }

    /// Train-mode forward over the whole batch (statistics span batch and
    /// time). Returns outputs plus the cache for backward.
    pub(crate) fn forward_train(&self, xs: &[Mat]) -> (Vec<Mat>, BnCache) {
        let count: usize = xs.iter().map(|x| x.rows).sum();
        let m = count as f64;
        let mut mean = vec![0.0; self.ch];
        for x in xs {
            for t in 0..x.rows {
                for (c, v) in x.row(t).iter().enumerate() {
                    mean[c] += v;
                }
            }
        }
        for v in &mut mean {
            *v /= m;
        }
        let mut var = vec![0.0; self.ch];
        for x in xs {
            for t in 0..x.rows {
                for (c, v) in x.row(t).iter().enumerate() {
                    let d = v - mean[c];
                    var[c] += d * d;
                }
            }
        }
        for v in &mut var {
            *v /= m;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(xs.len());
        let mut ys = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xh = Mat::zeros(x.rows, self.ch);
            let mut y = Mat::zeros(x.rows, self.ch);
            for t in 0..x.rows {
                let xrow = x.row(t);
                let xhrow = xh.row_mut(t);
                for c in 0..self.ch {
                    xhrow[c] = (xrow[c] - mean[c]) * inv_std[c];
                }
                let yrow = y.row_mut(t);
                for c in 0..self.ch {
                    yrow[c] = self.gamma[c] * xh.row(t)[c] + self.beta[c];
                }
            }
            x_hat.push(xh);
            ys.push(y);
        }
        (
            ys,
            BnCache {
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                count,
            },
        )
    }

    /// Inference-mode forward using the running statistics.
    pub(crate) fn forward_infer(&self, x: &Mat) -> Mat {
        let mut y = Mat::zeros(x.rows, self.ch);
        let scale: Vec<f64> = (0..self.ch)
            .map(|c| self.gamma[c] / (self.running_var[c] + BN_EPS).sqrt())
            .collect();
        for t in 0..x.rows {
            let xrow = x.row(t);
            let yrow = y.row_mut(t);
            for c in 0..self.ch {
                yrow[c] = scale[c] * (xrow[c] - self.running_mean[c]) + self.beta[c];
            }
        }
        y
    }

    /// Train-mode backward through the batch statistics.
    pub(crate) fn backward(
        &self,
        cache: &BnCache,
        dys: &[Mat],
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) -> Vec<Mat> {
        let m = cache.count as f64;
        let mut sum_dy = vec![0.0; self.ch];
        let mut sum_dy_xhat = vec![0.0; self.ch];
        for (dy, xh) in dys.iter().zip(&cache.x_hat) {
            for t in 0..dy.rows {
                let dyrow = dy.row(t);
                let xhrow = xh.row(t);
                for c in 0..self.ch {
                    sum_dy[c] += dyrow[c];
                    sum_dy_xhat[c] += dyrow[c] * xhrow[c];
                }
            }
        }
        for c in 0..self.ch {
            dgamma[c] += sum_dy_xhat[c];
            dbeta[c] += sum_dy[c];
        }
        dys.iter()
            .zip(&cache.x_hat)
            .map(|(dy, xh)| {
                let mut dx = Mat::zeros(dy.rows, self.ch);
                for t in 0..dy.rows {
                    let dyrow = dy.row(t);
                    let xhrow = xh.row(t);
                    let dxrow = dx.row_mut(t);
                    for c in 0..self.ch {
                        dxrow[c] = self.gamma[c] * cache.inv_std[c]
                            * (dyrow[c] - sum_dy[c] / m - xhrow[c] * sum_dy_xhat[c] / m);
                    }
                }
                dx
            })
            .collect()
    }

    pub(crate) fn update_running(&mut self, cache: &BnCache) {
        for c in 0..self.ch {
            self.running_mean[c] =
                BN_MOMENTUM * self.running_mean[c] + (1.0 - BN_MOMENTUM) * cache.batch_mean[c];
            self.running_var[c] =
                BN_MOMENTUM * self.running_var[c] + (1.0 - BN_MOMENTUM) * cache.batch_var[c];
        }
    }
}

/// Leaky rectifier, elementwise.
pub(crate) fn leaky_relu(x: &Mat, slope: f64) -> Mat {
    let mut y = x.clone();
    for v in &mut y.d {
        if *v <= 0.0 {
            *v *= slope;
        }
    }
    y
}

/// Backward through the leaky rectifier given its input.
pub(crate) fn leaky_relu_backward(pre: &Mat, dy: &Mat, slope: f64) -> Mat {
    let mut dx = dy.clone();
    for (g, &p) in dx.d.iter_mut().zip(&pre.d) {
        if p <= 0.0 {
            *g *= slope;
        }
    }
    dx
}

pub(crate) fn leaky_relu_vec(x: &mut [f64], slope: f64) {
    for v in x {
        if *v <= 0.0 {
            *v *= slope;
        }
    }
}

/// Max pooling over time, window = stride. Returns output plus the argmax
/// rows for backward.
pub(crate) fn max_pool(x: &Mat, stride: usize) -> (Mat, Vec<usize>) {
    let t_out = x.rows / stride;
    let mut y = Mat::zeros(t_out, x.cols);
    let mut argmax = vec![0usize; t_out * x.cols];
    for to in 0..t_out {
        for c in 0..x.cols {
            let mut best = f64::NEG_INFINITY;
            let mut best_t = to * stride;
            for dt in 0..stride {
                let t = to * stride + dt;
                let v = x.row(t)[c];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            y.row_mut(to)[c] = best;
            argmax[to * x.cols + c] = best_t;
        }
    }
    (y, argmax)
}

pub(crate) fn max_pool_backward(
    dy: &Mat,
    argmax: &[usize],
    in_rows: usize,
) -> Mat {
    let mut dx = Mat::zeros(in_rows, dy.cols);
    for to in 0..dy.rows {
        for c in 0..dy.cols {
            let t = argmax[to * dy.cols + c];
            dx.row_mut(t)[c] += dy.row(to)[c];
        }
    }
    dx
}

/// Channel mask for spatial dropout: an entire channel is either kept (and
/// rescaled by `1/(1-rate)`) or zeroed for the whole time axis.
pub(crate) fn spatial_dropout_mask<R: rand::Rng>(
    channels: usize,
    rate: f64,
    rng: &mut R,
) -> Vec<f64> {
    (0..channels)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                1.0 / (1.0 - rate)
            }
        })
        .collect()
}

pub(crate) fn apply_channel_mask(x: &Mat, mask: &[f64]) -> Mat {
    let mut y = x.clone();
    for t in 0..y.rows {
        let row = y.row_mut(t);
        for c in 0..row.len() {
            row[c] *= mask[c];
        }
    }
    y
}

/// Global average pooling over time.
pub(crate) fn gap(x: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    for t in 0..x.rows {
        for (c, v) in x.row(t).iter().enumerate() {
            out[c] += v;
        }
    }
    let m = x.rows as f64;
    for v in &mut out {
        *v /= m;
    }
    out
}

pub(crate) fn gap_backward(dy: &[f64], rows: usize) -> Mat {
    let mut dx = Mat::zeros(rows, dy.len());
    let m = rows as f64;
    for t in 0..rows {
        let row = dx.row_mut(t);
        for (c, g) in dy.iter().enumerate() {
            row[c] = g / m;
        }
    }
    dx
}

/// Fully-connected layer, weights `[out][in]` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|o| {
                self.b[o] + dot(&self.w[o * self.in_dim..(o + 1) * self.in_dim], x)
            })
            .collect()
    }

    pub(crate) fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = dy[o];
            db[o] += g;
            let off = o * self.in_dim;
            for i in 0..self.in_dim {
                dw[off + i] += g * x[i];
                dx[i] += g * self.w[off + i];
            }
        }
        dx
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        // single in/out channel, kernel [0,1,0] passes the signal through
        let conv = Conv1d {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            w: vec![0.0, 1.0, 0.0],
            b: vec![0.0],
        };
        let x = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let y = conv.forward(&x);
        assert_eq!(y.d, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv_shift_kernels_respect_padding() {
        // kernel [1,0,0] reads x[t-1]; the first output row sees the pad
        let conv = Conv1d {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            w: vec![1.0, 0.0, 0.0],
            b: vec![0.0],
        };
        let x = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(conv.forward(&x).d, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn max_pool_picks_and_routes() {
        let x = Mat::from_vec(4, 2, vec![1.0, 9.0, 5.0, 2.0, 0.0, 1.0, 3.0, 7.0]);
        let (y, arg) = max_pool(&x, 2);
        assert_eq!(y.d, vec![5.0, 9.0, 3.0, 7.0]);
        let dy = Mat::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let dx = max_pool_backward(&dy, &arg, 4);
        assert_eq!(dx.d, vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn gap_and_backward() {
        let x = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(gap(&x), vec![2.0, 4.0]);
        let dx = gap_backward(&[1.0, 2.0], 2);
        assert_eq!(dx.d, vec![0.5, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn softmax_is_simplex() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    #[test]
    fn bn_train_normalizes() {
        let bn = BatchNorm1d::new(1);
        let xs = vec![Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0])];
        let (ys, cache) = bn.forward_train(&xs);
        let mean: f64 = ys[0].d.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((cache.batch_mean[0] - 2.5).abs() < 1e-12);
    }
}
