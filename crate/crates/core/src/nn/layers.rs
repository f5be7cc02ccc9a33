//! Layers with explicit forward and backward passes over `(batch, features)` matrices.
//!
//! Spatial activations use a channels-last flat layout: row `b`, column
//! `(y * width + x) * channels + c`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::params::{Grads, Group, ParamId, ParamKind, ParamStore};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;
pub(crate) const LN_EPS: f64 = 1e-5;

fn uniform_init<R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn add_grad(dst: &mut [f64], src: impl IntoIterator<Item = f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    /// Kaiming-uniform style initialization with bound `1/sqrt(fan_in)`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        input_dim: usize,
        output_dim: usize,
    ) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            group,
            ParamKind::Weight,
            vec![input_dim, output_dim],
            uniform_init(rng, input_dim * output_dim, bound),
        );
        let bias = store.add(
            format!("{name}.bias"),
            group,
            ParamKind::Weight,
            vec![output_dim],
            uniform_init(rng, output_dim, bound),
        );
        Linear {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&store.matrix(self.weight));
        y += &store.vector(self.bias);
        y
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grads: Option<&mut Grads>,
    ) -> Array2<f64> {
        if let Some(grads) = grads {
            let dw = x.t().dot(&dy);
            grads
                .matrix_mut(self.weight, self.input_dim, self.output_dim)
                .scaled_add(1.0, &dw);
            add_grad(grads.vector_mut(self.bias), dy.sum_axis(Axis(0)));
        }
        dy.dot(&store.matrix(self.weight).t())
    }
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub struct ConvCache {
    cols: Array2<f64>,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        (height, width): (usize, usize),
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        let fan_in = 9 * in_channels;
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            group,
            ParamKind::Weight,
            vec![fan_in, out_channels],
            uniform_init(rng, fan_in * out_channels, bound),
        );
        let bias = store.add(
            format!("{name}.bias"),
            group,
            ParamKind::Weight,
            vec![out_channels],
            vec![0.0; out_channels],
        );
        Conv2d {
            weight,
            bias,
            height,
            width,
            in_channels,
            out_channels,
        }
    }

    fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (h, w, c) = (self.height, self.width, self.in_channels);
        let batch = x.nrows();
        let mut cols = Array2::<f64>::zeros((batch * h * w, 9 * c));
        for b in 0..batch {
            let img = x.row(b);
            let img = img.as_slice().expect("contiguous input row");
            for oy in 0..h {
                for ox in 0..w {
                    let r = (b * h + oy) * w + ox;
                    let mut col = cols.row_mut(r);
                    let col = col.as_slice_mut().expect("contiguous cols row");
                    for ky in 0..3 {
                        let iy = oy as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = ox as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = (iy as usize * w + ix as usize) * c;
                            let dst = (ky * 3 + kx) * c;
                            col[dst..dst + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: ArrayView2<f64>, batch: usize) -> Array2<f64> {
        let (h, w, c) = (self.height, self.width, self.in_channels);
        let mut dx = Array2::<f64>::zeros((batch, h * w * c));
        for b in 0..batch {
            let mut row = dx.row_mut(b);
            let img = row.as_slice_mut().expect("contiguous grad row");
            for oy in 0..h {
                for ox in 0..w {
                    let r = (b * h + oy) * w + ox;
                    let col = dcols.row(r);
                    let col = col.as_slice().expect("contiguous dcols row");
                    for ky in 0..3 {
                        let iy = oy as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = ox as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = (iy as usize * w + ix as usize) * c;
                            let src = (ky * 3 + kx) * c;
                            for i in 0..c {
                                img[dst + i] += col[src + i];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> (Array2<f64>, ConvCache) {
        let batch = x.nrows();
        let cols = self.im2col(x);
        let mut y = cols.dot(&store.matrix(self.weight));
        y += &store.vector(self.bias);
        let y = y
            .into_shape_with_order((batch, self.height * self.width * self.out_channels))
            .expect("conv output reshape");
        (y, ConvCache { cols })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &ConvCache,
        dy: ArrayView2<f64>,
        grads: Option<&mut Grads>,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let batch = dy.nrows();
        let dy = dy
            .to_shape((batch * self.height * self.width, self.out_channels))
            .expect("conv grad reshape");
        if let Some(grads) = grads {
            let dw = cache.cols.t().dot(&dy);
            grads
                .matrix_mut(self.weight, 9 * self.in_channels, self.out_channels)
                .scaled_add(1.0, &dw);
            add_grad(grads.vector_mut(self.bias), dy.sum_axis(Axis(0)));
        }
        if !need_input_grad {
            return None;
        }
        let dcols = dy.dot(&store.matrix(self.weight).t());
        Some(self.col2im(dcols.view(), batch))
    }
}

pub fn relu_forward(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(y: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(&y, |d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// 2x2 max pooling with stride 2 on a channels-last map.
#[derive(Clone, Debug)]
pub struct MaxPool2 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

pub struct PoolCache {
    argmax: Vec<usize>,
    input_len: usize,
}

impl MaxPool2 {
    pub fn output_shape(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, PoolCache) {
        let (h, w, c) = (self.height, self.width, self.channels);
        let (oh, ow) = self.output_shape();
        let batch = x.nrows();
        let mut y = Array2::<f64>::zeros((batch, oh * ow * c));
        let mut argmax = vec![0usize; batch * oh * ow * c];
        for b in 0..batch {
            let img = x.row(b);
            let img = img.as_slice().expect("contiguous pool input");
            let mut out = y.row_mut(b);
            let out = out.as_slice_mut().expect("contiguous pool output");
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                                if img[i] > best {
                                    best = img[i];
                                    best_i = i;
                                }
                            }
                        }
                        let o = (oy * ow + ox) * c + ch;
                        out[o] = best;
                        argmax[b * oh * ow * c + o] = best_i;
                    }
                }
            }
        }
        (
            y,
            PoolCache {
                argmax,
                input_len: h * w * c,
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dy: ArrayView2<f64>) -> Array2<f64> {
        let batch = dy.nrows();
        let per = dy.ncols();
        let mut dx = Array2::<f64>::zeros((batch, cache.input_len));
        for b in 0..batch {
            for o in 0..per {
                dx[[b, cache.argmax[b * per + o]]] += dy[[b, o]];
            }
        }
        dx
    }
}

/// Batch normalization over the feature axis of a `(batch, dim)` matrix.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub dim: usize,
}

pub struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pub(crate) batch_mean: Array1<f64>,
    pub(crate) batch_var_unbiased: Array1<f64>,
    train: bool,
}

impl BatchNorm1d {
    pub fn new(store: &mut ParamStore, name: &str, group: Group, dim: usize) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            group,
            ParamKind::Weight,
            vec![dim],
            vec![1.0; dim],
        );
        let beta = store.add(
            format!("{name}.beta"),
            group,
            ParamKind::Weight,
            vec![dim],
            vec![0.0; dim],
        );
        let running_mean = store.add(
            format!("{name}.running_mean"),
            group,
            ParamKind::Buffer,
            vec![dim],
            vec![0.0; dim],
        );
        let running_var = store.add(
            format!("{name}.running_var"),
            group,
            ParamKind::Buffer,
            vec![dim],
            vec![1.0; dim],
        );
        BatchNorm1d {
            gamma,
            beta,
            running_mean,
            running_var,
            dim,
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: ArrayView2<f64>,
        train: bool,
    ) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let (mean, var, unbiased) = if train {
            let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = &x - &mean;
            let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
            let unbiased = if n > 1.0 {
                &var * (n / (n - 1.0))
            } else {
                var.clone()
            };
            (mean, var, unbiased)
        } else {
            let mean = store.vector(self.running_mean).to_owned();
            let var = store.vector(self.running_var).to_owned();
            (mean, var.clone(), var)
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = (&x - &mean) * &inv_std;
        let y = &xhat * &store.vector(self.gamma) + &store.vector(self.beta);
        (
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var_unbiased: unbiased,
                train,
            },
        )
    }

    pub fn commit_running_stats(&self, store: &mut ParamStore, cache: &BatchNormCache) {
        if !cache.train {
            return;
        }
        for (id, batch) in [
            (self.running_mean, &cache.batch_mean),
            (self.running_var, &cache.batch_var_unbiased),
        ] {
            let p = store.get_mut(id);
            for (r, &b) in p.data.iter_mut().zip(batch.iter()) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BatchNormCache,
        dy: ArrayView2<f64>,
        grads: Option<&mut Grads>,
    ) -> Array2<f64> {
        if let Some(grads) = grads {
            add_grad(
                grads.vector_mut(self.gamma),
                (&dy * &cache.xhat).sum_axis(Axis(0)),
            );
            add_grad(grads.vector_mut(self.beta), dy.sum_axis(Axis(0)));
        }
        let dxhat = &dy * &store.vector(self.gamma);
        if !cache.train {
            return dxhat * &cache.inv_std;
        }
        let n = dy.nrows() as f64;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut dx = &dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
        dx *= &(&cache.inv_std / n);
        dx
    }
}

/// Layer normalization over each row.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, group: Group, dim: usize) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            group,
            ParamKind::Weight,
            vec![dim],
            vec![1.0; dim],
        );
        let beta = store.add(
            format!("{name}.beta"),
            group,
            ParamKind::Weight,
            vec![dim],
            vec![0.0; dim],
        );
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = self.dim as f64;
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::<f64>::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / d;
            *s = 1.0 / (var + LN_EPS).sqrt();
            row *= *s;
        }
        let y = &xhat * &store.vector(self.gamma) + &store.vector(self.beta);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LayerNormCache,
        dy: ArrayView2<f64>,
        grads: Option<&mut Grads>,
    ) -> Array2<f64> {
        if let Some(grads) = grads {
            add_grad(
                grads.vector_mut(self.gamma),
                (&dy * &cache.xhat).sum_axis(Axis(0)),
            );
            add_grad(grads.vector_mut(self.beta), dy.sum_axis(Axis(0)));
        }
        let d = self.dim as f64;
        let dxhat = &dy * &store.vector(self.gamma);
        let mut dx = Array2::<f64>::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let g = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            let s = cache.inv_std[i] / d;
            for j in 0..self.dim {
                dx[[i, j]] = s * (d * g[j] - sum_g - xh[j] * sum_gx);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub fn gelu_forward(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()))
}

pub fn gelu_backward(x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(&x, |d, &v| {
        let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
        *d *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    dx
}

#[cfg(test)]
pub(crate) mod gradcheck {
    use ndarray::Array2;

    /// Central finite-difference gradient of a scalar function of a matrix.
    pub fn numeric_grad(
        x: &Array2<f64>,
        eps: f64,
        mut f: impl FnMut(&Array2<f64>) -> f64,
    ) -> Array2<f64> {
        let mut g = Array2::zeros(x.raw_dim());
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let orig = xp[[r, c]];
            xp[[r, c]] = orig + eps;
            let fp = f(&xp);
            xp[[r, c]] = orig - eps;
            let fm = f(&xp);
            xp[[r, c]] = orig;
            g[[r, c]] = (fp - fm) / (2.0 * eps);
        }
        g
    }

    pub fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let scale = a
            .iter()
            .chain(b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-8);
        a.iter()
            .zip(b.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / scale))
    }
}
