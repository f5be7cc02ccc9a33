//! Feature extractors: a small convolutional encoder and a small attention encoder.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    gelu_backward, gelu_forward, relu_backward, relu_forward, Conv2d, ConvCache, LayerNorm,
    LayerNormCache, Linear, MaxPool2, PoolCache,
};
use super::params::{Grads, Group, ParamId, ParamKind, ParamStore};
use crate::math::softmax_rows;

/// Architecture of the feature extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneSpec {
    /// `conv3x3 -> relu -> maxpool2` blocks, one per entry of `channels`.
    Conv { channels: Vec<usize> },
    /// Patch embedding followed by pre-norm self-attention blocks and mean pooling.
    Attention {
        patch: usize,
        embed_dim: usize,
        heads: usize,
        depth: usize,
        mlp_dim: usize,
    },
}

/// Parses the identifier produced by [`BackboneSpec::id`].
impl std::str::FromStr for BackboneSpec {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let bad = || crate::Error::Parse {
            context: "backbone id".into(),
            message: format!("cannot parse `{s}`"),
        };
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("conv") {
            let (n, list) = rest.split_once('-').ok_or_else(bad)?;
            let channels = list
                .split('x')
                .map(num)
                .collect::<crate::Result<Vec<_>>>()?;
            if num(n)? != channels.len() {
                return Err(bad());
            }
            return Ok(BackboneSpec::Conv { channels });
        }
        if let Some(rest) = s.strip_prefix("attn") {
            let parts: Vec<&str> = rest.split('-').collect();
            let [depth, p, e, h, m] = parts[..] else {
                return Err(bad());
            };
            let field =
                |t: &str, prefix: char| t.strip_prefix(prefix).ok_or_else(bad).and_then(num);
            return Ok(BackboneSpec::Attention {
                patch: field(p, 'p')?,
                embed_dim: field(e, 'e')?,
                heads: field(h, 'h')?,
                depth: num(depth)?,
                mlp_dim: field(m, 'm')?,
            });
        }
        Err(bad())
    }
}

impl BackboneSpec {
    pub fn default_conv() -> Self {
        BackboneSpec::Conv {
            channels: vec![8, 16, 32, 32],
        }
    }

    pub fn default_attention() -> Self {
        BackboneSpec::Attention {
            patch: 4,
            embed_dim: 32,
            heads: 2,
            depth: 4,
            mlp_dim: 64,
        }
    }

    /// Identifier stamped on checkpoints.
    pub fn id(&self) -> String {
        match self {
            BackboneSpec::Conv { channels } => format!(
                "conv{}-{}",
                channels.len(),
                channels
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("x")
            ),
            BackboneSpec::Attention {
                patch,
                embed_dim,
                heads,
                depth,
                mlp_dim,
            } => format!("attn{depth}-p{patch}-e{embed_dim}-h{heads}-m{mlp_dim}"),
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> crate::Result<()> {
        use crate::Error;
        match self {
            BackboneSpec::Conv { channels } => {
                if channels.is_empty() || channels.contains(&0) {
                    return Err(Error::validation(
                        "conv backbone needs at least one non-empty block",
                    ));
                }
                let f = 1usize << channels.len();
                if height % f != 0 || width % f != 0 || height < f || width < f {
                    return Err(Error::validation(format!(
                        "image {height}x{width} is not divisible by 2^{} pooling stages",
                        channels.len()
                    )));
                }
            }
            BackboneSpec::Attention {
                patch,
                embed_dim,
                heads,
                depth,
                mlp_dim,
            } => {
                if *patch == 0 || height % patch != 0 || width % patch != 0 {
                    return Err(Error::validation(format!(
                        "image {height}x{width} not divisible by patch {patch}"
                    )));
                }
                if *heads == 0 || embed_dim % heads != 0 || *depth == 0 || *mlp_dim == 0 {
                    return Err(Error::validation(
                        "attention backbone needs heads | embed_dim and depth, mlp_dim > 0",
                    ));
                }
            }
        }
        Ok(())
    }
}

struct ConvBlock {
    conv: Conv2d,
    pool: MaxPool2,
}

pub struct ConvEncoder {
    blocks: Vec<ConvBlock>,
    output_dim: usize,
}

struct ConvBlockCache {
    conv: ConvCache,
    relu_out: Array2<f64>,
    pool: PoolCache,
}

impl ConvEncoder {
    fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        (h, w, c): (usize, usize, usize),
        channels: &[usize],
    ) -> Self {
        let (mut h, mut w, mut c) = (h, w, c);
        let mut blocks = Vec::with_capacity(channels.len());
        for (i, &out) in channels.iter().enumerate() {
            let conv = Conv2d::new(
                store,
                rng,
                &format!("backbone.conv{i}"),
                Group::Backbone,
                (h, w),
                c,
                out,
            );
            let pool = MaxPool2 {
                height: h,
                width: w,
                channels: out,
            };
            blocks.push(ConvBlock { conv, pool });
            h /= 2;
            w /= 2;
            c = out;
        }
        ConvEncoder {
            blocks,
            output_dim: h * w * c,
        }
    }

    fn forward(
        &self,
        store: &ParamStore,
        x: ArrayView2<f64>,
    ) -> (Array2<f64>, Vec<ConvBlockCache>) {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut act = x.to_owned();
        for block in &self.blocks {
            let (y, conv) = block.conv.forward(store, act.view());
            let relu_out = relu_forward(y.view());
            let (pooled, pool) = block.pool.forward(relu_out.view());
            caches.push(ConvBlockCache {
                conv,
                relu_out,
                pool,
            });
            act = pooled;
        }
        (act, caches)
    }

    fn backward(
        &self,
        store: &ParamStore,
        caches: &[ConvBlockCache],
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) {
        let mut grad = dy.to_owned();
        for (i, (block, cache)) in self.blocks.iter().zip(caches).enumerate().rev() {
            let d = block.pool.backward(&cache.pool, grad.view());
            let d = relu_backward(cache.relu_out.view(), d.view());
            match block
                .conv
                .backward(store, &cache.conv, d.view(), Some(grads), i > 0)
            {
                Some(dx) => grad = dx,
                None => break,
            }
        }
    }
}

struct AttentionBlock {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

struct AttentionBlockCache {
    norm1_in_cache: LayerNormCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn_out: Array2<f64>,
    norm2_cache: LayerNormCache,
    h2: Array2<f64>,
    fc1_out: Array2<f64>,
    gelu_out: Array2<f64>,
}

pub struct AttentionEncoder {
    patch: usize,
    grid: (usize, usize),
    channels: usize,
    embed_dim: usize,
    heads: usize,
    embed: Linear,
    pos: ParamId,
    blocks: Vec<AttentionBlock>,
    norm: LayerNorm,
}

struct AttentionCache {
    patches: Array2<f64>,
    blocks: Vec<AttentionBlockCache>,
    norm: LayerNormCache,
}

impl AttentionEncoder {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        (h, w, c): (usize, usize, usize),
        patch: usize,
        embed_dim: usize,
        heads: usize,
        depth: usize,
        mlp_dim: usize,
    ) -> Self {
        let grid = (h / patch, w / patch);
        let tokens = grid.0 * grid.1;
        let embed = Linear::new(
            store,
            rng,
            "backbone.patch_embed",
            Group::Backbone,
            patch * patch * c,
            embed_dim,
        );
        let pos_init: Vec<f64> = (0..tokens * embed_dim)
            .map(|_| rng.random_range(-0.02..0.02))
            .collect();
        let pos = store.add(
            "backbone.pos_embed",
            Group::Backbone,
            ParamKind::Weight,
            vec![tokens, embed_dim],
            pos_init,
        );
        let blocks = (0..depth)
            .map(|i| {
                let name = |s: &str| format!("backbone.block{i}.{s}");
                AttentionBlock {
                    norm1: LayerNorm::new(store, &name("norm1"), Group::Backbone, embed_dim),
                    qkv: Linear::new(
                        store,
                        rng,
                        &name("qkv"),
                        Group::Backbone,
                        embed_dim,
                        3 * embed_dim,
                    ),
                    proj: Linear::new(
                        store,
                        rng,
                        &name("proj"),
                        Group::Backbone,
                        embed_dim,
                        embed_dim,
                    ),
                    norm2: LayerNorm::new(store, &name("norm2"), Group::Backbone, embed_dim),
                    fc1: Linear::new(
                        store,
                        rng,
                        &name("fc1"),
                        Group::Backbone,
                        embed_dim,
                        mlp_dim,
                    ),
                    fc2: Linear::new(
                        store,
                        rng,
                        &name("fc2"),
                        Group::Backbone,
                        mlp_dim,
                        embed_dim,
                    ),
                }
            })
            .collect();
        let norm = LayerNorm::new(store, "backbone.norm", Group::Backbone, embed_dim);
        AttentionEncoder {
            patch,
            grid,
            channels: c,
            embed_dim,
            heads,
            embed,
            pos,
            blocks,
            norm,
        }
    }

    fn tokens(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    fn extract_patches(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (p, c) = (self.patch, self.channels);
        let (gh, gw) = self.grid;
        let w = gw * p;
        let t = self.tokens();
        let mut out = Array2::<f64>::zeros((x.nrows() * t, p * p * c));
        for b in 0..x.nrows() {
            for ty in 0..gh {
                for tx in 0..gw {
                    let mut row = out.row_mut(b * t + ty * gw + tx);
                    for py in 0..p {
                        for px in 0..p {
                            for ch in 0..c {
                                let src = ((ty * p + py) * w + tx * p + px) * c + ch;
                                row[(py * p + px) * c + ch] = x[[b, src]];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn attention(&self, qkv: ArrayView2<f64>, batch: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
        let (t, e, nh) = (self.tokens(), self.embed_dim, self.heads);
        let dh = e / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::<f64>::zeros((batch * t, e));
        let mut probs = Vec::with_capacity(batch * nh);
        for b in 0..batch {
            let rows = s![b * t..(b + 1) * t, ..];
            let block = qkv.slice(rows);
            for h in 0..nh {
                let q = block.slice(s![.., h * dh..(h + 1) * dh]);
                let k = block.slice(s![.., e + h * dh..e + (h + 1) * dh]);
                let v = block.slice(s![.., 2 * e + h * dh..2 * e + (h + 1) * dh]);
                let scores = q.dot(&k.t()) * scale;
                let p = softmax_rows(scores.view());
                out.slice_mut(s![b * t..(b + 1) * t, h * dh..(h + 1) * dh])
                    .assign(&p.dot(&v));
                probs.push(p);
            }
        }
        (out, probs)
    }

    fn attention_backward(
        &self,
        qkv: ArrayView2<f64>,
        probs: &[Array2<f64>],
        dout: ArrayView2<f64>,
    ) -> Array2<f64> {
        let (t, e, nh) = (self.tokens(), self.embed_dim, self.heads);
        let dh = e / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = qkv.nrows() / t;
        let mut dqkv = Array2::<f64>::zeros(qkv.raw_dim());
        for b in 0..batch {
            let block = qkv.slice(s![b * t..(b + 1) * t, ..]);
            for h in 0..nh {
                let p = &probs[b * nh + h];
                let q = block.slice(s![.., h * dh..(h + 1) * dh]);
                let k = block.slice(s![.., e + h * dh..e + (h + 1) * dh]);
                let v = block.slice(s![.., 2 * e + h * dh..2 * e + (h + 1) * dh]);
                let d_o = dout.slice(s![b * t..(b + 1) * t, h * dh..(h + 1) * dh]);
                let dp = d_o.dot(&v.t());
                let dv = p.t().dot(&d_o);
                let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = (&dp - &row_dot) * p * scale;
                let dq = ds.dot(&k);
                let dk = ds.t().dot(&q);
                let mut dst = dqkv.slice_mut(s![b * t..(b + 1) * t, ..]);
                dst.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
                dst.slice_mut(s![.., e + h * dh..e + (h + 1) * dh])
                    .assign(&dk);
                dst.slice_mut(s![.., 2 * e + h * dh..2 * e + (h + 1) * dh])
                    .assign(&dv);
            }
        }
        dqkv
    }

    fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> (Array2<f64>, AttentionCache) {
        let batch = x.nrows();
        let t = self.tokens();
        let patches = self.extract_patches(x);
        let mut tok = self.embed.forward(store, patches.view());
        let pos = store.matrix(self.pos);
        for b in 0..batch {
            let mut rows = tok.slice_mut(s![b * t..(b + 1) * t, ..]);
            rows += &pos;
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (h1, norm1_in_cache) = block.norm1.forward(store, tok.view());
            let qkv = block.qkv.forward(store, h1.view());
            let (attn_out, probs) = self.attention(qkv.view(), batch);
            tok += &block.proj.forward(store, attn_out.view());
            let (h2, norm2_cache) = block.norm2.forward(store, tok.view());
            let fc1_out = block.fc1.forward(store, h2.view());
            let gelu_out = gelu_forward(fc1_out.view());
            tok += &block.fc2.forward(store, gelu_out.view());
            caches.push(AttentionBlockCache {
                norm1_in_cache,
                h1,
                qkv,
                probs,
                attn_out,
                norm2_cache,
                h2,
                fc1_out,
                gelu_out,
            });
        }
        let (normed, norm) = self.norm.forward(store, tok.view());
        let pooled = normed
            .into_shape_with_order((batch, t, self.embed_dim))
            .expect("token reshape")
            .mean_axis(Axis(1))
            .expect("non-empty token axis");
        (
            pooled,
            AttentionCache {
                patches,
                blocks: caches,
                norm,
            },
        )
    }

    fn backward(
        &self,
        store: &ParamStore,
        cache: &AttentionCache,
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) {
        let batch = dy.nrows();
        let t = self.tokens();
        let mut dnormed = Array2::<f64>::zeros((batch * t, self.embed_dim));
        for b in 0..batch {
            let g = &dy.row(b) / t as f64;
            for i in 0..t {
                dnormed.row_mut(b * t + i).assign(&g);
            }
        }
        let mut dtok = self
            .norm
            .backward(store, &cache.norm, dnormed.view(), Some(grads));
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let dgelu = block
                .fc2
                .backward(store, c.gelu_out.view(), dtok.view(), Some(grads));
            let dfc1 = gelu_backward(c.fc1_out.view(), dgelu.view());
            let dh2 = block
                .fc1
                .backward(store, c.h2.view(), dfc1.view(), Some(grads));
            dtok += &block
                .norm2
                .backward(store, &c.norm2_cache, dh2.view(), Some(grads));
            let dattn = block
                .proj
                .backward(store, c.attn_out.view(), dtok.view(), Some(grads));
            let dqkv = self.attention_backward(c.qkv.view(), &c.probs, dattn.view());
            let dh1 = block
                .qkv
                .backward(store, c.h1.view(), dqkv.view(), Some(grads));
            dtok += &block
                .norm1
                .backward(store, &c.norm1_in_cache, dh1.view(), Some(grads));
        }
        let dpos = grads.vector_mut(self.pos);
        for b in 0..batch {
            let rows = dtok.slice(s![b * t..(b + 1) * t, ..]);
            for (d, g) in dpos.iter_mut().zip(rows.iter()) {
                *d += g;
            }
        }
        self.embed
            .backward(store, cache.patches.view(), dtok.view(), Some(grads));
    }
}

pub enum Backbone {
    Conv(ConvEncoder),
    Attention(AttentionEncoder),
}

pub struct BackboneCache(BackboneCacheInner);

enum BackboneCacheInner {
    Conv(Vec<ConvBlockCache>),
    Attention(AttentionCache),
}

impl Backbone {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        spec: &BackboneSpec,
        input: (usize, usize, usize),
    ) -> Self {
        match spec {
            BackboneSpec::Conv { channels } => {
                Backbone::Conv(ConvEncoder::new(store, rng, input, channels))
            }
            BackboneSpec::Attention {
                patch,
                embed_dim,
                heads,
                depth,
                mlp_dim,
            } => Backbone::Attention(AttentionEncoder::new(
                store, rng, input, *patch, *embed_dim, *heads, *depth, *mlp_dim,
            )),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Backbone::Conv(c) => c.output_dim,
            Backbone::Attention(a) => a.embed_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> (Array2<f64>, BackboneCache) {
        match self {
            Backbone::Conv(c) => {
                let (y, cache) = c.forward(store, x);
                (y, BackboneCache(BackboneCacheInner::Conv(cache)))
            }
            Backbone::Attention(a) => {
                let (y, cache) = a.forward(store, x);
                (y, BackboneCache(BackboneCacheInner::Attention(cache)))
            }
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BackboneCache,
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) {
        match (self, &cache.0) {
            (Backbone::Conv(c), BackboneCacheInner::Conv(cache)) => {
                c.backward(store, cache, dy, grads)
            }
            (Backbone::Attention(a), BackboneCacheInner::Attention(cache)) => {
                a.backward(store, cache, dy, grads)
            }
            _ => unreachable!("backbone cache kind mismatch"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_parses_back() {
        for spec in [
            BackboneSpec::default_conv(),
            BackboneSpec::default_attention(),
        ] {
            assert_eq!(spec.id().parse::<BackboneSpec>().unwrap(), spec);
        }
        assert!("conv3-8x16".parse::<BackboneSpec>().is_err());
        assert!("mlp2".parse::<BackboneSpec>().is_err());
    }
}
