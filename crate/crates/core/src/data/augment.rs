//! Weak/strong augmentation pipelines, declared as comma-separated op lists.
//!
//! `hflip` flips with probability one half, `crop:P` pads by `P` pixels and
//! crops back at a random offset, `randaug:N` applies `N` ops drawn from a
//! photometric/geometric pool, `erase:P` blanks a random rectangle with
//! probability `P`. `identity` (or an empty string) is the empty pipeline.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::image::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugOp {
    HFlip,
    Crop { pad: usize },
    RandAugment { n: usize },
    Erase { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PoolOp {
    Contrast,
    Brightness,
    Posterize,
    Rotate,
    Translate,
}

const POOL: [PoolOp; 5] = [
    PoolOp::Contrast,
    PoolOp::Brightness,
    PoolOp::Posterize,
    PoolOp::Rotate,
    PoolOp::Translate,
];

const MAX_ROTATE_DEG: f64 = 15.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pipeline {
    pub ops: Vec<AugOp>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationPair {
    pub weak: Pipeline,
    pub strong: Pipeline,
}

impl Default for AugmentationPair {
    fn default() -> Self {
        AugmentationPair {
            weak: "hflip,crop:4".parse().expect("static pipeline"),
            strong: "hflip,crop:4,randaug:2,erase:0.5"
                .parse()
                .expect("static pipeline"),
        }
    }
}

impl AugmentationPair {
    pub fn identity() -> Self {
        AugmentationPair {
            weak: Pipeline::default(),
            strong: Pipeline::default(),
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "identity" {
            return Ok(Pipeline::default());
        }
        let bad = |tok: &str| Error::Parse {
            context: "augmentation pipeline".into(),
            message: format!("unknown op `{tok}`"),
        };
        let ops = s
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let (name, arg) = tok.split_once(':').unwrap_or((tok, ""));
                let num = |default: &str| -> Result<f64> {
                    let a = if arg.is_empty() { default } else { arg };
                    a.parse::<f64>().map_err(|_| bad(tok))
                };
                match name {
                    "hflip" => Ok(AugOp::HFlip),
                    "crop" => Ok(AugOp::Crop {
                        pad: num("4")? as usize,
                    }),
                    "randaug" => Ok(AugOp::RandAugment {
                        n: num("2")? as usize,
                    }),
                    "erase" => {
                        let p = num("0.5")?;
                        if (0.0..=1.0).contains(&p) {
                            Ok(AugOp::Erase { p })
                        } else {
                            Err(bad(tok))
                        }
                    }
                    _ => Err(bad(tok)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline { ops })
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "identity");
        }
        let parts: Vec<String> = self
            .ops
            .iter()
            .map(|op| match op {
                AugOp::HFlip => "hflip".to_string(),
                AugOp::Crop { pad } => format!("crop:{pad}"),
                AugOp::RandAugment { n } => format!("randaug:{n}"),
                AugOp::Erase { p } => format!("erase:{p}"),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

fn apply_pool_op<R: Rng>(op: PoolOp, im: &Image, rng: &mut R) -> Image {
    let mut out = im.clone();
    match op {
        PoolOp::Contrast => {
            let f = rng.random_range(0.6..1.4);
            let means = im.channel_means();
            let grey = means.iter().sum::<f64>() / means.len() as f64;
            out.data
                .iter_mut()
                .for_each(|v| *v = (*v - grey) * f + grey);
        }
        PoolOp::Brightness => {
            let d = rng.random_range(-0.2..0.2);
            out.data.iter_mut().for_each(|v| *v += d);
        }
        PoolOp::Posterize => {
            let levels = [4.0, 8.0, 16.0].choose(rng).copied().unwrap_or(8.0);
            out.data
                .iter_mut()
                .for_each(|v| *v = (*v * (levels - 1.0)).round() / (levels - 1.0));
        }
        PoolOp::Rotate => {
            out = im.rotated(rng.random_range(-MAX_ROTATE_DEG..MAX_ROTATE_DEG));
        }
        PoolOp::Translate => {
            let max = (im.width / 8).max(1) as i64;
            let fill = im.channel_means();
            out = im.translated(
                rng.random_range(-max..=max),
                rng.random_range(-max..=max),
                &fill,
            );
        }
    }
    out.clamp01();
    out
}

fn apply_op<R: Rng>(op: &AugOp, im: &Image, rng: &mut R) -> Image {
    match *op {
        AugOp::HFlip => {
            if rng.random_bool(0.5) {
                im.flipped_horizontal()
            } else {
                im.clone()
            }
        }
        AugOp::Crop { pad } => {
            let p = pad as i64;
            let fill = vec![0.0; im.channels];
            im.translated(rng.random_range(-p..=p), rng.random_range(-p..=p), &fill)
        }
        AugOp::RandAugment { n } => {
            let mut out = im.clone();
            for _ in 0..n {
                let op = *POOL.choose(rng).expect("non-empty pool");
                out = apply_pool_op(op, &out, rng);
            }
            out
        }
        AugOp::Erase { p } => {
            let mut out = im.clone();
            if rng.random_bool(p) {
                let area = rng.random_range(0.02..0.2) * (im.height * im.width) as f64;
                let aspect = rng.random_range(0.5f64..2.0);
                let h = ((area * aspect).sqrt().round() as usize).clamp(1, im.height);
                let w = ((area / aspect).sqrt().round() as usize).clamp(1, im.width);
                let y0 = rng.random_range(0..=im.height - h);
                let x0 = rng.random_range(0..=im.width - w);
                for y in y0..y0 + h {
                    for x in x0..x0 + w {
                        for c in 0..im.channels {
                            out.set(y, x, c, rng.random::<f64>());
                        }
                    }
                }
            }
            out
        }
    }
}

impl Pipeline {
    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    /// Output has the same shape as the input.
    pub fn apply<R: Rng>(&self, im: &Image, rng: &mut R) -> Image {
        self.ops
            .iter()
            .fold(im.clone(), |acc, op| apply_op(op, &acc, rng))
    }
}

/// Weak and strong views of one sample, drawn in that order from `rng`.
pub fn augment_pair<R: Rng>(x: &Image, pair: &AugmentationPair, rng: &mut R) -> (Image, Image) {
    let weak = pair.weak.apply(x, rng);
    let strong = pair.strong.apply(x, rng);
    (weak, strong)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        crate::data::synthetic::render_shape(2, 16, &mut rng)
    }

    #[test]
    fn identity_pipelines_return_the_input() {
        let x = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (w, s) = augment_pair(&x, &AugmentationPair::identity(), &mut rng);
        assert_eq!(w, x);
        assert_eq!(s, x);
    }

    #[test]
    fn fixed_seed_reproduces_the_pair() {
        let x = sample();
        let pair = AugmentationPair::default();
        let a = augment_pair(&x, &pair, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment_pair(&x, &pair, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.0.same_shape(&x) && a.1.same_shape(&x));
    }

    #[test]
    fn pipeline_text_round_trips() {
        let p: Pipeline = "hflip, crop:2,randaug:3,erase:0.25".parse().unwrap();
        assert_eq!(p.to_string(), "hflip,crop:2,randaug:3,erase:0.25");
        assert_eq!(p.to_string().parse::<Pipeline>().unwrap(), p);
        assert!("identity".parse::<Pipeline>().unwrap().is_identity());
        assert!("blur:3".parse::<Pipeline>().is_err());
        assert!("erase:2".parse::<Pipeline>().is_err());
    }

    #[test]
    fn strong_differs_from_weak_almost_always() {
        let pair = AugmentationPair::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut differ = 0;
        for k in 0..100 {
            let x = crate::data::synthetic::render_shape(k % 4, 16, &mut rng);
            let (w, s) = augment_pair(&x, &pair, &mut rng);
            if w != s {
                differ += 1;
            }
        }
        assert!(differ >= 99, "{differ}");
    }
}
