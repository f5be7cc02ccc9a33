use ndarray::Array2;

use crate::error::{Error, Result};

/// Multi-channel image, channels-last, values nominally in `[0, 1]`.
///
/// Pixel `(y, x, c)` lives at `(y * width + x) * channels + c`, the same layout
/// the network expects for one input row.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::validation(format!(
                "{}x{}x{} image needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (a, v) in m.iter_mut().zip(px) {
                *a += v;
            }
        }
        let n = (self.height * self.width) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Bilinear sample at fractional pixel coordinates; outside the image
    /// the nearest border pixel is used.
    pub fn sample_bilinear(&self, y: f64, x: f64, c: usize) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = self.get(y0, x0, c) * (1.0 - fx) + self.get(y0, x1, c) * fx;
        let bottom = self.get(y1, x0, c) * (1.0 - fx) + self.get(y1, x1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Rotation by `degrees` about the image centre, border-replicated.
    pub fn rotated(&self, degrees: f64) -> Image {
        if degrees == 0.0 {
            return self.clone();
        }
        let (s, c) = degrees.to_radians().sin_cos();
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                // inverse map: rotate the output coordinate back into the source
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                for ch in 0..self.channels {
                    out.set(y, x, ch, self.sample_bilinear(sy, sx, ch));
                }
            }
        }
        out
    }

    /// Integer shift; uncovered pixels take `fill`.
    pub fn translated(&self, dy: i64, dx: i64, fill: &[f64]) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let sy = y as i64 - dy;
                let sx = x as i64 - dx;
                let inside =
                    sy >= 0 && sx >= 0 && (sy as usize) < self.height && (sx as usize) < self.width;
                for c in 0..self.channels {
                    let v = if inside {
                        self.get(sy as usize, sx as usize, c)
                    } else {
                        fill[c]
                    };
                    out.set(y, x, c, v);
                }
            }
        }
        out
    }

    pub fn flipped_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(y, x, c, self.get(y, self.width - 1 - x, c));
                }
            }
        }
        out
    }

    /// Separable Gaussian blur with standard deviation `sigma` pixels.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
        let pass = |src: &Image, horizontal: bool| {
            let mut out = src.clone();
            for y in 0..src.height {
                for x in 0..src.width {
                    for c in 0..src.channels {
                        let mut acc = 0.0;
                        for (k, w) in kernel.iter().enumerate() {
                            let o = k as i64 - r;
                            let (sy, sx) = if horizontal {
                                (y as i64, (x as i64 + o).clamp(0, src.width as i64 - 1))
                            } else {
                                ((y as i64 + o).clamp(0, src.height as i64 - 1), x as i64)
                            };
                            acc += w * src.get(sy as usize, sx as usize, c);
                        }
                        out.set(y, x, c, acc);
                    }
                }
            }
            out
        };
        pass(&pass(self, true), false)
    }
}

/// Stacks equally sized images into a `(N, H*W*C)` network input.
pub fn stack(images: &[&Image]) -> Result<Array2<f64>> {
    let first = images
        .first()
        .ok_or_else(|| Error::validation("cannot stack zero images"))?;
    let len = first.data.len();
    let mut out = Array2::zeros((images.len(), len));
    for (i, im) in images.iter().enumerate() {
        if !im.same_shape(first) {
            return Err(Error::validation("images in one batch differ in shape"));
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&im.data));
    }
    Ok(out)
}
