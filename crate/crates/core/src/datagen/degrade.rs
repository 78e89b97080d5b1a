use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sample::{FaceSample, Lineage};
use super::seed::derive_seed;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct DegradeConfig {
    /// Number of degraded variants per source image.
    pub count: usize,
    /// Maximum translation in source pixels, per axis.
    pub jitter_px: f64,
    /// Gaussian blur sigma range in output pixels; a zero sigma skips blur.
    pub blur_sigma: (f64, f64),
    pub gain: (f64, f64),
    pub resolution: usize,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            count: 4,
            jitter_px: 2.0,
            blur_sigma: (0.0, 0.8),
            gain: (0.75, 1.25),
            resolution: 16,
        }
    }
}

impl DegradeConfig {
    /// The configuration that returns its input unchanged at `resolution`.
    pub fn identity(resolution: usize) -> Self {
        Self {
            count: 1,
            jitter_px: 0.0,
            blur_sigma: (0.0, 0.0),
            gain: (1.0, 1.0),
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.count == 0 {
            return Err(invalid("degradation count must be at least 1"));
        }
        if self.resolution == 0 {
            return Err(invalid("degradation resolution must be positive"));
        }
        // Written negated so NaN is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.jitter_px >= 0.0) || !range_ok(self.blur_sigma) || self.blur_sigma.0 < 0.0 {
            return Err(invalid("jitter and blur must be non-negative ranges"));
        }
        if !range_ok(self.gain) || self.gain.0 <= 0.0 {
            return Err(invalid("gain range must be positive"));
        }
        Ok(())
    }
}

/// The degraded set of `sample`: each copy is jittered, box-downsampled to
/// the target resolution, blurred, rescaled in brightness and clipped.
pub fn degrade(sample: &FaceSample, cfg: &DegradeConfig, seed: u64) -> Result<Vec<FaceSample>> {
    cfg.validate()?;
    let size = sample.resolution;
    if cfg.resolution > size {
        return Err(invalid(format!("cannot degrade {size}px images to {}px", cfg.resolution)));
    }
    (0..cfg.count)
        .map(|copy| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &[0xde, sample.identity as u64, sample.index as u64, copy as u64],
            ));
            let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
            let j = cfg.jitter_px;
            let jitter = (draw((-j, j)), draw((-j, j)));
            let blur_sigma = draw(cfg.blur_sigma);
            let gain = draw(cfg.gain);

            let shifted = translate(sample.image.data(), size, jitter);
            let small = area_resample(&shifted, size, cfg.resolution);
            let blurred = if blur_sigma > 0.0 { gaussian_blur(&small, cfg.resolution, blur_sigma) } else { small };
            let data = blurred.iter().map(|&v| (v * gain as f32).clamp(0.0, 1.0)).collect();
            Ok(FaceSample {
                image: Tensor::new(vec![1, cfg.resolution, cfg.resolution], data)?,
                identity: sample.identity,
                index: sample.index,
                split: sample.split,
                resolution: cfg.resolution,
                lineage: Some(Lineage { source: sample.index, copy, jitter, blur_sigma, gain }),
            })
        })
        .collect()
}

/// Bilinear translation by `(dx, dy)` pixels with edge clamping.
fn translate(img: &[f32], size: usize, (dx, dy): (f64, f64)) -> Vec<f32> {
    if dx == 0.0 && dy == 0.0 {
        return img.to_vec();
    }
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, size as isize - 1) as usize;
        let y = y.clamp(0, size as isize - 1) as usize;
        img[y * size + x] as f64
    };
    let mut out = Vec::with_capacity(img.len());
    for y in 0..size {
        for x in 0..size {
            let sx = x as f64 - dx;
            let sy = y as f64 - dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    out
}

/// Row `i` holds the overlap weights of output pixel `i` with every input
/// pixel when `from` pixels are averaged down to `to`.
fn area_weights(from: usize, to: usize) -> Vec<f64> {
    let scale = from as f64 / to as f64;
    let mut w = vec![0.0; to * from];
    for i in 0..to {
        let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
        for j in (lo.floor() as usize)..(hi.ceil() as usize).min(from) {
            let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
            w[i * from + j] = overlap / scale;
        }
    }
    w
}

/// Box-filter resampling: every output pixel is the area-weighted mean of
/// the input pixels it covers.
pub fn area_resample(img: &[f32], from: usize, to: usize) -> Vec<f32> {
    if from == to {
        return img.to_vec();
    }
    let w = area_weights(from, to);
    let mut rows = vec![0.0f64; to * from];
    for i in 0..to {
        for j in 0..from {
            let wij = w[i * from + j];
            if wij != 0.0 {
                for x in 0..from {
                    rows[i * from + x] += wij * img[j * from + x] as f64;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(to * to);
    for i in 0..to {
        for k in 0..to {
            let s: f64 = (0..from).map(|x| w[k * from + x] * rows[i * from + x]).sum();
            out.push(s as f32);
        }
    }
    out
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(img: &[f32], size: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0f64; img.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * img[y * size + clamp(x as isize + k as isize - radius)] as f64)
                .sum();
        }
    }
    let mut out = Vec::with_capacity(img.len());
    for y in 0..size {
        for x in 0..size {
            let s: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(y as isize + k as isize - radius) * size + x])
                .sum();
            out.push(s as f32);
        }
    }
    out
}

/// Bilinear upsampling used to compare a degraded image with its source.
pub fn upsample_bilinear(img: &[f32], from: usize, to: usize) -> Vec<f32> {
    let scale = from as f64 / to as f64;
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, from as isize - 1) as usize;
        let y = y.clamp(0, from as isize - 1) as usize;
        img[y * from + x] as f64
    };
    let mut out = Vec::with_capacity(to * to);
    for y in 0..to {
        for x in 0..to {
            let sx = (x as f64 + 0.5) * scale - 0.5;
            let sy = (y as f64 + 0.5) * scale - 0.5;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    out
}
