//! Importance maps and the binary masks derived from them.
//!
//! A map holds one importance value in `[0, 1]` per latent element. Each
//! quality level raises channel `c` of the map to the power `gamma[c]` and
//! the result is rounded to a mask. The decoder regenerates the same mask
//! from the decoded hyper latent and the quality level, so the mask itself
//! is never transmitted.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ScrError};
use crate::net::{conv2d, ConvLayerParams};
use crate::rate::{round_half_away, ChannelVector};
use crate::tensor::{expect_shape, BinaryMask, LatentTensor, Shape};

/// How the decoder-reproducible mask is formed from the importance map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Round the adjusted map.
    Deterministic,
    /// Round the adjusted map plus seeded uniform noise in `[-0.5, 0.5)`.
    Stochastic(u64),
    /// Channel-inclusive mask from a per-position 2D map.
    Baseline2d,
    /// Every element selected: the control without selective coding.
    Full,
}

impl std::str::FromStr for MaskMode {
    type Err = ScrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det" => Ok(MaskMode::Deterministic),
            "2d" => Ok(MaskMode::Baseline2d),
            "full" => Ok(MaskMode::Full),
            _ => match s.strip_prefix("stoch:") {
                Some(seed) => seed
                    .parse()
                    .map(MaskMode::Stochastic)
                    .map_err(|_| ScrError::InvalidValue(format!("bad seed in mask mode {s:?}"))),
                None => Err(ScrError::InvalidValue(format!("unknown mask mode {s:?}"))),
            },
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskMode::Deterministic => write!(f, "det"),
            MaskMode::Stochastic(seed) => write!(f, "stoch:{seed}"),
            MaskMode::Baseline2d => write!(f, "2d"),
            MaskMode::Full => write!(f, "full"),
        }
    }
}

/// A 3D map with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap(LatentTensor);

impl ImportanceMap {
    pub fn new(values: LatentTensor) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ScrError::InvalidValue(format!("importance value {v} outside [0, 1]")));
        }
        Ok(ImportanceMap(values))
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn as_tensor(&self) -> &LatentTensor {
        &self.0
    }

    /// Per-position mean over channels, as a row-major `H x W` map.
    pub fn channel_mean(&self) -> Map2d {
        let shape = self.shape();
        let plane = shape.plane();
        let mut values = vec![0.0; plane];
        for chunk in self.values().chunks_exact(plane) {
            for (acc, &v) in values.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        for v in &mut values {
            *v /= shape.channels as f64;
        }
        Map2d {
            height: shape.height,
            width: shape.width,
            values,
        }
    }
}

/// A single-plane importance map, `height x width`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2d {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Runs the 1x1 importance head on hyper-decoder features and clips the
/// result to `[0, 1]`.
pub fn importance_head(hyper_features: &LatentTensor, head: &ConvLayerParams) -> Result<ImportanceMap> {
    if head.kernel_h != 1 || head.kernel_w != 1 || head.stride != 1 {
        return Err(ScrError::InvalidWeights(
            "importance head must be a stride-1 1x1 convolution".into(),
        ));
    }
    let raw = conv2d(hyper_features, head)?;
    ImportanceMap::new(raw.try_map(|v| v.clamp(0.0, 1.0))?)
}

/// Raises channel `c` of the map to `gamma[c]`. `0^gamma` is `0`.
pub fn adjust(im: &ImportanceMap, gamma: &ChannelVector) -> Result<ImportanceMap> {
    let shape = im.shape();
    if gamma.len() != shape.channels {
        return Err(ScrError::LengthMismatch {
            expected: shape.channels,
            actual: gamma.len(),
        });
    }
    let plane = shape.plane();
    let mut out = Vec::with_capacity(shape.len());
    for (chunk, &g) in im.values().chunks_exact(plane).zip(gamma.values()) {
        out.extend(
            chunk
                .iter()
                .map(|&v| if v == 0.0 { 0.0 } else { libm::pow(v, g).clamp(0.0, 1.0) }),
        );
    }
    Ok(ImportanceMap(LatentTensor::from_raw(shape, out)))
}

/// Rounds each adjusted value; exactly `0.5` selects.
pub fn binarize(adjusted: &ImportanceMap) -> BinaryMask {
    let bits = adjusted.values().iter().map(|&v| round_half_away(v) >= 1.0).collect();
    BinaryMask::new(adjusted.shape(), bits).expect("shape already validated")
}

/// Uniform noise in `[-0.5, 0.5)` with 53 bits of resolution.
fn centered_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) - 0.5
}

/// Rounds `adjusted + U(-0.5, 0.5)`; element `i` is set with probability
/// equal to its adjusted value. Noise is drawn in row-major element order
/// from a ChaCha8 stream seeded with `seed`.
pub fn stochastic_binarize(adjusted: &ImportanceMap, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = adjusted
        .values()
        .iter()
        .map(|&v| round_half_away(v + centered_uniform(&mut rng)) >= 1.0)
        .collect();
    BinaryMask::new(adjusted.shape(), bits).expect("shape already validated")
}

/// Channel-inclusive mask: at each position the first
/// `round(im2d * channels)` channels are set.
pub fn mask_from_2d_importance(im2d: &Map2d, channels: usize) -> Result<BinaryMask> {
    if im2d.values.len() != im2d.height * im2d.width {
        return Err(ScrError::LengthMismatch {
            expected: im2d.height * im2d.width,
            actual: im2d.values.len(),
        });
    }
    if let Some(v) = im2d.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ScrError::InvalidValue(format!(
            "2D importance value {v} outside [0, 1]"
        )));
    }
    let counts: Vec<usize> = im2d
        .values
        .iter()
        .map(|&v| (round_half_away(v * channels as f64) as usize).min(channels))
        .collect();
    let shape = Shape::new(channels, im2d.height, im2d.width);
    let plane = shape.plane();
    BinaryMask::new(shape, (0..shape.len()).map(|i| i / plane < counts[i % plane]).collect())
}

/// Builds the mask for `mode` from an unadjusted importance map.
pub fn generate_mask(im: &ImportanceMap, gamma: &ChannelVector, mode: MaskMode) -> Result<BinaryMask> {
    if mode == MaskMode::Full {
        return Ok(BinaryMask::ones(im.shape()));
    }
    let adjusted = adjust(im, gamma)?;
    Ok(match mode {
        MaskMode::Deterministic => binarize(&adjusted),
        MaskMode::Stochastic(seed) => stochastic_binarize(&adjusted, seed),
        MaskMode::Baseline2d => mask_from_2d_importance(&adjusted.channel_mean(), im.shape().channels)?,
        MaskMode::Full => unreachable!(),
    })
}

/// Fraction of set elements.
pub fn selection_stats(mask: &BinaryMask) -> f64 {
    mask.popcount() as f64 / mask.shape().len() as f64
}

/// Fraction of the elements selected in `mask_lo` that are also selected in
/// `mask_hi`; `1.0` when `mask_lo` is empty.
pub fn reuse_ratio(mask_lo: &BinaryMask, mask_hi: &BinaryMask) -> Result<f64> {
    expect_shape(mask_lo.shape(), mask_hi.shape())?;
    let lo = mask_lo.popcount();
    if lo == 0 {
        return Ok(1.0);
    }
    let both = mask_lo
        .bits()
        .iter()
        .zip(mask_hi.bits())
        .filter(|(&a, &b)| a && b)
        .count();
    Ok(both as f64 / lo as f64)
}
