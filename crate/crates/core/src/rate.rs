//! Per-quality channel vectors (quantization, inverse quantization and
//! importance adjustment exponents) and the adaptive quantizers built on
//! them.

use crate::error::{Result, ScrError};
use crate::tensor::{channelwise_scale, LatentTensor, ScaleMode};

/// A strictly positive, finite per-channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<f64>);

impl ChannelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ScrError::InvalidValue("empty channel vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(ScrError::InvalidValue(format!(
                "channel vector entries must be positive and finite, got {v}"
            )));
        }
        Ok(ChannelVector(values))
    }

    pub fn ones(len: usize) -> Self {
        ChannelVector(vec![1.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

/// Quality levels are carried as unsigned 8.8 fixed point on the wire.
pub const QUALITY_FRACTION_BITS: u32 = 8;

/// A target quality `q`, real-valued in `[1, n_levels]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QualityLevel(f64);

impl QualityLevel {
    pub fn new(q: f64, n_levels: usize) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0 && q <= n_levels as f64) {
            return Err(ScrError::QualityOutOfRange { q, n_levels });
        }
        Ok(QualityLevel(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// 8.8 fixed-point encoding, truncating to the grid below `q`.
    pub fn to_fixed(self) -> u16 {
        (self.0 * f64::from(1u32 << QUALITY_FRACTION_BITS)).floor() as u16
    }

    pub fn from_fixed(raw: u16, n_levels: usize) -> Result<Self> {
        Self::new(f64::from(raw) / f64::from(1u32 << QUALITY_FRACTION_BITS), n_levels)
    }

    /// The level snapped to the 1/256 grid the container can represent.
    pub fn quantized(self, n_levels: usize) -> Result<Self> {
        Self::from_fixed(self.to_fixed(), n_levels)
    }

    pub fn is_integer(self) -> bool {
        self.0.fract() == 0.0
    }
}

/// The vectors resolved for one quality level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelVectors {
    pub qv: ChannelVector,
    pub iqv: ChannelVector,
    pub gamma: ChannelVector,
}

/// Stored quantization, inverse-quantization and adjustment vectors for
/// each of the `n_levels` integer quality levels.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVectorTable {
    channels: usize,
    qv: Vec<ChannelVector>,
    iqv: Vec<ChannelVector>,
    gamma: Vec<ChannelVector>,
}

impl RateVectorTable {
    pub fn new(qv: Vec<ChannelVector>, iqv: Vec<ChannelVector>, gamma: Vec<ChannelVector>) -> Result<Self> {
        let n = qv.len();
        if n == 0 || iqv.len() != n || gamma.len() != n {
            return Err(ScrError::InvalidValue(format!(
                "vector families must have equal, non-zero level counts (qv {}, iqv {}, gamma {})",
                qv.len(),
                iqv.len(),
                gamma.len()
            )));
        }
        if n > 255 {
            return Err(ScrError::InvalidValue(format!("too many levels: {n}")));
        }
        let channels = qv[0].len();
        for v in qv.iter().chain(&iqv).chain(&gamma) {
            if v.len() != channels {
                return Err(ScrError::LengthMismatch {
                    expected: channels,
                    actual: v.len(),
                });
            }
        }
        Ok(RateVectorTable {
            channels,
            qv,
            iqv,
            gamma,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.qv.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn qv(&self) -> &[ChannelVector] {
        &self.qv
    }

    pub fn iqv(&self) -> &[ChannelVector] {
        &self.iqv
    }

    pub fn gamma(&self) -> &[ChannelVector] {
        &self.gamma
    }

    pub fn quality(&self, q: f64) -> Result<QualityLevel> {
        QualityLevel::new(q, self.n_levels())
    }

    /// Resolves the vectors for `q`. Integer levels are a plain lookup;
    /// fractional levels interpolate geometrically between the two
    /// neighbouring stored levels, element by element.
    pub fn vectors_at(&self, q: QualityLevel) -> Result<LevelVectors> {
        let q = QualityLevel::new(q.value(), self.n_levels())?.value();
        let lower = q.floor();
        let lo = lower as usize - 1;
        if q == lower {
            return Ok(LevelVectors {
                qv: self.qv[lo].clone(),
                iqv: self.iqv[lo].clone(),
                gamma: self.gamma[lo].clone(),
            });
        }
        let f = q - lower;
        let interp = |family: &[ChannelVector]| {
            let values = family[lo]
                .values()
                .iter()
                .zip(family[lo + 1].values())
                .map(|(&a, &b)| {
                    let v = libm::pow(a, 1.0 - f) * libm::pow(b, f);
                    v.clamp(a.min(b), a.max(b))
                })
                .collect();
            ChannelVector(values)
        };
        Ok(LevelVectors {
            qv: interp(&self.qv),
            iqv: interp(&self.iqv),
            gamma: interp(&self.gamma),
        })
    }
}

/// Rounds half away from zero. This is the single rounding rule used for
/// quantization and mask binarization on both ends of the codec.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Channel-wise divide by `qv` followed by rounding; the result holds exact
/// integers.
pub fn adaq(y: &LatentTensor, qv: &ChannelVector) -> Result<LatentTensor> {
    let scaled = channelwise_scale(y, qv, ScaleMode::Divide)?;
    scaled.try_map(round_half_away)
}

/// Channel-wise multiplication by the inverse-quantization vector.
pub fn adaiq(y_hat: &LatentTensor, iqv: &ChannelVector) -> Result<LatentTensor> {
    channelwise_scale(y_hat, iqv, ScaleMode::Multiply)
}

/// Rate-distortion trade-off weight used when training level `q`.
pub fn lambda_for(q: f64) -> f64 {
    0.2 * libm::exp2(q - 8.0)
}
