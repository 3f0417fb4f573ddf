//! Gaussian conditional entropy model for the selected latent elements.
//!
//! Each coded integer `k` is modelled by a Gaussian convolved with a unit
//! uniform, `P(k) = Phi((k + 1/2 - mu) / sigma) - Phi((k - 1/2 - mu) / sigma)`.
//! For the range coder the PMF is quantized into integer frequencies over a
//! finite support plus one escape symbol.

use crate::error::{Result, ScrError};
use crate::rate::ChannelVector;
use crate::tensor::{channelwise_scale, expect_shape, select, BinaryMask, LatentTensor, ScaleMode, SelectedElements};

/// Lower bound applied to every scale after quantization-vector scaling.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Half-width of the coded support in units of sigma.
pub const TAIL_SIGMAS: f64 = 9.0;
/// Frequency precision used by the codec.
pub const DEFAULT_PRECISION: u32 = 16;
pub const MIN_PRECISION: u32 = 8;
pub const MAX_PRECISION: u32 = 16;
/// Smallest probability `pmf` reports, 2^-50. An escaped value costs at
/// most 48 bits in the coder, so this keeps the model rate an upper bound.
pub const PMF_FLOOR: f64 = 8.881_784_197_001_252e-16;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Mass of the unit bin centred on `k`, without the floor.
fn bin_mass(k: f64, mu: f64, sigma: f64) -> f64 {
    let d = k - mu;
    // Evaluate on the side where both CDF values are small.
    if d > 0.0 {
        normal_cdf(-(d - 0.5) / sigma) - normal_cdf(-(d + 0.5) / sigma)
    } else {
        normal_cdf((d + 0.5) / sigma) - normal_cdf((d - 0.5) / sigma)
    }
}

/// Probability of integer `k` under the discretized Gaussian, floored at
/// [`PMF_FLOOR`].
pub fn pmf(k: i64, mu: f64, sigma: f64) -> f64 {
    bin_mass(k as f64, mu, sigma.max(SIGMA_FLOOR)).max(PMF_FLOOR)
}

/// Per-element Gaussian parameters for a selected sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(ScrError::LengthMismatch {
                expected: mu.len(),
                actual: sigma.len(),
            });
        }
        if mu.iter().any(|m| !m.is_finite()) || sigma.iter().any(|s| !s.is_finite()) {
            return Err(ScrError::InvalidValue("non-finite Gaussian parameter".into()));
        }
        let sigma = sigma.into_iter().map(|s| s.max(SIGMA_FLOOR)).collect();
        Ok(GaussianParams { mu, sigma })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mu.iter().copied().zip(self.sigma.iter().copied())
    }
}

/// Scales the hyper-decoder's mean and scale tensors into the quantized
/// domain of one quality level and gathers them through `mask`, in the same
/// order as the latent values. With `zero_mean` every mean is zero.
pub fn masked_params(
    mu_t: &LatentTensor,
    sigma_t: &LatentTensor,
    qv: &ChannelVector,
    mask: &BinaryMask,
    zero_mean: bool,
) -> Result<GaussianParams> {
    expect_shape(mu_t.shape(), sigma_t.shape())?;
    expect_shape(mu_t.shape(), mask.shape())?;
    let sigma = select(&channelwise_scale(sigma_t, qv, ScaleMode::Divide)?, mask)?.into_values();
    let mu = if zero_mean {
        vec![0.0; sigma.len()]
    } else {
        select(&channelwise_scale(mu_t, qv, ScaleMode::Divide)?, mask)?.into_values()
    };
    GaussianParams::new(mu, sigma)
}

/// Model rate of `values` in bits: the sum of `-log2 pmf`.
pub fn cross_entropy_bits(values: &SelectedElements, params: &GaussianParams) -> Result<f64> {
    if values.count() != params.len() {
        return Err(ScrError::LengthMismatch {
            expected: params.len(),
            actual: values.count(),
        });
    }
    let mut bits = 0.0;
    for (&v, (mu, sigma)) in values.values().iter().zip(params.iter()) {
        if v.fract() != 0.0 {
            return Err(ScrError::InvalidValue(format!("non-integral symbol {v}")));
        }
        bits -= libm::log2(pmf(v as i64, mu, sigma));
    }
    Ok(bits)
}

/// Integer frequency table for one symbol: the support `lo..=hi` followed by
/// an escape symbol that stands for every value outside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscretizedCdf {
    lo: i32,
    precision: u32,
    /// `support + 2` entries, from 0 up to `2^precision`.
    cumulative: Vec<u32>,
}

impl DiscretizedCdf {
    /// Builds a table from raw frequencies (support symbols then escape).
    pub fn from_frequencies(lo: i32, precision: u32, freqs: &[u32]) -> Result<Self> {
        if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
            return Err(ScrError::InvalidValue(format!("precision {precision} out of range")));
        }
        if freqs.len() < 2 {
            return Err(ScrError::InvalidValue("need at least one symbol and an escape".into()));
        }
        if freqs.contains(&0) {
            return Err(ScrError::InvalidValue("zero frequency".into()));
        }
        let mut cumulative = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cumulative.push(0);
        for &f in freqs {
            acc += u64::from(f);
            cumulative.push(acc as u32);
        }
        if acc != 1u64 << precision {
            return Err(ScrError::InvalidValue(format!(
                "frequencies sum to {acc}, expected {}",
                1u64 << precision
            )));
        }
        if i64::from(lo) + freqs.len() as i64 - 2 > i64::from(i32::MAX) {
            return Err(ScrError::InvalidValue("support exceeds i32 range".into()));
        }
        Ok(DiscretizedCdf {
            lo,
            precision,
            cumulative,
        })
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn total(&self) -> u32 {
        1 << self.precision
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.support_len() as i32 - 1
    }

    pub fn support_len(&self) -> usize {
        self.cumulative.len() - 2
    }

    /// Index of the escape symbol.
    pub fn escape_index(&self) -> usize {
        self.cumulative.len() - 2
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cumulative
    }

    /// Coder symbol index for `value`, or the escape index when outside the
    /// support.
    pub fn index_of(&self, value: i32) -> usize {
        let offset = i64::from(value) - i64::from(self.lo);
        if offset >= 0 && (offset as usize) < self.support_len() {
            offset as usize
        } else {
            self.escape_index()
        }
    }

    pub fn value_of(&self, index: usize) -> Option<i32> {
        (index < self.support_len()).then(|| self.lo + index as i32)
    }

    /// `(start, frequency)` of symbol `index`.
    pub fn range(&self, index: usize) -> (u32, u32) {
        let start = self.cumulative[index];
        (start, self.cumulative[index + 1] - start)
    }

    /// Symbol whose cumulative interval contains `target`.
    pub fn find(&self, target: u32) -> usize {
        debug_assert!(target < self.total());
        self.cumulative.partition_point(|&c| c <= target) - 1
    }

    /// Ideal code length of `value` in bits, escape payload excluded.
    pub fn code_length(&self, value: i32) -> f64 {
        let (_, f) = self.range(self.index_of(value));
        f64::from(self.precision) - libm::log2(f64::from(f))
    }
}

/// Quantizes the discretized Gaussian `(mu, sigma)` into a frequency table
/// totalling `2^precision`.
///
/// The support is `[floor(mu - 9 sigma), ceil(mu + 9 sigma)]`, capped at
/// `2^(precision - 2)` symbols around `round(mu)`. Every symbol, including
/// the escape, gets frequency at least 1; rounding slack goes to the most
/// probable symbol.
///
/// Panics if `precision` is outside `8..=16`.
pub fn discretize_cdf(mu: f64, sigma: f64, precision: u32) -> DiscretizedCdf {
    assert!(
        (MIN_PRECISION..=MAX_PRECISION).contains(&precision),
        "precision {precision} out of range"
    );
    const LIMIT: f64 = (1u32 << 30) as f64;
    let mu = if mu.is_finite() { mu.clamp(-LIMIT, LIMIT) } else { 0.0 };
    let sigma = if sigma.is_finite() {
        sigma.max(SIGMA_FLOOR)
    } else {
        LIMIT
    };
    let max_support = 1i64 << (precision - 2);

    let mut lo = (mu - TAIL_SIGMAS * sigma).floor().max(-2.0 * LIMIT) as i64;
    let mut hi = (mu + TAIL_SIGMAS * sigma).ceil().min(2.0 * LIMIT) as i64;
    if hi - lo + 1 > max_support {
        lo = mu.round() as i64 - max_support / 2;
        hi = lo + max_support - 1;
    }
    let support = (hi - lo + 1) as usize;

    // Tail probability on the far side of each bin edge, with the side
    // recorded, so each bin mass is a difference of two small numbers.
    let edges: Vec<(f64, bool)> = (0..=support)
        .map(|j| {
            let t = (lo as f64 - 0.5 + j as f64 - mu) / sigma;
            (normal_cdf(-t.abs()), t > 0.0)
        })
        .collect();
    let cdf_at = |(tail, upper): (f64, bool)| if upper { 1.0 - tail } else { tail };
    let mut probs = Vec::with_capacity(support + 1);
    for w in edges.windows(2) {
        let p = match (w[0], w[1]) {
            ((a, true), (b, true)) => a - b,
            ((a, false), (b, false)) => b - a,
            (a, b) => cdf_at(b) - cdf_at(a),
        };
        probs.push(p.max(0.0));
    }
    let lower_tail = cdf_at(edges[0]);
    let upper_tail = 1.0 - cdf_at(edges[support]);
    probs.push((lower_tail + upper_tail).max(0.0));

    let total = 1u64 << precision;
    let n = probs.len() as u64;
    let budget = (total - n) as f64;
    let mut freqs: Vec<u32> = probs
        .iter()
        .map(|&p| 1 + (p * budget).floor().min(budget) as u32)
        .collect();
    let mode = probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
    let mut sum: u64 = freqs.iter().map(|&f| u64::from(f)).sum();
    if sum < total {
        freqs[mode] += (total - sum) as u32;
    } else {
        while sum > total {
            let (i, &f) = freqs
                .iter()
                .enumerate()
                .max_by_key(|&(i, &f)| (f, std::cmp::Reverse(i)))
                .unwrap();
            let cut = (sum - total).min(u64::from(f - 1)) as u32;
            freqs[i] -= cut;
            sum -= u64::from(cut);
        }
    }
    DiscretizedCdf::from_frequencies(lo as i32, precision, &freqs)
        .expect("frequency table construction is total-preserving")
}
