//! End-to-end encoding and decoding.
//!
//! Encoder: analysis transform, hyper analysis, hyper latent coding, hyper
//! synthesis (scales, means, importance features), importance map, mask for
//! the quality level, adaptive quantization, selection, masked parameters,
//! latent coding. The decoder mirrors the hyper path from the decoded hyper
//! latent, so it regenerates the mask and decodes exactly one symbol per
//! selected element.

use std::time::{Duration, Instant};

use crate::container::{ScrBitstream, ScrHeader, OVERHEAD_BYTES};
use crate::entropy::{discretize_cdf, masked_params, DiscretizedCdf, GaussianParams, DEFAULT_PRECISION, SIGMA_FLOOR};
use crate::error::{Result, ScrError};
use crate::image::{psnr, Image};
use crate::mask::{generate_mask, importance_head, selection_stats, ImportanceMap, MaskMode};
use crate::range_coder::{RangeDecoder, RangeEncoder};
use crate::rate::{adaiq, adaq, round_half_away, LevelVectors, QualityLevel};
use crate::tensor::{reshape_in_place, select, BinaryMask, LatentTensor, SelectedElements, Shape};
use crate::weights::WeightContainer;

/// Encoder settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    pub quality: f64,
    pub mask_mode: MaskMode,
    pub zero_mean: bool,
}

impl EncodeOptions {
    pub fn new(quality: f64) -> Self {
        EncodeOptions {
            quality,
            mask_mode: MaskMode::Deterministic,
            zero_mean: false,
        }
    }

    pub fn with_mask_mode(mut self, mode: MaskMode) -> Self {
        self.mask_mode = mode;
        self
    }

    pub fn with_zero_mean(mut self, zero_mean: bool) -> Self {
        self.zero_mean = zero_mean;
        self
    }
}

/// Everything the decoder derives from the hyper latent.
#[derive(Debug, Clone)]
pub struct HyperSide {
    pub mu: LatentTensor,
    pub sigma: LatentTensor,
    pub importance: ImportanceMap,
}

/// Encoder output with the intermediate values needed for verification.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub bitstream: ScrBitstream,
    pub quality: QualityLevel,
    pub y: LatentTensor,
    pub z_symbols: Vec<i32>,
    /// Quantized latent before selection.
    pub y_hat: LatentTensor,
    pub mask: BinaryMask,
    /// The coded latent integers, in selection order.
    pub y_symbols: Vec<i32>,
    pub params: GaussianParams,
    pub side: HyperSide,
}

/// Wall-clock decode time split by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeTiming {
    /// Hyper synthesis transform and importance head.
    pub hyper_net: Duration,
    /// Importance adjustment and binarization.
    pub mask_gen: Duration,
    /// Container parsing plus hyper and latent symbol decoding.
    pub entropy_decode: Duration,
    pub reshape: Duration,
    /// Inverse quantization and synthesis transform.
    pub decoder_net: Duration,
}

impl DecodeTiming {
    pub fn total(&self) -> Duration {
        self.hyper_net + self.mask_gen + self.entropy_decode + self.reshape + self.decoder_net
    }
}

#[derive(Debug, Clone)]
pub struct DecodeTrace {
    pub image: Image,
    pub quality: QualityLevel,
    pub z_symbols: Vec<i32>,
    pub mask: BinaryMask,
    pub y_symbols: Vec<i32>,
    /// Latent symbols pulled from the range decoder.
    pub y_symbols_decoded: u64,
    pub timing: DecodeTiming,
}

/// Bit accounting for one stored bitstream.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub n_pixels: usize,
    pub bits_total: u64,
    pub bits_y: u64,
    pub bits_z: u64,
    pub bits_header: u64,
    pub bpp: f64,
    pub selection_ratio: f64,
    pub psnr: Option<f64>,
    pub decode: Option<DecodeTiming>,
}

impl RateReport {
    /// Accounts `stored` (the bytes written to disk) against the true
    /// pixel count recorded in the header.
    pub fn from_stored(stored: &[u8], selection_ratio: f64) -> Result<Self> {
        let bs = ScrBitstream::read(stored)?;
        let n_pixels = usize::from(bs.header.width) * usize::from(bs.header.height);
        let bits_total = stored.len() as u64 * 8;
        Ok(RateReport {
            n_pixels,
            bits_total,
            bits_y: bs.y_stream.bit_length(),
            bits_z: bs.z_stream.bit_length(),
            bits_header: OVERHEAD_BYTES as u64 * 8,
            bpp: bits_total as f64 / n_pixels as f64,
            selection_ratio,
            psnr: None,
            decode: None,
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn to_symbols(t: &LatentTensor) -> Result<Vec<i32>> {
    to_symbol_vec(t.data())
}

fn to_symbol_vec(values: &[f64]) -> Result<Vec<i32>> {
    values
        .iter()
        .map(|&v| {
            if v >= f64::from(i32::MIN) && v <= f64::from(i32::MAX) {
                Ok(v as i32)
            } else {
                Err(ScrError::InvalidValue(format!("quantized value {v} exceeds 32 bits")))
            }
        })
        .collect()
}

fn hyper_cdfs(weights: &WeightContainer) -> Vec<DiscretizedCdf> {
    weights
        .hyper_sigma
        .iter()
        .map(|&s| discretize_cdf(0.0, s, DEFAULT_PRECISION))
        .collect()
}

/// Latent and hyper latent shapes for an image of the given true size.
pub fn latent_shapes(weights: &WeightContainer, width: usize, height: usize) -> Result<(Shape, Shape)> {
    let stride = weights.total_stride();
    let padded = Shape::new(3, height.div_ceil(stride) * stride, width.div_ceil(stride) * stride);
    let latent = weights.encoder.output_shape(padded)?;
    let hyper = weights.hyper_encoder.output_shape(latent)?;
    Ok((latent, hyper))
}

/// Hyper synthesis: means, floored scales and the importance map, all
/// functions of the decoded hyper latent only.
pub fn hyper_side(weights: &WeightContainer, z_hat: &LatentTensor) -> Result<HyperSide> {
    let (params, features) = weights.hyper_decoder.forward_with_penultimate(z_hat)?;
    let (mu, raw_sigma) = params.split_channels(weights.latent_channels())?;
    let sigma = raw_sigma.try_map(|v| softplus(v).max(SIGMA_FLOOR))?;
    let importance = importance_head(&features, &weights.importance_head)?;
    Ok(HyperSide { mu, sigma, importance })
}

fn resolve_quality(weights: &WeightContainer, q: f64) -> Result<(QualityLevel, LevelVectors)> {
    let n = weights.n_levels();
    let q = QualityLevel::new(q, n)?.quantized(n)?;
    Ok((q, weights.rate_vectors.vectors_at(q)?))
}

/// Encodes at quality `q`, which may be fractional; it is snapped to the
/// container's 1/256 grid first.
pub fn encode_image(x: &Image, weights: &WeightContainer, q: f64, mask_mode: MaskMode) -> Result<ScrBitstream> {
    encode_traced(x, weights, &EncodeOptions::new(q).with_mask_mode(mask_mode)).map(|t| t.bitstream)
}

/// Continuous-rate encoding; the same path as [`encode_image`], which
/// interpolates the per-level vectors for any `q` in range.
pub fn encode_continuous(x: &Image, weights: &WeightContainer, q: f64) -> Result<ScrBitstream> {
    encode_image(x, weights, q, MaskMode::Deterministic)
}

pub fn encode_traced(x: &Image, weights: &WeightContainer, opts: &EncodeOptions) -> Result<EncodeTrace> {
    if x.width() > u16::MAX as usize || x.height() > u16::MAX as usize {
        return Err(ScrError::InvalidValue("image dimensions exceed 65535".into()));
    }
    let (quality, vectors) = resolve_quality(weights, opts.quality)?;
    let padded = x.padded_to(weights.total_stride());
    let y = weights.encoder.forward(&padded.to_tensor())?;
    let z = weights.hyper_encoder.forward(&y)?;
    let z_hat = z.try_map(round_half_away)?;
    let z_symbols = to_symbols(&z_hat)?;

    let mut enc = RangeEncoder::new();
    let cdfs = hyper_cdfs(weights);
    let plane = z_hat.shape().plane();
    for (i, &s) in z_symbols.iter().enumerate() {
        enc.encode_symbol(s, &cdfs[i / plane]);
    }
    let z_stream = enc.finish();

    let side = hyper_side(weights, &z_hat)?;
    let mask = generate_mask(&side.importance, &vectors.gamma, opts.mask_mode)?;
    let y_hat = adaq(&y, &vectors.qv)?;
    let selected = select(&y_hat, &mask)?;
    let y_symbols = to_symbol_vec(selected.values())?;
    let params = masked_params(&side.mu, &side.sigma, &vectors.qv, &mask, opts.zero_mean)?;
    let mut enc = RangeEncoder::new();
    for (&s, (mu, sigma)) in y_symbols.iter().zip(params.iter()) {
        enc.encode_symbol(s, &discretize_cdf(mu, sigma, DEFAULT_PRECISION));
    }
    let y_stream = enc.finish();

    let header = ScrHeader {
        quality_fixed: quality.to_fixed(),
        width: x.width() as u16,
        height: x.height() as u16,
        latent: y.shape(),
        hyper: z_hat.shape(),
        model_id: weights.id(),
        mask_mode: opts.mask_mode,
        zero_mean: opts.zero_mean,
    };
    Ok(EncodeTrace {
        bitstream: ScrBitstream {
            header,
            z_stream,
            y_stream,
        },
        quality,
        y,
        z_symbols,
        y_hat,
        mask,
        y_symbols,
        params,
        side,
    })
}

pub fn decode_image(bs: &ScrBitstream, weights: &WeightContainer) -> Result<Image> {
    decode_traced(bs, weights).map(|t| t.image)
}

/// Parses stored bytes and decodes; parsing time counts as entropy decoding.
pub fn decode_bytes(bytes: &[u8], weights: &WeightContainer) -> Result<DecodeTrace> {
    let start = Instant::now();
    let bs = ScrBitstream::read(bytes)?;
    let parse = start.elapsed();
    let mut trace = decode_traced(&bs, weights)?;
    trace.timing.entropy_decode += parse;
    Ok(trace)
}

pub fn decode_traced(bs: &ScrBitstream, weights: &WeightContainer) -> Result<DecodeTrace> {
    let h = &bs.header;
    if h.model_id != weights.id() {
        return Err(ScrError::DigestMismatch);
    }
    let (quality, vectors) = resolve_quality(weights, h.quality())?;
    if quality.to_fixed() != h.quality_fixed {
        return Err(ScrError::InvalidHeader("quality not representable".into()));
    }
    let (latent, hyper) = latent_shapes(weights, h.width.into(), h.height.into())?;
    if latent != h.latent || hyper != h.hyper {
        return Err(ScrError::InvalidHeader(format!(
            "tensor shapes {:?}/{:?} do not match the model's {:?}/{:?}",
            h.latent, h.hyper, latent, hyper
        )));
    }
    let mut timing = DecodeTiming::default();

    let t = Instant::now();
    let cdfs = hyper_cdfs(weights);
    let mut dec = RangeDecoder::new(bs.z_stream.bytes())?;
    let plane = hyper.plane();
    let z_symbols = (0..hyper.len())
        .map(|i| dec.decode_symbol(&cdfs[i / plane]))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    let z_hat = LatentTensor::new(hyper, z_symbols.iter().map(|&s| f64::from(s)).collect())?;
    timing.entropy_decode += t.elapsed();

    let t = Instant::now();
    let side = hyper_side(weights, &z_hat)?;
    timing.hyper_net += t.elapsed();

    let t = Instant::now();
    let mask = generate_mask(&side.importance, &vectors.gamma, h.mask_mode)?;
    timing.mask_gen += t.elapsed();

    let t = Instant::now();
    let params = masked_params(&side.mu, &side.sigma, &vectors.qv, &mask, h.zero_mean)?;
    let mut dec = RangeDecoder::new(bs.y_stream.bytes())?;
    let y_symbols = params
        .iter()
        .map(|(mu, sigma)| dec.decode_symbol(&discretize_cdf(mu, sigma, DEFAULT_PRECISION)))
        .collect::<Result<Vec<_>>>()?;
    let y_symbols_decoded = dec.symbols_decoded();
    dec.finish()?;
    timing.entropy_decode += t.elapsed();

    let t = Instant::now();
    let selected = SelectedElements::new(y_symbols.iter().map(|&s| f64::from(s)).collect());
    let y_breve = reshape_in_place(&selected, &mask)?;
    timing.reshape += t.elapsed();

    let t = Instant::now();
    let y_recon = adaiq(&y_breve, &vectors.iqv)?;
    let out = weights.decoder.forward(&y_recon)?;
    let image = Image::from_tensor(out)?.cropped(h.width.into(), h.height.into())?;
    timing.decoder_net += t.elapsed();

    Ok(DecodeTrace {
        image,
        quality,
        z_symbols,
        mask,
        y_symbols,
        y_symbols_decoded,
        timing,
    })
}

/// Encodes, stores and decodes `x`, reporting rate from the stored bytes.
pub fn round_trip_report(
    x: &Image,
    weights: &WeightContainer,
    opts: &EncodeOptions,
) -> Result<(RateReport, DecodeTrace)> {
    let trace = encode_traced(x, weights, opts)?;
    let stored = trace.bitstream.write()?;
    let mut report = RateReport::from_stored(&stored, selection_stats(&trace.mask))?;
    let decoded = decode_bytes(&stored, weights)?;
    report.psnr = Some(psnr(x, &decoded.image)?);
    report.decode = Some(decoded.timing);
    Ok((report, decoded))
}
