//! Seeded pseudo-random reference model and synthetic test images.
//!
//! The reference container lets the codec be exercised without trained
//! weights. Transforms use scaled uniform initialization; the per-level
//! vectors are laid out so that higher levels quantize more finely and
//! select more elements, which is the shape trained vectors take.
//!
//! All randomness comes from ChaCha8 streams and is converted to floats
//! with explicit bit manipulation, so the generated bytes do not depend on
//! the `rand` distribution implementations.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::Image;
use crate::net::{Activation, ConvLayerParams, LayerKind, Network, Padding};
use crate::rate::{ChannelVector, RateVectorTable};
use crate::weights::{WeightContainer, IMAGE_CHANNELS};

/// Seed of the committed reference container.
pub const REFERENCE_SEED: u64 = 0x5C12_2022;

/// Architecture and vector layout of a generated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub seed: u64,
    pub latent_channels: usize,
    pub hyper_channels: usize,
    /// Width of the hidden layers of the analysis and synthesis transforms.
    pub hidden: usize,
    /// Width of the hidden layers of the hyper transforms.
    pub hyper_hidden: usize,
    pub n_levels: usize,
    /// Quantization step at the lowest and highest level.
    pub qv_range: (f64, f64),
    /// Mean adjustment exponent at the lowest and highest level.
    pub gamma_range: (f64, f64),
    /// Bias of the scale outputs before the softplus.
    pub sigma_bias: f32,
    pub importance_bias: f32,
    pub importance_gain: f32,
    pub hyper_sigma: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            seed: REFERENCE_SEED,
            latent_channels: 32,
            hyper_channels: 8,
            hidden: 16,
            hyper_hidden: 32,
            n_levels: 8,
            qv_range: (0.5, 0.06),
            gamma_range: (10.0, 0.35),
            sigma_bias: 0.0,
            importance_bias: 0.5,
            importance_gain: 0.1,
            hyper_sigma: 2.0,
        }
    }
}

/// Uniform in `[0, 1)` from the top 24 bits of one draw.
fn unit(rng: &mut ChaCha8Rng) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
}

fn symmetric(rng: &mut ChaCha8Rng, bound: f32) -> f32 {
    (2.0 * unit(rng) - 1.0) * bound
}

struct LayerSpec {
    kind: LayerKind,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    activation: Activation,
    gain: f32,
    bias: f32,
}

fn spec(kind: LayerKind, cin: usize, cout: usize, k: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind,
        cin,
        cout,
        k,
        stride,
        activation,
        gain: 1.0,
        bias: 0.0,
    }
}

fn build(rng: &mut ChaCha8Rng, s: LayerSpec) -> Result<ConvLayerParams> {
    let fan_in = (s.cin * s.k * s.k) as f32;
    let bound = s.gain * (6.0 / fan_in).sqrt();
    let kernel = (0..s.cout * s.cin * s.k * s.k).map(|_| symmetric(rng, bound)).collect();
    let bias = (0..s.cout).map(|_| s.bias + symmetric(rng, 0.01)).collect();
    ConvLayerParams::new(
        s.kind,
        s.cin,
        s.cout,
        s.k,
        s.k,
        s.stride,
        Padding::Same,
        s.activation,
        kernel,
        bias,
    )
}

fn network(rng: &mut ChaCha8Rng, specs: Vec<LayerSpec>) -> Result<Network> {
    Network::new(specs.into_iter().map(|s| build(rng, s)).collect::<Result<_>>()?)
}

/// Log-linear interpolation from `range.0` at the first level to `range.1`
/// at the last, with a per-channel multiplicative jitter in
/// `exp(+-jitter)` that is fixed across levels.
fn level_family(
    rng: &mut ChaCha8Rng,
    levels: usize,
    channels: usize,
    range: (f64, f64),
    jitter: f64,
) -> Result<Vec<ChannelVector>> {
    let offsets: Vec<f64> = (0..channels).map(|_| f64::from(symmetric(rng, 1.0)) * jitter).collect();
    (0..levels)
        .map(|l| {
            let t = if levels > 1 {
                l as f64 / (levels - 1) as f64
            } else {
                1.0
            };
            let base = range.0.ln() * (1.0 - t) + range.1.ln() * t;
            ChannelVector::new(offsets.iter().map(|o| (base + o).exp()).collect())
        })
        .collect()
}

/// Generates a reference model from `cfg`.
pub fn reference_weights(cfg: &ReferenceConfig) -> Result<WeightContainer> {
    use Activation::{Clip01, LeakyRelu, None as Linear};
    use LayerKind::{Conv, UpConv};
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, cy, cz, hh) = (cfg.hidden, cfg.latent_channels, cfg.hyper_channels, cfg.hyper_hidden);

    let encoder = network(
        &mut rng,
        vec![
            spec(Conv, IMAGE_CHANNELS, n, 5, 2, LeakyRelu),
            spec(Conv, n, n, 5, 2, LeakyRelu),
            spec(Conv, n, cy, 5, 2, Linear),
        ],
    )?;
    let decoder = network(
        &mut rng,
        vec![
            spec(UpConv, cy, n, 5, 1, LeakyRelu),
            spec(UpConv, n, n, 5, 1, LeakyRelu),
            LayerSpec {
                gain: 0.5,
                bias: 0.5,
                ..spec(UpConv, n, IMAGE_CHANNELS, 5, 1, Clip01)
            },
        ],
    )?;
    let hyper_encoder = network(
        &mut rng,
        vec![
            spec(Conv, cy, hh, 3, 2, LeakyRelu),
            LayerSpec {
                gain: 2.0,
                ..spec(Conv, hh, cz, 3, 2, Linear)
            },
        ],
    )?;
    let mut hyper_layers = vec![
        build(&mut rng, spec(UpConv, cz, hh, 3, 1, LeakyRelu))?,
        build(&mut rng, spec(UpConv, hh, hh, 3, 1, LeakyRelu))?,
    ];
    // Final layer: means stay near zero, scales centre on `sigma_bias`.
    let last = build(&mut rng, spec(Conv, hh, 2 * cy, 3, 1, Linear))?;
    let per_out = hh * 9;
    let kernel: Vec<f32> = last
        .kernel()
        .chunks_exact(per_out)
        .enumerate()
        .flat_map(|(o, w)| {
            let scale = if o < cy { 0.1 } else { 0.5 };
            w.iter().map(move |v| v * scale)
        })
        .collect();
    let bias: Vec<f32> = last
        .bias()
        .iter()
        .enumerate()
        .map(|(o, &b)| if o < cy { b } else { b + cfg.sigma_bias })
        .collect();
    hyper_layers.push(ConvLayerParams::new(
        Conv,
        hh,
        2 * cy,
        3,
        3,
        1,
        Padding::Same,
        Linear,
        kernel,
        bias,
    )?);
    let hyper_decoder = Network::new(hyper_layers)?;

    let importance_head = build(
        &mut rng,
        LayerSpec {
            gain: cfg.importance_gain,
            bias: cfg.importance_bias,
            ..spec(Conv, hh, cy, 1, 1, Clip01)
        },
    )?;

    let levels = cfg.n_levels;
    let qv = level_family(&mut rng, levels, cy, cfg.qv_range, 0.25)?;
    let iqv = qv
        .iter()
        .map(|v| {
            ChannelVector::new(
                v.values()
                    .iter()
                    .map(|&x| x * (1.0 + f64::from(symmetric(&mut rng, 0.02))))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma = level_family(&mut rng, levels, cy, cfg.gamma_range, 0.2)?;
    let rate_vectors = RateVectorTable::new(qv, iqv, gamma)?;
    let hyper_sigma = (0..cz)
        .map(|_| cfg.hyper_sigma * (1.0 + 0.25 * f64::from(symmetric(&mut rng, 1.0))))
        .collect();

    WeightContainer::new(
        encoder,
        decoder,
        hyper_encoder,
        hyper_decoder,
        importance_head,
        rate_vectors,
        hyper_sigma,
    )
}

/// The committed reference model.
pub fn reference_model() -> WeightContainer {
    reference_weights(&ReferenceConfig::default()).expect("reference configuration is valid")
}

/// A deterministic 8-bit synthetic image: a colour gradient, a few flat
/// shapes, a sinusoidal texture patch and mild noise.
pub fn synthetic_image(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1A6E_5EED);
    let mut u = || f64::from(unit(&mut rng));
    let base: [f64; 3] = [u(), u(), u()];
    let slope: [(f64, f64); 3] = [(u() - 0.5, u() - 0.5), (u() - 0.5, u() - 0.5), (u() - 0.5, u() - 0.5)];
    let shapes: Vec<(f64, f64, f64, [f64; 3], bool)> = (0..4)
        .map(|_| (u(), u(), 0.1 + 0.25 * u(), [u(), u(), u()], u() < 0.5))
        .collect();
    let texture = (u(), u(), 0.2 + 0.3 * u(), 0.2 + 0.3 * u(), 4.0 + 12.0 * u());
    let noise_amp = 0.02 + 0.04 * u();

    let mut rgb = Vec::with_capacity(3 * width * height);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / width as f64;
            let fy = y as f64 / height as f64;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = base[c] + slope[c].0 * (fx - 0.5) + slope[c].1 * (fy - 0.5);
            }
            for &(cx, cy, r, color, disc) in &shapes {
                let inside = if disc {
                    (fx - cx).powi(2) + (fy - cy).powi(2) < r * r
                } else {
                    (fx - cx).abs() < r && (fy - cy).abs() < r * 0.6
                };
                if inside {
                    px = color;
                }
            }
            let (tx, ty, tw, th, freq) = texture;
            if (fx - tx).abs() < tw / 2.0 && (fy - ty).abs() < th / 2.0 {
                let wave = (freq * std::f64::consts::TAU * (fx + 0.7 * fy)).sin() * 0.25;
                for v in &mut px {
                    *v += wave;
                }
            }
            for v in &mut px {
                *v += noise_amp * (u() - 0.5);
                rgb.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Image::from_rgb8(width, height, &rgb).expect("generated dimensions are consistent")
}

/// `count` synthetic images with consecutive seeds.
pub fn synthetic_corpus(seed: u64, count: usize, width: usize, height: usize) -> Vec<Image> {
    (0..count)
        .map(|i| synthetic_image(seed.wrapping_add(i as u64), width, height))
        .collect()
}

/// Seed of the image behind the committed golden bitstream.
pub const GOLDEN_IMAGE_SEED: u64 = 7;
pub const GOLDEN_QUALITY: f64 = 4.0;

/// The golden image: 80x56, so both dimensions need padding.
pub fn golden_image() -> Image {
    synthetic_image(GOLDEN_IMAGE_SEED, 80, 56)
}
