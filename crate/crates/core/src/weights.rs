//! The `.scrw` weight container.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `"SCRW"` | 4 bytes |
//! | version (1) | u8 |
//! | network count (5) | u8 |
//! | per network: name length, name, layer count | u8, bytes, u16 |
//! | per layer: kind, in, out, kh, kw, stride, padding, activation | u8, u16, u16, u8, u8, u8, u8, u8 |
//! | per layer, in manifest order: kernel `(out, in, kh, kw)`, bias | f32 array, f32 array |
//! | level count `N`, channel count `C` | u8, u16 |
//! | qv, iqv, gamma, each `N x C` level-major | f64 arrays |
//! | hyper channel count `Cz`, hyper scale table | u16, f64 array |
//! | digest: first 16 bytes of SHA-256 over everything above | 16 bytes |
//!
//! Networks appear in the order encoder, decoder, hyper_encoder,
//! hyper_decoder, importance_head. Kind codes: 0 conv, 1 upsample-conv.
//! Padding: 0 same, 1 valid. Activation: 0 none, 1 relu, 2 leaky relu
//! (slope 0.2), 3 clip to `[0, 1]`.

use sha2::{Digest, Sha256};

use crate::error::{Result, ScrError};
use crate::net::{Activation, ConvLayerParams, LayerKind, Network, Padding};
use crate::rate::{ChannelVector, RateVectorTable};
use crate::wire::Reader;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SCRW";
pub const WEIGHTS_VERSION: u8 = 1;
pub const IMAGE_CHANNELS: usize = 3;

const NETWORK_NAMES: [&str; 5] = [
    "encoder",
    "decoder",
    "hyper_encoder",
    "hyper_decoder",
    "importance_head",
];

/// Truncated SHA-256 identifying a weight container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelId(pub [u8; 16]);

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

fn digest(bytes: &[u8]) -> ModelId {
    let full = Sha256::digest(bytes);
    let mut id = [0u8; 16];
    id.copy_from_slice(&full[..16]);
    ModelId(id)
}

/// Per-section parameter counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterManifest {
    pub sections: Vec<(String, usize)>,
}

impl ParameterManifest {
    pub fn total(&self) -> usize {
        self.sections.iter().map(|(_, n)| n).sum()
    }

    pub fn get(&self, name: &str) -> usize {
        self.sections.iter().find(|(n, _)| n == name).map_or(0, |(_, c)| *c)
    }

    /// Parameters that exist only for selective coding and variable rate:
    /// the importance head and the three per-level vector families.
    pub fn selective_overhead(&self) -> usize {
        ["importance_head", "qv", "iqv", "gamma"]
            .iter()
            .map(|n| self.get(n))
            .sum()
    }
}

impl std::fmt::Display for ParameterManifest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<16} {:>10}", "section", "params")?;
        for (name, n) in &self.sections {
            writeln!(f, "{name:<16} {n:>10}")?;
        }
        let total = self.total();
        writeln!(f, "{:<16} {:>10}", "total", total)?;
        write!(
            f,
            "{:<16} {:>10} ({:.2}%)",
            "selective",
            self.selective_overhead(),
            100.0 * self.selective_overhead() as f64 / total as f64
        )
    }
}

/// All model parameters the codec needs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    pub encoder: Network,
    pub decoder: Network,
    pub hyper_encoder: Network,
    pub hyper_decoder: Network,
    pub importance_head: ConvLayerParams,
    pub rate_vectors: RateVectorTable,
    /// Scale of the zero-mean Gaussian for each hyper latent channel.
    pub hyper_sigma: Vec<f64>,
    id: ModelId,
}

impl WeightContainer {
    /// Validates the architecture and computes the digest.
    pub fn new(
        encoder: Network,
        decoder: Network,
        hyper_encoder: Network,
        hyper_decoder: Network,
        importance_head: ConvLayerParams,
        rate_vectors: RateVectorTable,
        hyper_sigma: Vec<f64>,
    ) -> Result<Self> {
        let mut w = WeightContainer {
            encoder,
            decoder,
            hyper_encoder,
            hyper_decoder,
            importance_head,
            rate_vectors,
            hyper_sigma,
            id: ModelId([0; 16]),
        };
        w.validate()?;
        let bytes = w.payload_bytes();
        w.id = digest(&bytes);
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ScrError::InvalidWeights(m));
        let cy = self.rate_vectors.channels();
        let cz = self.hyper_sigma.len();
        if self.encoder.in_channels() != IMAGE_CHANNELS || self.decoder.out_channels() != IMAGE_CHANNELS {
            return bad("encoder input and decoder output must have 3 channels".into());
        }
        if self.encoder.out_channels() != cy || self.decoder.in_channels() != cy {
            return bad(format!("latent channels must equal the rate vector width {cy}"));
        }
        if self.hyper_encoder.in_channels() != cy || self.hyper_encoder.out_channels() != cz {
            return bad(format!("hyper encoder must map {cy} to {cz} channels"));
        }
        if self.hyper_decoder.in_channels() != cz || self.hyper_decoder.out_channels() != 2 * cy {
            return bad(format!("hyper decoder must map {cz} to {} channels", 2 * cy));
        }
        let penultimate = self.hyper_decoder.layers().last().unwrap().in_channels;
        let head = &self.importance_head;
        if head.in_channels != penultimate || head.out_channels != cy {
            return bad(format!("importance head must map {penultimate} to {cy} channels"));
        }
        if head.kernel_h != 1 || head.kernel_w != 1 || head.stride != 1 || head.kind != LayerKind::Conv {
            return bad("importance head must be a 1x1 stride-1 convolution".into());
        }
        let upsampling = |n: &Network| {
            n.layers()
                .iter()
                .map(|l| if l.kind == LayerKind::UpConv { 2 } else { 1 })
                .product::<usize>()
        };
        for (down, up, name) in [
            (&self.encoder, &self.decoder, "decoder"),
            (&self.hyper_encoder, &self.hyper_decoder, "hyper decoder"),
        ] {
            if up.downsampling() != 1 || upsampling(up) != down.downsampling() {
                return bad(format!("{name} must upsample by its encoder's stride"));
            }
            if upsampling(down) != 1 {
                return bad("analysis networks may not upsample".into());
            }
        }
        if self.hyper_sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("hyper scales must be positive".into());
        }
        if cz == 0 || cz > u16::MAX as usize || cy > u16::MAX as usize {
            return bad("channel counts out of range".into());
        }
        Ok(())
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn latent_channels(&self) -> usize {
        self.rate_vectors.channels()
    }

    pub fn hyper_channels(&self) -> usize {
        self.hyper_sigma.len()
    }

    pub fn n_levels(&self) -> usize {
        self.rate_vectors.n_levels()
    }

    /// Total downsampling from image to hyper latent; images are padded to
    /// a multiple of this.
    pub fn total_stride(&self) -> usize {
        self.encoder.downsampling() * self.hyper_encoder.downsampling()
    }

    fn networks(&self) -> [Vec<&ConvLayerParams>; 5] {
        [
            self.encoder.layers().iter().collect(),
            self.decoder.layers().iter().collect(),
            self.hyper_encoder.layers().iter().collect(),
            self.hyper_decoder.layers().iter().collect(),
            vec![&self.importance_head],
        ]
    }

    pub fn manifest(&self) -> ParameterManifest {
        let mut sections: Vec<(String, usize)> = NETWORK_NAMES
            .iter()
            .zip(self.networks())
            .map(|(name, layers)| (name.to_string(), layers.iter().map(|l| l.parameter_count()).sum()))
            .collect();
        let per_family = self.n_levels() * self.latent_channels();
        for name in ["qv", "iqv", "gamma"] {
            sections.push((name.into(), per_family));
        }
        sections.push(("hyper_sigma".into(), self.hyper_channels()));
        ParameterManifest { sections }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        let networks = self.networks();
        out.push(networks.len() as u8);
        for (name, layers) in NETWORK_NAMES.iter().zip(&networks) {
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
            for l in layers {
                out.push(match l.kind {
                    LayerKind::Conv => 0,
                    LayerKind::UpConv => 1,
                });
                out.extend_from_slice(&(l.in_channels as u16).to_le_bytes());
                out.extend_from_slice(&(l.out_channels as u16).to_le_bytes());
                out.push(l.kernel_h as u8);
                out.push(l.kernel_w as u8);
                out.push(l.stride as u8);
                out.push(match l.padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                });
                out.push(match l.activation {
                    Activation::None => 0,
                    Activation::Relu => 1,
                    Activation::LeakyRelu => 2,
                    Activation::Clip01 => 3,
                });
            }
        }
        for layers in &networks {
            for l in layers {
                for v in l.kernel().iter().chain(l.bias()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let table = &self.rate_vectors;
        out.push(table.n_levels() as u8);
        out.extend_from_slice(&(table.channels() as u16).to_le_bytes());
        for family in [table.qv(), table.iqv(), table.gamma()] {
            for v in family.iter().flat_map(|v| v.values()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.hyper_sigma.len() as u16).to_le_bytes());
        for v in &self.hyper_sigma {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.payload_bytes();
        out.extend_from_slice(&self.id.0);
        out
    }

    /// Parses and verifies a container.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || ScrError::InvalidWeights("truncated weight container".into());
        if bytes.len() < 16 + 6 {
            return Err(truncated());
        }
        let (payload, stored) = bytes.split_at(bytes.len() - 16);
        if digest(payload).0 != stored {
            return Err(ScrError::DigestMismatch);
        }
        let mut r = Reader::new(payload, truncated);
        if r.array::<4>()? != WEIGHTS_MAGIC {
            return Err(ScrError::InvalidWeights("bad magic".into()));
        }
        let version = r.u8()?;
        if version != WEIGHTS_VERSION {
            return Err(ScrError::InvalidWeights(format!("unsupported version {version}")));
        }
        let count = r.u8()? as usize;
        if count != NETWORK_NAMES.len() {
            return Err(ScrError::InvalidWeights(format!("expected 5 networks, found {count}")));
        }
        struct Desc {
            kind: LayerKind,
            cin: usize,
            cout: usize,
            kh: usize,
            kw: usize,
            stride: usize,
            padding: Padding,
            activation: Activation,
        }
        let mut descs: Vec<Vec<Desc>> = Vec::new();
        for expected in NETWORK_NAMES {
            let len = r.u8()? as usize;
            let name = r.take(len)?;
            if name != expected.as_bytes() {
                return Err(ScrError::InvalidWeights(format!(
                    "expected network {expected}, found {:?}",
                    String::from_utf8_lossy(name)
                )));
            }
            let n_layers = r.u16()? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let kind = match r.u8()? {
                    0 => LayerKind::Conv,
                    1 => LayerKind::UpConv,
                    k => return Err(ScrError::InvalidWeights(format!("unknown layer kind {k}"))),
                };
                let cin = r.u16()? as usize;
                let cout = r.u16()? as usize;
                let kh = r.u8()? as usize;
                let kw = r.u8()? as usize;
                let stride = r.u8()? as usize;
                let padding = match r.u8()? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(ScrError::InvalidWeights(format!("unknown padding {p}"))),
                };
                let activation = match r.u8()? {
                    0 => Activation::None,
                    1 => Activation::Relu,
                    2 => Activation::LeakyRelu,
                    3 => Activation::Clip01,
                    a => return Err(ScrError::InvalidWeights(format!("unknown activation {a}"))),
                };
                layers.push(Desc {
                    kind,
                    cin,
                    cout,
                    kh,
                    kw,
                    stride,
                    padding,
                    activation,
                });
            }
            descs.push(layers);
        }
        let mut networks: Vec<Vec<ConvLayerParams>> = Vec::new();
        for layers in descs {
            let mut built = Vec::with_capacity(layers.len());
            for d in layers {
                let kernel = r.f32s(d.cout * d.cin * d.kh * d.kw)?;
                let bias = r.f32s(d.cout)?;
                built.push(ConvLayerParams::new(
                    d.kind,
                    d.cin,
                    d.cout,
                    d.kh,
                    d.kw,
                    d.stride,
                    d.padding,
                    d.activation,
                    kernel,
                    bias,
                )?);
            }
            networks.push(built);
        }
        let n_levels = r.u8()? as usize;
        let channels = r.u16()? as usize;
        let mut family =
            || -> Result<Vec<ChannelVector>> { (0..n_levels).map(|_| ChannelVector::new(r.f64s(channels)?)).collect() };
        let qv = family()?;
        let iqv = family()?;
        let gamma = family()?;
        let rate_vectors = RateVectorTable::new(qv, iqv, gamma)?;
        let cz = r.u16()? as usize;
        let hyper_sigma = r.f64s(cz)?;
        if r.remaining() != 0 {
            return Err(ScrError::InvalidWeights("trailing bytes before digest".into()));
        }
        let mut networks = networks.into_iter();
        let mut next = || Network::new(networks.next().unwrap());
        let encoder = next()?;
        let decoder = next()?;
        let hyper_encoder = next()?;
        let hyper_decoder = next()?;
        let mut head = next()?.layers().to_vec();
        if head.len() != 1 {
            return Err(ScrError::InvalidWeights("importance head must be one layer".into()));
        }
        let w = WeightContainer::new(
            encoder,
            decoder,
            hyper_encoder,
            hyper_decoder,
            head.pop().unwrap(),
            rate_vectors,
            hyper_sigma,
        )?;
        debug_assert_eq!(w.id.0, stored);
        Ok(w)
    }
}
