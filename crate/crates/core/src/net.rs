//! Forward-only convolutional networks for the analysis, synthesis and
//! hyper transforms.
//!
//! Weights are stored as `f32` and widened to `f64`. Every output element is
//! accumulated in `f64` over `(input channel, kernel row, kernel column)` in
//! that order and the bias is added last, so results do not depend on how
//! the work is split across threads.

use rayon::prelude::*;

use crate::error::{Result, ScrError};
use crate::tensor::{LatentTensor, Shape};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Plain strided convolution.
    Conv,
    /// Nearest-neighbour 2x upsampling followed by a stride-1 convolution.
    UpConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu,
    Clip01,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Clip01 => x.clamp(0.0, 1.0),
        }
    }
}

/// One convolution layer and its activation.
#[derive(Debug, Clone)]
pub struct ConvLayerParams {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub activation: Activation,
    /// `(out, in, kh, kw)` row-major.
    kernel: Vec<f32>,
    bias: Vec<f32>,
    kernel_f64: Vec<f64>,
}

impl PartialEq for ConvLayerParams {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.in_channels == other.in_channels
            && self.out_channels == other.out_channels
            && self.kernel_h == other.kernel_h
            && self.kernel_w == other.kernel_w
            && self.stride == other.stride
            && self.padding == other.padding
            && self.activation == other.activation
            && self
                .kernel
                .iter()
                .map(|v| v.to_bits())
                .eq(other.kernel.iter().map(|v| v.to_bits()))
            && self
                .bias
                .iter()
                .map(|v| v.to_bits())
                .eq(other.bias.iter().map(|v| v.to_bits()))
    }
}

impl ConvLayerParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
        kernel: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
            return Err(ScrError::InvalidWeights(
                "layer dimensions and stride must be positive".into(),
            ));
        }
        if kind == LayerKind::UpConv && stride != 1 {
            return Err(ScrError::InvalidWeights("upsampling layers use stride 1".into()));
        }
        let expected = out_channels * in_channels * kernel_h * kernel_w;
        if kernel.len() != expected || bias.len() != out_channels {
            return Err(ScrError::InvalidWeights(format!(
                "kernel/bias sizes {}/{} do not match {out_channels}x{in_channels}x{kernel_h}x{kernel_w}",
                kernel.len(),
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ScrError::InvalidWeights("non-finite weight".into()));
        }
        let kernel_f64 = kernel.iter().map(|&v| f64::from(v)).collect();
        Ok(ConvLayerParams {
            kind,
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            activation,
            kernel,
            bias,
            kernel_f64,
        })
    }

    pub fn kernel(&self) -> &[f32] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// Spatial downsampling factor (upsampling layers report 1).
    pub fn downsampling(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.stride,
            LayerKind::UpConv => 1,
        }
    }

    fn conv_geometry(&self, size: usize, k: usize) -> Result<(usize, usize)> {
        match self.padding {
            Padding::Same => {
                let out = size.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + k).saturating_sub(size);
                Ok((out, total / 2))
            }
            Padding::Valid => {
                if size < k {
                    return Err(ScrError::ShapeMismatch {
                        expected: vec![k],
                        actual: vec![size],
                    });
                }
                Ok(((size - k) / self.stride + 1, 0))
            }
        }
    }

    /// Output shape for an input of `shape`.
    pub fn output_shape(&self, shape: Shape) -> Result<Shape> {
        if shape.channels != self.in_channels {
            return Err(ScrError::ShapeMismatch {
                expected: vec![self.in_channels],
                actual: vec![shape.channels],
            });
        }
        let (h, w) = match self.kind {
            LayerKind::Conv => (shape.height, shape.width),
            LayerKind::UpConv => (shape.height * 2, shape.width * 2),
        };
        let (oh, _) = self.conv_geometry(h, self.kernel_h)?;
        let (ow, _) = self.conv_geometry(w, self.kernel_w)?;
        Ok(Shape::new(self.out_channels, oh, ow))
    }
}

fn upsample_nearest(input: &LatentTensor) -> LatentTensor {
    let s = input.shape();
    let out_shape = Shape::new(s.channels, s.height * 2, s.width * 2);
    let mut data = Vec::with_capacity(out_shape.len());
    for c in 0..s.channels {
        let plane = input.channel(c);
        for y in 0..out_shape.height {
            let row = &plane[(y / 2) * s.width..(y / 2 + 1) * s.width];
            for &v in row {
                data.push(v);
                data.push(v);
            }
        }
    }
    LatentTensor::from_raw(out_shape, data)
}

/// Applies one layer (including upsampling and activation).
pub fn conv2d(input: &LatentTensor, layer: &ConvLayerParams) -> Result<LatentTensor> {
    let out_shape = layer.output_shape(input.shape())?;
    let upsampled;
    let src = match layer.kind {
        LayerKind::Conv => input,
        LayerKind::UpConv => {
            upsampled = upsample_nearest(input);
            &upsampled
        }
    };
    let s = src.shape();
    let (_, pad_y) = layer.conv_geometry(s.height, layer.kernel_h)?;
    let (_, pad_x) = layer.conv_geometry(s.width, layer.kernel_w)?;
    let (kh, kw, stride) = (layer.kernel_h, layer.kernel_w, layer.stride);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let per_out = layer.in_channels * kh * kw;

    // Valid output column range for each kernel column offset.
    let col_range = |kx: usize| -> (usize, usize) {
        let lo = pad_x.saturating_sub(kx).div_ceil(stride);
        let hi = if s.width + pad_x > kx {
            ((s.width + pad_x - kx - 1) / stride + 1).min(ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    };
    let cols: Vec<(usize, usize)> = (0..kw).map(col_range).collect();

    let mut data = vec![0.0f64; out_shape.len()];
    data.par_chunks_mut(oh * ow).enumerate().for_each(|(oc, out)| {
        let weights = &layer.kernel_f64[oc * per_out..(oc + 1) * per_out];
        for ic in 0..layer.in_channels {
            let plane = src.channel(ic);
            for ky in 0..kh {
                for (kx, &(x0, x1)) in cols.iter().enumerate() {
                    let w = weights[(ic * kh + ky) * kw + kx];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad_y as isize;
                        if iy < 0 || iy as usize >= s.height {
                            continue;
                        }
                        let row = &plane[iy as usize * s.width..(iy as usize + 1) * s.width];
                        let out_row = &mut out[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let base = x0 + kx - pad_x;
                            for (o, &v) in out_row[x0..x1].iter_mut().zip(&row[base..]) {
                                *o += w * v;
                            }
                        } else {
                            for (ox, o) in out_row.iter_mut().enumerate().take(x1).skip(x0) {
                                *o += w * row[ox * stride + kx - pad_x];
                            }
                        }
                    }
                }
            }
        }
        let b = f64::from(layer.bias[oc]);
        for o in out.iter_mut() {
            *o = layer.activation.apply(*o + b);
        }
    });
    LatentTensor::new(out_shape, data)
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<ConvLayerParams>,
}

impl Network {
    pub fn new(layers: Vec<ConvLayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(ScrError::InvalidWeights("empty network".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(ScrError::InvalidWeights(format!(
                    "layer chain mismatch: {} outputs feed {} inputs",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[ConvLayerParams] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    /// Product of the strides of downsampling layers.
    pub fn downsampling(&self) -> usize {
        self.layers.iter().map(|l| l.downsampling()).product()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.layers.iter().try_fold(input, |s, l| l.output_shape(s))
    }

    pub fn forward(&self, input: &LatentTensor) -> Result<LatentTensor> {
        self.forward_with_penultimate(input).map(|(out, _)| out)
    }

    /// Runs the stack and also returns the input to the last layer.
    pub fn forward_with_penultimate(&self, input: &LatentTensor) -> Result<(LatentTensor, LatentTensor)> {
        let (last, body) = self.layers.split_last().unwrap();
        let mut x = input.clone();
        for layer in body {
            x = conv2d(&x, layer)?;
        }
        let out = conv2d(&x, last)?;
        Ok((out, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::too_many_arguments)]
    fn layer(
        kind: LayerKind,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: Padding,
        kernel: Vec<f32>,
        bias: Vec<f32>,
    ) -> ConvLayerParams {
        ConvLayerParams::new(kind, cin, cout, k, k, stride, padding, Activation::None, kernel, bias).unwrap()
    }

    /// Direct definition, element by element.
    fn naive(input: &LatentTensor, l: &ConvLayerParams) -> Vec<f64> {
        let src = match l.kind {
            LayerKind::Conv => input.clone(),
            LayerKind::UpConv => upsample_nearest(input),
        };
        let s = src.shape();
        let out = l.output_shape(input.shape()).unwrap();
        let (_, py) = l.conv_geometry(s.height, l.kernel_h).unwrap();
        let (_, px) = l.conv_geometry(s.width, l.kernel_w).unwrap();
        let mut res = Vec::new();
        for oc in 0..out.channels {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    let mut acc = 0.0;
                    for ic in 0..l.in_channels {
                        for ky in 0..l.kernel_h {
                            for kx in 0..l.kernel_w {
                                let iy = (oy * l.stride + ky) as isize - py as isize;
                                let ix = (ox * l.stride + kx) as isize - px as isize;
                                if iy < 0 || ix < 0 || iy as usize >= s.height || ix as usize >= s.width {
                                    continue;
                                }
                                let w = l.kernel()[((oc * l.in_channels + ic) * l.kernel_h + ky) * l.kernel_w + kx];
                                acc += f64::from(w) * src.get(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    res.push(l.activation.apply(acc + f64::from(l.bias()[oc])));
                }
            }
        }
        res
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        let mut x = seed.wrapping_mul(2_654_435_761).wrapping_add(1);
        (0..n)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                (x % 2001) as f32 / 1000.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_naive_convolution() {
        let input = LatentTensor::new(
            Shape::new(3, 7, 9),
            pseudo(3 * 7 * 9, 1).into_iter().map(f64::from).collect(),
        )
        .unwrap();
        for (kind, k, stride, padding) in [
            (LayerKind::Conv, 5, 2, Padding::Same),
            (LayerKind::Conv, 3, 1, Padding::Same),
            (LayerKind::Conv, 3, 2, Padding::Valid),
            (LayerKind::Conv, 1, 1, Padding::Same),
            (LayerKind::UpConv, 5, 1, Padding::Same),
        ] {
            let l = layer(kind, 3, 4, k, stride, padding, pseudo(4 * 3 * k * k, 7), pseudo(4, 9));
            let fast = conv2d(&input, &l).unwrap();
            assert_eq!(fast.data(), naive(&input, &l).as_slice(), "{kind:?} k{k} s{stride}");
        }
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let l = layer(
            LayerKind::Conv,
            2,
            3,
            5,
            2,
            Padding::Same,
            vec![0.0; 150],
            vec![0.5, -1.0, 2.0],
        );
        let out = conv2d(&LatentTensor::filled(Shape::new(2, 8, 8), 3.0), &l).unwrap();
        assert_eq!(out.shape(), Shape::new(3, 4, 4));
        assert!(out.channel(1).iter().all(|&v| v == -1.0));
    }

    #[test]
    fn shape_law() {
        let mk = |cin, cout| {
            layer(
                LayerKind::Conv,
                cin,
                cout,
                5,
                2,
                Padding::Same,
                vec![0.0; cin * cout * 25],
                vec![0.0; cout],
            )
        };
        let net = Network::new(vec![mk(3, 16), mk(16, 16), mk(16, 32)]).unwrap();
        assert_eq!(net.output_shape(Shape::new(3, 64, 64)).unwrap(), Shape::new(32, 8, 8));
        assert_eq!(net.downsampling(), 8);
    }

    #[test]
    fn rejects_bad_layers() {
        assert!(ConvLayerParams::new(
            LayerKind::Conv,
            2,
            2,
            3,
            3,
            1,
            Padding::Same,
            Activation::None,
            vec![0.0; 17],
            vec![0.0; 2]
        )
        .is_err());
        assert!(ConvLayerParams::new(
            LayerKind::UpConv,
            2,
            2,
            1,
            1,
            2,
            Padding::Same,
            Activation::None,
            vec![0.0; 4],
            vec![0.0; 2]
        )
        .is_err());
        let a = layer(LayerKind::Conv, 2, 3, 1, 1, Padding::Same, vec![0.0; 6], vec![0.0; 3]);
        let b = layer(LayerKind::Conv, 2, 3, 1, 1, Padding::Same, vec![0.0; 6], vec![0.0; 3]);
        assert!(Network::new(vec![a, b]).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.2);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Clip01.apply(1.5), 1.0);
    }
}
