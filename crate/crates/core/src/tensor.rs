//! Shape-checked latent tensors, binary masks, and the selection (gather)
//! and reshaping (scatter) operators between them.
//!
//! All tensors are laid out row-major in `(channel, row, column)` order. The
//! ordering of [`SelectedElements`] is the flattened index order of the
//! positions where the mask is set, so both ends of the codec agree on which
//! coded symbol belongs to which latent element.

use crate::error::{Result, ScrError};
use crate::rate::ChannelVector;

/// Dimensions of a 3D tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per channel plane.
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    fn dims(&self) -> Vec<usize> {
        vec![self.channels, self.height, self.width]
    }

    fn check_positive(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(ScrError::InvalidValue(format!(
                "tensor dimensions must be positive, got {:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

pub(crate) fn expect_shape(expected: Shape, actual: Shape) -> Result<()> {
    if expected != actual {
        return Err(ScrError::ShapeMismatch {
            expected: expected.dims(),
            actual: actual.dims(),
        });
    }
    Ok(())
}

/// A finite-valued `(C, H, W)` tensor of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.check_positive()?;
        if data.len() != shape.len() {
            return Err(ScrError::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ScrError::InvalidValue(format!(
                "non-finite value {} at index {i}",
                data[i]
            )));
        }
        Ok(LatentTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite());
        LatentTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds a tensor from data the caller guarantees to be finite and
    /// correctly sized.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        LatentTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Splits along the channel axis at `at`.
    pub fn split_channels(&self, at: usize) -> Result<(LatentTensor, LatentTensor)> {
        if at == 0 || at >= self.shape.channels {
            return Err(ScrError::InvalidValue(format!(
                "cannot split {} channels at {at}",
                self.shape.channels
            )));
        }
        let plane = self.shape.plane();
        let (a, b) = self.data.split_at(at * plane);
        let sa = Shape::new(at, self.shape.height, self.shape.width);
        let sb = Shape::new(self.shape.channels - at, self.shape.height, self.shape.width);
        Ok((
            LatentTensor::from_raw(sa, a.to_vec()),
            LatentTensor::from_raw(sb, b.to_vec()),
        ))
    }

    /// Element-wise product with a mask.
    pub fn masked(&self, mask: &BinaryMask) -> Result<LatentTensor> {
        expect_shape(self.shape, mask.shape())?;
        let data = self
            .data
            .iter()
            .zip(mask.bits())
            .map(|(&v, &b)| if b { v } else { 0.0 })
            .collect();
        Ok(LatentTensor::from_raw(self.shape, data))
    }

    /// Applies `f` to every element, rejecting non-finite results.
    pub fn try_map(&self, f: impl Fn(f64) -> f64) -> Result<LatentTensor> {
        LatentTensor::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// A `{0, 1}` mask with the same layout as a [`LatentTensor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Shape, bits: Vec<bool>) -> Result<Self> {
        shape.check_positive()?;
        if bits.len() != shape.len() {
            return Err(ScrError::LengthMismatch {
                expected: shape.len(),
                actual: bits.len(),
            });
        }
        Ok(BinaryMask { shape, bits })
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize) -> bool) -> Self {
        BinaryMask {
            shape,
            bits: (0..shape.len()).map(f).collect(),
        }
    }

    pub fn ones(shape: Shape) -> Self {
        BinaryMask {
            shape,
            bits: vec![true; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        BinaryMask {
            shape,
            bits: vec![false; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> bool {
        self.bits[self.shape.index(c, y, x)]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of set bits in channel `c`.
    pub fn channel_count(&self, c: usize) -> usize {
        let plane = self.shape.plane();
        self.bits[c * plane..(c + 1) * plane].iter().filter(|&&b| b).count()
    }
}

/// The gathered values at the set positions of a mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectedElements {
    values: Vec<f64>,
}

impl SelectedElements {
    pub fn new(values: Vec<f64>) -> Self {
        SelectedElements { values }
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Gathers `rep` at the positions where `mask` is set, in flattened
/// row-major order.
pub fn select(rep: &LatentTensor, mask: &BinaryMask) -> Result<SelectedElements> {
    expect_shape(rep.shape, mask.shape)?;
    let values = rep
        .data
        .iter()
        .zip(&mask.bits)
        .filter_map(|(&v, &b)| b.then_some(v))
        .collect();
    Ok(SelectedElements { values })
}

/// Scatters `selected` back to the set positions of `mask`; every other
/// position holds exactly `0.0`.
pub fn reshape_in_place(selected: &SelectedElements, mask: &BinaryMask) -> Result<LatentTensor> {
    let expected = mask.popcount();
    if selected.count() != expected {
        return Err(ScrError::LengthMismatch {
            expected,
            actual: selected.count(),
        });
    }
    if let Some(v) = selected.values.iter().find(|v| !v.is_finite()) {
        return Err(ScrError::InvalidValue(format!("non-finite selected value {v}")));
    }
    let mut values = selected.values.iter();
    let data = mask
        .bits
        .iter()
        .map(|&b| if b { *values.next().unwrap() } else { 0.0 })
        .collect();
    Ok(LatentTensor::from_raw(mask.shape, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Multiply,
    Divide,
}

/// Scales every element of channel `c` by `v[c]` (or `1 / v[c]`).
pub fn channelwise_scale(t: &LatentTensor, v: &ChannelVector, mode: ScaleMode) -> Result<LatentTensor> {
    if v.len() != t.channels() {
        return Err(ScrError::LengthMismatch {
            expected: t.channels(),
            actual: v.len(),
        });
    }
    if mode == ScaleMode::Divide {
        if let Some(c) = v.values().iter().position(|&s| s == 0.0) {
            return Err(ScrError::ZeroDivisor(c));
        }
    }
    let plane = t.shape.plane();
    let mut data = Vec::with_capacity(t.data.len());
    for (c, chunk) in t.data.chunks_exact(plane).enumerate() {
        let s = v.values()[c];
        match mode {
            ScaleMode::Multiply => data.extend(chunk.iter().map(|&x| x * s)),
            ScaleMode::Divide => data.extend(chunk.iter().map(|&x| x / s)),
        }
    }
    LatentTensor::new(t.shape, data)
}
