//! Dense containers for activation maps, binary masks and distance fields.
//!
//! All containers are row-major. [`Tensor3`] stores `(row, col, channel)` with
//! the channel index varying fastest, so one pixel's channel vector is a
//! contiguous slice.

use crate::error::{Error, Result};

/// A dense `height × width × channels` field of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    /// Builds a tensor from row-major data, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Internal constructor for kernels whose output is finite by construction.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Sets a single entry. Non-finite values are rejected.
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid("non-finite value"));
        }
        let idx = (row * self.width + col) * self.channels + ch;
        self.data[idx] = value;
        Ok(())
    }

    /// The channel vector at one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Iterates pixel channel vectors in row-major order.
    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels.max(1))
    }

    /// Returns a copy multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Extracts one channel as a `height × width × 1` tensor.
    pub fn channel(&self, ch: usize) -> Result<Self> {
        if ch >= self.channels {
            return Err(Error::OutOfRange {
                index: ch,
                len: self.channels,
            });
        }
        let data = self.pixels().map(|p| p[ch]).collect();
        Ok(Self::from_raw(self.height, self.width, 1, data))
    }
}

/// Concatenates tensors along the channel axis, preserving list order.
pub fn concat_channels(parts: &[&Tensor3]) -> Result<Tensor3> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("cannot concatenate an empty list of tensors"))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = parts.iter().find(|t| t.height != h || t.width != w) {
        return Err(Error::shape(format!(
            "spatial dims {}x{} differ from {h}x{w}",
            bad.height, bad.width
        )));
    }
    let total: usize = parts.iter().map(|t| t.channels).sum();
    let mut data = Vec::with_capacity(h * w * total);
    for px in 0..h * w {
        for t in parts {
            data.extend_from_slice(&t.data[px * t.channels..(px + 1) * t.channels]);
        }
    }
    Ok(Tensor3::from_raw(h, w, total, data))
}

/// A binary `height × width` mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask2 {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask2 {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(format!(
                "mask length {} != {height}x{width}",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn intersects(&self, other: &Mask2) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }

    /// In-place union with a mask of the same size.
    pub fn union_with(&mut self, other: &Mask2) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// In-place removal of every pixel set in `other`.
    pub fn subtract(&mut self, other: &Mask2) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !*b;
        }
    }

    /// Shifts the mask by `(dy, dx)` pixels; pixels leaving the frame are dropped.
    pub fn shifted(&self, dy: isize, dx: isize) -> Self {
        let mut out = Self::empty(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.get(r, c) {
                    continue;
                }
                let (nr, nc) = (r as isize + dy, c as isize + dx);
                if nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width {
                    out.set(nr as usize, nc as usize, true);
                }
            }
        }
        out
    }

    /// Bounding box `(row_min, row_max, col_min, col_max)` inclusive, or `None` when empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bb = Some(match bb {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bb
    }
}

/// A non-negative scalar field, e.g. the output of a distance transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Field2 {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "field length {} != {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "field values must be finite and non-negative",
            ));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Sum of the field over the pixels set in `mask`.
    pub fn masked_sum(&self, mask: &Mask2) -> Result<f64> {
        if mask.dims() != (self.height, self.width) {
            return Err(Error::shape(format!(
                "mask {}x{} vs field {}x{}",
                mask.height(),
                mask.width(),
                self.height,
                self.width
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(mask.bits())
            .filter(|(_, b)| **b)
            .map(|(v, _)| *v)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nan() {
        assert!(Tensor3::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Tensor3::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Tensor3::new(1, 1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn concat_single_is_identity() {
        let a = Tensor3::new(2, 3, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_layout() {
        let a = Tensor3::new(2, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        let b = Tensor3::new(2, 2, 3, (100..112).map(|v| v as f32).collect()).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (2, 2, 5));
        for r in 0..2 {
            for col in 0..2 {
                assert_eq!(c.get(r, col, 2), b.get(r, col, 0));
                assert_eq!(c.get(r, col, 1), a.get(r, col, 1));
            }
        }
    }

    #[test]
    fn concat_rejects_empty_and_mismatch() {
        assert!(matches!(
            concat_channels(&[]),
            Err(Error::InvalidArgument(_))
        ));
        let a = Tensor3::zeros(2, 2, 1);
        let b = Tensor3::zeros(2, 3, 1);
        assert!(matches!(
            concat_channels(&[&a, &b]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn mask_shift_drops_out_of_frame() {
        let m = Mask2::from_fn(3, 3, |r, c| r == 1 && c == 2);
        assert!(m.shifted(0, 1).is_empty());
        assert!(m.shifted(1, -2).get(2, 0));
    }

    #[test]
    fn field_rejects_negative() {
        assert!(Field2::new(1, 2, vec![0.0, -1.0]).is_err());
    }
}
