//! Dense rank-4 activations in batch, row, column, channel order.
//!
//! Channels are the fastest-varying axis, so a pixel's channel vector is a
//! contiguous slice and a contiguous channel range of a pixel is a sub-slice.
//! The cascade executor relies on that to carve the expanded tensor into
//! channel groups without copying strided data.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(batch: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        let dims = [batch, height, width, channels];
        if dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        Ok(Self {
            batch,
            height,
            width,
            channels,
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.height, self.width, self.channels]
    }

    pub fn numel(&self) -> usize {
        self.batch * self.height * self.width * self.channels
    }

    /// Pixels per image.
    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn offset(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        ((b * self.height + y) * self.width + x) * self.channels + c
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Self { channels, ..*self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.batch, self.height, self.width, self.channels
        )
    }
}

impl TryFrom<[usize; 4]> for Shape {
    type Error = Error;

    fn try_from(d: [usize; 4]) -> Result<Self> {
        Shape::new(d[0], d[1], d[2], d[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Tensor with every element equal to `fill`.
    pub fn new(dims: [usize; 4], fill: f32) -> Result<Self> {
        let shape = Shape::try_from(dims)?;
        Ok(Self::filled(shape, fill))
    }

    pub fn filled(shape: Shape, fill: f32) -> Self {
        Self {
            shape,
            data: vec![fill; shape.numel()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Format(format!(
                "{} values supplied for shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    /// I.i.d. normal samples drawn in flat-index order.
    pub fn random_gaussian(
        dims: [usize; 4],
        rng: &mut Rng,
        mean: f32,
        stddev: f32,
    ) -> Result<Self> {
        if !(stddev >= 0.0) || !stddev.is_finite() {
            return Err(Error::param(
                "stddev",
                format!("{stddev} is not a finite value >= 0"),
            ));
        }
        let shape = Shape::try_from(dims)?;
        let data = (0..shape.numel())
            .map(|_| rng.gaussian_f32(mean, stddev))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, b: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.shape.offset(b, y, x, c)]
    }

    pub fn set(&mut self, b: usize, y: usize, x: usize, c: usize, value: f32) {
        let i = self.shape.offset(b, y, x, c);
        self.data[i] = value;
    }

    /// Channel vector of one pixel.
    pub fn pixel(&self, b: usize, y: usize, x: usize) -> &[f32] {
        let start = self.shape.offset(b, y, x, 0);
        &self.data[start..start + self.shape.channels]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Size in bytes when stored with `bytes_per_element` per value.
    pub fn bytes(&self, bytes_per_element: usize) -> usize {
        self.numel() * bytes_per_element
    }
}

/// Largest elementwise `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn max_abs_rel_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            expected: a.shape,
            found: b.shape,
        });
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            (x - y).abs() / x.abs().max(y.abs()).max(1e-12)
        })
        .fold(0.0, f64::max))
}
