use crate::error::{Error, Result};
use crate::imgio::ColorImage;

/// Single-sample activation tensor, channel-major (`c`, then rows, then
/// columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::contract(
                "nets",
                format!("{} values for a {channels}x{height}x{width} tensor", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Image as a 3-channel tensor in [0, 1].
    pub fn from_image(img: &ColorImage) -> Self {
        Self {
            channels: 3,
            height: img.height,
            width: img.width,
            data: img.to_planar(),
        }
    }

    /// Stacks extra planes (e.g. a depth channel) after the existing ones.
    pub fn with_planes(mut self, planes: &[f64]) -> Result<Self> {
        if !planes.len().is_multiple_of(self.plane_len()) {
            return Err(Error::contract("nets", "extra planes do not match the tensor size"));
        }
        self.channels += planes.len() / self.plane_len();
        self.data.extend_from_slice(planes);
        Ok(self)
    }

    /// Clamps to [0, 1] and converts a 3-channel tensor to an image.
    pub fn to_image(&self) -> Result<ColorImage> {
        if self.channels != 3 {
            return Err(Error::contract(
                "nets",
                format!("{}-channel tensor is not an image", self.channels),
            ));
        }
        let clamped: Vec<f64> = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ColorImage::from_planar(self.width, self.height, &clamped)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
