//! Image/state grids.
//!
//! A [`PixelGrid`] holds the per-pixel state of an episode: `channels` planes
//! of `height x width` float intensities, stored plane-contiguous
//! (`data[(c*H + y)*W + x]`). Intensity grids keep every value in `[0, 1]`;
//! grids produced by the CIELab conversion are tagged [`PixelSpace::Lab`] and
//! are exempt from that range.

use crate::error::{PixelRlError, Result};

/// Value space of a grid. Intensity grids are clamped to `[0, 1]`; Lab grids
/// store L in `[0, 100]` and unbounded a/b components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelSpace {
    Intensity,
    Lab,
}

/// H x W x C float image, the per-pixel state `s` of the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    height: usize,
    width: usize,
    channels: usize,
    space: PixelSpace,
    data: Vec<f32>,
}

/// Clamp an intensity to `[0, 1]`.
#[inline]
pub fn clip01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

impl PixelGrid {
    /// Build an intensity grid, validating shape, channel count and range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(PixelRlError::InvalidGrid(format!(
                "empty grid {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(PixelRlError::InvalidGrid(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(PixelRlError::InvalidGrid(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(PixelRlError::InvalidGrid(
                "intensity values must be finite and in [0,1]".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            space: PixelSpace::Intensity,
            data,
        })
    }

    /// Build a Lab-space grid (exempt from the `[0,1]` range invariant).
    pub fn new_lab(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(PixelRlError::InvalidGrid(format!(
                "data length {} does not match {height}x{width}x3",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels: 3,
            space: PixelSpace::Lab,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("constant grid")
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, 0.0)
    }

    /// Fill from a function of (channel, y, x).
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data).expect("from_fn grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> PixelSpace {
        self.space
    }

    /// Number of pixels N = height * width.
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// One contiguous channel plane.
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Same shape as `other`?
    pub fn same_shape(&self, other: &PixelGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Collapse RGB to a single luminance plane (0.299 R + 0.587 G + 0.114 B).
    /// Gray grids are returned unchanged.
    pub fn to_gray(&self) -> PixelGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.pixel_count();
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let y = 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64;
            data.push(clip01(y));
        }
        PixelGrid::new(self.height, self.width, 1, data).expect("gray grid")
    }

    /// Largest absolute per-element difference between two same-shaped grids.
    pub fn max_abs_diff(&self, other: &PixelGrid) -> f32 {
        assert!(self.same_shape(other), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}
