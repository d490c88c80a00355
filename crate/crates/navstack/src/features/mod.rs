//! The handcrafted half of the perception stack: FAST corners, image
//! pyramids, pyramidal Lucas-Kanade tracking and track lifecycle management
//! with persistent IDs.

mod fast;
mod lk;
mod pyramid;
mod tracks;

pub use fast::{fast_detect, FastParams, FAST_CIRCLE};
pub use lk::{lk_track, LkParams, LkStatus};
pub use pyramid::build_pyramid;
pub use tracks::{manage_tracks, IdCounter, Track, TrackSet, TrackState};

use crate::geometry::Vec2;

/// Minimum image side for detection and tracking.
pub const MIN_IMAGE_SIDE: usize = 16;
/// Border margin (the FAST circle radius) active track positions must keep.
pub const BORDER_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BadBufferLength { width: usize, height: usize, len: usize },
    #[error("{levels} pyramid levels would shrink {width}x{height} below the minimum size")]
    TooManyLevels { width: usize, height: usize, levels: usize },
    #[error("pyramids have different level structures")]
    PyramidMismatch,
    #[error("FAST arc length must be in [9, 12], got {0}")]
    BadArcLength(usize),
    #[error("FAST threshold must be at least 1")]
    BadThreshold,
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FeatureError> {
        if data.len() != width * height {
            return Err(FeatureError::BadBufferLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Integer sample with border clamping.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(cx, cy)
    }

    /// Bilinear sample with border clamping.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let ax = x - x0;
        let ay = y - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let p00 = self.get_clamped(x0, y0) as f64;
        let p10 = self.get_clamped(x0 + 1, y0) as f64;
        let p01 = self.get_clamped(x0, y0 + 1) as f64;
        let p11 = self.get_clamped(x0 + 1, y0 + 1) as f64;
        p00 * (1.0 - ax) * (1.0 - ay) + p10 * ax * (1.0 - ay) + p01 * (1.0 - ax) * ay + p11 * ax * ay
    }

    pub fn check_min_size(&self) -> Result<(), FeatureError> {
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(FeatureError::ImageTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Detected corner with a subpixel-capable position and a response score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Vec2,
    pub score: f64,
}

/// Coarse-to-fine image stack; level 0 is full resolution, each following
/// level is the floor-halved 2x2 block average of the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

impl ImagePyramid {
    pub(crate) fn from_levels(levels: Vec<GrayImage>) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GrayImage {
        &self.levels[i]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn same_structure(&self, other: &ImagePyramid) -> bool {
        self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| a.width() == b.width() && a.height() == b.height())
    }
}
