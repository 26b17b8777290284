//! Core image and geometry types shared by every pipeline stage.
//!
//! Coordinate convention, fixed globally: pixel (x, y) means column x,
//! row y, with x increasing rightward and y downward. Pixel centers sit
//! at integer coordinates, so the pixel (i, j) covers the square
//! [i-0.5, i+0.5] x [j-0.5, j+0.5].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate unit carried by a [`Point2D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// Camera pixels (possibly sub-pixel).
    #[default]
    Pixels,
    /// Nanometers at the sample plane.
    Nanometers,
    /// Micrometers at the sample plane.
    Micrometers,
}

/// A 2D point with an explicit coordinate unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub unit: Unit,
}

impl Point2D {
    /// Point in pixel coordinates.
    pub fn px(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            unit: Unit::Pixels,
        }
    }

    /// Point in nanometers.
    pub fn nm(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            unit: Unit::Nanometers,
        }
    }

    /// Euclidean distance to another point of the same unit.
    pub fn distance_to(&self, other: &Point2D) -> f64 {
        debug_assert_eq!(self.unit, other.unit);
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Real-space size of one camera pixel at the sample plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScale {
    nanometers_per_pixel: f64,
}

impl PixelScale {
    pub fn new(nanometers_per_pixel: f64) -> Result<Self> {
        if !nanometers_per_pixel.is_finite() || nanometers_per_pixel <= 0.0 {
            return Err(Error::Parameter(format!(
                "pixel scale must be finite and positive, got {nanometers_per_pixel}"
            )));
        }
        Ok(Self {
            nanometers_per_pixel,
        })
    }

    pub fn nanometers_per_pixel(&self) -> f64 {
        self.nanometers_per_pixel
    }
}

/// Rectangular pixel region, top-left inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl RegionOfInterest {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    /// Whether this region lies fully inside an image of the given size.
    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x0 + self.width <= width
            && self.y0 + self.height <= height
    }

    /// Whether a (sub-pixel) point lies within the region's pixel extent.
    pub fn contains_point(&self, p: &Point2D) -> bool {
        p.x >= self.x0 as f64 - 0.5
            && p.x <= (self.x0 + self.width - 1) as f64 + 0.5
            && p.y >= self.y0 as f64 - 0.5
            && p.y <= (self.y0 + self.height - 1) as f64 + 0.5
    }

    /// Whether `other` lies fully inside this region.
    pub fn contains_roi(&self, other: &RegionOfInterest) -> bool {
        other.x0 >= self.x0
            && other.y0 >= self.y0
            && other.x0 + other.width <= self.x0 + self.width
            && other.y0 + other.height <= self.y0 + self.height
    }
}

/// Immutable 2D grid of non-negative photon counts.
///
/// Counts are stored as `f64` so filtered images reuse the same type;
/// file I/O enforces the integer range. All transforms return new images.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    counts: Vec<f64>,
}

impl Image {
    /// Build an image from row-major counts. Counts must be finite and >= 0.
    pub fn from_counts(width: usize, height: usize, counts: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if counts.len() != width * height {
            return Err(Error::Parameter(format!(
                "count buffer length {} does not match {width}x{height}",
                counts.len()
            )));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Parameter(
                "image counts must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    /// All-zero image of the given size.
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::from_counts(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Count at column x, row y. Panics if out of bounds.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.counts[y * self.width + x]
    }

    /// Row-major count buffer.
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// One image row.
    pub fn row(&self, y: usize) -> &[f64] {
        &self.counts[y * self.width..(y + 1) * self.width]
    }

    /// The region covering the whole image.
    pub fn full_roi(&self) -> RegionOfInterest {
        RegionOfInterest::new(0, 0, self.width, self.height)
    }

    /// Copy of the sub-image under `roi`. The parent is unchanged.
    pub fn crop(&self, roi: &RegionOfInterest) -> Result<Image> {
        if !roi.fits_in(self.width, self.height) {
            return Err(Error::Bounds(format!(
                "roi {roi:?} does not fit in {}x{} image",
                self.width, self.height
            )));
        }
        let mut counts = Vec::with_capacity(roi.width * roi.height);
        for y in roi.y0..roi.y0 + roi.height {
            let row = &self.counts[y * self.width + roi.x0..y * self.width + roi.x0 + roi.width];
            counts.extend_from_slice(row);
        }
        Ok(Image {
            width: roi.width,
            height: roi.height,
            counts,
        })
    }

    /// Bilinear sample at a sub-pixel location; `None` outside the image.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}

/// Free crop function mirroring [`Image::crop`].
pub fn crop(image: &Image, roi: &RegionOfInterest) -> Result<Image> {
    image.crop(roi)
}

/// Rotate image content by `angle_deg` about the image center, resampling
/// with bilinear interpolation. Output pixels whose source falls outside
/// the input are set to zero.
///
/// Positive angles rotate content from the +x axis toward the +y axis
/// (y points down). A zero angle returns a bit-exact copy.
pub fn rotate_about_center(image: &Image, angle_deg: f64) -> Image {
    if angle_deg == 0.0 {
        return image.clone();
    }
    let w = image.width();
    let h = image.height();
    let cx = (w - 1) as f64 / 2.0;
    let cy = (h - 1) as f64 / 2.0;
    let theta = angle_deg.to_radians();
    // Inverse map: source = R(-theta) * (dst - c) + c.
    let (sin_t, cos_t) = theta.sin_cos();
    let mut counts = vec![0.0; w * h];
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let sx = cos_t * dx + sin_t * dy + cx;
            let sy = -sin_t * dx + cos_t * dy + cy;
            if let Some(v) = image.sample_bilinear(sx, sy) {
                counts[y * w + x] = v;
            }
        }
    }
    Image {
        width: w,
        height: h,
        counts,
    }
}

/// Forward-map a point through the same rotation [`rotate_about_center`]
/// applies to image content: where the feature at `p` lands after rotation.
pub fn rotate_point_about_center(
    p: &Point2D,
    width: usize,
    height: usize,
    angle_deg: f64,
) -> Point2D {
    let cx = (width - 1) as f64 / 2.0;
    let cy = (height - 1) as f64 / 2.0;
    let theta = angle_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let dx = p.x - cx;
    let dy = p.y - cy;
    Point2D {
        x: cos_t * dx - sin_t * dy + cx,
        y: sin_t * dx + cos_t * dy + cy,
        unit: p.unit,
    }
}
