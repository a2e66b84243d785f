//! Camera intrinsics, depth maps and the small raster types the pipeline
//! moves between modules.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Pinhole intrinsics for a calibrated camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Back-projects pixel `(u, v)` at `depth` meters into the camera frame.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::invalid(format!("depth must be positive, got {depth}")));
        }
        Ok(Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// Projects a camera-frame point to pixel coordinates; `None` behind the
    /// camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }
}

/// Dense per-pixel metric depth with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map; valid pixels must be finite and positive.
    pub fn new(width: u32, height: u32, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = (width as usize) * (height as usize);
        if values.len() != n || valid.len() != n {
            return Err(Error::invalid("depth buffer size mismatch"));
        }
        for (d, &ok) in values.iter().zip(&valid) {
            if ok && !(d.is_finite() && *d > 0.0) {
                return Err(Error::invalid("valid depth pixels must be finite and > 0"));
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// All-invalid map of the given size.
    pub fn empty(width: u32, height: u32) -> Self {
        let n = (width as usize) * (height as usize);
        Self {
            width,
            height,
            values: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Depth at an integer pixel, `None` when out of bounds or invalid.
    pub fn at(&self, u: u32, v: u32) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = self.index(u, v);
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Median over valid pixels, `None` if the mask is empty.
    pub fn median(&self) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .values
            .iter()
            .zip(&self.valid)
            .filter_map(|(&d, &ok)| ok.then_some(d))
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let n = vals.len();
        Some(if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        })
    }

    /// Scales every valid value by `s`.
    pub fn scaled_by(&self, s: f64) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|d| d * s).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray8 {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl ImageGray8 {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid("gray buffer size mismatch"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> u8 {
        self.pixels[v as usize * self.width as usize + u as usize]
    }
}

/// 8-bit RGB raster, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb8 {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl ImageRgb8 {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) * 3 {
            return Err(Error::invalid("rgb buffer size mismatch"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> [u8; 3] {
        let i = (v as usize * self.width as usize + u as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Luma conversion (BT.601 weights, rounded).
    pub fn to_gray(&self) -> ImageGray8 {
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| {
                (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8
            })
            .collect();
        ImageGray8 {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}
