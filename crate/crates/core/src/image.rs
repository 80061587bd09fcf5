//! 8-bit RGB images.

use crate::error::CoreError;
use crate::Result;

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(CoreError::InvalidParameter(format!(
                "rgb data length {} != {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
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

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Copy of the axis-aligned subrectangle.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<RgbImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(CoreError::InvalidParameter(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RgbImage::new(w, h, data)
    }

    /// Paste `src` with its top-left corner at `(x0, y0)`; must fit.
    pub fn blit(&mut self, src: &RgbImage, x0: usize, y0: usize) -> Result<()> {
        if x0 + src.width > self.width || y0 + src.height > self.height {
            return Err(CoreError::InvalidParameter(
                "blit target outside canvas".into(),
            ));
        }
        for y in 0..src.height {
            let d = ((y0 + y) * self.width + x0) * 3;
            let s = y * src.width * 3;
            self.data[d..d + src.width * 3].copy_from_slice(&src.data[s..s + src.width * 3]);
        }
        Ok(())
    }

    /// Nearest-neighbor rescale to `w` x `h`.
    pub fn resize_nearest(&self, w: usize, h: usize) -> RgbImage {
        assert!(w > 0 && h > 0);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let sy = (y * self.height) / h;
            for x in 0..w {
                let sx = (x * self.width) / w;
                let c = self.get(sx, sy);
                data.extend_from_slice(&c);
            }
        }
        RgbImage {
            width: w,
            height: h,
            data,
        }
    }
}
