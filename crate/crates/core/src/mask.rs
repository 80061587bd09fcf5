//! Binary pixel masks and square-kernel morphology.

use crate::error::CoreError;
use crate::Result;

/// Per-pixel boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(CoreError::InvalidParameter(format!(
                "mask bits length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn shape_mismatch(&self, other: &BinaryMask) -> CoreError {
        CoreError::ShapeMismatch {
            expected_w: self.width,
            expected_h: self.height,
            got_w: other.width,
            got_h: other.height,
        }
    }

    /// Dilation with a (2r+1)x(2r+1) square kernel, separable two-pass.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let mut horiz = vec![false; self.bits.len()];
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            let out = &mut horiz[y * self.width..(y + 1) * self.width];
            for x in 0..self.width {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(self.width - 1);
                out[x] = row[lo..=hi].iter().any(|b| *b);
            }
        }
        let mut bits = vec![false; self.bits.len()];
        for y in 0..self.height {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(self.height - 1);
            for x in 0..self.width {
                bits[y * self.width + x] = (lo..=hi).any(|yy| horiz[yy * self.width + x]);
            }
        }
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Erosion with a (2r+1)x(2r+1) square kernel; pixels past the border
    /// count as background.
    pub fn erode(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let mut horiz = vec![false; self.bits.len()];
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            let out = &mut horiz[y * self.width..(y + 1) * self.width];
            for x in 0..self.width {
                if x < radius || x + radius >= self.width {
                    out[x] = false;
                } else {
                    out[x] = row[x - radius..=x + radius].iter().all(|b| *b);
                }
            }
        }
        let mut bits = vec![false; self.bits.len()];
        for y in 0..self.height {
            if y < radius || y + radius >= self.height {
                continue;
            }
            for x in 0..self.width {
                bits[y * self.width + x] =
                    (y - radius..=y + radius).all(|yy| horiz[yy * self.width + x]);
            }
        }
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Inner morphological boundary: set pixels with a background pixel in
    /// their 8-neighborhood (or on the image border).
    pub fn boundary(&self) -> BinaryMask {
        let eroded = self.erode(1);
        let bits = self
            .bits
            .iter()
            .zip(eroded.bits.iter())
            .map(|(a, b)| *a && !*b)
            .collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryMask {
        let height = rows.len();
        let width = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::new(width, height, bits).unwrap()
    }

    #[test]
    fn dilation_grows_square() {
        let m = from_rows(&["....", ".#..", "....", "...."]);
        let d = m.dilate(1);
        assert_eq!(d.count(), 9);
        assert!(d.get(0, 0) && d.get(2, 2) && !d.get(3, 3));
    }

    #[test]
    fn erosion_inverse_of_dilation_on_interior() {
        let m = from_rows(&["......", ".####.", ".####.", ".####.", "......"]);
        let opened = m.erode(1).dilate(1);
        // 3x4 block erodes to a 1x2 line, dilates back to the full block.
        assert_eq!(opened.count(), 12);
    }

    #[test]
    fn boundary_of_block() {
        let m = from_rows(&["#####", "#####", "#####"]);
        // Everything touches the border except nothing: 3 rows tall means
        // the middle row keeps only its end pixels after erosion.
        let b = m.boundary();
        assert_eq!(b.count(), 15 - 3);
    }
}
