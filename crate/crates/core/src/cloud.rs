//! Point clouds and pixel-aligned organized point maps.

use crate::error::CoreError;
use crate::math::{Pt3, RigidTransform};
use crate::Result;

/// Unstructured point cloud with optional per-point confidence in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Pt3>,
    confidence: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Pt3>) -> Result<Self> {
        Self::with_confidence(points, None)
    }

    pub fn with_confidence(points: Vec<Pt3>, confidence: Option<Vec<f64>>) -> Result<Self> {
        for p in &points {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(CoreError::InvalidParameter(
                    "point cloud with non-finite coordinate".into(),
                ));
            }
        }
        if let Some(c) = &confidence {
            if c.len() != points.len() {
                return Err(CoreError::InvalidParameter(format!(
                    "{} confidences for {} points",
                    c.len(),
                    points.len()
                )));
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(CoreError::InvalidParameter(
                    "confidence outside [0,1]".into(),
                ));
            }
        }
        Ok(Self { points, confidence })
    }

    pub fn points(&self) -> &[Pt3] {
        &self.points
    }

    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            confidence: self.confidence.clone(),
        }
    }

    pub fn centroid(&self) -> Result<Pt3> {
        if self.points.is_empty() {
            return Err(CoreError::EmptyInput("point cloud"));
        }
        let sum = self
            .points
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Ok(Pt3::from(sum / self.points.len() as f64))
    }
}

/// H x W grid of 3D points with confidences, pixel-aligned with an image.
///
/// Invalid pixels always carry confidence 0; this is normalized at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedPointMap {
    width: usize,
    height: usize,
    points: Vec<Pt3>,
    confidence: Vec<f64>,
    validity: Vec<bool>,
}

impl OrganizedPointMap {
    /// Build a map from row-major per-pixel data.
    ///
    /// All three vectors must have `width * height` entries. Confidence of
    /// invalid pixels is forced to zero.
    pub fn new(
        width: usize,
        height: usize,
        points: Vec<Pt3>,
        mut confidence: Vec<f64>,
        validity: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if points.len() != n || confidence.len() != n || validity.len() != n {
            return Err(CoreError::InvalidParameter(format!(
                "organized map buffers must hold {n} entries"
            )));
        }
        for (i, valid) in validity.iter().enumerate() {
            if *valid && !points[i].coords.iter().all(|c| c.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "valid pixel {i} has non-finite coordinates"
                )));
            }
            if !valid {
                confidence[i] = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            points,
            confidence,
            validity,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn point(&self, x: usize, y: usize) -> Pt3 {
        self.points[self.index(x, y)]
    }

    pub fn confidence_at(&self, x: usize, y: usize) -> f64 {
        self.confidence[self.index(x, y)]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.validity[self.index(x, y)]
    }

    pub fn points_raw(&self) -> &[Pt3] {
        &self.points
    }

    pub fn confidence_raw(&self) -> &[f64] {
        &self.confidence
    }

    pub fn validity_raw(&self) -> &[bool] {
        &self.validity
    }

    /// All valid points as a cloud, row-major, with confidences.
    pub fn to_cloud(&self) -> PointCloud {
        let mut pts = Vec::new();
        let mut conf = Vec::new();
        for i in 0..self.points.len() {
            if self.validity[i] {
                pts.push(self.points[i]);
                conf.push(self.confidence[i]);
            }
        }
        PointCloud::with_confidence(pts, Some(conf)).expect("valid by construction")
    }
}
