//! Binary organized point maps.
//!
//! Layout: magic `PMAP`, u32 version (1), u32 width, u32 height, then
//! width*height little-endian records of four f32 (x, y, z, confidence)
//! in row-major order. NaN coordinates mark invalid pixels.

use std::path::Path;

use scenefit_core::cloud::OrganizedPointMap;
use scenefit_core::math::Pt3;

use crate::error::IoError;
use crate::Result;

const MAGIC: [u8; 4] = *b"PMAP";
const VERSION: u32 = 1;

pub fn save_pointmap(path: &Path, pm: &OrganizedPointMap) -> Result<()> {
    let mut out = Vec::with_capacity(16 + pm.width() * pm.height() * 16);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(pm.width() as u32).to_le_bytes());
    out.extend_from_slice(&(pm.height() as u32).to_le_bytes());
    for y in 0..pm.height() {
        for x in 0..pm.width() {
            if pm.is_valid(x, y) {
                let p = pm.point(x, y);
                out.extend_from_slice(&(p.x as f32).to_le_bytes());
                out.extend_from_slice(&(p.y as f32).to_le_bytes());
                out.extend_from_slice(&(p.z as f32).to_le_bytes());
                out.extend_from_slice(&(pm.confidence_at(x, y) as f32).to_le_bytes());
            } else {
                for _ in 0..3 {
                    out.extend_from_slice(&f32::NAN.to_le_bytes());
                }
                out.extend_from_slice(&0f32.to_le_bytes());
            }
        }
    }
    crate::atomic_write(path, &out)
}

pub fn load_pointmap(path: &Path) -> Result<OrganizedPointMap> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 {
        return Err(IoError::TruncatedPayload {
            needed: 16,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(IoError::BadMagic {
            expected: MAGIC,
            got: magic,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(IoError::BadVersion(version));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let needed = 16 + width * height * 16;
    if bytes.len() < needed {
        return Err(IoError::TruncatedPayload {
            needed,
            got: bytes.len(),
        });
    }

    let n = width * height;
    let mut points = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    let mut validity = Vec::with_capacity(n);
    for i in 0..n {
        let at = 16 + i * 16;
        let x = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(bytes[at + 8..at + 12].try_into().unwrap()) as f64;
        let c = f32::from_le_bytes(bytes[at + 12..at + 16].try_into().unwrap()) as f64;
        let valid = x.is_finite() && y.is_finite() && z.is_finite();
        if valid {
            points.push(Pt3::new(x, y, z));
            confidence.push(c.clamp(0.0, 1.0));
        } else {
            points.push(Pt3::origin());
            confidence.push(0.0);
        }
        validity.push(valid);
    }
    OrganizedPointMap::new(width, height, points, confidence, validity).map_err(IoError::from)
}
