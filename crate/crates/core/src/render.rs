//! Frame strips and grids as 8-bit RGB rasters.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_rgba(&self) -> Vec<u8> {
        self.data.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }
}

/// Maps `[-1, 1]` to `0..=255`, rounding to nearest.
pub fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Frames `frames` of a clip `(c, T, H, W)` laid out left to right.
pub fn frame_strip(clip: &Tensor<f32>, frames: std::ops::Range<usize>) -> Result<RgbImage> {
    let s = clip.shape();
    if s.len() != 4 || !(s[0] == 1 || s[0] == 3) || frames.end > s[1] || frames.is_empty() {
        return shape_err(format!("cannot draw frames {frames:?} of clip {s:?}"));
    }
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let mut img = RgbImage::new(w * frames.len(), h);
    let d = clip.data();
    for (col, f) in frames.enumerate() {
        for y in 0..h {
            for x in 0..w {
                let o = ((y * img.width) + col * w + x) * 3;
                for k in 0..3 {
                    let ch = if c == 1 { 0 } else { k };
                    img.data[o + k] = to_byte(d[((ch * t + f) * h + y) * w + x]);
                }
            }
        }
    }
    Ok(img)
}

/// Stacks equally wide images top to bottom.
pub fn stack_rows(rows: &[RgbImage]) -> Result<RgbImage> {
    let Some(first) = rows.first() else {
        return shape_err("no rows to stack");
    };
    if rows.iter().any(|r| r.width != first.width) {
        return shape_err("rows differ in width");
    }
    Ok(RgbImage {
        width: first.width,
        height: rows.iter().map(|r| r.height).sum(),
        data: rows.iter().flat_map(|r| r.data.iter().copied()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_layout_and_grey_expansion() {
        let mut data = vec![0f32; 16 * 2 * 2];
        for f in 0..16 {
            for i in 0..4 {
                data[f * 4 + i] = -1.0 + f as f32 * 2.0 / 15.0;
            }
        }
        let clip = Tensor::from_vec(&[1, 16, 2, 2], data);
        let s = frame_strip(&clip, 0..16).unwrap();
        assert_eq!((s.width, s.height), (32, 2));
        assert_eq!(s.pixel(0, 0), [0, 0, 0]);
        assert_eq!(s.pixel(31, 1), [255, 255, 255]);
        let inner = frame_strip(&clip, 1..15).unwrap();
        assert_eq!(inner.width, 28);
        assert_eq!(inner.pixel(0, 0), s.pixel(2, 0));
        let g = stack_rows(&[inner.clone(), inner]).unwrap();
        assert_eq!(g.height, 4);
        assert_eq!(g.to_rgba().len(), 28 * 4 * 4);
        assert!(frame_strip(&clip, 0..17).is_err());
    }

    #[test]
    fn byte_mapping() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(to_byte(7.0), 255);
    }
}
