use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded 8-bit video, frame-major with interleaved channels: `(T, H, W, c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawVideo {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawVideo {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::Dataset(format!(
                "raw video buffer has {} bytes, expected {frames}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Channels(channels));
        }
        Ok(RawVideo {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    fn pixel(&self, t: usize, y: usize, x: usize, c: usize) -> u8 {
        self.data[((t * self.height + y) * self.width + x) * self.channels + c]
    }
}

/// Row `i` holds the overlap of output cell `i` with each input cell, for
/// resampling `n_in` cells onto `n_out` equal-width cells. Rows sum to 1.
pub fn area_resample_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = lo + scale;
            let mut row = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < n_in {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((j, overlap / scale));
                }
                j += 1;
            }
            row
        })
        .collect()
}

/// Centre-crops to a square on the shorter side, area-resamples to
/// `size × size`, optionally converts RGB to luma, and maps `[0, 255]` to
/// `[-1, 1]`. Output is `(c_out, T, size, size)`.
pub fn preprocess(raw: &RawVideo, size: usize, channels_out: usize) -> Result<Tensor<f32>> {
    if channels_out != 1 && channels_out != 3 {
        return Err(Error::Channels(channels_out));
    }
    if raw.height < size || raw.width < size {
        return Err(Error::Dataset(format!(
            "frames of {}x{} are smaller than {size}x{size}",
            raw.height, raw.width
        )));
    }
    if channels_out == 3 && raw.channels == 1 {
        return Err(Error::Dataset("cannot produce colour output from a grayscale source".into()));
    }
    let side = raw.height.min(raw.width);
    let y0 = (raw.height - side) / 2;
    let x0 = (raw.width - side) / 2;
    let weights = area_resample_weights(side, size);
    let t_len = raw.frames;
    let mut out = vec![0f32; channels_out * t_len * size * size];
    let mut plane = vec![0f64; side * side];
    let mut rows = vec![0f64; size * side];
    for t in 0..t_len {
        for c in 0..channels_out {
            for y in 0..side {
                for x in 0..side {
                    let v = if channels_out == 1 && raw.channels == 3 {
                        let p = |k| raw.pixel(t, y0 + y, x0 + x, k) as f64;
                        0.299 * p(0) + 0.587 * p(1) + 0.114 * p(2)
                    } else {
                        raw.pixel(t, y0 + y, x0 + x, c) as f64
                    };
                    plane[y * side + x] = v;
                }
            }
            // Separable area filter: rows first, then columns.
            for (oy, wy) in weights.iter().enumerate() {
                for x in 0..side {
                    rows[oy * side + x] = wy.iter().map(|&(j, w)| w * plane[j * side + x]).sum();
                }
            }
            for oy in 0..size {
                for (ox, wx) in weights.iter().enumerate() {
                    let v: f64 = wx.iter().map(|&(j, w)| w * rows[oy * side + j]).sum();
                    out[((c * t_len + t) * size + oy) * size + ox] = (v / 127.5 - 1.0).clamp(-1.0, 1.0) as f32;
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[channels_out, t_len, size, size], out))
}
