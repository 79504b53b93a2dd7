//! Procedural bouncing rectangles. Positions are closed-form in `t`: a
//! constant-velocity coordinate folded by a triangle wave into `[0, L]`,
//! which is elastic reflection off both walls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::RawVideo;

pub const SYNTHETIC_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub width: usize,
    pub height: usize,
    /// Top-left corner at `t = 0`, in pixels.
    pub x0: f64,
    pub y0: f64,
    /// Pixels per frame.
    pub vx: f64,
    pub vy: f64,
    pub color: [u8; 3],
}

/// Folds `s` into `[0, limit]` as a ball bouncing between two walls would.
pub fn reflect(s: f64, limit: f64) -> f64 {
    if limit <= 0.0 {
        return 0.0;
    }
    let m = s.rem_euclid(2.0 * limit);
    if m <= limit {
        m
    } else {
        2.0 * limit - m
    }
}

impl Rect {
    pub fn x_limit(&self) -> f64 {
        (SYNTHETIC_SIZE - self.width) as f64
    }

    pub fn y_limit(&self) -> f64 {
        (SYNTHETIC_SIZE - self.height) as f64
    }

    /// Continuous top-left position at frame `t`.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        (
            reflect(self.x0 + self.vx * t, self.x_limit()),
            reflect(self.y0 + self.vy * t, self.y_limit()),
        )
    }

    /// Integer top-left pixel at frame `t`.
    pub fn pixel_position(&self, t: usize) -> (usize, usize) {
        let (x, y) = self.position(t);
        ((x + 0.5).floor() as usize, (y + 0.5).floor() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub background: u8,
    pub rects: Vec<Rect>,
}

impl SyntheticParams {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=2);
        let rects = (0..n)
            .map(|_| {
                let width = rng.random_range(8..=20);
                let height = rng.random_range(8..=20);
                let speed = |rng: &mut ChaCha8Rng| {
                    let v: f64 = rng.random_range(1.0..3.0);
                    if rng.random_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                };
                Rect {
                    width,
                    height,
                    x0: rng.random_range(0.0..=(SYNTHETIC_SIZE - width) as f64),
                    y0: rng.random_range(0.0..=(SYNTHETIC_SIZE - height) as f64),
                    vx: speed(rng),
                    vy: speed(rng),
                    color: [
                        rng.random_range(64..=255),
                        rng.random_range(64..=255),
                        rng.random_range(64..=255),
                    ],
                }
            })
            .collect();
        SyntheticParams {
            background: rng.random_range(0..=40),
            rects,
        }
    }

    /// Renders `length` RGB frames; later rectangles are drawn on top.
    pub fn render(&self, length: usize) -> RawVideo {
        let s = SYNTHETIC_SIZE;
        let mut data = vec![self.background; length * s * s * 3];
        for t in 0..length {
            let frame = &mut data[t * s * s * 3..(t + 1) * s * s * 3];
            for r in &self.rects {
                let (px, py) = r.pixel_position(t);
                for y in py..py + r.height {
                    for x in px..px + r.width {
                        frame[(y * s + x) * 3..(y * s + x) * 3 + 3].copy_from_slice(&r.color);
                    }
                }
            }
        }
        RawVideo::new(length, s, s, 3, data).expect("consistent synthetic buffer")
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub params: SyntheticParams,
    pub raw: RawVideo,
}

/// `count` clips of `length` frames. Clip `i` draws its parameters from its own
/// ChaCha stream `i` under `seed`, so clips do not depend on `count`.
pub fn synthesize_dataset(seed: u64, count: usize, length: usize) -> Vec<SyntheticClip> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let params = SyntheticParams::sample(&mut rng);
            let raw = params.render(length);
            SyntheticClip { params, raw }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frame-by-frame elastic bounce, independent of the closed form.
    fn simulate(p0: f64, v0: f64, limit: f64, steps: usize) -> f64 {
        let (mut p, mut v) = (p0, v0);
        for _ in 0..steps {
            p += v;
            if p > limit {
                p = 2.0 * limit - p;
                v = -v;
            } else if p < 0.0 {
                p = -p;
                v = -v;
            }
        }
        p
    }

    #[test]
    fn closed_form_matches_simulation() {
        for clip in synthesize_dataset(9, 20, 40) {
            for r in &clip.params.rects {
                for t in 0..40 {
                    let (x, y) = r.position(t);
                    assert!((x - simulate(r.x0, r.vx, r.x_limit(), t)).abs() < 1e-9);
                    assert!((y - simulate(r.y0, r.vy, r.y_limit(), t)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn top_rectangle_is_rendered_where_predicted() {
        for clip in synthesize_dataset(3, 10, 20) {
            let r = clip.params.rects.last().unwrap();
            for t in 0..20 {
                let (px, py) = r.pixel_position(t);
                for (y, x) in [(py, px), (py + r.height - 1, px + r.width - 1)] {
                    let off = ((t * 64 + y) * 64 + x) * 3;
                    assert_eq!(&clip.raw.data[off..off + 3], &r.color);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = synthesize_dataset(5, 6, 16);
        let b = synthesize_dataset(5, 9, 16);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.raw, y.raw);
        }
        let c = synthesize_dataset(6, 6, 16);
        assert_ne!(a[0].raw, c[0].raw);
    }

    #[test]
    fn reflect_wraps_both_walls() {
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(-3.0, 10.0), 3.0);
        assert_eq!(reflect(25.0, 10.0), 5.0);
    }
}
