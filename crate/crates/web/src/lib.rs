use inbetween::data::{preprocess, synthesize_dataset, SampleTriple, SYNTHETIC_SIZE};
use inbetween::eval::{generate_for_pair, protocol_noise, ssim, KeyFrames};
use inbetween::model::{Generator, ModelConfig, Variant};
use inbetween::render::{frame_strip, stack_rows, RgbImage};
use inbetween::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const WIDTH_DIVISOR: usize = 32;
const NOISE_DIM: usize = 16;

fn js_err(e: inbetween::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// An RGBA raster handed to a canvas.
#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

impl From<RgbImage> for Frame {
    fn from(img: RgbImage) -> Self {
        Frame {
            width: img.width as u32,
            height: img.height as u32,
            rgba: img.to_rgba(),
        }
    }
}

/// A synthetic clip, a small untrained generator and the last generated sample.
#[wasm_bindgen]
pub struct Demo {
    generator: Generator<f32>,
    clip: SampleTriple,
    generated: Option<Tensor<f32>>,
}

#[wasm_bindgen]
impl Demo {
    /// Builds a reduced-width generator with weights drawn from `model_seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(model_seed: u32) -> Result<Demo, JsError> {
        let mut cfg = ModelConfig::scaled(Variant::Full, 3, WIDTH_DIVISOR);
        cfg.noise_dim = NOISE_DIM;
        let mut rng = ChaCha8Rng::seed_from_u64(model_seed as u64);
        let generator = Generator::new(&cfg, &mut rng).map_err(js_err)?;
        Ok(Demo {
            generator,
            clip: synthetic_clip(0, 0)?,
            generated: None,
        })
    }

    /// Selects synthetic clip `index` of dataset `seed` and returns its 16 frames.
    pub fn load_clip(&mut self, seed: u32, index: u32) -> Result<Frame, JsError> {
        self.clip = synthetic_clip(seed as u64, index as usize)?;
        self.generated = None;
        Ok(frame_strip(&self.clip.clip, 0..16).map_err(js_err)?.into())
    }

    /// Generates the clip between the current key frames with noise from
    /// `noise_seed`. Returns the generated strip above the ground truth.
    pub fn inbetween(&mut self, noise_seed: u32) -> Result<Frame, JsError> {
        let keys = KeyFrames::from(&self.clip);
        let u = protocol_noise(noise_seed as u64, 0, 1, NOISE_DIM);
        let clip = generate_for_pair(&self.generator, &keys, &u)
            .map_err(js_err)?
            .remove(0);
        let rows = [
            frame_strip(&clip, 0..16).map_err(js_err)?,
            frame_strip(&self.clip.clip, 0..16).map_err(js_err)?,
        ];
        self.generated = Some(clip);
        Ok(stack_rows(&rows).map_err(js_err)?.into())
    }

    /// SSIM of the last generated clip's intermediate frames against the truth.
    pub fn ssim(&self) -> Result<f64, JsError> {
        let generated = self
            .generated
            .as_ref()
            .ok_or_else(|| JsError::new("generate a clip first"))?;
        ssim(generated, &self.clip.clip).map_err(js_err)
    }
}

fn synthetic_clip(seed: u64, index: usize) -> Result<SampleTriple, JsError> {
    let clip = synthesize_dataset(seed, index + 1, 16).pop().expect("one clip per index");
    let frames = preprocess(&clip.raw, SYNTHETIC_SIZE, 3).map_err(js_err)?;
    SampleTriple::new(frames).map_err(js_err)
}
