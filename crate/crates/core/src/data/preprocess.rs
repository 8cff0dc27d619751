//! Polarity handling for natural images.
//!
//! MNIST glyphs are bright on dark; photographs are usually the opposite.
//! `Auto` inverts whenever the mean pixel is brighter than 0.5, assuming
//! glyphs are the minority intensity.

use crate::data::GrayImage;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Polarity {
    Keep,
    Invert,
    #[default]
    Auto,
}

impl std::str::FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "keep" => Ok(Polarity::Keep),
            "invert" => Ok(Polarity::Invert),
            "auto" => Ok(Polarity::Auto),
            other => Err(format!(
                "unknown polarity '{}', expected keep|invert|auto",
                other
            )),
        }
    }
}

/// Converts an image to a `[1, H, W]` tensor, inverting per the polarity.
pub fn preprocess(image: &GrayImage, polarity: Polarity) -> Tensor<f32> {
    let invert = match polarity {
        Polarity::Keep => false,
        Polarity::Invert => true,
        Polarity::Auto => {
            let mean: f32 = image.pixels().iter().sum::<f32>() / image.pixels().len() as f32;
            mean > 0.5
        }
    };
    let pixels = image
        .pixels()
        .iter()
        .map(|&v| if invert { 1.0 - v } else { v })
        .collect();
    Tensor::new(&[1, image.height(), image.width()], pixels)
        .expect("image dimensions validated at construction")
}
