//! Qualitative output: side-by-side image, truth overlay and prediction
//! overlay, written as binary PPM.

use crate::data::pnm;
use crate::data::PixelMask;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Colour blended over masked pixels.
pub const OVERLAY_RGB: [u8; 3] = [0, 255, 0];
/// Weight of the overlay colour inside the mask.
pub const OVERLAY_ALPHA: f32 = 0.5;

fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Interleaved RGB bytes of a `3×H×W` image in `[0, 1]`.
pub fn image_rgb(image: &Tensor<f32>) -> Vec<u8> {
    let plane = image.shape()[1] * image.shape()[2];
    (0..plane).flat_map(|p| (0..3).map(move |c| (c, p))).map(|(c, p)| to_byte(image.data()[c * plane + p])).collect()
}

/// The image with `mask` pixels blended towards [`OVERLAY_RGB`].
pub fn overlay(image: &Tensor<f32>, mask: &PixelMask) -> Result<Vec<u8>> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::Config(format!(
            "mask {}×{} does not match image {h}×{w}",
            mask.height(),
            mask.width()
        )));
    }
    let mut rgb = image_rgb(image);
    for (p, &on) in mask.values().iter().enumerate() {
        if on == 1 {
            for c in 0..3 {
                let base = rgb[3 * p + c] as f32;
                let v = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * OVERLAY_RGB[c] as f32;
                rgb[3 * p + c] = v.round() as u8;
            }
        }
    }
    Ok(rgb)
}

/// `image | truth overlay | prediction overlay` as one PPM file.
pub fn triptych_ppm(image: &Tensor<f32>, truth: &PixelMask, pred: &PixelMask) -> Result<Vec<u8>> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let panels = [image_rgb(image), overlay(image, truth)?, overlay(image, pred)?];
    let mut rgb = Vec::with_capacity(9 * h * w);
    for y in 0..h {
        for panel in &panels {
            rgb.extend_from_slice(&panel[3 * y * w..3 * (y + 1) * w]);
        }
    }
    Ok(pnm::encode(3 * w, h, 3, &rgb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Tensor<f32> {
        Tensor::from_fn(vec![3, 2, 3], |i| i as f32 / 17.0)
    }

    #[test]
    fn perfect_prediction_overlay_equals_truth_overlay() {
        let truth = PixelMask::new(3, 2, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let bytes = triptych_ppm(&image(), &truth, &truth).unwrap();
        let raster = pnm::decode(&bytes).unwrap();
        assert_eq!((raster.width, raster.height), (9, 2));
        for y in 0..2 {
            let row = &raster.pixels[y * 27..(y + 1) * 27];
            assert_eq!(row[9..18], row[18..27]);
        }
    }

    #[test]
    fn empty_mask_leaves_image_untouched() {
        let img = image();
        assert_eq!(overlay(&img, &PixelMask::zeros(3, 2)).unwrap(), image_rgb(&img));
        assert!(overlay(&img, &PixelMask::zeros(2, 2)).is_err());
    }
}
