use rand::Rng;

use super::{Annotation, BoxAnnotation, PixelMask, Sample, ScribbleAnnotation};
use crate::tensor::Tensor;

/// Horizontal flip, then vertical flip, then `quarter_turns` clockwise
/// 90° rotations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    pub quarter_turns: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { hflip: false, vflip: false, quarter_turns: 0 };

    /// Each flip with probability 0.5 and a uniform rotation. Non-square
    /// images only draw 0° or 180° so the spatial shape stays fixed.
    pub fn random<R: Rng>(rng: &mut R, square: bool) -> Self {
        let hflip = rng.random_bool(0.5);
        let vflip = rng.random_bool(0.5);
        let quarter_turns = if square { rng.random_range(0..4) } else { 2 * rng.random_range(0..2) };
        Self { hflip, vflip, quarter_turns }
    }

    /// Output `(height, width)` for an input of the given size.
    pub fn out_size(&self, height: usize, width: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 1 {
            (width, height)
        } else {
            (height, width)
        }
    }

    /// Destination of source pixel `(y, x)` in an `height×width` image.
    pub fn map_point(&self, y: usize, x: usize, height: usize, width: usize) -> (usize, usize) {
        let mut p = (y, x);
        if self.hflip {
            p.1 = width - 1 - p.1;
        }
        if self.vflip {
            p.0 = height - 1 - p.0;
        }
        let (mut h, mut w) = (height, width);
        for _ in 0..self.quarter_turns % 4 {
            p = (p.1, h - 1 - p.0);
            std::mem::swap(&mut h, &mut w);
        }
        p
    }

    fn permute<T: Copy + Default>(&self, src: &[T], height: usize, width: usize) -> Vec<T> {
        let (_, ow) = self.out_size(height, width);
        let mut out = vec![T::default(); src.len()];
        for y in 0..height {
            for x in 0..width {
                let (ny, nx) = self.map_point(y, x, height, width);
                out[ny * ow + nx] = src[y * width + x];
            }
        }
        out
    }

    pub fn apply_mask(&self, m: &PixelMask) -> PixelMask {
        let (oh, ow) = self.out_size(m.height(), m.width());
        PixelMask::new(ow, oh, self.permute(m.values(), m.height(), m.width()))
            .expect("permutation keeps mask values")
    }

    pub fn apply_box(&self, b: &BoxAnnotation, height: usize, width: usize) -> BoxAnnotation {
        let (ya, xa) = self.map_point(b.y0, b.x0, height, width);
        let (yb, xb) = self.map_point(b.y1, b.x1, height, width);
        BoxAnnotation::new(xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb))
    }

    pub fn apply_scribble(&self, s: &ScribbleAnnotation) -> ScribbleAnnotation {
        let (oh, ow) = self.out_size(s.height(), s.width());
        ScribbleAnnotation::new(ow, oh, self.permute(s.labels(), s.height(), s.width()))
            .expect("permutation keeps labeled pixels")
    }

    /// Applies the transform to every channel of a `C×H×W` image.
    pub fn apply_image(&self, img: &Tensor<f32>) -> Tensor<f32> {
        let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let (oh, ow) = self.out_size(h, w);
        let mut data = Vec::with_capacity(img.len());
        for plane in img.data().chunks(h * w) {
            data.extend(self.permute(plane, h, w));
        }
        Tensor::new(vec![c, oh, ow], data).expect("same element count")
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        let (h, w) = (s.height(), s.width());
        let annotation = match &s.annotation {
            Annotation::Pixel(m) => Annotation::Pixel(self.apply_mask(m)),
            Annotation::Box(b) => Annotation::Box(self.apply_box(b, h, w)),
            Annotation::Scribble(sc) => Annotation::Scribble(self.apply_scribble(sc)),
        };
        Sample {
            id: s.id.clone(),
            split: s.split,
            image: self.apply_image(&s.image),
            annotation,
            truth_mask: self.apply_mask(&s.truth_mask),
        }
    }
}

/// Random flip/rotation applied identically to image, annotation and truth.
pub fn augment<R: Rng>(s: &Sample, rng: &mut R) -> Sample {
    Transform::random(rng, s.height() == s.width()).apply(s)
}
