use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    mask_to_box, mask_to_scribble, Annotation, DataError, PixelMask, Sample, Split,
};
use crate::tensor::Tensor;

/// Parameters of the synthetic polyp-like image generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Inclusive range of ellipses per image.
    pub blob_count: (usize, usize),
    /// Inclusive range of ellipse semi-axes in pixels.
    pub axis_range: (f64, f64),
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    /// Scale of the colour difference between lesion and tissue.
    pub contrast: f64,
    /// Fraction of each class covered by simulated scribbles.
    pub scribble_coverage: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            blob_count: (1, 2),
            axis_range: (7.0, 20.0),
            noise: 0.04,
            contrast: 1.0,
            scribble_coverage: 0.03,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.width < 32 || self.height < 32 {
            return bad("image size must be at least 32×32");
        }
        if self.blob_count.0 > self.blob_count.1 {
            return bad("blob count range is empty");
        }
        let (a0, a1) = self.axis_range;
        if !(a0.is_finite() && a1.is_finite() && a0 >= 1.0 && a0 <= a1) {
            return bad("axis range must satisfy 1 <= min <= max");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise amplitude must be finite and non-negative");
        }
        if !(self.contrast.is_finite() && self.contrast >= 0.0) {
            return bad("contrast must be finite and non-negative");
        }
        if !(self.scribble_coverage > 0.0 && self.scribble_coverage <= 0.2) {
            return Err(DataError::InvalidCoverage(self.scribble_coverage));
        }
        Ok(())
    }
}

/// Number of samples per stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub pixel: usize,
    pub boxes: usize,
    pub scribble: usize,
    pub test: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        Self { pixel: 60, boxes: 200, scribble: 200, test: 100 }
    }
}

impl CorpusCounts {
    pub fn total(&self) -> usize {
        self.pixel + self.boxes + self.scribble + self.test
    }
}

/// A generated image together with its exact foreground raster.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    /// `3×H×W` on the 1/255 grid.
    pub image: Tensor<f32>,
    pub mask: PixelMask,
}

/// Independent generator stream for sample `index` under `master_seed`.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Squared normalized radius: `<= 1` inside.
    fn r2(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    /// Approximate signed distance in pixels to the boundary (negative inside).
    fn edge_distance(&self, y: f64, x: f64) -> f64 {
        let r = self.r2(y, x).sqrt();
        (r - 1.0) * self.a.min(self.b)
    }
}

/// Coarse random lattice, bilinearly interpolated: smooth blotchy texture.
fn value_noise<R: Rng>(rng: &mut R, h: usize, w: usize, cell: usize) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

fn smoothstep(e0: f64, e1: f64, v: f64) -> f64 {
    let t = ((v - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// One synthetic endoscopy-like frame: shaded tissue with folds, vignetting
/// and specular glints, plus a union of textured ellipses as the lesion.
pub fn gen_sample<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> SynthSample {
    let (h, w) = (cfg.height, cfg.width);
    let (hf, wf) = (h as f64, w as f64);

    // Tissue colour and low-frequency folds.
    let base = [
        rng.random_range(0.62..0.82),
        rng.random_range(0.32..0.50),
        rng.random_range(0.28..0.44),
    ];
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..PI);
            let period = rng.random_range(25.0..90.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(0.02..0.07);
            (theta, period, phase, amp)
        })
        .collect();
    let vignette = rng.random_range(0.15..0.40);
    let (vy, vx) = (rng.random_range(0.3..0.7) * hf, rng.random_range(0.3..0.7) * wf);
    let tissue_tex = value_noise(rng, h, w, 12);

    // Lesion geometry.
    let n_blobs = rng.random_range(cfg.blob_count.0..=cfg.blob_count.1);
    let (a_lo, a_hi) = cfg.axis_range;
    let blobs: Vec<Ellipse> = (0..n_blobs)
        .map(|_| {
            let a = if a_lo < a_hi { rng.random_range(a_lo..=a_hi) } else { a_lo };
            let b = a * rng.random_range(0.6..=1.0);
            let theta = rng.random_range(0.0..PI);
            let margin = 0.15;
            Ellipse {
                cy: rng.random_range(margin..1.0 - margin) * hf,
                cx: rng.random_range(margin..1.0 - margin) * wf,
                a,
                b,
                cos: theta.cos(),
                sin: theta.sin(),
            }
        })
        .collect();
    // Lesions are mostly redder and slightly brighter than the mucosa,
    // but the shift varies per image.
    let shift = [
        cfg.contrast * rng.random_range(0.04..0.14),
        cfg.contrast * rng.random_range(-0.02..0.08),
        cfg.contrast * rng.random_range(-0.06..0.04),
    ];
    let dome = rng.random_range(0.05..0.15);
    let lesion_tex = value_noise(rng, h, w, 3);
    let lesion_tex_amp = rng.random_range(0.02..0.06);

    // Specular glints, anywhere in the frame.
    let glints: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=4))
        .map(|_| {
            (rng.random_range(0.0..hf), rng.random_range(0.0..wf), rng.random_range(0.8..2.2))
        })
        .collect();

    let mut mask = PixelMask::zeros(w, h);
    let mut planes = vec![0.0f64; 3 * h * w];
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let mut fold = 0.0;
            for &(theta, period, phase, amp) in &waves {
                let t = xf * theta.cos() + yf * theta.sin();
                fold += amp * (2.0 * PI * t / period + phase).sin();
            }
            let r2 = ((yf - vy) / hf).powi(2) + ((xf - vx) / wf).powi(2);
            let light = 1.0 - vignette * 2.0 * r2;
            let idx = y * w + x;
            let tex = 0.04 * tissue_tex[idx];

            // Soft coverage for the image; hard raster for the mask.
            let mut alpha: f64 = 0.0;
            let mut bulge: f64 = 0.0;
            for e in &blobs {
                let r2 = e.r2(yf, xf);
                if r2 <= 1.0 {
                    mask.set(y, x, true);
                }
                alpha = alpha.max(1.0 - smoothstep(-1.0, 1.0, e.edge_distance(yf, xf)));
                bulge = bulge.max((1.0 - r2).max(0.0));
            }

            let mut glint: f64 = 0.0;
            for &(gy, gx, s) in &glints {
                glint = glint.max((-((yf - gy).powi(2) + (xf - gx).powi(2)) / (2.0 * s * s)).exp());
            }

            for c in 0..3 {
                let tissue = (base[c] + fold + tex) * light;
                let lesion = (base[c] + shift[c] + dome * bulge + lesion_tex_amp * lesion_tex[idx]
                    + 0.5 * fold)
                    * light;
                let v = tissue * (1.0 - alpha) + lesion * alpha;
                let v = v * (1.0 - glint) + 0.97 * glint;
                planes[c * h * w + idx] = v;
            }
        }
    }
    let data: Vec<f32> = planes
        .into_iter()
        .map(|v| {
            let v = (v + noise.sample(rng)).clamp(0.0, 1.0);
            ((v * 255.0).round() / 255.0) as f32
        })
        .collect();
    SynthSample { image: Tensor::new(vec![3, h, w], data).expect("3×H×W"), mask }
}

/// Full corpus in stream order pixel, box, scribble, test. Sample `i`
/// draws from `sample_rng(cfg.seed, i)` only, so any sample can be
/// regenerated on its own.
pub fn generate_corpus(cfg: &SynthConfig, counts: &CorpusCounts) -> Result<Vec<Sample>, DataError> {
    cfg.validate()?;
    if counts.pixel == 0 {
        return Err(DataError::InvalidConfig("the pixel-labeled stream needs at least one sample".into()));
    }
    let streams = [
        ("pixel", counts.pixel, Split::Train),
        ("box", counts.boxes, Split::Train),
        ("scribble", counts.scribble, Split::Train),
        ("test", counts.test, Split::Test),
    ];
    let mut out = Vec::with_capacity(counts.total());
    let mut index = 0u64;
    for (stream, n, split) in streams {
        for k in 0..n {
            let id = format!("{stream}-{k:04}");
            let mut rng = sample_rng(cfg.seed, index);
            index += 1;
            let SynthSample { image, mask } = gen_sample(cfg, &mut rng);
            let annotation = match stream {
                "box" => Annotation::Box(mask_to_box(&mask).map_err(|e| DataError::BadSample {
                    id: id.clone(),
                    msg: e.to_string(),
                })?),
                "scribble" => Annotation::Scribble(
                    mask_to_scribble(&mask, cfg.scribble_coverage, &mut rng).map_err(|e| {
                        DataError::BadSample { id: id.clone(), msg: e.to_string() }
                    })?,
                ),
                _ => Annotation::Pixel(mask.clone()),
            };
            out.push(Sample { id, split, image, annotation, truth_mask: mask });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{box_to_mask, ScribbleLabel};

    fn small() -> SynthConfig {
        SynthConfig { width: 48, height: 32, ..SynthConfig::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_sample(&small(), &mut sample_rng(5, 3));
        let b = gen_sample(&small(), &mut sample_rng(5, 3));
        assert_eq!(a, b);
        let c = gen_sample(&small(), &mut sample_rng(5, 4));
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn zero_blobs_give_empty_mask() {
        let cfg = SynthConfig { blob_count: (0, 0), ..small() };
        let s = gen_sample(&cfg, &mut sample_rng(1, 0));
        assert_eq!(s.mask.area(), 0);
    }

    #[test]
    fn images_are_on_the_byte_grid() {
        let s = gen_sample(&small(), &mut sample_rng(2, 0));
        assert_eq!(s.image.shape(), &[3, 32, 48]);
        for &v in s.image.data() {
            assert!((0.0..=1.0).contains(&v));
            let k = (v * 255.0).round();
            assert_eq!((k / 255.0) as f32, v);
        }
        let area = s.mask.area();
        assert!(area > 0 && area < 32 * 48);
    }

    #[test]
    fn lesion_differs_from_tissue() {
        // Mean redness inside the mask exceeds the outside on average.
        let mut diff = 0.0;
        for i in 0..20 {
            let s = gen_sample(&SynthConfig::default(), &mut sample_rng(11, i));
            let (mut fin, mut nin, mut fout, mut nout) = (0.0, 0.0, 0.0, 0.0);
            for (p, &m) in s.mask.values().iter().enumerate() {
                let r = s.image.data()[p] as f64;
                if m == 1 {
                    fin += r;
                    nin += 1.0;
                } else {
                    fout += r;
                    nout += 1.0;
                }
            }
            diff += fin / nin - fout / nout;
        }
        assert!(diff / 20.0 > 0.02, "{diff}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(SynthConfig { width: 16, ..small() }.validate().is_err());
        assert!(SynthConfig { blob_count: (3, 1), ..small() }.validate().is_err());
        assert!(SynthConfig { axis_range: (5.0, 2.0), ..small() }.validate().is_err());
        assert!(SynthConfig { noise: f64::NAN, ..small() }.validate().is_err());
        assert!(SynthConfig { scribble_coverage: 0.5, ..small() }.validate().is_err());
    }

    #[test]
    fn corpus_annotations_agree_with_truth() {
        let counts = CorpusCounts { pixel: 3, boxes: 10, scribble: 10, test: 2 };
        let corpus = generate_corpus(&small(), &counts).unwrap();
        assert_eq!(corpus.len(), 25);
        assert_eq!(corpus[0].id, "pixel-0000");
        assert_eq!(corpus[3].id, "box-0000");
        assert_eq!(corpus[24].split, Split::Test);
        for s in &corpus {
            match &s.annotation {
                Annotation::Pixel(m) => assert_eq!(m, &s.truth_mask),
                Annotation::Box(b) => {
                    let r = box_to_mask(b, s.width(), s.height()).unwrap();
                    for (t, r) in s.truth_mask.values().iter().zip(r.values()) {
                        assert!(r >= t);
                    }
                }
                Annotation::Scribble(sc) => {
                    for (l, &t) in sc.labels().iter().zip(s.truth_mask.values()) {
                        match l {
                            ScribbleLabel::Foreground => assert_eq!(t, 1),
                            ScribbleLabel::Background => assert_eq!(t, 0),
                            ScribbleLabel::Unlabeled => {}
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pixel_stream_is_required() {
        let counts = CorpusCounts { pixel: 0, boxes: 10, scribble: 10, test: 5 };
        assert!(matches!(generate_corpus(&small(), &counts), Err(DataError::InvalidConfig(_))));
    }

    #[test]
    fn weak_streams_need_foreground() {
        let cfg = SynthConfig { blob_count: (0, 0), ..small() };
        let counts = CorpusCounts { pixel: 1, boxes: 1, scribble: 0, test: 0 };
        match generate_corpus(&cfg, &counts) {
            Err(DataError::BadSample { id, .. }) => assert_eq!(id, "box-0000"),
            other => panic!("{other:?}"),
        }
    }
}
