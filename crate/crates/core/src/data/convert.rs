use rand::Rng;

use super::{BoxAnnotation, DataError, PixelMask, ScribbleAnnotation, ScribbleLabel};

/// Tightest inclusive rectangle around the foreground.
pub fn mask_to_box(m: &PixelMask) -> Result<BoxAnnotation, DataError> {
    let mut bbox: Option<BoxAnnotation> = None;
    for y in 0..m.height() {
        for x in 0..m.width() {
            if !m.get(y, x) {
                continue;
            }
            bbox = Some(match bbox {
                None => BoxAnnotation::new(x, y, x, y),
                Some(b) => BoxAnnotation::new(b.x0.min(x), b.y0.min(y), b.x1.max(x), b.y1.max(y)),
            });
        }
    }
    bbox.ok_or(DataError::EmptyMask)
}

/// Rectangle-filled mask, inclusive on both corners.
pub fn box_to_mask(b: &BoxAnnotation, width: usize, height: usize) -> Result<PixelMask, DataError> {
    if !b.fits(width, height) {
        return Err(DataError::BoxOutOfBounds { bbox: *b, width, height });
    }
    let mut m = PixelMask::zeros(width, height);
    for y in b.y0..=b.y1 {
        for x in b.x0..=b.x1 {
            m.set(y, x, true);
        }
    }
    Ok(m)
}

const NEIGHBORS: [(isize, isize); 8] =
    [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

/// Direction-persistent random walk confined to pixels where `inside` holds,
/// until `target` distinct pixels are visited or the step budget runs out.
fn confined_walk<R: Rng>(
    inside: &dyn Fn(usize, usize) -> bool,
    start: (usize, usize),
    width: usize,
    height: usize,
    target: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut visited = vec![false; width * height];
    let mut path = vec![start];
    visited[start.0 * width + start.1] = true;
    let (mut y, mut x) = start;
    let mut dir = rng.random_range(0..NEIGHBORS.len());
    let budget = 50 * target.max(1);
    for _ in 0..budget {
        if path.len() >= target {
            break;
        }
        if rng.random_bool(0.25) {
            // Turn by at most 45 degrees either way.
            dir = (dir + [NEIGHBORS.len() - 1, 1][rng.random_range(0..2)]) % NEIGHBORS.len();
        }
        let step = |d: usize| {
            let (dy, dx) = NEIGHBORS[d];
            let ny = y as isize + dy;
            let nx = x as isize + dx;
            if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                return None;
            }
            let (ny, nx) = (ny as usize, nx as usize);
            inside(ny, nx).then_some((ny, nx))
        };
        let next = match step(dir) {
            Some(p) => Some(p),
            None => {
                let options: Vec<usize> = (0..NEIGHBORS.len()).filter(|&d| step(d).is_some()).collect();
                if options.is_empty() {
                    None
                } else {
                    dir = options[rng.random_range(0..options.len())];
                    step(dir)
                }
            }
        };
        let Some((ny, nx)) = next else { break };
        y = ny;
        x = nx;
        if !visited[y * width + x] {
            visited[y * width + x] = true;
            path.push((y, x));
        }
    }
    path
}

/// Pixel of `pixels` nearest to their centroid.
fn nearest_to_centroid(pixels: &[(usize, usize)]) -> (usize, usize) {
    let n = pixels.len() as f64;
    let cy = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cx = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    *pixels
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - cy).powi(2) + (a.1 as f64 - cx).powi(2);
            let db = (b.0 as f64 - cy).powi(2) + (b.1 as f64 - cx).powi(2);
            da.total_cmp(&db)
        })
        .expect("non-empty")
}

/// Simulated scribbles: one random-walk stroke inside the foreground
/// (seeded at its centroid) and one inside the background, each covering
/// about `coverage` of its class. Every labeled pixel agrees with `m`.
pub fn mask_to_scribble<R: Rng>(
    m: &PixelMask,
    coverage: f64,
    rng: &mut R,
) -> Result<ScribbleAnnotation, DataError> {
    if !(coverage > 0.0 && coverage <= 0.2) {
        return Err(DataError::InvalidCoverage(coverage));
    }
    let (w, h) = (m.width(), m.height());
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if m.get(y, x) {
                fg.push((y, x));
            } else {
                bg.push((y, x));
            }
        }
    }
    if fg.is_empty() {
        return Err(DataError::MissingClass("foreground"));
    }
    if bg.is_empty() {
        return Err(DataError::MissingClass("background"));
    }
    let target = |n: usize| ((coverage * n as f64).round() as usize).max(1);

    let mut labels = vec![ScribbleLabel::Unlabeled; w * h];
    let fg_start = nearest_to_centroid(&fg);
    let inside_fg = |y: usize, x: usize| m.get(y, x);
    for (y, x) in confined_walk(&inside_fg, fg_start, w, h, target(fg.len()), rng) {
        labels[y * w + x] = ScribbleLabel::Foreground;
    }
    let bg_start = bg[rng.random_range(0..bg.len())];
    let inside_bg = |y: usize, x: usize| !m.get(y, x);
    for (y, x) in confined_walk(&inside_bg, bg_start, w, h, target(bg.len()), rng) {
        labels[y * w + x] = ScribbleLabel::Background;
    }
    ScribbleAnnotation::new(w, h, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask_with(w: usize, h: usize, on: &[(usize, usize)]) -> PixelMask {
        let mut m = PixelMask::zeros(w, h);
        for &(y, x) in on {
            m.set(y, x, true);
        }
        m
    }

    #[test]
    fn box_of_single_pixel() {
        let m = mask_with(6, 5, &[(2, 3)]);
        assert_eq!(mask_to_box(&m).unwrap(), BoxAnnotation::new(3, 2, 3, 2));
    }

    #[test]
    fn box_of_full_frame() {
        let m = PixelMask::new(7, 4, vec![1; 28]).unwrap();
        assert_eq!(mask_to_box(&m).unwrap(), BoxAnnotation::new(0, 0, 6, 3));
    }

    #[test]
    fn box_of_two_pixels() {
        // (y, x) pairs.
        let m = mask_with(8, 8, &[(1, 1), (4, 6)]);
        assert_eq!(mask_to_box(&m).unwrap(), BoxAnnotation::new(1, 1, 6, 4));
    }

    #[test]
    fn empty_mask_has_no_box() {
        assert!(matches!(mask_to_box(&PixelMask::zeros(3, 3)), Err(DataError::EmptyMask)));
    }

    #[test]
    fn box_rasterization() {
        let full = box_to_mask(&BoxAnnotation::new(0, 0, 4, 2), 5, 3).unwrap();
        assert_eq!(full.area(), 15);
        let one = box_to_mask(&BoxAnnotation::new(1, 1, 1, 1), 3, 3).unwrap();
        assert_eq!(one.area(), 1);
        assert!(one.get(1, 1));
        let b = BoxAnnotation::new(2, 1, 5, 3);
        assert_eq!(box_to_mask(&b, 8, 8).unwrap().area(), b.area());
        assert_eq!(b.area(), 4 * 3);
        assert!(box_to_mask(&BoxAnnotation::new(0, 0, 3, 3), 3, 3).is_err());
    }

    fn disc(size: usize, r: f64) -> PixelMask {
        let mut m = PixelMask::zeros(size, size);
        let c = size as f64 / 2.0;
        for y in 0..size {
            for x in 0..size {
                if (y as f64 - c).powi(2) + (x as f64 - c).powi(2) <= r * r {
                    m.set(y, x, true);
                }
            }
        }
        m
    }

    #[test]
    fn scribbles_agree_with_mask_and_are_sparse() {
        let m = disc(96, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = mask_to_scribble(&m, 0.01, &mut rng).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                match s.get(y, x) {
                    ScribbleLabel::Foreground => assert!(m.get(y, x)),
                    ScribbleLabel::Background => assert!(!m.get(y, x)),
                    ScribbleLabel::Unlabeled => {}
                }
            }
        }
        let labeled = s.labeled_count();
        assert!(labeled > 0);
        assert!(labeled * 20 < 96 * 96 - labeled);
        assert!(s.count(ScribbleLabel::Foreground) > 0);
        assert!(s.count(ScribbleLabel::Background) > 0);
    }

    #[test]
    fn scribbles_are_deterministic() {
        let m = disc(48, 10.0);
        let a = mask_to_scribble(&m, 0.03, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = mask_to_scribble(&m, 0.03, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scribble_requires_both_classes_and_valid_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mask_to_scribble(&PixelMask::zeros(8, 8), 0.05, &mut rng).is_err());
        let full = PixelMask::new(4, 4, vec![1; 16]).unwrap();
        assert!(mask_to_scribble(&full, 0.05, &mut rng).is_err());
        let m = disc(16, 4.0);
        assert!(mask_to_scribble(&m, 0.0, &mut rng).is_err());
        assert!(mask_to_scribble(&m, 0.3, &mut rng).is_err());
    }
}
