use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pnm::{self, Raster};
use super::{
    Annotation, AnnotationKind, BoxAnnotation, DataError, PixelMask, Sample, ScribbleAnnotation,
    ScribbleLabel, Split,
};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    samples: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileRef {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    id: String,
    split: Split,
    kind: AnnotationKind,
    /// Keys: `image`, `truth`, and `annotation` for pixel and scribble kinds.
    files: BTreeMap<String, FileRef>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[usize; 4]>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

fn image_bytes(img: &Tensor<f32>) -> Vec<u8> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let plane = h * w;
    let mut rgb = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            rgb.push((img.data()[c * plane + p] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    pnm::encode(w, h, 3, &rgb)
}

fn mask_bytes(m: &PixelMask) -> Vec<u8> {
    let px: Vec<u8> = m.values().iter().map(|&v| v * 255).collect();
    pnm::encode(m.width(), m.height(), 1, &px)
}

fn scribble_bytes(s: &ScribbleAnnotation) -> Vec<u8> {
    let px: Vec<u8> = s.labels().iter().map(|l| l.code()).collect();
    pnm::encode(s.width(), s.height(), 1, &px)
}

/// Writes images, masks and the manifest under `dir`. Returns the sha256
/// of the manifest bytes.
pub fn write_corpus(samples: &[Sample], dir: &Path) -> Result<String, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let mut files = BTreeMap::new();
        let mut put = |key: &str, suffix: &str, bytes: Vec<u8>| -> Result<(), DataError> {
            let name = format!("{}.{suffix}", s.id);
            let path = dir.join(&name);
            fs::write(&path, &bytes).map_err(io_err(&path))?;
            files.insert(key.to_string(), FileRef { name, sha256: sha256_hex(&bytes) });
            Ok(())
        };
        put("image", "ppm", image_bytes(&s.image))?;
        put("truth", "truth.pgm", mask_bytes(&s.truth_mask))?;
        let bbox = match &s.annotation {
            Annotation::Pixel(m) => {
                put("annotation", "mask.pgm", mask_bytes(m))?;
                None
            }
            Annotation::Scribble(sc) => {
                put("annotation", "scribble.pgm", scribble_bytes(sc))?;
                None
            }
            Annotation::Box(b) => Some([b.x0, b.y0, b.x1, b.y1]),
        };
        entries.push(Entry { id: s.id.clone(), split: s.split, kind: s.kind(), files, bbox });
    }
    let manifest = Manifest { schema_version: SCHEMA_VERSION, samples: entries };
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| DataError::Manifest(e.to_string()))?;
    bytes.push(b'\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, &bytes).map_err(io_err(&path))?;
    Ok(sha256_hex(&bytes))
}

fn load_file(dir: &Path, entry: &Entry, key: &str) -> Result<Raster, DataError> {
    let bad = |msg: String| DataError::BadSample { id: entry.id.clone(), msg };
    let f = entry.files.get(key).ok_or_else(|| bad(format!("manifest lists no {key} file")))?;
    let path: PathBuf = dir.join(&f.name);
    if !path.is_file() {
        return Err(DataError::MissingFile { id: entry.id.clone(), path });
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if sha256_hex(&bytes) != f.sha256 {
        return Err(DataError::Checksum { id: entry.id.clone(), file: f.name.clone() });
    }
    pnm::decode(&bytes).map_err(|e| bad(format!("{}: {e}", f.name)))
}

fn raster_to_mask(r: Raster, id: &str) -> Result<PixelMask, DataError> {
    let mut values = Vec::with_capacity(r.pixels.len());
    for &p in &r.pixels {
        values.push(match p {
            0 => 0,
            255 => 1,
            v => {
                return Err(DataError::BadSample { id: id.into(), msg: format!("mask value {v}") })
            }
        });
    }
    PixelMask::new(r.width, r.height, values)
}

fn decode_entry(dir: &Path, e: &Entry) -> Result<Sample, DataError> {
    let bad = |msg: String| DataError::BadSample { id: e.id.clone(), msg };
    let img = load_file(dir, e, "image")?;
    if img.channels != 3 {
        return Err(bad("image must be a colour PPM".into()));
    }
    let (w, h) = (img.width, img.height);
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            data[c * plane + p] = img.pixels[3 * p + c] as f32 / 255.0;
        }
    }
    let image = Tensor::new(vec![3, h, w], data).expect("3×H×W");

    let truth = load_file(dir, e, "truth")?;
    let truth_mask = raster_to_mask(truth, &e.id)?;
    if (truth_mask.width(), truth_mask.height()) != (w, h) {
        return Err(bad("truth mask size differs from image".into()));
    }

    let annotation = match e.kind {
        AnnotationKind::Pixel => {
            let m = raster_to_mask(load_file(dir, e, "annotation")?, &e.id)?;
            if (m.width(), m.height()) != (w, h) {
                return Err(bad("mask size differs from image".into()));
            }
            Annotation::Pixel(m)
        }
        AnnotationKind::Scribble => {
            let r = load_file(dir, e, "annotation")?;
            if (r.width, r.height, r.channels) != (w, h, 1) {
                return Err(bad("scribble size differs from image".into()));
            }
            let labels = r
                .pixels
                .iter()
                .map(|&code| {
                    ScribbleLabel::from_code(code)
                        .ok_or(DataError::InvalidScribbleCode { id: e.id.clone(), code })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Annotation::Scribble(
                ScribbleAnnotation::new(w, h, labels).map_err(|err| bad(err.to_string()))?,
            )
        }
        AnnotationKind::Box => {
            let [x0, y0, x1, y1] = e.bbox.ok_or_else(|| bad("box sample without box".into()))?;
            let b = BoxAnnotation::new(x0, y0, x1, y1);
            if !b.fits(w, h) {
                return Err(bad(format!("box {:?} outside {w}×{h}", [x0, y0, x1, y1])));
            }
            Annotation::Box(b)
        }
    };
    Ok(Sample { id: e.id.clone(), split: e.split, image, annotation, truth_mask })
}

/// Loads and verifies every sample listed in `dir/manifest.json`.
pub fn read_corpus(dir: &Path) -> Result<Vec<Sample>, DataError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(DataError::Manifest(format!("{} not found", path.display())));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| DataError::Manifest(e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DataError::Manifest(format!(
            "schema version {} unsupported (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for e in &manifest.samples {
        if !seen.insert(e.id.as_str()) {
            return Err(DataError::Manifest(format!("duplicate sample id {}", e.id)));
        }
    }
    manifest.samples.iter().map(|e| decode_entry(dir, e)).collect()
}
