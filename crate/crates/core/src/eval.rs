//! Thresholded Dice/IoU evaluation and image-count-weighted averaging.

use serde::{Deserialize, Serialize};

use crate::data::{PixelMask, Sample};
use crate::segnet::{predict_logits, EncoderConfig, ModelParams};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const THRESHOLD: f64 = 0.5;

/// Binary prediction from logits: `sigmoid(z) > 0.5`, i.e. `z > 0`.
pub fn binarize(logits: &Tensor<f32>) -> PixelMask {
    let (h, w) = (logits.shape()[0], logits.shape()[1]);
    let values = logits.data().iter().map(|&z| (z > 0.0) as u8).collect();
    PixelMask::new(w, h, values).expect("binary values")
}

/// Hard Dice and IoU of a prediction against truth. Two empty masks agree
/// perfectly (1, 1); an empty prediction of a non-empty truth scores 0.
pub fn dice_iou(pred: &PixelMask, truth: &PixelMask) -> (f64, f64) {
    let mut inter = 0usize;
    let (mut p, mut g) = (0usize, 0usize);
    for (&a, &b) in pred.values().iter().zip(truth.values()) {
        inter += (a & b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        return (1.0, 1.0);
    }
    let union = p + g - inter;
    (2.0 * inter as f64 / (p + g) as f64, inter as f64 / union as f64)
}

/// `Σ metric_d · n_d / Σ n_d`.
pub fn weighted_average(items: &[(f64, usize)]) -> f64 {
    let n: usize = items.iter().map(|&(_, n)| n).sum();
    if n == 0 {
        return 0.0;
    }
    items.iter().map(|&(m, n)| m * n as f64).sum::<f64>() / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetric {
    pub dataset: String,
    pub id: String,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub count: usize,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub datasets: Vec<DatasetReport>,
    pub wavg_dice: f64,
    pub wavg_iou: f64,
    /// Sorted by dataset, then id.
    pub images: Vec<ImageMetric>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "iteration,dataset,count,dice,iou";

    /// One row per dataset plus a `wavg` row.
    pub fn csv_rows(&self, iteration: usize) -> Vec<String> {
        let total: usize = self.datasets.iter().map(|d| d.count).sum();
        self.datasets
            .iter()
            .map(|d| format!("{iteration},{},{},{},{}", d.name, d.count, d.dice, d.iou))
            .chain(std::iter::once(format!(
                "{iteration},wavg,{total},{},{}",
                self.wavg_dice, self.wavg_iou
            )))
            .collect()
    }
}

/// Scores `params` on each named test set. Per-dataset metrics are the
/// mean over images; the order of samples within a set does not matter.
pub fn evaluate(
    enc: &EncoderConfig,
    params: &ModelParams<f32>,
    sets: &[(String, Vec<&Sample>)],
) -> Result<EvalReport> {
    if sets.is_empty() {
        return Err(Error::Config("no test sets to evaluate".into()));
    }
    let mut datasets = Vec::with_capacity(sets.len());
    let mut images = Vec::new();
    for (name, samples) in sets {
        if samples.is_empty() {
            return Err(Error::Config(format!("test set {name} is empty")));
        }
        let mut metrics = Vec::with_capacity(samples.len());
        for s in samples {
            let logits = predict_logits(enc, params, &s.image)?;
            let (dice, iou) = dice_iou(&binarize(&logits), &s.truth_mask);
            metrics.push(ImageMetric { dataset: name.clone(), id: s.id.clone(), dice, iou });
        }
        metrics.sort_by(|a, b| a.id.cmp(&b.id));
        let n = metrics.len() as f64;
        datasets.push(DatasetReport {
            name: name.clone(),
            count: metrics.len(),
            dice: metrics.iter().map(|m| m.dice).sum::<f64>() / n,
            iou: metrics.iter().map(|m| m.iou).sum::<f64>() / n,
        });
        images.extend(metrics);
    }
    images.sort_by(|a, b| (&a.dataset, &a.id).cmp(&(&b.dataset, &b.id)));
    let wavg_dice = weighted_average(&datasets.iter().map(|d| (d.dice, d.count)).collect::<Vec<_>>());
    let wavg_iou = weighted_average(&datasets.iter().map(|d| (d.iou, d.count)).collect::<Vec<_>>());
    Ok(EvalReport { datasets, wavg_dice, wavg_iou, images })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, v: &[u8]) -> PixelMask {
        PixelMask::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let g = mask(2, 2, &[1, 0, 1, 1]);
        assert_eq!(dice_iou(&g, &g), (1.0, 1.0));
        assert_eq!(dice_iou(&mask(2, 2, &[0; 4]), &g), (0.0, 0.0));
        assert_eq!(dice_iou(&mask(2, 2, &[0; 4]), &mask(2, 2, &[0; 4])), (1.0, 1.0));
    }

    #[test]
    fn partial_overlap() {
        // |P| = 2, |G| = 3, |P∩G| = 1, |P∪G| = 4.
        let p = mask(3, 2, &[1, 1, 0, 0, 0, 0]);
        let g = mask(3, 2, &[0, 1, 1, 1, 0, 0]);
        let (d, i) = dice_iou(&p, &g);
        assert!((d - 2.0 / 5.0).abs() < 1e-15);
        assert!((i - 1.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_set_weighted_average() {
        let w = weighted_average(&[(0.828, 380), (0.923, 100)]);
        assert!((w - (0.828 * 380.0 + 0.923 * 100.0) / 480.0).abs() < 1e-15);
        assert!((w - 0.8478).abs() < 1e-4);
    }

    #[test]
    fn binarize_thresholds_at_zero_logit() {
        let z = Tensor::<f32>::from_f64s(vec![1, 3], &[-0.1, 0.0, 0.2]).unwrap();
        assert_eq!(binarize(&z).values(), &[0, 0, 1]);
    }
}
