//! Downstream uses of prototypicality: norm-based subset selection, a small
//! softmax classifier over raw pixels, FGSM robustness, the model-confidence
//! baseline, and the rank-sum test backing the congealed-emergence check.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::average_ranks;
use crate::error::{Error, Result};
use crate::geometry::BallPoint;
use crate::nn::{EncoderParams, MlpSpec};

/// How a norm-ranked subset is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Smallest norms first.
    Typical,
    /// Largest norms first.
    Atypical,
    /// Largest norms, spread round-robin over equal angular sectors.
    AtypicalDiverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    /// Fraction of the dataset to keep, in (0, 1]; the quota is ⌈fraction·n⌉.
    pub fraction: f64,
    pub mode: SelectionMode,
    /// Sector count for [`SelectionMode::AtypicalDiverse`]; ignored otherwise.
    pub angular_bins: usize,
}

impl SelectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "selection fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        if self.angular_bins == 0 {
            return Err(Error::InvalidSpec("angular_bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Angle of a 2-D point mapped to [0, 2π).
fn angle_of(coords: &[f64]) -> f64 {
    let mut a = coords[1].atan2(coords[0]);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a
}

/// Selects instance ids by feature norm. `typical` takes the ⌈fraction·n⌉
/// smallest norms, `atypical` the largest, and `atypical_diverse` splits
/// [0, 2π) into `angular_bins` equal sectors and drains them round-robin,
/// largest norm first within each sector. Ties always break toward the
/// smaller id, and ids are returned in selection order.
pub fn select_subset(features: &[BallPoint], spec: &SelectionSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    if features.is_empty() {
        return Err(Error::InvalidSpec("selection needs a nonempty feature set".into()));
    }
    let n = features.len();
    let quota = ((spec.fraction * n as f64).ceil() as usize).clamp(1, n);
    let norms: Vec<f64> = features.iter().map(BallPoint::norm).collect();

    match spec.mode {
        SelectionMode::Typical => {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
            ids.truncate(quota);
            Ok(ids)
        }
        SelectionMode::Atypical => {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            ids.truncate(quota);
            Ok(ids)
        }
        SelectionMode::AtypicalDiverse => {
            if features.iter().any(|p| p.coords().len() != 2) {
                return Err(Error::InvalidSpec(
                    "angular-diverse selection needs 2-D features".into(),
                ));
            }
            let width = 2.0 * PI / spec.angular_bins as f64;
            let mut sectors: Vec<Vec<usize>> = vec![Vec::new(); spec.angular_bins];
            for (id, p) in features.iter().enumerate() {
                let s = ((angle_of(p.coords()) / width) as usize).min(spec.angular_bins - 1);
                sectors[s].push(id);
            }
            for sector in &mut sectors {
                sector.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            }
            let mut cursors = vec![0usize; spec.angular_bins];
            let mut picked = Vec::with_capacity(quota);
            while picked.len() < quota {
                for (sector, cursor) in sectors.iter().zip(&mut cursors) {
                    if picked.len() == quota {
                        break;
                    }
                    if *cursor < sector.len() {
                        picked.push(sector[*cursor]);
                        *cursor += 1;
                    }
                }
            }
            Ok(picked)
        }
    }
}

/// A trained softmax classifier: an MLP whose output layer emits one logit
/// per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    params: EncoderParams,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

impl Classifier {
    pub fn from_params(params: EncoderParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn n_classes(&self) -> usize {
        self.params.spec().output_dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.forward(x)
    }

    /// Predicted class: argmax of the logits, first index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate().skip(1) {
            if z > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Max-softmax confidence of the prediction.
    pub fn confidence(&self, x: &[f64]) -> Result<f64> {
        let probs = softmax(&self.logits(x)?);
        Ok(probs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
    }

    /// Fraction of instances whose predicted class equals the label. Every
    /// item must carry a label smaller than the class count.
    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.n() == 0 {
            return Err(Error::InvalidSpec("accuracy needs a nonempty dataset".into()));
        }
        let mut hits = 0usize;
        for item in dataset.items() {
            let label = require_label(item.label, item.id, self.n_classes())?;
            if self.predict(&item.vec)? == label {
                hits += 1;
            }
        }
        Ok(hits as f64 / dataset.n() as f64)
    }

    /// Mean softmax cross-entropy over a labeled dataset.
    pub fn mean_loss(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.n() == 0 {
            return Err(Error::InvalidSpec("loss needs a nonempty dataset".into()));
        }
        let mut total = 0.0;
        for item in dataset.items() {
            let label = require_label(item.label, item.id, self.n_classes())?;
            let logits = self.logits(&item.vec)?;
            let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
            total += lse - logits[label];
        }
        Ok(total / dataset.n() as f64)
    }
}

fn require_label(label: Option<u8>, id: usize, n_classes: usize) -> Result<usize> {
    let label = label.ok_or_else(|| {
        Error::InvalidSpec(format!("instance {id} has no label; classifier work needs labels"))
    })? as usize;
    if label >= n_classes {
        return Err(Error::InvalidSpec(format!(
            "instance {id} has label {label} but the classifier emits {n_classes} classes"
        )));
    }
    Ok(label)
}

/// Minibatch size used by [`train_classifier`].
const CLASSIFIER_BATCH: usize = 32;

/// Trains a softmax cross-entropy classifier on the subset of `dataset`
/// named by `ids`. Parameters are Glorot-initialized from `seed`; minibatch
/// order is reshuffled each epoch from `seed + 1`. Returns the classifier and
/// the per-epoch mean training loss (epochs = 0 returns the untouched
/// initialization and an empty history).
pub fn train_classifier(
    dataset: &Dataset,
    ids: &[usize],
    spec: &MlpSpec,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(Classifier, Vec<f64>)> {
    if ids.is_empty() {
        return Err(Error::InvalidSpec("classifier training needs a nonempty subset".into()));
    }
    if spec.input_dim() != dataset.dim() {
        return Err(Error::ShapeMismatch {
            context: "classifier input dimension",
            expected: dataset.dim(),
            found: spec.input_dim(),
        });
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::InvalidSpec(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    let n_classes = spec.output_dim();
    let mut examples = Vec::with_capacity(ids.len());
    for &id in ids {
        if id >= dataset.n() {
            return Err(Error::InvalidSpec(format!("subset id {id} not in dataset")));
        }
        let item = dataset.by_id(id);
        let label = require_label(item.label, id, n_classes)?;
        examples.push((&item.vec, label));
    }

    let mut params = EncoderParams::glorot(MlpSpec::new(spec.layer_sizes.clone(), seed)?);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(CLASSIFIER_BATCH) {
            let mut grads = params.zeros_like_grads();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (x, label) = examples[idx];
                let trace = params.forward_trace(x)?;
                let logits = trace.output();
                let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
                batch_loss += lse - logits[label];
                let mut cot = softmax(logits);
                cot[label] -= 1.0;
                for c in &mut cot {
                    *c *= scale;
                }
                params.backprop(&trace, &cot, &mut grads);
            }
            params.sgd_step(&grads, lr);
            epoch_loss += batch_loss;
        }
        history.push(epoch_loss / examples.len() as f64);
    }
    Ok((Classifier { params }, history))
}

/// Gradient of the cross-entropy loss with respect to the input pixels.
fn input_gradient(clf: &Classifier, x: &[f64], label: usize) -> Result<Vec<f64>> {
    let trace = clf.params.forward_trace(x)?;
    let mut cot = softmax(trace.output());
    cot[label] -= 1.0;
    let mut sink = clf.params.zeros_like_grads();
    Ok(clf.params.backprop(&trace, &cot, &mut sink))
}

/// Fast gradient sign attack: x' = clamp_{[0,1]}(x + ε·sign(∇ₓ loss)). A zero
/// gradient coordinate is left untouched (sign 0).
pub fn fgsm_attack(clf: &Classifier, x: &[f64], label: u8, epsilon: f64) -> Result<Vec<f64>> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidSpec(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let label = require_label(Some(label), usize::MAX, clf.n_classes())?;
    let grad = input_gradient(clf, x, label)?;
    Ok(x.iter()
        .zip(&grad)
        .map(|(&xi, &g)| {
            let sign = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            (xi + epsilon * sign).clamp(0.0, 1.0)
        })
        .collect())
}

/// Accuracy on the FGSM-perturbed copy of a labeled dataset.
pub fn adversarial_accuracy(clf: &Classifier, dataset: &Dataset, epsilon: f64) -> Result<f64> {
    if dataset.n() == 0 {
        return Err(Error::InvalidSpec("accuracy needs a nonempty dataset".into()));
    }
    let mut hits = 0usize;
    for item in dataset.items() {
        let label = require_label(item.label, item.id, clf.n_classes())?;
        let adv = fgsm_attack(clf, &item.vec, label as u8, epsilon)?;
        if clf.predict(&adv)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.n() as f64)
}

/// Instance ids sorted by descending max-softmax confidence, ties broken by
/// id — the model-confidence prototypicality baseline.
pub fn confidence_rank(clf: &Classifier, dataset: &Dataset) -> Result<Vec<usize>> {
    let mut scored = Vec::with_capacity(dataset.n());
    for item in dataset.items() {
        scored.push((item.id, clf.confidence(&item.vec)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(id, _)| id).collect())
}

/// One-sided Wilcoxon rank-sum (Mann-Whitney) test of "values in `a` are
/// stochastically smaller than values in `b`", via the normal approximation
/// with tie correction and continuity correction. Returns the p-value; a
/// degenerate pooled sample (every value identical) yields 1.0.
pub fn rank_sum_p_less(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidSpec("rank-sum test needs two nonempty groups".into()));
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("rank-sum test needs finite values".into()));
    }
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;

    let total = n1 + n2;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if variance <= 0.0 {
        return Ok(1.0);
    }
    let z = (u1 + 0.5 - n1 * n2 / 2.0) / variance.sqrt();
    Ok(0.5 * libm::erfc(-z / std::f64::consts::SQRT_2))
}

/// Writes a ranked selection as `id,norm,angle,rank` (rank is the 1-based
/// position in `selected`). Features must be 2-D for the angle column.
pub fn write_selection_csv(
    features: &[BallPoint],
    selected: &[usize],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "norm", "angle", "rank"])?;
    for (pos, &id) in selected.iter().enumerate() {
        let p = features.get(id).ok_or_else(|| {
            Error::InvalidSpec(format!("selected id {id} outside feature set"))
        })?;
        if p.coords().len() != 2 {
            return Err(Error::InvalidSpec("selection CSV needs 2-D features".into()));
        }
        w.write_record([
            id.to_string(),
            format!("{:.17e}", p.norm()),
            format!("{:.17e}", angle_of(p.coords())),
            (pos + 1).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of an accuracy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub setting: String,
    pub clean_acc: f64,
    pub adv_acc: f64,
}

/// Writes accuracy rows as `setting,clean_acc,adv_acc`.
pub fn write_accuracy_csv(rows: &[AccuracyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["setting", "clean_acc", "adv_acc"])?;
    for row in rows {
        w.write_record([
            row.setting.clone(),
            format!("{:.17e}", row.clean_acc),
            format!("{:.17e}", row.adv_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}
