//! The training loop: alternating encoder optimization and batch-wise
//! Hungarian reassignment against a fixed packed ParticleSet.

use crate::assignment::{batch_reassign, AssignmentState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::BallPoint;
use crate::nn::{embed, hyperbolic_grad, EncoderParams, MlpSpec};
use crate::packing::ParticleSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Training hyperparameters. The learning rate follows the cosine schedule
/// lr_t = lr0·(1 + cos(π·t/T))/2 over T = epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub batch_size: usize,
    /// Reassign on epochs where epoch % assign_every == 0.
    pub assign_every: usize,
    pub seed: u64,
    /// Epochs (0-based, captured after the epoch completes) at which to keep
    /// a full (features, assignment) snapshot.
    pub snapshot_epochs: Vec<usize>,
    /// Hidden layer sizes of the encoder; input is the dataset dimension and
    /// the output is always the 2-D embedding plane.
    pub hidden: Vec<usize>,
    /// Feature clip radius fed to clip_to_radius after the exponential map.
    pub r_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr0: 0.1,
            batch_size: 128,
            assign_every: 2,
            seed: 0,
            snapshot_epochs: Vec::new(),
            hidden: vec![32],
            r_clip: 0.98,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be at least 1".into()));
        }
        if self.assign_every == 0 {
            return Err(Error::InvalidSpec("assign_every must be at least 1".into()));
        }
        if !self.lr0.is_finite() || self.lr0 < 0.0 {
            return Err(Error::InvalidSpec("lr0 must be finite and nonnegative".into()));
        }
        if !(self.r_clip > 0.0 && self.r_clip < 1.0) {
            return Err(Error::InvalidSpec("r_clip must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn cosine_lr(lr0: f64, epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos()) / 2.0
}

/// Full embedding state captured after a configured epoch; `features[id]` is
/// instance id's embedding.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub epoch: usize,
    pub features: Vec<BallPoint>,
    pub assignment: AssignmentState,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub assignment: AssignmentState,
    pub snapshots: Vec<Snapshot>,
    /// Mean per-sample loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Embeds every instance with the current encoder, indexed by instance id.
pub fn embed_all(
    params: &EncoderParams,
    dataset: &Dataset,
    particles: &ParticleSet,
    r_clip: f64,
) -> Result<Vec<BallPoint>> {
    (0..dataset.n())
        .map(|id| embed(params, &dataset.by_id(id).vec, particles.ball(), r_clip))
        .collect()
}

/// Runs the alternating loop: a seeded random initial bijection, then per
/// epoch a fresh shuffle into batches; on reassignment epochs each batch is
/// rewired by minimum-cost matching (current features, before the step), and
/// every batch takes one SGD step toward its assigned particles at the
/// scheduled learning rate.
pub fn hack_train(
    dataset: &Dataset,
    particles: &ParticleSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = dataset.n();
    if n != particles.len() {
        return Err(Error::ShapeMismatch {
            context: "dataset size vs particle count",
            expected: particles.len(),
            found: n,
        });
    }
    let ball = particles.ball();
    let mut layer_sizes = vec![dataset.dim()];
    layer_sizes.extend_from_slice(&cfg.hidden);
    layer_sizes.push(2);
    let mut params = EncoderParams::glorot(MlpSpec::new(layer_sizes, cfg.seed)?);
    let mut assignment = AssignmentState::new_random(n, cfg.seed.wrapping_add(1));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let items = dataset.items();
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        let reassign_epoch = epoch % cfg.assign_every == 0;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&p| items[p].vec.as_slice()).collect();
            let ids: Vec<usize> = chunk.iter().map(|&p| items[p].id).collect();
            if reassign_epoch && chunk.len() >= 2 {
                let feats = xs
                    .iter()
                    .map(|x| embed(&params, x, ball, cfg.r_clip))
                    .collect::<Result<Vec<_>>>()?;
                batch_reassign(&feats, &ids, &mut assignment, particles)?;
            }
            let targets: Vec<BallPoint> = ids
                .iter()
                .map(|&id| particles.positions()[assignment.particle_of(id)].clone())
                .collect();
            let (grads, loss) = hyperbolic_grad(&params, &xs, &targets, ball, cfg.r_clip)?;
            params.sgd_step(&grads, lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        loss_history.push(epoch_loss / n as f64);
        if cfg.snapshot_epochs.contains(&epoch) {
            snapshots.push(Snapshot {
                epoch,
                features: embed_all(&params, dataset, particles, cfg.r_clip)?,
                assignment: assignment.clone(),
            });
        }
    }

    Ok(TrainOutcome { params, assignment, snapshots, loss_history })
}

/// Snapshot CSV: instance_id, x, y, norm, angle, is_congealed — rows in id
/// order; angle is atan2(y, x) in radians.
pub fn write_snapshot_csv(snapshot: &Snapshot, dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance_id", "x", "y", "norm", "angle", "is_congealed"])?;
    for (id, feature) in snapshot.features.iter().enumerate() {
        let coords = feature.coords();
        if coords.len() != 2 {
            return Err(Error::ShapeMismatch {
                context: "snapshot feature dimension",
                expected: 2,
                found: coords.len(),
            });
        }
        let (x, y) = (coords[0], coords[1]);
        w.write_record([
            id.to_string(),
            format!("{x:.17e}"),
            format!("{y:.17e}"),
            format!("{:.17e}", feature.norm()),
            format!("{:.17e}", y.atan2(x)),
            dataset.by_id(id).is_congealed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot CSV back into features plus congealed flags, indexed by
/// instance id. Rows may appear in any order but ids must be dense.
pub fn read_snapshot_csv(path: &Path) -> Result<(Vec<BallPoint>, Vec<bool>)> {
    let bad = |reason: String| Error::BadDocument {
        path: path.display().to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<(usize, f64, f64, bool)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 6 {
            return Err(bad(format!("expected 6 columns, found {}", record.len())));
        }
        let id: usize = record[0].parse().map_err(|_| bad(format!("bad id {:?}", &record[0])))?;
        let x: f64 = record[1].parse().map_err(|_| bad(format!("bad x {:?}", &record[1])))?;
        let y: f64 = record[2].parse().map_err(|_| bad(format!("bad y {:?}", &record[2])))?;
        let flag: bool =
            record[5].parse().map_err(|_| bad(format!("bad flag {:?}", &record[5])))?;
        rows.push((id, x, y, flag));
    }
    if rows.is_empty() {
        return Err(bad("no feature rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    let mut features = Vec::with_capacity(rows.len());
    let mut flags = Vec::with_capacity(rows.len());
    for (want, (id, x, y, flag)) in rows.into_iter().enumerate() {
        if id != want {
            return Err(bad(format!("ids must be dense: expected {want}, found {id}")));
        }
        features.push(BallPoint::new(vec![x, y])?);
        flags.push(flag);
    }
    Ok((features, flags))
}
