//! Hyperbolic particle packing and assignment-driven representation learning.
//!
//! The crate packs `n` particles uniformly into a Poincaré ball by gradient
//! descent on a pairwise repulsion energy, then trains a small encoder that
//! maps dataset instances onto those particles through minimum-cost bipartite
//! matching under hyperbolic distance. Because the particles are fixed and
//! uniform, the norm of an instance's embedding becomes a free signal:
//! instances the encoder can place early and stably end up nearer the origin.
//! The remaining modules measure that signal (k-NN density, norm profiles),
//! exploit it (subset selection, robustness evaluation) and prepare data for
//! it (IDX i/o, synthetic sets, congealing).

pub mod assignment;
pub mod congeal;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod packing;
pub mod trainer;

pub use assignment::{batch_reassign, hungarian, AssignmentDoc, AssignmentState, CostMatrix};
pub use congeal::{
    affine_transform, congeal_set, write_params_csv, AffineParams, CongealOutcome, CongealSpec,
};
pub use data::{
    apply_manifest_flags, make_congealed_dataset, read_idx, read_vectors_csv, synth_clusters,
    synth_image_class, write_idx, write_vectors_csv, Dataset, DatasetItem, DatasetManifest, Image,
    JitterKind, Shape,
};
pub use density::{
    gamma, knn_density, norm_density_profile, spearman, unit_ball_volume, write_density_csv,
    write_profile_csv, DensityEstimate, DensitySpec, Metric, ProfileBin,
};
pub use error::{Error, Result};
pub use eval::{
    adversarial_accuracy, confidence_rank, fgsm_attack, rank_sum_p_less, select_subset,
    train_classifier, write_accuracy_csv, write_selection_csv, AccuracyRow, Classifier,
    SelectionMode, SelectionSpec,
};
pub use geometry::{
    clip_to_radius, clip_to_radius_vjp, exp_map0, exp_map0_vjp, hyp_distance, hyp_distance_grad_u,
    BallParams, BallPoint,
};
pub use nn::{
    embed, hyperbolic_grad, load_checkpoint, save_checkpoint, write_loss_csv, EncoderGrads,
    EncoderParams, Layer, MlpSpec,
};
pub use packing::{
    boundary_loss, pack, per_particle_radius, repulsion_loss, PackOutcome, PackingSpec,
    ParticleSet, ParticlesDoc,
};
pub use trainer::{
    cosine_lr, embed_all, hack_train, read_snapshot_csv, write_snapshot_csv, Snapshot,
    TrainConfig, TrainOutcome,
};
