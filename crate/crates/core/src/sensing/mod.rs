//! Multi-AP target sensing from echo tensors.

pub mod association;
pub mod cp;
pub mod fusion;
pub mod noise;
pub mod pipeline;
pub mod ranging;

pub use association::{associate, AssociationConfig, AssociationOutcome};
pub use cp::{correlation, cp_decompose, relative_residual, CpConfig, CpFactors};
pub use fusion::{
    build_fusion, localization_objective, mrc_weights, velocity_objective, FusionSet, TargetColumns,
};
pub use noise::{estimate_noise_variance, NOISE_FLOOR};
pub use pipeline::{
    estimate_target, estimate_targets, sense_scene, sl_mdts, stage_one, SensingConfig, SensingReport, StageOne,
    TargetEstimate,
};
pub use ranging::{coarse_range, delay_steering, music_refine, music_spectrum, CoarseRange};
