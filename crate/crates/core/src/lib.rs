//! Scribble-driven segmentation of multi-channel images.
//!
//! A user marks a few foreground pixels; the engine grows them into a
//! segmentation by thresholding the geodesic distance from those seeds over
//! any channel stack (raw hyperspectral cube, learned features, RGB). The
//! [`harness`] module reproduces batch comparisons of distance-map methods with
//! Dice-versus-threshold sweeps on skeleton-derived scribbles.

pub mod distance;
pub mod error;
pub mod harness;
pub mod preprocess;
pub mod segment;
pub mod skeleton;
pub mod tensor;

pub use distance::{
    euclidean_edt, geodesic_exact, geodesic_raster, geodesic_raster_scheduled, Connectivity,
    DistanceParams, RasterOutcome, RasterSolver, SweepSchedule,
};
pub use error::{Error, Result};
pub use preprocess::{l1_normalize, pca_features, rgb_reconstruct, BandWeights, PcaBasis};
pub use segment::{
    dice, dice_sweep, dice_sweep_exhaustive, normalize_map, threshold_segment, CurveSummary,
    DiceCurve, DEFAULT_SWEEP_STEPS,
};
pub use skeleton::{count_components, mask_to_scribbles, skeletonize};
pub use tensor::{
    read_channel_stack, read_mask_pgm, read_scribbles, write_channel_stack, write_mask_pgm,
    write_scribbles, BinaryMask, ChannelStack, DistanceMap, ScribblePoint, ScribbleSet,
};
