//! Pair-sample data model, geometric encodings, proposal filtering, dataset
//! files and the synthetic benchmark.

pub mod data;
pub mod encode;
pub mod geometry;
pub mod synthetic;

pub use data::{
    filter_proposals, Dataset, GroundTruth, Instance, PairSample, Vocabulary, HUMAN_CATEGORY,
    RARE_THRESHOLD,
};
pub use encode::{encode_pose, encode_spatial, Keypoint, KEYPOINTS, POSE_DIM, SPATIAL_DIM};
pub use geometry::{iou, BoundingBox, Frame};
pub use synthetic::{generate_synthetic, GeneratorRecord, SyntheticConfig, SyntheticDataset};
