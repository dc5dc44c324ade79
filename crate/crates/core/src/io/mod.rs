//! Loading and persisting scenes, rasters, and flow fields.

mod average;
pub mod flo;
pub mod pfm;
pub mod png;
mod scene;

pub use average::{average_flow_window, DEFAULT_FLOW_WINDOW};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo};
pub use scene::{
    load_scene, load_scene_from_memory, CameraIntrinsics, Manifest, SceneBundle, SparseHint,
    DEFAULT_DEPTH_SCALE,
};
