//! Pseudo bounding-box mining from class activation maps.
//!
//! The pipeline for one image and class: average the CAMs of all
//! augmentations at image resolution, min-max normalize, and for each
//! threshold τ keep cells strictly above τ, label connected components,
//! drop components under half the largest area, and fit a box by matching
//! weighted first and second moments. Boxes from all thresholds are then
//! merged with per-class NMS.

pub mod boxfit;
pub mod cam;
pub mod eval;
pub mod io;
pub mod merge;
pub mod pipeline;
pub mod region;
pub mod synth;
pub mod table;

pub use boxfit::{CenterBox, CornerBox, PseudoBox};
pub use cam::{Augmentation, CamMap, CamStack, ClassId};
pub use merge::{mine_boxes, MiningConfig};
