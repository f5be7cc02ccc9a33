//! Network assembly: feature backbone, bottleneck projector and linear classifier,
//! with hand-written backward passes, SGD, checkpoints and the source objective.

pub mod backbone;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod params;

pub use backbone::BackboneSpec;
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use loss::{smooth_labels, smoothed_targets, source_ce_loss, LossGrad, SmoothedLabel};
pub use network::{ArchSpec, NetworkAssembly, TrainPass};
pub use optim::{Schedule, Sgd, SgdSettings};
pub use params::{Grads, Group, ParamKind, ParamStore, Trainable};
