//! Deterministic tensor math, layer forward passes, model representation
//! and bit-exact model serialization.

mod format;
mod layer;
mod model;
mod tensor;

pub use format::{
    from_manifest_string, load_model, model_checksum, save_model, to_manifest_string,
    FORMAT_VERSION, MODEL_EXTENSION,
};
pub use layer::{
    conv2d_forward, dense_forward, maxpool2x2, softmax, ActivationFn, LayerKind, LayerSpec,
};
pub use model::{ModelSpec, ParamPair, TrainedModel};
pub(crate) use model::layer_forward;
pub use tensor::Tensor;
