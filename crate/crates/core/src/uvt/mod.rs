//! Unique Video Tensor: pixels sharing an index key share one canonical
//! color. Keys are built once from the source video and reused for the
//! edited video.

mod keys;
mod stage2;
mod tensor;

pub use keys::{
    build_keys, flow_target, propagate_flow_ids, quantize_channel, quantize_rgb, voxelize,
    DepthInput, IndexKey, KeyConfig, KeyVolume, QRGB_MAX,
};
pub use stage2::{run_stage2, run_stage2_with_keys, stage2_loss, StageTwoConfig, StageTwoResult};
pub use tensor::{gather, scatter, scatter_grad_accumulate, UniqueVideoTensor};
