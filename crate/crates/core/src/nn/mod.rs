//! Neural-network building blocks over the autodiff tape.

pub mod blocks;
pub mod layers;
pub mod varstore;
pub mod vq;

pub use blocks::{
    cbam_forward, multi_scale_forward, res_branch_width, resblock_forward, Cbam, ConvMode,
    MultiScaleConv, ResBlock,
};
pub use layers::{
    avg_pool2, global_avg_pool, global_max_pool, max_pool2, BatchNorm2d, Conv2d, ConvTranspose2d,
    InstanceNorm2d, Linear, NetBuilder, INIT_STD,
};
pub use varstore::{Ctx, Section, VarStore};
pub use vq::{straight_through, Codebook};
