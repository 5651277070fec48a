//! Network definition, cost accounting, and checkpoints.

mod checkpoint;
mod config;
mod cost;
mod irnet;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_as, read_checkpoint, save_checkpoint, write_checkpoint,
};
pub use config::{parse_pairs, Mode, ModelConfig};
pub use cost::{count_macs, count_params, format_k, layer_plan, ComputeCost, LayerSpec, Site};
pub use irnet::{CcaParams, ConvSlot, Group, IrbParams, IrnetModel, Upsampler};
