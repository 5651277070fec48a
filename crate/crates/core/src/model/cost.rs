//! Closed-form parameter and multiply-accumulate accounting.
//!
//! Works from the layer plan alone; nothing is allocated.

use super::config::{Mode, ModelConfig};
use crate::error::Result;

/// Where a convolution runs relative to the input resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    /// At `factor` times the input height and width.
    Spatial { factor: usize },
    /// On a `1 x 1` pooled descriptor.
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub site: Site,
}

impl LayerSpec {
    pub fn weights(&self) -> u64 {
        (self.in_ch * self.out_ch * self.k * self.k) as u64
    }

    pub fn params(&self) -> u64 {
        self.weights() + self.out_ch as u64
    }

    pub fn macs(&self, h: u64, w: u64) -> u64 {
        match self.site {
            Site::Spatial { factor } => self.weights() * h * factor as u64 * w * factor as u64,
            Site::Pooled => self.weights(),
        }
    }
}

/// Every convolution of the network in enumeration order.
pub fn layer_plan(cfg: &ModelConfig) -> Result<Vec<LayerSpec>> {
    cfg.validate()?;
    let c = cfg.channels;
    let half = c / 2;
    let full = Site::Spatial { factor: 1 };
    let layer = |name: String, in_ch, out_ch, k, site| LayerSpec {
        name,
        in_ch,
        out_ch,
        k,
        site,
    };
    let mut plan = vec![layer("head".into(), 3, c, 1, full)];
    for b in 1..=cfg.n_blocks {
        let out_in = if cfg.irb_f1 { c } else { half };
        plan.push(layer(format!("block{b}.irb.conv1"), c, half, 3, full));
        plan.push(layer(format!("block{b}.irb.conv2"), half, c, 3, full));
        plan.push(layer(format!("block{b}.irb.fuse"), c, half, 1, full));
        plan.push(layer(format!("block{b}.irb.out"), out_in, c, 1, full));
        plan.push(layer(
            format!("block{b}.cca.down"),
            c,
            c / cfg.cca_reduction,
            1,
            Site::Pooled,
        ));
        plan.push(layer(
            format!("block{b}.cca.up"),
            c / cfg.cca_reduction,
            c,
            1,
            Site::Pooled,
        ));
    }
    plan.push(layer("fusion1".into(), cfg.n_blocks * c, c, 1, full));
    plan.push(layer("fusion2".into(), c, c, 3, full));
    match cfg.mode {
        Mode::Itm => plan.push(layer("tail".into(), c, 3, 3, full)),
        Mode::SrItm => {
            plan.push(layer("tail".into(), c, c, 3, full));
            plan.push(layer("upsampler.up1".into(), c, 4 * c, 3, full));
            plan.push(layer(
                "upsampler.up2".into(),
                c,
                12,
                3,
                Site::Spatial { factor: 2 },
            ));
        }
    }
    Ok(plan)
}

/// Exact number of kernel and bias scalars.
pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    Ok(layer_plan(cfg)?.iter().map(LayerSpec::params).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComputeCost {
    pub macs: u64,
    pub flops: u64,
}

/// Multiply-accumulates of all convolutions for an `h x w` input;
/// attention convolutions count at `1 x 1`. FLOPs are `2 * MACs`.
pub fn count_macs(cfg: &ModelConfig, h: usize, w: usize) -> Result<ComputeCost> {
    let macs = layer_plan(cfg)?
        .iter()
        .map(|l| l.macs(h as u64, w as u64))
        .sum();
    Ok(ComputeCost {
        macs,
        flops: 2 * macs,
    })
}

/// Parameter count in thousands rounded to two decimals, as tables print it.
pub fn format_k(params: u64) -> String {
    format!("{:.2}K", params as f64 / 1000.0)
}
