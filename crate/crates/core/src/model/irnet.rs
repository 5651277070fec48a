//! IRNet: head conv, `n` improved residual blocks each followed by contrast
//! attention, multi-scale fusion, and a reconstruction tail with an optional
//! pixel-shuffle upsampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Mode, ModelConfig};
use crate::autograd::{ParamId, ParamStore, Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{self, ConvWeights};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSlot {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub pad: usize,
}

/// `conv1` 3x3 C->C/2, `conv2` 3x3 C/2->C, `fuse` 1x1 C->C/2, `out` 1x1 C->C.
#[derive(Clone, Copy, Debug)]
pub struct IrbParams {
    pub conv1: ConvSlot,
    pub conv2: ConvSlot,
    pub fuse: ConvSlot,
    pub out: ConvSlot,
}

/// `down` 1x1 C->C/r, `up` 1x1 C/r->C.
#[derive(Clone, Copy, Debug)]
pub struct CcaParams {
    pub down: ConvSlot,
    pub up: ConvSlot,
}

#[derive(Clone, Copy, Debug)]
pub struct Group {
    pub irb: IrbParams,
    pub cca: CcaParams,
}

#[derive(Clone, Copy, Debug)]
pub struct Upsampler {
    pub up1: ConvSlot,
    pub up2: ConvSlot,
}

#[derive(Clone, Debug)]
pub struct IrnetModel {
    config: ModelConfig,
    store: ParamStore,
    pub head: ConvSlot,
    pub groups: Vec<Group>,
    pub fusion1: ConvSlot,
    pub fusion2: ConvSlot,
    pub tail: ConvSlot,
    pub upsampler: Option<Upsampler>,
}

struct Builder<'a> {
    store: ParamStore,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, k: usize) -> ConvSlot {
        let shape = Shape::new(out_ch, in_ch, k, k);
        let kernel = match self.rng.as_deref_mut() {
            Some(rng) => {
                let fan_in = (in_ch * k * k) as f32;
                Tensor::randn(shape, (2.0 / fan_in).sqrt(), rng)
            }
            None => Tensor::zeros(shape),
        };
        let kernel = self.store.push(Parameter::new(
            format!("{name}.kernel"),
            shape.dims().to_vec(),
            kernel,
        ));
        let bias = self.store.push(Parameter::new(
            format!("{name}.bias"),
            vec![out_ch],
            Tensor::zeros(Shape::new(1, out_ch, 1, 1)),
        ));
        ConvSlot {
            kernel,
            bias,
            pad: k / 2,
        }
    }
}

impl IrnetModel {
    /// Kaiming-normal kernels (`std = sqrt(2 / fan_in)`) and zero biases from
    /// a seeded generator.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::assemble(config, Some(&mut rng))
    }

    /// All parameters zero; used as the skeleton for loading checkpoints.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        Self::assemble(config, None)
    }

    fn assemble(config: ModelConfig, rng: Option<&mut ChaCha8Rng>) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let half = c / 2;
        let squeezed = c / config.cca_reduction;
        let mut b = Builder {
            store: ParamStore::new(),
            rng,
        };
        let head = b.conv("head", 3, c, 1);
        let groups = (1..=config.n_blocks)
            .map(|i| {
                let p = format!("block{i}");
                let irb = IrbParams {
                    conv1: b.conv(&format!("{p}.irb.conv1"), c, half, 3),
                    conv2: b.conv(&format!("{p}.irb.conv2"), half, c, 3),
                    fuse: b.conv(&format!("{p}.irb.fuse"), c, half, 1),
                    out: b.conv(
                        &format!("{p}.irb.out"),
                        if config.irb_f1 { c } else { half },
                        c,
                        1,
                    ),
                };
                let cca = CcaParams {
                    down: b.conv(&format!("{p}.cca.down"), c, squeezed, 1),
                    up: b.conv(&format!("{p}.cca.up"), squeezed, c, 1),
                };
                Group { irb, cca }
            })
            .collect();
        let fusion1 = b.conv("fusion1", config.n_blocks * c, c, 1);
        let fusion2 = b.conv("fusion2", c, c, 3);
        let (tail, upsampler) = match config.mode {
            Mode::Itm => (b.conv("tail", c, 3, 3), None),
            Mode::SrItm => {
                let tail = b.conv("tail", c, c, 3);
                let up1 = b.conv("upsampler.up1", c, 4 * c, 3);
                let up2 = b.conv("upsampler.up2", c, 12, 3);
                (tail, Some(Upsampler { up1, up2 }))
            }
        };
        Ok(IrnetModel {
            config,
            store: b.store,
            head,
            groups,
            fusion1,
            fusion2,
            tail,
            upsampler,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Copy of one convolution's weights.
    pub fn conv_weights(&self, slot: ConvSlot) -> ConvWeights {
        ConvWeights {
            kernel: self.store.get(slot.kernel).value.clone(),
            bias: self.store.get(slot.bias).value.clone(),
        }
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.c != 3 {
            return Err(Error::Channels {
                op: "irnet_forward",
                expected: 3,
                actual: s.c,
            });
        }
        Ok(())
    }

    /// Full network on an `(N, 3, H, W)` batch. The output is not clamped.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let mut exec = Eager { store: &self.store };
        run_network(self, &mut exec, x.clone())
    }

    /// Records the forward pass on `tape` for training.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;
        let mut exec = Recording {
            tape,
            store: &self.store,
        };
        run_network(self, &mut exec, x)
    }

    /// One improved residual block (group `index`, zero-based).
    pub fn irb_forward(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let mut exec = Eager { store: &self.store };
        irb(&mut exec, &self.group(index)?.irb, x, &self.config)
    }

    /// Contrast-aware attention of group `index`.
    pub fn cca_forward(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let mut exec = Eager { store: &self.store };
        cca(
            &mut exec,
            &self.group(index)?.cca,
            x,
            self.config.cca_residual,
        )
    }

    fn group(&self, index: usize) -> Result<&Group> {
        self.groups.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "block index {index} out of range for {} blocks",
                self.groups.len()
            ))
        })
    }

    /// Forward over overlapping `tile x tile` input windows, averaging the
    /// overlaps. Bounds peak memory on large images.
    pub fn forward_tiled(&self, x: &Tensor, tile: usize, overlap: usize) -> Result<Tensor> {
        let s = x.shape();
        self.check_input(s)?;
        if tile <= overlap {
            return Err(Error::InvalidArgument(format!(
                "tile size {tile} must exceed overlap {overlap}"
            )));
        }
        if s.h <= tile && s.w <= tile {
            return self.forward(x);
        }
        let up = self.config.upscale();
        let out_shape = Shape::new(s.n, 3, s.h * up, s.w * up);
        let mut acc = vec![0.0f32; out_shape.len()];
        let mut hits = vec![0u32; out_shape.len()];
        for y0 in tile_starts(s.h, tile, overlap) {
            for x0 in tile_starts(s.w, tile, overlap) {
                let th = tile.min(s.h);
                let tw = tile.min(s.w);
                let patch = self.forward(&x.crop(y0, x0, th, tw)?)?;
                for n in 0..s.n {
                    for c in 0..3 {
                        for py in 0..th * up {
                            for px in 0..tw * up {
                                let o = ((n * 3 + c) * out_shape.h + y0 * up + py) * out_shape.w
                                    + x0 * up
                                    + px;
                                acc[o] += patch.at(n, c, py, px);
                                hits[o] += 1;
                            }
                        }
                    }
                }
            }
        }
        for (a, &h) in acc.iter_mut().zip(&hits) {
            *a /= h as f32;
        }
        Tensor::from_vec(out_shape, acc)
    }
}

fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let step = tile - overlap;
    let mut starts: Vec<usize> = (0..)
        .map(|i| i * step)
        .take_while(|&s| s + tile < len)
        .collect();
    starts.push(len - tile);
    starts
}

/// The primitive operations the network is written against, implemented once
/// eagerly on tensors and once recording onto a tape.
trait Exec {
    type V: Clone;
    fn shape(&self, x: &Self::V) -> Shape;
    fn conv(&mut self, x: &Self::V, slot: ConvSlot) -> Result<Self::V>;
    fn leaky_relu(&mut self, x: &Self::V, slope: f32) -> Self::V;
    fn relu(&mut self, x: &Self::V) -> Self::V;
    fn sigmoid(&mut self, x: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale_channels(&mut self, x: &Self::V, a: &Self::V) -> Result<Self::V>;
    fn concat(&mut self, parts: &[Self::V]) -> Result<Self::V>;
    fn pixel_shuffle(&mut self, x: &Self::V, s: usize) -> Result<Self::V>;
    fn contrast_pool(&mut self, x: &Self::V) -> Self::V;
}

struct Eager<'a> {
    store: &'a ParamStore,
}

impl Exec for Eager<'_> {
    type V = Tensor;

    fn shape(&self, x: &Tensor) -> Shape {
        x.shape()
    }

    fn conv(&mut self, x: &Tensor, slot: ConvSlot) -> Result<Tensor> {
        ops::conv2d_raw(
            x,
            &self.store.get(slot.kernel).value,
            &self.store.get(slot.bias).value,
            slot.pad,
        )
    }

    fn leaky_relu(&mut self, x: &Tensor, slope: f32) -> Tensor {
        ops::leaky_relu(x, slope)
    }

    fn relu(&mut self, x: &Tensor) -> Tensor {
        ops::relu(x)
    }

    fn sigmoid(&mut self, x: &Tensor) -> Tensor {
        ops::sigmoid(x)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        ops::add(a, b)
    }

    fn scale_channels(&mut self, x: &Tensor, a: &Tensor) -> Result<Tensor> {
        ops::scale_channels(x, a)
    }

    fn concat(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let refs: Vec<&Tensor> = parts.iter().collect();
        ops::concat_channels(&refs)
    }

    fn pixel_shuffle(&mut self, x: &Tensor, s: usize) -> Result<Tensor> {
        ops::pixel_shuffle(x, s)
    }

    fn contrast_pool(&mut self, x: &Tensor) -> Tensor {
        ops::global_contrast_pool(x)
    }
}

struct Recording<'a> {
    tape: &'a mut Tape,
    store: &'a ParamStore,
}

impl Exec for Recording<'_> {
    type V = Var;

    fn shape(&self, x: &Var) -> Shape {
        self.tape.value(*x).shape()
    }

    fn conv(&mut self, x: &Var, slot: ConvSlot) -> Result<Var> {
        let k = self.tape.param(self.store, slot.kernel);
        let b = self.tape.param(self.store, slot.bias);
        self.tape.conv2d(*x, k, b, slot.pad)
    }

    fn leaky_relu(&mut self, x: &Var, slope: f32) -> Var {
        self.tape.leaky_relu(*x, slope)
    }

    fn relu(&mut self, x: &Var) -> Var {
        self.tape.relu(*x)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        self.tape.sigmoid(*x)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(*a, *b)
    }

    fn scale_channels(&mut self, x: &Var, a: &Var) -> Result<Var> {
        self.tape.scale_channels(*x, *a)
    }

    fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.tape.concat_channels(parts)
    }

    fn pixel_shuffle(&mut self, x: &Var, s: usize) -> Result<Var> {
        self.tape.pixel_shuffle(*x, s)
    }

    fn contrast_pool(&mut self, x: &Var) -> Var {
        self.tape.global_contrast_pool(*x)
    }
}

fn expect_channels<E: Exec>(e: &E, x: &E::V, expected: usize, op: &'static str) -> Result<()> {
    let actual = e.shape(x).c;
    if actual != expected {
        return Err(Error::Channels {
            op,
            expected,
            actual,
        });
    }
    Ok(())
}

fn irb<E: Exec>(e: &mut E, p: &IrbParams, x: &E::V, cfg: &ModelConfig) -> Result<E::V> {
    expect_channels(e, x, cfg.channels, "irb_forward")?;
    let pre = e.conv(x, p.conv1)?;
    let f1 = e.leaky_relu(&pre, cfg.lrelu_slope);
    let f2 = e.conv(&f1, p.conv2)?;
    let sum = e.add(x, &f2)?;
    let fused = e.conv(&sum, p.fuse)?;
    if cfg.irb_f1 {
        let cat = e.concat(&[fused, f1])?;
        e.conv(&cat, p.out)
    } else {
        e.conv(&fused, p.out)
    }
}

fn cca<E: Exec>(e: &mut E, p: &CcaParams, x: &E::V, residual: bool) -> Result<E::V> {
    let z = e.contrast_pool(x);
    let d = e.conv(&z, p.down)?;
    let d = e.relu(&d);
    let u = e.conv(&d, p.up)?;
    let w = e.sigmoid(&u);
    let scaled = e.scale_channels(x, &w)?;
    if residual {
        e.add(x, &scaled)
    } else {
        Ok(scaled)
    }
}

fn run_network<E: Exec>(m: &IrnetModel, e: &mut E, x: E::V) -> Result<E::V> {
    let cfg = &m.config;
    let mut feat = e.conv(&x, m.head)?;
    let mut scales = Vec::with_capacity(m.groups.len());
    for g in &m.groups {
        let refined = irb(e, &g.irb, &feat, cfg)?;
        let attended = cca(e, &g.cca, &refined, cfg.cca_residual)?;
        feat = e.add(&feat, &attended)?;
        scales.push(feat.clone());
    }
    let cat = e.concat(&scales)?;
    let fused = e.conv(&cat, m.fusion1)?;
    let fused = e.leaky_relu(&fused, cfg.lrelu_slope);
    let fused = e.conv(&fused, m.fusion2)?;
    let t = e.conv(&fused, m.tail)?;
    match &m.upsampler {
        None => Ok(t),
        Some(up) => {
            let u = e.conv(&t, up.up1)?;
            let u = e.pixel_shuffle(&u, 2)?;
            let u = e.relu(&u);
            let u = e.conv(&u, up.up2)?;
            e.pixel_shuffle(&u, 2)
        }
    }
}
