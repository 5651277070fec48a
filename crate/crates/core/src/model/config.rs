use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Same-resolution SDR to HDR.
    Itm,
    /// Joint x4 super-resolution and inverse tone mapping.
    SrItm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Itm => "itm",
            Mode::SrItm => "sritm",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "itm" => Ok(Mode::Itm),
            "sritm" | "sr-itm" | "sr_itm" => Ok(Mode::SrItm),
            other => Err(Error::Config(format!("unknown mode {other:?} (itm|sritm)"))),
        }
    }
}

/// Hyperparameters that fully determine the network graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub n_blocks: usize,
    pub channels: usize,
    pub cca_reduction: usize,
    pub lrelu_slope: f32,
    /// `x + x * w` after attention when set, `x * w` otherwise.
    pub cca_residual: bool,
    /// Upscale factor of the SR head. Only 4 is supported (two x2 stages).
    pub scale: usize,
    /// Concatenate the post-activation feature inside each block. Turning
    /// this off gives the "without F1" ablation with a narrower output conv.
    pub irb_f1: bool,
}

impl ModelConfig {
    pub fn itm() -> Self {
        ModelConfig {
            mode: Mode::Itm,
            n_blocks: 2,
            channels: 64,
            cca_reduction: 16,
            lrelu_slope: 0.1,
            cca_residual: true,
            scale: 4,
            irb_f1: true,
        }
    }

    pub fn sritm() -> Self {
        ModelConfig {
            mode: Mode::SrItm,
            n_blocks: 5,
            ..Self::itm()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Itm => Self::itm(),
            Mode::SrItm => Self::sritm(),
        }
    }

    pub fn with_blocks(mut self, n: usize) -> Self {
        self.n_blocks = n;
        self
    }

    pub fn with_channels(mut self, c: usize) -> Self {
        self.channels = c;
        self
    }

    /// Output spatial magnification.
    pub fn upscale(&self) -> usize {
        match self.mode {
            Mode::Itm => 1,
            Mode::SrItm => self.scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if self.channels == 0 || !self.channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "channels must be a positive even number, got {}",
                self.channels
            )));
        }
        if self.cca_reduction == 0 || !self.channels.is_multiple_of(self.cca_reduction) {
            return Err(Error::Config(format!(
                "channels ({}) must be divisible by cca_reduction ({})",
                self.channels, self.cca_reduction
            )));
        }
        if !(self.lrelu_slope > 0.0 && self.lrelu_slope < 1.0) {
            return Err(Error::Config(format!(
                "lrelu_slope must lie in (0, 1), got {}",
                self.lrelu_slope
            )));
        }
        if self.mode == Mode::SrItm && self.scale != 4 {
            return Err(Error::Config(format!(
                "sritm upsampler is two x2 pixel-shuffle stages; scale must be 4, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Textual `key=value` form stored in checkpoints.
    pub fn to_record(&self) -> String {
        format!(
            "mode={}\nn_blocks={}\nchannels={}\ncca_reduction={}\nlrelu_slope={}\ncca_residual={}\nscale={}\nirb_f1={}\n",
            self.mode,
            self.n_blocks,
            self.channels,
            self.cca_reduction,
            self.lrelu_slope,
            self.cca_residual,
            self.scale,
            self.irb_f1
        )
    }

    /// Parses [`to_record`](Self::to_record) output. Missing keys keep the
    /// mode's defaults; unknown keys are rejected.
    pub fn from_record(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mode = pairs
            .iter()
            .find(|(k, _)| k == "mode")
            .map(|(_, v)| v.parse::<Mode>())
            .transpose()?
            .unwrap_or(Mode::Itm);
        let mut cfg = ModelConfig::for_mode(mode);
        for (k, v) in &pairs {
            match k.as_str() {
                "mode" => {}
                "n_blocks" => cfg.n_blocks = parse_num(k, v)?,
                "channels" => cfg.channels = parse_num(k, v)?,
                "cca_reduction" => cfg.cca_reduction = parse_num(k, v)?,
                "lrelu_slope" => cfg.lrelu_slope = parse_num(k, v)?,
                "cca_residual" => cfg.cca_residual = parse_num(k, v)?,
                "scale" => cfg.scale = parse_num(k, v)?,
                "irb_f1" => cfg.irb_f1 = parse_num(k, v)?,
                other => return Err(Error::Config(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} n={} C={}", self.mode, self.n_blocks, self.channels)
    }
}

/// Splits `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}
