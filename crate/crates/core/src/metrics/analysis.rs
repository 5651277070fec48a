//! Luminance statistics of SDR/HDR pairs, 1-D profiles, and jointly
//! normalized mean feature maps.

use crate::data::{load_pair, DatasetManifest, ImagePair};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LumaStandard {
    Rec709,
    Rec2020,
}

impl LumaStandard {
    pub fn coefficients(self) -> [f32; 3] {
        match self {
            LumaStandard::Rec709 => [0.2126, 0.7152, 0.0722],
            LumaStandard::Rec2020 => [0.2627, 0.6780, 0.0593],
        }
    }
}

/// Weighted RGB sum, `(N, 3, H, W) -> (N, 1, H, W)`.
pub fn luma(x: &Tensor, standard: LumaStandard) -> Result<Tensor> {
    let s = x.shape();
    if s.c != 3 {
        return Err(Error::Channels {
            op: "luma",
            expected: 3,
            actual: s.c,
        });
    }
    let [kr, kg, kb] = standard.coefficients();
    let mut data = Vec::with_capacity(s.n * s.plane());
    for n in 0..s.n {
        let (r, g, b) = (x.plane(n, 0), x.plane(n, 1), x.plane(n, 2));
        data.extend((0..s.plane()).map(|i| kr * r[i] + kg * g[i] + kb * b[i]));
    }
    Tensor::from_vec(Shape::new(s.n, 1, s.h, s.w), data)
}

/// Luminance at the brightest and darkest HDR pixel, and the SDR luminance at
/// the same positions.
#[derive(Clone, Debug, PartialEq)]
pub struct LuminanceRecord {
    pub name: String,
    pub hdr_max_luma: f32,
    pub sdr_luma_at_hdr_argmax: f32,
    pub hdr_min_luma: f32,
    pub sdr_luma_at_hdr_argmin: f32,
    /// `(row, col)` of the HDR maximum and minimum.
    pub argmax: (usize, usize),
    pub argmin: (usize, usize),
}

impl LuminanceRecord {
    pub fn max_gap(&self) -> f32 {
        self.hdr_max_luma - self.sdr_luma_at_hdr_argmax
    }

    pub fn min_gap(&self) -> f32 {
        self.hdr_min_luma - self.sdr_luma_at_hdr_argmin
    }
}

/// SDR luma uses Rec.709 coefficients and HDR luma Rec.2020. Ties resolve to
/// the first pixel in row-major order.
pub fn luminance_record(pair: &ImagePair) -> Result<LuminanceRecord> {
    luminance_record_with(pair, LumaStandard::Rec709, LumaStandard::Rec2020)
}

pub fn luminance_record_with(
    pair: &ImagePair,
    sdr_standard: LumaStandard,
    hdr_standard: LumaStandard,
) -> Result<LuminanceRecord> {
    let ys = luma(&pair.sdr, sdr_standard)?;
    let yh = luma(&pair.hdr, hdr_standard)?;
    if ys.shape() != yh.shape() || yh.is_empty() {
        return Err(Error::shape("analyze_luminance", yh.shape(), ys.shape()));
    }
    let w = yh.shape().w;
    let (mut imax, mut imin) = (0, 0);
    for (i, &v) in yh.data().iter().enumerate() {
        if v > yh.data()[imax] {
            imax = i;
        }
        if v < yh.data()[imin] {
            imin = i;
        }
    }
    Ok(LuminanceRecord {
        name: pair.name.clone(),
        hdr_max_luma: yh.data()[imax],
        sdr_luma_at_hdr_argmax: ys.data()[imax],
        hdr_min_luma: yh.data()[imin],
        sdr_luma_at_hdr_argmin: ys.data()[imin],
        argmax: (imax / w, imax % w),
        argmin: (imin / w, imin % w),
    })
}

/// One record per manifest entry, in manifest order.
pub fn analyze_luminance(manifest: &DatasetManifest) -> Result<Vec<LuminanceRecord>> {
    par::map_indices(manifest.entries.len(), |i| {
        luminance_record(&load_pair(&manifest.entries[i])?)
    })
    .into_iter()
    .collect()
}

/// Mean over records of `(hdr_max - sdr_at_argmax, |hdr_min - sdr_at_argmin|)`.
pub fn mean_gaps(records: &[LuminanceRecord]) -> (f64, f64) {
    let n = records.len().max(1) as f64;
    let hi = records.iter().map(|r| r.max_gap() as f64).sum::<f64>() / n;
    let lo = records
        .iter()
        .map(|r| r.min_gap().abs() as f64)
        .sum::<f64>()
        / n;
    (hi, lo)
}

/// Luma along row `row`, columns `x0..x1`, of two images and their ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub a: Vec<f32>,
    pub b: Vec<f32>,
    pub ratio: Vec<f32>,
}

/// Denominators are floored at `1e-6`.
pub fn profile_ratio(
    a: &Tensor,
    b: &Tensor,
    row: usize,
    x0: usize,
    x1: usize,
    standard: LumaStandard,
) -> Result<Profile> {
    let (la, lb) = (luma(a, standard)?, luma(b, standard)?);
    let (sa, sb) = (la.shape(), lb.shape());
    for s in [sa, sb] {
        if row >= s.h || x0 >= x1 || x1 > s.w {
            return Err(Error::InvalidArgument(format!(
                "profile row {row}, columns {x0}..{x1} out of bounds for {}x{} image",
                s.w, s.h
            )));
        }
    }
    let pa: Vec<f32> = (x0..x1).map(|x| la.at(0, 0, row, x)).collect();
    let pb: Vec<f32> = (x0..x1).map(|x| lb.at(0, 0, row, x)).collect();
    let ratio = pa.iter().zip(&pb).map(|(p, q)| p / q.max(1e-6)).collect();
    Ok(Profile {
        a: pa,
        b: pb,
        ratio,
    })
}

/// Channel mean of batch item 0, `(1, 1, H, W)`.
pub fn channel_mean(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut acc = vec![0.0f64; s.plane()];
    for c in 0..s.c {
        for (a, &v) in acc.iter_mut().zip(x.plane(0, c)) {
            *a += v as f64;
        }
    }
    let data = acc.iter().map(|v| (v / s.c.max(1) as f64) as f32).collect();
    Tensor::from_vec(Shape::new(1, 1, s.h, s.w), data).expect("plane sized")
}

/// Averages each input over channels, then shifts both maps by their joint
/// minimum and divides by the larger of the two ranges. A zero range yields
/// zero maps.
pub fn normalize_mean_maps(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.h, sa.w) != (sb.h, sb.w) {
        return Err(Error::shape("normalize_mean_maps", sa, sb));
    }
    let (ma, mb) = (channel_mean(a), channel_mean(b));
    let bounds = |t: &Tensor| {
        t.data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (lo_a, hi_a) = bounds(&ma);
    let (lo_b, hi_b) = bounds(&mb);
    let lo = lo_a.min(lo_b);
    let scale = (hi_a - lo_a).max(hi_b - lo_b);
    if !(scale > 0.0) {
        return Ok((Tensor::zeros(ma.shape()), Tensor::zeros(mb.shape())));
    }
    let norm = |t: &Tensor| t.map(|v| (v - lo) / scale);
    Ok((norm(&ma), norm(&mb)))
}
