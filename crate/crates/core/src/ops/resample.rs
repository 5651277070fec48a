//! Antialiased bicubic downsampling.
//!
//! Uses the Keys cubic with `a = -0.5` stretched by the scale factor (the
//! usual `imresize` convention when shrinking), weights renormalized to sum
//! to one, and source indices clamped at the borders.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Taps `(source index, weight)` for every output position along one axis.
pub fn axis_taps(in_len: usize, s: usize) -> Vec<Vec<(usize, f64)>> {
    let out_len = in_len / s;
    let sf = s as f64;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * sf - 0.5;
            let first = (center - 2.0 * sf).floor() as isize;
            let last = (center + 2.0 * sf).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in first..=last {
                let wgt = cubic((center - j as f64) / sf);
                if wgt == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, in_len as isize - 1) as usize;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Downsample H and W by `s`; results clamped to `[0, 1]`.
pub fn bicubic_downsample(x: &Tensor, s: usize) -> Result<Tensor> {
    let sh = x.shape();
    if s == 0 || !sh.h.is_multiple_of(s) || !sh.w.is_multiple_of(s) {
        return Err(Error::shape(
            "bicubic_downsample",
            format!("height and width divisible by {s}"),
            sh,
        ));
    }
    let (oh, ow) = (sh.h / s, sh.w / s);
    let rows = axis_taps(sh.h, s);
    let cols = axis_taps(sh.w, s);
    let out_shape = Shape::new(sh.n, sh.c, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let mut tmp = vec![0.0f64; oh * sh.w];
    for n in 0..sh.n {
        for c in 0..sh.c {
            let plane = x.plane(n, c);
            for (oy, taps) in rows.iter().enumerate() {
                for xx in 0..sh.w {
                    tmp[oy * sh.w + xx] = taps
                        .iter()
                        .map(|&(iy, wt)| wt * plane[iy * sh.w + xx] as f64)
                        .sum();
                }
            }
            for oy in 0..oh {
                for (ox, taps) in cols.iter().enumerate() {
                    let v: f64 = taps.iter().map(|&(ix, wt)| wt * tmp[oy * sh.w + ix]).sum();
                    out.set(n, c, oy, ox, (v as f32).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(out)
}
