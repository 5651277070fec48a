//! CSV writers. Numbers are printed with 6 significant digits; an infinite
//! PSNR is written as `inf`.

use std::fmt::Write as _;

use super::analysis::{LuminanceRecord, Profile};

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    };
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    let (mantissa, exp) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    };
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{mantissa}{exp}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Mean PSNR over rows with finite PSNR; infinite when every row is.
    pub fn mean_psnr(&self) -> f64 {
        let finite: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.psnr)
            .filter(|v| v.is_finite())
            .collect();
        if finite.is_empty() {
            return if self.rows.is_empty() {
                f64::NAN
            } else {
                f64::INFINITY
            };
        }
        finite.iter().sum::<f64>() / finite.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len() as f64
    }

    /// Rows left out of the PSNR mean because the error was zero.
    pub fn infinite_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.psnr.is_infinite()).count()
    }

    /// Header `image,psnr_db,ssim`, one row per image, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.name, fmt_sig6(r.psnr), fmt_sig6(r.ssim));
        }
        let _ = writeln!(
            s,
            "mean,{},{}",
            fmt_sig6(self.mean_psnr()),
            fmt_sig6(self.mean_ssim())
        );
        s
    }
}

/// Header `image,hdr_max_luma,sdr_luma_at_hdr_max,hdr_min_luma,sdr_luma_at_hdr_min,max_gap,min_gap,max_row,max_col,min_row,min_col`.
pub fn luminance_csv(records: &[LuminanceRecord]) -> String {
    let mut s = String::from(
        "image,hdr_max_luma,sdr_luma_at_hdr_max,hdr_min_luma,sdr_luma_at_hdr_min,max_gap,min_gap,max_row,max_col,min_row,min_col\n",
    );
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            fmt_sig6(r.hdr_max_luma as f64),
            fmt_sig6(r.sdr_luma_at_hdr_argmax as f64),
            fmt_sig6(r.hdr_min_luma as f64),
            fmt_sig6(r.sdr_luma_at_hdr_argmin as f64),
            fmt_sig6(r.max_gap() as f64),
            fmt_sig6(r.min_gap() as f64),
            r.argmax.0,
            r.argmax.1,
            r.argmin.0,
            r.argmin.1
        );
    }
    s
}

/// Header `x,a,b,ratio`.
pub fn profile_csv(p: &Profile, x0: usize) -> String {
    let mut s = String::from("x,a,b,ratio\n");
    for (i, ((a, b), r)) in p.a.iter().zip(&p.b).zip(&p.ratio).enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            x0 + i,
            fmt_sig6(*a as f64),
            fmt_sig6(*b as f64),
            fmt_sig6(*r as f64)
        );
    }
    s
}
