//! Image quality metrics and luminance analysis.

mod analysis;
mod quality;
mod report;

pub use analysis::{
    analyze_luminance, channel_mean, luma, luminance_record, luminance_record_with, mean_gaps,
    normalize_mean_maps, profile_ratio, LumaStandard, LuminanceRecord, Profile,
};
pub use quality::{gaussian_window, psnr, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{fmt_sig6, luminance_csv, profile_csv, EvalReport, EvalRow};
