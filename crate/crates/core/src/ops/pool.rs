use crate::par;
use crate::tensor::{Shape, Tensor};

/// Per-plane population mean and standard deviation, two-pass in `f64`.
fn plane_stats(p: &[f32]) -> (f64, f64) {
    let len = p.len() as f64;
    let mean = p.iter().map(|&v| v as f64).sum::<f64>() / len;
    let var = p
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / len;
    (mean, var.sqrt())
}

/// Contrast descriptor `std(x_c) + mean(x_c)` per (n, c), shape `(N, C, 1, 1)`.
pub fn global_contrast_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let z = par::map_indices(s.n * s.c, |i| {
        let (mean, std) = plane_stats(&x.data()[i * s.plane()..(i + 1) * s.plane()]);
        (std + mean) as f32
    });
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), z).expect("n*c entries")
}

/// `dz/dx = (x - mean) / (HW * std) + 1 / HW`; the std term is dropped where
/// the plane is constant.
pub fn global_contrast_pool_backward(grad: &Tensor, x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut gx = Tensor::zeros(s);
    let hw = s.plane() as f64;
    par::for_each_chunk(gx.data_mut(), s.plane(), |i, out| {
        let src = &x.data()[i * s.plane()..(i + 1) * s.plane()];
        let (mean, std) = plane_stats(src);
        let g = grad.data()[i] as f64;
        let inv_std = if std > 0.0 { 1.0 / (hw * std) } else { 0.0 };
        for (o, &v) in out.iter_mut().zip(src) {
            *o = (g * ((v as f64 - mean) * inv_std + 1.0 / hw)) as f32;
        }
    });
    gx
}
