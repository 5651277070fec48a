use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Shape, Tensor};

pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Derivative is taken from the negative side at exactly zero.
pub fn leaky_relu_backward(grad: &Tensor, x: &Tensor, slope: f32) -> Tensor {
    zip_map(grad, x, |g, v| if v > 0.0 { g } else { slope * g })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(grad: &Tensor, x: &Tensor) -> Tensor {
    zip_map(grad, x, |g, v| if v > 0.0 { g } else { 0.0 })
}

#[inline]
pub fn sigmoid_scalar(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Backward through sigmoid given its forward output `y`.
pub fn sigmoid_backward(grad: &Tensor, y: &Tensor) -> Tensor {
    zip_map(grad, y, |g, s| g * s * (1.0 - s))
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| f(p, q))
        .collect();
    Tensor::from_vec(a.shape(), data).expect("shapes checked by caller")
}

pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(Error::shape("add", x.shape(), y.shape()));
    }
    Ok(zip_map(x, y, |p, q| p + q))
}

pub fn sub(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(Error::shape("sub", x.shape(), y.shape()));
    }
    Ok(zip_map(x, y, |p, q| p - q))
}

/// `x[n, c, :, :] * a[n, c]`.
pub fn scale_channels(x: &Tensor, a: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let expected = Shape::new(s.n, s.c, 1, 1);
    if a.shape() != expected {
        return Err(Error::shape("scale_channels", expected, a.shape()));
    }
    let mut out = x.clone();
    let ad = a.data();
    par::for_each_chunk(out.data_mut(), s.plane(), |i, plane| {
        let k = ad[i];
        plane.iter_mut().for_each(|v| *v *= k);
    });
    Ok(out)
}

/// Returns `(grad_x, grad_a)`.
pub fn scale_channels_backward(grad: &Tensor, x: &Tensor, a: &Tensor) -> (Tensor, Tensor) {
    let s = x.shape();
    let gx = scale_channels(grad, a).expect("forward validated shapes");
    let ga = par::map_indices(s.n * s.c, |i| {
        let g = &grad.data()[i * s.plane()..(i + 1) * s.plane()];
        let v = &x.data()[i * s.plane()..(i + 1) * s.plane()];
        g.iter().zip(v).map(|(&p, &q)| (p * q) as f64).sum::<f64>() as f32
    });
    (gx, Tensor::from_vec(a.shape(), ga).expect("n*c entries"))
}

/// Stack along the channel axis, preserving part order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("concat_channels needs at least one part".into()))?
        .shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape(
                "concat_channels",
                format!("(N={}, H={}, W={})", first.n, first.h, first.w),
                s,
            ));
        }
        channels += s.c;
    }
    let out = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(out.len());
    for n in 0..first.n {
        for p in parts {
            let len = p.shape().c * first.plane();
            data.extend_from_slice(&p.data()[n * len..(n + 1) * len]);
        }
    }
    Tensor::from_vec(out, data)
}

/// Inverse of [`concat_channels`]: split into parts of the given channel widths.
pub fn split_channels(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let s = x.shape();
    if widths.iter().sum::<usize>() != s.c {
        return Err(Error::shape(
            "split_channels",
            format!("{} channels", widths.iter().sum::<usize>()),
            s,
        ));
    }
    let plane = s.plane();
    let mut parts: Vec<Vec<f32>> = widths
        .iter()
        .map(|w| Vec::with_capacity(s.n * w * plane))
        .collect();
    for n in 0..s.n {
        let mut c0 = 0;
        for (part, &w) in parts.iter_mut().zip(widths) {
            let start = (n * s.c + c0) * plane;
            part.extend_from_slice(&x.data()[start..start + w * plane]);
            c0 += w;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::from_vec(Shape::new(s.n, w, s.h, s.w), d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![2.0, -1.0, 0.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.1).data(), &[2.0, -0.1, 0.0]);
    }

    #[test]
    fn sigmoid_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let x = Tensor::randn(Shape::new(1, 1, 4, 4), 3.0, &mut rng);
        let p = sigmoid(&x);
        let q = sigmoid(&x.scale(-1.0));
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a + b - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn concat_layout_and_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::randn(Shape::new(1, 2, 3, 3), 1.0, &mut rng);
        let b = Tensor::randn(Shape::new(1, 4, 3, 3), 1.0, &mut rng);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 6, 3, 3));
        assert_eq!(&c.data()[..a.len()], a.data());
        let parts = split_channels(&c, &[2, 4]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let b = Tensor::zeros(Shape::new(1, 2, 3, 4));
        assert!(matches!(
            concat_channels(&[&a, &b]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn scale_by_ones_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::randn(Shape::new(2, 3, 4, 4), 1.0, &mut rng);
        let ones = Tensor::full(Shape::new(2, 3, 1, 1), 1.0);
        assert_eq!(scale_channels(&x, &ones).unwrap(), x);
        assert!(scale_channels(&x, &Tensor::full(Shape::new(1, 3, 1, 1), 1.0)).is_err());
    }

    #[test]
    fn add_then_negated_add_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Shape::new(1, 2, 3, 3);
        // Dyadic values keep every sum exactly representable.
        let x = Tensor::uniform(s, -4.0, 4.0, &mut rng).map(|v| (v * 64.0).round() / 64.0);
        let y = Tensor::uniform(s, -4.0, 4.0, &mut rng).map(|v| (v * 64.0).round() / 64.0);
        let back = add(&add(&x, &y).unwrap(), &y.scale(-1.0)).unwrap();
        assert_eq!(back, x);
        assert!(add(&x, &Tensor::zeros(Shape::new(1, 2, 3, 4))).is_err());
    }
}
