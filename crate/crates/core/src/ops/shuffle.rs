use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Sub-pixel rearrangement: `(N, C*s^2, H, W) -> (N, C, H*s, W*s)` with
/// `out[n, c, h*s + dy, w*s + dx] = in[n, c*s^2 + dy*s + dx, h, w]`.
pub fn pixel_shuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let out_shape = shuffled_shape(x.shape(), s)?;
    let inp = x.shape();
    let mut out = Tensor::zeros(out_shape);
    let od = out.data_mut();
    let xd = x.data();
    let mut i = 0;
    for n in 0..inp.n {
        for cin in 0..inp.c {
            let (c, sub) = (cin / (s * s), cin % (s * s));
            let (dy, dx) = (sub / s, sub % s);
            for h in 0..inp.h {
                let row = ((n * out_shape.c + c) * out_shape.h + h * s + dy) * out_shape.w;
                for w in 0..inp.w {
                    od[row + w * s + dx] = xd[i];
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse permutation of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle(y: &Tensor, s: usize) -> Result<Tensor> {
    let o = y.shape();
    if s == 0 || !o.h.is_multiple_of(s) || !o.w.is_multiple_of(s) {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("spatial dims divisible by {s}"),
            o,
        ));
    }
    let inp = Shape::new(o.n, o.c * s * s, o.h / s, o.w / s);
    let mut x = Tensor::zeros(inp);
    let xd = x.data_mut();
    let yd = y.data();
    let mut i = 0;
    for n in 0..inp.n {
        for cin in 0..inp.c {
            let (c, sub) = (cin / (s * s), cin % (s * s));
            let (dy, dx) = (sub / s, sub % s);
            for h in 0..inp.h {
                let row = ((n * o.c + c) * o.h + h * s + dy) * o.w;
                for w in 0..inp.w {
                    xd[i] = yd[row + w * s + dx];
                    i += 1;
                }
            }
        }
    }
    Ok(x)
}

fn shuffled_shape(x: Shape, s: usize) -> Result<Shape> {
    if s == 0 || !x.c.is_multiple_of(s * s) {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("channel count divisible by {}", s * s),
            x,
        ));
    }
    Ok(Shape::new(x.n, x.c / (s * s), x.h * s, x.w * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_channels_to_grid() {
        let x = Tensor::from_vec(Shape::new(1, 4, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shape_law() {
        let x = Tensor::zeros(Shape::new(1, 48, 5, 7));
        assert_eq!(
            pixel_shuffle(&x, 4).unwrap().shape(),
            Shape::new(1, 3, 20, 28)
        );
        assert!(pixel_shuffle(&Tensor::zeros(Shape::new(1, 6, 2, 2)), 2).is_err());
    }

    #[test]
    fn two_stage_matches_brute_force_permutation() {
        let s0 = Shape::new(1, 16, 2, 2);
        let x = Tensor::from_fn(s0, |_, c, h, w| (c * 4 + h * 2 + w) as f32);
        let y = pixel_shuffle(&pixel_shuffle(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 8, 8));
        // Search every input index for the value landing at each output site,
        // following the shuffle definition twice.
        for oy in 0..8 {
            for ox in 0..8 {
                // Second shuffle: (c1, h1, w1) at 4x4 with c1 in 0..4.
                let (h1, dy2) = (oy / 2, oy % 2);
                let (w1, dx2) = (ox / 2, ox % 2);
                let c1 = dy2 * 2 + dx2;
                // First shuffle: 4x4 grid from 16 channels at 2x2.
                let (h0, dy1) = (h1 / 2, h1 % 2);
                let (w0, dx1) = (w1 / 2, w1 % 2);
                let c0 = c1 * 4 + dy1 * 2 + dx1;
                let mut found = None;
                for c in 0..16 {
                    for h in 0..2 {
                        for w in 0..2 {
                            if (c, h, w) == (c0, h0, w0) {
                                found = Some(x.at(0, c, h, w));
                            }
                        }
                    }
                }
                assert_eq!(y.at(0, 0, oy, ox), found.unwrap());
            }
        }
    }

    #[test]
    fn unshuffle_inverts() {
        let x = Tensor::from_fn(Shape::new(2, 12, 3, 2), |n, c, h, w| {
            (n * 1000 + c * 100 + h * 10 + w) as f32
        });
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(pixel_unshuffle(&y, 2).unwrap(), x);
    }
}
