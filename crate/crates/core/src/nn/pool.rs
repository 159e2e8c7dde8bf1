use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn planes(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        [n, c, h, w] => Ok((n * c, h, w)),
        _ => Err(Error::invalid_shape(
            op,
            format!("expected [C,H,W] or [N,C,H,W], got {shape:?}"),
        )),
    }
}

fn resized(shape: &[usize], h: usize, w: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    let r = s.len();
    s[r - 2] = h;
    s[r - 1] = w;
    s
}

/// 2×2 / stride-2 max pooling. Returns the pooled map and, per output cell,
/// the flat input index of its maximum (first in row-major scan on ties).
pub fn maxpool2d<F: Scalar>(x: &Tensor<F>, window: usize) -> Result<(Tensor<F>, Vec<usize>)> {
    const OP: &str = "maxpool2d";
    if window != 2 {
        return Err(Error::invalid_shape(
            OP,
            format!("only a 2x2 window is supported, got {window}"),
        ));
    }
    let (planes, h, w) = planes(OP, x.shape())?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid_shape(OP, format!("extents {h}x{w} must be even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut idx = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.push(src[best]);
                idx.push(best);
            }
        }
    }
    let routes = idx.clone();
    let y = Tensor::from_op(
        OP,
        resized(x.shape(), oh, ow),
        out,
        vec![x.clone()],
        move |inp, _, g| {
            let mut gi = vec![F::zero(); inp[0].numel()];
            for (&i, &gv) in routes.iter().zip(g) {
                gi[i] += gv;
            }
            vec![Some(gi)]
        },
    );
    Ok((y, idx))
}

/// Nearest-neighbour upsampling: every pixel becomes a `factor×factor` block.
pub fn upsample_nearest<F: Scalar>(x: &Tensor<F>, factor: usize) -> Result<Tensor<F>> {
    const OP: &str = "upsample_nearest";
    if factor == 0 {
        return Err(Error::invalid_shape(OP, "factor must be positive"));
    }
    let (planes, h, w) = planes(OP, x.shape())?;
    let (oh, ow) = (h * factor, w * factor);
    let src = x.data();
    let mut out = vec![F::zero(); planes * oh * ow];
    for p in 0..planes {
        for oy in 0..oh {
            let srow = &src[(p * h + oy / factor) * w..][..w];
            let drow = &mut out[(p * oh + oy) * ow..][..ow];
            for (ox, d) in drow.iter_mut().enumerate() {
                *d = srow[ox / factor];
            }
        }
    }
    Ok(Tensor::from_op(
        OP,
        resized(x.shape(), oh, ow),
        out,
        vec![x.clone()],
        move |inp, _, g| {
            let mut gi = vec![F::zero(); inp[0].numel()];
            for p in 0..planes {
                for oy in 0..oh {
                    let grow = &g[(p * oh + oy) * ow..][..ow];
                    let irow = &mut gi[(p * h + oy / factor) * w..][..w];
                    for (ox, &gv) in grow.iter().enumerate() {
                        irow[ox / factor] += gv;
                    }
                }
            }
            vec![Some(gi)]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{fd_check, ops};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pool_picks_maximum() {
        let x = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2d(&x, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]); // (1,1)
    }

    #[test]
    fn pool_ties_route_to_first_cell() {
        let x = Tensor::<f64>::param(&[1, 2, 4], vec![7.0; 8]).unwrap();
        let (y, idx) = maxpool2d(&x, 2).unwrap();
        assert_eq!(y.data(), &[7.0, 7.0]);
        assert_eq!(idx, vec![0, 2]);
        ops::sum(&y).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_rejects_odd_extent() {
        let x = Tensor::<f64>::zeros(&[1, 3, 4]).unwrap();
        assert!(maxpool2d(&x, 2).is_err());
    }

    #[test]
    fn pool_gradient_one_cell_per_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::param(&[2, 8, 8], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (y, _) = maxpool2d(&x, 2).unwrap();
        ops::sum(&ops::scale(&y, 3.0)).backward().unwrap();
        let g = x.grad().unwrap();
        for p in 0..2 {
            for wy in 0..4 {
                for wx in 0..4 {
                    let nz = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .filter(|(dy, dx)| g[p * 64 + (2 * wy + dy) * 8 + 2 * wx + dx] != 0.0)
                        .count();
                    assert_eq!(nz, 1);
                }
            }
        }
        let probe: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let probe = Tensor::new(&[2, 4, 4], probe).unwrap();
        let err = fd_check(
            |x| Ok(ops::sum(&ops::mul(&maxpool2d(x, 2)?.0, &probe)?)),
            &x.detach(),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn upsample_replicates() {
        let x = Tensor::<f64>::new(&[1, 1, 1], vec![5.0]).unwrap();
        assert_eq!(upsample_nearest(&x, 2).unwrap().data(), &[5.0; 4]);
    }

    #[test]
    fn upsample_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::new(&[2, 3, 2], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let err = fd_check(|x| Ok(ops::sum(&ops::tanh(&upsample_nearest(x, 2)?))), &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    proptest::proptest! {
        #[test]
        fn pool_inverts_upsample(vals in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let x = Tensor::<f64>::new(&[3, 2, 2], vals).unwrap();
            let (y, _) = maxpool2d(&upsample_nearest(&x, 2).unwrap(), 2).unwrap();
            proptest::prop_assert_eq!(y.data(), x.data());
        }
    }
}
