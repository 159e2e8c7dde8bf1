//! Frame-wise 2-D convolution and its transpose, lowered to GEMM through
//! im2col / col2im.

use crate::error::{Error, Result};
use crate::tensor::{matmul, Scalar, Tensor};

/// Kernel, optional bias and geometry of a (transposed) convolution.
///
/// For [`conv2d`] the weight is `[Cout, Cin, k, k]`. [`conv_transpose2d`]
/// reuses the same tensor as the adjoint map, so its weight reads as
/// `[Cin_t, Cout_t, k, k]` with `Cin_t` the channels it consumes.
#[derive(Clone, Debug)]
pub struct Conv2dParams<F: Scalar> {
    pub weight: Tensor<F>,
    pub bias: Option<Tensor<F>>,
    pub stride: usize,
    pub padding: usize,
}

impl<F: Scalar> Conv2dParams<F> {
    pub fn new(weight: Tensor<F>, bias: Option<Tensor<F>>, stride: usize, padding: usize) -> Self {
        Conv2dParams {
            weight,
            bias,
            stride,
            padding,
        }
    }

    /// Stride 1 with padding that keeps odd kernels shape-preserving.
    pub fn same(weight: Tensor<F>, bias: Option<Tensor<F>>) -> Self {
        let k = weight.shape().get(2).copied().unwrap_or(1);
        Conv2dParams::new(weight, bias, 1, k.saturating_sub(1) / 2)
    }
}

#[derive(Clone, Copy, Debug)]
struct Plane {
    c: usize,
    h: usize,
    w: usize,
}

#[derive(Clone, Copy, Debug)]
struct Window {
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// `[C,H,W]` or `[N,C,H,W]` → (batch, channels, height, width).
fn split_batch(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::invalid_shape(
            op,
            format!("expected [C,H,W] or [N,C,H,W], got {shape:?}"),
        )),
    }
}

fn with_batch(batched: bool, n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if batched {
        vec![n, c, h, w]
    } else {
        vec![c, h, w]
    }
}

fn conv_extent(op: &'static str, extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = extent + 2 * pad;
    if stride == 0 || padded < k || !(padded - k).is_multiple_of(stride) {
        return Err(Error::invalid_shape(
            op,
            format!("output extent ({extent} + 2*{pad} - {k})/{stride} + 1 is not integral"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// Columns `[c·kh·kw, oh·ow]` of the sliding windows over `img` `[c,h,w]`.
fn im2col<F: Scalar>(img: &[F], p: Plane, win: Window, col: &mut [F]) {
    let spatial = win.oh * win.ow;
    let mut row = 0;
    for ci in 0..p.c {
        let chan = &img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..win.kh {
            for kj in 0..win.kw {
                let dst_rows = &mut col[row * spatial..(row + 1) * spatial];
                for oy in 0..win.oh {
                    let dst = &mut dst_rows[oy * win.ow..(oy + 1) * win.ow];
                    let iy = (oy * win.stride + ki) as isize - win.pad as isize;
                    if iy < 0 || iy >= p.h as isize {
                        dst.fill(F::zero());
                        continue;
                    }
                    let src = &chan[iy as usize * p.w..(iy as usize + 1) * p.w];
                    if win.stride == 1 {
                        let (lo, hi) = valid_span(kj, win.pad, win.ow, p.w);
                        dst[..lo].fill(F::zero());
                        dst[hi..].fill(F::zero());
                        if lo < hi {
                            let s = lo + kj - win.pad;
                            dst[lo..hi].copy_from_slice(&src[s..s + (hi - lo)]);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * win.stride + kj) as isize - win.pad as isize;
                            *d = if ix >= 0 && ix < p.w as isize {
                                src[ix as usize]
                            } else {
                                F::zero()
                            };
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `img`.
fn col2im<F: Scalar>(col: &[F], p: Plane, win: Window, img: &mut [F]) {
    let spatial = win.oh * win.ow;
    let mut row = 0;
    for ci in 0..p.c {
        let chan = &mut img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..win.kh {
            for kj in 0..win.kw {
                let src_rows = &col[row * spatial..(row + 1) * spatial];
                for oy in 0..win.oh {
                    let iy = (oy * win.stride + ki) as isize - win.pad as isize;
                    if iy < 0 || iy >= p.h as isize {
                        continue;
                    }
                    let src = &src_rows[oy * win.ow..(oy + 1) * win.ow];
                    let dst = &mut chan[iy as usize * p.w..(iy as usize + 1) * p.w];
                    if win.stride == 1 {
                        let (lo, hi) = valid_span(kj, win.pad, win.ow, p.w);
                        if lo < hi {
                            let s = lo + kj - win.pad;
                            for (d, &v) in dst[s..s + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                                *d += v;
                            }
                        }
                    } else {
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * win.stride + kj) as isize - win.pad as isize;
                            if ix >= 0 && ix < p.w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Output columns `lo..hi` whose stride-1 tap `kj` lands inside `[0, w)`.
fn valid_span(kj: usize, pad: usize, ow: usize, w: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).min(ow);
    let hi = (w + pad).saturating_sub(kj).min(ow).max(lo);
    (lo, hi)
}

fn check_bias<F: Scalar>(op: &'static str, bias: Option<&Tensor<F>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(Error::shape(op, b.shape(), &[channels]));
        }
    }
    Ok(())
}

fn add_bias<F: Scalar>(out: &mut [F], bias: &[F], spatial: usize) {
    for (chan, &b) in out.chunks_mut(spatial).zip(bias.iter().cycle()) {
        chan.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<F: Scalar>(g: &[F], channels: usize, spatial: usize) -> Vec<F> {
    let mut gb = vec![F::zero(); channels];
    for (i, chan) in g.chunks(spatial).enumerate() {
        gb[i % channels] += chan.iter().copied().sum::<F>();
    }
    gb
}

/// Cross-correlation plus bias over `[Cin,H,W]` or a batch `[N,Cin,H,W]`.
pub fn conv2d<F: Scalar>(x: &Tensor<F>, p: &Conv2dParams<F>) -> Result<Tensor<F>> {
    const OP: &str = "conv2d";
    let (n, cin, h, w) = split_batch(OP, x.shape())?;
    let (cout, wc, kh, kw) = match *p.weight.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::invalid_shape(
                OP,
                format!("weight must be rank 4, got {:?}", p.weight.shape()),
            ))
        }
    };
    if wc != cin {
        return Err(Error::shape(OP, x.shape(), p.weight.shape()));
    }
    check_bias(OP, p.bias.as_ref(), cout)?;
    let oh = conv_extent(OP, h, kh, p.stride, p.padding)?;
    let ow = conv_extent(OP, w, kw, p.stride, p.padding)?;

    let plane = Plane { c: cin, h, w };
    let win = Window {
        kh,
        kw,
        stride: p.stride,
        pad: p.padding,
        oh,
        ow,
    };
    let kdim = cin * kh * kw;
    let spatial = oh * ow;
    let in_size = cin * h * w;
    let out_size = cout * spatial;

    let mut out = vec![F::zero(); n * out_size];
    let mut col = vec![F::zero(); kdim * spatial];
    for b in 0..n {
        im2col(&x.data()[b * in_size..(b + 1) * in_size], plane, win, &mut col);
        matmul(
            false,
            false,
            cout,
            spatial,
            kdim,
            p.weight.data(),
            &col,
            F::zero(),
            &mut out[b * out_size..(b + 1) * out_size],
        );
    }
    if let Some(bias) = &p.bias {
        add_bias(&mut out, bias.data(), spatial);
    }

    let mut inputs = vec![x.clone(), p.weight.clone()];
    inputs.extend(p.bias.iter().cloned());
    let shape = with_batch(x.shape().len() == 4, n, cout, oh, ow);
    Ok(Tensor::from_op(OP, shape, out, inputs, move |inp, _, g| {
        let (x, wt) = (&inp[0], &inp[1]);
        let mut col = vec![F::zero(); kdim * spatial];
        let mut gx = x.requires_grad().then(|| vec![F::zero(); n * in_size]);
        let mut gw = wt.requires_grad().then(|| vec![F::zero(); cout * kdim]);
        let mut dcol = vec![F::zero(); kdim * spatial];
        for b in 0..n {
            let gout = &g[b * out_size..(b + 1) * out_size];
            if let Some(gw) = gw.as_mut() {
                im2col(&x.data()[b * in_size..(b + 1) * in_size], plane, win, &mut col);
                matmul(false, true, cout, kdim, spatial, gout, &col, F::one(), gw);
            }
            if let Some(gx) = gx.as_mut() {
                matmul(true, false, kdim, spatial, cout, wt.data(), gout, F::zero(), &mut dcol);
                col2im(&dcol, plane, win, &mut gx[b * in_size..(b + 1) * in_size]);
            }
        }
        let mut grads = vec![gx, gw];
        if inp.len() == 3 {
            grads.push(inp[2].requires_grad().then(|| bias_grad(g, cout, spatial)));
        }
        grads
    }))
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same kernel.
/// Output extent is `(H - 1)·stride - 2·pad + k`.
pub fn conv_transpose2d<F: Scalar>(x: &Tensor<F>, p: &Conv2dParams<F>) -> Result<Tensor<F>> {
    const OP: &str = "conv_transpose2d";
    let (n, cin, h, w) = split_batch(OP, x.shape())?;
    let (wc, cout, kh, kw) = match *p.weight.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::invalid_shape(
                OP,
                format!("weight must be rank 4, got {:?}", p.weight.shape()),
            ))
        }
    };
    if wc != cin {
        return Err(Error::shape(OP, x.shape(), p.weight.shape()));
    }
    check_bias(OP, p.bias.as_ref(), cout)?;
    if p.stride == 0 {
        return Err(Error::invalid_shape(OP, "stride must be positive"));
    }
    let full_h = (h - 1) * p.stride + kh;
    let full_w = (w - 1) * p.stride + kw;
    if full_h <= 2 * p.padding || full_w <= 2 * p.padding {
        return Err(Error::invalid_shape(
            OP,
            format!("padding {} consumes the whole output", p.padding),
        ));
    }
    let oh = full_h - 2 * p.padding;
    let ow = full_w - 2 * p.padding;

    // The output plays the role of the conv2d input.
    let plane = Plane { c: cout, h: oh, w: ow };
    let win = Window {
        kh,
        kw,
        stride: p.stride,
        pad: p.padding,
        oh: h,
        ow: w,
    };
    let kdim = cout * kh * kw;
    let spatial = h * w;
    let in_size = cin * spatial;
    let out_size = cout * oh * ow;

    let mut out = vec![F::zero(); n * out_size];
    let mut col = vec![F::zero(); kdim * spatial];
    for b in 0..n {
        matmul(
            true,
            false,
            kdim,
            spatial,
            cin,
            p.weight.data(),
            &x.data()[b * in_size..(b + 1) * in_size],
            F::zero(),
            &mut col,
        );
        col2im(&col, plane, win, &mut out[b * out_size..(b + 1) * out_size]);
    }
    if let Some(bias) = &p.bias {
        add_bias(&mut out, bias.data(), oh * ow);
    }

    let mut inputs = vec![x.clone(), p.weight.clone()];
    inputs.extend(p.bias.iter().cloned());
    let shape = with_batch(x.shape().len() == 4, n, cout, oh, ow);
    Ok(Tensor::from_op(OP, shape, out, inputs, move |inp, _, g| {
        let (x, wt) = (&inp[0], &inp[1]);
        let mut dcol = vec![F::zero(); kdim * spatial];
        let mut gx = x.requires_grad().then(|| vec![F::zero(); n * in_size]);
        let mut gw = wt.requires_grad().then(|| vec![F::zero(); cin * kdim]);
        for b in 0..n {
            im2col(&g[b * out_size..(b + 1) * out_size], plane, win, &mut dcol);
            if let Some(gx) = gx.as_mut() {
                matmul(
                    false,
                    false,
                    cin,
                    spatial,
                    kdim,
                    wt.data(),
                    &dcol,
                    F::zero(),
                    &mut gx[b * in_size..(b + 1) * in_size],
                );
            }
            if let Some(gw) = gw.as_mut() {
                matmul(
                    false,
                    true,
                    cin,
                    kdim,
                    spatial,
                    &x.data()[b * in_size..(b + 1) * in_size],
                    &dcol,
                    F::one(),
                    gw,
                );
            }
        }
        let mut grads = vec![gx, gw];
        if inp.len() == 3 {
            grads.push(inp[2].requires_grad().then(|| bias_grad(g, cout, oh * ow)));
        }
        grads
    }))
}
