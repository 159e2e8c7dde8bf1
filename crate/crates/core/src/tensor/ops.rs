//! Elementwise primitives, reductions and axis-0 structural ops.
//!
//! Binary ops require identical shapes; the only broadcast is by a scalar
//! constant (`scale`, `shift`).

use super::{numel_of, Scalar, Tensor};
use crate::error::{Error, Result};

/// Elementwise operator selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ew {
    Add,
    Sub,
    Mul,
    Min2,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Abs,
}

/// Dispatching entry point over the elementwise vocabulary. Binary operators
/// require `b`; unary ones ignore it.
pub fn ew<F: Scalar>(op: Ew, a: &Tensor<F>, b: Option<&Tensor<F>>) -> Result<Tensor<F>> {
    let need_b = || b.ok_or_else(|| Error::InvalidArgument(format!("{op:?} needs two operands")));
    match op {
        Ew::Add => add(a, need_b()?),
        Ew::Sub => sub(a, need_b()?),
        Ew::Mul => mul(a, need_b()?),
        Ew::Min2 => min2(a, need_b()?),
        Ew::Sigmoid => Ok(sigmoid(a)),
        Ew::Tanh => Ok(tanh(a)),
        Ew::Relu => Ok(relu(a)),
        Ew::Exp => Ok(exp(a)),
        Ew::Abs => Ok(abs(a)),
    }
}

fn same_shape<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn unary<F, Fwd, Bwd>(name: &'static str, a: &Tensor<F>, f: Fwd, df: Bwd) -> Tensor<F>
where
    F: Scalar,
    Fwd: Fn(F) -> F,
    Bwd: Fn(F, F) -> F + Send + Sync + 'static,
{
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(name, a.shape().to_vec(), data, vec![a.clone()], move |inp, out, g| {
        let x = inp[0].data();
        let gi = g
            .iter()
            .zip(x.iter().zip(out))
            .map(|(&g, (&x, &y))| g * df(x, y))
            .collect();
        vec![Some(gi)]
    })
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |_, _, g| vec![Some(g.to_vec()), Some(g.to_vec())],
    ))
}

pub fn sub<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |_, _, g| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
    ))
}

pub fn mul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_op(
        "mul",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |inp, _, g| {
            let (x, y) = (inp[0].data(), inp[1].data());
            let ga = inp[0]
                .requires_grad()
                .then(|| g.iter().zip(y).map(|(&g, &y)| g * y).collect());
            let gb = inp[1]
                .requires_grad()
                .then(|| g.iter().zip(x).map(|(&g, &x)| g * x).collect());
            vec![ga, gb]
        },
    ))
}

/// Elementwise minimum. The gradient goes to the smaller operand; ties go to
/// the first.
pub fn min2<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    same_shape("min2", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| if x <= y { x } else { y })
        .collect();
    Ok(Tensor::from_op(
        "min2",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |inp, _, g| {
            let (x, y) = (inp[0].data(), inp[1].data());
            let mut ga = vec![F::zero(); g.len()];
            let mut gb = vec![F::zero(); g.len()];
            for i in 0..g.len() {
                if x[i] <= y[i] {
                    ga[i] = g[i];
                } else {
                    gb[i] = g[i];
                }
            }
            vec![Some(ga), Some(gb)]
        },
    ))
}

/// Multiplication by a constant.
pub fn scale<F: Scalar>(a: &Tensor<F>, s: f64) -> Tensor<F> {
    let s = F::from_f64(s);
    unary("scale", a, move |x| x * s, move |_, _| s)
}

/// Addition of a constant.
pub fn shift<F: Scalar>(a: &Tensor<F>, s: f64) -> Tensor<F> {
    let s = F::from_f64(s);
    unary("shift", a, move |x| x + s, |_, _| F::one())
}

pub fn sigmoid<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    unary(
        "sigmoid",
        a,
        |x| F::one() / (F::one() + (-x).exp()),
        |_, y| y * (F::one() - y),
    )
}

pub fn tanh<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    unary("tanh", a, |x| x.tanh(), |_, y| F::one() - y * y)
}

/// Rectifier; the subgradient at exactly zero is 0.
pub fn relu<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    unary(
        "relu",
        a,
        |x| if x > F::zero() { x } else { F::zero() },
        |x, _| if x > F::zero() { F::one() } else { F::zero() },
    )
}

pub fn exp<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    unary("exp", a, |x| x.exp(), |_, y| y)
}

/// Absolute value; the subgradient at zero is 0.
pub fn abs<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    unary(
        "abs",
        a,
        |x| x.abs(),
        |x, _| {
            if x > F::zero() {
                F::one()
            } else if x < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        },
    )
}

pub fn sum<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    let total = a.data().iter().copied().sum();
    Tensor::from_op("sum", vec![1], vec![total], vec![a.clone()], |inp, _, g| {
        vec![Some(vec![g[0]; inp[0].numel()])]
    })
}

pub fn mean<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    let n = F::from_f64(a.numel() as f64);
    let total: F = a.data().iter().copied().sum();
    Tensor::from_op("mean", vec![1], vec![total / n], vec![a.clone()], move |inp, _, g| {
        vec![Some(vec![g[0] / n; inp[0].numel()])]
    })
}

pub fn reshape<F: Scalar>(a: &Tensor<F>, shape: &[usize]) -> Result<Tensor<F>> {
    if numel_of(shape) != a.numel() || shape.contains(&0) {
        return Err(Error::shape("reshape", a.shape(), shape));
    }
    Ok(Tensor::from_op(
        "reshape",
        shape.to_vec(),
        a.data().to_vec(),
        vec![a.clone()],
        |_, _, g| vec![Some(g.to_vec())],
    ))
}

/// Rows `start..start+len` along the leading axis.
pub fn narrow<F: Scalar>(a: &Tensor<F>, start: usize, len: usize) -> Result<Tensor<F>> {
    let lead = a.shape()[0];
    if len == 0 || start + len > lead {
        return Err(Error::invalid_shape(
            "narrow",
            format!("range {start}..{} outside leading extent {lead}", start + len),
        ));
    }
    let inner = a.numel() / lead;
    let mut shape = a.shape().to_vec();
    shape[0] = len;
    let lo = start * inner;
    let hi = lo + len * inner;
    let data = a.data()[lo..hi].to_vec();
    Ok(Tensor::from_op(
        "narrow",
        shape,
        data,
        vec![a.clone()],
        move |inp, _, g| {
            let mut gi = vec![F::zero(); inp[0].numel()];
            gi[lo..hi].copy_from_slice(g);
            vec![Some(gi)]
        },
    ))
}

/// Splits the leading axis into `n` equal parts.
pub fn chunk<F: Scalar>(a: &Tensor<F>, n: usize) -> Result<Vec<Tensor<F>>> {
    let lead = a.shape()[0];
    if n == 0 || !lead.is_multiple_of(n) {
        return Err(Error::invalid_shape(
            "chunk",
            format!("leading extent {lead} not divisible into {n} parts"),
        ));
    }
    let part = lead / n;
    (0..n).map(|i| narrow(a, i * part, part)).collect()
}

/// Index `i` of the leading axis, with that axis removed.
pub fn select<F: Scalar>(a: &Tensor<F>, i: usize) -> Result<Tensor<F>> {
    let row = narrow(a, i, 1)?;
    if a.shape().len() == 1 {
        return Ok(row);
    }
    reshape(&row, &a.shape()[1..])
}

/// Concatenation along the leading axis. Trailing extents must agree.
pub fn concat<F: Scalar>(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let tail = &first.shape()[1..];
    let mut lead = 0;
    for p in parts {
        if &p.shape()[1..] != tail {
            return Err(Error::shape("concat", first.shape(), p.shape()));
        }
        lead += p.shape()[0];
    }
    let mut shape = first.shape().to_vec();
    shape[0] = lead;
    let mut data = Vec::with_capacity(numel_of(&shape));
    let mut bounds = Vec::with_capacity(parts.len());
    for p in parts {
        let lo = data.len();
        data.extend_from_slice(p.data());
        bounds.push((lo, data.len()));
    }
    Ok(Tensor::from_op(
        "concat",
        shape,
        data,
        parts.to_vec(),
        move |inp, _, g| {
            inp.iter()
                .zip(&bounds)
                .map(|(t, &(lo, hi))| t.requires_grad().then(|| g[lo..hi].to_vec()))
                .collect()
        },
    ))
}

/// Stacks equally shaped tensors along a new leading axis.
pub fn stack<F: Scalar>(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("stack of zero tensors".into()))?;
    let mut unit = vec![1];
    unit.extend_from_slice(first.shape());
    let lifted = parts
        .iter()
        .map(|p| {
            if p.shape() != first.shape() {
                return Err(Error::shape("stack", first.shape(), p.shape()));
            }
            reshape(p, &unit)
        })
        .collect::<Result<Vec<_>>>()?;
    concat(&lifted)
}
