use crate::error::{Error, Result};
use crate::tensor::{matmul, Scalar, Tensor};

/// Affine map `W·x + b` for a single vector `x: [Din]`, `W: [Dout, Din]`.
pub fn linear<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, b: Option<&Tensor<F>>) -> Result<Tensor<F>> {
    const OP: &str = "linear";
    let (dout, din) = match *w.shape() {
        [o, i] => (o, i),
        _ => {
            return Err(Error::invalid_shape(
                OP,
                format!("weight must be [Dout, Din], got {:?}", w.shape()),
            ))
        }
    };
    if x.shape() != [din] {
        return Err(Error::shape(OP, x.shape(), w.shape()));
    }
    if let Some(b) = b {
        if b.shape() != [dout] {
            return Err(Error::shape(OP, b.shape(), &[dout]));
        }
    }
    let mut out = match b {
        Some(b) => b.data().to_vec(),
        None => vec![F::zero(); dout],
    };
    matmul(false, false, dout, 1, din, w.data(), x.data(), F::one(), &mut out);

    let mut inputs = vec![x.clone(), w.clone()];
    inputs.extend(b.cloned());
    Ok(Tensor::from_op(OP, vec![dout], out, inputs, move |inp, _, g| {
        let gx = inp[0].requires_grad().then(|| {
            let mut gx = vec![F::zero(); din];
            matmul(true, false, din, 1, dout, inp[1].data(), g, F::zero(), &mut gx);
            gx
        });
        let gw = inp[1].requires_grad().then(|| {
            let mut gw = vec![F::zero(); dout * din];
            matmul(false, false, dout, din, 1, g, inp[0].data(), F::zero(), &mut gw);
            gw
        });
        let mut grads = vec![gx, gw];
        if inp.len() == 3 {
            grads.push(Some(g.to_vec()));
        }
        grads
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{fd_check_many, ops};

    #[test]
    fn identity_and_arithmetic() {
        let x = Tensor::<f64>::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let w = Tensor::new(&[3, 3], eye).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        assert_eq!(linear(&x, &w, Some(&b)).unwrap().data(), x.data());

        let x = Tensor::<f64>::new(&[2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::new(&[1, 2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::new(&[1], vec![1.0]).unwrap();
        assert_eq!(linear(&x, &w, Some(&b)).unwrap().data(), &[6.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Tensor::<f64>::zeros(&[3]).unwrap();
        let w = Tensor::zeros(&[2, 4]).unwrap();
        assert!(linear(&x, &w, None).is_err());
    }

    #[test]
    fn gradients() {
        let x = Tensor::new(&[4], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let w = Tensor::new(&[3, 4], (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let b = Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let err = fd_check_many(
            |v| Ok(ops::sum(&ops::tanh(&linear(&v[0], &v[1], Some(&v[2]))?))),
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}
