use super::Tensor;
use crate::error::{Error, Result};

/// Largest relative discrepancy between the taped gradient of `f` at `x` and
/// a central difference with step `eps`:
/// `max_i |analytic_i - numeric_i| / max(1, |numeric_i|)`.
pub fn fd_check<G>(f: G, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    G: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    fd_check_many(|xs| f(&xs[0]), std::slice::from_ref(x), eps)
}

/// [`fd_check`] over several inputs at once; every coordinate of every input
/// is perturbed.
pub fn fd_check_many<G>(f: G, xs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    G: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in (0, 1e-2], got {eps}"
        )));
    }
    let leaves = xs
        .iter()
        .map(|x| Tensor::param(x.shape(), x.data().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let root = f(&leaves)?;
    let value = root.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite("fd_check objective".into()));
    }
    root.backward()?;

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let v = f(xs)?.item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite("fd_check objective".into()));
        }
        Ok(v)
    };

    let mut worst = 0.0f64;
    let mut consts: Vec<Tensor<f64>> = xs.iter().map(Tensor::detach).collect();
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        if analytic.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("fd_check analytic gradient".into()));
        }
        let base = xs[k].data().to_vec();
        for i in 0..base.len() {
            let mut probe = base.clone();
            probe[i] = base[i] + eps;
            consts[k] = Tensor::new(xs[k].shape(), probe.clone())?;
            let plus = eval(&consts)?;
            probe[i] = base[i] - eps;
            consts[k] = Tensor::new(xs[k].shape(), probe)?;
            let minus = eval(&consts)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
        consts[k] = xs[k].detach();
    }
    Ok(worst)
}
