use crate::error::{Error, Result};

pub const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

/// Clamps prediction values to the displayable range.
pub fn clamp_pixels(vals: &[f64]) -> Vec<f64> {
    vals.iter().map(|v| v.clamp(0.0, PEAK)).collect()
}

fn check_pair(op: &str, pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{op}: images hold {} and {} pixels",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean squared error after clamping the prediction.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mse", pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, y)| (p.clamp(0.0, PEAK) - y).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Peak signal-to-noise ratio in dB for a given MSE; infinite at zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

pub fn psnr(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?))
}

/// Fraction of (clamped) prediction pixels brighter than `tau`.
pub fn eccr(pred: &[f64], tau: f64) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("eccr: empty image".into()));
    }
    if !(0.0..=PEAK).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "eccr: threshold {tau} outside [0, 255]"
        )));
    }
    Ok(pred.iter().filter(|v| v.clamp(0.0, PEAK) > tau).count() as f64 / pred.len() as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale structural similarity with an 11x11 Gaussian window
/// (sigma 1.5), averaged over the positions where the window fits.
pub fn ssim(pred: &[f64], target: &[f64], height: usize, width: usize) -> Result<f64> {
    check_pair("ssim", pred, target)?;
    if pred.len() != height * width {
        return Err(Error::InvalidArgument(format!(
            "ssim: {} pixels do not form a {height}x{width} image",
            pred.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim: image {height}x{width} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let x = clamp_pixels(pred);
    let y = target;
    let k = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = filter_valid(&x, height, width, &k);
    let mu_y = filter_valid(y, height, width, &k);
    let xx = filter_valid(&prod(&x, &x), height, width, &k);
    let yy = filter_valid(&prod(y, y), height, width, &k);
    let xy = filter_valid(&prod(&x, y), height, width, &k);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = xx[i] - mx * mx;
        let sy = yy[i] - my * my;
        let sxy = xy[i] - mx * my;
        total += ((2.0 * mx * my + C1) * (2.0 * sxy + C2)) / ((mx * mx + my * my + C1) * (sx + sy + C2));
    }
    Ok(total / n as f64)
}
