//! Image quality metrics: PSNR on [0,1] intensities and single-scale SSIM.

use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;
use ndarray::Array2;

/// SSIM window setup: 11x11 Gaussian, sigma 1.5, stabilizers from K1=0.01,
/// K2=0.03 at dynamic range 1.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &PixelGrid, b: &PixelGrid) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(PixelRlError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn mse(a: &PixelGrid, b: &PixelGrid) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical images give +infinity.
pub fn psnr(a: &PixelGrid, b: &PixelGrid) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / e).log10())
    }
}

/// dB value for reports: the infinity sentinel prints as "inf".
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// ITU-R BT.601 luminance; single-channel images pass through.
pub fn luminance(g: &PixelGrid) -> Array2<f64> {
    let (h, w) = (g.height(), g.width());
    if g.channels() == 1 {
        Array2::from_shape_fn((h, w), |(y, x)| g.get(0, y, x) as f64)
    } else {
        Array2::from_shape_fn((h, w), |(y, x)| {
            0.299 * g.get(0, y, x) as f64
                + 0.587 * g.get(1, y, x) as f64
                + 0.114 * g.get(2, y, x) as f64
        })
    }
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *t;
    }
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// Valid-mode separable Gaussian window means: output is
/// (h-10) x (w-10) for an 11-tap window.
fn window_means(img: &Array2<f64>, taps: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let wo = w - SSIM_WINDOW + 1;
    let ho = h - SSIM_WINDOW + 1;
    let mut rows = Array2::<f64>::zeros((h, wo));
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * img[(y, x + k)];
            }
            rows[(y, x)] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((ho, wo));
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * rows[(y + k, x)];
            }
            out[(y, x)] = acc;
        }
    }
    out
}

/// Mean structural similarity over all valid 11x11 windows of the luminance
/// images. Errors when the image cannot fit one window.
pub fn ssim(a: &PixelGrid, b: &PixelGrid) -> Result<f64> {
    check_shapes(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(PixelRlError::InvalidGrid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let taps = gaussian_taps();
    let x = luminance(a);
    let y = luminance(b);
    let mu_x = window_means(&x, &taps);
    let mu_y = window_means(&y, &taps);
    let xx = window_means(&(&x * &x), &taps);
    let yy = window_means(&(&y * &y), &taps);
    let xy = window_means(&(&x * &y), &taps);
    let mut acc = 0.0;
    for ((i, j), &mx) in mu_x.indexed_iter() {
        let my = mu_y[(i, j)];
        let var_x = xx[(i, j)] - mx * mx;
        let var_y = yy[(i, j)] - my * my;
        let cov = xy[(i, j)] - mx * my;
        acc += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2));
    }
    Ok(acc / mu_x.len() as f64)
}
