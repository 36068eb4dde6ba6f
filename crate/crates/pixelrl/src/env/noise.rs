//! Corruption operators: Gaussian, salt-and-pepper, and Poisson noise.
//! All are deterministic given the caller's RNG state.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{PixelRlError, Result};
use crate::grid::{clip01, PixelGrid};

/// Additive zero-mean Gaussian noise with standard deviation given on the
/// 8-bit scale, clipped to [0,1].
pub fn add_gaussian_noise(image: &PixelGrid, sigma_8bit: f64, rng: &mut impl Rng) -> Result<PixelGrid> {
    if sigma_8bit <= 0.0 {
        return Err(PixelRlError::Config(format!(
            "noise std must be positive, got {sigma_8bit}"
        )));
    }
    let normal = Normal::new(0.0, sigma_8bit / 255.0)
        .map_err(|e| PixelRlError::Config(e.to_string()))?;
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = clip01(*v as f64 + normal.sample(rng));
    }
    Ok(out)
}

/// Salt-and-pepper: each pixel is independently forced to 0 or 1 (equal
/// odds) with probability `density`; all channels of a hit pixel agree.
pub fn add_salt_pepper(image: &PixelGrid, density: f64, rng: &mut impl Rng) -> Result<PixelGrid> {
    if !(density > 0.0 && density < 1.0) {
        return Err(PixelRlError::Config(format!(
            "noise density must be in (0,1), got {density}"
        )));
    }
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if rng.gen::<f64>() < density {
                let v = if rng.gen::<bool>() { 1.0 } else { 0.0 };
                for c in 0..image.channels() {
                    out.set(c, y, x, v);
                }
            }
        }
    }
    Ok(out)
}

/// Photon-count simulation: each value v becomes Poisson(peak*v)/peak,
/// clipped. Smaller peaks mean stronger noise.
pub fn add_poisson(image: &PixelGrid, peak: f64, rng: &mut impl Rng) -> Result<PixelGrid> {
    if peak <= 0.0 {
        return Err(PixelRlError::Config(format!(
            "poisson peak must be positive, got {peak}"
        )));
    }
    let mut out = image.clone();
    for v in out.data_mut() {
        let lambda = peak * *v as f64;
        // Poisson(0) is the point mass at zero.
        let count = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| PixelRlError::Numeric(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        *v = clip01(count / peak);
    }
    Ok(out)
}
