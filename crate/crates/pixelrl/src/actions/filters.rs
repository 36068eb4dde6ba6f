//! 5x5 window filters with replicate (edge-clamp) padding.
//!
//! Every filter has a per-pixel evaluator so that `apply_action_map` can
//! compute only the pixels that actually selected the filter and still be
//! bit-identical to the full-grid application. Accumulation runs in f64.

pub const WINDOW: usize = 5;
pub const RADIUS: isize = 2;

/// Clamp a window coordinate into the image (replicate padding).
#[inline]
fn clampi(v: isize, hi: usize) -> usize {
    v.clamp(0, hi as isize - 1) as usize
}

/// Gather the 5x5 replicate-padded neighborhood around (y, x).
#[inline]
pub fn window5(plane: &[f32], h: usize, w: usize, y: usize, x: usize) -> [f32; 25] {
    let mut out = [0.0f32; 25];
    let mut k = 0;
    for dy in -RADIUS..=RADIUS {
        let sy = clampi(y as isize + dy, h);
        let row = sy * w;
        for dx in -RADIUS..=RADIUS {
            let sx = clampi(x as isize + dx, w);
            out[k] = plane[row + sx];
            k += 1;
        }
    }
    out
}

/// Mean of the 5x5 neighborhood.
#[inline]
pub fn box5_at(plane: &[f32], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let win = window5(plane, h, w, y, x);
    let mut sum = 0.0f64;
    for v in win {
        sum += v as f64;
    }
    sum / 25.0
}

/// Middle element (index 12) of the sorted 5x5 neighborhood.
#[inline]
pub fn median5_at(plane: &[f32], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let mut win = window5(plane, h, w, y, x);
    win.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
    win[12] as f64
}

/// Sampled 5x5 Gaussian, normalized to sum exactly over its 25 taps.
pub fn gaussian_kernel5(sigma: f64) -> [f64; 25] {
    let mut k = [0.0f64; 25];
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    let mut i = 0;
    for dy in -RADIUS..=RADIUS {
        for dx in -RADIUS..=RADIUS {
            let d2 = (dy * dy + dx * dx) as f64;
            let v = (-d2 * inv).exp();
            k[i] = v;
            sum += v;
            i += 1;
        }
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Spatial half of the bilateral weights: exp(-(dy^2+dx^2) / (2 sigma_s^2)).
pub fn bilateral_spatial5(sigma_space: f64) -> [f64; 25] {
    let mut k = [0.0f64; 25];
    let inv = 1.0 / (2.0 * sigma_space * sigma_space);
    let mut i = 0;
    for dy in -RADIUS..=RADIUS {
        for dx in -RADIUS..=RADIUS {
            let d2 = (dy * dy + dx * dx) as f64;
            k[i] = (-d2 * inv).exp();
            i += 1;
        }
    }
    k
}

/// Weighted 5x5 sum with a fixed (already normalized) kernel.
#[inline]
pub fn gaussian5_at(
    plane: &[f32],
    h: usize,
    w: usize,
    y: usize,
    x: usize,
    kernel: &[f64; 25],
) -> f64 {
    let win = window5(plane, h, w, y, x);
    let mut sum = 0.0f64;
    for i in 0..25 {
        sum += kernel[i] * win[i] as f64;
    }
    sum
}

/// Bilateral response: spatial Gaussian times a range Gaussian on the
/// intensity difference, normalized per pixel.
#[inline]
pub fn bilateral5_at(
    plane: &[f32],
    h: usize,
    w: usize,
    y: usize,
    x: usize,
    spatial: &[f64; 25],
    sigma_color: f64,
) -> f64 {
    let win = window5(plane, h, w, y, x);
    let center = plane[y * w + x] as f64;
    let inv = 1.0 / (2.0 * sigma_color * sigma_color);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..25 {
        let v = win[i] as f64;
        let d = v - center;
        let wgt = spatial[i] * (-d * d * inv).exp();
        num += wgt * v;
        den += wgt;
    }
    num / den
}
