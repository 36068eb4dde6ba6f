//! Color-enhancement point operations and the sRGB -> CIELab conversion.

use crate::grid::{clip01, PixelGrid};

/// Rec. 601 luminance of one RGB triple.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Mean luminance over the whole image, used as the contrast pivot.
pub fn mean_luminance(grid: &PixelGrid) -> f64 {
    debug_assert_eq!(grid.channels(), 3);
    let n = grid.pixel_count();
    let (r, g, b) = (grid.plane(0), grid.plane(1), grid.plane(2));
    let mut sum = 0.0f64;
    for i in 0..n {
        sum += luminance(r[i] as f64, g[i] as f64, b[i] as f64);
    }
    sum / n as f64
}

/// contrast: out = mu + f * (s - mu), with mu the image mean luminance.
#[inline]
pub fn contrast_at(v: f64, mu: f64, factor: f64) -> f32 {
    clip01(mu + factor * (v - mu))
}

/// saturation: out = l + f * (s - l), with l the pixel's own luminance.
#[inline]
pub fn saturation_at(v: f64, lum: f64, factor: f64) -> f32 {
    clip01(lum + factor * (v - lum))
}

/// brightness: out = f * s.
#[inline]
pub fn brightness_at(v: f64, factor: f64) -> f32 {
    clip01(factor * v)
}

// sRGB companding and the D65 reference white.
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// One sRGB triple to CIELab (D65).
#[inline]
pub fn rgb_to_lab_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let rl = srgb_to_linear(r);
    let gl = srgb_to_linear(g);
    let bl = srgb_to_linear(b);
    let x = 0.412_456_4 * rl + 0.357_576_1 * gl + 0.180_437_5 * bl;
    let y = 0.212_672_9 * rl + 0.715_152_2 * gl + 0.072_175_0 * bl;
    let z = 0.019_333_9 * rl + 0.119_192_0 * gl + 0.950_304_1 * bl;
    let fx = lab_f(x / XN);
    let fy = lab_f(y / YN);
    let fz = lab_f(z / ZN);
    let l = 116.0 * fy - 16.0;
    let a = 500.0 * (fx - fy);
    let bb = 200.0 * (fy - fz);
    (l, a, bb)
}

/// Convert a 3-channel sRGB grid to a Lab-space grid (L in [0,100], a/b
/// unbounded; the result is tagged Lab and exempt from the [0,1] invariant).
pub fn rgb_to_lab(grid: &PixelGrid) -> PixelGrid {
    assert_eq!(grid.channels(), 3, "rgb_to_lab needs a 3-channel grid");
    let n = grid.pixel_count();
    let (r, g, b) = (grid.plane(0), grid.plane(1), grid.plane(2));
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (l, a, bb) = rgb_to_lab_pixel(r[i] as f64, g[i] as f64, b[i] as f64);
        data[i] = l as f32;
        data[n + i] = a as f32;
        data[2 * n + i] = bb as f32;
    }
    PixelGrid::new_lab(grid.height(), grid.width(), data).expect("lab grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_maps_to_origin() {
        let (l, a, b) = rgb_to_lab_pixel(0.0, 0.0, 0.0);
        assert_eq!(l, 0.0);
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn white_maps_to_l100() {
        let (l, a, b) = rgb_to_lab_pixel(1.0, 1.0, 1.0);
        assert!((l - 100.0).abs() < 1e-4, "L {l}");
        assert!(a.abs() < 0.01 && b.abs() < 0.01, "a {a} b {b}");
    }

    #[test]
    fn lab_matches_reference_converter() {
        let (l, a, b) = rgb_to_lab_pixel(0.5, 0.2, 0.8);
        let (rl, ra, rb) = crate::oracle::reference_lab(0.5, 0.2, 0.8);
        assert!((l - rl).abs() < 0.05 && (a - ra).abs() < 0.05 && (b - rb).abs() < 0.05);
    }

    #[test]
    fn saturation_fixes_gray_pixels() {
        for f in [0.5, 0.95, 1.05, 2.0] {
            let v = 0.37f64;
            let lum = luminance(v, v, v);
            assert!((saturation_at(v, lum, f) as f64 - v).abs() < 1e-6);
        }
    }
}
