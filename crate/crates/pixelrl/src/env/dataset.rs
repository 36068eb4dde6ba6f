//! Image ingestion (8-bit PNG / PGM / PPM), saving, and a deterministic
//! synthetic-image generator for tests and examples.
//!
//! Dataset layout on disk: `<root>/train/*.png`, `<root>/test/*.png`
//! (PGM/PPM equally accepted). Files load in filename order.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PixelRlError, Result};
use crate::grid::{clip01, PixelGrid};

/// An in-memory list of clean images with their source names.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<PixelGrid>,
    pub names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn is_supported(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "pgm" || e == "ppm"
    )
}

/// Convert a decoded image to a grid, keeping its native channel count.
pub fn image_to_grid(img: &DynamicImage) -> Result<PixelGrid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => {
            let mut data = vec![0.0f32; h * w];
            for (i, p) in buf.pixels().enumerate() {
                data[i] = p.0[0] as f32 / 255.0;
            }
            PixelGrid::new(h, w, 1, data)
        }
        _ => {
            let rgb = img.to_rgb8();
            let mut data = vec![0.0f32; 3 * h * w];
            for (i, p) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = p.0[c] as f32 / 255.0;
                }
            }
            PixelGrid::new(h, w, 3, data)
        }
    }
}

/// Load one image file as a grid with the requested channel count.
pub fn load_image(path: &Path, channels: usize) -> Result<PixelGrid> {
    let img = image::open(path)
        .map_err(|e| PixelRlError::Data(format!("{}: {e}", path.display())))?;
    let grid = image_to_grid(&img)?;
    convert_channels(&grid, channels)
}

/// Gray <-> RGB conversion: replication up, luminance down.
pub fn convert_channels(grid: &PixelGrid, channels: usize) -> Result<PixelGrid> {
    if grid.channels() == channels {
        return Ok(grid.clone());
    }
    match (grid.channels(), channels) {
        (1, 3) => Ok(PixelGrid::from_fn(grid.height(), grid.width(), 3, |_, y, x| {
            grid.get(0, y, x)
        })),
        (3, 1) => Ok(grid.to_gray()),
        _ => Err(PixelRlError::InvalidGrid(format!(
            "cannot convert {} channels to {channels}",
            grid.channels()
        ))),
    }
}

/// Load every supported image under `dir`, sorted by filename.
pub fn load_dir(dir: &Path, channels: usize) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| PixelRlError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| is_supported(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PixelRlError::Data(format!(
            "no PNG/PGM/PPM images in {}",
            dir.display()
        )));
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for p in paths {
        images.push(load_image(&p, channels)?);
        names.push(
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok(Dataset { images, names })
}

/// Save a grid as an 8-bit PNG (gray or RGB by channel count).
pub fn save_png(grid: &PixelGrid, path: &Path) -> Result<()> {
    let (h, w) = (grid.height() as u32, grid.width() as u32);
    let to_u8 = |v: f32| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
    let res = if grid.channels() == 1 {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(w, h, |x, y| Luma([to_u8(grid.get(0, y as usize, x as usize))]));
        buf.save(path)
    } else {
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| {
            Rgb([
                to_u8(grid.get(0, y as usize, x as usize)),
                to_u8(grid.get(1, y as usize, x as usize)),
                to_u8(grid.get(2, y as usize, x as usize)),
            ])
        });
        buf.save(path)
    };
    res.map_err(|e| PixelRlError::Data(format!("{}: {e}", path.display())))
}

/// One synthetic "natural-ish" image: smooth low-frequency shading plus a few
/// hard-edged shapes, so both smoothing and edge-preserving actions matter.
pub fn synthetic_image(h: usize, w: usize, channels: usize, rng: &mut impl Rng) -> PixelGrid {
    let mut base = vec![0.0f64; h * w];
    for _ in 0..3 {
        let fy = rng.gen_range(0.3..2.0) * std::f64::consts::TAU / h as f64;
        let fx = rng.gen_range(0.3..2.0) * std::f64::consts::TAU / w as f64;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.05..0.20);
        for y in 0..h {
            for x in 0..w {
                base[y * w + x] += amp * (fy * y as f64 + fx * x as f64 + phase).sin();
            }
        }
    }
    let gy = rng.gen_range(-0.2..0.2) / h as f64;
    let gx = rng.gen_range(-0.2..0.2) / w as f64;
    for y in 0..h {
        for x in 0..w {
            base[y * w + x] += 0.5 + gy * y as f64 + gx * x as f64;
        }
    }
    // hard-edged shapes: rectangles and disks with constant offsets
    for _ in 0..rng.gen_range(3..7) {
        let offset = rng.gen_range(-0.35..0.35f64);
        let cy = rng.gen_range(0..h);
        let cx = rng.gen_range(0..w);
        if rng.gen::<bool>() {
            let rh = rng.gen_range(h / 8..h / 2).max(2);
            let rw = rng.gen_range(w / 8..w / 2).max(2);
            for y in cy.saturating_sub(rh / 2)..(cy + rh / 2).min(h) {
                for x in cx.saturating_sub(rw / 2)..(cx + rw / 2).min(w) {
                    base[y * w + x] += offset;
                }
            }
        } else {
            let r = rng.gen_range(h.min(w) / 10..h.min(w) / 3).max(2) as f64;
            for y in 0..h {
                for x in 0..w {
                    let dy = y as f64 - cy as f64;
                    let dx = x as f64 - cx as f64;
                    if dy * dy + dx * dx <= r * r {
                        base[y * w + x] += offset;
                    }
                }
            }
        }
    }
    if channels == 1 {
        let data = base.iter().map(|&v| clip01(v)).collect();
        PixelGrid::new(h, w, 1, data).expect("synthetic gray")
    } else {
        // correlated channels: shared luminance with per-channel tint fields
        let mut data = vec![0.0f32; 3 * h * w];
        for c in 0..3 {
            let tint = rng.gen_range(-0.12..0.12f64);
            let fy = rng.gen_range(0.3..1.5) * std::f64::consts::TAU / h as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            for y in 0..h {
                for x in 0..w {
                    let wobble = 0.06 * (fy * y as f64 + phase).sin();
                    data[c * h * w + y * w + x] = clip01(base[y * w + x] + tint + wobble);
                }
            }
        }
        PixelGrid::new(h, w, 3, data).expect("synthetic rgb")
    }
}

/// Deterministic synthetic dataset.
pub fn synthetic_dataset(n: usize, h: usize, w: usize, channels: usize, seed: u64) -> Dataset {
    let mut images = Vec::with_capacity(n);
    let mut names = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        images.push(synthetic_image(h, w, channels, &mut rng));
        names.push(format!("synthetic_{i:03}.png"));
    }
    Dataset { images, names }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_images_are_deterministic_and_in_range() {
        let a = synthetic_dataset(3, 32, 40, 1, 77);
        let b = synthetic_dataset(3, 32, 40, 1, 77);
        let c = synthetic_dataset(3, 32, 40, 1, 78);
        assert_eq!(a.images, b.images);
        assert_ne!(a.images[0], c.images[0]);
        for img in &a.images {
            assert_eq!(img.height(), 32);
            assert_eq!(img.width(), 40);
        }
    }

    #[test]
    fn synthetic_images_have_spread() {
        let ds = synthetic_dataset(4, 48, 48, 1, 5);
        for img in &ds.images {
            let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert!(hi - lo > 0.2, "flat synthetic image: {lo}..{hi}");
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_dataset(2, 24, 24, 1, 9);
        for (img, name) in ds.images.iter().zip(&ds.names) {
            save_png(img, &dir.path().join(name)).unwrap();
        }
        let loaded = load_dir(dir.path(), 1).unwrap();
        assert_eq!(loaded.len(), 2);
        // quantization to 8 bits costs at most half a step
        for (a, b) in loaded.images.iter().zip(&ds.images) {
            assert!(a.max_abs_diff(b) <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn rgb_round_trip_and_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_dataset(1, 16, 16, 3, 3);
        save_png(&ds.images[0], &dir.path().join("c.png")).unwrap();
        let loaded = load_dir(dir.path(), 3).unwrap();
        assert_eq!(loaded.images[0].channels(), 3);
        let gray = convert_channels(&loaded.images[0], 1).unwrap();
        assert_eq!(gray.channels(), 1);
    }

    #[test]
    fn missing_directory_is_a_data_error() {
        assert!(load_dir(Path::new("/nonexistent/nowhere"), 1).is_err());
    }

    #[test]
    fn empty_directory_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dir(dir.path(), 1).is_err());
    }
}
