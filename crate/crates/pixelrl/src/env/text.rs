//! Text overlay corruption for the blind restoration task.
//!
//! Glyphs come from an embedded 5x7 bitmap font, scaled by integer factors so
//! rendered heights land in the configured pixel range. Covered pixels are
//! forced to intensity 0 or 1 (chosen per snippet); everything else is
//! untouched, so the overlay is an exact binary mask.

use rand::Rng;

use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;

/// Rows of 5-bit glyph bitmaps, bit 4 = leftmost column.
type Glyph = [u8; 7];

fn glyph(c: char) -> Option<Glyph> {
    let g: Glyph = match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '!' => [0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04],
        '?' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '\'' => [0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00],
        _ => return None,
    };
    Some(g)
}

/// Parameters of the overlay generator.
#[derive(Debug, Clone)]
pub struct TextConfig {
    /// Documents to draw snippets from; must be non-empty.
    pub corpus: Vec<String>,
    /// Rendered glyph height range in pixels (inclusive).
    pub size_range: (usize, usize),
    /// Fraction of pixels the overlay aims to cover.
    pub coverage_range: (f64, f64),
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            corpus: vec![
                "The quick brown fox jumps over the lazy dog.".into(),
                "Pack my box with five dozen liquor jugs!".into(),
                "How vexingly quick daft zebras jump?".into(),
                "Sphinx of black quartz, judge my vow.".into(),
            ],
            size_range: (10, 30),
            coverage_range: (0.05, 0.25),
        }
    }
}

// ink over total cell area of an average 5x7 glyph in its 6-column advance
const INK_PER_CELL: f64 = 16.0;

struct Renderer<'a> {
    out: &'a mut PixelGrid,
    mask: &'a mut [bool],
    covered: usize,
}

impl Renderer<'_> {
    fn blot(&mut self, y: usize, x: usize, intensity: f32) {
        if y >= self.out.height() || x >= self.out.width() {
            return;
        }
        let idx = y * self.out.width() + x;
        if !self.mask[idx] {
            self.mask[idx] = true;
            self.covered += 1;
        }
        for c in 0..self.out.channels() {
            self.out.set(c, y, x, intensity);
        }
    }

    fn draw_snippet(&mut self, text: &[char], y0: usize, x0: usize, scale: usize, ink: f32) {
        let mut cursor = x0;
        for &ch in text {
            if let Some(rows) = glyph(ch) {
                for (ry, bits) in rows.iter().enumerate() {
                    for rx in 0..5 {
                        if bits & (0x10 >> rx) != 0 {
                            for sy in 0..scale {
                                for sx in 0..scale {
                                    self.blot(
                                        y0 + ry * scale + sy,
                                        cursor + rx * scale + sx,
                                        ink,
                                    );
                                }
                            }
                        }
                    }
                }
            }
            cursor += 6 * scale;
        }
    }
}

/// Overlay random text snippets and report the covered pixel fraction.
pub fn overlay_text_with_coverage(
    image: &PixelGrid,
    rng: &mut impl Rng,
    config: &TextConfig,
) -> Result<(PixelGrid, f64)> {
    if config.corpus.is_empty() {
        return Err(PixelRlError::Env("text corpus is empty".into()));
    }
    let (h, w) = (image.height(), image.width());
    let total = h * w;
    let target = rng.gen_range(config.coverage_range.0..=config.coverage_range.1);
    let mut out = image.clone();
    let mut mask = vec![false; total];
    let mut renderer = Renderer {
        out: &mut out,
        mask: &mut mask,
        covered: 0,
    };
    let docs: Vec<&String> = config.corpus.iter().filter(|d| !d.is_empty()).collect();
    if docs.is_empty() {
        return Ok((out, 0.0));
    }
    for _ in 0..500 {
        if (renderer.covered as f64) >= target * total as f64 {
            break;
        }
        let doc: Vec<char> = docs[rng.gen_range(0..docs.len())].chars().collect();
        let font_px = rng.gen_range(config.size_range.0..=config.size_range.1);
        let scale = ((font_px + 3) / 7).max(1);
        // pick a snippet length that roughly fills the remaining budget
        let remaining = target * total as f64 - renderer.covered as f64;
        let want = (remaining / (INK_PER_CELL * (scale * scale) as f64)).ceil() as usize;
        let fit = (w / (6 * scale)).max(1);
        let len = want.clamp(1, 12).min(fit).min(doc.len());
        let start = rng.gen_range(0..=doc.len() - len);
        let snippet = &doc[start..start + len];
        let ink = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        let text_h = 7 * scale;
        let text_w = len * 6 * scale - scale;
        let y0 = if text_h < h { rng.gen_range(0..=h - text_h) } else { 0 };
        let x0 = if text_w < w { rng.gen_range(0..=w - text_w) } else { 0 };
        renderer.draw_snippet(snippet, y0, x0, scale, ink);
    }
    let coverage = renderer.covered as f64 / total as f64;
    Ok((out, coverage))
}

/// Overlay random text snippets on the image.
pub fn overlay_text(image: &PixelGrid, rng: &mut impl Rng, config: &TextConfig) -> Result<PixelGrid> {
    overlay_text_with_coverage(image, rng, config).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_corpus_is_an_error() {
        let image = PixelGrid::constant(32, 32, 1, 0.5);
        let cfg = TextConfig {
            corpus: vec![],
            ..TextConfig::default()
        };
        assert!(overlay_text(&image, &mut ChaCha8Rng::seed_from_u64(0), &cfg).is_err());
    }

    #[test]
    fn empty_documents_leave_image_unchanged() {
        let image = PixelGrid::constant(32, 32, 1, 0.5);
        let cfg = TextConfig {
            corpus: vec![String::new()],
            ..TextConfig::default()
        };
        let (out, coverage) =
            overlay_text_with_coverage(&image, &mut ChaCha8Rng::seed_from_u64(0), &cfg).unwrap();
        assert_eq!(out, image);
        assert_eq!(coverage, 0.0);
    }

    #[test]
    fn overlay_is_deterministic_per_seed() {
        let image = PixelGrid::constant(64, 64, 1, 0.5);
        let cfg = TextConfig::default();
        let a = overlay_text(&image, &mut ChaCha8Rng::seed_from_u64(5), &cfg).unwrap();
        let b = overlay_text(&image, &mut ChaCha8Rng::seed_from_u64(5), &cfg).unwrap();
        let c = overlay_text(&image, &mut ChaCha8Rng::seed_from_u64(6), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn covered_pixels_are_binary() {
        let image = PixelGrid::constant(96, 96, 1, 0.5);
        let cfg = TextConfig::default();
        let out = overlay_text(&image, &mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        for &v in out.data() {
            assert!(v == 0.5 || v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn coverage_lands_in_band() {
        let image = PixelGrid::constant(128, 128, 1, 0.5);
        let cfg = TextConfig::default();
        for seed in 0..10 {
            let (_, coverage) =
                overlay_text_with_coverage(&image, &mut ChaCha8Rng::seed_from_u64(seed), &cfg)
                    .unwrap();
            assert!(
                (0.04..=0.32).contains(&coverage),
                "seed {seed}: coverage {coverage}"
            );
        }
    }
}
