//! 3x3 dilated convolution with zero padding: im2col + GEMM forward, exact
//! hand-derived backward. Output size always equals input size.

use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Real;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// One convolution layer. Cross-correlation orientation: tap (ky, kx) of an
/// output at (y, x) reads the input at (y + (ky-1)d, x + (kx-1)d), zero
/// outside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F: Real> {
    pub cin: usize,
    pub cout: usize,
    pub dilation: usize,
    /// Row r is output channel r's kernel, flattened as cin * 9 taps.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Conv2d<F> {
    pub fn zeros(cin: usize, cout: usize, dilation: usize) -> Self {
        assert!(dilation >= 1, "dilation must be positive");
        Self {
            cin,
            cout,
            dilation,
            weight: Array2::zeros((cout, cin * TAPS)),
            bias: Array1::zeros(cout),
        }
    }

    /// Fan-in-scaled normal init, biases zero. Samples are drawn in f64 so a
    /// seed produces the same layer in either precision.
    pub fn init(cin: usize, cout: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(cin, cout, dilation);
        let std = (2.0 / (cin * TAPS) as f64).sqrt();
        for v in layer.weight.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = F::from_f64(n * std);
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.cin == other.cin && self.cout == other.cout && self.dilation == other.dilation
    }

    pub fn forward(&self, x: &Array3<F>) -> Array3<F> {
        let (cin, h, w) = x.dim();
        assert_eq!(cin, self.cin, "input channel mismatch");
        let cols = im2col(&x.view(), self.dilation);
        let mut out = self.weight.dot(&cols);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        out.into_shape_with_order((self.cout, h, w))
            .expect("conv output reshape")
    }

    /// Accumulates weight and bias gradients into `acc` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, x: &Array3<F>, g: &Array3<F>, acc: &mut Conv2d<F>) -> Array3<F> {
        let (cin, h, w) = x.dim();
        debug_assert!(self.same_shape(acc), "gradient accumulator shape mismatch");
        let g_mat = g
            .view()
            .into_shape_with_order((self.cout, h * w))
            .expect("grad reshape");
        let cols = im2col(&x.view(), self.dilation);
        acc.weight += &g_mat.dot(&cols.t());
        acc.bias += &g_mat.sum_axis(Axis(1));
        let dcols = self.weight.t().dot(&g_mat);
        col2im(&dcols, cin, h, w, self.dilation)
    }
}

/// Gather the 9 dilated taps of every pixel into a (cin*9, H*W) matrix; taps
/// outside the image stay zero.
fn im2col<F: Real>(x: &ArrayView3<'_, F>, d: usize) -> Array2<F> {
    let (c, h, w) = x.dim();
    let di = d as isize;
    let mut cols = Array2::zeros((c * TAPS, h * w));
    // For a fixed tap and output row, the source pixels form one contiguous
    // run, so a standard-layout input fills each row with slice copies.
    // Per-element indexing is kept as the fallback for exotic views.
    if let Some(src) = x.as_slice() {
        let dst = cols.as_slice_mut().expect("owned cols are contiguous");
        for ci in 0..c {
            let plane = &src[ci * h * w..(ci + 1) * h * w];
            for ky in 0..KERNEL {
                let dy = (ky as isize - 1) * di;
                for kx in 0..KERNEL {
                    let dx = (kx as isize - 1) * di;
                    let base = (ci * TAPS + ky * KERNEL + kx) * h * w;
                    let (y_lo, y_hi) = valid_range(h, dy);
                    let (x_lo, x_hi) = valid_range(w, dx);
                    if x_hi == x_lo {
                        continue;
                    }
                    let n = x_hi - x_lo;
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (x_lo as isize + dx) as usize;
                        dst[base + y * w + x_lo..base + y * w + x_lo + n]
                            .copy_from_slice(&plane[sy * w + sx..sy * w + sx + n]);
                    }
                }
            }
        }
        return cols;
    }
    for ci in 0..c {
        let plane = x.index_axis(Axis(0), ci);
        for ky in 0..KERNEL {
            let dy = (ky as isize - 1) * di;
            for kx in 0..KERNEL {
                let dx = (kx as isize - 1) * di;
                let mut row = cols.row_mut(ci * TAPS + ky * KERNEL + kx);
                let (y_lo, y_hi) = valid_range(h, dy);
                let (x_lo, x_hi) = valid_range(w, dx);
                for y in y_lo..y_hi {
                    let sy = (y as isize + dy) as usize;
                    for xx in x_lo..x_hi {
                        let sx = (xx as isize + dx) as usize;
                        row[y * w + xx] = plane[(sy, sx)];
                    }
                }
            }
        }
    }
    cols
}

/// Transpose of im2col: scatter-add column gradients back onto the image.
/// The same contiguous-run structure turns the scatter into slice adds.
fn col2im<F: Real>(dcols: &Array2<F>, c: usize, h: usize, w: usize, d: usize) -> Array3<F> {
    let di = d as isize;
    let mut out = Array3::zeros((c, h, w));
    let src = dcols.as_slice().expect("gemm output is contiguous");
    let dst = out.as_slice_mut().expect("owned output is contiguous");
    for ci in 0..c {
        for ky in 0..KERNEL {
            let dy = (ky as isize - 1) * di;
            for kx in 0..KERNEL {
                let dx = (kx as isize - 1) * di;
                let base = (ci * TAPS + ky * KERNEL + kx) * h * w;
                let (y_lo, y_hi) = valid_range(h, dy);
                let (x_lo, x_hi) = valid_range(w, dx);
                if x_hi == x_lo {
                    continue;
                }
                let n = x_hi - x_lo;
                for y in y_lo..y_hi {
                    let sy = (y as isize + dy) as usize;
                    let sx = (x_lo as isize + dx) as usize;
                    let row = &src[base + y * w + x_lo..base + y * w + x_lo + n];
                    let acc = &mut dst[ci * h * w + sy * w + sx..ci * h * w + sy * w + sx + n];
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
        }
    }
    out
}

/// Output rows y for which y + shift lands inside [0, n).
fn valid_range(n: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{max_grad_rel_err, numeric_grad};
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(c: usize, h: usize, w: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut conv = Conv2d::<f64>::zeros(1, 1, 2);
        conv.weight[(0, 4)] = 1.0;
        let x = random_input(1, 6, 7, 1);
        let y = conv.forward(&x);
        assert_eq!(x, y);
    }

    #[test]
    fn single_tap_shifts_and_zero_pads() {
        // Tap (ky=0, kx=0) reads input at (y-d, x-d).
        let d = 2;
        let mut conv = Conv2d::<f64>::zeros(1, 1, d);
        conv.weight[(0, 0)] = 1.0;
        let x = random_input(1, 5, 5, 2);
        let y = conv.forward(&x);
        for yy in 0..5 {
            for xx in 0..5 {
                let want = if yy >= d && xx >= d {
                    x[(0, yy - d, xx - d)]
                } else {
                    0.0
                };
                assert_eq!(y[(0, yy, xx)], want);
            }
        }
    }

    #[test]
    fn zero_weight_outputs_bias() {
        let mut conv = Conv2d::<f64>::zeros(2, 3, 1);
        conv.bias[0] = 0.5;
        conv.bias[2] = -1.25;
        let y = conv.forward(&random_input(2, 4, 4, 3));
        for yy in 0..4 {
            for xx in 0..4 {
                assert_eq!(y[(0, yy, xx)], 0.5);
                assert_eq!(y[(1, yy, xx)], 0.0);
                assert_eq!(y[(2, yy, xx)], -1.25);
            }
        }
    }

    #[test]
    fn sum_kernel_counts_taps_inside_image() {
        let mut conv = Conv2d::<f64>::zeros(1, 1, 1);
        conv.weight.fill(1.0);
        let x = Array3::from_elem((1, 5, 5), 1.0);
        let y = conv.forward(&x);
        assert_eq!(y[(0, 2, 2)], 9.0);
        assert_eq!(y[(0, 0, 0)], 4.0);
        assert_eq!(y[(0, 0, 2)], 6.0);
    }

    fn flat_conv(conv: &Conv2d<f64>) -> Vec<f64> {
        conv.weight.iter().chain(conv.bias.iter()).copied().collect()
    }

    fn set_flat(conv: &mut Conv2d<f64>, flat: &[f64]) {
        let nw = conv.weight.len();
        for (dst, src) in conv.weight.iter_mut().zip(&flat[..nw]) {
            *dst = *src;
        }
        for (dst, src) in conv.bias.iter_mut().zip(&flat[nw..]) {
            *dst = *src;
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = Conv2d::<f64>::init(2, 3, 2, &mut rng);
        let x = random_input(2, 5, 6, 8);
        let m = random_input(3, 5, 6, 9);

        let mut acc = Conv2d::<f64>::zeros(2, 3, 2);
        conv.backward(&x, &m, &mut acc);
        let analytic = flat_conv(&acc);

        let x0 = flat_conv(&conv);
        let mut probe = conv.clone();
        let numeric = numeric_grad(
            &mut |p: &[f64]| {
                set_flat(&mut probe, p);
                (&probe.forward(&x) * &m).sum()
            },
            &x0,
            1e-5,
        );
        assert!(max_grad_rel_err(&analytic, &numeric) < 1e-7);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let conv = Conv2d::<f64>::init(2, 2, 3, &mut rng);
        let x = random_input(2, 5, 5, 18);
        let m = random_input(2, 5, 5, 19);

        let mut acc = Conv2d::<f64>::zeros(2, 2, 3);
        let dx = conv.backward(&x, &m, &mut acc);
        let analytic: Vec<f64> = dx.iter().copied().collect();

        let x0: Vec<f64> = x.iter().copied().collect();
        let numeric = numeric_grad(
            &mut |p: &[f64]| {
                let xi = Array3::from_shape_vec((2, 5, 5), p.to_vec()).unwrap();
                (&conv.forward(&xi) * &m).sum()
            },
            &x0,
            1e-5,
        );
        assert!(max_grad_rel_err(&analytic, &numeric) < 1e-7);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let conv = Conv2d::<f64>::init(1, 1, 1, &mut rng);
        let x = random_input(1, 4, 4, 21);
        let g = random_input(1, 4, 4, 22);
        let mut once = Conv2d::<f64>::zeros(1, 1, 1);
        conv.backward(&x, &g, &mut once);
        let mut twice = Conv2d::<f64>::zeros(1, 1, 1);
        conv.backward(&x, &g, &mut twice);
        conv.backward(&x, &g, &mut twice);
        for (a, b) in once.weight.iter().zip(twice.weight.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}
