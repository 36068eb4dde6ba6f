//! N-step returns with an optional learnable reward-propagation kernel.
//!
//! The backward recursion per step is: scale by gamma, convolve with the
//! kernel, add the step reward. With the kernel disabled (or equal to the
//! identity) this reduces bit-for-bit to the plain discounted n-step return.
//! The kernel is a trainable parameter; [`kernel_backward`] differentiates
//! the returns with respect to it, with rewards and bootstrap held constant.

use ndarray::Array2;

use crate::error::{PixelRlError, Result};

/// Learnable square convolution kernel applied to the return map at every
/// recursion level. Stored single precision (the checkpoint dtype); all
/// return arithmetic runs in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RmcKernel {
    size: usize,
    weights: Array2<f32>,
    pub enabled: bool,
}

impl RmcKernel {
    pub fn identity(size: usize) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(PixelRlError::Config(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        let mut weights = Array2::zeros((size, size));
        weights[(size / 2, size / 2)] = 1.0;
        Ok(Self {
            size,
            weights,
            enabled: true,
        })
    }

    pub fn from_weights(weights: Array2<f32>, enabled: bool) -> Result<Self> {
        let (h, w) = weights.dim();
        if h != w || h % 2 == 0 {
            return Err(PixelRlError::Config(format!(
                "kernel must be square and odd-sized, got {h}x{w}"
            )));
        }
        Ok(Self {
            size: h,
            weights,
            enabled,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &Array2<f32> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Array2<f32> {
        &mut self.weights
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.weights.mapv(|v| v as f64)
    }

    pub fn is_identity(&self) -> bool {
        let c = self.size / 2;
        self.weights
            .indexed_iter()
            .all(|((y, x), &v)| v == if (y, x) == (c, c) { 1.0 } else { 0.0 })
    }
}

/// How the recursion is seeded at the episode horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// Fixed horizon: the terminal return is zero.
    Zero,
    /// Seed with the (frozen) value estimate of the final state.
    Value,
}

#[derive(Debug, Clone)]
pub struct ReturnConfig {
    pub gamma: f64,
    pub bootstrap: Bootstrap,
}

impl Default for ReturnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            bootstrap: Bootstrap::Zero,
        }
    }
}

impl ReturnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PixelRlError::Config(format!(
                "discount must be in (0,1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Weighted sum over the kernel footprint with zero padding:
/// out[i] = sum_d w[d] * map[i - d], offsets d centered on the kernel.
/// Zero taps are skipped, so an identity kernel reproduces the map exactly.
pub fn convolve_map(map: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (h, wid) = map.dim();
    let k = w.dim().0;
    let m = (k / 2) as isize;
    let mut out = Array2::zeros((h, wid));
    for dy in -m..=m {
        for dx in -m..=m {
            let wv = w[((dy + m) as usize, (dx + m) as usize)];
            if wv == 0.0 {
                continue;
            }
            let y_lo = dy.max(0) as usize;
            let y_hi = (h as isize + dy.min(0)) as usize;
            let x_lo = dx.max(0) as usize;
            let x_hi = (wid as isize + dx.min(0)) as usize;
            for y in y_lo..y_hi {
                let sy = (y as isize - dy) as usize;
                for x in x_lo..x_hi {
                    out[(y, x)] += wv * map[(sy, (x as isize - dx) as usize)];
                }
            }
        }
    }
    out
}

/// Adjoint of [`convolve_map`] in its map argument:
/// out[j] = sum_d w[d] * map[j + d].
pub fn adjoint_convolve(map: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (h, wid) = map.dim();
    let k = w.dim().0;
    let m = (k / 2) as isize;
    let mut out = Array2::zeros((h, wid));
    for dy in -m..=m {
        for dx in -m..=m {
            let wv = w[((dy + m) as usize, (dx + m) as usize)];
            if wv == 0.0 {
                continue;
            }
            for y in 0..h as isize {
                let sy = y + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..wid as isize {
                    let sx = x + dx;
                    if sx < 0 || sx >= wid as isize {
                        continue;
                    }
                    out[(y as usize, x as usize)] += wv * map[(sy as usize, sx as usize)];
                }
            }
        }
    }
    out
}

/// Gradient of sum_i g[i] * conv(x, w)[i] with respect to the kernel:
/// dW[d] = sum_i g[i] * x[i - d].
pub fn kernel_correlation(g: &Array2<f64>, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let (h, wid) = g.dim();
    let m = (k / 2) as isize;
    let mut dw = Array2::zeros((k, k));
    for dy in -m..=m {
        for dx in -m..=m {
            let mut sum = 0.0;
            for y in 0..h as isize {
                let sy = y - dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for xx in 0..wid as isize {
                    let sx = xx - dx;
                    if sx < 0 || sx >= wid as isize {
                        continue;
                    }
                    sum += g[(y as usize, xx as usize)] * x[(sy as usize, sx as usize)];
                }
            }
            dw[((dy + m) as usize, (dx + m) as usize)] = sum;
        }
    }
    dw
}

/// Intermediates needed to differentiate the returns with respect to the
/// kernel: the (gamma-scaled) map fed into the convolution at each level.
pub struct ReturnsCache {
    convolved_inputs: Vec<Array2<f64>>,
    gamma: f64,
}

/// Backward recursion over a rollout. `rewards[t]` is the step-t reward map,
/// `bootstrap` seeds the horizon. With `w = None` the convolution is skipped
/// entirely and the result is the plain discounted return.
pub fn compute_returns(
    rewards: &[Array2<f64>],
    bootstrap: &Array2<f64>,
    w: Option<&Array2<f64>>,
    gamma: f64,
) -> Result<(Vec<Array2<f64>>, ReturnsCache)> {
    if rewards.is_empty() {
        return Err(PixelRlError::ShapeMismatch("empty rollout".into()));
    }
    let shape = bootstrap.dim();
    for (t, r) in rewards.iter().enumerate() {
        if r.dim() != shape {
            return Err(PixelRlError::ShapeMismatch(format!(
                "reward map at step {t} has shape {:?}, expected {:?}",
                r.dim(),
                shape
            )));
        }
    }
    let n = rewards.len();
    let mut returns = vec![Array2::zeros(shape); n];
    let mut cache = ReturnsCache {
        convolved_inputs: vec![Array2::zeros((0, 0)); n],
        gamma,
    };
    let mut running = bootstrap.clone();
    for t in (0..n).rev() {
        let scaled = running.mapv(|v| gamma * v);
        let propagated = match w {
            Some(w) => {
                cache.convolved_inputs[t] = scaled.clone();
                convolve_map(&scaled, w)
            }
            None => scaled,
        };
        running = &rewards[t] + &propagated;
        returns[t] = running.clone();
    }
    Ok((returns, cache))
}

/// Kernel gradient given dL/dR[t] for every step. Rewards and bootstrap are
/// constants; the chain through the recursion gives
/// G[0] = u[0], G[t] = u[t] + gamma * adjoint(G[t-1], w),
/// dW = sum_t correlation(G[t], cached input at level t).
pub fn kernel_backward(
    grad_returns: &[Array2<f64>],
    cache: &ReturnsCache,
    w: &Array2<f64>,
) -> Result<Array2<f64>> {
    let n = grad_returns.len();
    if n != cache.convolved_inputs.len() {
        return Err(PixelRlError::ShapeMismatch(format!(
            "{n} return gradients vs {} cached levels",
            cache.convolved_inputs.len()
        )));
    }
    let k = w.dim().0;
    let mut dw = Array2::<f64>::zeros((k, k));
    let mut g: Option<Array2<f64>> = None;
    for t in 0..n {
        let total = match g {
            Some(prev) => {
                &grad_returns[t] + &adjoint_convolve(&prev, w).mapv(|v| cache.gamma * v)
            }
            None => grad_returns[t].clone(),
        };
        dw = dw + kernel_correlation(&total, &cache.convolved_inputs[t], k);
        g = Some(total);
    }
    for v in dw.iter() {
        if !v.is_finite() {
            return Err(PixelRlError::Numeric(
                "non-finite kernel gradient".into(),
            ));
        }
    }
    Ok(dw)
}
