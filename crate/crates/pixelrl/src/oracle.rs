//! Slow, independent reference implementations used by tests and `verify`.
//!
//! Everything here is written directly from the definitions with plain loops
//! in double precision and deliberately shares no kernels or helpers with the
//! modules it checks. Failures report the seed of the failing instance.

use ndarray::Array2;

use crate::actions::{ActionKind, ActionMap, ActionSet, ActionSpec};
use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;

fn clamp_idx(v: isize, hi: usize) -> usize {
    v.clamp(0, hi as isize - 1) as usize
}

fn at_clamped(plane: &[f32], h: usize, w: usize, y: isize, x: isize) -> f64 {
    plane[clamp_idx(y, h) * w + clamp_idx(x, w)] as f64
}

/// Direct double-loop evaluation of one 5x5 filter, replicate padding.
pub fn naive_filter(state: &PixelGrid, spec: &ActionSpec) -> Result<PixelGrid> {
    if !spec.kind.is_filter() {
        return Err(PixelRlError::InvalidAction(format!(
            "{} is not a filter",
            spec.name()
        )));
    }
    naive_action(state, spec)
}

/// Direct evaluation of any denoising-set action (filters, increments,
/// nothing) from the definitions.
pub fn naive_action(state: &PixelGrid, spec: &ActionSpec) -> Result<PixelGrid> {
    let (h, w) = (state.height(), state.width());
    let mut out = state.clone();
    for c in 0..state.channels() {
        let src: Vec<f32> = state.plane(c).to_vec();
        for y in 0..h {
            for x in 0..w {
                let v = naive_value(&src, h, w, y, x, &spec.kind)?;
                out.set(c, y, x, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(out)
}

fn naive_value(src: &[f32], h: usize, w: usize, y: usize, x: usize, kind: &ActionKind) -> Result<f64> {
    let (yi, xi) = (y as isize, x as isize);
    Ok(match *kind {
        ActionKind::Box5 => {
            let mut sum = 0.0;
            for dy in -2..=2 {
                for dx in -2..=2 {
                    sum += at_clamped(src, h, w, yi + dy, xi + dx);
                }
            }
            sum / 25.0
        }
        ActionKind::Gaussian { sigma } => {
            let mut num = 0.0;
            let mut den = 0.0;
            for dy in -2..=2i64 {
                for dx in -2..=2i64 {
                    let wgt = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
                    num += wgt * at_clamped(src, h, w, yi + dy as isize, xi + dx as isize);
                    den += wgt;
                }
            }
            num / den
        }
        ActionKind::Bilateral {
            sigma_color,
            sigma_space,
        } => {
            let center = at_clamped(src, h, w, yi, xi);
            let mut num = 0.0;
            let mut den = 0.0;
            for dy in -2..=2i64 {
                for dx in -2..=2i64 {
                    let v = at_clamped(src, h, w, yi + dy as isize, xi + dx as isize);
                    let spatial =
                        (-((dy * dy + dx * dx) as f64) / (2.0 * sigma_space * sigma_space)).exp();
                    let range = (-(v - center) * (v - center)
                        / (2.0 * sigma_color * sigma_color))
                        .exp();
                    num += spatial * range * v;
                    den += spatial * range;
                }
            }
            num / den
        }
        ActionKind::Median5 => {
            let mut vals = Vec::with_capacity(25);
            for dy in -2..=2 {
                for dx in -2..=2 {
                    vals.push(at_clamped(src, h, w, yi + dy, xi + dx));
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals[12]
        }
        ActionKind::Increment { delta } => at_clamped(src, h, w, yi, xi) + delta,
        ActionKind::Nothing => at_clamped(src, h, w, yi, xi),
        _ => {
            return Err(PixelRlError::InvalidAction(
                "color operations are not part of the naive denoise oracle".into(),
            ))
        }
    })
}

/// Gather oracle: evaluate each used action on the full grid independently,
/// then select per pixel.
pub fn naive_apply_action_map(
    state: &PixelGrid,
    map: &ActionMap,
    set: &ActionSet,
) -> Result<PixelGrid> {
    let mut full: Vec<Option<PixelGrid>> = vec![None; set.len()];
    let mut out = state.clone();
    for y in 0..state.height() {
        for x in 0..state.width() {
            let id = map.id_at(y, x);
            let spec = set
                .spec(id)
                .ok_or_else(|| PixelRlError::InvalidAction(format!("id {id} out of range")))?;
            if full[id].is_none() {
                full[id] = Some(naive_action(state, spec)?);
            }
            let g = full[id].as_ref().unwrap();
            for c in 0..state.channels() {
                out.set(c, y, x, g.get(c, y, x));
            }
        }
    }
    Ok(out)
}

/// Naive zero-padded convolution per the return definition:
/// out_i = sum_d w_d map_{i-d}, offsets d centered on the kernel.
pub fn naive_conv(map: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (h, wid) = map.dim();
    let k = w.dim().0;
    let m = (k / 2) as isize;
    let mut out = Array2::zeros((h, wid));
    for y in 0..h as isize {
        for x in 0..wid as isize {
            let mut sum = 0.0;
            for dy in -m..=m {
                for dx in -m..=m {
                    let (sy, sx) = (y - dy, x - dx);
                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < wid as isize {
                        sum += w[((dy + m) as usize, (dx + m) as usize)]
                            * map[(sy as usize, sx as usize)];
                    }
                }
            }
            out[(y as usize, x as usize)] = sum;
        }
    }
    out
}

/// Closed-form n-step returns: R^(t) = sum_k gamma^k w^k*r^(t+k)
/// + gamma^(n-t) w^(n-t)*V, with w^k meaning k repeated (zero-padded)
/// convolutions. Independent oracle for the backward recursion.
pub fn closed_form_returns(
    rewards: &[Array2<f64>],
    bootstrap: &Array2<f64>,
    w: &Array2<f64>,
    gamma: f64,
) -> Vec<Array2<f64>> {
    let n = rewards.len();
    let conv_pow = |map: &Array2<f64>, times: usize| {
        let mut out = map.clone();
        for _ in 0..times {
            out = naive_conv(&out, w);
        }
        out
    };
    (0..n)
        .map(|t| {
            let mut total: Array2<f64> = Array2::zeros(rewards[t].dim());
            for k in 0..(n - t) {
                total = total + conv_pow(&rewards[t + k], k).mapv(|v| v * gamma.powi(k as i32));
            }
            let tail = n - t;
            total + conv_pow(bootstrap, tail).mapv(|v| v * gamma.powi(tail as i32))
        })
        .collect()
}

/// Central finite differences of a scalar function, one coordinate at a time.
pub fn numeric_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Relative disagreement between an analytic and a numeric gradient entry.
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Worst per-entry relative disagreement between two gradient vectors.
/// Panics on length mismatch, which is always a harness bug.
pub fn max_grad_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| grad_rel_err(a, n))
        .fold(0.0, f64::max)
}

/// A decoupled per-pixel instance: only the point-wise +-1/255 and `nothing`
/// actions, so each pixel's optimal plan is searchable by brute force.
pub struct TinyInstance {
    pub start: PixelGrid,
    pub target: PixelGrid,
    pub t_max: usize,
}

pub struct TinyBest {
    /// Best achievable undiscounted reward total per pixel.
    pub per_pixel: Array2<f64>,
    pub total: f64,
    /// One optimal per-step delta sequence (entries -1, 0, +1) per pixel.
    pub sequences: Vec<Vec<i32>>,
}

impl TinyInstance {
    pub fn new(start: PixelGrid, target: PixelGrid, t_max: usize) -> Result<Self> {
        if start.height() > 3 || start.width() > 3 || t_max > 3 {
            return Err(PixelRlError::InvalidGrid(
                "tiny instance must be at most 3x3 with t_max <= 3".into(),
            ));
        }
        if !start.same_shape(&target) || start.channels() != 1 {
            return Err(PixelRlError::ShapeMismatch(
                "tiny instance needs matching single-channel grids".into(),
            ));
        }
        Ok(Self {
            start,
            target,
            t_max,
        })
    }
}

fn to_8bit(v: f32) -> i32 {
    (v as f64 * 255.0).round() as i32
}

/// Max undiscounted reward per pixel by enumerating all 3^t_max sequences on
/// the 8-bit lattice.
pub fn exhaustive_best(inst: &TinyInstance) -> Result<TinyBest> {
    let (h, w) = (inst.start.height(), inst.start.width());
    let n_seq = 3usize.pow(inst.t_max as u32);
    let mut per_pixel = Array2::zeros((h, w));
    let mut sequences = Vec::with_capacity(h * w);
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let start = to_8bit(inst.start.get(0, y, x));
            let tgt = to_8bit(inst.target.get(0, y, x));
            let mut best = f64::NEG_INFINITY;
            let mut best_seq = Vec::new();
            for code in 0..n_seq {
                let mut cur = start;
                let mut sum = 0.0;
                let mut seq = Vec::with_capacity(inst.t_max);
                let mut rem = code;
                for _ in 0..inst.t_max {
                    // digit order 0,+1,-1 so ties keep the lazier sequence
                    let delta = [0, 1, -1][rem % 3];
                    rem /= 3;
                    let next = (cur + delta).clamp(0, 255);
                    let e0 = tgt - cur;
                    let e1 = tgt - next;
                    sum += (e0 * e0 - e1 * e1) as f64;
                    cur = next;
                    seq.push(delta);
                }
                if sum > best {
                    best = sum;
                    best_seq = seq;
                }
            }
            per_pixel[(y, x)] = best;
            total += best;
            sequences.push(best_seq);
        }
    }
    Ok(TinyBest {
        per_pixel,
        total,
        sequences,
    })
}

/// Budget formula: with |e| the initial 8-bit error and a step budget of
/// t_max unit moves, the best total reward is e^2 minus the minimal
/// achievable squared error.
pub fn analytic_best_reward(err_8bit: i32, t_max: usize) -> f64 {
    let e = err_8bit.abs() as f64;
    let residual = (e - t_max as f64).max(0.0);
    e * e - residual * residual
}

/// PSNR straight from the 255-scale definition, for cross-checking.
pub fn reference_psnr(a: &PixelGrid, b: &PixelGrid) -> f64 {
    let mut sum = 0.0;
    let n = a.data().len();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x as f64 * 255.0 - y as f64 * 255.0;
        sum += d * d;
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * 255f64.log10() - 10.0 * mse.log10()
    }
}

fn oracle_gray(g: &PixelGrid) -> Vec<f64> {
    let n = g.height() * g.width();
    let mut out = vec![0.0; n];
    if g.channels() == 1 {
        for (o, &v) in out.iter_mut().zip(g.plane(0)) {
            *o = v as f64;
        }
    } else {
        for i in 0..n {
            out[i] = 0.299 * g.plane(0)[i] as f64
                + 0.587 * g.plane(1)[i] as f64
                + 0.114 * g.plane(2)[i] as f64;
        }
    }
    out
}

/// Structural similarity by direct windowed sums (11x11 Gaussian weights,
/// sigma 1.5, valid positions only, dynamic range 1).
pub fn reference_ssim(a: &PixelGrid, b: &PixelGrid) -> Result<f64> {
    let (h, w) = (a.height(), a.width());
    if h < 11 || w < 11 {
        return Err(PixelRlError::InvalidGrid(
            "ssim needs at least 11x11 images".into(),
        ));
    }
    let ga = oracle_gray(a);
    let gb = oracle_gray(b);
    let mut wgt = [[0.0f64; 11]; 11];
    let mut wsum = 0.0;
    for (i, row) in wgt.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
            wsum += *v;
        }
    }
    for row in wgt.iter_mut() {
        for v in row.iter_mut() {
            *v /= wsum;
        }
    }
    let (c1, c2) = (0.01f64 * 0.01, 0.03f64 * 0.03);
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - 11) {
        for x0 in 0..=(w - 11) {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let idx = (y0 + i) * w + (x0 + j);
                    ma += wgt[i][j] * ga[idx];
                    mb += wgt[i][j] * gb[idx];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let idx = (y0 + i) * w + (x0 + j);
                    va += wgt[i][j] * (ga[idx] - ma) * (ga[idx] - ma);
                    vb += wgt[i][j] * (gb[idx] - mb) * (gb[idx] - mb);
                    cov += wgt[i][j] * (ga[idx] - ma) * (gb[idx] - mb);
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Independent sRGB -> CIELab conversion for one pixel.
pub fn reference_lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let lin = |u: f64| {
        if u <= 0.04045 {
            u / 12.92
        } else {
            ((u + 0.055) / 1.055).powf(2.4)
        }
    };
    let (rl, gl, bl) = (lin(r), lin(g), lin(b));
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    let cube = |t: f64| {
        let delta3 = (6.0f64 / 29.0).powi(3);
        if t > delta3 {
            t.cbrt()
        } else {
            t / (3.0 * (6.0f64 / 29.0).powi(2)) + 4.0 / 29.0
        }
    };
    let fx = cube(x / 0.95047);
    let fy = cube(y / 1.0);
    let fz = cube(z / 1.08883);
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

fn random_grid(h: usize, w: usize, rng: &mut impl rand::Rng) -> PixelGrid {
    PixelGrid::from_fn(h, w, 1, |_, _, _| rng.gen::<f32>())
}

/// Cross-check every denoising action against the naive oracle on random
/// grids. Returns the failing description (with seed) on mismatch.
pub fn verify_filters(seed: u64, cases: usize) -> std::result::Result<(), String> {
    use rand::SeedableRng;
    let set = ActionSet::denoise9();
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let grid = random_grid(16, 16, &mut rng);
        for spec in set.specs() {
            let fast = crate::actions::apply_action(&grid, spec)
                .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
            let slow = naive_action(&grid, spec)
                .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
            let diff = fast.max_abs_diff(&slow);
            if diff > 1e-6 {
                return Err(format!(
                    "seed {seed} case {case}: action `{}` differs from oracle by {diff:e}",
                    spec.name()
                ));
            }
        }
    }
    Ok(())
}

/// Check the per-pixel optimality formula on random tiny instances.
pub fn verify_optimality(seed: u64, cases: usize) -> std::result::Result<(), String> {
    use rand::{Rng, SeedableRng};
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let h = 1 + rng.gen_range(0..3);
        let w = 1 + rng.gen_range(0..3);
        let t_max = 1 + rng.gen_range(0..3);
        let lattice = |rng: &mut rand_chacha::ChaCha8Rng| {
            PixelGrid::from_fn(h, w, 1, |_, _, _| rng.gen_range(0..=255u32) as f32 / 255.0)
        };
        let start = lattice(&mut rng);
        let target = lattice(&mut rng);
        let inst = TinyInstance::new(start, target, t_max)
            .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
        let best = exhaustive_best(&inst).map_err(|e| format!("seed {seed} case {case}: {e}"))?;
        for y in 0..h {
            for x in 0..w {
                let err = to_8bit(inst.target.get(0, y, x)) - to_8bit(inst.start.get(0, y, x));
                let analytic = analytic_best_reward(err, t_max);
                let found = best.per_pixel[(y, x)];
                if found != analytic {
                    return Err(format!(
                        "seed {seed} case {case}: pixel ({y},{x}) err {err} t_max {t_max}: \
                         exhaustive {found} vs analytic {analytic}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Check the backward return recursion against explicit kernel powers, and
/// that an identity kernel reproduces the kernel-free path bit for bit.
pub fn verify_returns(seed: u64, cases: usize) -> std::result::Result<(), String> {
    use rand::{Rng, SeedableRng};
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let h = 2 + rng.gen_range(0..5);
        let wid = 2 + rng.gen_range(0..5);
        let steps = 1 + rng.gen_range(0..4);
        let map = |rng: &mut rand_chacha::ChaCha8Rng| {
            Array2::from_shape_fn((h, wid), |_| rng.gen_range(-1.0..1.0))
        };
        let rewards: Vec<Array2<f64>> = (0..steps).map(|_| map(&mut rng)).collect();
        let bootstrap = map(&mut rng);
        let w = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-0.4..0.4));
        let gamma = 0.95;
        let (fast, _) = crate::rmc::compute_returns(&rewards, &bootstrap, Some(&w), gamma)
            .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
        let slow = closed_form_returns(&rewards, &bootstrap, &w, gamma);
        for (t, (a, b)) in fast.iter().zip(&slow).enumerate() {
            let diff = (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if diff > 1e-5 {
                return Err(format!(
                    "seed {seed} case {case}: step {t} recursion differs from \
                     closed form by {diff:e}"
                ));
            }
        }
        let identity = crate::rmc::RmcKernel::identity(3)
            .map_err(|e| format!("seed {seed} case {case}: {e}"))?
            .as_f64();
        let (with_id, _) = crate::rmc::compute_returns(&rewards, &bootstrap, Some(&identity), gamma)
            .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
        let (without, _) = crate::rmc::compute_returns(&rewards, &bootstrap, None, gamma)
            .map_err(|e| format!("seed {seed} case {case}: {e}"))?;
        for (t, (a, b)) in with_id.iter().zip(&without).enumerate() {
            if a != b {
                return Err(format!(
                    "seed {seed} case {case}: step {t} identity kernel is not \
                     bit-identical to the kernel-free path"
                ));
            }
        }
    }
    Ok(())
}

/// Check analytic loss gradients (network parameters and the return kernel
/// jointly) against central finite differences on a tiny double-precision
/// model. Each case costs a few seconds.
pub fn verify_gradients(seed: u64, cases: usize) -> std::result::Result<(), String> {
    use crate::env::{EpisodeState, Task};
    use crate::net::{ArchConfig, Network};
    use crate::rmc::{Bootstrap, ReturnConfig, RmcKernel};
    use crate::trainer::{collect_rollout, loss_and_grads, surrogate_loss, ActionSelection};
    use rand::{Rng, SeedableRng};

    let fail = |case: usize, msg: String| format!("seed {seed} case {case}: {msg}");
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let arch = ArchConfig {
            in_channels: 1,
            channels: 3,
            n_actions: 3,
            use_gru: true,
            trunk_dilations: vec![1, 1],
            branch_dilations: vec![1],
            expected_rf: None,
        };
        let mut net =
            Network::<f64>::init(arch, &mut rng).map_err(|e| fail(case, e.to_string()))?;
        // Finite differences need every parameter off the ReLU kink, so
        // shift the zero-initialized biases like everything else.
        let mut params = net.flatten_params();
        for p in &mut params {
            let mag = rng.gen_range(0.01..0.05);
            *p += if rng.gen::<bool>() { mag } else { -mag };
        }
        net.set_flat_params(&params)
            .map_err(|e| fail(case, e.to_string()))?;
        let set = ActionSet::new(
            "tiny3",
            vec![
                ActionKind::Nothing,
                ActionKind::Increment { delta: 1.0 / 255.0 },
                ActionKind::Increment { delta: -1.0 / 255.0 },
            ],
        )
        .map_err(|e| fail(case, e.to_string()))?;
        let grid = |rng: &mut rand_chacha::ChaCha8Rng| {
            PixelGrid::from_fn(4, 4, 1, |_, _, _| rng.gen_range(0.0..1.0))
        };
        let mut episodes = (0..2)
            .map(|_| EpisodeState::new(Task::DenoiseGauss, grid(&mut rng), grid(&mut rng), 2))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| fail(case, e.to_string()))?;
        let rollout = collect_rollout(
            &net,
            &mut episodes,
            &set,
            Bootstrap::Zero,
            ActionSelection::Sample,
            &mut rng,
        )
        .map_err(|e| fail(case, e.to_string()))?;
        let mut w0 = RmcKernel::identity(3)
            .map_err(|e| fail(case, e.to_string()))?
            .as_f64();
        w0.mapv_inplace(|v| v + rng.gen_range(-0.05..0.05));
        let cfg = ReturnConfig::default();
        let beta = 0.01;

        let (_, gnet, dw) = loss_and_grads(&net, &rollout, Some(&w0), &cfg, beta)
            .map_err(|e| fail(case, e.to_string()))?;
        let mut analytic = gnet.flatten_params();
        analytic.extend(dw.expect("kernel gradient").iter());

        let frozen = rollout.value_baselines();
        let net_n = net.param_count();
        let mut center = net.flatten_params();
        center.extend(w0.iter());
        let mut probe = net.clone();
        let mut loss_at = |p: &[f64]| -> f64 {
            probe.set_flat_params(&p[..net_n]).expect("probe params");
            let w = Array2::from_shape_vec((3, 3), p[net_n..].to_vec()).expect("kernel shape");
            surrogate_loss(&probe, &rollout, &frozen, Some(&w), &cfg, beta).expect("surrogate")
        };
        // The loss sits at the squared 8-bit reward scale (~1e5), so finite
        // differences carry ~1e-5 absolute noise; entries below that are
        // judged by the absolute gate. A probe can also straddle a ReLU kink
        // at one step size, so disagreeing entries are retried at smaller
        // eps; a real gradient bug disagrees at every scale.
        let agrees = |a: f64, n: f64| (a - n).abs() < 1e-5 || grad_rel_err(a, n) < 1e-3;
        let numeric = numeric_grad(&mut loss_at, &center, 1e-5);
        'entries: for i in 0..center.len() {
            let (a, n) = (analytic[i], numeric[i]);
            if agrees(a, n) {
                continue;
            }
            for eps in [3e-6, 1e-6] {
                let mut probe = center.clone();
                probe[i] = center[i] + eps;
                let up = loss_at(&probe);
                probe[i] = center[i] - eps;
                let down = loss_at(&probe);
                if agrees(a, (up - down) / (2.0 * eps)) {
                    continue 'entries;
                }
            }
            return Err(format!(
                "seed {seed} case {case}: gradient entry {i}: analytic {a:e} \
                 numeric {n:e} rel err {:e}",
                grad_rel_err(a, n)
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn numeric_grad_of_square() {
        let mut f = |x: &[f64]| x[0] * x[0];
        let g = numeric_grad(&mut f, &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn numeric_grad_halving_eps_shrinks_error() {
        // f has nonzero third derivative so the central-difference error is
        // quadratic in eps.
        let mut f = |x: &[f64]| x[0].exp();
        let truth = 1.3f64.exp();
        let coarse = (numeric_grad(&mut f, &[1.3], 1e-2)[0] - truth).abs();
        let fine = (numeric_grad(&mut f, &[1.3], 5e-3)[0] - truth).abs();
        assert!(fine < coarse);
        assert!(fine > 0.0);
    }

    #[test]
    fn median_oracle_handles_duplicates() {
        let mut vals = vec![0.5f32; 25];
        vals[0] = 0.1;
        vals[1] = 0.9;
        let grid = PixelGrid::new(5, 5, 1, vals).unwrap();
        let spec = ActionSpec {
            id: 0,
            kind: ActionKind::Median5,
        };
        let out = naive_filter(&grid, &spec).unwrap();
        assert_eq!(out.get(0, 2, 2), 0.5);
    }

    #[test]
    fn bilateral_wide_range_sigma_approaches_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = random_grid(12, 12, &mut rng);
        let bilateral = naive_filter(
            &grid,
            &ActionSpec {
                id: 0,
                kind: ActionKind::Bilateral {
                    sigma_color: 100.0,
                    sigma_space: 5.0,
                },
            },
        )
        .unwrap();
        let gaussian = naive_filter(
            &grid,
            &ActionSpec {
                id: 0,
                kind: ActionKind::Gaussian { sigma: 5.0 },
            },
        )
        .unwrap();
        assert!(bilateral.max_abs_diff(&gaussian) < 1e-3);
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = Array2::from_shape_fn((6, 7), |_| rng.gen::<f64>());
        let mut w = Array2::zeros((3, 3));
        w[(1, 1)] = 1.0;
        assert_eq!(naive_conv(&map, &w), map);
    }

    #[test]
    fn conv_uniform_kernel_preserves_constant_interior() {
        let map = Array2::from_elem((8, 8), 1.0);
        let w = Array2::from_elem((3, 3), 1.0 / 9.0);
        let out = naive_conv(&map, &w);
        for y in 1..7 {
            for x in 1..7 {
                assert!((out[(y, x)] - 1.0).abs() < 1e-12);
            }
        }
        assert!(out[(0, 0)] < 1.0);
    }

    #[test]
    fn closed_form_identity_kernel_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = Array2::from_shape_fn((5, 5), |_| rng.gen::<f64>());
        let v = Array2::from_shape_fn((5, 5), |_| rng.gen::<f64>());
        let mut w = Array2::zeros((3, 3));
        w[(1, 1)] = 1.0;
        let returns = closed_form_returns(&[r.clone()], &v, &w, 0.9);
        let expect = &r + &v.mapv(|x| 0.9 * x);
        let diff = (&returns[0] - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn exhaustive_matches_analytic_examples() {
        // 8-bit error 2 with two steps: fully corrected.
        assert_eq!(analytic_best_reward(2, 2), 4.0);
        // 8-bit error 5 with three steps: residual 2.
        assert_eq!(analytic_best_reward(5, 3), 21.0);
        let start = PixelGrid::constant(1, 1, 1, 100.0 / 255.0);
        let target = PixelGrid::constant(1, 1, 1, 102.0 / 255.0);
        let inst = TinyInstance::new(start, target, 2).unwrap();
        let best = exhaustive_best(&inst).unwrap();
        assert_eq!(best.total, 4.0);
        assert_eq!(best.sequences[0], vec![1, 1]);
    }

    #[test]
    fn zero_error_pixel_prefers_doing_nothing() {
        let g = PixelGrid::constant(1, 1, 1, 0.5);
        let inst = TinyInstance::new(g.clone(), g, 3).unwrap();
        let best = exhaustive_best(&inst).unwrap();
        assert_eq!(best.total, 0.0);
        assert_eq!(best.sequences[0], vec![0, 0, 0]);
    }

    #[test]
    fn tiny_instance_rejects_large_inputs() {
        let g = PixelGrid::zeros(4, 2, 1);
        assert!(TinyInstance::new(g.clone(), g, 2).is_err());
        let g3 = PixelGrid::zeros(3, 3, 1);
        assert!(TinyInstance::new(g3.clone(), g3, 4).is_err());
    }

    #[test]
    fn reference_psnr_offset_closed_form() {
        let a = PixelGrid::constant(8, 8, 1, 0.5);
        let b = PixelGrid::constant(8, 8, 1, 0.5 + 1.0 / 255.0);
        let db = reference_psnr(&a, &b);
        // single-precision storage perturbs the offset by ~1e-4 dB
        assert!((db - 20.0 * 255f64.log10()).abs() < 1e-3);
        assert!(reference_psnr(&a, &a).is_infinite());
    }

    #[test]
    fn reference_ssim_identical_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_grid(16, 16, &mut rng);
        let s = reference_ssim(&g, &g).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reference_lab_white_and_black() {
        let (l, a, b) = reference_lab(0.0, 0.0, 0.0);
        assert!(l.abs() < 1e-9 && a.abs() < 1e-9 && b.abs() < 1e-9);
        let (l, a, b) = reference_lab(1.0, 1.0, 1.0);
        assert!((l - 100.0).abs() < 1e-4 && a.abs() < 0.01 && b.abs() < 0.01);
    }

    #[test]
    fn verify_suites_pass_on_small_budgets() {
        verify_filters(1234, 5).unwrap();
        verify_optimality(99, 10).unwrap();
        verify_returns(55, 10).unwrap();
        verify_gradients(7, 1).unwrap();
    }
}
