//! Episodic environments: corruptions, per-pixel rewards, batch sampling.
//!
//! An episode starts at the corrupted image and applies one action map per
//! step for `t_max` steps. The per-pixel reward is the decrease of a distance
//! to the clean target: squared error on the 0..255 scale for denoising and
//! restoration, Euclidean CIELab distance for color enhancement. Summed over
//! an episode the rewards telescope to initial minus final distance, so
//! maximizing total reward minimizes the final error.

pub mod dataset;
pub mod noise;
pub mod text;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actions::{apply_action_map, rgb_to_lab, ActionMap, ActionSet};
use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;

pub use dataset::{load_dir, load_image, save_png, synthetic_dataset, Dataset};
pub use noise::{add_gaussian_noise, add_poisson, add_salt_pepper};
pub use text::{overlay_text, TextConfig};

/// The restoration problem an episode optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    DenoiseGauss,
    DenoiseSp,
    DenoisePoisson,
    Restore,
    Color,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::DenoiseGauss,
        Task::DenoiseSp,
        Task::DenoisePoisson,
        Task::Restore,
        Task::Color,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::DenoiseGauss => "denoise_gauss",
            Task::DenoiseSp => "denoise_sp",
            Task::DenoisePoisson => "denoise_poisson",
            Task::Restore => "restore",
            Task::Color => "color",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|t| t.name() == name)
            .copied()
            .ok_or_else(|| PixelRlError::Config(format!("unknown task {name}")))
    }

    pub fn default_t_max(&self) -> usize {
        match self {
            Task::Restore => 15,
            Task::Color => 10,
            _ => 5,
        }
    }

    pub fn default_action_set(&self) -> ActionSet {
        match self {
            Task::Color => ActionSet::color13(),
            _ => ActionSet::denoise9(),
        }
    }

    /// Channel count the task's images are expected in.
    pub fn channels(&self) -> usize {
        match self {
            Task::Color => 3,
            _ => 1,
        }
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|t| t == self).unwrap()
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| PixelRlError::Checkpoint(format!("bad task index {i}")))
    }
}

/// Per-pixel rewards for one step, double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMap {
    pub values: Array2<f64>,
}

impl RewardMap {
    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }
}

/// Corruption strengths per task plus the text overlay setup.
#[derive(Debug, Clone)]
pub struct CorruptionConfig {
    pub gaussian_sigma: f64,
    pub sp_density: f64,
    pub poisson_peak: f64,
    pub text: TextConfig,
    /// Peak relative amplitude of the smooth color cast applied for the
    /// color-enhancement task.
    pub color_cast: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            gaussian_sigma: 25.0,
            sp_density: 0.5,
            poisson_peak: 30.0,
            text: TextConfig::default(),
            color_cast: 0.25,
        }
    }
}

impl CorruptionConfig {
    /// Corrupt a clean image according to the task.
    pub fn corrupt(&self, clean: &PixelGrid, task: Task, rng: &mut impl Rng) -> Result<PixelGrid> {
        match task {
            Task::DenoiseGauss => add_gaussian_noise(clean, self.gaussian_sigma, rng),
            Task::DenoiseSp => add_salt_pepper(clean, self.sp_density, rng),
            Task::DenoisePoisson => add_poisson(clean, self.poisson_peak, rng),
            Task::Restore => overlay_text(clean, rng, &self.text),
            Task::Color => Ok(color_cast(clean, self.color_cast, rng)),
        }
    }
}

/// Smooth per-channel multiplicative cast: a low-frequency gain field in
/// [1-amp, 1+amp] per channel, the degradation the color actions undo.
fn color_cast(clean: &PixelGrid, amp: f64, rng: &mut impl Rng) -> PixelGrid {
    let (h, w) = (clean.height(), clean.width());
    let mut out = clean.clone();
    for c in 0..clean.channels() {
        let a = rng.gen_range(0.3..1.0) * amp;
        let fy = rng.gen_range(0.3..1.2) * std::f64::consts::TAU / h as f64;
        let fx = rng.gen_range(0.3..1.2) * std::f64::consts::TAU / w as f64;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let bias = rng.gen_range(-0.5..0.5) * amp;
        for y in 0..h {
            for x in 0..w {
                let gain = 1.0 + bias + a * (fy * y as f64 + fx * x as f64 + phase).sin();
                let v = clean.get(c, y, x) as f64 * gain;
                out.set(c, y, x, crate::grid::clip01(v));
            }
        }
    }
    out
}

/// One fixed-horizon episode: the corrupted state, its clean target, and the
/// step counter.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub task: Task,
    target: PixelGrid,
    current: PixelGrid,
    lab_target: Option<PixelGrid>,
    t: usize,
    t_max: usize,
}

impl EpisodeState {
    pub fn new(task: Task, target: PixelGrid, corrupted: PixelGrid, t_max: usize) -> Result<Self> {
        if !target.same_shape(&corrupted) {
            return Err(PixelRlError::ShapeMismatch(
                "target and corrupted image shapes differ".into(),
            ));
        }
        if t_max == 0 {
            return Err(PixelRlError::Env("episode length must be positive".into()));
        }
        if task == Task::Color && target.channels() != 3 {
            return Err(PixelRlError::Env(
                "color enhancement needs RGB images".into(),
            ));
        }
        let lab_target = if task == Task::Color {
            Some(rgb_to_lab(&target))
        } else {
            None
        };
        Ok(Self {
            task,
            target,
            current: corrupted,
            lab_target,
            t: 0,
            t_max,
        })
    }

    pub fn target(&self) -> &PixelGrid {
        &self.target
    }

    pub fn current(&self) -> &PixelGrid {
        &self.current
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.t_max
    }

    /// Per-pixel distance from the current state to the target: squared
    /// 0..255-scale error (summed over channels) for denoise/restore,
    /// Euclidean CIELab distance for color.
    pub fn distance(&self) -> Array2<f64> {
        distance_map(self.task, &self.target, self.lab_target.as_ref(), &self.current)
    }

    /// Apply one action map, advance the clock, and return the per-pixel
    /// decrease in distance.
    pub fn step(&mut self, actions: &ActionMap, set: &ActionSet) -> Result<RewardMap> {
        if self.is_done() {
            return Err(PixelRlError::Env(format!(
                "episode already finished after {} steps",
                self.t_max
            )));
        }
        let before = self.distance();
        self.current = apply_action_map(&self.current, actions, set)?;
        let after = self.distance();
        self.t += 1;
        Ok(RewardMap {
            values: before - after,
        })
    }
}

fn distance_map(
    task: Task,
    target: &PixelGrid,
    lab_target: Option<&PixelGrid>,
    current: &PixelGrid,
) -> Array2<f64> {
    let (h, w) = (target.height(), target.width());
    let mut out = Array2::zeros((h, w));
    match task {
        Task::Color => {
            let lab_t = lab_target.expect("lab target precomputed");
            let lab_c = rgb_to_lab(current);
            for y in 0..h {
                for x in 0..w {
                    let mut sq = 0.0f64;
                    for c in 0..3 {
                        let d = lab_t.get(c, y, x) as f64 - lab_c.get(c, y, x) as f64;
                        sq += d * d;
                    }
                    out[(y, x)] = sq.sqrt();
                }
            }
        }
        _ => {
            for c in 0..target.channels() {
                let (tp, cp) = (target.plane(c), current.plane(c));
                for y in 0..h {
                    for x in 0..w {
                        let d = 255.0 * (tp[y * w + x] as f64 - cp[y * w + x] as f64);
                        out[(y, x)] += d * d;
                    }
                }
            }
        }
    }
    out
}

/// Augmentation + corruption pipeline for one training minibatch. Each
/// element takes an independent RNG stream derived from `seed` and its index,
/// so batch composition is reproducible and order-independent.
pub fn sample_training_batch(
    dataset: &Dataset,
    batch: usize,
    crop: usize,
    task: Task,
    corruption: &CorruptionConfig,
    t_max: usize,
    seed: u64,
) -> Result<Vec<EpisodeState>> {
    if dataset.is_empty() {
        return Err(PixelRlError::Data("empty dataset".into()));
    }
    let mut out = Vec::with_capacity(batch);
    for k in 0..batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1)));
        let img = &dataset.images[rng.gen_range(0..dataset.len())];
        if img.height() < crop || img.width() < crop {
            return Err(PixelRlError::Data(format!(
                "image {}x{} smaller than crop {crop}",
                img.height(),
                img.width()
            )));
        }
        let y0 = rng.gen_range(0..=img.height() - crop);
        let x0 = rng.gen_range(0..=img.width() - crop);
        let mut patch = crop_grid(img, y0, x0, crop, crop);
        if rng.gen::<bool>() {
            patch = flip_horizontal(&patch);
        }
        for _ in 0..rng.gen_range(0..4u32) {
            patch = rot90(&patch);
        }
        let corrupted = corruption.corrupt(&patch, task, &mut rng)?;
        out.push(EpisodeState::new(task, patch, corrupted, t_max)?);
    }
    Ok(out)
}

pub fn crop_grid(g: &PixelGrid, y0: usize, x0: usize, h: usize, w: usize) -> PixelGrid {
    PixelGrid::from_fn(h, w, g.channels(), |c, y, x| g.get(c, y0 + y, x0 + x))
}

pub fn flip_horizontal(g: &PixelGrid) -> PixelGrid {
    PixelGrid::from_fn(g.height(), g.width(), g.channels(), |c, y, x| {
        g.get(c, y, g.width() - 1 - x)
    })
}

/// Quarter turn counterclockwise.
pub fn rot90(g: &PixelGrid) -> PixelGrid {
    PixelGrid::from_fn(g.width(), g.height(), g.channels(), |c, y, x| {
        g.get(c, x, g.width() - 1 - y)
    })
}
