//! Greedy evaluation: restore images, score PSNR/SSIM, count actions per
//! step, optionally with eightfold dihedral test-time augmentation.

use crate::actions::{apply_action_map, ActionMap, ActionSet};
use crate::checkpoint::SavedModel;
use crate::env::{flip_horizontal, rot90, CorruptionConfig, Dataset, Task};
use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;
use crate::metrics::{format_db, psnr, ssim};
use crate::net::{greedy_actions, grid_to_input, sample_actions, Network};
use crate::trainer::ActionSelection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

const EVAL_MIX: u64 = 0x94d0_49bb_1331_11eb;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Steps to run; defaults to the horizon the checkpoint was trained with.
    pub t_max: Option<usize>,
    pub tta: bool,
    pub selection: ActionSelection,
    pub seed: u64,
    pub corruption: CorruptionConfig,
    /// When set, restored PNGs and report.csv land here.
    pub out_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            tta: false,
            selection: ActionSelection::Greedy,
            seed: 0,
            corruption: CorruptionConfig::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageScore {
    pub name: String,
    pub psnr_in: f64,
    pub ssim_in: f64,
    pub psnr_out: f64,
    pub ssim_out: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Per-image scores, sorted by file name.
    pub images: Vec<ImageScore>,
    pub mean_psnr_in: f64,
    pub mean_ssim_in: f64,
    pub mean_psnr_out: f64,
    pub mean_ssim_out: f64,
    /// Actions taken per timestep, summed over all images: [t][action id].
    pub action_counts: Vec<Vec<u64>>,
}

/// Runs the policy for `t_max` steps. Returns every intermediate state
/// (t_max + 1 grids, starting with the input) and the chosen action maps.
pub fn rollout_actions(
    net: &Network<f32>,
    set: &ActionSet,
    input: &PixelGrid,
    t_max: usize,
    selection: ActionSelection,
    rng: &mut impl Rng,
) -> Result<(Vec<PixelGrid>, Vec<ActionMap>)> {
    if set.len() != net.cfg.n_actions {
        return Err(PixelRlError::ShapeMismatch(format!(
            "action set has {} actions, network outputs {}",
            set.len(),
            net.cfg.n_actions
        )));
    }
    let mut states = vec![input.clone()];
    let mut maps = Vec::with_capacity(t_max);
    let mut hidden = None;
    for _ in 0..t_max {
        let state = states.last().unwrap();
        let x = grid_to_input::<f32>(state);
        let cache = net.forward(&x, hidden.as_ref())?;
        let map = match selection {
            ActionSelection::Greedy => greedy_actions(&cache.probs),
            ActionSelection::Sample => sample_actions(&cache.probs, rng),
        };
        states.push(apply_action_map(state, &map, set)?);
        hidden = cache.hidden_new;
        maps.push(map);
    }
    Ok((states, maps))
}

/// The eight dihedral variants of a grid: rotations by k quarter turns, then
/// the same four after a horizontal flip.
pub fn dihedral_variant(g: &PixelGrid, k: usize) -> PixelGrid {
    let mut out = if k >= 4 { flip_horizontal(g) } else { g.clone() };
    for _ in 0..(k % 4) {
        out = rot90(&out);
    }
    out
}

/// Inverse of [`dihedral_variant`]: undoes the rotation, then the flip.
pub fn dihedral_inverse(g: &PixelGrid, k: usize) -> PixelGrid {
    let mut out = g.clone();
    for _ in 0..(4 - k % 4) % 4 {
        out = rot90(&out);
    }
    if k >= 4 {
        out = flip_horizontal(&out);
    }
    out
}

/// Restores one image. With TTA all eight dihedral variants are processed,
/// inverse-transformed, averaged in intensity and clipped; action maps come
/// from the untransformed pass.
pub fn restore_image(
    net: &Network<f32>,
    set: &ActionSet,
    input: &PixelGrid,
    t_max: usize,
    opts: &EvalOptions,
    rng: &mut impl Rng,
) -> Result<(PixelGrid, Vec<ActionMap>)> {
    let (states, maps) = rollout_actions(net, set, input, t_max, opts.selection, rng)?;
    let plain = states.into_iter().last().unwrap();
    if !opts.tta {
        return Ok((plain, maps));
    }
    let mut sum: Vec<f64> = plain.data().iter().map(|&v| v as f64).collect();
    for k in 1..8 {
        let variant = dihedral_variant(input, k);
        let (states, _) = rollout_actions(net, set, &variant, t_max, opts.selection, rng)?;
        let undone = dihedral_inverse(states.last().unwrap(), k);
        for (s, &v) in sum.iter_mut().zip(undone.data()) {
            *s += v as f64;
        }
    }
    let data: Vec<f32> = sum
        .iter()
        .map(|&v| ((v / 8.0) as f32).clamp(0.0, 1.0))
        .collect();
    let averaged = PixelGrid::new(input.height(), input.width(), input.channels(), data)?;
    Ok((averaged, maps))
}

/// Corrupts each clean image deterministically, restores it, and scores the
/// pair. The task must match what the checkpoint was trained for.
pub fn evaluate(
    model: &SavedModel,
    dataset: &Dataset,
    task: Task,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if task != model.meta.task {
        return Err(PixelRlError::Data(format!(
            "checkpoint was trained for task {}, evaluation asked for {}",
            model.meta.task.name(),
            task.name()
        )));
    }
    let set = task.default_action_set();
    if set.name() != model.meta.action_set {
        return Err(PixelRlError::Data(format!(
            "checkpoint uses action set {}, task {} uses {}",
            model.meta.action_set,
            task.name(),
            set.name()
        )));
    }
    if dataset.is_empty() {
        return Err(PixelRlError::Data("empty evaluation dataset".into()));
    }
    let t_max = opts.t_max.unwrap_or(model.meta.t_max);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset.names[a].cmp(&dataset.names[b]));

    let restored_dir = opts.out_dir.as_ref().map(|d| d.join("restored"));
    if let Some(dir) = &restored_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut images = Vec::with_capacity(dataset.len());
    let mut counts = vec![vec![0u64; set.len()]; t_max];
    for &i in &order {
        let clean = &dataset.images[i];
        let name = &dataset.names[i];
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed ^ EVAL_MIX.wrapping_mul(i as u64 + 1));
        let corrupted = opts.corruption.corrupt(clean, task, &mut rng)?;
        let (restored, maps) = restore_image(&model.net, &set, &corrupted, t_max, opts, &mut rng)?;
        for (t, map) in maps.iter().enumerate() {
            for (slot, n) in counts[t].iter_mut().zip(map.histogram(set.len())) {
                *slot += n;
            }
        }
        if let Some(dir) = &restored_dir {
            crate::env::save_png(&restored, &dir.join(name).with_extension("png"))?;
        }
        images.push(ImageScore {
            name: name.clone(),
            psnr_in: psnr(&corrupted, clean)?,
            ssim_in: ssim(&corrupted, clean)?,
            psnr_out: psnr(&restored, clean)?,
            ssim_out: ssim(&restored, clean)?,
        });
    }
    let n = images.len() as f64;
    let report = EvalReport {
        mean_psnr_in: images.iter().map(|s| s.psnr_in).sum::<f64>() / n,
        mean_ssim_in: images.iter().map(|s| s.ssim_in).sum::<f64>() / n,
        mean_psnr_out: images.iter().map(|s| s.psnr_out).sum::<f64>() / n,
        mean_ssim_out: images.iter().map(|s| s.ssim_out).sum::<f64>() / n,
        images,
        action_counts: counts,
    };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        write_report_csv(&report, &dir.join("report.csv"))?;
    }
    Ok(report)
}

/// Per-image rows sorted by name, then a `mean` row, matching the report
/// struct exactly.
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "image,psnr_in,ssim_in,psnr_out,ssim_out")?;
    for s in &report.images {
        writeln!(
            out,
            "{},{},{:.4},{},{:.4}",
            s.name,
            format_db(s.psnr_in),
            s.ssim_in,
            format_db(s.psnr_out),
            s.ssim_out
        )?;
    }
    writeln!(
        out,
        "mean,{},{:.4},{},{:.4}",
        format_db(report.mean_psnr_in),
        report.mean_ssim_in,
        format_db(report.mean_psnr_out),
        report.mean_ssim_out
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::ModelMeta;
    use crate::env::synthetic_dataset;
    use crate::net::ArchConfig;

    fn toy_model(task: Task, t_max: usize, seed: u64) -> SavedModel {
        let set = task.default_action_set();
        let cfg = ArchConfig {
            in_channels: task.channels(),
            channels: 4,
            n_actions: set.len(),
            use_gru: true,
            trunk_dilations: vec![1, 2],
            branch_dilations: vec![1],
            expected_rf: None,
        };
        SavedModel {
            net: Network::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
            kernel: None,
            meta: ModelMeta {
                task,
                action_set: set.name().to_string(),
                episode: 0,
                t_max,
            },
        }
    }

    #[test]
    fn dihedral_variants_invert_exactly() {
        let g = synthetic_dataset(1, 12, 16, 1, 9).images.remove(0);
        for k in 0..8 {
            let v = dihedral_variant(&g, k);
            let back = dihedral_inverse(&v, k);
            assert_eq!(back.data(), g.data(), "variant {k}");
        }
    }

    #[test]
    fn t_max_zero_returns_input_metrics() {
        let model = toy_model(Task::DenoiseGauss, 3, 21);
        let dataset = synthetic_dataset(2, 24, 24, 1, 22);
        let opts = EvalOptions {
            t_max: Some(0),
            ..EvalOptions::default()
        };
        let report = evaluate(&model, &dataset, Task::DenoiseGauss, &opts).unwrap();
        for s in &report.images {
            assert_eq!(s.psnr_in, s.psnr_out, "{}", s.name);
            assert_eq!(s.ssim_in, s.ssim_out, "{}", s.name);
        }
        assert!(report.action_counts.is_empty());
    }

    #[test]
    fn histogram_rows_sum_to_total_pixels_per_step() {
        let model = toy_model(Task::DenoiseGauss, 2, 23);
        let dataset = synthetic_dataset(3, 16, 20, 1, 24);
        let report =
            evaluate(&model, &dataset, Task::DenoiseGauss, &EvalOptions::default()).unwrap();
        assert_eq!(report.action_counts.len(), 2);
        let total = (3 * 16 * 20) as u64;
        for row in &report.action_counts {
            assert_eq!(row.iter().sum::<u64>(), total);
        }
    }

    #[test]
    fn untrained_model_stays_in_the_sanity_band() {
        // On detailed images an untrained policy can only nudge PSNR: its
        // filters trade noise for texture. Smooth content would not bound the
        // shift, so overlay a high-frequency checkerboard on the targets.
        for seed in 0..4 {
            let model = toy_model(Task::DenoiseGauss, 2, 25 + seed);
            let mut dataset = synthetic_dataset(4, 32, 32, 1, 100 + seed);
            for img in &mut dataset.images {
                *img = PixelGrid::from_fn(32, 32, 1, |c, y, x| {
                    let t = if (y + x) % 2 == 0 { 0.1 } else { -0.1 };
                    (img.get(c, y, x) + t).clamp(0.0, 1.0)
                });
            }
            let report =
                evaluate(&model, &dataset, Task::DenoiseGauss, &EvalOptions::default()).unwrap();
            let shift = report.mean_psnr_out - report.mean_psnr_in;
            assert!(shift.abs() < 3.0, "seed {seed}: psnr moved by {shift} dB");
        }
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let model = toy_model(Task::DenoiseGauss, 2, 27);
        let dataset = synthetic_dataset(1, 16, 16, 1, 28);
        let err = evaluate(&model, &dataset, Task::Restore, &EvalOptions::default()).unwrap_err();
        assert!(err.to_string().contains("task"));
    }

    /// Averages each kernel's four edge taps and four corner taps, making
    /// every conv invariant under the dihedral group.
    fn symmetrize(net: &mut Network<f32>) {
        const EDGES: [usize; 4] = [1, 3, 5, 7];
        const CORNERS: [usize; 4] = [0, 2, 6, 8];
        for conv in net.conv_refs_mut() {
            for mut row in conv.weight.rows_mut() {
                for taps in row.exact_chunks_mut(9) {
                    let taps = taps.into_slice().unwrap();
                    for group in [EDGES, CORNERS] {
                        let mean = group.iter().map(|&i| taps[i]).sum::<f32>() / 4.0;
                        for &i in &group {
                            taps[i] = mean;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_model_and_input_make_tta_equal_plain() {
        // With dihedral-invariant kernels the network commutes with the
        // transforms, and a uniform image is itself invariant, so each TTA
        // pass reproduces the plain output exactly (up to summation order).
        let mut model = toy_model(Task::DenoiseGauss, 2, 29);
        symmetrize(&mut model.net);
        let set = Task::DenoiseGauss.default_action_set();
        let flat = PixelGrid::from_fn(16, 16, 1, |_, _, _| 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let plain = restore_image(
            &model.net,
            &set,
            &flat,
            2,
            &EvalOptions::default(),
            &mut rng,
        )
        .unwrap()
        .0;
        let tta = restore_image(
            &model.net,
            &set,
            &flat,
            2,
            &EvalOptions {
                tta: true,
                ..EvalOptions::default()
            },
            &mut rng,
        )
        .unwrap()
        .0;
        for (a, b) in plain.data().iter().zip(tta.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn report_csv_has_sorted_rows_and_a_mean_line() {
        let model = toy_model(Task::DenoiseGauss, 1, 31);
        let dataset = synthetic_dataset(3, 16, 16, 1, 32);
        let dir = std::env::temp_dir().join("pixelrl-eval-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let opts = EvalOptions {
            out_dir: Some(dir.clone()),
            ..EvalOptions::default()
        };
        let report = evaluate(&model, &dataset, Task::DenoiseGauss, &opts).unwrap();
        let text = std::fs::read_to_string(dir.join("report.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image,psnr_in,ssim_in,psnr_out,ssim_out");
        assert_eq!(lines.len(), 2 + report.images.len());
        assert!(lines.last().unwrap().starts_with("mean,"));
        let names: Vec<&str> = lines[1..lines.len() - 1]
            .iter()
            .map(|l| l.split(',').next().unwrap())
            .collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for name in names {
            let path = dir.join("restored").join(name).with_extension("png");
            assert!(path.exists(), "{path:?}");
        }
    }
}
