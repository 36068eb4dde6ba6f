//! Single-learner advantage actor-critic training loop.
//!
//! Batch elements stream one at a time through rollout and backward so the
//! activation caches of only one episode are alive at once; gradients average
//! across the batch before the optimizer step. Every random draw derives from
//! the run seed and the episode index, which makes runs bit-reproducible.

pub mod adam;
pub mod config;
pub mod step;

pub use adam::Adam;
pub use config::{parse_config_file, parse_config_str, TrainConfig};
pub use step::{
    collect_rollout, loss_and_grads, per_pixel_losses, surrogate_loss, ActionSelection, LossParts,
    Rollout,
};

use crate::actions::ActionSet;
use crate::checkpoint::{load_model, save_model, ModelMeta};
use crate::env::{sample_training_batch, synthetic_dataset, Dataset};
use crate::error::{PixelRlError, Result};
use crate::net::{ArchConfig, Network, Real};
use crate::rmc::{ReturnConfig, RmcKernel};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;

const EPISODE_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
const ACTION_MIX: u64 = 0x5851_f42d_4c95_7f2d;
const DATA_MIX: u64 = 0x2545_f491_4f6c_dd1d;

/// What a finished (or aborted) run leaves behind.
#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<LossParts>,
    pub log_path: PathBuf,
    pub final_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// The images a run trains on: the configured directory, or a deterministic
/// synthetic set when none is given.
pub fn training_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    match &cfg.data_dir {
        Some(dir) => crate::env::load_dir(dir, cfg.task.channels()),
        None => {
            let side = cfg.crop + 16;
            Ok(synthetic_dataset(
                cfg.synthetic_images,
                side,
                side,
                cfg.task.channels(),
                cfg.seed ^ DATA_MIX,
            ))
        }
    }
}

fn build_model(cfg: &TrainConfig, set: &ActionSet) -> Result<(Network<f32>, Option<RmcKernel>)> {
    if let Some(path) = &cfg.init_from {
        let saved = load_model(path)?;
        if saved.meta.task != cfg.task {
            return Err(PixelRlError::Config(format!(
                "checkpoint {} was trained for task {}, run is {}",
                path.display(),
                saved.meta.task.name(),
                cfg.task.name()
            )));
        }
        if saved.net.cfg.n_actions != set.len() {
            return Err(PixelRlError::Config(format!(
                "checkpoint has {} actions, action set {} has {}",
                saved.net.cfg.n_actions,
                set.name(),
                set.len()
            )));
        }
        // Warm start: adopt the stored architecture. A plain checkpoint
        // entering an RMC run gets the identity kernel, which reproduces
        // its returns exactly until the kernel starts to learn.
        let kernel = match (cfg.rmc, saved.kernel) {
            (true, Some(k)) => Some(k),
            (true, None) => Some(RmcKernel::identity(cfg.rmc_size)?),
            (false, _) => None,
        };
        return Ok((saved.net, kernel));
    }
    let arch = ArchConfig {
        in_channels: cfg.task.channels(),
        channels: cfg.channels,
        n_actions: set.len(),
        use_gru: cfg.use_gru,
        expected_rf: None,
        ..ArchConfig::default()
    };
    let net = Network::init(arch, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let kernel = cfg.rmc.then(|| RmcKernel::identity(cfg.rmc_size)).transpose()?;
    Ok((net, kernel))
}

/// Runs the full loop. On a non-finite loss or parameter the function errors
/// out immediately; checkpoints already on disk are never touched again, so
/// the last good one survives the abort.
pub fn train(cfg: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(PixelRlError::Data("empty training dataset".into()));
    }
    let set = cfg.task.default_action_set();
    let (mut net, kernel) = build_model(cfg, &set)?;
    let mut w: Option<Array2<f64>> = kernel.map(|k| k.as_f64());
    let returns_cfg = ReturnConfig {
        gamma: cfg.gamma,
        bootstrap: cfg.bootstrap,
    };

    std::fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join("train_log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log, "episode,mean_reward,policy_loss,value_loss,lr")?;

    let net_n = net.param_count();
    let w_n = w.as_ref().map_or(0, Array2::len);
    let mut master: Vec<f64> = net.flatten_params().iter().map(|v| v.to_f64()).collect();
    if let Some(w) = &w {
        master.extend(w.iter());
    }
    let mut opt = Adam::new(net_n + w_n);
    let mut history = Vec::with_capacity(cfg.episodes);
    let mut checkpoints = Vec::new();

    for e in 0..cfg.episodes {
        let episode_seed = cfg.seed ^ (e as u64 + 1).wrapping_mul(EPISODE_MIX);
        let mut envs = sample_training_batch(
            dataset,
            cfg.batch,
            cfg.crop,
            cfg.task,
            &cfg.corruption,
            cfg.t_max,
            episode_seed,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ ACTION_MIX);

        let mut grads = vec![0.0f64; net_n + w_n];
        let mut mean = LossParts {
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            total: 0.0,
            mean_reward: 0.0,
        };
        let inv_b = 1.0 / cfg.batch as f64;
        for b in 0..cfg.batch {
            let rollout = collect_rollout(
                &net,
                &mut envs[b..b + 1],
                &set,
                cfg.bootstrap,
                ActionSelection::Sample,
                &mut rng,
            )?;
            let (parts, gnet, dw) =
                loss_and_grads(&net, &rollout, w.as_ref(), &returns_cfg, cfg.beta)?;
            for (slot, g) in grads[..net_n].iter_mut().zip(gnet.flatten_params()) {
                *slot += inv_b * g.to_f64();
            }
            if let Some(dw) = dw {
                for (slot, g) in grads[net_n..].iter_mut().zip(dw.iter()) {
                    *slot += inv_b * g;
                }
            }
            mean.policy_loss += inv_b * parts.policy_loss;
            mean.value_loss += inv_b * parts.value_loss;
            mean.entropy += inv_b * parts.entropy;
            mean.total += inv_b * parts.total;
            mean.mean_reward += inv_b * parts.mean_reward;
        }

        let lr = cfg.learning_rate(e);
        opt.step(&mut master, &grads, lr)?;
        let casted: Vec<f32> = master[..net_n].iter().map(|&v| v as f32).collect();
        net.set_flat_params(&casted)?;
        if let Some(w) = w.as_mut() {
            for (slot, &v) in w.iter_mut().zip(&master[net_n..]) {
                *slot = v;
            }
        }
        if !net.all_finite() {
            return Err(PixelRlError::Numeric(format!(
                "non-finite parameters after episode {}",
                e + 1
            )));
        }

        let episode = e + 1;
        writeln!(
            log,
            "{episode},{},{},{},{lr}",
            mean.mean_reward, mean.policy_loss, mean.value_loss
        )?;
        history.push(mean);

        if episode % cfg.checkpoint_interval == 0 {
            let path = cfg.out_dir.join(format!("checkpoint_ep{episode:06}.pxrl"));
            save_model(&path, &net, current_kernel(&w)?.as_ref(), &meta(cfg, &set, episode))?;
            checkpoints.push(path);
        }
        log.flush()?;
    }

    let final_path = cfg.out_dir.join("model_final.pxrl");
    save_model(
        &final_path,
        &net,
        current_kernel(&w)?.as_ref(),
        &meta(cfg, &set, cfg.episodes),
    )?;
    Ok(TrainOutcome {
        history,
        log_path,
        final_path,
        checkpoints,
    })
}

fn meta(cfg: &TrainConfig, set: &ActionSet, episode: usize) -> ModelMeta {
    ModelMeta {
        task: cfg.task,
        action_set: set.name().to_string(),
        episode,
        t_max: cfg.t_max,
    }
}

fn current_kernel(w: &Option<Array2<f64>>) -> Result<Option<RmcKernel>> {
    w.as_ref()
        .map(|w| RmcKernel::from_weights(w.mapv(|v| v as f32), true))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EpisodeState, Task};
    use crate::grid::PixelGrid;
    use crate::oracle::{grad_rel_err, numeric_grad};
    use crate::rmc::Bootstrap;
    use ndarray::Array3;
    use rand::Rng;

    fn toy_arch(n_actions: usize, use_gru: bool) -> ArchConfig {
        ArchConfig {
            in_channels: 1,
            channels: 2,
            n_actions,
            use_gru,
            trunk_dilations: vec![1, 1],
            branch_dilations: vec![1],
            expected_rf: None,
        }
    }

    fn smooth_grid(h: usize, w: usize, seed: u64) -> PixelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3));
        PixelGrid::from_fn(h, w, 1, |_, y, x| {
            (0.5 + a * (y as f64 * 0.7).sin() + b * (x as f64 * 0.5).cos()).clamp(0.0, 1.0) as f32
        })
    }

    fn toy_episodes(n: usize, h: usize, w: usize, t_max: usize, seed: u64) -> Vec<EpisodeState> {
        let cfg = crate::env::CorruptionConfig::default();
        (0..n)
            .map(|i| {
                let clean = smooth_grid(h, w, seed + i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 99));
                let noisy = cfg.corrupt(&clean, Task::DenoiseGauss, &mut rng).unwrap();
                EpisodeState::new(Task::DenoiseGauss, clean, noisy, t_max).unwrap()
            })
            .collect()
    }

    fn jitter(net: &mut Network<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = net.flatten_params();
        for p in params.iter_mut() {
            *p += rng.gen_range(0.01..0.05) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        net.set_flat_params(&params).unwrap();
    }

    #[test]
    fn streamed_elements_draw_the_same_actions_as_a_batch() {
        let set = ActionSet::denoise9();
        let net = Network::<f32>::init(toy_arch(9, true), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let mut batch = toy_episodes(3, 6, 6, 2, 50);
        let mut single = batch.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(77);
        let full = collect_rollout(
            &net,
            &mut batch,
            &set,
            Bootstrap::Zero,
            ActionSelection::Sample,
            &mut rng_a,
        )
        .unwrap();
        let mut rng_b = ChaCha8Rng::seed_from_u64(77);
        for (b, ep) in single.iter_mut().enumerate() {
            let one = collect_rollout(
                &net,
                std::slice::from_mut(ep),
                &set,
                Bootstrap::Zero,
                ActionSelection::Sample,
                &mut rng_b,
            )
            .unwrap();
            for t in 0..full.steps() {
                assert_eq!(one.actions[0][t].ids(), full.actions[b][t].ids());
            }
        }
    }

    #[test]
    fn single_action_reduces_to_value_regression() {
        let set = ActionSet::new("solo", vec![crate::actions::ActionKind::Nothing]).unwrap();
        let net = Network::<f64>::init(toy_arch(1, true), &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let mut eps = toy_episodes(2, 5, 5, 2, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let rollout = collect_rollout(
            &net,
            &mut eps,
            &set,
            Bootstrap::Zero,
            ActionSelection::Sample,
            &mut rng,
        )
        .unwrap();
        let (parts, grads, dw) =
            loss_and_grads(&net, &rollout, None, &ReturnConfig::default(), 0.0).unwrap();
        assert!(dw.is_none());
        // log(1) = 0 everywhere, so only the value path carries gradient.
        assert_eq!(parts.policy_loss, 0.0);
        let flat = grads.flatten_params();
        for (name, range) in net.group_ranges() {
            let magnitude: f64 = flat[range].iter().map(|g| g.abs()).sum();
            match name {
                "policy_branch" | "policy_head" | "gru" => {
                    assert_eq!(magnitude, 0.0, "group {name} should be untouched")
                }
                _ => assert!(magnitude > 0.0, "group {name} should be learning"),
            }
        }
    }

    #[test]
    fn positive_advantage_action_becomes_more_likely() {
        // Hand-built one-pixel rollout: action 1 earns reward 1, so one
        // update must raise pi(1).
        let mut net =
            Network::<f64>::init(toy_arch(2, false), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        jitter(&mut net, 9);
        let x = Array3::<f64>::from_elem((1, 1, 1), 0.4);
        let cache = net.forward(&x, None).unwrap();
        let p_before = cache.probs[(1, 0, 0)];
        let rollout = Rollout {
            actions: vec![vec![crate::actions::ActionMap::uniform(1, 1, 1)]],
            rewards: vec![vec![Array2::from_elem((1, 1), 1.0)]],
            bootstrap: vec![Array2::zeros((1, 1))],
            caches: vec![vec![cache]],
            mean_reward: 1.0,
        };
        let (_, grads, _) =
            loss_and_grads(&net, &rollout, None, &ReturnConfig::default(), 0.0).unwrap();
        let mut params = net.flatten_params();
        for (p, g) in params.iter_mut().zip(grads.flatten_params()) {
            *p -= 0.05 * g;
        }
        net.set_flat_params(&params).unwrap();
        let p_after = net.forward(&x, None).unwrap().probs[(1, 0, 0)];
        assert!(
            p_after > p_before,
            "pi(1) should rise: {p_before} -> {p_after}"
        );
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let mut net =
            Network::<f64>::init(toy_arch(3, true), &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        jitter(&mut net, 14);
        let set = ActionSet::new(
            "tiny3",
            vec![
                crate::actions::ActionKind::Nothing,
                crate::actions::ActionKind::Increment { delta: 1.0 / 255.0 },
                crate::actions::ActionKind::Increment { delta: -1.0 / 255.0 },
            ],
        )
        .unwrap();
        let mut eps = toy_episodes(2, 4, 4, 2, 70);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let rollout = collect_rollout(
            &net,
            &mut eps,
            &set,
            Bootstrap::Zero,
            ActionSelection::Sample,
            &mut rng,
        )
        .unwrap();
        let w0 = {
            let mut k = RmcKernel::identity(3).unwrap().as_f64();
            let mut krng = ChaCha8Rng::seed_from_u64(72);
            k.mapv_inplace(|v| v + krng.gen_range(-0.05..0.05));
            k
        };
        let cfg = ReturnConfig::default();
        let beta = 0.01;
        let (parts, gnet, dw) = loss_and_grads(&net, &rollout, Some(&w0), &cfg, beta).unwrap();
        let mut analytic: Vec<f64> = gnet.flatten_params();
        analytic.extend(dw.unwrap().iter());

        let frozen = rollout.value_baselines();
        let net_n = net.param_count();
        let mut center: Vec<f64> = net.flatten_params();
        center.extend(w0.iter());
        let mut probe_net = net.clone();
        let loss_at = |p: &[f64], probe_net: &mut Network<f64>| -> f64 {
            probe_net.set_flat_params(&p[..net_n]).unwrap();
            let w = Array2::from_shape_vec((3, 3), p[net_n..].to_vec()).unwrap();
            surrogate_loss(probe_net, &rollout, &frozen, Some(&w), &cfg, beta).unwrap()
        };
        // The surrogate at the center must be the loss the update reports.
        assert!((loss_at(&center, &mut probe_net) - parts.total).abs() < 1e-12);
        let numeric = numeric_grad(&mut |p: &[f64]| loss_at(p, &mut probe_net), &center, 1e-5);
        for i in 0..center.len() {
            let (a, n) = (analytic[i], numeric[i]);
            let abs = (a - n).abs();
            let rel = grad_rel_err(a, n);
            assert!(
                abs < 1e-7 || rel < 1e-3,
                "entry {i}: analytic {a:e} numeric {n:e} rel {rel:e}"
            );
        }
    }

    #[test]
    fn half_image_losses_match_full_image_on_the_interior() {
        // Per-pixel losses are local up to the receptive field, so splitting
        // an image in two only disturbs pixels near the cut.
        let net = Network::<f64>::init(toy_arch(9, false), &mut ChaCha8Rng::seed_from_u64(17))
            .unwrap();
        let set = ActionSet::denoise9();
        let cfg = ReturnConfig::default();
        let (h, w, t_max) = (12, 24, 1);
        let full_eps = toy_episodes(1, h, w, t_max, 80);
        let run = |mut eps: Vec<EpisodeState>| {
            let mut rng = ChaCha8Rng::seed_from_u64(81);
            collect_rollout(
                &net,
                &mut eps,
                &set,
                Bootstrap::Zero,
                ActionSelection::Greedy,
                &mut rng,
            )
            .unwrap()
        };
        let full = run(full_eps.clone());
        let (ft, fv) = {
            let (returns, _) =
                crate::rmc::compute_returns(&full.rewards[0], &full.bootstrap[0], None, cfg.gamma)
                    .unwrap();
            per_pixel_losses(
                &full.caches[0][0],
                &full.actions[0][0],
                &returns[0],
                &full.value_baselines()[0][0],
                0.01,
            )
        };
        // Same clean/noisy pair, split into left and right halves.
        let target = full_eps[0].target().clone();
        let noisy = full_eps[0].current().clone();
        let halves = [
            (
                crate::env::crop_grid(&target, 0, 0, h, w / 2),
                crate::env::crop_grid(&noisy, 0, 0, h, w / 2),
                0usize,
            ),
            (
                crate::env::crop_grid(&target, 0, w / 2, h, w / 2),
                crate::env::crop_grid(&noisy, 0, w / 2, h, w / 2),
                w / 2,
            ),
        ];
        let radius = 4; // receptive field 9 for the toy trunk
        for (t_half, n_half, x0) in halves {
            let ep = EpisodeState::new(Task::DenoiseGauss, t_half, n_half, t_max).unwrap();
            let half = run(vec![ep]);
            let (ht, hv) = {
                let (returns, _) = crate::rmc::compute_returns(
                    &half.rewards[0],
                    &half.bootstrap[0],
                    None,
                    cfg.gamma,
                )
                .unwrap();
                per_pixel_losses(
                    &half.caches[0][0],
                    &half.actions[0][0],
                    &returns[0],
                    &half.value_baselines()[0][0],
                    0.01,
                )
            };
            for y in radius..h - radius {
                for x in radius..w / 2 - radius {
                    let dp = (ht[(y, x)] - ft[(y, x0 + x)]).abs();
                    let dv = (hv[(y, x)] - fv[(y, x0 + x)]).abs();
                    assert!(dp < 1e-9 && dv < 1e-9, "pixel ({y},{x}): {dp} {dv}");
                }
            }
        }
    }

    fn smoke_config(dir: &str) -> TrainConfig {
        let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
        cfg.episodes = 50;
        cfg.batch = 8;
        cfg.crop = 16;
        cfg.t_max = 3;
        cfg.channels = 8;
        cfg.lr = 3e-3;
        cfg.synthetic_images = 8;
        cfg.checkpoint_interval = 50;
        cfg.seed = 11;
        cfg.out_dir = std::env::temp_dir().join("pixelrl-train-tests").join(dir);
        cfg
    }

    #[test]
    fn fifty_episode_smoke_run_learns() {
        let cfg = smoke_config("smoke");
        let dataset = training_dataset(&cfg).unwrap();
        let out = train(&cfg, &dataset).unwrap();
        assert_eq!(out.history.len(), 50);
        let first: f64 = out.history[..10].iter().map(|p| p.mean_reward).sum::<f64>() / 10.0;
        let last: f64 = out.history[40..].iter().map(|p| p.mean_reward).sum::<f64>() / 10.0;
        assert!(
            last > first,
            "mean reward should improve: first10 {first}, last10 {last}"
        );
        assert!(out.final_path.exists());
        let log = std::fs::read_to_string(&out.log_path).unwrap();
        assert!(log.starts_with("episode,mean_reward,policy_loss,value_loss,lr"));
        assert_eq!(log.lines().count(), 51);
    }

    #[test]
    fn same_seed_runs_are_bit_identical_at_episode_ten() {
        let mut cfg = smoke_config("det-a");
        cfg.episodes = 10;
        cfg.checkpoint_interval = 10;
        cfg.channels = 4;
        let dataset = training_dataset(&cfg).unwrap();
        let a = train(&cfg, &dataset).unwrap();
        let mut cfg_b = cfg.clone();
        cfg_b.out_dir = std::env::temp_dir().join("pixelrl-train-tests").join("det-b");
        let b = train(&cfg_b, &dataset).unwrap();
        let bytes_a = std::fs::read(&a.checkpoints[0]).unwrap();
        let bytes_b = std::fs::read(&b.checkpoints[0]).unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn exploding_run_aborts_and_keeps_the_earlier_checkpoint() {
        let mut cfg = smoke_config("abort");
        cfg.episodes = 6;
        cfg.checkpoint_interval = 1;
        cfg.channels = 4;
        cfg.lr = 1e30;
        let dataset = training_dataset(&cfg).unwrap();
        let err = train(&cfg, &dataset).unwrap_err();
        assert!(matches!(err, PixelRlError::Numeric(_)), "got {err}");
        let first = cfg.out_dir.join("checkpoint_ep000001.pxrl");
        assert!(first.exists(), "episode-1 checkpoint should survive");
        assert!(!cfg.out_dir.join("model_final.pxrl").exists());
    }
}
