//! Trains a blind text-restoration policy: random strings are stamped onto
//! the images and the agents learn to paint the covered pixels back. Rewards
//! are zero wherever the overlay did not touch, so progress is slower than
//! for dense noise; the increment actions do most of the work.

use pixelrl::env::{synthetic_dataset, Task};
use pixelrl::eval::{evaluate, EvalOptions};
use pixelrl::checkpoint::load_model;
use pixelrl::trainer::{train, training_dataset, TrainConfig};

fn main() -> pixelrl::Result<()> {
    let mut cfg = TrainConfig::for_task(Task::Restore);
    cfg.episodes = 250;
    cfg.batch = 8;
    cfg.crop = 32;
    cfg.t_max = 5;
    cfg.lr = 3e-3;
    cfg.channels = 6;
    cfg.use_gru = false;
    cfg.seed = 3;
    cfg.synthetic_images = 12;
    cfg.checkpoint_interval = 1000;
    cfg.out_dir = std::env::temp_dir().join("pixelrl_train_restore");

    println!(
        "training {} episodes of text removal on {}x{} crops...",
        cfg.episodes, cfg.crop, cfg.crop
    );
    let dataset = training_dataset(&cfg)?;
    let outcome = train(&cfg, &dataset)?;
    for (i, parts) in outcome.history.iter().enumerate() {
        if i % 50 == 0 || i + 1 == outcome.history.len() {
            println!("  episode {i:>4}: mean reward {:>8.4}", parts.mean_reward);
        }
    }

    let model = load_model(&outcome.final_path)?;
    let heldout = synthetic_dataset(4, 64, 64, 1, 770_000);
    let report = evaluate(&model, &heldout, Task::Restore, &EvalOptions::default())?;
    println!();
    println!(
        "held-out mean PSNR: {:.2} dB overlaid -> {:.2} dB restored ({:+.2} dB)",
        report.mean_psnr_in,
        report.mean_psnr_out,
        report.mean_psnr_out - report.mean_psnr_in
    );
    println!(
        "held-out mean SSIM: {:.4} -> {:.4}",
        report.mean_ssim_in, report.mean_ssim_out
    );
    Ok(())
}
