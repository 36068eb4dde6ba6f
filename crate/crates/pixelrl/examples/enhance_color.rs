//! Trains local color enhancement: inputs are RGB images under a smooth color
//! cast and the per-pixel actions nudge individual Lab channels or apply small
//! contrast moves. Rewards use Lab distance, so the policy optimizes a
//! perceptual error rather than raw RGB difference.

use pixelrl::actions::ActionSet;
use pixelrl::env::{synthetic_dataset, Task};
use pixelrl::eval::{evaluate, EvalOptions};
use pixelrl::checkpoint::load_model;
use pixelrl::trainer::{train, training_dataset, TrainConfig};

fn main() -> pixelrl::Result<()> {
    let mut cfg = TrainConfig::for_task(Task::Color);
    cfg.episodes = 150;
    cfg.batch = 8;
    cfg.crop = 24;
    cfg.t_max = 4;
    cfg.lr = 3e-3;
    cfg.channels = 6;
    cfg.use_gru = false;
    cfg.seed = 5;
    cfg.synthetic_images = 12;
    cfg.checkpoint_interval = 1000;
    cfg.out_dir = std::env::temp_dir().join("pixelrl_enhance_color");

    let set = ActionSet::color13();
    println!(
        "color enhancement: {} actions, {}-channel input, {} episodes...",
        set.len(),
        Task::Color.channels(),
        cfg.episodes
    );
    let dataset = training_dataset(&cfg)?;
    let outcome = train(&cfg, &dataset)?;
    for (i, parts) in outcome.history.iter().enumerate() {
        if i % 50 == 0 || i + 1 == outcome.history.len() {
            println!("  episode {i:>4}: mean reward {:>8.4}", parts.mean_reward);
        }
    }

    let model = load_model(&outcome.final_path)?;
    let heldout = synthetic_dataset(4, 48, 48, 3, 550_000);
    let report = evaluate(&model, &heldout, Task::Color, &EvalOptions::default())?;
    println!();
    println!(
        "held-out mean PSNR: {:.2} dB cast -> {:.2} dB enhanced ({:+.2} dB)",
        report.mean_psnr_in,
        report.mean_psnr_out,
        report.mean_psnr_out - report.mean_psnr_in
    );
    Ok(())
}
