//! Trains briefly, then walks through the evaluation options: plain greedy
//! restoration, dihedral test-time augmentation, and action histograms that
//! contrast an exploring early checkpoint with the converged policy.

use pixelrl::actions::ActionSet;
use pixelrl::env::{synthetic_dataset, Task};
use pixelrl::eval::{evaluate, EvalOptions};
use pixelrl::checkpoint::load_model;
use pixelrl::trainer::{train, training_dataset, ActionSelection, TrainConfig};

fn main() -> pixelrl::Result<()> {
    let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
    cfg.episodes = 150;
    cfg.batch = 8;
    cfg.crop = 32;
    cfg.t_max = 3;
    cfg.lr = 3e-3;
    cfg.channels = 6;
    cfg.use_gru = false;
    cfg.seed = 1;
    cfg.synthetic_images = 12;
    // Keep an early checkpoint around to contrast with the converged policy.
    cfg.checkpoint_interval = 10;
    cfg.out_dir = std::env::temp_dir().join("pixelrl_evaluate_model");

    println!("training a small model ({} episodes)...", cfg.episodes);
    let dataset = training_dataset(&cfg)?;
    let outcome = train(&cfg, &dataset)?;
    let model = load_model(&outcome.final_path)?;

    let heldout = synthetic_dataset(4, 64, 64, 1, 240_000);
    let plain = evaluate(&model, &heldout, Task::DenoiseGauss, &EvalOptions::default())?;

    let mut tta_opts = EvalOptions::default();
    tta_opts.tta = true;
    let tta = evaluate(&model, &heldout, Task::DenoiseGauss, &tta_opts)?;

    println!();
    println!("{:<22} {:>10} {:>10}", "", "psnr[dB]", "ssim");
    println!(
        "{:<22} {:>10.2} {:>10.4}",
        "noisy input", plain.mean_psnr_in, plain.mean_ssim_in
    );
    println!(
        "{:<22} {:>10.2} {:>10.4}",
        "restored", plain.mean_psnr_out, plain.mean_ssim_out
    );
    println!(
        "{:<22} {:>10.2} {:>10.4}",
        "restored, 8-fold tta", tta.mean_psnr_out, tta.mean_ssim_out
    );

    // Contrast where the probability mass sits early in training (sampled
    // from the first checkpoint) with the converged greedy choices: the toy
    // policy starts near uniform and ends backing one filter outright.
    let early = load_model(&outcome.checkpoints[0])?;
    let mut sample_opts = EvalOptions::default();
    sample_opts.selection = ActionSelection::Sample;
    let sampled = evaluate(&early, &heldout, Task::DenoiseGauss, &sample_opts)?;

    let set = ActionSet::denoise9();
    println!();
    println!(
        "actions over all pixels and steps (episode {} sampled vs final greedy):",
        early.meta.episode
    );
    println!("{:<28} {:>12} {:>12}", "action", "early", "final");
    for (id, spec) in set.specs().iter().enumerate() {
        let early_n: u64 = sampled.action_counts.iter().map(|row| row[id]).sum();
        let final_n: u64 = plain.action_counts.iter().map(|row| row[id]).sum();
        println!("{:<28} {:>12} {:>12}", spec.name(), early_n, final_n);
    }
    Ok(())
}
