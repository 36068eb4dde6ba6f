//! Trains briefly and renders the rollout on one noisy image: the state after
//! every step as grayscale PNGs and the chosen action of every pixel as
//! palette-indexed maps, with a legend mapping colors to action names.

use pixelrl::env::{synthetic_dataset, CorruptionConfig, Task};
use pixelrl::checkpoint::load_model;
use pixelrl::trainer::{train, training_dataset, TrainConfig};
use pixelrl::viz::visualize;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pixelrl::Result<()> {
    let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
    cfg.episodes = 150;
    cfg.batch = 8;
    cfg.crop = 32;
    cfg.t_max = 3;
    cfg.lr = 3e-3;
    cfg.channels = 6;
    cfg.use_gru = false;
    cfg.seed = 2;
    cfg.synthetic_images = 12;
    cfg.checkpoint_interval = 1000;
    cfg.out_dir = std::env::temp_dir().join("pixelrl_visualize_train");

    println!("training a small model ({} episodes)...", cfg.episodes);
    let dataset = training_dataset(&cfg)?;
    let outcome = train(&cfg, &dataset)?;
    let model = load_model(&outcome.final_path)?;

    let clean = synthetic_dataset(1, 64, 64, 1, 42).images[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noisy = CorruptionConfig::default().corrupt(&clean, Task::DenoiseGauss, &mut rng)?;

    let out_dir = std::env::temp_dir().join("pixelrl_visualize_out");
    let output = visualize(&model, &noisy, 3, 0, &out_dir)?;

    println!();
    println!("wrote to {}:", out_dir.display());
    for p in output.states.iter().chain(&output.actions) {
        println!("  {}", p.file_name().unwrap().to_string_lossy());
    }
    println!("  {}", output.legend.file_name().unwrap().to_string_lossy());
    println!();
    println!("legend:");
    print!("{}", std::fs::read_to_string(&output.legend)?);
    Ok(())
}
