//! Steps an episode by hand with random action maps and checks the telescoping
//! reward identity: per pixel, the summed rewards equal the initial squared
//! error minus the final one, so total reward is exactly the error removed.

use pixelrl::actions::{ActionMap, ActionSet};
use pixelrl::env::{synthetic_dataset, CorruptionConfig, EpisodeState, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn squared_error_sum(state: &EpisodeState) -> f64 {
    state.distance().sum()
}

fn main() -> pixelrl::Result<()> {
    let clean = synthetic_dataset(1, 32, 32, 1, 77).images[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy = CorruptionConfig::default().corrupt(&clean, Task::DenoiseGauss, &mut rng)?;

    let set = ActionSet::denoise9();
    let t_max = 5;
    let mut state = EpisodeState::new(Task::DenoiseGauss, clean, noisy, t_max)?;

    let initial_error = squared_error_sum(&state);
    let mut reward_total = 0.0;
    println!("stepping {t_max} random action maps on a 32x32 episode:");
    while !state.is_done() {
        let ids: Vec<u8> = (0..32 * 32).map(|_| rng.gen_range(0..set.len() as u8)).collect();
        let map = ActionMap::new(32, 32, ids)?;
        let rewards = state.step(&map, &set)?;
        reward_total += rewards.values.sum();
        println!(
            "  t={}: mean reward {:>8.4}, remaining squared error {:>10.2}",
            state.t(),
            rewards.mean(),
            squared_error_sum(&state)
        );
    }

    let final_error = squared_error_sum(&state);
    println!();
    println!("total reward        : {reward_total:.6}");
    println!("error start - error end: {:.6}", initial_error - final_error);
    let diff = (reward_total - (initial_error - final_error)).abs();
    println!("difference          : {diff:.2e}");
    assert!(diff <= 1e-6 * initial_error.max(1.0));
    println!();
    println!("rewards are squared-error decrements, so maximizing return and");
    println!("minimizing distance to the clean image are the same objective.");
    Ok(())
}
