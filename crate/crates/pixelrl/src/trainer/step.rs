//! One actor-critic update: rollout collection, returns, losses, gradients.
//!
//! All loss arithmetic runs in f64 regardless of the network precision; the
//! per-pixel gradient maps are cast back to the network type only when they
//! enter the backward pass.

use crate::actions::{ActionMap, ActionSet};
use crate::env::EpisodeState;
use crate::error::{PixelRlError, Result};
use crate::net::{grid_to_input, greedy_actions, sample_actions, Network, Real, StepCache, PROB_FLOOR};
use crate::rmc::{compute_returns, kernel_backward, Bootstrap, ReturnConfig};
use ndarray::{Array2, Array3};
use rand::Rng;

/// How the rollout picks actions: training samples the policy, evaluation
/// takes the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSelection {
    Sample,
    Greedy,
}

/// A finished batch of episodes with everything the update needs. Rewards and
/// actions are rollout constants; caches hold the differentiable forwards.
pub struct Rollout<F: Real> {
    pub caches: Vec<Vec<StepCache<F>>>,
    pub actions: Vec<Vec<ActionMap>>,
    pub rewards: Vec<Vec<Array2<f64>>>,
    pub bootstrap: Vec<Array2<f64>>,
    pub mean_reward: f64,
}

impl<F: Real> Rollout<F> {
    pub fn batch(&self) -> usize {
        self.caches.len()
    }

    pub fn steps(&self) -> usize {
        self.caches.first().map_or(0, Vec::len)
    }

    /// Value maps of every step, upcast to f64. Captured before a finite
    /// difference probe these freeze the advantage baseline.
    pub fn value_baselines(&self) -> Vec<Vec<Array2<f64>>> {
        self.caches
            .iter()
            .map(|eps| eps.iter().map(|c| c.value.mapv(Real::to_f64)).collect())
            .collect()
    }
}

/// Loss components averaged over pixels, steps and batch. `total` is the
/// scalar whose parameter gradient the update applies.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub mean_reward: f64,
}

/// Runs every episode to its horizon, recording caches, actions and rewards.
/// RNG consumption order is batch-major then step, so running elements one
/// at a time draws the same stream as running them together.
pub fn collect_rollout<F: Real>(
    net: &Network<F>,
    episodes: &mut [EpisodeState],
    set: &ActionSet,
    bootstrap: Bootstrap,
    selection: ActionSelection,
    rng: &mut impl Rng,
) -> Result<Rollout<F>> {
    if episodes.is_empty() {
        return Err(PixelRlError::Env("empty episode batch".into()));
    }
    if set.len() != net.cfg.n_actions {
        return Err(PixelRlError::ShapeMismatch(format!(
            "action set has {} actions, network outputs {}",
            set.len(),
            net.cfg.n_actions
        )));
    }
    let mut caches = Vec::with_capacity(episodes.len());
    let mut actions = Vec::with_capacity(episodes.len());
    let mut rewards = Vec::with_capacity(episodes.len());
    let mut boots = Vec::with_capacity(episodes.len());
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;

    for ep in episodes.iter_mut() {
        let mut ep_caches = Vec::with_capacity(ep.t_max());
        let mut ep_actions = Vec::with_capacity(ep.t_max());
        let mut ep_rewards = Vec::with_capacity(ep.t_max());
        let mut hidden = None;
        while !ep.is_done() {
            let x = grid_to_input::<F>(ep.current());
            let cache = net.forward(&x, hidden.as_ref())?;
            let map = match selection {
                ActionSelection::Sample => sample_actions(&cache.probs, rng),
                ActionSelection::Greedy => greedy_actions(&cache.probs),
            };
            let reward = ep.step(&map, set)?;
            reward_sum += reward.mean();
            reward_count += 1;
            hidden = cache.hidden_new.clone();
            ep_caches.push(cache);
            ep_actions.push(map);
            ep_rewards.push(reward.values);
        }
        let shape = (ep.current().height(), ep.current().width());
        let boot = match bootstrap {
            Bootstrap::Zero => Array2::zeros(shape),
            Bootstrap::Value => {
                // Frozen terminal estimate: no gradient flows through it.
                let x = grid_to_input::<F>(ep.current());
                net.forward(&x, hidden.as_ref())?.value.mapv(Real::to_f64)
            }
        };
        caches.push(ep_caches);
        actions.push(ep_actions);
        rewards.push(ep_rewards);
        boots.push(boot);
    }

    Ok(Rollout {
        caches,
        actions,
        rewards,
        bootstrap: boots,
        mean_reward: reward_sum / reward_count as f64,
    })
}

/// Per-pixel loss maps for one step: policy term -log pi(a)*A - beta*H and
/// value term (R - V)^2. The advantage baseline is passed in so a probe can
/// freeze it independently of the current value output.
pub fn per_pixel_losses<F: Real>(
    cache: &StepCache<F>,
    actions: &ActionMap,
    returns: &Array2<f64>,
    baseline: &Array2<f64>,
    beta: f64,
) -> (Array2<f64>, Array2<f64>) {
    let (n_actions, h, w) = cache.probs.dim();
    let mut policy = Array2::<f64>::zeros((h, w));
    let mut value = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let a = actions.id_at(y, x);
            let p_a = cache.probs[(a, y, x)].to_f64();
            let log_a = p_a.max(PROB_FLOOR).ln();
            let adv = returns[(y, x)] - baseline[(y, x)];
            let mut entropy = 0.0;
            for k in 0..n_actions {
                let p = cache.probs[(k, y, x)].to_f64();
                entropy -= p * p.max(PROB_FLOOR).ln();
            }
            policy[(y, x)] = -log_a * adv - beta * entropy;
            let diff = returns[(y, x)] - cache.value[(y, x)].to_f64();
            value[(y, x)] = diff * diff;
        }
    }
    (policy, value)
}

/// Losses and gradients of one rollout under the current parameters. Returns
/// the loss parts, the accumulated network gradient and, when `w` is given,
/// the reward-kernel gradient. The advantage and the value target R are both
/// rollout-level constants for the network parameters; only the kernel sees
/// dR/dw.
pub fn loss_and_grads<F: Real>(
    net: &Network<F>,
    rollout: &Rollout<F>,
    w: Option<&Array2<f64>>,
    returns_cfg: &ReturnConfig,
    beta: f64,
) -> Result<(LossParts, Network<F>, Option<Array2<f64>>)> {
    returns_cfg.validate()?;
    let batch = rollout.batch();
    let steps = rollout.steps();
    if batch == 0 || steps == 0 {
        return Err(PixelRlError::Env("empty rollout".into()));
    }
    let (n_actions, h, wid) = rollout.caches[0][0].probs.dim();
    let scale = 1.0 / (h * wid * steps * batch) as f64;

    let mut acc = net.zeros_like();
    let mut dw_acc = w.map(|w| Array2::<f64>::zeros(w.dim()));
    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;
    let mut entropy_sum = 0.0;

    for b in 0..batch {
        let (returns, rcache) = compute_returns(
            &rollout.rewards[b],
            &rollout.bootstrap[b],
            w,
            returns_cfg.gamma,
        )?;
        let mut grad_returns = vec![Array2::<f64>::zeros((h, wid)); steps];
        let mut dhidden = None;
        for t in (0..steps).rev() {
            let cache = &rollout.caches[b][t];
            let acts = &rollout.actions[b][t];
            let ret = &returns[t];
            let mut dlogits = Array3::<f64>::zeros((n_actions, h, wid));
            let mut dvalue = Array2::<f64>::zeros((h, wid));
            for y in 0..h {
                for x in 0..wid {
                    let a = acts.id_at(y, x);
                    let v = cache.value[(y, x)].to_f64();
                    let adv = ret[(y, x)] - v;
                    let p_a = cache.probs[(a, y, x)].to_f64();

                    // Entropy with the floor applied inside the log only:
                    // H = -sum_k p_k ln(max(p_k, floor)). Floored entries keep
                    // the -p_k ln(floor) term but lose the 1/p_k chain factor.
                    let mut entropy = 0.0;
                    let mut live_mass = 0.0;
                    for k in 0..n_actions {
                        let p = cache.probs[(k, y, x)].to_f64();
                        entropy -= p * p.max(PROB_FLOOR).ln();
                        if p > PROB_FLOOR {
                            live_mass += p;
                        }
                    }
                    for k in 0..n_actions {
                        let p = cache.probs[(k, y, x)].to_f64();
                        let mut g = 0.0;
                        // -log pi(a) * A: flat where the log is floored.
                        if p_a > PROB_FLOOR {
                            let delta = if k == a { 1.0 } else { 0.0 };
                            g += adv * (p - delta);
                        }
                        // -beta * H.
                        let live = if p > PROB_FLOOR { 1.0 } else { 0.0 };
                        g += beta * p * (p.max(PROB_FLOOR).ln() + entropy + live - live_mass);
                        dlogits[(k, y, x)] = scale * g;
                    }
                    dvalue[(y, x)] = scale * 2.0 * (v - ret[(y, x)]);
                    let log_a = p_a.max(PROB_FLOOR).ln();
                    grad_returns[t][(y, x)] = scale * (-log_a + 2.0 * (ret[(y, x)] - v));

                    policy_sum += -log_a * adv - beta * entropy;
                    entropy_sum += entropy;
                    value_sum += adv * adv;
                }
            }
            let dlogits_f = dlogits.mapv(F::from_f64);
            let dvalue_f = dvalue.mapv(F::from_f64);
            dhidden = net.backward_step(cache, &dlogits_f, &dvalue_f, dhidden.as_ref(), &mut acc)?;
        }
        if let (Some(w), Some(dw)) = (w, dw_acc.as_mut()) {
            *dw += &kernel_backward(&grad_returns, &rcache, w)?;
        }
    }

    let parts = LossParts {
        policy_loss: scale * policy_sum,
        value_loss: scale * value_sum,
        entropy: scale * entropy_sum,
        total: scale * (policy_sum + value_sum),
        mean_reward: rollout.mean_reward,
    };
    if !parts.total.is_finite() {
        return Err(PixelRlError::Numeric(format!(
            "non-finite loss: policy {} value {}",
            parts.policy_loss, parts.value_loss
        )));
    }
    if !acc.all_finite() {
        return Err(PixelRlError::Numeric("non-finite parameter gradient".into()));
    }
    Ok((parts, acc, dw_acc))
}

/// The scalar the update differentiates, recomputed from scratch: forwards
/// from the stored inputs and chained hidden states, returns from the given
/// kernel. `frozen_baseline` pins the advantage at the probe center so that
/// finite differences of this function match `loss_and_grads` exactly.
pub fn surrogate_loss<F: Real>(
    net: &Network<F>,
    rollout: &Rollout<F>,
    frozen_baseline: &[Vec<Array2<f64>>],
    w: Option<&Array2<f64>>,
    returns_cfg: &ReturnConfig,
    beta: f64,
) -> Result<f64> {
    let batch = rollout.batch();
    let steps = rollout.steps();
    let (_, h, wid) = rollout.caches[0][0].probs.dim();
    let scale = 1.0 / (h * wid * steps * batch) as f64;
    let mut total = 0.0;
    for b in 0..batch {
        let (returns, _) = compute_returns(
            &rollout.rewards[b],
            &rollout.bootstrap[b],
            w,
            returns_cfg.gamma,
        )?;
        let mut hidden = None;
        for t in 0..steps {
            let cache = net.forward(&rollout.caches[b][t].input, hidden.as_ref())?;
            let (policy, value) = per_pixel_losses(
                &cache,
                &rollout.actions[b][t],
                &returns[t],
                &frozen_baseline[b][t],
                beta,
            );
            total += scale * (policy.sum() + value.sum());
            hidden = cache.hidden_new;
        }
    }
    Ok(total)
}
