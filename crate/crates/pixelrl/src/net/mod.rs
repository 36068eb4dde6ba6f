//! The shared fully-convolutional actor-critic: a dilated-convolution trunk,
//! a policy branch (optional convolutional GRU) ending in a per-pixel softmax
//! over actions, and a value branch ending in a 1-channel linear map. Forward
//! passes cache activations; backward passes produce exact parameter
//! gradients by hand-derived backprop.
//!
//! Generic over the float width: f32 for training, f64 for gradient checks.

pub mod conv;
pub mod gru;

use ndarray::{Array2, Array3, Axis, Zip};
use rand::Rng;

use crate::actions::ActionMap;
use crate::error::{PixelRlError, Result};
use crate::grid::PixelGrid;
pub use conv::Conv2d;
pub use gru::{ConvGru, GruCache};

/// Probabilities are clamped to this floor before any logarithm.
pub const PROB_FLOOR: f64 = 1e-8;

/// Float width the network computes in.
pub trait Real:
    ndarray::NdFloat + std::ops::AddAssign + std::ops::SubAssign + std::iter::Sum
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Per-pixel action probabilities, laid out [n_actions, H, W].
pub type PolicyMap<F> = Array3<F>;
/// Per-pixel state values, laid out [H, W].
pub type ValueMap<F> = Array2<F>;
/// Recurrent per-pixel state, laid out [channels, H, W]; zeros at t=0.
pub type HiddenState<F> = Array3<F>;

/// Architecture description. All kernels are 3x3; every layer zero-pads so
/// spatial size is preserved; each head is a dilation-1 conv appended to its
/// branch, so the receptive field is 1 + 2*(sum of all dilations).
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub channels: usize,
    pub n_actions: usize,
    pub use_gru: bool,
    pub trunk_dilations: Vec<usize>,
    pub branch_dilations: Vec<usize>,
    /// When set, construction fails unless the computed receptive field
    /// matches. Toy test configs set None.
    pub expected_rf: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            channels: 64,
            n_actions: 9,
            use_gru: true,
            trunk_dilations: vec![1, 2, 3, 4],
            branch_dilations: vec![3, 2],
            expected_rf: Some(33),
        }
    }
}

impl ArchConfig {
    /// Edge length of the square input region influencing one output pixel
    /// (convolutional path; the recurrent state is excluded).
    pub fn receptive_field(&self) -> usize {
        let total: usize =
            self.trunk_dilations.iter().sum::<usize>() + self.branch_dilations.iter().sum::<usize>() + 1;
        1 + 2 * total
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.channels == 0 {
            return Err(PixelRlError::Config("channel counts must be positive".into()));
        }
        if self.n_actions == 0 || self.n_actions > 256 {
            return Err(PixelRlError::Config(format!(
                "action count {} out of range 1..=256",
                self.n_actions
            )));
        }
        if self.trunk_dilations.is_empty() {
            return Err(PixelRlError::Config("trunk needs at least one layer".into()));
        }
        if self.trunk_dilations.iter().chain(&self.branch_dilations).any(|&d| d == 0) {
            return Err(PixelRlError::Config("dilations must be positive".into()));
        }
        if let Some(rf) = self.expected_rf {
            let got = self.receptive_field();
            if got != rf {
                return Err(PixelRlError::Config(format!(
                    "receptive field {got} does not match required {rf}"
                )));
            }
        }
        Ok(())
    }
}

/// Actor-critic parameters. The trunk is shared by both heads and its
/// gradients receive both branches' contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F: Real> {
    pub cfg: ArchConfig,
    pub trunk: Vec<Conv2d<F>>,
    pub policy_branch: Vec<Conv2d<F>>,
    pub gru: Option<ConvGru<F>>,
    pub policy_head: Conv2d<F>,
    pub value_branch: Vec<Conv2d<F>>,
    pub value_head: Conv2d<F>,
}

/// Activations of one forward step, kept for the backward pass. Branch
/// entries are post-ReLU outputs.
#[derive(Debug, Clone)]
pub struct StepCache<F: Real> {
    pub input: Array3<F>,
    pub trunk_outs: Vec<Array3<F>>,
    pub policy_outs: Vec<Array3<F>>,
    pub gru: Option<GruCache<F>>,
    pub hidden_new: Option<HiddenState<F>>,
    pub probs: PolicyMap<F>,
    pub value_outs: Vec<Array3<F>>,
    pub value: ValueMap<F>,
}

impl<F: Real> Network<F> {
    /// All-zero parameters with the given layout.
    pub fn new(cfg: ArchConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let mut trunk = Vec::new();
        for (i, &d) in cfg.trunk_dilations.iter().enumerate() {
            let cin = if i == 0 { cfg.in_channels } else { c };
            trunk.push(Conv2d::zeros(cin, c, d));
        }
        let branch = |dil: &[usize]| -> Vec<Conv2d<F>> {
            dil.iter().map(|&d| Conv2d::zeros(c, c, d)).collect()
        };
        Ok(Self {
            trunk,
            policy_branch: branch(&cfg.branch_dilations),
            gru: cfg.use_gru.then(|| ConvGru::zeros(c, c)),
            policy_head: Conv2d::zeros(c, cfg.n_actions, 1),
            value_branch: branch(&cfg.branch_dilations),
            value_head: Conv2d::zeros(c, 1, 1),
            cfg,
        })
    }

    /// Fan-in-scaled random weights, zero biases. Same rng stream gives the
    /// same parameters in either precision.
    pub fn init(cfg: ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::new(cfg)?;
        for conv in net.conv_refs_mut() {
            let fresh = Conv2d::init(conv.cin, conv.cout, conv.dilation, rng);
            *conv = fresh;
        }
        Ok(net)
    }

    /// Same layout, all parameters zero; the gradient accumulator.
    pub fn zeros_like(&self) -> Network<F> {
        Network::new(self.cfg.clone()).expect("config already validated")
    }

    fn conv_refs(&self) -> Vec<&Conv2d<F>> {
        let mut v: Vec<&Conv2d<F>> = Vec::new();
        v.extend(self.trunk.iter());
        v.extend(self.policy_branch.iter());
        if let Some(g) = &self.gru {
            v.extend(g.convs());
        }
        v.push(&self.policy_head);
        v.extend(self.value_branch.iter());
        v.push(&self.value_head);
        v
    }

    /// Mutable conv access in the same order as `named_convs`.
    pub fn conv_refs_mut(&mut self) -> Vec<&mut Conv2d<F>> {
        let mut v: Vec<&mut Conv2d<F>> = Vec::new();
        v.extend(self.trunk.iter_mut());
        v.extend(self.policy_branch.iter_mut());
        if let Some(g) = &mut self.gru {
            v.extend(g.convs_mut());
        }
        v.push(&mut self.policy_head);
        v.extend(self.value_branch.iter_mut());
        v.push(&mut self.value_head);
        v
    }

    /// Stable names for serialization, in flattening order.
    pub fn named_convs(&self) -> Vec<(String, &Conv2d<F>)> {
        let mut v: Vec<(String, &Conv2d<F>)> = Vec::new();
        for (i, c) in self.trunk.iter().enumerate() {
            v.push((format!("trunk.{i}"), c));
        }
        for (i, c) in self.policy_branch.iter().enumerate() {
            v.push((format!("policy.{i}"), c));
        }
        if let Some(g) = &self.gru {
            for (name, c) in ["xz", "hz", "xr", "hr", "xh", "hh"].iter().zip(g.convs()) {
                v.push((format!("gru.{name}"), c));
            }
        }
        v.push(("policy_head".into(), &self.policy_head));
        for (i, c) in self.value_branch.iter().enumerate() {
            v.push((format!("value.{i}"), c));
        }
        v.push(("value_head".into(), &self.value_head));
        v
    }

    pub fn param_count(&self) -> usize {
        self.conv_refs().iter().map(|c| c.param_count()).sum()
    }

    /// Weights then bias of every conv, in a fixed order shared with
    /// `set_flat_params`.
    pub fn flatten_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in self.conv_refs() {
            out.extend(c.weight.iter().copied());
            out.extend(c.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(PixelRlError::ShapeMismatch(format!(
                "parameter vector length {} does not match network size {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        for c in self.conv_refs_mut() {
            for v in c.weight.iter_mut() {
                *v = flat[i];
                i += 1;
            }
            for v in c.bias.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        Ok(())
    }

    /// Flat index ranges of each parameter group, for per-group reporting.
    pub fn group_ranges(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let count = |convs: &[&Conv2d<F>]| -> usize { convs.iter().map(|c| c.param_count()).sum() };
        let trunk: Vec<&Conv2d<F>> = self.trunk.iter().collect();
        let policy: Vec<&Conv2d<F>> = self.policy_branch.iter().collect();
        let value: Vec<&Conv2d<F>> = self.value_branch.iter().collect();
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name: &'static str, n: usize, at: &mut usize| {
            out.push((name, *at..*at + n));
            *at += n;
        };
        push("trunk", count(&trunk), &mut at);
        push("policy_branch", count(&policy), &mut at);
        if let Some(g) = &self.gru {
            push("gru", g.param_count(), &mut at);
        }
        push("policy_head", self.policy_head.param_count(), &mut at);
        push("value_branch", count(&value), &mut at);
        push("value_head", self.value_head.param_count(), &mut at);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.conv_refs()
            .iter()
            .all(|c| c.weight.iter().all(|v| v.is_finite()) && c.bias.iter().all(|v| v.is_finite()))
    }

    /// One step of the actor-critic. `hidden` must be None for a network
    /// without the GRU, and defaults to zeros at the start of an episode.
    pub fn forward(&self, x: &Array3<F>, hidden: Option<&HiddenState<F>>) -> Result<StepCache<F>> {
        let (cin, h, w) = x.dim();
        if cin != self.cfg.in_channels {
            return Err(PixelRlError::ShapeMismatch(format!(
                "input has {cin} channels, network expects {}",
                self.cfg.in_channels
            )));
        }

        let mut trunk_outs: Vec<Array3<F>> = Vec::with_capacity(self.trunk.len());
        for (i, conv) in self.trunk.iter().enumerate() {
            let input = if i == 0 { x } else { &trunk_outs[i - 1] };
            let mut out = conv.forward(input);
            relu_inplace(&mut out);
            trunk_outs.push(out);
        }
        let trunk_top = trunk_outs.last().expect("trunk nonempty");

        let mut policy_outs: Vec<Array3<F>> = Vec::with_capacity(self.policy_branch.len());
        for (i, conv) in self.policy_branch.iter().enumerate() {
            let input = if i == 0 { trunk_top } else { &policy_outs[i - 1] };
            let mut out = conv.forward(input);
            relu_inplace(&mut out);
            policy_outs.push(out);
        }

        let (gru_cache, hidden_new) = match &self.gru {
            Some(gru) => {
                let zeros;
                let h_prev = match hidden {
                    Some(hs) => {
                        if hs.dim() != (self.cfg.channels, h, w) {
                            return Err(PixelRlError::ShapeMismatch(format!(
                                "hidden state {:?} does not match ({}, {h}, {w})",
                                hs.dim(),
                                self.cfg.channels
                            )));
                        }
                        hs
                    }
                    None => {
                        zeros = Array3::zeros((self.cfg.channels, h, w));
                        &zeros
                    }
                };
                let x_in = policy_outs.last().unwrap_or(trunk_top);
                let (h_new, cache) = gru.forward(x_in, h_prev);
                (Some(cache), Some(h_new))
            }
            None => {
                if hidden.is_some() {
                    return Err(PixelRlError::ShapeMismatch(
                        "hidden state supplied to a network without a GRU".into(),
                    ));
                }
                (None, None)
            }
        };

        let head_input = hidden_new
            .as_ref()
            .or_else(|| policy_outs.last())
            .unwrap_or(trunk_top);
        let logits = self.policy_head.forward(head_input);
        let probs = softmax_channels(&logits);

        let mut value_outs: Vec<Array3<F>> = Vec::with_capacity(self.value_branch.len());
        for (i, conv) in self.value_branch.iter().enumerate() {
            let input = if i == 0 { trunk_top } else { &value_outs[i - 1] };
            let mut out = conv.forward(input);
            relu_inplace(&mut out);
            value_outs.push(out);
        }
        let value3 = self
            .value_head
            .forward(value_outs.last().unwrap_or(trunk_top));
        let value = value3.index_axis(Axis(0), 0).to_owned();

        Ok(StepCache {
            input: x.clone(),
            trunk_outs,
            policy_outs,
            gru: gru_cache,
            hidden_new,
            probs,
            value_outs,
            value,
        })
    }

    /// Backpropagate one step. `dlogits` is the loss gradient at the policy
    /// head's pre-softmax output, `dvalue` at the value map, `dhidden_next`
    /// the recurrent gradient arriving from the following step. Parameter
    /// gradients accumulate into `acc`; returns the gradient for the previous
    /// step's hidden state.
    pub fn backward_step(
        &self,
        cache: &StepCache<F>,
        dlogits: &Array3<F>,
        dvalue: &Array2<F>,
        dhidden_next: Option<&HiddenState<F>>,
        acc: &mut Network<F>,
    ) -> Result<Option<HiddenState<F>>> {
        let trunk_top = cache.trunk_outs.last().expect("trunk nonempty");

        // Value path.
        let gv3 = dvalue.clone().insert_axis(Axis(0));
        let vh_input = cache.value_outs.last().unwrap_or(trunk_top);
        let mut dv = self.value_head.backward(vh_input, &gv3, &mut acc.value_head);
        for j in (0..self.value_branch.len()).rev() {
            let masked = relu_backward(&dv, &cache.value_outs[j]);
            let input = if j == 0 { trunk_top } else { &cache.value_outs[j - 1] };
            dv = self.value_branch[j].backward(input, &masked, &mut acc.value_branch[j]);
        }

        // Policy path.
        let head_input = cache
            .hidden_new
            .as_ref()
            .or_else(|| cache.policy_outs.last())
            .unwrap_or(trunk_top);
        let dfeat = self
            .policy_head
            .backward(head_input, dlogits, &mut acc.policy_head);

        let (mut dp, dh_prev) = match (&self.gru, &cache.gru) {
            (Some(gru), Some(gc)) => {
                let dh_total = match dhidden_next {
                    Some(d) => &dfeat + d,
                    None => dfeat,
                };
                let acc_gru = acc.gru.as_mut().expect("accumulator layout matches");
                let (dx, dh_prev) = gru.backward(gc, &dh_total, acc_gru);
                (dx, Some(dh_prev))
            }
            (None, None) => {
                if dhidden_next.is_some() {
                    return Err(PixelRlError::ShapeMismatch(
                        "recurrent gradient supplied to a network without a GRU".into(),
                    ));
                }
                (dfeat, None)
            }
            _ => unreachable!("cache produced by a differently configured network"),
        };

        for j in (0..self.policy_branch.len()).rev() {
            let masked = relu_backward(&dp, &cache.policy_outs[j]);
            let input = if j == 0 { trunk_top } else { &cache.policy_outs[j - 1] };
            dp = self.policy_branch[j].backward(input, &masked, &mut acc.policy_branch[j]);
        }

        // Shared trunk receives both branches.
        let mut dt = dp + dv;
        for i in (0..self.trunk.len()).rev() {
            let masked = relu_backward(&dt, &cache.trunk_outs[i]);
            let input = if i == 0 { &cache.input } else { &cache.trunk_outs[i - 1] };
            dt = self.trunk[i].backward(input, &masked, &mut acc.trunk[i]);
        }

        Ok(dh_prev)
    }
}

fn relu_inplace<F: Real>(a: &mut Array3<F>) {
    a.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// ReLU gradient: pass where the stored post-activation output is positive.
fn relu_backward<F: Real>(g: &Array3<F>, out: &Array3<F>) -> Array3<F> {
    Zip::from(g)
        .and(out)
        .map_collect(|&gv, &ov| if ov > F::zero() { gv } else { F::zero() })
}

/// Per-pixel softmax over the channel axis with max subtraction.
pub fn softmax_channels<F: Real>(logits: &Array3<F>) -> Array3<F> {
    let (a, h, w) = logits.dim();
    let mut out = logits.clone();
    for y in 0..h {
        for x in 0..w {
            let mut m = out[(0, y, x)];
            for k in 1..a {
                if out[(k, y, x)] > m {
                    m = out[(k, y, x)];
                }
            }
            let mut sum = F::zero();
            for k in 0..a {
                let e = (out[(k, y, x)] - m).exp();
                out[(k, y, x)] = e;
                sum += e;
            }
            for k in 0..a {
                out[(k, y, x)] = out[(k, y, x)] / sum;
            }
        }
    }
    out
}

/// Convert a grid to the network input layout.
pub fn grid_to_input<F: Real>(g: &PixelGrid) -> Array3<F> {
    let data = g.data().iter().map(|&v| F::from_f64(v as f64)).collect();
    Array3::from_shape_vec((g.channels(), g.height(), g.width()), data)
        .expect("grid layout is channel-major")
}

/// Draw one action per pixel from its categorical distribution.
pub fn sample_actions<F: Real>(probs: &PolicyMap<F>, rng: &mut impl Rng) -> ActionMap {
    let (a, h, w) = probs.dim();
    let mut ids = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut chosen = a - 1;
            for k in 0..a {
                cum += probs[(k, y, x)].to_f64();
                if u < cum {
                    chosen = k;
                    break;
                }
            }
            ids.push(chosen as u8);
        }
    }
    ActionMap::new(h, w, ids).expect("sampled ids fit the grid")
}

/// Per-pixel argmax; ties go to the lowest action id.
pub fn greedy_actions<F: Real>(probs: &PolicyMap<F>) -> ActionMap {
    let (a, h, w) = probs.dim();
    let mut ids = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut best = 0usize;
            for k in 1..a {
                if probs[(k, y, x)] > probs[(best, y, x)] {
                    best = k;
                }
            }
            ids.push(best as u8);
        }
    }
    ActionMap::new(h, w, ids).expect("greedy ids fit the grid")
}
