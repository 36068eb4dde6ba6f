//! Per-pixel action definitions and application.
//!
//! The denoising/restoration set is the nine-action table (box, bilateral x2,
//! median, Gaussian x2, pixel +-1/255, do nothing); the color set is the
//! thirteen point operations (contrast, saturation, brightness, channel pairs,
//! do nothing). Every action is a pure function of the input grid; a whole
//! [`ActionMap`] is applied by evaluating each selected action on the same
//! input state and gathering per pixel.

pub mod color;
pub mod filters;

use crate::error::{PixelRlError, Result};
use crate::grid::{clip01, PixelGrid};

pub use color::rgb_to_lab;

/// Size of one 8-bit intensity step on the [0,1] scale.
pub const INCREMENT_DELTA: f64 = 1.0 / 255.0;

/// What an action does. Filter kinds use a 5x5 replicate-padded window;
/// color kinds are per-pixel point operations on RGB triples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionKind {
    Box5,
    Gaussian { sigma: f64 },
    Bilateral { sigma_color: f64, sigma_space: f64 },
    Median5,
    Increment { delta: f64 },
    Contrast { factor: f64 },
    Saturation { factor: f64 },
    Brightness { factor: f64 },
    ChannelPair { pair: (usize, usize), factor: f64 },
    Nothing,
}

impl ActionKind {
    /// Window filters, as opposed to point operations.
    pub fn is_filter(&self) -> bool {
        matches!(
            self,
            ActionKind::Box5
                | ActionKind::Gaussian { .. }
                | ActionKind::Bilateral { .. }
                | ActionKind::Median5
        )
    }

    pub fn is_color_op(&self) -> bool {
        matches!(
            self,
            ActionKind::Contrast { .. }
                | ActionKind::Saturation { .. }
                | ActionKind::Brightness { .. }
                | ActionKind::ChannelPair { .. }
        )
    }
}

/// One executable action with its id inside an [`ActionSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub id: usize,
    pub kind: ActionKind,
}

impl ActionSpec {
    /// Human-readable name, used in legends and histograms.
    pub fn name(&self) -> String {
        match self.kind {
            ActionKind::Box5 => "box 5x5".into(),
            ActionKind::Gaussian { sigma } => format!("gaussian 5x5 s={sigma}"),
            ActionKind::Bilateral {
                sigma_color,
                sigma_space,
            } => format!("bilateral 5x5 sc={sigma_color} ss={sigma_space}"),
            ActionKind::Median5 => "median 5x5".into(),
            ActionKind::Increment { delta } => {
                if delta > 0.0 {
                    "pixel += 1".into()
                } else {
                    "pixel -= 1".into()
                }
            }
            ActionKind::Contrast { factor } => format!("contrast x{factor}"),
            ActionKind::Saturation { factor } => format!("saturation x{factor}"),
            ActionKind::Brightness { factor } => format!("brightness x{factor}"),
            ActionKind::ChannelPair { pair, factor } => {
                let names = ["red", "green", "blue"];
                format!("{} and {} x{}", names[pair.0], names[pair.1], factor)
            }
            ActionKind::Nothing => "do nothing".into(),
        }
    }
}

/// Ordered action set; ids run 0..len-1 and exactly one entry is `Nothing`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    name: String,
    specs: Vec<ActionSpec>,
}

impl ActionSet {
    pub fn new(name: &str, kinds: Vec<ActionKind>) -> Result<Self> {
        let nothing = kinds
            .iter()
            .filter(|k| matches!(k, ActionKind::Nothing))
            .count();
        if nothing != 1 {
            return Err(PixelRlError::InvalidAction(format!(
                "action set {name} must contain exactly one `do nothing`, found {nothing}"
            )));
        }
        let specs = kinds
            .into_iter()
            .enumerate()
            .map(|(id, kind)| ActionSpec { id, kind })
            .collect();
        Ok(Self {
            name: name.to_string(),
            specs,
        })
    }

    /// The nine denoising/restoration actions in table order.
    pub fn denoise9() -> Self {
        Self::new(
            "denoise9",
            vec![
                ActionKind::Box5,
                ActionKind::Bilateral {
                    sigma_color: 1.0,
                    sigma_space: 5.0,
                },
                ActionKind::Bilateral {
                    sigma_color: 0.1,
                    sigma_space: 5.0,
                },
                ActionKind::Median5,
                ActionKind::Gaussian { sigma: 1.5 },
                ActionKind::Gaussian { sigma: 0.5 },
                ActionKind::Increment {
                    delta: INCREMENT_DELTA,
                },
                ActionKind::Increment {
                    delta: -INCREMENT_DELTA,
                },
                ActionKind::Nothing,
            ],
        )
        .expect("denoise9")
    }

    /// Ablation subset: box, median, Gaussian s=1.5, do nothing.
    pub fn basic4() -> Self {
        Self::new(
            "basic4",
            vec![
                ActionKind::Box5,
                ActionKind::Median5,
                ActionKind::Gaussian { sigma: 1.5 },
                ActionKind::Nothing,
            ],
        )
        .expect("basic4")
    }

    /// basic4 plus the strong bilateral filter.
    pub fn basic5() -> Self {
        Self::new(
            "basic5",
            vec![
                ActionKind::Box5,
                ActionKind::Bilateral {
                    sigma_color: 1.0,
                    sigma_space: 5.0,
                },
                ActionKind::Median5,
                ActionKind::Gaussian { sigma: 1.5 },
                ActionKind::Nothing,
            ],
        )
        .expect("basic5")
    }

    /// basic5 plus the +-1/255 increments.
    pub fn basic7() -> Self {
        Self::new(
            "basic7",
            vec![
                ActionKind::Box5,
                ActionKind::Bilateral {
                    sigma_color: 1.0,
                    sigma_space: 5.0,
                },
                ActionKind::Median5,
                ActionKind::Gaussian { sigma: 1.5 },
                ActionKind::Increment {
                    delta: INCREMENT_DELTA,
                },
                ActionKind::Increment {
                    delta: -INCREMENT_DELTA,
                },
                ActionKind::Nothing,
            ],
        )
        .expect("basic7")
    }

    /// The thirteen local color-enhancement actions in table order:
    /// each operation at x0.95 then x1.05, finishing with `do nothing`.
    pub fn color13() -> Self {
        let mut kinds = Vec::new();
        for factor in [0.95, 1.05] {
            kinds.push(ActionKind::Contrast { factor });
        }
        for factor in [0.95, 1.05] {
            kinds.push(ActionKind::Saturation { factor });
        }
        for factor in [0.95, 1.05] {
            kinds.push(ActionKind::Brightness { factor });
        }
        for pair in [(0, 1), (1, 2), (0, 2)] {
            for factor in [0.95, 1.05] {
                kinds.push(ActionKind::ChannelPair { pair, factor });
            }
        }
        kinds.push(ActionKind::Nothing);
        Self::new("color13", kinds).expect("color13")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "denoise9" => Ok(Self::denoise9()),
            "color13" => Ok(Self::color13()),
            "basic4" => Ok(Self::basic4()),
            "basic5" => Ok(Self::basic5()),
            "basic7" => Ok(Self::basic7()),
            other => Err(PixelRlError::Config(format!("unknown action set {other}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn specs(&self) -> &[ActionSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, id: usize) -> Option<&ActionSpec> {
        self.specs.get(id)
    }

    /// Id of the `do nothing` action.
    pub fn nothing_id(&self) -> usize {
        self.specs
            .iter()
            .position(|s| matches!(s.kind, ActionKind::Nothing))
            .expect("validated at construction")
    }
}

/// H x W grid of chosen action ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMap {
    height: usize,
    width: usize,
    ids: Vec<u8>,
}

impl ActionMap {
    pub fn new(height: usize, width: usize, ids: Vec<u8>) -> Result<Self> {
        if ids.len() != height * width {
            return Err(PixelRlError::ShapeMismatch(format!(
                "action map ids length {} does not match {height}x{width}",
                ids.len()
            )));
        }
        Ok(Self { height, width, ids })
    }

    pub fn uniform(height: usize, width: usize, id: usize) -> Self {
        Self {
            height,
            width,
            ids: vec![id as u8; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    #[inline]
    pub fn id_at(&self, y: usize, x: usize) -> usize {
        self.ids[y * self.width + x] as usize
    }

    /// Count of each action id, given the set size.
    pub fn histogram(&self, n_actions: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n_actions];
        for &id in &self.ids {
            counts[id as usize] += 1;
        }
        counts
    }
}

/// Per-call evaluation state for one action: precomputed kernels and image
/// statistics, so per-pixel and full-grid paths share one arithmetic path.
enum Prepared {
    Box5,
    Gaussian([f64; 25]),
    Bilateral { spatial: [f64; 25], sigma_color: f64 },
    Median5,
    Increment(f64),
    Contrast { mu: f64, factor: f64 },
    Saturation(f64),
    Brightness(f64),
    ChannelPair { pair: (usize, usize), factor: f64 },
    Nothing,
}

fn prepare(kind: &ActionKind, state: &PixelGrid) -> Result<Prepared> {
    Ok(match *kind {
        ActionKind::Box5 => Prepared::Box5,
        ActionKind::Gaussian { sigma } => Prepared::Gaussian(filters::gaussian_kernel5(sigma)),
        ActionKind::Bilateral {
            sigma_color,
            sigma_space,
        } => Prepared::Bilateral {
            spatial: filters::bilateral_spatial5(sigma_space),
            sigma_color,
        },
        ActionKind::Median5 => Prepared::Median5,
        ActionKind::Increment { delta } => {
            if (delta.abs() - INCREMENT_DELTA).abs() > 1e-12 {
                return Err(PixelRlError::InvalidAction(format!(
                    "increment delta must be +-1/255, got {delta}"
                )));
            }
            Prepared::Increment(delta)
        }
        ActionKind::Contrast { factor } => {
            require_rgb(state, "contrast")?;
            Prepared::Contrast {
                mu: color::mean_luminance(state),
                factor,
            }
        }
        ActionKind::Saturation { factor } => {
            require_rgb(state, "saturation")?;
            Prepared::Saturation(factor)
        }
        ActionKind::Brightness { factor } => {
            require_rgb(state, "brightness")?;
            Prepared::Brightness(factor)
        }
        ActionKind::ChannelPair { pair, factor } => {
            require_rgb(state, "channel pair")?;
            Prepared::ChannelPair { pair, factor }
        }
        ActionKind::Nothing => Prepared::Nothing,
    })
}

fn require_rgb(state: &PixelGrid, what: &str) -> Result<()> {
    if state.channels() != 3 {
        return Err(PixelRlError::InvalidAction(format!(
            "{what} needs a 3-channel grid, got {} channel(s)",
            state.channels()
        )));
    }
    Ok(())
}

/// Value of `prepared` applied to `state` at (channel, y, x).
#[inline]
fn eval_at(prepared: &Prepared, state: &PixelGrid, c: usize, y: usize, x: usize) -> f32 {
    let (h, w) = (state.height(), state.width());
    match prepared {
        Prepared::Box5 => clip01(filters::box5_at(state.plane(c), h, w, y, x)),
        Prepared::Gaussian(kernel) => {
            clip01(filters::gaussian5_at(state.plane(c), h, w, y, x, kernel))
        }
        Prepared::Bilateral {
            spatial,
            sigma_color,
        } => clip01(filters::bilateral5_at(
            state.plane(c),
            h,
            w,
            y,
            x,
            spatial,
            *sigma_color,
        )),
        Prepared::Median5 => clip01(filters::median5_at(state.plane(c), h, w, y, x)),
        Prepared::Increment(delta) => clip01(state.get(c, y, x) as f64 + delta),
        Prepared::Contrast { mu, factor } => {
            color::contrast_at(state.get(c, y, x) as f64, *mu, *factor)
        }
        Prepared::Saturation(factor) => {
            let lum = color::luminance(
                state.get(0, y, x) as f64,
                state.get(1, y, x) as f64,
                state.get(2, y, x) as f64,
            );
            color::saturation_at(state.get(c, y, x) as f64, lum, *factor)
        }
        Prepared::Brightness(factor) => color::brightness_at(state.get(c, y, x) as f64, *factor),
        Prepared::ChannelPair { pair, factor } => {
            let v = state.get(c, y, x);
            if c == pair.0 || c == pair.1 {
                clip01(*factor * v as f64)
            } else {
                v
            }
        }
        Prepared::Nothing => state.get(c, y, x),
    }
}

fn apply_prepared(state: &PixelGrid, prepared: &Prepared) -> PixelGrid {
    let mut out = state.clone();
    for c in 0..state.channels() {
        for y in 0..state.height() {
            for x in 0..state.width() {
                out.set(c, y, x, eval_at(prepared, state, c, y, x));
            }
        }
    }
    out
}

/// Apply one action to the whole grid (filters run per channel).
pub fn apply_action(state: &PixelGrid, spec: &ActionSpec) -> Result<PixelGrid> {
    let prepared = prepare(&spec.kind, state)?;
    Ok(apply_prepared(state, &prepared))
}

/// Apply a 5x5 window filter over replicate padding, clipped to [0,1].
pub fn apply_filter(state: &PixelGrid, spec: &ActionSpec) -> Result<PixelGrid> {
    if !spec.kind.is_filter() {
        return Err(PixelRlError::InvalidAction(format!(
            "{} is not a filter",
            spec.name()
        )));
    }
    apply_action(state, spec)
}

/// Element-wise `clip(state + delta)` with delta = +-1/255.
pub fn apply_increment(state: &PixelGrid, delta: f64) -> Result<PixelGrid> {
    apply_action(
        state,
        &ActionSpec {
            id: 0,
            kind: ActionKind::Increment { delta },
        },
    )
}

/// Apply a color point operation; errors on gray input.
pub fn apply_color_op(state: &PixelGrid, spec: &ActionSpec) -> Result<PixelGrid> {
    if !spec.kind.is_color_op() {
        return Err(PixelRlError::InvalidAction(format!(
            "{} is not a color operation",
            spec.name()
        )));
    }
    apply_action(state, spec)
}

/// Apply a per-pixel action selection: every candidate action is evaluated on
/// the same input state and the results are gathered per pixel.
pub fn apply_action_map(
    state: &PixelGrid,
    actions: &ActionMap,
    set: &ActionSet,
) -> Result<PixelGrid> {
    if actions.height() != state.height() || actions.width() != state.width() {
        return Err(PixelRlError::ShapeMismatch(format!(
            "action map {}x{} vs state {}x{}",
            actions.height(),
            actions.width(),
            state.height(),
            state.width()
        )));
    }
    let mut used = vec![false; set.len()];
    for &id in actions.ids() {
        let id = id as usize;
        if id >= set.len() {
            return Err(PixelRlError::InvalidAction(format!(
                "action id {id} out of range for set {} of size {}",
                set.name(),
                set.len()
            )));
        }
        used[id] = true;
    }
    // Prepare only the actions that appear; evaluate only at selected pixels.
    let mut prepared: Vec<Option<Prepared>> = Vec::with_capacity(set.len());
    for (id, flag) in used.iter().enumerate() {
        if *flag {
            prepared.push(Some(prepare(&set.spec(id).unwrap().kind, state)?));
        } else {
            prepared.push(None);
        }
    }
    let mut out = state.clone();
    for y in 0..state.height() {
        for x in 0..state.width() {
            let p = prepared[actions.id_at(y, x)].as_ref().unwrap();
            for c in 0..state.channels() {
                out.set(c, y, x, eval_at(p, state, c, y, x));
            }
        }
    }
    Ok(out)
}
