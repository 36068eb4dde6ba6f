//! Action-map rendering: indexed PNGs over a fixed 16-color palette plus a
//! legend naming each color, and step-by-step state dumps.

use crate::actions::{ActionMap, ActionSet};
use crate::checkpoint::SavedModel;
use crate::env::save_png;
use crate::error::{PixelRlError, Result};
use crate::eval::rollout_actions;
use crate::grid::PixelGrid;
use crate::trainer::ActionSelection;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// One fixed color per action id. Action sets are capped at 16 actions so
/// renders of the same map are byte-identical across runs.
pub const PALETTE: [[u8; 3]; 16] = [
    [64, 64, 64],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [170, 110, 40],
    [128, 128, 0],
    [0, 128, 128],
    [170, 190, 255],
    [128, 0, 0],
    [255, 250, 200],
];

/// Writes `map` as an 8-bit indexed PNG whose palette is always the full
/// fixed 16-color table.
pub fn render_action_map(map: &ActionMap, set: &ActionSet, path: &Path) -> Result<()> {
    if set.len() > PALETTE.len() {
        return Err(PixelRlError::Config(format!(
            "action set has {} actions, palette holds {}",
            set.len(),
            PALETTE.len()
        )));
    }
    let file = std::fs::File::create(path)?;
    let mut encoder = png::Encoder::new(
        std::io::BufWriter::new(file),
        map.width() as u32,
        map.height() as u32,
    );
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(PALETTE.concat());
    let mut writer = encoder
        .write_header()
        .map_err(|e| PixelRlError::Data(format!("png header: {e}")))?;
    writer
        .write_image_data(map.ids())
        .map_err(|e| PixelRlError::Data(format!("png data: {e}")))?;
    Ok(())
}

/// One line per action: `<id>\t#rrggbb\t<action name>`.
pub fn write_legend(set: &ActionSet, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, spec) in set.specs().iter().enumerate() {
        let [r, g, b] = PALETTE[id];
        writeln!(out, "{id}\t#{r:02x}{g:02x}{b:02x}\t{}", spec.name())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct VizOutput {
    /// `state_t0.png` (the input) through `state_t<t_max>.png`.
    pub states: Vec<PathBuf>,
    /// `actions_t0.png` through `actions_t<t_max-1>.png`.
    pub actions: Vec<PathBuf>,
    pub legend: PathBuf,
}

/// Runs the greedy policy on `input` and writes every intermediate state,
/// every action map, and the legend into `out_dir`.
pub fn visualize(
    model: &SavedModel,
    input: &PixelGrid,
    t_max: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<VizOutput> {
    let set = model.meta.task.default_action_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (states, maps) =
        rollout_actions(&model.net, &set, input, t_max, ActionSelection::Greedy, &mut rng)?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = VizOutput {
        states: Vec::with_capacity(states.len()),
        actions: Vec::with_capacity(maps.len()),
        legend: out_dir.join("legend.txt"),
    };
    for (t, state) in states.iter().enumerate() {
        let path = out_dir.join(format!("state_t{t}.png"));
        save_png(state, &path)?;
        out.states.push(path);
    }
    for (t, map) in maps.iter().enumerate() {
        let path = out_dir.join(format!("actions_t{t}.png"));
        render_action_map(map, &set, &path)?;
        out.actions.push(path);
    }
    write_legend(&set, &out.legend)?;
    Ok(out)
}
