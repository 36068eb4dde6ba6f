//! The "PXRL" checkpoint container and model-level save/load.
//!
//! Layout: magic "PXRL", version u32, array count u32, then per array
//! {name length u16, name bytes, dtype u8 (0 = f32), ndim u8, one u32 per
//! dim, payload}. All integers and floats are little-endian.

use crate::error::{PixelRlError, Result};
use crate::env::Task;
use crate::net::{ArchConfig, Network, Real};
use crate::rmc::RmcKernel;
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PXRL";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const MAX_NAME: usize = 4096;
const MAX_NDIM: u8 = 8;
const MAX_ELEMS: u64 = 1 << 30;

/// An ordered set of named f32 arrays. Order is preserved through a
/// round-trip so identical contents produce identical bytes.
#[derive(Debug, Clone, Default)]
pub struct Container {
    arrays: Vec<(String, ArrayD<f32>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, array: ArrayD<f32>) {
        self.arrays.push((name.to_string(), array));
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f32>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn names(&self) -> Vec<&str> {
        self.arrays.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    /// Required scalar: a 1-element array stored under `name`.
    pub fn scalar(&self, name: &str) -> Result<f32> {
        let a = self.require(name)?;
        if a.len() != 1 {
            return Err(PixelRlError::Checkpoint(format!(
                "array `{name}` has {} elements, expected a scalar",
                a.len()
            )));
        }
        Ok(a.iter().copied().next().unwrap())
    }

    pub fn require(&self, name: &str) -> Result<&ArrayD<f32>> {
        self.get(name)
            .ok_or_else(|| PixelRlError::Checkpoint(format!("missing array `{name}`")))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, array) in &self.arrays {
            let bytes = name.as_bytes();
            if bytes.len() > MAX_NAME {
                return Err(PixelRlError::Checkpoint(format!(
                    "array name too long ({} bytes)",
                    bytes.len()
                )));
            }
            out.write_all(&(bytes.len() as u16).to_le_bytes())?;
            out.write_all(bytes)?;
            out.write_all(&[DTYPE_F32, array.ndim() as u8])?;
            for &d in array.shape() {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            // Row-major element order, independent of the in-memory layout.
            for &v in array.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(src: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(src, &mut magic, "header")?;
        if &magic != MAGIC {
            return Err(PixelRlError::Checkpoint("bad magic bytes".into()));
        }
        let version = read_u32(src, "header")?;
        if version != VERSION {
            return Err(PixelRlError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let count = read_u32(src, "header")?;
        let mut arrays = Vec::with_capacity(count.min(1024) as usize);
        for i in 0..count {
            let anon = format!("#{i}");
            let name_len = read_u16(src, &anon)? as usize;
            if name_len > MAX_NAME {
                return Err(PixelRlError::Checkpoint(format!(
                    "array {anon}: name length {name_len} out of range"
                )));
            }
            let mut name_bytes = vec![0u8; name_len];
            read_exact(src, &mut name_bytes, &anon)?;
            let name = String::from_utf8(name_bytes).map_err(|_| {
                PixelRlError::Checkpoint(format!("array {anon}: name is not UTF-8"))
            })?;
            let mut head = [0u8; 2];
            read_exact(src, &mut head, &name)?;
            let (dtype, ndim) = (head[0], head[1]);
            if dtype != DTYPE_F32 {
                return Err(PixelRlError::Checkpoint(format!(
                    "array `{name}`: unsupported dtype {dtype}"
                )));
            }
            if ndim > MAX_NDIM {
                return Err(PixelRlError::Checkpoint(format!(
                    "array `{name}`: {ndim} dims out of range"
                )));
            }
            let mut dims = Vec::with_capacity(ndim as usize);
            let mut elems: u64 = 1;
            for _ in 0..ndim {
                let d = read_u32(src, &name)? as u64;
                elems = elems.saturating_mul(d);
                dims.push(d as usize);
            }
            if elems > MAX_ELEMS {
                return Err(PixelRlError::Checkpoint(format!(
                    "array `{name}`: {elems} elements out of range"
                )));
            }
            let mut payload = vec![0u8; elems as usize * 4];
            read_exact(src, &mut payload, &name)?;
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let array = ArrayD::from_shape_vec(IxDyn(&dims), values).map_err(|e| {
                PixelRlError::Checkpoint(format!("array `{name}`: bad shape: {e}"))
            })?;
            arrays.push((name, array));
        }
        Ok(Self { arrays })
    }

    /// Atomic save: the file appears complete or not at all.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("pxrl.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut out)?;
            out.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut src = BufReader::new(File::open(path).map_err(|e| {
            PixelRlError::Checkpoint(format!("cannot open {}: {e}", path.display()))
        })?);
        Self::read_from(&mut src)
    }
}

fn read_exact(src: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    src.read_exact(buf).map_err(|_| {
        PixelRlError::Checkpoint(format!("truncated while reading array `{what}`"))
    })
}

fn read_u32(src: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16(src: &mut impl Read, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(src, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

/// Everything a checkpoint records beyond the parameters.
#[derive(Debug, Clone)]
pub struct ModelMeta {
    pub task: Task,
    pub action_set: String,
    pub episode: usize,
    pub t_max: usize,
}

/// A deserialized checkpoint: parameters in f32, plus the reward kernel when
/// the run had it enabled.
#[derive(Debug)]
pub struct SavedModel {
    pub net: Network<f32>,
    pub kernel: Option<RmcKernel>,
    pub meta: ModelMeta,
}

const ACTION_SETS: [&str; 5] = ["denoise9", "basic4", "basic5", "basic7", "color13"];

fn action_set_index(name: &str) -> Result<f32> {
    ACTION_SETS
        .iter()
        .position(|&n| n == name)
        .map(|i| i as f32)
        .ok_or_else(|| PixelRlError::Checkpoint(format!("unknown action set `{name}`")))
}

fn action_set_name(index: f32) -> Result<String> {
    ACTION_SETS
        .get(index as usize)
        .map(|s| s.to_string())
        .ok_or_else(|| PixelRlError::Checkpoint(format!("unknown action set index {index}")))
}

fn scalar_array(v: f32) -> ArrayD<f32> {
    ArrayD::from_shape_vec(IxDyn(&[1]), vec![v]).unwrap()
}

fn vec_array(vs: &[usize]) -> ArrayD<f32> {
    ArrayD::from_shape_vec(IxDyn(&[vs.len()]), vs.iter().map(|&v| v as f32).collect()).unwrap()
}

/// Serializes parameters, kernel and metadata into a container.
pub fn model_container<F: Real>(
    net: &Network<F>,
    kernel: Option<&RmcKernel>,
    meta: &ModelMeta,
) -> Result<Container> {
    let mut c = Container::new();
    let cfg = &net.cfg;
    c.push("meta.task", scalar_array(meta.task.index() as f32));
    c.push("meta.action_set", scalar_array(action_set_index(&meta.action_set)?));
    c.push("meta.episode", scalar_array(meta.episode as f32));
    c.push("meta.t_max", scalar_array(meta.t_max as f32));
    c.push("meta.in_channels", scalar_array(cfg.in_channels as f32));
    c.push("meta.channels", scalar_array(cfg.channels as f32));
    c.push("meta.n_actions", scalar_array(cfg.n_actions as f32));
    c.push("meta.use_gru", scalar_array(if cfg.use_gru { 1.0 } else { 0.0 }));
    c.push("meta.trunk_dilations", vec_array(&cfg.trunk_dilations));
    c.push("meta.branch_dilations", vec_array(&cfg.branch_dilations));
    c.push(
        "meta.rmc_enabled",
        scalar_array(if kernel.is_some() { 1.0 } else { 0.0 }),
    );
    for (name, conv) in net.named_convs() {
        c.push(
            &format!("{name}.weight"),
            conv.weight.mapv(|v| v.to_f64() as f32).into_dyn(),
        );
        c.push(
            &format!("{name}.bias"),
            conv.bias.mapv(|v| v.to_f64() as f32).into_dyn(),
        );
    }
    if let Some(k) = kernel {
        c.push("rmc.w", k.weights().clone().into_dyn());
    }
    Ok(c)
}

pub fn save_model<F: Real>(
    path: &Path,
    net: &Network<F>,
    kernel: Option<&RmcKernel>,
    meta: &ModelMeta,
) -> Result<()> {
    model_container(net, kernel, meta)?.save(path)
}

/// Rebuilds the architecture from metadata and fills in the parameters.
/// The receptive-field pin is dropped: the stored layout is authoritative.
pub fn load_model(path: &Path) -> Result<SavedModel> {
    let c = Container::load(path)?;
    let to_usizes = |name: &str| -> Result<Vec<usize>> {
        Ok(c.require(name)?.iter().map(|&v| v as usize).collect())
    };
    let cfg = ArchConfig {
        in_channels: c.scalar("meta.in_channels")? as usize,
        channels: c.scalar("meta.channels")? as usize,
        n_actions: c.scalar("meta.n_actions")? as usize,
        use_gru: c.scalar("meta.use_gru")? != 0.0,
        trunk_dilations: to_usizes("meta.trunk_dilations")?,
        branch_dilations: to_usizes("meta.branch_dilations")?,
        expected_rf: None,
    };
    let mut net = Network::<f32>::new(cfg)?;
    let names: Vec<String> = net.named_convs().iter().map(|(n, _)| n.clone()).collect();
    for (name, conv) in names.iter().zip(net.conv_refs_mut()) {
        let weight = c.require(&format!("{name}.weight"))?;
        let bias = c.require(&format!("{name}.bias"))?;
        if weight.shape() != conv.weight.shape() || bias.shape() != conv.bias.shape() {
            return Err(PixelRlError::Checkpoint(format!(
                "array `{name}` has shape {:?}/{:?}, expected {:?}/{:?}",
                weight.shape(),
                bias.shape(),
                conv.weight.shape(),
                conv.bias.shape()
            )));
        }
        conv.weight = Array2::from_shape_vec(
            conv.weight.raw_dim(),
            weight.iter().copied().collect(),
        )
        .expect("shape checked above");
        conv.bias = Array1::from_vec(bias.iter().copied().collect());
    }
    let kernel = if c.scalar("meta.rmc_enabled")? != 0.0 {
        let w = c.require("rmc.w")?;
        if w.ndim() != 2 || w.shape()[0] != w.shape()[1] {
            return Err(PixelRlError::Checkpoint(format!(
                "array `rmc.w` has shape {:?}, expected square",
                w.shape()
            )));
        }
        let side = w.shape()[0];
        let w2 = Array2::from_shape_vec((side, side), w.iter().copied().collect())
            .expect("shape checked above");
        Some(RmcKernel::from_weights(w2, true)?)
    } else {
        None
    };
    let meta = ModelMeta {
        task: Task::from_index(c.scalar("meta.task")? as usize)?,
        action_set: action_set_name(c.scalar("meta.action_set")?)?,
        episode: c.scalar("meta.episode")? as usize,
        t_max: c.scalar("meta.t_max")? as usize,
    };
    Ok(SavedModel { net, kernel, meta })
}
