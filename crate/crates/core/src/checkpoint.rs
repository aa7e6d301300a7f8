//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DNB1" | version u32 | arch id (u32 len + UTF-8) | width scale f64 | param count u64
//! per parameter: name (u32 len + UTF-8) | rank u8 | dims u32 × rank | f32 × numel
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::arch::{Architecture, ModelGraph, WidthScale};
use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DNB1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub width_scale: WidthScale,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelGraph) -> Self {
        Self {
            architecture: model.architecture(),
            width_scale: model.width_scale(),
            params: model.params().iter().map(|p| (p.name.clone(), p.tensor.clone())).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(self.architecture.id());
        w.f64(self.width_scale.as_f64());
        w.u64(self.params.len() as u64);
        for (name, t) in &self.params {
            w.str(name);
            w.u8(t.rank() as u8);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            w.f32s(t.data());
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let arch_id = r.str("architecture id")?;
        let architecture = arch_id
            .parse::<Architecture>()
            .map_err(|_| FormatError::Malformed(format!("unknown architecture {:?}", arch_id)))?;
        let scale = r.f64("width scale")?;
        let width_scale = WidthScale::from_f64(scale)
            .map_err(|_| FormatError::Malformed(format!("invalid width scale {}", scale)))?;
        let count = r.u64("parameter count")?;
        let mut params = Vec::new();
        for _ in 0..count {
            let name = r.str("parameter name")?;
            let rank = r.u8("rank")? as usize;
            if rank == 0 || rank > Tensor::MAX_RANK {
                return Err(FormatError::Malformed(format!("{}: rank {}", name, rank)));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel.ok_or_else(|| FormatError::Malformed(format!("{}: shape overflow", name)))?;
            let data = r.f32s(numel, "parameter data")?;
            let tensor = Tensor::new(&shape, data).map_err(|e| FormatError::Malformed(format!("{}: {}", name, e)))?;
            params.push((name, tensor));
        }
        r.finish()?;
        Ok(Self { architecture, width_scale, params })
    }

    /// Builds the architecture described by the header and loads the weights.
    pub fn into_model(self) -> Result<ModelGraph, Error> {
        let mut model = ModelGraph::build(self.architecture, self.width_scale, 0)?;
        model.load_checkpoint(&self)?;
        Ok(model)
    }
}

impl ModelGraph {
    /// Replaces every parameter with the checkpoint's values. The
    /// checkpoint must describe exactly this architecture and width.
    pub fn load_checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<(), FormatError> {
        let mismatch = |msg: String| Err(FormatError::ArchitectureMismatch(msg));
        if checkpoint.architecture != self.architecture() {
            return mismatch(format!(
                "checkpoint holds {}, model is {}",
                checkpoint.architecture.id(),
                self.architecture().id()
            ));
        }
        if checkpoint.width_scale != self.width_scale() {
            return mismatch(format!(
                "checkpoint width scale {}, model width scale {}",
                checkpoint.width_scale,
                self.width_scale()
            ));
        }
        if checkpoint.params.len() != self.params().len() {
            return mismatch(format!(
                "checkpoint has {} parameters, model has {}",
                checkpoint.params.len(),
                self.params().len()
            ));
        }
        for ((name, t), p) in checkpoint.params.iter().zip(self.params().iter()) {
            if *name != p.name || t.shape() != p.tensor.shape() {
                return mismatch(format!("{} {:?} does not match {} {:?}", name, t.shape(), p.name, p.tensor.shape()));
            }
        }
        for (name, t) in &checkpoint.params {
            self.params_mut().find_mut(name).expect("names checked").tensor = t.clone();
        }
        Ok(())
    }
}
