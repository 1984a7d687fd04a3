use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dlcf::{DenoiserModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::TensorContainer;
use crate::schedule::{NoiseSchedule, ScheduleKind};

pub const CHECKPOINT_FORMAT: &str = "fuse-checkpoint";

/// JSON header stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: ModelConfig,
    pub schedule_steps: usize,
    pub schedule: ScheduleKind,
    /// `histogram[n]` = training ligands with `n` atoms.
    pub n_atoms_histogram: Vec<usize>,
    pub train_step: usize,
    pub seed: u64,
    pub no_bond_gen: bool,
    pub no_dlcf: bool,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: DenoiserModel,
}

impl Checkpoint {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.meta.schedule_steps, self.meta.schedule)
    }

    pub fn to_container(&self) -> Result<TensorContainer> {
        Ok(TensorContainer {
            metadata: serde_json::to_string(&self.meta)?,
            tensors: self
                .model
                .params
                .named_values()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        })
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let meta: CheckpointMeta =
            serde_json::from_str(&c.metadata).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", meta.format)));
        }
        let model = DenoiserModel::from_tensors(meta.model.clone(), c.tensors.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(Self { meta, model })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.to_container()?.write_to(w)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        Self::from_container(&TensorContainer::read_from(r)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
