//! Versioned JSON checkpoints.
//!
//! Random streams are keyed by `(seed, chain, sweep, stream)`, so the seed,
//! chain index and iteration counter stored here are the complete generator
//! state; a resumed chain is bit-identical to an uninterrupted one.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainState, Draw, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::LatentState;

pub const CHECKPOINT_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub chain: usize,
    pub config: SamplerConfig,
    pub state: ChainState,
    pub draws: Vec<Draw>,
    pub latents: Option<Vec<Vec<LatentState>>>,
}

impl Checkpoint {
    pub fn check_version(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}
