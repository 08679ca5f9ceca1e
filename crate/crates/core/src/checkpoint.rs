//! Versioned checkpoint files.
//!
//! ```text
//! MMVAE-CKPT\n
//! <header: one line of JSON>\n
//! <blob: little-endian f64 values>
//! ```
//!
//! The blob holds the model parameters in flat order, followed by the Adam
//! first and second moments when an optimizer state is stored. The header
//! records shapes, the epoch, the rng position and a SHA-256 of the blob.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::ModalityLayout;
use crate::model::MultimodalVae;
use crate::nn::{Adam, AdamConfig, RngSnapshot, RngState};
use crate::schedule::ScheduleKind;

pub const MAGIC: &str = "MMVAE-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShape {
    pub path: String,
    pub in_size: usize,
    pub out_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamConfig,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub layout: ModalityLayout,
    pub hidden: usize,
    /// Completed training epochs.
    pub epoch: usize,
    pub schedule: Option<ScheduleKind>,
    pub run_seed: Option<u64>,
    pub rng: RngSnapshot,
    pub groups: Vec<GroupShape>,
    pub num_params: usize,
    pub optimizer: Option<OptimizerHeader>,
    pub blob_sha256: String,
}

/// Everything needed to resume a run or re-evaluate a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: MultimodalVae,
    pub optimizer: Option<Adam>,
    pub epoch: usize,
    pub schedule: Option<ScheduleKind>,
    pub run_seed: Option<u64>,
    pub rng: RngState,
}

fn group_shapes(model: &MultimodalVae) -> Vec<GroupShape> {
    model
        .params()
        .layers()
        .map(|(path, l)| GroupShape {
            path: path.to_string(),
            in_size: l.in_size(),
            out_size: l.out_size(),
        })
        .collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut values = self.model.params().values();
        if let Some(adam) = &self.optimizer {
            values.extend_from_slice(adam.first_moment());
            values.extend_from_slice(adam.second_moment());
        }
        let blob: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            layout: self.model.layout().clone(),
            hidden: self.model.hidden(),
            epoch: self.epoch,
            schedule: self.schedule,
            run_seed: self.run_seed,
            rng: self.rng.snapshot(),
            groups: group_shapes(&self.model),
            num_params: self.model.params().num_scalars(),
            optimizer: self.optimizer.as_ref().map(|a| OptimizerHeader {
                config: a.config,
                steps: a.steps(),
            }),
            blob_sha256: hex(&Sha256::digest(&blob)),
        };
        let io = |e| Error::io("<checkpoint>", e);
        writeln!(out, "{MAGIC}").map_err(io)?;
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(io)?;
        out.write_all(&blob).map_err(io)?;
        out.flush().map_err(io)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut rdr = BufReader::new(input);
        let io = |e| Error::io("<checkpoint>", e);
        let mut line = String::new();
        rdr.read_line(&mut line).map_err(io)?;
        if line.trim_end() != MAGIC {
            return Err(Error::Checkpoint("missing checkpoint magic".into()));
        }
        line.clear();
        rdr.read_line(&mut line).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let mut blob = Vec::new();
        rdr.read_to_end(&mut blob).map_err(io)?;
        if hex(&Sha256::digest(&blob)) != header.blob_sha256 {
            return Err(Error::Checkpoint("blob checksum mismatch".into()));
        }
        if blob.len() % 8 != 0 {
            return Err(Error::Checkpoint("blob length is not a multiple of 8".into()));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();

        let mut model = MultimodalVae::new(header.layout.clone(), header.hidden, &mut RngState::new(0))
            .map_err(|e| Error::Checkpoint(format!("cannot rebuild model: {e}")))?;
        if group_shapes(&model) != header.groups || model.params().num_scalars() != header.num_params {
            return Err(Error::Checkpoint("parameter shapes do not match the architecture".into()));
        }
        let n = header.num_params;
        let expected = if header.optimizer.is_some() { 3 * n } else { n };
        if values.len() != expected {
            return Err(Error::Checkpoint(format!(
                "blob holds {} values, expected {expected}",
                values.len()
            )));
        }
        model
            .params_mut()
            .set_values(&values[..n])
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let optimizer = match header.optimizer {
            Some(o) => Some(Adam::from_state(
                o.config,
                values[n..2 * n].to_vec(),
                values[2 * n..].to_vec(),
                o.steps,
            )?),
            None => None,
        };
        Ok(Self {
            model,
            optimizer,
            epoch: header.epoch,
            schedule: header.schedule,
            run_seed: header.run_seed,
            rng: RngState::restore(&header.rng)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn sample_checkpoint(with_optimizer: bool) -> Checkpoint {
        let mut rng = RngState::new(11);
        let mut model = MultimodalVae::standard(&mut rng).unwrap();
        let optimizer = with_optimizer.then(|| {
            let mut adam = Adam::new(AdamConfig::default(), model.params());
            let x = Matrix::from_vec(2, 28, (0..56).map(|i| (i as f64 * 0.1).sin()).collect());
            let noise = Matrix::from_vec(2, 28, rng.gaussian_sample(56));
            model.elbo_backward(&x, &x, 0.5, &noise).unwrap();
            adam.step(model.params_mut(), 0).unwrap();
            adam
        });
        rng.gaussian_sample(7);
        Checkpoint {
            model,
            optimizer,
            epoch: 42,
            schedule: Some(ScheduleKind::DynPlateau0),
            run_seed: Some(3),
            rng,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for with_opt in [false, true] {
            let ck = sample_checkpoint(with_opt);
            let mut buf = Vec::new();
            ck.write_to(&mut buf).unwrap();
            let back = Checkpoint::read_from(buf.as_slice()).unwrap();
            assert_eq!(back.model.params().values(), ck.model.params().values());
            assert_eq!(back.optimizer, ck.optimizer);
            assert_eq!(back.epoch, 42);
            assert_eq!(back.schedule, Some(ScheduleKind::DynPlateau0));
            let mut a = back.rng.clone();
            let mut b = ck.rng.clone();
            assert_eq!(a.gaussian_sample(5), b.gaussian_sample(5));
        }
    }

    #[test]
    fn header_is_json_after_magic() {
        let mut buf = Vec::new();
        sample_checkpoint(false).write_to(&mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(MAGIC));
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["format_version"], 1);
        assert_eq!(header["epoch"], 42);
    }

    #[test]
    fn corrupted_blob_is_rejected() {
        let mut buf = Vec::new();
        sample_checkpoint(true).write_to(&mut buf).unwrap();
        let last = buf.len() - 1;
        buf[last] ^= 1;
        assert!(matches!(Checkpoint::read_from(buf.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut buf = Vec::new();
        sample_checkpoint(false).write_to(&mut buf).unwrap();
        let key = b"\"format_version\":1";
        let at = buf.windows(key.len()).position(|w| w == key).unwrap();
        let mut patched = buf.clone();
        patched[at + key.len() - 1] = b'9';
        let err = Checkpoint::read_from(patched.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoints/epoch_42.ckpt");
        let ck = sample_checkpoint(true);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model.params().values(), ck.model.params().values());
    }
}
