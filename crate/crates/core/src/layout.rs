//! Placement of the five modalities and two timesteps in the flat 28-element
//! sample vector.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Joint,
    Vision,
    Touch,
    Sound,
    Motor,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Joint,
        Modality::Vision,
        Modality::Touch,
        Modality::Sound,
        Modality::Motor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Joint => "joint",
            Modality::Vision => "vision",
            Modality::Touch => "touch",
            Modality::Sound => "sound",
            Modality::Motor => "motor",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown modality {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Timestep {
    /// t-1
    Previous,
    /// t
    Current,
}

impl Timestep {
    pub const BOTH: [Timestep; 2] = [Timestep::Previous, Timestep::Current];

    pub fn tag(self) -> &'static str {
        match self {
            Timestep::Previous => "tm1",
            Timestep::Current => "t",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Ordered modality descriptors and the resulting index map.
///
/// Modalities are laid out in declaration order; inside a modality the
/// `t-1` block precedes the `t` block, so `I(M)` is a contiguous range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityLayout {
    dims: Vec<(Modality, usize)>,
}

impl Default for ModalityLayout {
    fn default() -> Self {
        Self::standard()
    }
}

impl ModalityLayout {
    /// joint=4, vision=4, touch=1, sound=1, motor=4 per timestep.
    pub fn standard() -> Self {
        Self {
            dims: vec![
                (Modality::Joint, 4),
                (Modality::Vision, 4),
                (Modality::Touch, 1),
                (Modality::Sound, 1),
                (Modality::Motor, 4),
            ],
        }
    }

    /// A layout with custom per-timestep sizes, used for reduced test models.
    /// Every modality must be present exactly once with a positive size.
    pub fn with_dims(dims: Vec<(Modality, usize)>) -> Result<Self> {
        let mut seen = Vec::new();
        for &(m, d) in &dims {
            if d == 0 || seen.contains(&m) {
                return Err(Error::Config(format!("invalid layout entry {m}={d}")));
            }
            seen.push(m);
        }
        if dims.is_empty() {
            return Err(Error::Config("layout needs at least one modality".into()));
        }
        Ok(Self { dims })
    }

    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        self.dims.iter().map(|&(m, _)| m)
    }

    pub fn num_modalities(&self) -> usize {
        self.dims.len()
    }

    /// Per-timestep dimension `d_M`.
    pub fn dim(&self, m: Modality) -> usize {
        self.entry(m).1
    }

    fn entry(&self, m: Modality) -> (usize, usize) {
        let mut off = 0;
        for &(mm, d) in &self.dims {
            if mm == m {
                return (off, d);
            }
            off += 2 * d;
        }
        panic!("modality {m} not in layout");
    }

    pub fn contains(&self, m: Modality) -> bool {
        self.dims.iter().any(|&(mm, _)| mm == m)
    }

    /// Flat dimension `n = 2 * sum d_M`.
    pub fn total_dim(&self) -> usize {
        2 * self.dims.iter().map(|&(_, d)| d).sum::<usize>()
    }

    /// `I(M)`: both timesteps of `m`.
    pub fn modality_range(&self, m: Modality) -> Range<usize> {
        let (off, d) = self.entry(m);
        off..off + 2 * d
    }

    pub fn slot_range(&self, m: Modality, t: Timestep) -> Range<usize> {
        let (off, d) = self.entry(m);
        let start = off + t.index() * d;
        start..start + d
    }

    pub fn index(&self, m: Modality, t: Timestep, dim: usize) -> usize {
        assert!(dim < self.dim(m), "dimension {dim} out of range for {m}");
        self.slot_range(m, t).start + dim
    }

    /// Inverse of [`Self::index`].
    pub fn locate(&self, index: usize) -> (Modality, Timestep, usize) {
        for &(m, d) in &self.dims {
            let r = self.modality_range(m);
            if r.contains(&index) {
                let local = index - r.start;
                let t = if local < d {
                    Timestep::Previous
                } else {
                    Timestep::Current
                };
                return (m, t, local % d);
            }
        }
        panic!("index {index} outside layout of size {}", self.total_dim());
    }

    /// CSV column names in layout order, e.g. `joint_tm1_0`.
    pub fn column_names(&self) -> Vec<String> {
        (0..self.total_dim())
            .map(|i| {
                let (m, t, d) = self.locate(i);
                format!("{}_{}_{}", m.name(), t.tag(), d)
            })
            .collect()
    }
}
