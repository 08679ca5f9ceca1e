//! Muting augmentation: every sample is presented four times per epoch.
//!
//! * `Full`: nothing muted.
//! * `PastOnly`: every modality muted at `t`.
//! * `DropModality`: one modality muted at both timesteps.
//! * `SingleModality`: everything muted except one modality at `t-1`.
//!
//! The modality used by the last two kinds is `(sample + epoch) mod 5`, so one
//! epoch covers every modality when the dataset has at least five samples and
//! each sample cycles through all modalities over five epochs.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::mask::MaskSpec;
use crate::layout::{Modality, Timestep};
use crate::nn::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentKind {
    Full,
    PastOnly,
    DropModality(Modality),
    SingleModality(Modality),
}

impl AugmentKind {
    pub fn mask(self) -> MaskSpec {
        match self {
            AugmentKind::Full => MaskSpec::none(),
            AugmentKind::PastOnly => MaskSpec::timestep(Timestep::Current),
            AugmentKind::DropModality(m) => MaskSpec::modality(m),
            AugmentKind::SingleModality(m) => MaskSpec::only(m, Timestep::Previous),
        }
    }
}

/// Training pairs of one epoch in presentation order.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub kinds: Vec<AugmentKind>,
    /// Dataset row each pair was derived from.
    pub source: Vec<usize>,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Rows `range` as `(inputs, targets)`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> (Matrix, Matrix) {
        let cols = self.inputs.cols();
        let take = |m: &Matrix| {
            Matrix::from_vec(
                range.len(),
                cols,
                m.as_slice()[range.start * cols..range.end * cols].to_vec(),
            )
        };
        (take(&self.inputs), take(&self.targets))
    }
}

/// The four kinds emitted for `sample` in `epoch`.
pub fn kinds_for(sample: usize, epoch: usize, layout_modalities: &[Modality]) -> [AugmentKind; 4] {
    let m = layout_modalities[(sample + epoch) % layout_modalities.len()];
    [
        AugmentKind::Full,
        AugmentKind::PastOnly,
        AugmentKind::DropModality(m),
        AugmentKind::SingleModality(m),
    ]
}

/// Builds the shuffled training pairs of `epoch`; targets are the full samples.
pub fn augment(dataset: &Dataset, epoch: usize, rng: &mut RngState) -> AugmentedBatch {
    let layout = dataset.layout();
    let modalities: Vec<Modality> = layout.modalities().collect();
    let n = dataset.len();
    let cols = layout.total_dim();
    let mut order: Vec<(usize, AugmentKind)> = (0..n)
        .flat_map(|i| kinds_for(i, epoch, &modalities).map(|k| (i, k)))
        .collect();
    rng.shuffle(&mut order);
    let mut inputs = Matrix::zeros(order.len(), cols);
    let mut targets = Matrix::zeros(order.len(), cols);
    for (r, &(i, kind)) in order.iter().enumerate() {
        let x = dataset.sample(i);
        targets.row_mut(r).copy_from_slice(x);
        let row = inputs.row_mut(r);
        row.copy_from_slice(x);
        kind.mask().apply_in_place(row, layout);
    }
    AugmentedBatch {
        inputs,
        targets,
        kinds: order.iter().map(|&(_, k)| k).collect(),
        source: order.iter().map(|&(i, _)| i).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mask::SENTINEL;
    use crate::data::synthetic::{generate_synthetic, SyntheticParams};
    use std::collections::HashSet;

    fn data(n: usize) -> Dataset {
        generate_synthetic(1, 500, &SyntheticParams::default())
            .unwrap()
            .subset(n, 0)
            .unwrap()
    }

    fn muted(row: &[f64]) -> usize {
        row.iter().filter(|&&v| v == SENTINEL).count()
    }

    #[test]
    fn one_sample_yields_four_pairs() {
        let ds = data(1);
        let b = augment(&ds, 0, &mut RngState::new(0));
        assert_eq!(b.len(), 4);
        for r in 0..4 {
            assert_eq!(b.targets.row(r), ds.sample(0));
        }
    }

    #[test]
    fn mask_sizes_per_kind() {
        let ds = data(10);
        let b = augment(&ds, 3, &mut RngState::new(2));
        for (r, kind) in b.kinds.iter().enumerate() {
            let row = b.inputs.row(r);
            match kind {
                AugmentKind::Full => assert_eq!(muted(row), 0),
                AugmentKind::PastOnly => {
                    assert_eq!(muted(row), 14);
                    for m in Modality::ALL {
                        let range = ds.layout().slot_range(m, Timestep::Current);
                        assert!(row[range].iter().all(|&v| v == SENTINEL));
                    }
                }
                AugmentKind::DropModality(m) => assert_eq!(muted(row), 2 * ds.layout().dim(*m)),
                AugmentKind::SingleModality(Modality::Vision) => assert_eq!(muted(row), 24),
                AugmentKind::SingleModality(m) => {
                    assert_eq!(muted(row), 28 - ds.layout().dim(*m))
                }
            }
        }
    }

    #[test]
    fn inputs_match_targets_outside_mask() {
        let ds = data(12);
        let b = augment(&ds, 1, &mut RngState::new(5));
        for r in 0..b.len() {
            for (x, t) in b.inputs.row(r).iter().zip(b.targets.row(r)) {
                assert!(*x == SENTINEL || x == t);
            }
        }
    }

    #[test]
    fn one_epoch_covers_every_kind_and_modality() {
        let ds = data(10);
        let b = augment(&ds, 7, &mut RngState::new(1));
        let seen: HashSet<AugmentKind> = b.kinds.iter().copied().collect();
        assert_eq!(seen.len(), 2 + 2 * 5);
        // Each sample sees every modality within five consecutive epochs.
        let mut per_sample: Vec<HashSet<Modality>> = vec![HashSet::new(); 10];
        for epoch in 0..5 {
            let b = augment(&ds, epoch, &mut RngState::new(epoch as u64));
            for (k, &src) in b.kinds.iter().zip(&b.source) {
                if let AugmentKind::DropModality(m) = k {
                    per_sample[src].insert(*m);
                }
            }
        }
        assert!(per_sample.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn shuffling_is_seeded() {
        let ds = data(10);
        let a = augment(&ds, 0, &mut RngState::new(4));
        let b = augment(&ds, 0, &mut RngState::new(4));
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.source, b.source);
    }
}
