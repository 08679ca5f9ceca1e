use serde::{Deserialize, Serialize};

use crate::layout::{Modality, ModalityLayout, Timestep};

/// Value written into muted entries; outside the normalized range `[-1, 1]`.
pub const SENTINEL: f64 = -2.0;

/// Mute flags per (modality, timestep).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MaskSpec {
    muted: [[bool; 2]; 5],
}

impl MaskSpec {
    /// Nothing muted.
    pub fn none() -> Self {
        Self::default()
    }

    /// Everything muted.
    pub fn all() -> Self {
        Self {
            muted: [[true; 2]; 5],
        }
    }

    /// Every modality muted at timestep `t`.
    pub fn timestep(t: Timestep) -> Self {
        let mut m = Self::none();
        for row in &mut m.muted {
            row[t.index()] = true;
        }
        m
    }

    /// `modality` muted at both timesteps, everything else observed.
    pub fn modality(modality: Modality) -> Self {
        let mut m = Self::none();
        m.muted[modality.index()] = [true, true];
        m
    }

    /// Everything muted except `modality` at timestep `t`.
    pub fn only(modality: Modality, t: Timestep) -> Self {
        let mut m = Self::all();
        m.muted[modality.index()][t.index()] = false;
        m
    }

    pub fn set(&mut self, modality: Modality, t: Timestep, muted: bool) {
        self.muted[modality.index()][t.index()] = muted;
    }

    pub fn is_muted(&self, modality: Modality, t: Timestep) -> bool {
        self.muted[modality.index()][t.index()]
    }

    /// Number of entries this mask mutes in a vector with `layout`.
    pub fn muted_count(&self, layout: &ModalityLayout) -> usize {
        layout
            .modalities()
            .flat_map(|m| Timestep::BOTH.map(|t| (m, t)))
            .filter(|&(m, t)| self.is_muted(m, t))
            .map(|(m, _)| layout.dim(m))
            .sum()
    }

    /// Writes the sentinel into every muted position of `x` in place.
    pub fn apply_in_place(&self, x: &mut [f64], layout: &ModalityLayout) {
        debug_assert_eq!(x.len(), layout.total_dim());
        for m in layout.modalities() {
            for t in Timestep::BOTH {
                if self.is_muted(m, t) {
                    x[layout.slot_range(m, t)].fill(SENTINEL);
                }
            }
        }
    }
}

/// Copy of `x` with the masked positions set to [`SENTINEL`].
pub fn apply_mask(x: &[f64], mask: &MaskSpec, layout: &ModalityLayout) -> Vec<f64> {
    let mut out = x.to_vec();
    mask.apply_in_place(&mut out, layout);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<f64> {
        (0..28).map(|i| (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn empty_mask_is_identity() {
        let l = ModalityLayout::standard();
        assert_eq!(apply_mask(&sample(), &MaskSpec::none(), &l), sample());
    }

    #[test]
    fn full_mask_mutes_everything() {
        let l = ModalityLayout::standard();
        assert!(apply_mask(&sample(), &MaskSpec::all(), &l)
            .iter()
            .all(|&v| v == SENTINEL));
    }

    #[test]
    fn touch_mask_mutes_two_entries() {
        let l = ModalityLayout::standard();
        let out = apply_mask(&sample(), &MaskSpec::modality(Modality::Touch), &l);
        let muted: Vec<usize> = (0..28).filter(|&i| out[i] == SENTINEL).collect();
        assert_eq!(muted, vec![16, 17]);
    }

    #[test]
    fn counts() {
        let l = ModalityLayout::standard();
        assert_eq!(MaskSpec::timestep(Timestep::Current).muted_count(&l), 14);
        assert_eq!(MaskSpec::only(Modality::Vision, Timestep::Previous).muted_count(&l), 24);
        assert_eq!(MaskSpec::only(Modality::Touch, Timestep::Previous).muted_count(&l), 27);
    }

    proptest! {
        #[test]
        fn masking_is_idempotent_and_local(bits in proptest::collection::vec(any::<bool>(), 10)) {
            let l = ModalityLayout::standard();
            let mut mask = MaskSpec::none();
            for (k, b) in bits.iter().enumerate() {
                mask.set(Modality::ALL[k / 2], Timestep::BOTH[k % 2], *b);
            }
            let x = sample();
            let once = apply_mask(&x, &mask, &l);
            prop_assert_eq!(apply_mask(&once, &mask, &l), once.clone());
            for i in 0..28 {
                let (m, t, _) = l.locate(i);
                if mask.is_muted(m, t) {
                    prop_assert_eq!(once[i], SENTINEL);
                } else {
                    prop_assert_eq!(once[i], x[i]);
                }
            }
        }
    }
}
