//! Synthetic sensorimotor episodes from a planar two-link arm reaching
//! toward an object.
//!
//! Each episode places an object at a reachable point and starts the arm at a
//! random posture. The velocity command mixes a proportional pull toward the
//! object's joint-space posture with a smooth AR(1) random component.
//!
//! * joint: the two angles and their sum and difference (4 channels).
//! * motor: the commanded angular velocities in the same 4-channel form, so
//!   `joint(t) = joint(t-1) + motor(t-1) * dt` up to process noise.
//! * vision: image-plane positions of two markers, the hand (forward
//!   kinematics of the joints) and the object. Vision is the only modality
//!   that observes the object, and it determines the arm state as well.
//! * touch: +1 while the hand is within `contact_threshold` of the object.
//! * sound: +1 on the step where touch switches from -1 to +1 (a key press).

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, NormalizationStats, Provenance};
use crate::error::{Error, Result};
use crate::layout::{Modality, ModalityLayout, Timestep};
use crate::nn::{Matrix, RngState};

pub const UPPER_ARM: f64 = 0.55;
pub const FOREARM: f64 = 0.45;

const SHOULDER_RANGE: (f64, f64) = (0.3, 1.3);
const ELBOW_RANGE: (f64, f64) = (0.4, 1.6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Std of the per-step process noise on each joint angle (radians).
    pub noise: f64,
    /// Integration step (seconds).
    pub dt: f64,
    /// Hand-object distance below which touch reads +1.
    pub contact_threshold: f64,
    /// Samples per episode.
    pub episode_length: usize,
    /// AR(1) coefficient of the random command component.
    pub motor_smoothness: f64,
    /// Stationary std of the random command component (rad/s).
    pub motor_scale: f64,
    /// Proportional gain of the pull toward the object (1/s).
    pub reach_gain: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            noise: 0.01,
            dt: 0.1,
            contact_threshold: 0.12,
            episode_length: 50,
            motor_smoothness: 0.9,
            motor_scale: 0.6,
            reach_gain: 1.0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.noise >= 0.0
            && self.dt > 0.0
            && self.contact_threshold > 0.0
            && self.episode_length >= 1
            && (0.0..1.0).contains(&self.motor_smoothness)
            && self.motor_scale >= 0.0
            && self.reach_gain >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid generator parameters {self:?}")))
        }
    }
}

/// Positions of the elbow and the hand for shoulder angle `a` and elbow angle `b`.
pub fn forward_kinematics(a: f64, b: f64) -> ([f64; 2], [f64; 2]) {
    let elbow = [UPPER_ARM * a.cos(), UPPER_ARM * a.sin()];
    let hand = [
        elbow[0] + FOREARM * (a + b).cos(),
        elbow[1] + FOREARM * (a + b).sin(),
    ];
    (elbow, hand)
}

fn channels(q: [f64; 2]) -> [f64; 4] {
    [q[0], q[1], q[0] + q[1], q[0] - q[1]]
}

#[derive(Debug, Clone, Copy)]
struct Step {
    joint: [f64; 4],
    vision: [f64; 4],
    touch: f64,
    sound: f64,
    motor: [f64; 4],
}

fn simulate_episode(params: &SyntheticParams, rng: &mut RngState, steps: usize) -> Vec<Step> {
    let draw_posture = |rng: &mut RngState| {
        [
            rng.uniform(SHOULDER_RANGE.0, SHOULDER_RANGE.1),
            rng.uniform(ELBOW_RANGE.0, ELBOW_RANGE.1),
        ]
    };
    let goal = draw_posture(rng);
    let object = forward_kinematics(goal[0], goal[1]).1;
    let mut q = draw_posture(rng);
    let rho = params.motor_smoothness;
    let innovation = (1.0 - rho * rho).sqrt() * params.motor_scale;
    let mut random = [
        params.motor_scale * rng.standard_normal(),
        params.motor_scale * rng.standard_normal(),
    ];
    let mut prev_touch = None;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let hand = forward_kinematics(q[0], q[1]).1;
        let dist = ((hand[0] - object[0]).powi(2) + (hand[1] - object[1]).powi(2)).sqrt();
        let touch = if dist < params.contact_threshold { 1.0 } else { -1.0 };
        let sound = if touch > 0.0 && prev_touch.unwrap_or(touch) < 0.0 {
            1.0
        } else {
            -1.0
        };
        prev_touch = Some(touch);
        let u = [
            params.reach_gain * (goal[0] - q[0]) + random[0],
            params.reach_gain * (goal[1] - q[1]) + random[1],
        ];
        out.push(Step {
            joint: channels(q),
            vision: [hand[0], hand[1], object[0], object[1]],
            touch,
            sound,
            motor: channels(u),
        });
        for k in 0..2 {
            q[k] += u[k] * params.dt + params.noise * rng.standard_normal();
            random[k] = rho * random[k] + innovation * rng.standard_normal();
        }
    }
    out
}

fn write_slot(row: &mut [f64], layout: &ModalityLayout, m: Modality, t: Timestep, v: &[f64]) {
    row[layout.slot_range(m, t)].copy_from_slice(v);
}

/// Raw (unnormalized) samples, one `(t-1, t)` pair per row.
pub fn generate_raw(seed: u64, n_samples: usize, params: &SyntheticParams) -> Result<Matrix> {
    if n_samples == 0 {
        return Err(Error::Usage("n_samples must be at least 1".into()));
    }
    params.validate()?;
    let layout = ModalityLayout::standard();
    let mut rng = RngState::new(seed);
    let mut out = Matrix::zeros(n_samples, layout.total_dim());
    let mut row = 0;
    while row < n_samples {
        let episode = simulate_episode(params, &mut rng, params.episode_length + 1);
        for pair in episode.windows(2) {
            if row == n_samples {
                break;
            }
            let r = out.row_mut(row);
            for (t, s) in [(Timestep::Previous, &pair[0]), (Timestep::Current, &pair[1])] {
                write_slot(r, &layout, Modality::Joint, t, &s.joint);
                write_slot(r, &layout, Modality::Vision, t, &s.vision);
                write_slot(r, &layout, Modality::Touch, t, &[s.touch]);
                write_slot(r, &layout, Modality::Sound, t, &[s.sound]);
                write_slot(r, &layout, Modality::Motor, t, &s.motor);
            }
            row += 1;
        }
    }
    Ok(out)
}

/// Normalization statistics of synthetic data are fitted on at least this
/// many samples of the same stream, so small datasets (shorter than an
/// episode, or without any contact) still get the full-range scaling.
pub const NORMALIZATION_REFERENCE: usize = 4096;

/// Generates and normalizes a synthetic dataset. The first `n_samples` rows
/// of a longer stream are identical to a shorter generation with the same seed.
pub fn generate_synthetic(seed: u64, n_samples: usize, params: &SyntheticParams) -> Result<Dataset> {
    let reference = generate_raw(seed, n_samples.max(NORMALIZATION_REFERENCE), params)?;
    let layout = ModalityLayout::standard();
    let stats = NormalizationStats::fit(&reference, &layout)?;
    let cols = layout.total_dim();
    let raw = Matrix::from_vec(
        n_samples,
        cols,
        reference.as_slice()[..n_samples * cols].to_vec(),
    );
    Dataset::with_stats(
        &raw,
        layout,
        stats,
        Provenance::Synthetic {
            seed,
            params: *params,
        },
    )
}
