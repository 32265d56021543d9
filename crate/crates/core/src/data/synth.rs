//! Synthetic multi-user activity data.
//!
//! Each class has a base waveform riding on a class-specific DC offset; each
//! user distorts the signal with an amplitude scale, a frequency multiplier,
//! a phase offset, and a channel-mixing rotation, then i.i.d. Gaussian noise
//! is added. The class signal is the invariant structure; the user
//! distortions are the nuisance a cross-user model has to see through. The
//! rotation in particular scrambles which channel carries what, so a model
//! that keys on raw channel patterns fits its training users and misses a
//! held-out one, while rotation-invariant statistics (offset magnitude,
//! oscillation energy, frequency) transfer. All draws derive from the spec's
//! seed, so the same spec always generates bit-identical recordings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::types::SensorRecording;
use super::DataError;
use crate::numkit::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    /// Flat signal: the static class.
    Constant,
    Sine,
    Square,
    Saw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassWave {
    pub shape: Waveform,
    pub freq_hz: f64,
    pub amp: f64,
    /// Constant offset added to every channel before the user rotation.
    #[serde(default)]
    pub dc: f64,
}

/// A bank of `num_classes` mutually distinguishable waveforms: any two
/// entries differ in shape, frequency, or offset. Unit amplitude throughout;
/// the offset ramp separates per-window class means so classes are visible
/// even before oscillation structure is resolved.
pub fn default_waves(num_classes: usize) -> Vec<ClassWave> {
    const BANK: [(Waveform, f64); 8] = [
        (Waveform::Constant, 0.0),
        (Waveform::Sine, 0.8),
        (Waveform::Sine, 2.0),
        (Waveform::Square, 1.3),
        (Waveform::Saw, 0.9),
        (Waveform::Square, 2.4),
        (Waveform::Sine, 3.1),
        (Waveform::Saw, 1.8),
    ];
    const EXTRA: [Waveform; 3] = [Waveform::Sine, Waveform::Square, Waveform::Saw];
    (0..num_classes)
        .map(|i| {
            let (shape, freq_hz) = if i < BANK.len() {
                BANK[i]
            } else {
                // Distinct frequencies keep classes separable past the bank.
                (EXTRA[i % EXTRA.len()], 0.5 + 0.45 * i as f64)
            };
            ClassWave { shape, freq_hz, amp: 1.0, dc: i as f64 }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_users: u32,
    pub num_classes: usize,
    pub num_channels: usize,
    pub sample_rate: f64,
    pub duration_s: f64,
    /// One waveform per class, index c-1 for class c.
    pub class_waves: Vec<ClassWave>,
    /// Per-user amplitude scale drawn from [1 - x, 1 + x]; must be < 1.
    pub user_amp_spread: f64,
    /// Per-user frequency multiplier drawn from [1 - x, 1 + x]; must be < 1.
    pub user_freq_jitter: f64,
    /// Per-user phase offset drawn from [0, x).
    pub user_phase_max: f64,
    /// Strength of the per-user channel rotation: Givens angles drawn from
    /// [-x*pi, x*pi] per channel pair. 0 disables mixing.
    pub user_channel_mix: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_users: 4,
            num_classes: 4,
            num_channels: 3,
            sample_rate: 10.0,
            duration_s: 60.0,
            class_waves: default_waves(4),
            user_amp_spread: 0.25,
            user_freq_jitter: 0.10,
            user_phase_max: 2.0 * PI,
            user_channel_mix: 0.9,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::BadSynthSpec(msg));
        if self.num_users == 0 || self.num_classes == 0 || self.num_channels == 0 {
            return bad("users, classes, and channels must all be nonzero".into());
        }
        if self.class_waves.len() != self.num_classes {
            return bad(format!(
                "{} class waveforms for {} classes",
                self.class_waves.len(),
                self.num_classes
            ));
        }
        if !(self.sample_rate > 0.0) || self.duration_s * self.sample_rate < 1.0 {
            return bad("duration * sample_rate must cover at least one sample".into());
        }
        for (name, v) in [
            ("user_amp_spread", self.user_amp_spread),
            ("user_freq_jitter", self.user_freq_jitter),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("user_phase_max", self.user_phase_max),
            ("user_channel_mix", self.user_channel_mix),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Unit-norm offset direction for a class: row `(class - 1) mod d` of the
/// DCT-II basis. Distinct classes get distinct (mostly orthogonal)
/// directions, so class offsets form a non-degenerate constellation that a
/// per-user rotation can reorient but never collapse onto a line.
fn dc_direction(class: usize, d: usize) -> Vec<f64> {
    let k = (class - 1) % d;
    let mut v: Vec<f64> = (0..d)
        .map(|ch| (PI * k as f64 * (2 * ch + 1) as f64 / (2 * d) as f64).cos())
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

/// Per-user channel rotation as a sequence of Givens rotations, one per
/// channel pair. Composition of Givens rotations is orthogonal, so mixing
/// never changes the instantaneous cross-channel energy.
struct ChannelMix {
    givens: Vec<(usize, usize, f64, f64)>, // (i, j, cos, sin)
}

impl ChannelMix {
    fn draw(rng: &mut Rng, d: usize, strength: f64) -> Self {
        let mut givens = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                let theta = rng.uniform_in(-PI, PI) * strength;
                givens.push((i, j, theta.cos(), theta.sin()));
            }
        }
        ChannelMix { givens }
    }

    fn apply(&self, x: &mut [f64]) {
        for &(i, j, c, s) in &self.givens {
            let (xi, xj) = (x[i], x[j]);
            x[i] = c * xi - s * xj;
            x[j] = s * xi + c * xj;
        }
    }
}

fn wave_value(shape: Waveform, tau: f64) -> f64 {
    match shape {
        Waveform::Constant => 1.0,
        Waveform::Sine => tau.sin(),
        Waveform::Square => {
            if tau.sin() >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        Waveform::Saw => 2.0 * (tau / (2.0 * PI)).rem_euclid(1.0) - 1.0,
    }
}

/// Generate one recording per (user, class).
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<SensorRecording>, DataError> {
    spec.validate()?;
    let t_len = (spec.duration_s * spec.sample_rate).round() as usize;
    let d = spec.num_channels;
    let root = Rng::new(spec.seed);

    let mut recordings = Vec::with_capacity(spec.num_users as usize * spec.num_classes);
    for user in 1..=spec.num_users {
        let mut user_rng = root.derive(&["synth-user", &user.to_string()]);
        let amp_scale = 1.0
            + spec.user_amp_spread * user_rng.uniform_in(-1.0, 1.0);
        let freq_mult = 1.0
            + spec.user_freq_jitter * user_rng.uniform_in(-1.0, 1.0);
        let phase = user_rng.uniform() * spec.user_phase_max;
        let mix = ChannelMix::draw(&mut user_rng, d, spec.user_channel_mix);

        for class in 1..=spec.num_classes {
            let wavespec = spec.class_waves[class - 1];
            let dc_dir = dc_direction(class, d);
            let mut noise_rng =
                root.derive(&["synth-noise", &user.to_string(), &class.to_string()]);
            let mut data = Vec::with_capacity(t_len * d);
            let mut sample = vec![0.0; d];
            for t in 0..t_len {
                let t_sec = t as f64 / spec.sample_rate;
                for (ch, slot) in sample.iter_mut().enumerate() {
                    // Per-channel phase lag gives the rotation something to mix.
                    let tau = 2.0 * PI * wavespec.freq_hz * freq_mult * t_sec
                        + phase
                        + ch as f64 * PI / 3.0;
                    *slot = wavespec.dc * dc_dir[ch]
                        + wavespec.amp * amp_scale * wave_value(wavespec.shape, tau);
                }
                mix.apply(&mut sample);
                for &v in &sample {
                    data.push(v + spec.noise_sigma * noise_rng.normal());
                }
            }
            recordings.push(SensorRecording {
                user,
                activity: class,
                sample_rate: spec.sample_rate,
                samples: Matrix::new(t_len, d, data)?,
            });
        }
    }
    Ok(recordings)
}
