//! Position-dependent action noise and bias.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_NOISES: [f32; 8] = [0.1, 0.0, 0.2, 0.05, 0.3, 0.1, 0.4, 0.2];
pub const DEFAULT_BIASES: [f32; 8] = [0.1, -0.1, 0.2, 0.0, 0.2, -0.3, 0.2, 0.0];
/// Breakpoints in the reference coordinate frame; the first entry is a
/// sentinel far below any reachable position.
pub const DEFAULT_POSITIONS: [f32; 8] = [-20.0, 0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0];
/// Width of the reference frame the default breakpoints were laid out on.
pub const REFERENCE_WIDTH: f32 = 28.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clean,
    Noisy,
    Biased,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Variant::Clean),
            "noisy" => Ok(Variant::Noisy),
            "biased" => Ok(Variant::Biased),
            other => Err(Error::Contract(format!(
                "unknown variant `{other}` (expected clean, noisy or biased)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Clean => "clean",
            Variant::Noisy => "noisy",
            Variant::Biased => "biased",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionProfile {
    pub positions: Vec<f32>,
    pub noises: Vec<f32>,
    pub biases: Vec<f32>,
}

impl Default for CorruptionProfile {
    fn default() -> Self {
        Self {
            positions: DEFAULT_POSITIONS.to_vec(),
            noises: DEFAULT_NOISES.to_vec(),
            biases: DEFAULT_BIASES.to_vec(),
        }
    }
}

impl CorruptionProfile {
    pub fn new(positions: Vec<f32>, noises: Vec<f32>, biases: Vec<f32>) -> Result<Self> {
        if positions.is_empty() || positions.len() != noises.len() || positions.len() != biases.len() {
            return Err(Error::Contract(
                "profile arrays must be non-empty and equally long".into(),
            ));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("breakpoints must be strictly ascending".into()));
        }
        if noises.iter().any(|&n| !(n >= 0.0)) {
            return Err(Error::Contract("noise levels must be non-negative".into()));
        }
        Ok(Self {
            positions,
            noises,
            biases,
        })
    }

    /// The default profile with its breakpoints mapped linearly from the
    /// reference width onto `[0, width]`.
    pub fn scaled_to(width: f32) -> Self {
        let mut p = Self::default();
        let k = width / REFERENCE_WIDTH;
        p.positions.iter_mut().for_each(|x| *x *= k);
        p
    }

    /// Index of the last breakpoint at or below `x`; positions below the
    /// first breakpoint fall into bucket 0.
    pub fn bucket(&self, x: f32) -> usize {
        self.positions.iter().rposition(|&p| p <= x).unwrap_or(0)
    }

    pub fn noise_and_bias(&self, x: f32) -> (f32, f32) {
        let b = self.bucket(x);
        (self.noises[b], self.biases[b])
    }
}

/// Applies the variant's corruption at position `x` and clips to `[-1, 1]`.
/// The clean variant draws no random numbers.
pub fn corrupt_action<R: Rng + ?Sized>(
    action: [f32; 2],
    x: f32,
    profile: &CorruptionProfile,
    variant: Variant,
    rng: &mut R,
) -> [f32; 2] {
    let mut a = action;
    if variant != Variant::Clean {
        let (noise, bias) = profile.noise_and_bias(x);
        let shift = if variant == Variant::Biased { bias } else { 0.0 };
        for v in a.iter_mut() {
            let z: f32 = rng.sample(StandardNormal);
            *v += z * noise - shift;
        }
    }
    a.map(|v| v.clamp(-1.0, 1.0))
}
