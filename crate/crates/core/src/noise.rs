//! Ornstein-Uhlenbeck noise with exact discretization:
//!
//! ```text
//! zeta(t + dt) = zeta(t) e^{-dt/tau} + sqrt(c tau / 2 (1 - e^{-2 dt/tau})) n
//! ```
//!
//! with `n ~ N(0, 1)`, `zeta(0) = 0`, stationary variance `sigma^2 = c tau / 2`
//! and intensity `I_n = sigma^2 tau`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Default correlation time for the three-level noise sources.
pub const DEFAULT_TAU: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct OUProcess {
    tau: f64,
    diffusion: f64,
    current: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl OUProcess {
    pub fn new(tau: f64, diffusion: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(config_err(format!("OU relaxation time must be > 0, got {tau}")));
        }
        if !(diffusion >= 0.0) || !diffusion.is_finite() {
            return Err(config_err(format!("OU diffusion constant must be >= 0, got {diffusion}")));
        }
        Ok(Self { tau, diffusion, current: 0.0, seed, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Process with `I_n = sigma^2 tau`, i.e. `c = 2 I_n / tau^2`.
    pub fn from_intensity(intensity: f64, tau: f64, seed: u64) -> Result<Self> {
        if !(intensity >= 0.0) {
            return Err(config_err(format!("noise intensity must be >= 0, got {intensity}")));
        }
        if !(tau > 0.0) {
            return Err(config_err(format!("OU relaxation time must be > 0, got {tau}")));
        }
        Self::new(tau, 2.0 * intensity / (tau * tau), seed)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Stationary variance `c tau / 2`.
    pub fn sigma2(&self) -> f64 {
        0.5 * self.diffusion * self.tau
    }

    pub fn intensity(&self) -> f64 {
        self.sigma2() * self.tau
    }

    /// Advances by `dt` and returns the new sample.
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(config_err(format!("OU step must be > 0, got {dt}")));
        }
        let decay = (-dt / self.tau).exp();
        let spread = (self.sigma2() * (1.0 - decay * decay)).sqrt();
        let n: f64 = if spread > 0.0 { StandardNormal.sample(&mut self.rng) } else { 0.0 };
        self.current = self.current * decay + spread * n;
        Ok(self.current)
    }
}

/// Free-function form of [`OUProcess::step`].
pub fn ou_step(p: &mut OUProcess, dt: f64) -> Result<f64> {
    p.step(dt)
}

/// Identifies a noise stream within one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum SourceId {
    Bath = 1,
    Microwave = 2,
    TwoLevelBath = 3,
    TwoLevelFirst = 4,
    TwoLevelSecond = 5,
}

/// Deterministic per-stream seed from `(master, realization, source)`.
///
/// Each component is folded in through the SplitMix64 finalizer so nearby
/// indices give unrelated seeds.
pub fn derive_seed(master: u64, realization: u64, source: SourceId) -> u64 {
    let mut h = splitmix(master);
    h = splitmix(h ^ realization.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix(h ^ (source as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serializable description of one noise source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// `I_n = sigma^2 tau`
    pub intensity: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl NoiseSpec {
    pub fn new(intensity: f64, tau: f64) -> Self {
        Self { intensity, tau }
    }

    pub fn off() -> Self {
        Self { intensity: 0.0, tau: DEFAULT_TAU }
    }

    pub fn is_off(&self) -> bool {
        self.intensity == 0.0
    }

    pub fn process(&self, seed: u64) -> Result<OUProcess> {
        OUProcess::from_intensity(self.intensity, self.tau, seed)
    }
}
