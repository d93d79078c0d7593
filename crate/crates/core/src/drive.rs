//! Concatenated continuous decoupling drive amplitudes `Omega_+-(t)`.
//!
//! Orders build on each other:
//!
//! ```text
//! I   : A1 cos(w t)
//! II  : I  + 2 A2 cos(w t + pi/2) cos(A1 t)
//! III : II + 2 A3 cos(w t) cos(A2 t)
//! ```
//!
//! The third-order carrier carries no quadrature phase.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriveOrder {
    /// Drive switched off.
    #[serde(rename = "none", alias = "off")]
    Off,
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "order1", alias = "first")]
    First,
    #[serde(rename = "order2", alias = "second")]
    Second,
    #[serde(rename = "order3", alias = "third")]
    Third,
}

impl DriveOrder {
    pub fn label(self) -> &'static str {
        match self {
            DriveOrder::Off => "none",
            DriveOrder::Constant => "constant",
            DriveOrder::First => "order1",
            DriveOrder::Second => "order2",
            DriveOrder::Third => "order3",
        }
    }

    fn oscillating(self) -> bool {
        matches!(self, DriveOrder::First | DriveOrder::Second | DriveOrder::Third)
    }
}

impl fmt::Display for DriveOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DriveOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" | "0" => Ok(DriveOrder::Off),
            "constant" | "const" | "c" => Ok(DriveOrder::Constant),
            "first" | "1" | "i" | "order1" => Ok(DriveOrder::First),
            "second" | "2" | "ii" | "order2" => Ok(DriveOrder::Second),
            "third" | "3" | "iii" | "order3" => Ok(DriveOrder::Third),
            other => Err(config_err(format!("unknown drive order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        })
    }
}

/// Parameters of one microwave field (the `|0> <-> |+1>` or `|0> <-> |-1>` line).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDrive {
    /// Carrier frequency.
    pub carrier: f64,
    pub amp1: f64,
    pub amp2: f64,
    pub amp3: f64,
    /// Amplitude used when the order is [`DriveOrder::Constant`].
    pub constant: f64,
}

impl BranchDrive {
    /// Amplitudes halve from one order to the next; the constant drive uses `amp1`.
    pub fn halving(carrier: f64, amp1: f64) -> Self {
        Self { carrier, amp1, amp2: amp1 / 2.0, amp3: amp1 / 4.0, constant: amp1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub order: DriveOrder,
    pub plus: BranchDrive,
    pub minus: BranchDrive,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self { order: DriveOrder::Second, plus: BranchDrive::halving(1.0, 1.0), minus: BranchDrive::halving(0.35, 0.8) }
    }
}

impl DriveConfig {
    pub fn symmetric(order: DriveOrder, branch: BranchDrive) -> Self {
        Self { order, plus: branch, minus: branch }
    }

    pub fn with_order(mut self, order: DriveOrder) -> Self {
        self.order = order;
        self
    }

    pub fn branch(&self, branch: Branch) -> &BranchDrive {
        match branch {
            Branch::Plus => &self.plus,
            Branch::Minus => &self.minus,
        }
    }

    /// `Omega_branch(t)`; `noise` is the microwave amplitude fluctuation
    /// `zeta_1`, which scales only the standalone first-order term (or the
    /// constant amplitude). The `cos(A1 t)` envelope of the second-order term
    /// stays at its nominal frequency.
    pub fn amplitude(&self, branch: Branch, t: f64, noise: Option<f64>) -> f64 {
        let b = self.branch(branch);
        let scale = 1.0 + noise.unwrap_or(0.0);
        let first = || scale * b.amp1 * (b.carrier * t).cos();
        let second = || 2.0 * b.amp2 * (b.carrier * t + FRAC_PI_2).cos() * (b.amp1 * t).cos();
        let third = || 2.0 * b.amp3 * (b.carrier * t).cos() * (b.amp2 * t).cos();
        match self.order {
            DriveOrder::Off => 0.0,
            DriveOrder::Constant => scale * b.constant,
            DriveOrder::First => first(),
            DriveOrder::Second => first() + second(),
            DriveOrder::Third => first() + second() + third(),
        }
    }

    /// Both branches at once: `(Omega_+, Omega_-)`.
    pub fn amplitudes(&self, t: f64, noise: Option<f64>) -> (f64, f64) {
        (self.amplitude(Branch::Plus, t, noise), self.amplitude(Branch::Minus, t, noise))
    }

    /// Never rejects a configuration; only reports suspicious settings.
    pub fn validate(&self) -> Vec<DriveWarning> {
        let mut warnings = Vec::new();
        for branch in [Branch::Plus, Branch::Minus] {
            let b = self.branch(branch);
            for (name, value) in [("amp1", b.amp1), ("amp2", b.amp2), ("amp3", b.amp3), ("constant", b.constant)] {
                if value < 0.0 {
                    warnings.push(DriveWarning::NegativeAmplitude { branch, field: name, value });
                }
            }
            if b.amp2 > b.amp1 || b.amp3 > b.amp2 {
                warnings.push(DriveWarning::RwaHierarchy { branch, amp1: b.amp1, amp2: b.amp2, amp3: b.amp3 });
            }
            if self.order.oscillating() && b.carrier == 0.0 {
                warnings.push(DriveWarning::ZeroFrequency { branch });
            }
        }
        warnings
    }
}

/// Free-function form of [`DriveConfig::amplitude`].
pub fn drive_amplitude(cfg: &DriveConfig, branch: Branch, t: f64, noise: Option<f64>) -> f64 {
    cfg.amplitude(branch, t, noise)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriveWarning {
    RwaHierarchy { branch: Branch, amp1: f64, amp2: f64, amp3: f64 },
    ZeroFrequency { branch: Branch },
    NegativeAmplitude { branch: Branch, field: &'static str, value: f64 },
}

impl fmt::Display for DriveWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriveWarning::RwaHierarchy { branch, amp1, amp2, amp3 } => write!(
                f,
                "RWA hierarchy violated on {branch} branch: need amp3 <= amp2 <= amp1, got {amp3} / {amp2} / {amp1}"
            ),
            DriveWarning::ZeroFrequency { branch } => {
                write!(f, "zero carrier frequency on {branch} branch")
            }
            DriveWarning::NegativeAmplitude { branch, field, value } => {
                write!(f, "negative amplitude {field} = {value} on {branch} branch")
            }
        }
    }
}
