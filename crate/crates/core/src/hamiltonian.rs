//! The driven NV Hamiltonian in the `|0>, |-1>, |+1>` basis:
//!
//! ```text
//! [ 0        Om-/2       Om+/2     ]
//! [ Om-/2   -D+ + zeta   0         ]
//! [ Om+/2    0          -D+ + zeta ]
//! ```
//!
//! Energies are in units of the zero-field splitting, time in its inverse.

use serde::{Deserialize, Serialize};

use crate::drive::DriveConfig;
use crate::qutrit::{re, ComplexMatrix3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NVParams {
    /// Detuning shared by both excited levels; may be negative.
    pub delta_plus: f64,
    pub drive: DriveConfig,
}

/// Instantaneous noise samples: bath detuning `zeta` and microwave
/// amplitude fluctuation `zeta_1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Fluctuations {
    pub detuning: f64,
    pub amplitude: f64,
}

impl Fluctuations {
    pub const NONE: Fluctuations = Fluctuations { detuning: 0.0, amplitude: 0.0 };
}

impl NVParams {
    pub fn new(delta_plus: f64, drive: DriveConfig) -> Self {
        Self { delta_plus, drive }
    }

    /// `(Omega_+(t), Omega_-(t), -Delta_+ + zeta)`.
    #[inline]
    pub fn coefficients(&self, t: f64, f: Fluctuations) -> (f64, f64, f64) {
        let noise = (f.amplitude != 0.0).then_some(f.amplitude);
        let (plus, minus) = self.drive.amplitudes(t, noise);
        (plus, minus, -self.delta_plus + f.detuning)
    }

    pub fn hamiltonian(&self, t: f64, f: Fluctuations) -> ComplexMatrix3 {
        let (plus, minus, diag) = self.coefficients(t, f);
        let (p, m) = (re(plus / 2.0), re(minus / 2.0));
        let zero = re(0.0);
        ComplexMatrix3::new(
            zero,
            m,
            p, //
            m,
            re(diag),
            zero, //
            p,
            zero,
            re(diag),
        )
    }
}

/// `H(t)` with optional bath detuning `zeta`.
pub fn hamiltonian_at(params: &NVParams, t: f64, zeta: Option<f64>) -> ComplexMatrix3 {
    params.hamiltonian(t, Fluctuations { detuning: zeta.unwrap_or(0.0), amplitude: 0.0 })
}
