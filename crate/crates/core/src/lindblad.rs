//! Open-system evolution under
//!
//! ```text
//! d rho/dt = -i [H, rho] - 1/2 (L^† L rho + rho L^† L - 2 L rho L^†)
//! ```
//!
//! with the single collapse operator `L = sqrt(Gamma) lambda_1`, the Gell-Mann
//! matrix coupling levels 1 and 2. The density matrix is carried as the
//! row-major 9-vector `(rho11, rho12, rho13, rho21, ..., rho33)`.
//!
//! [`lindblad_rhs`] is the hand-expanded component form used by the
//! integrator; [`lindblad_rhs_matrix`] builds the same derivative from
//! matrix products and serves as its reference.

use nalgebra::SVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::hamiltonian::{Fluctuations, NVParams};
use crate::noise::OUProcess;
use crate::ode::{rk4_step, step_count};
use crate::qutrit::{
    entropy_of_spectrum, hermitian_eigenvalues, hermiticity_residual, re, ComplexMatrix3, DensityMatrix, I,
};

/// Trace drift that aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;
/// Eigenvalues below this raise a positivity warning.
pub const POSITIVITY_WARN: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladParams {
    pub nv: NVParams,
    /// Relaxation rate `Gamma >= 0`.
    pub gamma: f64,
}

impl LindbladParams {
    pub fn new(nv: NVParams, gamma: f64) -> Result<Self> {
        let p = Self { nv, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(config_err(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `sqrt(Gamma) lambda_1`.
    pub fn collapse_operator(&self) -> ComplexMatrix3 {
        let g = re(self.gamma.sqrt());
        let zero = re(0.0);
        ComplexMatrix3::new(zero, g, zero, g, zero, zero, zero, zero, zero)
    }
}

/// Row-major flattening of a 3x3 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiVector(pub SVector<Complex64, 9>);

impl XiVector {
    pub fn from_density(rho: &DensityMatrix) -> Self {
        Self::from_matrix(rho.matrix())
    }

    pub fn from_matrix(m: &ComplexMatrix3) -> Self {
        Self(SVector::from_fn(|k, _| m[(k / 3, k % 3)]))
    }

    pub fn to_matrix(&self) -> ComplexMatrix3 {
        ComplexMatrix3::from_fn(|r, c| self.0[3 * r + c])
    }

    /// `xi1 + xi5 + xi9`
    pub fn trace(&self) -> Complex64 {
        self.0[0] + self.0[4] + self.0[8]
    }

    /// Largest deviation from the conjugate pairs (2,4), (3,7), (6,8).
    pub fn conjugate_pair_residual(&self) -> f64 {
        [(1, 3), (2, 6), (5, 7)].iter().map(|&(a, b)| (self.0[a] - self.0[b].conj()).norm()).fold(0.0, f64::max)
    }
}

/// Component-form right-hand side. Bath noise enters as `Delta_+ -> Delta_+ - zeta`,
/// microwave noise through the drive amplitude.
#[inline]
pub fn lindblad_rhs(xi: &XiVector, params: &LindbladParams, t: f64, f: Fluctuations) -> XiVector {
    let (omega_plus, omega_minus, diag) = params.nv.coefficients(t, f);
    XiVector(component_rhs(&xi.0, 0.5 * omega_plus, 0.5 * omega_minus, -diag, params.gamma))
}

// a = Omega_+/2, b = Omega_-/2, d = Delta_+ - zeta (excited diagonal is -d).
#[inline]
fn component_rhs(x: &SVector<Complex64, 9>, a: f64, b: f64, d: f64, g: f64) -> SVector<Complex64, 9> {
    let [r11, r12, r13, r21, r22, r23, r31, r32, r33] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8]];
    let mi = -I;
    let h = 0.5 * g;
    // commutator [H, rho]
    let c11 = b * (r21 - r12) + a * (r31 - r13);
    let c12 = b * (r22 - r11) + a * r32 + d * r12;
    let c13 = a * (r33 - r11) + b * r23 + d * r13;
    let c21 = b * (r11 - r22) - a * r23 - d * r21;
    let c22 = b * (r12 - r21);
    let c23 = b * r13 - a * r21;
    let c31 = a * (r11 - r33) - b * r32 - d * r31;
    let c32 = a * r12 - b * r31;
    let c33 = a * (r13 - r31);
    SVector::<Complex64, 9>::from([
        mi * c11 + g * (r22 - r11),
        mi * c12 + g * (r21 - r12),
        mi * c13 - h * r13,
        mi * c21 + g * (r12 - r21),
        mi * c22 + g * (r11 - r22),
        mi * c23 - h * r23,
        mi * c31 - h * r31,
        mi * c32 - h * r32,
        mi * c33,
    ])
}

/// Matrix-form right-hand side.
pub fn lindblad_rhs_matrix(rho: &ComplexMatrix3, params: &LindbladParams, t: f64, f: Fluctuations) -> ComplexMatrix3 {
    let h = params.nv.hamiltonian(t, f);
    let l = params.collapse_operator();
    let ld = l.adjoint();
    let ldl = ld * l;
    (h * rho - rho * h) * (-I) - (ldl * rho + rho * ldl - l * rho * ld * re(2.0)) * re(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladOptions {
    pub t_max: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self { t_max: 10.0, dt: 1e-3, sample_every: 100 }
    }
}

impl LindbladOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || self.sample_every == 0 {
            return Err(config_err("need dt > 0, t_max >= 0 and sample_every >= 1"));
        }
        Ok(())
    }

    /// Sample times produced by a run with these options.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = step_count(self.t_max, self.dt);
        (0..=n).filter(|k| k % self.sample_every == 0 || *k == n).map(|k| k as f64 * self.dt).collect()
    }
}

/// Per-realization noise streams. Samples are held constant over each step.
#[derive(Debug, Clone, Default)]
pub struct NoiseDrivers {
    pub bath: Option<OUProcess>,
    pub microwave: Option<OUProcess>,
}

impl NoiseDrivers {
    pub fn none() -> Self {
        Self::default()
    }

    fn current(&self) -> Fluctuations {
        Fluctuations {
            detuning: self.bath.as_ref().map_or(0.0, OUProcess::current),
            amplitude: self.microwave.as_ref().map_or(0.0, OUProcess::current),
        }
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        if let Some(p) = self.bath.as_mut() {
            p.step(dt)?;
        }
        if let Some(p) = self.microwave.as_mut() {
            p.step(dt)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladSample {
    pub t: f64,
    pub rho: DensityMatrix,
    pub purity: f64,
    pub entropy: f64,
    pub trace_drift: f64,
    pub hermiticity_residual: f64,
    /// Noise values in effect at `t`.
    pub noise: Fluctuations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTrajectory {
    pub samples: Vec<LindbladSample>,
    /// Smallest density-matrix eigenvalue seen at any sample.
    pub worst_eigenvalue: f64,
    pub warnings: Vec<String>,
}

impl LindbladTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn purity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.purity).collect()
    }

    pub fn entropy(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.entropy).collect()
    }
}

/// RK4 integration of the master equation from `rho0`.
pub fn propagate_lindblad(
    params: &LindbladParams,
    rho0: &DensityMatrix,
    opts: &LindbladOptions,
    noise: &mut NoiseDrivers,
) -> Result<LindbladTrajectory> {
    params.validate()?;
    opts.validate()?;
    let n = step_count(opts.t_max, opts.dt);
    let mut traj = LindbladTrajectory {
        samples: Vec::with_capacity(n / opts.sample_every + 2),
        worst_eigenvalue: f64::INFINITY,
        warnings: Vec::new(),
    };
    let mut xi = XiVector::from_density(rho0);
    let mut f = noise.current();
    record(&mut traj, 0.0, &xi, f)?;
    for k in 1..=n {
        let t0 = (k - 1) as f64 * opts.dt;
        let next = rk4_step(&xi.0, t0, opts.dt, |t, y: &SVector<Complex64, 9>| {
            Ok::<_, Error>(lindblad_rhs(&XiVector(*y), params, t, f).0)
        })?;
        xi = XiVector(next);
        noise.advance(opts.dt)?;
        f = noise.current();
        if k % opts.sample_every == 0 || k == n {
            record(&mut traj, k as f64 * opts.dt, &xi, f)?;
        }
    }
    if traj.worst_eigenvalue < POSITIVITY_WARN {
        let msg = format!("positivity violated: worst eigenvalue {:e}", traj.worst_eigenvalue);
        log::warn!("{msg}");
        traj.warnings.push(msg);
    }
    Ok(traj)
}

fn record(traj: &mut LindbladTrajectory, t: f64, xi: &XiVector, noise: Fluctuations) -> Result<()> {
    let m = xi.to_matrix();
    let trace = m.trace();
    let trace_drift = (trace - re(1.0)).norm();
    if !(trace_drift <= TRACE_DRIFT_LIMIT) {
        return Err(Error::Integrator { t, reason: format!("trace drifted to {trace} (limit {TRACE_DRIFT_LIMIT:e})") });
    }
    let eigenvalues = hermitian_eigenvalues(&((m + m.adjoint()) * re(0.5)));
    traj.worst_eigenvalue = traj.worst_eigenvalue.min(eigenvalues[0]);
    traj.samples.push(LindbladSample {
        t,
        rho: DensityMatrix::from_raw(m),
        purity: m.iter().map(|z| z.norm_sqr()).sum(),
        entropy: entropy_of_spectrum(&eigenvalues),
        trace_drift,
        hermiticity_residual: hermiticity_residual(&m),
        noise,
    });
    Ok(())
}
