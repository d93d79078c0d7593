//! Two-level model of concatenated continuous decoupling, used to check the
//! protection mechanism independently of the three-level code.
//!
//! Lab frame:
//!
//! ```text
//! H(t) = (omega + zeta_b)/2 sz
//!      + [ Omega1 (1 + zeta_1) cos(omega t)
//!        + Omega2 (1 + zeta_2) cos(omega t + pi/2) cos(Omega1 t) ] sx
//! ```
//!
//! In the frame rotating with `omega/2 sz` the first-order dressed states
//! are the `sx` eigenstates; a second rotation with `Omega1/2 sx` makes the
//! `sy` eigenstates the second-order dressed states.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::noise::{derive_seed, NoiseSpec, OUProcess, SourceId};
use crate::ode::{rk4_step, step_count};
use crate::qutrit::{c, re, I};
use crate::unitary::{ComplexMatrix2, ComplexVector2};

/// Correlation time of the two-level noise sources.
pub const SUITE_TAU: f64 = 1000.0;

pub fn sigma_x() -> ComplexMatrix2 {
    ComplexMatrix2::new(re(0.0), re(1.0), re(1.0), re(0.0))
}

pub fn sigma_y() -> ComplexMatrix2 {
    ComplexMatrix2::new(re(0.0), -I, I, re(0.0))
}

pub fn sigma_z() -> ComplexMatrix2 {
    ComplexMatrix2::new(re(1.0), re(0.0), re(0.0), re(-1.0))
}

/// `exp(-i theta s)` for a Pauli matrix `s`.
pub fn pauli_rotation(theta: f64, s: &ComplexMatrix2) -> ComplexMatrix2 {
    ComplexMatrix2::identity() * re(theta.cos()) - s * (I * theta.sin())
}

/// Which drive terms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoLevelDrive {
    Off,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelParams {
    pub omega: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub drive: TwoLevelDrive,
}

impl TwoLevelParams {
    /// Frequencies for which the rotating-wave picture is accurate.
    pub fn rwa_regime(drive: TwoLevelDrive) -> Self {
        Self { omega: 1.0, omega1: 0.05, omega2: 0.01, drive }
    }

    /// Warns when `Omega2 << Omega1` (or `Omega1 << omega`) does not hold.
    pub fn validate(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.drive == TwoLevelDrive::Second && self.omega2 > 0.5 * self.omega1 {
            w.push(format!(
                "rotating wave approximation requires Omega2 << Omega1 (Omega2 = {}, Omega1 = {})",
                self.omega2, self.omega1
            ));
        }
        if self.drive != TwoLevelDrive::Off && self.omega1 > 0.5 * self.omega {
            w.push(format!(
                "rotating wave approximation requires Omega1 << omega (Omega1 = {}, omega = {})",
                self.omega1, self.omega
            ));
        }
        w
    }
}

/// Instantaneous `(zeta_b, zeta_1, zeta_2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwoLevelSamples {
    pub bath: f64,
    pub first: f64,
    pub second: f64,
}

pub fn lab_frame_hamiltonian(p: &TwoLevelParams, t: f64, z: TwoLevelSamples) -> ComplexMatrix2 {
    let first = || p.omega1 * (1.0 + z.first) * (p.omega * t).cos();
    let second = || p.omega2 * (1.0 + z.second) * (p.omega * t + FRAC_PI_2).cos() * (p.omega1 * t).cos();
    let x = match p.drive {
        TwoLevelDrive::Off => 0.0,
        TwoLevelDrive::First => first(),
        TwoLevelDrive::Second => first() + second(),
    };
    let e = 0.5 * (p.omega + z.bath);
    ComplexMatrix2::new(re(e), re(x), re(x), re(-e))
}

/// Rotating-wave Hamiltonian in the first (`order = 1`) or second (`order = 2`)
/// interaction picture.
pub fn rwa_effective_hamiltonian(p: &TwoLevelParams, order: u8, z: TwoLevelSamples) -> Result<ComplexMatrix2> {
    match order {
        1 => Ok(sigma_x() * re(0.5 * p.omega1 * (1.0 + z.first)) + sigma_z() * re(0.5 * z.bath)),
        2 => Ok(sigma_y() * re(0.5 * p.omega2 * (1.0 + z.second))
            + ComplexMatrix2::identity() * re(0.5 * p.omega1 * z.first)),
        _ => Err(config_err(format!("interaction picture order must be 1 or 2, got {order}"))),
    }
}

/// Probe state whose leakage is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DressedBasis {
    /// `|->_x = (|up> + |down>)/sqrt 2`
    X,
    /// `|->_y = (|up> + i|down>)/sqrt 2`
    Y,
}

impl DressedBasis {
    pub fn state(self) -> ComplexVector2 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            DressedBasis::X => ComplexVector2::new(re(s), re(s)),
            DressedBasis::Y => ComplexVector2::new(re(s), c(0.0, s)),
        }
    }
}

/// Noise sources; an off source never draws random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelNoise {
    pub bath: NoiseSpec,
    pub first: NoiseSpec,
    pub second: NoiseSpec,
}

impl TwoLevelNoise {
    pub fn off() -> Self {
        let off = NoiseSpec::new(0.0, SUITE_TAU);
        Self { bath: off, first: off, second: off }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageConfig {
    pub params: TwoLevelParams,
    pub noise: TwoLevelNoise,
    pub basis: DressedBasis,
    pub t_max: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl LeakageResult {
    /// Mean leakage averaged over all samples.
    pub fn time_average(&self) -> f64 {
        self.mean.iter().sum::<f64>() / self.mean.len() as f64
    }
}

/// Ideal dressed evolution `e^{-i omega t sz/2} e^{-i Omega1 t sx/2} |d>`.
fn reference(p: &TwoLevelParams, basis: DressedBasis, t: f64) -> ComplexVector2 {
    let rabi = if p.drive == TwoLevelDrive::Off { 0.0 } else { p.omega1 };
    pauli_rotation(0.5 * p.omega * t, &sigma_z()) * pauli_rotation(0.5 * rabi * t, &sigma_x()) * basis.state()
}

fn leakage_path(cfg: &LeakageConfig, index: usize) -> Result<Vec<f64>> {
    let seed = |s| derive_seed(cfg.master_seed, index as u64, s);
    let make = |spec: &NoiseSpec, s| -> Result<Option<OUProcess>> {
        (!spec.is_off()).then(|| spec.process(seed(s))).transpose()
    };
    let mut bath = make(&cfg.noise.bath, SourceId::TwoLevelBath)?;
    let mut first = make(&cfg.noise.first, SourceId::TwoLevelFirst)?;
    let mut second = make(&cfg.noise.second, SourceId::TwoLevelSecond)?;
    let value = |p: &Option<OUProcess>| p.as_ref().map_or(0.0, OUProcess::current);

    let n = step_count(cfg.t_max, cfg.dt);
    let psi0 = cfg.basis.state();
    let mut psi = psi0;
    let mut out = Vec::with_capacity(n / cfg.sample_every + 2);
    let leak = |t: f64, psi: &ComplexVector2| 1.0 - reference(&cfg.params, cfg.basis, t).dotc(psi).norm_sqr();
    out.push(leak(0.0, &psi));
    for k in 1..=n {
        let z = TwoLevelSamples { bath: value(&bath), first: value(&first), second: value(&second) };
        let t0 = (k - 1) as f64 * cfg.dt;
        psi = rk4_step(&psi, t0, cfg.dt, |t, y: &ComplexVector2| {
            Ok::<_, Error>(lab_frame_hamiltonian(&cfg.params, t, z) * y * (-I))
        })?;
        for p in [&mut bath, &mut first, &mut second].into_iter().flatten() {
            p.step(cfg.dt)?;
        }
        if k % cfg.sample_every == 0 || k == n {
            let drift = (psi.norm_squared() - 1.0).abs();
            if drift > 1e-6 {
                return Err(Error::Integrator { t: k as f64 * cfg.dt, reason: format!("norm drift {drift:e}") });
            }
            out.push(leak(k as f64 * cfg.dt, &psi));
        }
    }
    Ok(out)
}

/// Mean leakage `1 - |<ref(t)|psi(t)>|^2` out of the ideal dressed evolution,
/// averaged over noise realizations.
pub fn dressed_population_leakage(cfg: &LeakageConfig) -> Result<LeakageResult> {
    if !(cfg.dt > 0.0) || !(cfg.t_max >= 0.0) || cfg.sample_every == 0 || cfg.realizations == 0 {
        return Err(config_err("need dt > 0, t_max >= 0, sample_every >= 1 and realizations >= 1"));
    }
    for w in cfg.params.validate() {
        log::warn!("{w}");
    }
    let paths = (0..cfg.realizations)
        .into_par_iter()
        .map(|i| {
            leakage_path(cfg, i).map_err(|e| Error::Realization {
                index: i,
                seed: derive_seed(cfg.master_seed, i as u64, SourceId::TwoLevelBath),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = step_count(cfg.t_max, cfg.dt);
    let times: Vec<f64> = (0..=n).filter(|k| k % cfg.sample_every == 0 || *k == n).map(|k| k as f64 * cfg.dt).collect();
    let r = paths.len() as f64;
    let mean: Vec<f64> = (0..times.len()).map(|j| paths.iter().map(|p| p[j]).sum::<f64>() / r).collect();
    let std_err = (0..times.len())
        .map(|j| {
            if paths.len() < 2 {
                return 0.0;
            }
            let ss: f64 = paths.iter().map(|p| (p[j] - mean[j]).powi(2)).sum();
            (ss / (r - 1.0) / r).sqrt()
        })
        .collect();
    Ok(LeakageResult { times, mean, std_err })
}

/// Largest infidelity `1 - |tr(V^† U_I)|/2` between the first-interaction-picture
/// propagator `U_I = e^{i omega t sz/2} U(t)` and `V = e^{-i Omega1 t sx/2}` over
/// one Rabi period `2 pi / Omega1`, for noise-free first-order driving.
pub fn rwa_deviation(p: &TwoLevelParams, dt: f64) -> Result<f64> {
    if !(dt > 0.0) || !(p.omega1 > 0.0) {
        return Err(config_err("need dt > 0 and Omega1 > 0"));
    }
    let period = std::f64::consts::TAU / p.omega1;
    let n = step_count(period, dt);
    let params = TwoLevelParams { drive: TwoLevelDrive::First, ..*p };
    let mut u = ComplexMatrix2::identity();
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        let t0 = (k - 1) as f64 * dt;
        u = rk4_step(&u, t0, dt, |t, y: &ComplexMatrix2| {
            Ok::<_, Error>(lab_frame_hamiltonian(&params, t, TwoLevelSamples::default()) * y * (-I))
        })?;
        let t = k as f64 * dt;
        let ui = pauli_rotation(-0.5 * p.omega * t, &sigma_z()) * u;
        let overlap: Complex64 = (pauli_rotation(0.5 * p.omega1 * t, &sigma_x()).adjoint() * ui).trace();
        worst = worst.max(1.0 - 0.5 * overlap.norm());
    }
    Ok(worst)
}

/// Settings of the two protection checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectionSuite {
    pub realizations: usize,
    pub master_seed: u64,
    pub tau: f64,
    /// Bath intensity for the first-order check.
    pub bath_intensity: f64,
    /// First-drive amplitude noise intensity for the second-order check.
    pub first_intensity: f64,
}

impl Default for ProtectionSuite {
    fn default() -> Self {
        Self { realizations: 100, master_seed: 2024, tau: SUITE_TAU, bath_intensity: 0.25, first_intensity: 0.1 }
    }
}

/// Outcome of one driven-versus-reference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionCheck {
    pub name: &'static str,
    pub protected: LeakageResult,
    pub unprotected: LeakageResult,
    /// Unprotected over protected time-averaged leakage.
    pub ratio: f64,
    pub required_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionReport {
    pub bath: ProtectionCheck,
    pub drive: ProtectionCheck,
}

impl ProtectionReport {
    pub fn passed(&self) -> bool {
        self.bath.passed && self.drive.passed
    }
}

impl ProtectionSuite {
    /// First-order drive against bath noise: `|->_x` leakage with
    /// `Omega1 = 0.1 omega` versus the undriven transition probability.
    pub fn bath_configs(&self) -> (LeakageConfig, LeakageConfig) {
        let noise = TwoLevelNoise { bath: NoiseSpec::new(self.bath_intensity, self.tau), ..TwoLevelNoise::off() };
        let driven = LeakageConfig {
            params: TwoLevelParams { omega: 1.0, omega1: 0.1, omega2: 0.0, drive: TwoLevelDrive::First },
            noise,
            basis: DressedBasis::X,
            t_max: 500.0,
            dt: 0.02,
            sample_every: 50,
            realizations: self.realizations,
            master_seed: self.master_seed,
        };
        let undriven =
            LeakageConfig { params: TwoLevelParams { drive: TwoLevelDrive::Off, ..driven.params }, ..driven };
        (driven, undriven)
    }

    /// Second-order drive against first-drive amplitude noise, paired seeds.
    pub fn drive_configs(&self) -> (LeakageConfig, LeakageConfig) {
        let noise = TwoLevelNoise { first: NoiseSpec::new(self.first_intensity, self.tau), ..TwoLevelNoise::off() };
        let second = LeakageConfig {
            params: TwoLevelParams::rwa_regime(TwoLevelDrive::Second),
            noise,
            basis: DressedBasis::Y,
            t_max: 2000.0,
            dt: 0.05,
            sample_every: 20,
            realizations: self.realizations,
            master_seed: self.master_seed,
        };
        let first = LeakageConfig { params: TwoLevelParams::rwa_regime(TwoLevelDrive::First), ..second };
        (second, first)
    }

    pub fn run(&self) -> Result<ProtectionReport> {
        let check = |name, (p, u): (LeakageConfig, LeakageConfig), required: f64| -> Result<ProtectionCheck> {
            let protected = dressed_population_leakage(&p)?;
            let unprotected = dressed_population_leakage(&u)?;
            let ratio = unprotected.time_average() / protected.time_average();
            Ok(ProtectionCheck {
                name,
                protected,
                unprotected,
                ratio,
                required_ratio: required,
                passed: ratio > required,
            })
        };
        Ok(ProtectionReport {
            bath: check("bath noise, first-order drive vs none", self.bath_configs(), 2.0)?,
            drive: check("drive noise, second-order vs first-order drive", self.drive_configs(), 1.0)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(m: &ComplexMatrix2) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lab_frame_examples() {
        let p = TwoLevelParams { omega: 1.0, omega1: 0.1, omega2: 0.02, drive: TwoLevelDrive::Second };
        let h = lab_frame_hamiltonian(&p, 0.0, TwoLevelSamples::default());
        let expect = sigma_z() * re(0.5) + sigma_x() * re(0.1);
        assert!(max_abs(&(h - expect)) < 1e-15);

        let off = TwoLevelParams { drive: TwoLevelDrive::Off, ..p };
        let h = lab_frame_hamiltonian(&off, 3.0, TwoLevelSamples { bath: 0.1, ..Default::default() });
        assert!(max_abs(&(h - sigma_z() * re(0.55))) < 1e-15);

        // cos(omega t + pi/2) = -1 at t = pi/(2 omega)
        let t = FRAC_PI_2;
        let only_second = TwoLevelParams { omega1: 0.0, ..p };
        let h = lab_frame_hamiltonian(&only_second, t, TwoLevelSamples::default());
        assert!((h[(0, 1)] - re(-0.02)).norm() < 1e-15);
    }

    #[test]
    fn rwa_examples() {
        let p = TwoLevelParams::rwa_regime(TwoLevelDrive::Second);
        let h1 = rwa_effective_hamiltonian(&p, 1, TwoLevelSamples::default()).unwrap();
        assert!(max_abs(&(h1 - sigma_x() * re(0.025))) < 1e-15);
        let h2 = rwa_effective_hamiltonian(&p, 2, TwoLevelSamples::default()).unwrap();
        assert!(max_abs(&(h2 - sigma_y() * re(0.005))) < 1e-15);
        let h2n = rwa_effective_hamiltonian(&p, 2, TwoLevelSamples { first: 0.1, ..Default::default() }).unwrap();
        assert!(max_abs(&(h2n - h2 - ComplexMatrix2::identity() * re(0.0025))) < 1e-15);
        assert!(rwa_effective_hamiltonian(&p, 3, TwoLevelSamples::default()).is_err());
    }

    #[test]
    fn dressed_states_are_eigenvectors() {
        let vx = DressedBasis::X.state();
        assert!((sigma_x() * vx - vx).norm() < 1e-15);
        let vy = DressedBasis::Y.state();
        assert!((sigma_y() * vy - vy).norm() < 1e-15);
    }

    #[test]
    fn rwa_valid_for_weak_drive() {
        let p = TwoLevelParams { omega: 1.0, omega1: 0.05, omega2: 0.0, drive: TwoLevelDrive::First };
        let d = rwa_deviation(&p, 0.02).unwrap();
        assert!(d < 0.02, "deviation {d}");
        // a strong drive breaks the approximation
        let strong = TwoLevelParams { omega1: 0.8, ..p };
        assert!(rwa_deviation(&strong, 0.02).unwrap() > 0.02);
    }

    #[test]
    fn noise_free_leakage_vanishes_deep_in_rwa_regime() {
        let cfg = LeakageConfig {
            params: TwoLevelParams { omega: 1.0, omega1: 1e-3, omega2: 0.0, drive: TwoLevelDrive::First },
            noise: TwoLevelNoise::off(),
            basis: DressedBasis::X,
            t_max: 50.0,
            dt: 0.01,
            sample_every: 10,
            realizations: 1,
            master_seed: 0,
        };
        let r = dressed_population_leakage(&cfg).unwrap();
        let worst = r.mean.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn leakage_is_seed_deterministic() {
        let (mut a, _) = ProtectionSuite::default().bath_configs();
        a.realizations = 4;
        a.t_max = 20.0;
        let x = dressed_population_leakage(&a).unwrap();
        let y = dressed_population_leakage(&a).unwrap();
        assert_eq!(x, y);
        a.master_seed += 1;
        assert_ne!(dressed_population_leakage(&a).unwrap().mean, x.mean);
    }

    #[test]
    fn hierarchy_warning() {
        let p = TwoLevelParams { omega: 1.0, omega1: 0.05, omega2: 0.05, drive: TwoLevelDrive::Second };
        assert!(p.validate().iter().any(|w| w.contains("Omega2 << Omega1")));
        assert!(TwoLevelParams::rwa_regime(TwoLevelDrive::Second).validate().is_empty());
    }

    proptest! {
        #[test]
        fn hamiltonians_are_hermitian(
            t in 0.0f64..1e3, zb in -1.0f64..1.0, z1 in -1.0f64..1.0, z2 in -1.0f64..1.0,
            o1 in 0.0f64..0.5, o2 in 0.0f64..0.1,
        ) {
            let p = TwoLevelParams { omega: 1.0, omega1: o1, omega2: o2, drive: TwoLevelDrive::Second };
            let z = TwoLevelSamples { bath: zb, first: z1, second: z2 };
            let hs = [
                lab_frame_hamiltonian(&p, t, z),
                rwa_effective_hamiltonian(&p, 1, z).unwrap(),
                rwa_effective_hamiltonian(&p, 2, z).unwrap(),
            ];
            for h in hs {
                prop_assert_eq!(h, h.adjoint());
            }
        }
    }
}
