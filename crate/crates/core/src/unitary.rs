//! Closed-system propagation by block decomposition of the 3x3 evolution
//! operator.
//!
//! The propagator is factored as `U = U1~ U2~` with
//!
//! ```text
//! U1~ = [ I  z ] [ I   0 ]      U2~ = [ U~(2)  0     ]
//!       [ 0  1 ] [ w^† 1 ]            [ 0      U~(1) ]
//! ```
//!
//! `z` obeys a matrix Riccati equation chosen so that the effective
//! Hamiltonian driving `U2~` stays block diagonal; `w = -z / (1 + z^† z)`
//! follows from unitarity of `U`. A Hermitian square-root gauge turns both
//! factors into unitaries without changing their product.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{Fluctuations, NVParams};
use crate::ode::{rk4_step, step_count, OdeState};
use crate::qutrit::{populations, re, unitarity_residual, ComplexMatrix3, ComplexVector3, QutritState, I};

pub type ComplexVector2 = Vector2<Complex64>;
pub type ComplexMatrix2 = Matrix2<Complex64>;

/// Default bound on `|z|` before the integration is aborted.
pub const DEFAULT_BLOWUP_GUARD: f64 = 1e6;
/// Largest tolerated off-diagonal-block entry of the effective Hamiltonian.
pub const OFF_BLOCK_TOL: f64 = 1e-6;
/// Largest `dt * |generator|` taken in one RK4 substep of the block backend.
pub const MAX_SUBSTEP_PHASE: f64 = 0.01;
const MAX_SUBSTEPS: usize = 1 << 16;

/// The Riccati variable `z` and the derived `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZWPair {
    pub z: ComplexVector2,
    pub w: ComplexVector2,
}

impl ZWPair {
    pub fn from_z(z: ComplexVector2) -> Self {
        Self { z, w: w_from_z(&z) }
    }

    pub fn zero() -> Self {
        Self::from_z(ComplexVector2::zeros())
    }
}

/// `H = [[H2, V], [V^†, H1]]` with `H2` 2x2, `V` a column and `H1` scalar.
#[derive(Debug, Clone, Copy)]
struct Blocks {
    h2: ComplexMatrix2,
    v: ComplexVector2,
    h1: Complex64,
}

impl Blocks {
    #[inline]
    fn of(h: &ComplexMatrix3) -> Self {
        Self { h2: h.fixed_view::<2, 2>(0, 0).into_owned(), v: h.fixed_view::<2, 1>(0, 2).into_owned(), h1: h[(2, 2)] }
    }
}

/// `dz/dt = -i [H2 z + V - z (V^† z + H1)]`.
pub fn z_rhs(z: &ComplexVector2, h: &ComplexMatrix3) -> ComplexVector2 {
    let b = Blocks::of(h);
    let vz = b.v.dotc(z);
    (b.h2 * z + b.v - z * (vz + b.h1)) * (-I)
}

/// `w = -z / (1 + z^† z)`.
pub fn w_from_z(z: &ComplexVector2) -> ComplexVector2 {
    z * re(-1.0 / (1.0 + z.norm_squared()))
}

/// Time derivative of `w` given `z` and `dz/dt`.
pub fn w_dot(z: &ComplexVector2, zdot: &ComplexVector2) -> ComplexVector2 {
    let s = 1.0 + z.norm_squared();
    let sdot = 2.0 * z.dotc(zdot).re;
    zdot * re(-1.0 / s) + z * re(sdot / (s * s))
}

/// The unit-triangular factor `U1~`.
pub fn triangular_factor(zw: &ZWPair) -> ComplexMatrix3 {
    let (z, w) = (&zw.z, &zw.w);
    let mut u = ComplexMatrix3::identity();
    let top = ComplexMatrix2::identity() + z * w.adjoint();
    u.fixed_view_mut::<2, 2>(0, 0).copy_from(&top);
    u.fixed_view_mut::<2, 1>(0, 2).copy_from(z);
    u.fixed_view_mut::<1, 2>(2, 0).copy_from(&w.adjoint());
    u
}

/// Closed-form inverse `[[I, 0], [-w^†, 1]] [[I, -z], [0, 1]]`.
pub fn triangular_factor_inverse(zw: &ZWPair) -> ComplexMatrix3 {
    let (z, w) = (&zw.z, &zw.w);
    let mut u = ComplexMatrix3::identity();
    u.fixed_view_mut::<2, 1>(0, 2).copy_from(&(-z));
    u.fixed_view_mut::<1, 2>(2, 0).copy_from(&(-w.adjoint()));
    u[(2, 2)] = re(1.0) + w.dotc(z);
    u
}

fn triangular_factor_derivative(zw: &ZWPair, zdot: &ComplexVector2, wdot: &ComplexVector2) -> ComplexMatrix3 {
    let mut d = ComplexMatrix3::zeros();
    let top = zdot * zw.w.adjoint() + zw.z * wdot.adjoint();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&top);
    d.fixed_view_mut::<2, 1>(0, 2).copy_from(zdot);
    d.fixed_view_mut::<1, 2>(2, 0).copy_from(&wdot.adjoint());
    d
}

/// Effective Hamiltonian `U1~^-1 H U1~ - i U1~^-1 dU1~/dt` together with the
/// size of its off-diagonal blocks, which vanish when `z` follows [`z_rhs`].
#[derive(Debug, Clone, Copy)]
pub struct EffectiveHamiltonian {
    pub matrix: ComplexMatrix3,
    pub off_block_residue: f64,
}

impl EffectiveHamiltonian {
    /// Block-diagonal part (2 + 1); fails if the discarded blocks exceed
    /// [`OFF_BLOCK_TOL`].
    pub fn block_diagonal(&self, t: f64) -> Result<ComplexMatrix3> {
        if !(self.off_block_residue <= OFF_BLOCK_TOL) {
            return Err(Error::IntegrationConsistency { t, residue: self.off_block_residue });
        }
        Ok(block_diagonal_part(&self.matrix))
    }
}

fn block_diagonal_part(m: &ComplexMatrix3) -> ComplexMatrix3 {
    let mut out = *m;
    for (r, c) in OFF_BLOCK {
        out[(r, c)] = re(0.0);
    }
    out
}

const OFF_BLOCK: [(usize, usize); 4] = [(0, 2), (1, 2), (2, 0), (2, 1)];

pub fn effective_hamiltonian(
    z: &ComplexVector2,
    w: &ComplexVector2,
    zdot: &ComplexVector2,
    h: &ComplexMatrix3,
) -> EffectiveHamiltonian {
    let zw = ZWPair { z: *z, w: *w };
    let wdot = w_dot(z, zdot);
    let inv = triangular_factor_inverse(&zw);
    let d = triangular_factor_derivative(&zw, zdot, &wdot);
    let matrix = inv * h * triangular_factor(&zw) - inv * d * I;
    let off_block_residue = OFF_BLOCK.iter().fold(0.0, |acc: f64, &(r, c)| acc.max(matrix[(r, c)].norm()));
    EffectiveHamiltonian { matrix, off_block_residue }
}

/// Hermitian gauge blocks `(g1, g2)` with `g1 = sqrt(I + z z^†)` and
/// `g2 = (1 + z^† z)^(-1/2)`, so that `U1~ diag(g1, g2)` is unitary.
pub fn gauge(z: &ComplexVector2) -> (ComplexMatrix2, f64) {
    let root = (1.0 + z.norm_squared()).sqrt();
    // sqrt(I + z z^†) = I + z z^† / (1 + r), r = sqrt(1 + |z|^2)
    (ComplexMatrix2::identity() + z * z.adjoint() * re(1.0 / (1.0 + root)), 1.0 / root)
}

fn gauge_matrix(z: &ComplexVector2) -> ComplexMatrix3 {
    let (g1, g2) = gauge(z);
    let mut g = ComplexMatrix3::zeros();
    g.fixed_view_mut::<2, 2>(0, 0).copy_from(&g1);
    g[(2, 2)] = re(g2);
    g
}

fn gauge_inverse(z: &ComplexVector2) -> ComplexMatrix3 {
    let root = (1.0 + z.norm_squared()).sqrt();
    let mut g = ComplexMatrix3::zeros();
    let g1_inv = ComplexMatrix2::identity() - z * z.adjoint() * re(1.0 / (root * (1.0 + root)));
    g.fixed_view_mut::<2, 2>(0, 0).copy_from(&g1_inv);
    g[(2, 2)] = re(root);
    g
}

fn gauge_derivative(z: &ComplexVector2, zdot: &ComplexVector2) -> ComplexMatrix3 {
    let root = (1.0 + z.norm_squared()).sqrt();
    let rdot = z.dotc(zdot).re / root;
    let a = 1.0 + root;
    let g1dot = (zdot * z.adjoint() + z * zdot.adjoint()) * re(1.0 / a) - z * z.adjoint() * re(rdot / (a * a));
    let mut d = ComplexMatrix3::zeros();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&g1dot);
    d[(2, 2)] = re(-rdot / (root * root));
    d
}

/// Unitary triangular factor `U1 = U1~ diag(g1, g2)`.
pub fn unitary_triangular_factor(z: &ComplexVector2) -> ComplexMatrix3 {
    triangular_factor(&ZWPair::from_z(*z)) * gauge_matrix(z)
}

/// Generator `U1^† H U1 - i U1^† dU1/dt` of the unitary block factor `U2`.
/// It is Hermitian and block diagonal when `z` follows [`z_rhs`]; the
/// residue reports the size of its off-diagonal blocks.
pub fn gauged_generator(z: &ComplexVector2, zdot: &ComplexVector2, h: &ComplexMatrix3) -> EffectiveHamiltonian {
    let zw = ZWPair::from_z(*z);
    let wdot = w_dot(z, zdot);
    let g = gauge_matrix(z);
    let u1 = triangular_factor(&zw) * g;
    let u1dot = triangular_factor_derivative(&zw, zdot, &wdot) * g + triangular_factor(&zw) * gauge_derivative(z, zdot);
    let u1_adj = u1.adjoint();
    let matrix = u1_adj * h * u1 - u1_adj * u1dot * I;
    let off_block_residue = OFF_BLOCK.iter().fold(0.0, |acc: f64, &(r, c)| acc.max(matrix[(r, c)].norm()));
    EffectiveHamiltonian { matrix, off_block_residue }
}

/// Gauge-transformed unitary factors `(U1, U2)` with `U1 U2 = U1~ U2~`.
pub fn unitary_factors(zw: &ZWPair, u2_tilde: &ComplexMatrix3) -> (ComplexMatrix3, ComplexMatrix3) {
    (triangular_factor(zw) * gauge_matrix(&zw.z), gauge_inverse(&zw.z) * u2_tilde)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Riccati flow for `z` plus block-diagonal `U2~`.
    #[default]
    BlockDecomposition,
    /// RK4 on `i dU/dt = H U` directly.
    Direct,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block-decomposition" | "block" | "riccati" => Ok(Backend::BlockDecomposition),
            "direct" => Ok(Backend::Direct),
            other => Err(crate::error::config_err(format!("unknown backend `{other}`"))),
        }
    }
}

/// Full integration state of the block-decomposition backend.
///
/// The block factor is carried in the unitary gauge, `U = U1 U2`, so its
/// entries stay bounded however large `z` grows.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorState {
    pub zw: ZWPair,
    /// Block-diagonal unitary `U2`; entries (1,3), (2,3), (3,1), (3,2) stay exactly zero.
    pub u2: ComplexMatrix3,
    pub t: f64,
}

impl PropagatorState {
    pub fn initial() -> Self {
        Self { zw: ZWPair::zero(), u2: ComplexMatrix3::identity(), t: 0.0 }
    }

    /// `U(t) = U1 U2`.
    pub fn propagator(&self) -> ComplexMatrix3 {
        unitary_triangular_factor(&self.zw.z) * self.u2
    }

    /// `(U1, U2)`.
    pub fn unitary_factors(&self) -> (ComplexMatrix3, ComplexMatrix3) {
        (unitary_triangular_factor(&self.zw.z), self.u2)
    }

    /// Non-unitary block factor `U2~ = diag(g1, g2) U2`.
    pub fn triangular_block_factor(&self) -> ComplexMatrix3 {
        gauge_matrix(&self.zw.z) * self.u2
    }

    /// Advances by `dt`. Near a Riccati spike the generator grows like `|z|`;
    /// the step is then split into equal RK4 substeps so that each one turns
    /// by at most [`MAX_SUBSTEP_PHASE`]. The split depends only on the state,
    /// so runs stay reproducible.
    pub fn step<H>(&self, hamiltonian: &H, dt: f64) -> Result<Self>
    where
        H: Fn(f64) -> ComplexMatrix3,
    {
        let h = hamiltonian(self.t);
        let z = self.zw.z;
        let zdot = z_rhs(&z, &h);
        let k = gauged_generator(&z, &zdot, &h).matrix;
        let rate = k.norm().max(zdot.norm() / (1.0 + z.norm()));
        let substeps = ((dt * rate / MAX_SUBSTEP_PHASE).ceil() as usize).clamp(1, MAX_SUBSTEPS);
        let sub = dt / substeps as f64;
        let mut y = JointState { z, u2: self.u2 };
        for j in 0..substeps {
            let t = self.t + j as f64 * sub;
            y = rk4_step(&y, t, sub, |t, y: &JointState| joint_rhs(t, y, hamiltonian))?;
        }
        Ok(Self { zw: ZWPair::from_z(y.z), u2: y.u2, t: self.t + dt })
    }
}

#[derive(Debug, Clone, Copy)]
struct JointState {
    z: ComplexVector2,
    u2: ComplexMatrix3,
}

impl OdeState for JointState {
    #[inline]
    fn axpy(&self, a: f64, x: &Self) -> Self {
        Self { z: self.z.axpy(a, &x.z), u2: self.u2.axpy(a, &x.u2) }
    }
}

#[inline]
fn joint_rhs<H>(t: f64, y: &JointState, hamiltonian: &H) -> Result<JointState>
where
    H: Fn(f64) -> ComplexMatrix3,
{
    let h = hamiltonian(t);
    let zdot = z_rhs(&y.z, &h);
    let k = gauged_generator(&y.z, &zdot, &h).block_diagonal(t)?;
    Ok(JointState { z: zdot, u2: k * y.u2 * (-I) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitaryOptions {
    pub backend: Backend,
    pub t_max: f64,
    pub dt: f64,
    /// Emit a sample every this many steps (plus the initial one).
    pub sample_every: usize,
    pub blowup_guard: f64,
}

impl Default for UnitaryOptions {
    fn default() -> Self {
        Self {
            backend: Backend::BlockDecomposition,
            t_max: 50.0,
            dt: 1e-3,
            sample_every: 100,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitarySample {
    pub t: f64,
    pub psi: QutritState,
    pub populations: [f64; 3],
    /// `| |psi|^2 - 1 |`
    pub norm_drift: f64,
    /// `max |U^† U - 1|`
    pub unitarity_residual: f64,
}

/// Propagates `psi0` under the NV Hamiltonian.
pub fn propagate_unitary(params: &NVParams, psi0: &QutritState, opts: &UnitaryOptions) -> Result<Vec<UnitarySample>> {
    propagate_hamiltonian(|t| params.hamiltonian(t, Fluctuations::NONE), psi0, opts)
}

/// Propagates `psi0` under an arbitrary Hermitian `H(t)`.
pub fn propagate_hamiltonian<H>(hamiltonian: H, psi0: &QutritState, opts: &UnitaryOptions) -> Result<Vec<UnitarySample>>
where
    H: Fn(f64) -> ComplexMatrix3,
{
    if !(opts.dt > 0.0) || !(opts.t_max >= 0.0) {
        return Err(crate::error::config_err("dt must be > 0 and t_max >= 0"));
    }
    let sample_every = opts.sample_every.max(1);
    let n = step_count(opts.t_max, opts.dt);
    let mut out = Vec::with_capacity(n / sample_every + 2);
    let record = |out: &mut Vec<UnitarySample>, t: f64, u: &ComplexMatrix3| {
        let amplitudes: ComplexVector3 = u * psi0.amplitudes();
        let psi = QutritState::from_raw(amplitudes);
        out.push(UnitarySample {
            t,
            psi,
            populations: populations(&psi),
            norm_drift: (psi.norm_sqr() - 1.0).abs(),
            unitarity_residual: unitarity_residual(u),
        });
    };

    match opts.backend {
        Backend::BlockDecomposition => {
            let mut state = PropagatorState::initial();
            record(&mut out, 0.0, &state.propagator());
            for k in 1..=n {
                state = state.step(&hamiltonian, opts.dt)?;
                state.t = k as f64 * opts.dt;
                let norm = state.zw.z.norm();
                if !(norm <= opts.blowup_guard) {
                    return Err(Error::RiccatiBlowup { t: state.t, norm, guard: opts.blowup_guard });
                }
                if k % sample_every == 0 || k == n {
                    record(&mut out, state.t, &state.propagator());
                }
            }
        }
        Backend::Direct => {
            let mut u = ComplexMatrix3::identity();
            record(&mut out, 0.0, &u);
            for k in 1..=n {
                let t0 = (k - 1) as f64 * opts.dt;
                u = rk4_step(&u, t0, opts.dt, |t, u: &ComplexMatrix3| Ok::<_, Error>(hamiltonian(t) * u * (-I)))?;
                if k % sample_every == 0 || k == n {
                    record(&mut out, k as f64 * opts.dt, &u);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{BranchDrive, DriveConfig, DriveOrder};
    use crate::qutrit::{c, hermitian_eigenvalues, hermitian_propagator, max_abs};
    use proptest::prelude::*;

    fn fig2(order: DriveOrder) -> NVParams {
        NVParams::new(-1.0, DriveConfig::symmetric(order, BranchDrive::halving(0.15, 0.9)))
    }

    fn hermitian_from(a: [f64; 9]) -> ComplexMatrix3 {
        #[rustfmt::skip]
        let h = ComplexMatrix3::new(
            re(a[0]), c(a[3], a[4]), c(a[5], a[6]),
            c(a[3], -a[4]), re(a[1]), c(a[7], a[8]),
            c(a[5], -a[6]), c(a[7], -a[8]), re(a[2]),
        );
        h
    }

    #[test]
    fn z_rhs_fixed_point_when_undriven() {
        let h = ComplexMatrix3::from_diagonal(&nalgebra::Vector3::new(re(0.0), re(1.0), re(1.0)));
        assert_eq!(z_rhs(&ComplexVector2::zeros(), &h), ComplexVector2::zeros());
    }

    #[test]
    fn z_rhs_fig2_origin() {
        let h = fig2(DriveOrder::First).hamiltonian(0.0, Fluctuations::NONE);
        let zdot = z_rhs(&ComplexVector2::zeros(), &h);
        assert!((zdot[0] - c(0.0, -0.45)).norm() < 1e-15);
        assert!(zdot[1].norm() < 1e-15);
    }

    #[test]
    fn w_from_z_examples() {
        let check = |z: ComplexVector2, expect: ComplexVector2| {
            let zw = ZWPair::from_z(z);
            assert!((zw.w - expect).norm() < 1e-15);
            let u = triangular_factor(&zw);
            let gram = u.adjoint() * u;
            for (r, col) in OFF_BLOCK {
                assert!(gram[(r, col)].norm() < 1e-15);
            }
        };
        check(ComplexVector2::zeros(), ComplexVector2::zeros());
        check(ComplexVector2::new(re(1.0), re(0.0)), ComplexVector2::new(re(-0.5), re(0.0)));
        check(ComplexVector2::new(c(0.0, 1.0), re(1.0)), ComplexVector2::new(c(0.0, -1.0 / 3.0), re(-1.0 / 3.0)));
    }

    #[test]
    fn effective_hamiltonian_drive_off() {
        let p = NVParams { drive: fig2(DriveOrder::Off).drive, delta_plus: 0.7 };
        let h = p.hamiltonian(1.0, Fluctuations::NONE);
        let z = ComplexVector2::zeros();
        let heff = effective_hamiltonian(&z, &z, &z_rhs(&z, &h), &h);
        let expect = ComplexMatrix3::from_diagonal(&nalgebra::Vector3::new(re(0.0), re(-0.7), re(-0.7)));
        assert!(max_abs(&(heff.matrix - expect)) < 1e-15);
    }

    #[test]
    fn effective_hamiltonian_fig2_origin() {
        let h = fig2(DriveOrder::First).hamiltonian(0.0, Fluctuations::NONE);
        let z = ComplexVector2::zeros();
        let zdot = z_rhs(&z, &h);
        let heff = effective_hamiltonian(&z, &w_from_z(&z), &zdot, &h);
        assert!(heff.off_block_residue < 1e-15);
        let m = heff.block_diagonal(0.0).unwrap();
        assert!((m[(0, 0)] - re(0.0)).norm() < 1e-15);
        assert!((m[(0, 1)] - re(0.45)).norm() < 1e-15);
        assert!((m[(1, 0)] - re(0.45)).norm() < 1e-15);
        assert!((m[(1, 1)] - re(1.0)).norm() < 1e-15);
        assert!((m[(2, 2)] - re(1.0)).norm() < 1e-15);
    }

    #[test]
    fn off_block_residue_is_reported() {
        // arbitrary zdot that is not the Riccati flow
        let h = fig2(DriveOrder::First).hamiltonian(0.0, Fluctuations::NONE);
        let z = ComplexVector2::new(re(0.3), re(0.1));
        let heff = effective_hamiltonian(&z, &w_from_z(&z), &ComplexVector2::zeros(), &h);
        assert!(matches!(heff.block_diagonal(2.0), Err(Error::IntegrationConsistency { .. })));
    }

    #[test]
    fn gauge_makes_factors_unitary() {
        let zw = ZWPair::from_z(ComplexVector2::new(c(0.7, -1.2), c(-0.4, 2.0)));
        let (u1, _) = unitary_factors(&zw, &ComplexMatrix3::identity());
        assert!(unitarity_residual(&u1) < 1e-13);
        let (g1, g2) = gauge(&zw.z);
        let gamma1 = ComplexMatrix2::identity() + zw.z * zw.z.adjoint();
        assert!((g1 * g1 - gamma1).norm() < 1e-13);
        assert!((g2 * g2 * (1.0 + zw.z.norm_squared()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn undriven_populations_constant() {
        let p = fig2(DriveOrder::Off);
        let opts = UnitaryOptions { t_max: 20.0, ..Default::default() };
        for s in propagate_unitary(&p, &QutritState::ground(), &opts).unwrap() {
            assert!((s.populations[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blowup_guard_trips() {
        let p = fig2(DriveOrder::Constant);
        let opts = UnitaryOptions { t_max: 20.0, blowup_guard: 0.5, ..Default::default() };
        let err = propagate_unitary(&p, &QutritState::ground(), &opts).unwrap_err();
        assert!(matches!(err, Error::RiccatiBlowup { t, .. } if t > 0.0 && t < 20.0));
    }

    #[test]
    fn eigenvector_fixed_point_gives_similar_heff() {
        let h = hermitian_from([0.3, -0.8, 0.5, 0.4, -0.2, 0.6, 0.1, -0.3, 0.7]);
        let eig = h.symmetric_eigen();
        let spectrum = hermitian_eigenvalues(&h);
        for k in 0..3 {
            let v = eig.eigenvectors.column(k);
            if v[2].norm() < 1e-3 {
                continue;
            }
            let z = ComplexVector2::new(v[0] / v[2], v[1] / v[2]);
            let zdot = z_rhs(&z, &h);
            assert!(zdot.norm() < 1e-12, "eigenvector ratio is a Riccati fixed point");
            let heff = effective_hamiltonian(&z, &w_from_z(&z), &zdot, &h);
            assert!(heff.off_block_residue < 1e-12);
            let block = heff.matrix.fixed_view::<2, 2>(0, 0).into_owned();
            let ev = block.eigenvalues().expect("2x2 eigenvalues");
            let mut got = vec![ev[0].re, ev[1].re, heff.matrix[(2, 2)].re];
            got.sort_by(f64::total_cmp);
            for (a, b) in got.iter().zip(spectrum.iter()) {
                assert!((a - b).abs() < 1e-10, "{got:?} vs {spectrum:?}");
            }
            assert!((heff.matrix[(2, 2)].re - eig.eigenvalues[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn riccati_matches_exact_exponential_z() {
        let h = hermitian_from([0.2, 0.9, -0.4, 0.3, 0.1, -0.5, 0.2, 0.35, -0.15]);
        let mut state = PropagatorState::initial();
        let dt = 1e-3;
        for k in 1..=3000 {
            state = state.step(&|_| h, dt).unwrap();
            state.t = k as f64 * dt;
        }
        let u = hermitian_propagator(&h, state.t);
        let z_exact = ComplexVector2::new(u[(0, 2)] / u[(2, 2)], u[(1, 2)] / u[(2, 2)]);
        assert!((state.zw.z - z_exact).norm() < 1e-8, "{} vs {}", state.zw.z, z_exact);
    }

    #[test]
    fn gauged_generator_is_hermitian_block_diagonal() {
        let h = hermitian_from([0.3, -0.7, 1.1, 0.4, -0.2, 0.9, 0.5, -0.6, 0.25]);
        for z in [
            ComplexVector2::zeros(),
            ComplexVector2::new(c(0.3, -0.1), c(-0.2, 0.4)),
            ComplexVector2::new(c(250.0, 80.0), c(-120.0, 300.0)),
        ] {
            let zdot = z_rhs(&z, &h);
            let k = gauged_generator(&z, &zdot, &h);
            assert!(k.off_block_residue < 1e-9 * (1.0 + z.norm()), "{}", k.off_block_residue);
            assert!(max_abs(&(k.matrix - k.matrix.adjoint())) < 1e-9 * (1.0 + z.norm()));
            // same spectrum information as the ungauged effective Hamiltonian
            let heff = effective_hamiltonian(&z, &w_from_z(&z), &zdot, &h).matrix;
            let g = gauge_matrix(&z);
            let gdot = gauge_derivative(&z, &zdot);
            let expect = gauge_inverse(&z) * heff * g - gauge_inverse(&z) * gdot * I;
            assert!(max_abs(&(k.matrix - expect)) < 1e-8 * (1.0 + z.norm_squared()));
        }
    }

    #[test]
    fn block_factor_stays_unitary_at_large_z() {
        // The fig4 constant drive drives |z| into the hundreds.
        let nv = NVParams::new(
            0.9,
            DriveConfig {
                order: DriveOrder::Constant,
                plus: BranchDrive::halving(1.0, 1.0),
                minus: BranchDrive::halving(0.35, 0.8),
            },
        );
        let mut state = PropagatorState::initial();
        let mut max_z: f64 = 0.0;
        for _ in 0..50_000 {
            state = state.step(&|t| nv.hamiltonian(t, Fluctuations::NONE), 1e-3).unwrap();
            max_z = max_z.max(state.zw.z.norm());
            assert!(unitarity_residual(&state.propagator()) < 1e-7, "t = {}", state.t);
        }
        assert!(max_z > 100.0, "max |z| = {max_z}");
        let (u1, u2) = state.unitary_factors();
        assert!(unitarity_residual(&u1) < 1e-10);
        assert!(max_abs(&(u1 * u2 - triangular_factor(&state.zw) * state.triangular_block_factor())) < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn w_relation_and_gauge_unitarity(a in prop::array::uniform4(-5.0f64..5.0)) {
            let z = ComplexVector2::new(c(a[0], a[1]), c(a[2], a[3]));
            let zw = ZWPair::from_z(z);
            // z = -(I + z z^†) w
            let back = -(ComplexMatrix2::identity() + z * z.adjoint()) * zw.w;
            prop_assert!((back - z).norm() < 1e-10);
            let (u1, _) = unitary_factors(&zw, &ComplexMatrix3::identity());
            prop_assert!(unitarity_residual(&u1) < 1e-10);
            let inv = triangular_factor_inverse(&zw);
            prop_assert!(max_abs(&(inv * triangular_factor(&zw) - ComplexMatrix3::identity())) < 1e-10);
        }
    }
}
