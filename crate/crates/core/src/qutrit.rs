//! Fixed-size three-level state and operator algebra, plus the coherence
//! observables (level populations, purity, base-3 entropy).
//!
//! Basis ordering is `|0>, |-1>, |+1>`, referred to as levels 1, 2, 3.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix3 = Matrix3<Complex64>;
pub type ComplexVector3 = Vector3<Complex64>;

/// Tolerance on `|Tr rho - 1|` and on Hermiticity for validated density matrices.
pub const TRACE_TOL: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Eigenvalues in `[-POSITIVITY_FLOOR, 0)` are treated as integrator noise and
/// clamped to zero; anything lower is an error.
pub const POSITIVITY_FLOOR: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-9;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entry modulus of `m - m^dagger`.
pub fn hermiticity_residual(m: &ComplexMatrix3) -> f64 {
    (m - m.adjoint()).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `u^dagger u - 1`.
pub fn unitarity_residual(u: &ComplexMatrix3) -> f64 {
    (u.adjoint() * u - ComplexMatrix3::identity()).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs(m: &ComplexMatrix3) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Real eigenvalues of a Hermitian 3x3 matrix, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix3) -> [f64; 3] {
    let ev = m.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// `exp(-i H t)` for Hermitian `H`, via eigendecomposition.
pub fn hermitian_propagator(h: &ComplexMatrix3, t: f64) -> ComplexMatrix3 {
    let eig = (*h).symmetric_eigen();
    let v = eig.eigenvectors;
    let phases =
        ComplexMatrix3::from_diagonal(&Vector3::from_iterator(eig.eigenvalues.iter().map(|&l| (-I * l * t).exp())));
    v * phases * v.adjoint()
}

/// Pure qutrit state with amplitudes `(C1, C2, C3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutritState(ComplexVector3);

impl QutritState {
    /// Wraps amplitudes that are already normalized.
    pub fn new(amplitudes: ComplexVector3) -> Result<Self> {
        let norm_sqr = amplitudes.norm_squared();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self(amplitudes))
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(amplitudes: ComplexVector3) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized { norm_sqr: n * n });
        }
        Ok(Self(amplitudes / re(n)))
    }

    /// Propagated amplitudes; normalization is checked by the caller against
    /// its own drift budget.
    pub(crate) fn from_raw(amplitudes: ComplexVector3) -> Self {
        Self(amplitudes)
    }

    pub fn basis(level: usize) -> Self {
        assert!(level < 3, "qutrit level index out of range");
        let mut v = ComplexVector3::zeros();
        v[level] = re(1.0);
        Self(v)
    }

    pub fn ground() -> Self {
        Self::basis(0)
    }

    pub fn amplitudes(&self) -> &ComplexVector3 {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn projector(&self) -> ComplexMatrix3 {
        self.0 * self.0.adjoint()
    }
}

/// Hermitian, unit-trace 3x3 density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix(ComplexMatrix3);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix3) -> Result<Self> {
        let residual = hermiticity_residual(&m);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        let trace = m.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceDeviation { trace, tol: TRACE_TOL });
        }
        Ok(Self(m))
    }

    /// Skips validation. Integrators use this and enforce their own,
    /// looser drift budget.
    pub fn from_raw(m: ComplexMatrix3) -> Self {
        Self(m)
    }

    pub fn pure(psi: &QutritState) -> Self {
        Self(psi.projector())
    }

    pub fn diagonal(p: [f64; 3]) -> Result<Self> {
        Self::new(ComplexMatrix3::from_diagonal(&Vector3::new(re(p[0]), re(p[1]), re(p[2]))))
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMatrix3::identity() / re(3.0))
    }

    pub fn matrix(&self) -> &ComplexMatrix3 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.0)
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        hermitian_eigenvalues(&self.0)
    }

    /// Diagonal entries.
    pub fn populations(&self) -> [f64; 3] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re]
    }
}

/// `Tr(rho^2)`. Equals 1 for pure states and 1/3 for the maximally mixed state.
pub fn purity(rho: &DensityMatrix) -> Result<f64> {
    let trace = rho.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::TraceDeviation { trace, tol: TRACE_TOL });
    }
    // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    Ok(rho.matrix().iter().map(|z| z.norm_sqr()).sum())
}

/// Base-3 von Neumann entropy `-sum l log3 l` over the eigenvalues of rho.
pub fn entropy(rho: &DensityMatrix) -> Result<f64> {
    let trace = rho.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::TraceDeviation { trace, tol: TRACE_TOL });
    }
    let eigenvalues = rho.eigenvalues();
    if eigenvalues[0] < -POSITIVITY_FLOOR {
        return Err(Error::PositivityViolation { eigenvalue: eigenvalues[0] });
    }
    Ok(entropy_of_spectrum(&eigenvalues))
}

/// Base-3 entropy from eigenvalues, clamping negatives to zero.
pub(crate) fn entropy_of_spectrum(eigenvalues: &[f64; 3]) -> f64 {
    let ln3 = 3f64.ln();
    let s: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln() / ln3).sum();
    s.max(0.0)
}

/// `(|C1|^2, |C2|^2, |C3|^2)`.
pub fn populations(psi: &QutritState) -> [f64; 3] {
    let a = psi.amplitudes();
    [a[0].norm_sqr(), a[1].norm_sqr(), a[2].norm_sqr()]
}
