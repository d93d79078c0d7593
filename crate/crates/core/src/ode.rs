//! Classical fixed-step fourth-order Runge-Kutta.

use nalgebra::{allocator::Allocator, DefaultAllocator, DimName, OMatrix};
use num_complex::Complex64;

/// State vector of an ODE integrated by [`rk4_step`].
pub trait OdeState: Sized {
    /// `self + a * x`
    fn axpy(&self, a: f64, x: &Self) -> Self;
}

impl<R: DimName, C: DimName> OdeState for OMatrix<Complex64, R, C>
where
    DefaultAllocator: Allocator<R, C>,
{
    #[inline]
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self + x * Complex64::new(a, 0.0)
    }
}

impl OdeState for Complex64 {
    #[inline]
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self + x * a
    }
}

/// One RK4 step of `y' = f(t, y)`. The closure may fail (e.g. on an internal
/// consistency check), which aborts the step.
#[inline]
pub fn rk4_step<S, E, F>(y: &S, t: f64, dt: f64, mut f: F) -> Result<S, E>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, E>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &y.axpy(half, &k1))?;
    let k3 = f(t + half, &y.axpy(half, &k2))?;
    let k4 = f(t + dt, &y.axpy(dt, &k3))?;
    Ok(y.axpy(dt / 6.0, &k1).axpy(dt / 3.0, &k2).axpy(dt / 3.0, &k3).axpy(dt / 6.0, &k4))
}

/// Number of whole steps of size `dt` covering `[0, t_max]`.
pub fn step_count(t_max: f64, dt: f64) -> usize {
    (t_max / dt).round() as usize
}
