//! Three-level NV-center spin dynamics under concatenated continuous
//! decoupling drives.
//!
//! * [`unitary`]: closed-system propagation by block decomposition of `U(t)`.
//! * [`lindblad`]: open-system master equation with relaxation between `|0>` and `|-1>`.
//! * [`noise`] and [`ensemble`]: Ornstein-Uhlenbeck fluctuations averaged over realizations.
//! * [`twolevel`]: two-level reference model of the decoupling scheme.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drive;
pub mod ensemble;
pub mod error;
pub mod hamiltonian;
pub mod lindblad;
pub mod noise;
pub mod ode;
pub mod presets;
pub mod qutrit;
pub mod twolevel;
pub mod unitary;

pub use drive::{Branch, BranchDrive, DriveConfig, DriveOrder, DriveWarning};
pub use ensemble::{run_ensemble, EnsembleConfig, EnsembleResult};
pub use error::{Error, Result};
pub use hamiltonian::{Fluctuations, NVParams};
pub use lindblad::{LindbladOptions, LindbladParams, LindbladTrajectory, NoiseDrivers};
pub use noise::{NoiseSpec, OUProcess, SourceId};
pub use presets::{Figure, Mode, Preset};
pub use qutrit::{ComplexMatrix3, ComplexVector3, DensityMatrix, QutritState};
pub use twolevel::{ProtectionSuite, TwoLevelParams};
pub use unitary::{Backend, UnitaryOptions, UnitarySample};
