//! Named parameter sets `fig2` to `fig8`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::drive::{BranchDrive, DriveConfig, DriveOrder};
use crate::error::{config_err, Error};
use crate::hamiltonian::NVParams;
use crate::noise::{NoiseSpec, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Fig7, Figure::Fig8];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| config_err(format!("unknown figure '{s}' (expected fig2..fig8)")))
    }
}

/// Which solver a figure needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    Lindblad,
    Ensemble,
    #[serde(rename = "oracle-2lvl")]
    TwoLevelOracle,
}

/// Drive of the fig2, fig3 and fig5 presets: `omega_+- = 0.15`, `Omega^(1) = 0.9`.
pub fn population_drive(order: DriveOrder) -> DriveConfig {
    DriveConfig::symmetric(order, BranchDrive::halving(0.15, 0.9))
}

/// Drive of the fig4 and fig6 to fig8 presets: `omega_+ = 1`, `omega_- = 0.35`,
/// `Omega_+^(1) = 1`, `Omega_-^(1) = 0.8`.
pub fn purity_drive(order: DriveOrder) -> DriveConfig {
    DriveConfig { order, plus: BranchDrive::halving(1.0, 1.0), minus: BranchDrive::halving(0.35, 0.8) }
}

/// One curve of a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub nv: NVParams,
    pub gamma: f64,
    pub bath: NoiseSpec,
    pub microwave: NoiseSpec,
}

/// Full parameter set of a figure; [`Preset::variants`] expands the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub figure: Option<Figure>,
    pub mode: Mode,
    pub nv: NVParams,
    pub gamma: f64,
    pub bath: NoiseSpec,
    pub microwave: NoiseSpec,
    pub realizations: usize,
    pub t_max: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Drive orders compared in the figure.
    pub orders: Vec<DriveOrder>,
    /// Relaxation rates compared in the figure.
    pub gammas: Vec<f64>,
    /// Bath intensities of the inset (highest drive order only).
    pub inset_bath_intensities: Vec<f64>,
}

impl Preset {
    pub fn new(figure: Figure) -> Self {
        let none = NoiseSpec::off();
        let base = |mode, nv, gamma, t_max, orders: &[DriveOrder]| Preset {
            figure: Some(figure),
            mode,
            nv,
            gamma,
            bath: none,
            microwave: none,
            realizations: 1,
            t_max,
            dt: 1e-3,
            sample_every: 100,
            orders: orders.to_vec(),
            gammas: Vec::new(),
            inset_bath_intensities: Vec::new(),
        };
        use DriveOrder::*;
        match figure {
            Figure::Fig2 => {
                base(Mode::Evolve, NVParams::new(-1.0, population_drive(First)), 0.0, 50.0, &[Constant, First, Second])
            }
            Figure::Fig3 => {
                base(Mode::Evolve, NVParams::new(-1.0, population_drive(First)), 0.0, 200.0, &[First, Second])
            }
            Figure::Fig4 | Figure::Fig6 => base(
                Mode::Lindblad,
                NVParams::new(0.9, purity_drive(Second)),
                0.05,
                10.0,
                &[Off, Constant, First, Second, Third],
            ),
            Figure::Fig5 => Preset {
                gammas: vec![0.05, 0.1, 0.5],
                ..base(Mode::Lindblad, NVParams::new(-1.0, population_drive(Second)), 0.05, 20.0, &[Second])
            },
            Figure::Fig7 | Figure::Fig8 => Preset {
                bath: NoiseSpec::new(0.25, DEFAULT_TAU),
                microwave: NoiseSpec::new(0.001, DEFAULT_TAU),
                realizations: 1000,
                inset_bath_intensities: vec![0.05, 0.25, 0.5],
                ..base(Mode::Ensemble, NVParams::new(0.9, purity_drive(Second)), 0.05, 10.0, &[Constant, First, Second])
            },
        }
    }

    /// Labelled curves: one per order, then one per extra relaxation rate,
    /// then one per inset intensity.
    pub fn variants(&self) -> Vec<(String, Variant)> {
        let base = Variant { nv: self.nv, gamma: self.gamma, bath: self.bath, microwave: self.microwave };
        let with_order =
            |o: DriveOrder| Variant { nv: NVParams { drive: self.nv.drive.with_order(o), ..self.nv }, ..base };
        let mut out = Vec::new();
        if self.gammas.is_empty() {
            out.extend(self.orders.iter().map(|&o| (o.label().to_string(), with_order(o))));
        } else {
            for &o in &self.orders {
                for &g in &self.gammas {
                    let label =
                        if self.orders.len() > 1 { format!("{}-gamma{g}", o.label()) } else { format!("gamma{g}") };
                    out.push((label, Variant { gamma: g, ..with_order(o) }));
                }
            }
        }
        if let Some(&top) = self.orders.last() {
            for &i in &self.inset_bath_intensities {
                let v = Variant { bath: NoiseSpec::new(i, self.bath.tau), ..with_order(top) };
                out.push((format!("{}-bath{i}", top.label()), v));
            }
        }
        out
    }
}
