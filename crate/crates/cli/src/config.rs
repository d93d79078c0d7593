//! Run configuration: JSON file schema, command-line overrides and the
//! fully resolved form stored in manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use nvccd::presets::Variant;
use nvccd::{Backend, DriveConfig, DriveOrder, Figure, Mode, NVParams, NoiseSpec, Preset, ProtectionSuite};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SAMPLE_EVERY: usize = 100;
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub delta_plus: Option<f64>,
    pub drive: Option<DriveConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladSection {
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub bath: Option<NoiseSpec>,
    pub microwave: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub realizations: Option<usize>,
    pub average_rho_first: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub backend: Option<Backend>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub sample_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub orders: Option<Vec<DriveOrder>>,
    pub gammas: Option<Vec<f64>>,
    pub inset_bath_intensities: Option<Vec<f64>>,
}

/// Contents of a `--config` file. Every field is optional; sections mirror
/// the library modules.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub figure: Option<Figure>,
    #[serde(default)]
    pub hamiltonian: HamiltonianSection,
    #[serde(default)]
    pub lindblad: LindbladSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub integration: IntegrationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub master_seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub noise_traces: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl FileConfig {
    /// Parses JSON, reporting the key path of the first bad field.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config key `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command-line values; they take precedence over the file and the preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub figure: Option<Figure>,
    pub orders: Vec<DriveOrder>,
    pub gammas: Vec<f64>,
    pub delta_plus: Option<f64>,
    pub backend: Option<Backend>,
    pub average_rho_first: bool,
    pub realizations: Option<usize>,
    pub master_seed: Option<u64>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub sample_every: Option<usize>,
    pub output: Option<PathBuf>,
    pub noise_traces: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Everything a run needs. Serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub figure: Option<Figure>,
    pub backend: Backend,
    pub nv: NVParams,
    pub gamma: f64,
    pub bath: NoiseSpec,
    pub microwave: NoiseSpec,
    pub realizations: usize,
    pub average_rho_first: bool,
    pub t_max: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub orders: Vec<DriveOrder>,
    pub gammas: Vec<f64>,
    pub inset_bath_intensities: Vec<f64>,
    pub master_seed: u64,
}

/// Where results go and how many threads compute them; not part of the
/// reproducible configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Destinations {
    pub output: Option<PathBuf>,
    pub noise_traces: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Evolve => "evolve",
        Mode::Lindblad => "lindblad",
        Mode::Ensemble => "ensemble",
        Mode::TwoLevelOracle => "oracle-2lvl",
    }
}

fn agree_on_mode(flag: Option<Mode>, file: Option<Mode>, preset: Option<&Preset>) -> anyhow::Result<Option<Mode>> {
    let mut chosen: Option<(Mode, String)> = None;
    let candidates = [
        flag.map(|m| (m, "command line".to_string())),
        file.map(|m| (m, "config file".to_string())),
        preset.map(|p| (p.mode, format!("figure {}", p.figure.map_or("?", Figure::name)))),
    ];
    for (m, source) in candidates.into_iter().flatten() {
        match &chosen {
            Some((c, from)) if *c != m => {
                bail!("mode `{}` from {source} conflicts with mode `{}` from {from}", mode_name(m), mode_name(*c))
            }
            Some(_) => {}
            None => chosen = Some((m, source)),
        }
    }
    Ok(chosen.map(|(m, _)| m))
}

/// Merges preset, file and flags (later wins) and validates the result.
pub fn resolve(file: FileConfig, flags: Overrides) -> anyhow::Result<(RunConfig, Destinations)> {
    let figure = flags.figure.or(file.figure);
    let preset = figure.map(Preset::new);
    let mode = agree_on_mode(flags.mode, file.mode, preset.as_ref())?;
    let p = preset.as_ref();

    let delta_plus = flags.delta_plus.or(file.hamiltonian.delta_plus).or(p.map(|p| p.nv.delta_plus));
    let drive = file.hamiltonian.drive.or(p.map(|p| p.nv.drive));
    let gamma_file = file.lindblad.gamma.or(p.map(|p| p.gamma));
    let t_max = flags.t_max.or(file.integration.t_max).or(p.map(|p| p.t_max));
    let realizations = flags.realizations.or(file.ensemble.realizations).or(p.map(|p| p.realizations));

    let needs_gamma = matches!(mode, Some(Mode::Lindblad | Mode::Ensemble));
    let mut missing = Vec::new();
    if mode.is_none() {
        missing.push("mode");
    }
    if mode != Some(Mode::TwoLevelOracle) {
        if delta_plus.is_none() {
            missing.push("hamiltonian.delta_plus");
        }
        if drive.is_none() {
            missing.push("hamiltonian.drive");
        }
        if t_max.is_none() {
            missing.push("integration.t_max");
        }
    }
    if needs_gamma && gamma_file.is_none() && flags.gammas.is_empty() {
        missing.push("lindblad.gamma");
    }
    if mode == Some(Mode::Ensemble) && realizations.is_none() {
        missing.push("ensemble.realizations");
    }
    if !missing.is_empty() {
        let mut msg = format!("missing required fields: {}", missing.join(", "));
        if mode.is_none() {
            msg.push_str(" (plus lindblad.gamma for lindblad/ensemble and ensemble.realizations for ensemble)");
        }
        bail!(msg);
    }
    let mode = mode.expect("checked above");

    let mut drive = drive.unwrap_or_default();
    let mut orders = file.sweep.orders.or(p.map(|p| p.orders.clone())).unwrap_or_default();
    let mut gammas = file.sweep.gammas.or(p.map(|p| p.gammas.clone())).unwrap_or_default();
    let mut inset =
        file.sweep.inset_bath_intensities.or(p.map(|p| p.inset_bath_intensities.clone())).unwrap_or_default();
    let mut gamma = gamma_file.unwrap_or(0.0);
    if !flags.orders.is_empty() {
        orders = flags.orders.clone();
        inset.clear();
    }
    if let [g] = flags.gammas[..] {
        gamma = g;
        gammas.clear();
        inset.clear();
    } else if !flags.gammas.is_empty() {
        gamma = flags.gammas[0];
        gammas = flags.gammas.clone();
        inset.clear();
    }
    if orders.is_empty() {
        orders.push(drive.order);
    }
    if let [o] = orders[..] {
        drive.order = o;
    }

    let default_realizations = if mode == Mode::TwoLevelOracle { ProtectionSuite::default().realizations } else { 1 };
    let cfg = RunConfig {
        mode,
        figure,
        backend: flags.backend.or(file.integration.backend).unwrap_or_default(),
        nv: NVParams::new(delta_plus.unwrap_or(0.0), drive),
        gamma,
        bath: file.noise.bath.or(p.map(|p| p.bath)).unwrap_or_else(NoiseSpec::off),
        microwave: file.noise.microwave.or(p.map(|p| p.microwave)).unwrap_or_else(NoiseSpec::off),
        realizations: realizations.unwrap_or(default_realizations),
        average_rho_first: flags.average_rho_first || file.ensemble.average_rho_first.unwrap_or(false),
        t_max: t_max.unwrap_or(0.0),
        dt: flags.dt.or(file.integration.dt).or(p.map(|p| p.dt)).unwrap_or(DEFAULT_DT),
        sample_every: flags
            .sample_every
            .or(file.integration.sample_every)
            .or(p.map(|p| p.sample_every))
            .unwrap_or(DEFAULT_SAMPLE_EVERY),
        orders,
        gammas,
        inset_bath_intensities: inset,
        master_seed: flags.master_seed.or(file.master_seed).unwrap_or(DEFAULT_SEED),
    };
    cfg.validate()?;
    let dest = Destinations {
        output: flags.output.or(file.output),
        noise_traces: flags.noise_traces.or(file.noise_traces),
        workers: flags.workers.or(file.workers),
    };
    if let Some(w) = dest.workers {
        ensure!(w >= 1, "workers must be >= 1");
    }
    Ok((cfg, dest))
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        let gammas = std::iter::once(&self.gamma).chain(&self.gammas);
        for g in gammas {
            ensure!(*g >= 0.0, "lindblad.gamma must be >= 0 (got {g})");
        }
        for (name, n) in [("noise.bath", &self.bath), ("noise.microwave", &self.microwave)] {
            ensure!(n.intensity >= 0.0, "{name}.intensity must be >= 0 (got {})", n.intensity);
            ensure!(n.tau > 0.0, "{name}.tau must be > 0 (got {})", n.tau);
        }
        for i in &self.inset_bath_intensities {
            ensure!(*i >= 0.0, "sweep.inset_bath_intensities must be >= 0 (got {i})");
        }
        ensure!(self.nv.delta_plus.is_finite(), "hamiltonian.delta_plus must be finite");
        ensure!(self.t_max.is_finite() && self.t_max >= 0.0, "integration.t_max must be >= 0 (got {})", self.t_max);
        ensure!(self.dt.is_finite() && self.dt > 0.0, "integration.dt must be > 0 (got {})", self.dt);
        ensure!(self.sample_every >= 1, "integration.sample_every must be >= 1");
        ensure!(self.realizations >= 1, "ensemble.realizations must be >= 1");
        ensure!(!self.orders.is_empty(), "sweep.orders must not be empty");
        Ok(())
    }

    /// Labelled parameter sets, in output order.
    pub fn variants(&self) -> Vec<(String, Variant)> {
        Preset {
            figure: self.figure,
            mode: self.mode,
            nv: self.nv,
            gamma: self.gamma,
            bath: self.bath,
            microwave: self.microwave,
            realizations: self.realizations,
            t_max: self.t_max,
            dt: self.dt,
            sample_every: self.sample_every,
            orders: self.orders.clone(),
            gammas: self.gammas.clone(),
            inset_bath_intensities: self.inset_bath_intensities.clone(),
        }
        .variants()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig(f: Figure) -> Overrides {
        Overrides { figure: Some(f), ..Default::default() }
    }

    #[test]
    fn preset_fills_every_field() {
        let (cfg, _) = resolve(FileConfig::default(), fig(Figure::Fig7)).unwrap();
        assert_eq!(cfg.mode, Mode::Ensemble);
        assert_eq!(cfg.realizations, 1000);
        assert_eq!(cfg.bath, NoiseSpec::new(0.25, 25.0));
        assert_eq!(cfg.variants().len(), 6);
    }

    #[test]
    fn order_flag_replaces_sweep() {
        let flags = Overrides { orders: vec![DriveOrder::Second], ..fig(Figure::Fig4) };
        let (cfg, _) = resolve(FileConfig::default(), flags).unwrap();
        assert_eq!(cfg.orders, [DriveOrder::Second]);
        assert_eq!(cfg.nv.drive.order, DriveOrder::Second);
        assert_eq!(cfg.gamma, 0.05);
        assert_eq!(cfg.nv.delta_plus, 0.9);
        assert_eq!(cfg.variants().len(), 1);

        let flags = Overrides { orders: vec![DriveOrder::First], ..fig(Figure::Fig7) };
        let (cfg, _) = resolve(FileConfig::default(), flags).unwrap();
        assert!(cfg.inset_bath_intensities.is_empty());
    }

    #[test]
    fn flags_beat_file_beats_preset() {
        let file = FileConfig::from_json(r#"{"figure": "fig4", "integration": {"t_max": 3, "dt": 0.01}}"#).unwrap();
        let flags = Overrides { dt: Some(0.002), ..Default::default() };
        let (cfg, _) = resolve(file, flags).unwrap();
        assert_eq!((cfg.t_max, cfg.dt, cfg.sample_every), (3.0, 0.002, 100));
    }

    #[test]
    fn empty_config_lists_required_fields() {
        let err = resolve(FileConfig::from_json("{}").unwrap(), Overrides::default()).unwrap_err().to_string();
        for key in ["mode", "hamiltonian.delta_plus", "hamiltonian.drive", "integration.t_max"] {
            assert!(err.contains(key), "{err}");
        }
        let lindblad = Overrides { mode: Some(Mode::Lindblad), ..Default::default() };
        let err = resolve(FileConfig::default(), lindblad).unwrap_err().to_string();
        assert!(err.contains("lindblad.gamma") && !err.contains("ensemble.realizations"), "{err}");
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let flags = Overrides { gammas: vec![-0.1], ..fig(Figure::Fig4) };
        let err = resolve(FileConfig::default(), flags).unwrap_err().to_string();
        assert!(err.contains("gamma must be >= 0"), "{err}");
    }

    #[test]
    fn mode_conflict_is_reported() {
        let flags = Overrides { mode: Some(Mode::Evolve), ..fig(Figure::Fig7) };
        let err = resolve(FileConfig::default(), flags).unwrap_err().to_string();
        assert!(err.contains("conflicts") && err.contains("fig7"), "{err}");
    }

    #[test]
    fn unknown_keys_carry_their_path() {
        let err = FileConfig::from_json(r#"{"integration": {"tmax": 1}}"#).unwrap_err().to_string();
        assert!(err.contains("integration.tmax") || err.contains("integration"), "{err}");
        let err = FileConfig::from_json(r#"{"hamiltonian": {"drive": {"order": "fourth"}}}"#).unwrap_err().to_string();
        assert!(err.contains("hamiltonian.drive.order"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let (cfg, _) = resolve(FileConfig::default(), fig(Figure::Fig5)).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
