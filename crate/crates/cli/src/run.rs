//! Executes a resolved configuration and renders CSV tables and the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use log::{info, warn};
use nvccd::ensemble::{coherence_ordering_report, run_ensemble_with_workers};
use nvccd::lindblad::{propagate_lindblad, LindbladParams};
use nvccd::noise::{derive_seed, SourceId};
use nvccd::twolevel::{LeakageResult, ProtectionCheck};
use nvccd::unitary::propagate_unitary;
use nvccd::{
    run_ensemble, DensityMatrix, EnsembleConfig, EnsembleResult, LindbladOptions, Mode, NoiseDrivers, ProtectionSuite,
    QutritState, UnitaryOptions,
};
use serde::{Deserialize, Serialize};

use crate::config::{Destinations, RunConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// Seeds of one realization of one labelled curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub label: String,
    pub realization: usize,
    pub bath: u64,
    pub microwave: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub seeds: Vec<SeedRecord>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    /// Outcome of the two-level protection checks, when run.
    pub passed: Option<bool>,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| {
                let path = e.path().to_string();
                anyhow::anyhow!("manifest key `{path}`: {}", e.into_inner())
            })
            .with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// In-memory results of a run.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub csv: Vec<u8>,
    pub noise_traces: Option<Vec<u8>>,
    pub seeds: Vec<SeedRecord>,
    pub warnings: Vec<String>,
    pub passed: Option<bool>,
}

fn num(x: f64) -> String {
    format!("{x:.11e}")
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
    labelled: bool,
}

impl Table {
    fn new(columns: &[&str], labelled: bool) -> anyhow::Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = columns.to_vec();
        if labelled {
            header.push("label");
        }
        writer.write_record(&header)?;
        Ok(Self { writer, labelled })
    }

    fn row(&mut self, values: &[f64], label: &str) -> anyhow::Result<()> {
        let mut rec: Vec<String> = values.iter().map(|&v| num(v)).collect();
        if self.labelled {
            rec.push(label.to_string());
        }
        self.writer.write_record(&rec)?;
        Ok(())
    }

    fn finish(self) -> anyhow::Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))
    }
}

/// Runs every variant of `cfg`. `want_traces` keeps per-realization noise.
pub fn execute(cfg: &RunConfig, workers: Option<usize>, want_traces: bool) -> anyhow::Result<Artifacts> {
    cfg.validate()?;
    let mut art = Artifacts::default();
    for w in cfg.nv.drive.validate() {
        art.warnings.push(w.to_string());
    }
    match cfg.mode {
        Mode::Evolve => evolve(cfg, &mut art)?,
        Mode::Lindblad => lindblad(cfg, want_traces, &mut art)?,
        Mode::Ensemble => ensemble(cfg, workers, want_traces, &mut art)?,
        Mode::TwoLevelOracle => oracle(cfg, &mut art)?,
    }
    Ok(art)
}

fn evolve(cfg: &RunConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let variants = cfg.variants();
    let mut table = Table::new(&["t", "pop1", "pop2", "pop3", "norm_drift", "unitarity_residual"], variants.len() > 1)?;
    let opts = UnitaryOptions {
        backend: cfg.backend,
        t_max: cfg.t_max,
        dt: cfg.dt,
        sample_every: cfg.sample_every,
        ..Default::default()
    };
    for (label, v) in &variants {
        let samples =
            propagate_unitary(&v.nv, &QutritState::ground(), &opts).with_context(|| format!("curve {label}"))?;
        for s in &samples {
            let [p1, p2, p3] = s.populations;
            table.row(&[s.t, p1, p2, p3, s.norm_drift, s.unitarity_residual], label)?;
        }
    }
    art.csv = table.finish()?;
    Ok(())
}

fn options(cfg: &RunConfig) -> LindbladOptions {
    LindbladOptions { t_max: cfg.t_max, dt: cfg.dt, sample_every: cfg.sample_every }
}

fn lindblad(cfg: &RunConfig, want_traces: bool, art: &mut Artifacts) -> anyhow::Result<()> {
    let variants = cfg.variants();
    let mut table = Table::new(&["t", "purity", "entropy"], variants.len() > 1)?;
    let mut traces = Vec::new();
    let rho0 = DensityMatrix::pure(&QutritState::ground());
    for (label, v) in &variants {
        let params = LindbladParams::new(v.nv, v.gamma)?;
        let seeds =
            (derive_seed(cfg.master_seed, 0, SourceId::Bath), derive_seed(cfg.master_seed, 0, SourceId::Microwave));
        let mut drivers = NoiseDrivers {
            bath: (!v.bath.is_off()).then(|| v.bath.process(seeds.0)).transpose()?,
            microwave: (!v.microwave.is_off()).then(|| v.microwave.process(seeds.1)).transpose()?,
        };
        if drivers.bath.is_some() || drivers.microwave.is_some() {
            art.seeds.push(SeedRecord { label: label.clone(), realization: 0, bath: seeds.0, microwave: seeds.1 });
        }
        let traj = propagate_lindblad(&params, &rho0, &options(cfg), &mut drivers)
            .with_context(|| format!("curve {label}"))?;
        art.warnings.extend(traj.warnings.iter().map(|w| format!("{label}: {w}")));
        for s in &traj.samples {
            table.row(&[s.t, s.purity, s.entropy], label)?;
            if want_traces {
                traces.push((label.clone(), s.t, s.noise.detuning, s.noise.amplitude));
            }
        }
    }
    art.csv = table.finish()?;
    if want_traces {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "realization", "t", "bath", "microwave"])?;
        for (label, t, b, m) in traces {
            w.write_record([label, "0".to_string(), num(t), num(b), num(m)])?;
        }
        art.noise_traces = Some(w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))?);
    }
    Ok(())
}

fn ensemble(cfg: &RunConfig, workers: Option<usize>, want_traces: bool, art: &mut Artifacts) -> anyhow::Result<()> {
    let variants = cfg.variants();
    let mut table = Table::new(&["t", "purity", "entropy", "std_err_purity", "std_err_entropy"], variants.len() > 1)?;
    let mut traces = csv::Writer::from_writer(Vec::new());
    traces.write_record(["label", "realization", "t", "bath", "microwave"])?;
    let rho0 = DensityMatrix::pure(&QutritState::ground());
    let mut results: Vec<(String, EnsembleResult)> = Vec::new();
    for (label, v) in &variants {
        let ec = EnsembleConfig {
            params: LindbladParams::new(v.nv, v.gamma)?,
            options: options(cfg),
            bath: v.bath,
            microwave: v.microwave,
            realizations: cfg.realizations,
            master_seed: cfg.master_seed,
            average_rho_first: cfg.average_rho_first,
            keep_noise_traces: want_traces,
        };
        info!("{label}: {} realizations", ec.realizations);
        let r = match workers {
            Some(w) => run_ensemble_with_workers(&ec, &rho0, w),
            None => run_ensemble(&ec, &rho0),
        }
        .with_context(|| format!("curve {label}"))?;
        for j in 0..r.times.len() {
            table.row(
                &[r.times[j], r.mean_purity[j], r.mean_entropy[j], r.std_err_purity[j], r.std_err_entropy[j]],
                label,
            )?;
        }
        art.seeds.extend(r.seeds.iter().map(|s| SeedRecord {
            label: label.clone(),
            realization: s.index,
            bath: s.bath,
            microwave: s.microwave,
        }));
        art.warnings.extend(r.warnings.iter().map(|w| format!("{label}: {w}")));
        for tr in r.noise_traces.iter().flatten() {
            for (j, t) in r.times.iter().enumerate() {
                let rec = [label.clone(), tr.index.to_string(), num(*t), num(tr.bath[j]), num(tr.microwave[j])];
                traces.write_record(rec)?;
            }
        }
        results.push((label.clone(), r));
    }
    art.csv = table.finish()?;
    if want_traces {
        art.noise_traces = Some(traces.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))?);
    }
    let by_order: Vec<(&str, &EnsembleResult)> =
        results.iter().take(cfg.orders.len()).map(|(l, r)| (l.as_str(), r)).collect();
    if by_order.len() > 1 && cfg.gammas.is_empty() {
        let window = (0.75 * cfg.t_max, cfg.t_max);
        let report = coherence_ordering_report(&by_order, window)?;
        for e in &report.entries {
            info!("final-quarter purity {}: {:.4} +- {:.4}", e.label, e.window_mean, e.window_std_err);
        }
        info!("ordering monotone: {}, separated: {}", report.monotone, report.separated);
    }
    Ok(())
}

fn oracle(cfg: &RunConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let suite = ProtectionSuite { realizations: cfg.realizations, master_seed: cfg.master_seed, ..Default::default() };
    let report = suite.run()?;
    let mut table = Table::new(&["t", "leakage", "std_err"], true)?;
    let mut emit = |label: &str, r: &LeakageResult| -> anyhow::Result<()> {
        for j in 0..r.times.len() {
            table.row(&[r.times[j], r.mean[j], r.std_err[j]], label)?;
        }
        Ok(())
    };
    emit("bath-order1", &report.bath.protected)?;
    emit("bath-none", &report.bath.unprotected)?;
    emit("drive-order2", &report.drive.protected)?;
    emit("drive-order1", &report.drive.unprotected)?;
    art.csv = table.finish()?;
    for check in [&report.bath, &report.drive] {
        eprintln!("{}", check_line(check));
    }
    art.passed = Some(report.passed());
    Ok(())
}

fn check_line(c: &ProtectionCheck) -> String {
    format!(
        "{} {}: mean leakage {:.4e} (protected) vs {:.4e}, ratio {:.2} (need > {})",
        if c.passed { "PASS" } else { "FAIL" },
        c.name,
        c.protected.time_average(),
        c.unprotected.time_average(),
        c.ratio,
        c.required_ratio
    )
}

/// Path of the manifest that accompanies `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Runs `cfg`, writes CSV (stdout without an output path), traces and the
/// manifest. Returns whether the run's own checks passed.
pub fn run_and_write(cfg: &RunConfig, dest: &Destinations) -> anyhow::Result<bool> {
    let start = Instant::now();
    let art = execute(cfg, dest.workers, dest.noise_traces.is_some())?;
    let wall_time_s = start.elapsed().as_secs_f64();
    for w in &art.warnings {
        warn!("{w}");
    }
    match &dest.output {
        Some(path) => fs::write(path, &art.csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&art.csv).context("writing CSV to stdout")?,
    }
    if let (Some(path), Some(bytes)) = (&dest.noise_traces, &art.noise_traces) {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(out) = &dest.output {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: art.seeds,
            wall_time_s,
            warnings: art.warnings,
            passed: art.passed,
        };
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {} and {}", out.display(), path.display());
    }
    Ok(art.passed.unwrap_or(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, FileConfig, Overrides};
    use nvccd::{DriveOrder, Figure};

    fn short(figure: Figure) -> RunConfig {
        let flags = Overrides {
            figure: Some(figure),
            t_max: Some(0.5),
            dt: Some(0.01),
            sample_every: Some(10),
            ..Default::default()
        };
        resolve(FileConfig::default(), flags).unwrap().0
    }

    fn lines(bytes: &[u8]) -> Vec<String> {
        String::from_utf8(bytes.to_vec()).unwrap().lines().map(str::to_string).collect()
    }

    #[test]
    fn evolve_table_has_labelled_rows() {
        let art = execute(&short(Figure::Fig3), None, false).unwrap();
        let l = lines(&art.csv);
        assert_eq!(l[0], "t,pop1,pop2,pop3,norm_drift,unitarity_residual,label");
        assert_eq!(l.len(), 1 + 2 * 6);
        assert!(l[1].ends_with(",order1") && l.last().unwrap().ends_with(",order2"));
        assert!(l[1].starts_with("0.00000000000e0,1.00000000000e0,"));
    }

    #[test]
    fn single_curve_has_no_label_column() {
        let mut cfg = short(Figure::Fig4);
        cfg.orders = vec![DriveOrder::Second];
        let art = execute(&cfg, None, false).unwrap();
        assert_eq!(lines(&art.csv)[0], "t,purity,entropy");
    }

    #[test]
    fn ensemble_records_seeds_and_traces() {
        let mut cfg = short(Figure::Fig7);
        cfg.realizations = 3;
        let art = execute(&cfg, Some(2), true).unwrap();
        let l = lines(&art.csv);
        assert_eq!(l[0], "t,purity,entropy,std_err_purity,std_err_entropy,label");
        assert_eq!(art.seeds.len(), 6 * 3);
        let traces = lines(art.noise_traces.as_ref().unwrap());
        assert_eq!(traces[0], "label,realization,t,bath,microwave");
        assert_eq!(traces.len(), 1 + 6 * 3 * 6);
    }

    #[test]
    fn manifest_name_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }
}
