//! Monte-Carlo averages of Lindblad trajectories over Ornstein-Uhlenbeck
//! noise realizations.
//!
//! Realizations run in parallel but are reduced in index order, so results
//! are bitwise identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::lindblad::{propagate_lindblad, LindbladOptions, LindbladParams, NoiseDrivers};
use crate::noise::{derive_seed, NoiseSpec, SourceId};
use crate::qutrit::{entropy_of_spectrum, hermitian_eigenvalues, re, ComplexMatrix3, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub params: LindbladParams,
    pub options: LindbladOptions,
    /// Detuning noise `zeta` from the spin bath.
    pub bath: NoiseSpec,
    /// Microwave amplitude noise `zeta_1`.
    pub microwave: NoiseSpec,
    pub realizations: usize,
    pub master_seed: u64,
    /// Average `rho` over realizations before computing purity and entropy.
    pub average_rho_first: bool,
    /// Keep each realization's sampled noise values.
    pub keep_noise_traces: bool,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.options.validate()?;
        if self.realizations == 0 {
            return Err(config_err("realizations must be >= 1"));
        }
        if self.average_rho_first && self.realizations < 2 {
            return Err(config_err("average_rho_first needs at least 2 realizations"));
        }
        for (name, spec) in [("bath", &self.bath), ("microwave", &self.microwave)] {
            if !(spec.intensity >= 0.0) || !(spec.tau > 0.0) {
                return Err(config_err(format!("{name} noise needs intensity >= 0 and tau > 0")));
            }
        }
        Ok(())
    }

    pub fn seeds(&self, index: usize) -> RealizationSeeds {
        RealizationSeeds {
            index,
            bath: derive_seed(self.master_seed, index as u64, SourceId::Bath),
            microwave: derive_seed(self.master_seed, index as u64, SourceId::Microwave),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationSeeds {
    pub index: usize,
    pub bath: u64,
    pub microwave: u64,
}

/// Noise samples of one realization on the output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    pub index: usize,
    pub bath: Vec<f64>,
    pub microwave: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_purity: Vec<f64>,
    pub mean_entropy: Vec<f64>,
    /// Standard error of the mean (zero for a single realization).
    pub std_err_purity: Vec<f64>,
    pub std_err_entropy: Vec<f64>,
    pub seeds: Vec<RealizationSeeds>,
    pub noise_traces: Option<Vec<NoiseTrace>>,
    pub worst_eigenvalue: f64,
    pub warnings: Vec<String>,
}

struct Realization {
    purity: Vec<f64>,
    entropy: Vec<f64>,
    rho: Vec<ComplexMatrix3>,
    trace: Option<NoiseTrace>,
    worst_eigenvalue: f64,
    warnings: Vec<String>,
}

fn run_one(cfg: &EnsembleConfig, rho0: &DensityMatrix, seeds: RealizationSeeds) -> Result<Realization> {
    let wrap = |seed: u64| move |e: Error| Error::Realization { index: seeds.index, seed, source: Box::new(e) };
    let mut drivers = NoiseDrivers {
        bath: (!cfg.bath.is_off()).then(|| cfg.bath.process(seeds.bath)).transpose().map_err(wrap(seeds.bath))?,
        microwave: (!cfg.microwave.is_off())
            .then(|| cfg.microwave.process(seeds.microwave))
            .transpose()
            .map_err(wrap(seeds.microwave))?,
    };
    let traj = propagate_lindblad(&cfg.params, rho0, &cfg.options, &mut drivers).map_err(wrap(seeds.bath))?;
    let trace = cfg.keep_noise_traces.then(|| NoiseTrace {
        index: seeds.index,
        bath: traj.samples.iter().map(|s| s.noise.detuning).collect(),
        microwave: traj.samples.iter().map(|s| s.noise.amplitude).collect(),
    });
    let rho = if cfg.average_rho_first { traj.samples.iter().map(|s| *s.rho.matrix()).collect() } else { Vec::new() };
    Ok(Realization {
        purity: traj.purity(),
        entropy: traj.entropy(),
        rho,
        trace,
        worst_eigenvalue: traj.worst_eigenvalue,
        warnings: traj.warnings,
    })
}

/// Runs the ensemble on the global rayon pool.
pub fn run_ensemble(cfg: &EnsembleConfig, rho0: &DensityMatrix) -> Result<EnsembleResult> {
    cfg.validate()?;
    let runs =
        (0..cfg.realizations).into_par_iter().map(|i| run_one(cfg, rho0, cfg.seeds(i))).collect::<Result<Vec<_>>>()?;
    Ok(reduce(cfg, runs))
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(cfg: &EnsembleConfig, rho0: &DensityMatrix, workers: usize) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| config_err(format!("cannot build a pool of {workers} workers: {e}")))?;
    pool.install(|| run_ensemble(cfg, rho0))
}

fn reduce(cfg: &EnsembleConfig, runs: Vec<Realization>) -> EnsembleResult {
    let times = cfg.options.sample_times();
    let n = runs.len();
    let (mean_purity, std_err_purity, mean_entropy, std_err_entropy) = if cfg.average_rho_first {
        let (p, sp) = jackknife(&runs, times.len(), purity_of);
        let (e, se) = jackknife(&runs, times.len(), entropy_of);
        (p, sp, e, se)
    } else {
        let (p, sp) = mean_and_std_err(runs.iter().map(|r| r.purity.as_slice()), times.len(), n);
        let (e, se) = mean_and_std_err(runs.iter().map(|r| r.entropy.as_slice()), times.len(), n);
        (p, sp, e, se)
    };
    let worst_eigenvalue = runs.iter().map(|r| r.worst_eigenvalue).fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    let mut traces = cfg.keep_noise_traces.then(Vec::new);
    for (i, r) in runs.into_iter().enumerate() {
        warnings.extend(r.warnings.into_iter().map(|w| format!("realization {i}: {w}")));
        if let (Some(all), Some(t)) = (traces.as_mut(), r.trace) {
            all.push(t);
        }
    }
    EnsembleResult {
        seeds: (0..n).map(|i| cfg.seeds(i)).collect(),
        times,
        mean_purity,
        mean_entropy,
        std_err_purity,
        std_err_entropy,
        noise_traces: traces,
        worst_eigenvalue,
        warnings,
    }
}

fn mean_and_std_err<'a>(series: impl Iterator<Item = &'a [f64]>, len: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    // Welford, accumulated in realization order.
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    for (k, s) in series.enumerate() {
        let count = (k + 1) as f64;
        for j in 0..len {
            let delta = s[j] - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (s[j] - mean[j]);
        }
    }
    let se = if n > 1 { m2.iter().map(|v| (v / ((n - 1) * n) as f64).sqrt()).collect() } else { vec![0.0; len] };
    (mean, se)
}

fn purity_of(m: &ComplexMatrix3) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn entropy_of(m: &ComplexMatrix3) -> f64 {
    entropy_of_spectrum(&hermitian_eigenvalues(&((m + m.adjoint()) * re(0.5))))
}

/// Statistic of the mean density matrix with a delete-one jackknife error.
fn jackknife(runs: &[Realization], len: usize, stat: fn(&ComplexMatrix3) -> f64) -> (Vec<f64>, Vec<f64>) {
    let n = runs.len() as f64;
    let mut value = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    for j in 0..len {
        let sum = runs.iter().fold(ComplexMatrix3::zeros(), |acc, r| acc + r.rho[j]);
        value.push(stat(&(sum / re(n))));
        let loo: Vec<f64> = runs.iter().map(|r| stat(&((sum - r.rho[j]) / re(n - 1.0)))).collect();
        let loo_mean = loo.iter().sum::<f64>() / n;
        let ss: f64 = loo.iter().map(|x| (x - loo_mean).powi(2)).sum();
        se.push(((n - 1.0) / n * ss).sqrt());
    }
    (value, se)
}

/// Window-averaged purity of one labelled run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingEntry {
    pub label: String,
    pub window_mean: f64,
    /// Mean of the pointwise standard errors over the window.
    pub window_std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub window: (f64, f64),
    pub entries: Vec<OrderingEntry>,
    /// Window means strictly increase in the given order.
    pub monotone: bool,
    /// Consecutive `mean +- 2 se` bands do not overlap.
    pub separated: bool,
}

/// Compares window-averaged purity across runs listed in expected ascending order.
pub fn coherence_ordering_report(runs: &[(&str, &EnsembleResult)], window: (f64, f64)) -> Result<OrderingReport> {
    let Some((_, first)) = runs.first() else {
        return Err(config_err("ordering report needs at least one run"));
    };
    let mut entries = Vec::with_capacity(runs.len());
    for (label, r) in runs {
        if r.times.len() != first.times.len() || r.times.iter().zip(&first.times).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::GridMismatch(format!("run '{label}' has a different time grid")));
        }
        let idx: Vec<usize> =
            (0..r.times.len()).filter(|&j| r.times[j] >= window.0 && r.times[j] <= window.1).collect();
        if idx.is_empty() {
            return Err(config_err(format!("window {window:?} contains no samples")));
        }
        let k = idx.len() as f64;
        entries.push(OrderingEntry {
            label: label.to_string(),
            window_mean: idx.iter().map(|&j| r.mean_purity[j]).sum::<f64>() / k,
            window_std_err: idx.iter().map(|&j| r.std_err_purity[j]).sum::<f64>() / k,
        });
    }
    let monotone = entries.windows(2).all(|w| w[0].window_mean < w[1].window_mean);
    let separated = entries
        .windows(2)
        .all(|w| w[0].window_mean + 2.0 * w[0].window_std_err < w[1].window_mean - 2.0 * w[1].window_std_err);
    Ok(OrderingReport { window, entries, monotone, separated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{DriveConfig, DriveOrder};
    use crate::hamiltonian::NVParams;
    use crate::qutrit::QutritState;

    fn config(n: usize) -> EnsembleConfig {
        EnsembleConfig {
            params: LindbladParams {
                nv: NVParams::new(0.9, DriveConfig::default().with_order(DriveOrder::First)),
                gamma: 0.05,
            },
            options: LindbladOptions { t_max: 2.0, dt: 1e-2, sample_every: 20 },
            bath: NoiseSpec::new(0.25, 25.0),
            microwave: NoiseSpec::new(0.001, 25.0),
            realizations: n,
            master_seed: 11,
            average_rho_first: false,
            keep_noise_traces: true,
        }
    }

    fn ground() -> DensityMatrix {
        DensityMatrix::pure(&QutritState::ground())
    }

    #[test]
    fn single_realization_matches_direct_run() {
        let cfg = config(1);
        let res = run_ensemble(&cfg, &ground()).unwrap();
        let s = cfg.seeds(0);
        let mut drivers = NoiseDrivers {
            bath: Some(cfg.bath.process(s.bath).unwrap()),
            microwave: Some(cfg.microwave.process(s.microwave).unwrap()),
        };
        let traj = propagate_lindblad(&cfg.params, &ground(), &cfg.options, &mut drivers).unwrap();
        assert_eq!(res.mean_purity, traj.purity());
        assert_eq!(res.mean_entropy, traj.entropy());
        assert!(res.std_err_purity.iter().all(|&x| x == 0.0));
        assert_eq!(res.times, traj.times());
    }

    #[test]
    fn identical_across_worker_counts() {
        let cfg = config(24);
        let a = run_ensemble_with_workers(&cfg, &ground(), 1).unwrap();
        let b = run_ensemble_with_workers(&cfg, &ground(), 4).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.mean_purity), bits(&b.mean_purity));
        assert_eq!(bits(&a.std_err_entropy), bits(&b.std_err_entropy));
        assert_eq!(a.noise_traces, b.noise_traces);
        assert_eq!(a.seeds, b.seeds);
    }

    #[test]
    fn noise_traces_start_at_zero_and_vary() {
        let res = run_ensemble(&config(3), &ground()).unwrap();
        let traces = res.noise_traces.unwrap();
        assert_eq!(traces.len(), 3);
        for t in &traces {
            assert_eq!(t.bath[0], 0.0);
            assert_eq!(t.bath.len(), res.times.len());
        }
        assert_ne!(traces[0].bath, traces[1].bath);
    }

    #[test]
    fn average_rho_first_without_noise_is_deterministic() {
        let mut cfg = config(3);
        cfg.bath = NoiseSpec::off();
        cfg.microwave = NoiseSpec::off();
        cfg.average_rho_first = true;
        let a = run_ensemble(&cfg, &ground()).unwrap();
        cfg.average_rho_first = false;
        let b = run_ensemble(&cfg, &ground()).unwrap();
        for j in 0..a.times.len() {
            assert!((a.mean_purity[j] - b.mean_purity[j]).abs() < 1e-12);
            assert!(a.std_err_purity[j] < 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut cfg = config(0);
        assert!(run_ensemble(&cfg, &ground()).is_err());
        cfg.realizations = 1;
        cfg.average_rho_first = true;
        assert!(run_ensemble(&cfg, &ground()).is_err());
    }

    #[test]
    fn ordering_report_checks_grid_and_order() {
        let mk = |p: f64, se: f64, times: Vec<f64>| EnsembleResult {
            mean_purity: vec![p; times.len()],
            mean_entropy: vec![0.0; times.len()],
            std_err_purity: vec![se; times.len()],
            std_err_entropy: vec![0.0; times.len()],
            times,
            seeds: vec![],
            noise_traces: None,
            worst_eigenvalue: 0.0,
            warnings: vec![],
        };
        let grid = vec![0.0, 1.0, 2.0];
        let (a, b, c) = (mk(0.5, 0.01, grid.clone()), mk(0.6, 0.01, grid.clone()), mk(0.61, 0.01, grid));
        let r = coherence_ordering_report(&[("a", &a), ("b", &b)], (1.0, 2.0)).unwrap();
        assert!(r.monotone && r.separated);
        let r = coherence_ordering_report(&[("b", &b), ("c", &c)], (1.0, 2.0)).unwrap();
        assert!(r.monotone && !r.separated);
        let r = coherence_ordering_report(&[("b", &b), ("a", &a)], (1.0, 2.0)).unwrap();
        assert!(!r.monotone);
        let odd = mk(0.7, 0.01, vec![0.0, 0.5, 2.0]);
        assert!(matches!(
            coherence_ordering_report(&[("a", &a), ("odd", &odd)], (0.0, 2.0)),
            Err(Error::GridMismatch(_))
        ));
    }
}
