use nvccd::noise::{derive_seed, OUProcess, SourceId};
use statrs::distribution::{ContinuousCDF, Normal};

const N: usize = 10_000;

/// Samples after `burn` steps, one independent process per sample.
fn stationary_samples(tau: f64, c: f64, dt: f64, burn: usize) -> Vec<f64> {
    (0..N)
        .map(|i| {
            let mut p = OUProcess::new(tau, c, derive_seed(3, i as u64, SourceId::Bath)).unwrap();
            for _ in 0..burn {
                p.step(dt).unwrap();
            }
            p.current()
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn stationary_marginal_is_gaussian() {
    let (tau, c) = (1.5, 0.8);
    let mut x = stationary_samples(tau, c, 0.5, 40);
    x.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, (0.5 * c * tau).sqrt()).unwrap();
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov-Smirnov critical value at alpha = 0.01
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn half_steps_match_full_step_in_distribution() {
    let (tau, c, dt, x0): (f64, f64, f64, f64) = (2.0, 1.0, 0.7, 0.0);
    let sigma2 = 0.5 * c * tau;
    let decay = (-dt / tau).exp();
    let var_ref = sigma2 * (1.0 - decay * decay);
    let run = |halves: bool| -> Vec<f64> {
        (0..N)
            .map(|i| {
                let mut p = OUProcess::new(tau, c, 10_000 + i as u64).unwrap();
                if halves {
                    p.step(dt / 2.0).unwrap();
                    p.step(dt / 2.0).unwrap()
                } else {
                    p.step(dt).unwrap()
                }
            })
            .collect()
    };
    for halves in [false, true] {
        let (m, v) = mean_var(&run(halves));
        let se_m = (var_ref / N as f64).sqrt();
        let se_v = var_ref * (2.0 / (N as f64 - 1.0)).sqrt();
        assert!((m - x0 * decay).abs() < 3.0 * se_m, "mean {m}");
        assert!((v - var_ref).abs() < 3.0 * se_v, "variance {v} vs {var_ref}");
    }
}

#[test]
fn intensity_sets_stationary_variance() {
    // I_n = sigma^2 tau
    let p = OUProcess::from_intensity(0.25, 25.0, 0).unwrap();
    let x = {
        let (tau, c) = (p.tau(), p.diffusion());
        stationary_samples(tau, c, 5.0, 60)
    };
    let (_, v) = mean_var(&x);
    let se = 0.01 * (2.0 / (N as f64 - 1.0)).sqrt();
    assert!((v - 0.01).abs() < 3.0 * se, "variance {v}");
}
