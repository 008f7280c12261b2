//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use hdgc::benchmark::{run_sweep, BenchmarkOutcome, CellSummary, SweepConfig};
use hdgc::dpca::{
    autocov, fit_dpca, spectral_density, ComponentRule, DpcaConfig, FrequencyGrid, Kernel,
};
use hdgc::granger::{f_sf, gc_test};
use hdgc::metrics::{accuracy, confusion_from_adjacency, kappa, mcc, Scope};
use hdgc::numeric::Complex64;
use hdgc::pipeline::Reduction;
use hdgc::simgen::{NetworkConfig, Scheme};
use hdgc::MultiChannelSeries;

const SIM_SEED: u64 = 1;
const REPLICATES: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_series(rng: &mut ChaCha8Rng, t: usize, n: usize) -> MultiChannelSeries {
    let cols = (0..n)
        .map(|_| (0..t).map(|_| normal(rng)).collect())
        .collect();
    MultiChannelSeries::from_columns(cols, (0..n).map(|i| format!("c{i}")).collect()).unwrap()
}

fn linear_sweep() -> BenchmarkOutcome {
    let sweep = SweepConfig {
        network: NetworkConfig {
            n: 20,
            n_external: 108,
            t: 2000,
            ..Default::default()
        },
        schemes: vec![Scheme::Linear],
        weights: vec![0.1, 0.3, 0.5, 0.7],
        n_influencers: vec![30],
        k_scores: vec![ComponentRule::VarianceThreshold(0.75)],
        reductions: vec![Reduction::Spectral],
        replicates: REPLICATES,
        seed: SIM_SEED,
        scope: Scope::DesignedPairs,
        ..Default::default()
    };
    run_sweep(&sweep).expect("linear sweep runs")
}

fn criterion_1(summaries: &[CellSummary], failures: usize) -> Outcome {
    let s = &summaries[0];
    let acc = s.designed_mean.accuracy;
    outcome(
        acc >= 0.85 && failures == 0 && s.n == REPLICATES,
        format!(
            "linear recovery, omega=0.1: designed-edge accuracy {acc:.4} (se {:.4}, {} replicates) >= 0.85",
            s.designed_std_err.accuracy, s.n
        ),
    )
}

fn criterion_2(summaries: &[CellSummary]) -> Outcome {
    let acc: Vec<f64> = summaries.iter().map(|s| s.designed_mean.accuracy).collect();
    let se: Vec<f64> = summaries
        .iter()
        .map(|s| s.designed_std_err.accuracy)
        .collect();
    let mut steps_ok = true;
    let mut steps = Vec::new();
    for i in 0..acc.len() - 1 {
        let rise = acc[i + 1] - acc[i];
        let tol = (se[i].powi(2) + se[i + 1].powi(2)).sqrt();
        steps_ok &= rise <= tol;
        steps.push(format!("{rise:+.4} (tol {tol:.4})"));
    }
    let drop_ok = acc[3] <= acc[0] - 0.10;
    let curve: Vec<String> = summaries
        .iter()
        .map(|s| format!("{}:{:.4}", s.cell.weight, s.designed_mean.accuracy))
        .collect();
    outcome(
        steps_ok && drop_ok,
        format!(
            "degradation trend: accuracy [{}]; step changes [{}]; acc(0.7) {:.4} <= acc(0.1) - 0.10 = {:.4}",
            curve.join(", "),
            steps.join(", "),
            acc[3],
            acc[0] - 0.10
        ),
    )
}

fn criterion_3() -> Outcome {
    let sweep = SweepConfig {
        network: NetworkConfig {
            n: 20,
            n_external: 80,
            t: 1500,
            ..Default::default()
        },
        schemes: vec![Scheme::Causative],
        weights: vec![0.1],
        n_influencers: vec![30],
        k_scores: vec![ComponentRule::VarianceThreshold(0.75)],
        reductions: vec![Reduction::Spectral, Reduction::Static],
        replicates: REPLICATES,
        seed: SIM_SEED,
        scope: Scope::AllCoi,
        ..Default::default()
    };
    let out = run_sweep(&sweep).expect("causative sweep runs");
    let s = out.summaries();
    let (spec, stat) = (&s[0], &s[1]);
    outcome(
        out.failures.is_empty() && spec.designed_mean.mcc >= stat.designed_mean.mcc,
        format!(
            "method ordering, causative: designed-edge MCC sDPCA {:.4} (se {:.4}) vs static PCA {:.4} (se {:.4}); \
             all-COI MCC sDPCA {:.4} vs static PCA {:.4}",
            spec.designed_mean.mcc,
            spec.designed_std_err.mcc,
            stat.designed_mean.mcc,
            stat.designed_std_err.mcc,
            spec.mean.mcc,
            stat.mean.mcc
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reps = 500;
    let mut rejects = 0;
    for _ in 0..reps {
        let x: Vec<f64> = (0..1024).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..1024).map(|_| normal(&mut rng)).collect();
        rejects += usize::from(gc_test(&x, &y, 2, 2, 0.05).unwrap().reject);
    }
    let rate = rejects as f64 / reps as f64;
    outcome(
        (0.03..=0.07).contains(&rate),
        format!("type-I calibration: rejection rate {rate:.4} over {reps} null replicates in [0.03, 0.07]"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 100;
    let mut rejects = 0;
    for _ in 0..reps {
        let x: Vec<f64> = (0..1024).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..1024)
            .map(|t| if t > 0 { 0.9 * x[t - 1] } else { 0.0 } + normal(&mut rng))
            .collect();
        rejects += usize::from(gc_test(&x, &y, 2, 2, 0.05).unwrap().reject);
    }
    let rate = rejects as f64 / reps as f64;
    outcome(
        rate >= 0.9,
        format!("power: rejection rate {rate:.4} over {reps} replicates >= 0.9"),
    )
}

/// Classical PCA scores from the covariance with divisor T, each eigenvector
/// signed so its largest-magnitude entry is positive.
fn classical_pca_scores(series: &MultiChannelSeries) -> Vec<Vec<f64>> {
    let (t, n) = (series.len(), series.n_channels());
    let means = series.means();
    let z = DMatrix::from_fn(t, n, |i, j| series.channel(j)[i] - means[j]);
    let cov = z.transpose() * &z / t as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .iter()
        .map(|&j| {
            let mut v = eig.eigenvectors.column(j).clone_owned();
            let big = (0..n)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
                .unwrap();
            if v[big] < 0.0 {
                v = -v;
            }
            (&z * v).iter().copied().collect()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let t = rng.random_range(64..=512);
        let series = random_series(&mut rng, t, n);
        let cfg = DpcaConfig {
            l_window: Some(0),
            l_filter: Some(0),
            components: ComponentRule::Count(n),
            ..Default::default()
        };
        let fit = fit_dpca(&series, &cfg).unwrap();
        let oracle = classical_pca_scores(&series);
        for (j, col) in oracle.iter().enumerate() {
            for (tt, v) in col.iter().enumerate() {
                worst = worst.max((fit.scores.get(tt, j) - v).abs());
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("static reduction: max |sDPCA - PCA| score difference {worst:.3e} <= 1e-8 over 20 instances"),
    )
}

fn brute_force_density(
    series: &MultiChannelSeries,
    l: usize,
    kernel: Kernel,
    n_freq: usize,
) -> Vec<DMatrix<Complex64>> {
    let (t, n) = (series.len(), series.n_channels());
    let means = series.means();
    let z = |i: usize, a: usize| series.channel(a)[i] - means[a];
    let weight = |h: i64| -> f64 {
        if l == 0 {
            return 1.0;
        }
        let x = h.unsigned_abs() as f64 / l as f64;
        match kernel {
            Kernel::Bartlett => 1.0 - x,
            Kernel::Flat => 1.0,
            Kernel::Parzen => {
                if x <= 0.5 {
                    1.0 - 6.0 * x * x + 6.0 * x * x * x
                } else {
                    2.0 * (1.0 - x).powi(3)
                }
            }
        }
    };
    let l = l as i64;
    let lagcov = |h: i64, a: usize, b: usize| -> f64 {
        let mut acc = 0.0;
        for s in 0..t as i64 {
            let u = s + h;
            if (0..t as i64).contains(&u) {
                acc += z(u as usize, a) * z(s as usize, b);
            }
        }
        acc / t as f64
    };
    (0..n_freq)
        .map(|s| {
            let w = 2.0 * PI * s as f64 / n_freq as f64;
            DMatrix::from_fn(n, n, |a, b| {
                (-l..=l)
                    .map(|h| Complex64::from_polar(weight(h) * lagcov(h, a, b), -(h as f64) * w))
                    .sum()
            })
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for kernel in [Kernel::Bartlett, Kernel::Parzen, Kernel::Flat] {
        for _ in 0..6 {
            let n = rng.random_range(1..=4);
            let l = rng.random_range(0..=8);
            let t = rng.random_range(40..=160);
            let series = random_series(&mut rng, t, n);
            let sd = spectral_density(
                &autocov(&series, l).unwrap(),
                kernel,
                FrequencyGrid::new(64).unwrap(),
            )
            .unwrap();
            let oracle = brute_force_density(&series, l, kernel, 64);
            for (s, m) in oracle.iter().enumerate() {
                for a in 0..n {
                    for b in 0..n {
                        worst = worst.max((sd.at(s).get(a, b) - m[(a, b)]).norm());
                    }
                }
            }
            cases += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("spectral oracle: max entry difference {worst:.3e} <= 1e-12 over {cases} instances, 64-point grid"),
    )
}

fn f_density(x: f64, d1: f64, d2: f64) -> f64 {
    let ln_c = ln_gamma((d1 + d2) / 2.0) - ln_gamma(d1 / 2.0) - ln_gamma(d2 / 2.0)
        + d1 / 2.0 * (d1 / d2).ln();
    (ln_c + (d1 / 2.0 - 1.0) * x.ln() - (d1 + d2) / 2.0 * (1.0 + d1 * x / d2).ln()).exp()
}

/// `1 - int_0^f density`, integrated in `u = sqrt(x)` so the d1 = 1 pole is removable.
fn f_sf_numeric(f: f64, d1: f64, d2: f64) -> f64 {
    let g = |u: f64| {
        if u == 0.0 {
            if d1 == 1.0 {
                2.0 * f_density_scaled_at_zero(d1, d2)
            } else {
                0.0
            }
        } else {
            f_density(u * u, d1, d2) * 2.0 * u
        }
    };
    let m = 20_000;
    let b = f.sqrt();
    let h = b / m as f64;
    let mut acc = g(0.0) + g(b);
    for i in 1..m {
        acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - acc * h / 3.0
}

/// Limit of `density(x) * sqrt(x)` as `x -> 0` for `d1 = 1`.
fn f_density_scaled_at_zero(d1: f64, d2: f64) -> f64 {
    (ln_gamma((d1 + d2) / 2.0) - ln_gamma(d1 / 2.0) - ln_gamma(d2 / 2.0)
        + d1 / 2.0 * (d1 / d2).ln())
    .exp()
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for d1 in [1usize, 2, 5] {
        for d2 in [5usize, 10, 50] {
            for f in [0.05, 0.3, 1.0, 2.5, 5.0, 12.0] {
                let diff = (f_sf(f, d1, d2).unwrap() - f_sf_numeric(f, d1 as f64, d2 as f64)).abs();
                worst = worst.max(diff);
            }
        }
    }
    outcome(
        worst <= 5e-4,
        format!("F oracle: max |f_sf - numeric integral| {worst:.3e} <= 5e-4 over 54 grid points"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(2..=6);
        let p_on = rng.random_range(0.0..1.0);
        let pred: Vec<Vec<bool>> = (0..m)
            .map(|_| (0..m).map(|_| rng.random_bool(p_on)).collect())
            .collect();
        let act: Vec<Vec<bool>> = (0..m)
            .map(|_| (0..m).map(|_| rng.random_bool(0.3)).collect())
            .collect();
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(0.8))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let c = confusion_from_adjacency(&pred, &act, &pairs).unwrap();

        let p: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| f64::from(u8::from(pred[i][j])))
            .collect();
        let a: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| f64::from(u8::from(act[i][j])))
            .collect();
        let n = p.len() as f64;
        let agree = p.iter().zip(&a).filter(|(x, y)| x == y).count() as f64 / n;
        let (mp, ma) = (p.iter().sum::<f64>() / n, a.iter().sum::<f64>() / n);
        let cov: f64 = p.iter().zip(&a).map(|(x, y)| (x - mp) * (y - ma)).sum();
        let vp: f64 = p.iter().map(|x| (x - mp).powi(2)).sum();
        let va: f64 = a.iter().map(|y| (y - ma).powi(2)).sum();
        let phi = if vp == 0.0 || va == 0.0 {
            0.0
        } else {
            cov / (vp * va).sqrt()
        };
        let chance = mp * ma + (1.0 - mp) * (1.0 - ma);
        let k = if chance == 1.0 {
            if agree == 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (agree - chance) / (1.0 - chance)
        };
        worst = worst
            .max((accuracy(&c).unwrap() - agree).abs())
            .max((mcc(&c).unwrap() - phi).abs())
            .max((kappa(&c).unwrap() - k).abs());
    }
    outcome(
        worst <= 1e-12,
        format!(
            "metric oracle: max deviation from enumeration {worst:.3e} <= 1e-12 over 50 instances"
        ),
    )
}

fn criterion_10() -> Outcome {
    let sweep = SweepConfig {
        network: NetworkConfig {
            n: 4,
            n_external: 16,
            t: 400,
            ..Default::default()
        },
        schemes: vec![Scheme::Linear, Scheme::Nonlinear, Scheme::Causative],
        weights: vec![0.1, 0.7],
        n_influencers: vec![4],
        reductions: vec![Reduction::Spectral, Reduction::Static],
        replicates: 2,
        seed: 10,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_sweep(&sweep).unwrap().csv_string().unwrap())
    };
    let (a, b, c) = (run(1), run(4), run(4));
    outcome(
        a == b && b == c && !a.is_empty(),
        format!(
            "determinism: {} CSV bytes identical across 1-thread and repeated 4-thread runs",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let linear = linear_sweep();
    let linear_summaries = linear.summaries();
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1(&linear_summaries, linear.failures.len())),
        (2, criterion_2(&linear_summaries)),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (id, r) in &results {
        println!(
            "[{}] criterion {id}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
