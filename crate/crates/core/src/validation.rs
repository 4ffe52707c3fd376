//! Statistical validation suites runnable from the command line.

use std::fmt;

use rand::Rng as _;

use crate::error::Result;
use crate::estimator::{order_stat_cdf, order_stat_pdf, sample_order_stat_with, TruncExpParams};
use crate::gp::{GpState, KernelParams, Standardize};
use crate::ifweights::{
    default_shift_epsilon, normalize_weights, ridge_influences, sample_indices, RidgeProblem,
};
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::stats::{integrate, ks_p_value, ks_statistic, pearson};
use crate::types::{validate_ratio, DataPoint, DomainDataset, MixingRatio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Suite {
    RegretBound,
    Sampling,
    GpOracle,
    RidgeIf,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::RegretBound => "regret_bound",
            Suite::Sampling => "sampling",
            Suite::GpOracle => "gp_oracle",
            Suite::RidgeIf => "ridge_if",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {}: {} ({})", self.suite, c.label, c.detail)?;
        }
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}", self.suite)
    }
}

fn check(label: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        label: label.into(),
        passed,
        detail: detail.into(),
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::RegretBound => regret_bound_suite(seed)?,
        Suite::Sampling => sampling(seed)?,
        Suite::GpOracle => gp_oracle(seed)?,
        Suite::RidgeIf => ridge_if(seed)?,
    };
    Ok(SuiteReport { suite, checks })
}

fn regret_bound_suite(seed: u64) -> Result<Vec<Check>> {
    const N: usize = 100_000;
    let mut out = Vec::new();
    for k in [1usize, 2, 5] {
        let p = TruncExpParams::new(1.0, 1.0, k)?;
        let mut rng = rng_from_seed(derive_seed(seed, &[k as u64]));
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_order_stat_with(&p, &mut rng))
            .collect();
        let d = ks_statistic(&xs, |u| order_stat_cdf(u, &p));
        let pv = ks_p_value(d, N);
        out.push(check(
            format!("KS k={k}"),
            pv > 0.01,
            format!("D={d:.5}, p={pv:.4}"),
        ));
        let mass = integrate(&|u| order_stat_pdf(u, &p), 0.0, 1.0, 1e-12);
        out.push(check(
            format!("pdf mass k={k}"),
            (mass - 1.0).abs() <= 1e-8,
            format!("integral={mass:.12}"),
        ));
    }
    Ok(out)
}

fn sampling(seed: u64) -> Result<Vec<Check>> {
    let tiny = DomainDataset::new(
        "tiny",
        vec![
            DataPoint::new("a", -1.0),
            DataPoint::new("b", 0.5),
            DataPoint::new("c", 2.0),
        ],
    )?;
    let w = normalize_weights(&tiny, default_shift_epsilon(&tiny))?;
    const DRAWS: usize = 1_000_000;
    let mut rng = rng_from_seed(derive_seed(seed, &[0]));
    let mut counts = [0usize; 3];
    for i in sample_indices(&w, DRAWS, true, &mut rng)? {
        counts[i] += 1;
    }
    let worst = counts
        .iter()
        .zip(&w.probs)
        .map(|(&c, p)| (c as f64 / DRAWS as f64 - p).abs())
        .fold(0.0, f64::max);
    let mut out = vec![check(
        "weighted marginals",
        worst <= 0.002,
        format!("max |freq − p| = {worst:.5} over {DRAWS} draws"),
    )];

    let pool = DomainDataset::new(
        "pool",
        (0..50)
            .map(|i| DataPoint::new(format!("p{i}"), (i as f64 * 0.37).sin()))
            .collect(),
    )?;
    let wp = normalize_weights(&pool, default_shift_epsilon(&pool))?;
    let mut repeats = 0usize;
    for trial in 0..10_000u64 {
        let mut rng = rng_from_seed(derive_seed(seed, &[1, trial]));
        let mut idx = sample_indices(&wp, 20, false, &mut rng)?;
        idx.sort_unstable();
        idx.dedup();
        if idx.len() != 20 {
            repeats += 1;
        }
    }
    out.push(check(
        "no repeats without replacement",
        repeats == 0,
        format!("{repeats} of 10000 trials repeated an id"),
    ));
    Ok(out)
}

fn random_ratio(rng: &mut Rng, n: usize) -> MixingRatio {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    validate_ratio(&w).expect("positive weights")
}

/// Dense `(K + ζI)` solve by Gauss–Jordan elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn gauss_jordan_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        rhs.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for v in rhs[col].iter_mut() {
            *v /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for c in 0..n {
                        a[row][c] -= f * a[col][c];
                    }
                    for c in 0..rhs[row].len() {
                        rhs[row][c] -= f * rhs[col][c];
                    }
                }
            }
        }
    }
    rhs
}

fn gp_oracle(seed: u64) -> Result<Vec<Check>> {
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for ds in 0..20u64 {
        let mut rng = rng_from_seed(derive_seed(seed, &[ds]));
        let n = rng.random_range(2..=9);
        let t = rng.random_range(1..=12);
        let m = rng.random_range(0.2..2.0);
        let zeta = 0.01;
        let inputs: Vec<MixingRatio> = (0..t).map(|_| random_ratio(&mut rng, n)).collect();
        let targets: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = KernelParams::with_lengthscale(m)?;
        let gp = GpState::from_observations(
            n,
            inputs.clone(),
            targets.clone(),
            kernel,
            zeta,
            Standardize::None,
        )?;
        let k = |a: &MixingRatio, b: &MixingRatio| (-a.squared_distance(b) / (2.0 * m * m)).exp();
        let a: Vec<Vec<f64>> = (0..t)
            .map(|i| {
                (0..t)
                    .map(|j| k(&inputs[i], &inputs[j]) + if i == j { zeta } else { 0.0 })
                    .collect()
            })
            .collect();
        for _ in 0..5 {
            let q = random_ratio(&mut rng, n);
            let kq: Vec<f64> = inputs.iter().map(|x| k(x, &q)).collect();
            let rhs: Vec<Vec<f64>> = (0..t).map(|i| vec![targets[i], kq[i]]).collect();
            let sol = gauss_jordan_solve(a.clone(), rhs);
            let mean: f64 = (0..t).map(|i| kq[i] * sol[i][0]).sum();
            let var = 1.0 - (0..t).map(|i| kq[i] * sol[i][1]).sum::<f64>();
            let post = gp.posterior(&q)?;
            worst_mean = worst_mean.max((post.mean - mean).abs());
            worst_var = worst_var.max((post.variance - var.max(0.0)).abs());
        }
    }
    Ok(vec![
        check(
            "posterior mean",
            worst_mean <= 1e-8,
            format!("max abs error {worst_mean:.3e}"),
        ),
        check(
            "posterior variance",
            worst_var <= 1e-8,
            format!("max abs error {worst_var:.3e}"),
        ),
    ])
}

/// Standard normal draw by Box–Muller.
pub fn standard_normal(rng: &mut Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Linear-Gaussian ridge problem (unit label noise, 50 test points) in which
/// every tenth training label is corrupted, so influences span helpful and
/// harmful points.
pub fn synthetic_ridge_problem(n: usize, d: usize, seed: u64) -> Result<RidgeProblem> {
    let mut rng = rng_from_seed(seed);
    let theta: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
    let draw = |corrupt: bool, rng: &mut Rng| {
        let x: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let mut y: f64 =
            x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + standard_normal(rng);
        if corrupt {
            y += 3.0 * standard_normal(rng);
        }
        (x, y)
    };
    let (features, labels): (Vec<_>, Vec<_>) = (0..n).map(|i| draw(i % 10 == 0, &mut rng)).unzip();
    let (test_features, test_labels): (Vec<_>, Vec<_>) =
        (0..50).map(|_| draw(false, &mut rng)).unzip();
    RidgeProblem::new(features, labels, 1.0, test_features, test_labels)
}

/// Exact `L_test(without i) − L_test(full)` for every training point.
pub fn leave_one_out_deltas(problem: &RidgeProblem) -> Result<Vec<f64>> {
    let full = problem.test_loss(&problem.fit(None)?);
    (0..problem.n_train())
        .map(|i| Ok(problem.test_loss(&problem.fit(Some(i))?) - full))
        .collect()
}

fn ridge_if(seed: u64) -> Result<Vec<Check>> {
    let problem = synthetic_ridge_problem(200, 5, seed)?;
    let infl = ridge_influences(&problem)?;
    let loo = leave_one_out_deltas(&problem)?;
    let r = pearson(&infl, &loo);
    Ok(vec![check(
        "influence vs leave-one-out",
        r >= 0.9,
        format!("pearson r = {r:.5} (n=200, d=5)"),
    )])
}
