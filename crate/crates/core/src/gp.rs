//! Gaussian-process surrogate over mixing ratios with a squared-exponential
//! kernel.
//!
//! The posterior follows the textbook noisy-GP form: with `A = K + ζI`,
//! `μ(q) = κ(q)ᵀ A⁻¹ y` and `σ²(q) = κ(q,q) − κ(q)ᵀ A⁻¹ κ(q)`. `A` is factored
//! once per state with Cholesky; jitter is escalated only when the factor
//! fails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{MixingRatio, Observation};

const LENGTHSCALE_MIN: f64 = 1e-3;
const LENGTHSCALE_MAX: f64 = 1e3;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        if !(LENGTHSCALE_MIN..=LENGTHSCALE_MAX).contains(&lengthscale) {
            return Err(Error::InvalidKernel(format!(
                "lengthscale {lengthscale} outside [{LENGTHSCALE_MIN}, {LENGTHSCALE_MAX}]"
            )));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "signal variance {signal_variance} must be positive"
            )));
        }
        Ok(KernelParams {
            lengthscale,
            signal_variance,
        })
    }

    pub fn with_lengthscale(lengthscale: f64) -> Result<Self> {
        Self::new(lengthscale, 1.0)
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            lengthscale: 1.0,
            signal_variance: 1.0,
        }
    }
}

/// `σ_f² · exp(−‖a−b‖² / (2m²))`.
pub fn se_kernel(a: &MixingRatio, b: &MixingRatio, params: &KernelParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(kernel_unchecked(a.weights(), b.weights(), params))
}

#[inline]
fn kernel_unchecked(a: &[f64], b: &[f64], params: &KernelParams) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    params.signal_variance * (-d2 / (2.0 * params.lengthscale * params.lengthscale)).exp()
}

/// `K + ζI` for the given inputs, row-major.
pub fn gram_matrix(inputs: &[MixingRatio], params: &KernelParams, zeta: f64) -> Vec<f64> {
    let t = inputs.len();
    let mut k = vec![0.0; t * t];
    for i in 0..t {
        for j in 0..=i {
            let v = kernel_unchecked(inputs[i].weights(), inputs[j].weights(), params);
            k[i * t + j] = v;
            k[j * t + i] = v;
        }
        k[i * t + i] += zeta;
    }
    k
}

/// Cholesky of `a`, retrying with diagonal jitter 1e-10, 1e-9, ... 1e-4.
/// Returns the factor and the jitter that was needed.
fn factor_with_jitter(a: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    if let Some(l) = linalg::cholesky(a, n) {
        return Ok((l, 0.0));
    }
    let mut jitter = JITTER_START;
    let mut work = a.to_vec();
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        work.copy_from_slice(a);
        for i in 0..n {
            work[i * n + i] += jitter;
        }
        if let Some(l) = linalg::cholesky(&work, n) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalBreakdown(format!(
        "covariance of {n} observations not positive definite even with jitter {JITTER_MAX}"
    )))
}

/// How raw targets are mapped before entering the zero-mean GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    /// Targets are used as-is.
    #[default]
    None,
    /// Subtract the mean; divide by the standard deviation once t ≥ 2.
    MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
    pub stddev: f64,
}

/// Immutable GP posterior state. Appending returns a new state.
#[derive(Debug, Clone)]
pub struct GpState {
    dim: usize,
    inputs: Vec<MixingRatio>,
    targets: Vec<f64>,
    kernel: KernelParams,
    zeta: f64,
    standardize: Standardize,
    // derived
    offset: f64,
    scale: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Serializable form of a [`GpState`]; the factor is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpCheckpoint {
    pub dim: usize,
    pub inputs: Vec<MixingRatio>,
    pub targets: Vec<f64>,
    pub kernel: KernelParams,
    pub zeta: f64,
    #[serde(default)]
    pub standardize: Standardize,
}

impl GpState {
    pub fn new(dim: usize, kernel: KernelParams, zeta: f64) -> Result<Self> {
        Self::build(dim, Vec::new(), Vec::new(), kernel, zeta, Standardize::None)
    }

    pub fn with_standardize(self, standardize: Standardize) -> Result<Self> {
        Self::build(
            self.dim,
            self.inputs,
            self.targets,
            self.kernel,
            self.zeta,
            standardize,
        )
    }

    pub fn from_observations(
        dim: usize,
        inputs: Vec<MixingRatio>,
        targets: Vec<f64>,
        kernel: KernelParams,
        zeta: f64,
        standardize: Standardize,
    ) -> Result<Self> {
        Self::build(dim, inputs, targets, kernel, zeta, standardize)
    }

    fn build(
        dim: usize,
        inputs: Vec<MixingRatio>,
        targets: Vec<f64>,
        kernel: KernelParams,
        zeta: f64,
        standardize: Standardize,
    ) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "zeta {zeta} must be positive"
            )));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(bad) = inputs.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        let (offset, scale) = standardization(&targets, standardize);
        let t = inputs.len();
        let (chol, jitter, alpha) = if t == 0 {
            (Vec::new(), 0.0, Vec::new())
        } else {
            let a = gram_matrix(&inputs, &kernel, zeta);
            let (chol, jitter) = factor_with_jitter(&a, t)?;
            let y: Vec<f64> = targets.iter().map(|v| (v - offset) / scale).collect();
            let alpha = linalg::cholesky_solve(&chol, t, &y);
            (chol, jitter, alpha)
        };
        Ok(GpState {
            dim,
            inputs,
            targets,
            kernel,
            zeta,
            standardize,
            offset,
            scale,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[MixingRatio] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn standardize(&self) -> Standardize {
        self.standardize
    }

    /// Diagonal jitter that was added on top of ζ to factor the covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Targets after standardization, i.e. what the zero-mean GP sees.
    pub fn standardized_targets(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|v| (v - self.offset) / self.scale)
            .collect()
    }

    /// Lower Cholesky factor of `K + ζI` (row-major, t × t).
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// Same data under different kernel hyperparameters.
    pub fn with_kernel(&self, kernel: KernelParams) -> Result<Self> {
        Self::build(
            self.dim,
            self.inputs.clone(),
            self.targets.clone(),
            kernel,
            self.zeta,
            self.standardize,
        )
    }

    pub fn append(&self, ratio: MixingRatio, target: f64) -> Result<Self> {
        if ratio.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: ratio.dim(),
            });
        }
        if !target.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "target {target} is not finite"
            )));
        }
        let mut inputs = self.inputs.clone();
        let mut targets = self.targets.clone();
        inputs.push(ratio);
        targets.push(target);
        Self::build(
            self.dim,
            inputs,
            targets,
            self.kernel,
            self.zeta,
            self.standardize,
        )
    }

    /// Posterior at `query`, with variance clamped into `[0, κ(q,q)]`.
    pub fn posterior(&self, query: &MixingRatio) -> Result<Posterior> {
        let (mean, var) = self.posterior_unclamped(query)?;
        let prior = self.kernel.signal_variance;
        let var = var.clamp(0.0, prior);
        let s2 = self.scale * self.scale;
        Ok(Posterior {
            mean,
            variance: var * s2,
            stddev: var.sqrt() * self.scale,
        })
    }

    /// De-standardized mean and the *standardized* variance before clamping.
    pub(crate) fn posterior_unclamped(&self, query: &MixingRatio) -> Result<(f64, f64)> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let prior = self.kernel.signal_variance;
        let t = self.len();
        if t == 0 {
            return Ok((self.offset, prior));
        }
        let kq: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| kernel_unchecked(x.weights(), query.weights(), &self.kernel))
            .collect();
        let mean = linalg::dot(&kq, &self.alpha);
        let v = linalg::forward_solve(&self.chol, t, &kq);
        let var = prior - linalg::dot(&v, &v);
        Ok((self.offset + self.scale * mean, var))
    }

    pub fn checkpoint(&self) -> GpCheckpoint {
        GpCheckpoint {
            dim: self.dim,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            kernel: self.kernel,
            zeta: self.zeta,
            standardize: self.standardize,
        }
    }

    pub fn from_checkpoint(cp: GpCheckpoint) -> Result<Self> {
        Self::build(
            cp.dim,
            cp.inputs,
            cp.targets,
            cp.kernel,
            cp.zeta,
            cp.standardize,
        )
    }
}

fn standardization(targets: &[f64], mode: Standardize) -> (f64, f64) {
    match mode {
        Standardize::None => (0.0, 1.0),
        Standardize::MeanStd => {
            let t = targets.len();
            if t == 0 {
                return (0.0, 1.0);
            }
            let mean = targets.iter().sum::<f64>() / t as f64;
            if t < 2 {
                return (mean, 1.0);
            }
            let var = targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1) as f64;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        }
    }
}

/// Append an observation's (ratio, loss) pair.
pub fn append_observation(state: &GpState, obs: &Observation) -> Result<GpState> {
    state.append(obs.ratio.clone(), obs.loss)
}

/// Exact log marginal likelihood
/// `−½ yᵀA⁻¹y − ½ log det A − (t/2) log 2π` with `A = K + ζI`.
pub fn log_marginal_likelihood(
    inputs: &[MixingRatio],
    targets: &[f64],
    params: &KernelParams,
    zeta: f64,
) -> Result<f64> {
    let t = inputs.len();
    if targets.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            got: targets.len(),
        });
    }
    let a = gram_matrix(inputs, params, zeta);
    let (l, _) = factor_with_jitter(&a, t)?;
    let alpha = linalg::cholesky_solve(&l, t, targets);
    Ok(-0.5 * linalg::dot(targets, &alpha)
        - 0.5 * linalg::log_det(&l, t)
        - 0.5 * t as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// `count` log-spaced lengthscales from `lo` to `hi` inclusive.
pub fn log_spaced_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Default MLE grid: 25 log-spaced points in `[1e-2, 1e1]`.
pub fn default_lengthscale_grid() -> Vec<f64> {
    log_spaced_grid(1e-2, 1e1, 25)
}

/// Grid-search maximum-likelihood lengthscale (unit signal variance).
/// Ties go to the smaller lengthscale.
pub fn fit_lengthscale(
    inputs: &[MixingRatio],
    targets: &[f64],
    zeta: f64,
    grid: &[f64],
) -> Result<KernelParams> {
    if inputs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: inputs.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidKernel("empty lengthscale grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, KernelParams)> = None;
    for &m in &sorted {
        let params = KernelParams::with_lengthscale(m)?;
        let ll = log_marginal_likelihood(inputs, targets, &params, zeta)?;
        if best.is_none_or(|(b, _)| ll > b) {
            best = Some((ll, params));
        }
    }
    Ok(best.map(|(_, p)| p).expect("grid is non-empty"))
}
