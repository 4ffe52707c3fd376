//! Inner-problem estimators and the order-statistic noise law.
//!
//! For a fixed ratio, `k` mixtures are drawn, each is evaluated, and the
//! minimum loss is the estimate. When each loss is a shifted truncated
//! exponential on `[0, c]` with rate `λ`, the estimate's error is the first
//! order statistic of `k` such draws, with
//!
//! ```text
//! CDF(u) = 1 − (1 − (1 − e^{−λu}) / (1 − e^{−λc}))^k
//! PDF(u) = λk e^{−λu} / (1 − e^{−λc}) · ((e^{−λu} − e^{−λc}) / (1 − e^{−λc}))^{k−1}
//! ```

use serde::{Deserialize, Serialize};

use crate::engine::build_manifest;
use crate::error::{Error, Result};
use crate::evaluate::{EvalError, EvaluatorHandle};
use crate::ifweights::{default_shift_epsilon, normalize_weights, NormalizedWeights};
use crate::seed::{derive_seed, rng_from_seed, Rng, TAG_EVALUATE, TAG_MANIFEST};
use crate::types::{DomainDataset, EstimatorKind, MixingRatio, MixtureManifest, RunConfig};

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncExpParams {
    pub rate: f64,
    pub cutoff: f64,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl TruncExpParams {
    pub fn new(rate: f64, cutoff: f64, k: usize) -> Result<Self> {
        let p = TruncExpParams { rate, cutoff, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::DomainError(format!(
                "rate {} must be positive",
                self.rate
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::DomainError(format!(
                "cutoff {} must be positive",
                self.cutoff
            )));
        }
        if self.k == 0 {
            return Err(Error::DomainError(
                "sampling size k must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn mass(&self) -> f64 {
        // 1 − e^{−λc}
        -(-self.rate * self.cutoff).exp_m1()
    }
}

/// Density of the minimum of `k` truncated-exponential draws.
pub fn order_stat_pdf(u: f64, p: &TruncExpParams) -> f64 {
    if !(0.0..=p.cutoff).contains(&u) {
        return 0.0;
    }
    let mass = p.mass();
    let head = p.rate * p.k as f64 * (-p.rate * u).exp() / mass;
    let tail = ((-p.rate * u).exp() - (-p.rate * p.cutoff).exp()) / mass;
    head * tail.max(0.0).powi(p.k as i32 - 1)
}

/// CDF of the minimum of `k` truncated-exponential draws; clamped outside
/// `[0, c]`.
pub fn order_stat_cdf(u: f64, p: &TruncExpParams) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= p.cutoff {
        return 1.0;
    }
    let single = -(-p.rate * u).exp_m1() / p.mass();
    let survive = (1.0 - single).clamp(0.0, 1.0);
    1.0 - survive.powi(p.k as i32)
}

/// Inverse of [`order_stat_cdf`] by bisection.
pub fn order_stat_quantile(q: f64, p: &TruncExpParams) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (0.0, p.cutoff);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if order_stat_cdf(mid, p) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * p.cutoff {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// One truncated-exponential variate on `[0, cutoff]` by inverse CDF.
pub fn sample_truncexp(rate: f64, cutoff: f64, rng: &mut impl rand::Rng) -> f64 {
    let u: f64 = rng.random();
    let mass = -(-rate * cutoff).exp_m1();
    // u·mass ∈ [0, mass) keeps the log argument in (e^{−λc}, 1]
    let x = -(-u * mass).ln_1p() / rate;
    x.clamp(0.0, cutoff)
}

/// Minimum of `k` truncated-exponential draws.
pub fn sample_order_stat(p: &TruncExpParams, rng_seed: u64) -> f64 {
    let mut rng = rng_from_seed(rng_seed);
    sample_order_stat_with(p, &mut rng)
}

pub fn sample_order_stat_with(p: &TruncExpParams, rng: &mut Rng) -> f64 {
    (0..p.k)
        .map(|_| sample_truncexp(p.rate, p.cutoff, rng))
        .fold(f64::INFINITY, f64::min)
}

/// Per-domain sampling distributions for one estimator variant.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    kind: EstimatorKind,
    with_replacement: bool,
    weights: Vec<NormalizedWeights>,
}

impl SamplingPlan {
    /// `shift_epsilon = None` uses the relative default per domain.
    pub fn new(
        domains: &[DomainDataset],
        kind: EstimatorKind,
        with_replacement: bool,
        shift_epsilon: Option<f64>,
    ) -> Result<Self> {
        let weights = domains
            .iter()
            .map(|d| match kind {
                EstimatorKind::UniformRandom => Ok(NormalizedWeights::uniform(d)),
                EstimatorKind::IfDriven => {
                    normalize_weights(d, shift_epsilon.unwrap_or_else(|| default_shift_epsilon(d)))
                }
                EstimatorKind::RemoveHarmful => Ok(NormalizedWeights::remove_harmful(d)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SamplingPlan {
            kind,
            with_replacement,
            weights,
        })
    }

    pub fn for_config(domains: &[DomainDataset], cfg: &RunConfig) -> Result<Self> {
        Self::new(
            domains,
            cfg.estimator_kind,
            cfg.with_replacement,
            cfg.influence_epsilon,
        )
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn weights(&self) -> &[NormalizedWeights] {
        &self.weights
    }

    pub fn with_replacement(&self) -> bool {
        self.with_replacement
    }

    pub fn n_domains(&self) -> usize {
        self.weights.len()
    }

    pub fn manifest(
        &self,
        ratio: &MixingRatio,
        total_size: usize,
        seed: u64,
    ) -> Result<MixtureManifest> {
        build_manifest(
            ratio,
            total_size,
            &self.weights,
            self.with_replacement,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Minimum of `all_losses` (minimization convention).
    pub value: f64,
    pub best_index: usize,
    pub best_manifest: MixtureManifest,
    pub manifests: Vec<MixtureManifest>,
    /// Per-sample losses in the minimization convention.
    pub all_losses: Vec<f64>,
    /// Per-sample feedback exactly as the evaluator returned it.
    pub raw_feedback: Vec<f64>,
    pub all_digests: Vec<String>,
}

/// Estimate the best achievable loss at `ratio` from `cfg.sampling_size`
/// sampled mixtures.
pub fn estimate_inner(
    ratio: &MixingRatio,
    domains: &[DomainDataset],
    cfg: &RunConfig,
    evaluator: &EvaluatorHandle,
    rng_seed: u64,
) -> Result<EstimateResult> {
    if ratio.dim() != domains.len() {
        return Err(Error::DimensionMismatch {
            expected: domains.len(),
            got: ratio.dim(),
        });
    }
    let plan = SamplingPlan::for_config(domains, cfg)?;
    estimate_with_plan(ratio, &plan, cfg, evaluator, 0, rng_seed)
}

/// Same as [`estimate_inner`] with precomputed sampling weights.
pub fn estimate_with_plan(
    ratio: &MixingRatio,
    plan: &SamplingPlan,
    cfg: &RunConfig,
    evaluator: &EvaluatorHandle,
    iteration: u64,
    rng_seed: u64,
) -> Result<EstimateResult> {
    if ratio.dim() != plan.n_domains() {
        return Err(Error::DimensionMismatch {
            expected: plan.n_domains(),
            got: ratio.dim(),
        });
    }
    let k = cfg.sampling_size;
    let manifests = (0..k)
        .map(|j| {
            plan.manifest(
                ratio,
                cfg.mixture_size,
                derive_seed(rng_seed, &[TAG_MANIFEST, j as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let eval_seed = |j: usize| derive_seed(rng_seed, &[TAG_EVALUATE, j as u64]);

    let outcomes: Vec<std::result::Result<f64, EvalError>> = if evaluator.supports_concurrency()
        && k > 1
    {
        std::thread::scope(|s| {
            let handles: Vec<_> = manifests
                .iter()
                .enumerate()
                .map(|(j, m)| s.spawn(move || evaluator.evaluate(m, iteration, j, eval_seed(j))))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(EvalError::ChildFailed("evaluator panicked".into()))
                    })
                })
                .collect()
        })
    } else {
        manifests
            .iter()
            .enumerate()
            .map(|(j, m)| evaluator.evaluate(m, iteration, j, eval_seed(j)))
            .collect()
    };

    let mut raw_feedback = Vec::with_capacity(k);
    for (sample_index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(v) => raw_feedback.push(v),
            Err(source) => {
                return Err(Error::EvaluatorFailure {
                    sample_index,
                    source,
                })
            }
        }
    }
    let all_losses: Vec<f64> = raw_feedback
        .iter()
        .map(|&v| if cfg.maximize { -v } else { v })
        .collect();
    let (best_index, value) =
        all_losses
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
            );
    let all_digests = manifests.iter().map(MixtureManifest::digest).collect();
    Ok(EstimateResult {
        value,
        best_index,
        best_manifest: manifests[best_index].clone(),
        manifests,
        all_losses,
        raw_feedback,
        all_digests,
    })
}
