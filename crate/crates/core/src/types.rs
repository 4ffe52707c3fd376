//! Domain types shared across the optimizer: mixing ratios, data domains,
//! concrete mixtures, observations and run configuration.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Entries in `[-NEG_CLAMP, 0)` are treated as rounding noise and clamped to zero.
const NEG_CLAMP: f64 = 1e-12;
/// Simplex vectors whose sum is within this of one are kept bit-for-bit.
const EXACT_SUM_TOL: f64 = 1e-12;
/// Largest sum drift tolerated by [`MixingRatio::from_simplex`].
pub const SIMPLEX_DRIFT_TOL: f64 = 1e-6;

/// A point on the probability simplex: the fraction of the mixture drawn from
/// each domain, in configured domain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixingRatio(Vec<f64>);

/// Normalize arbitrary non-negative weights onto the simplex.
///
/// Any positive scale is accepted (`[2, 2]` becomes `[0.5, 0.5]`). Use
/// [`MixingRatio::from_simplex`] when the input is already supposed to be a
/// ratio and only numeric drift should be absorbed.
pub fn validate_ratio(weights: &[f64]) -> Result<MixingRatio> {
    let cleaned = clean_weights(weights)?;
    let sum: f64 = cleaned.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ZeroSum);
    }
    Ok(MixingRatio(normalize(cleaned, sum)))
}

fn clean_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    weights
        .iter()
        .enumerate()
        .map(|(index, &w)| {
            if !w.is_finite() {
                Err(Error::NonFiniteWeight { index })
            } else if w < -NEG_CLAMP {
                Err(Error::NegativeWeight { index, value: w })
            } else {
                Ok(w.max(0.0))
            }
        })
        .collect()
}

fn normalize(mut w: Vec<f64>, sum: f64) -> Vec<f64> {
    if (sum - 1.0).abs() > EXACT_SUM_TOL {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w
}

impl MixingRatio {
    /// Accept a vector that should already lie on the simplex, renormalizing
    /// drift up to [`SIMPLEX_DRIFT_TOL`].
    pub fn from_simplex(weights: &[f64]) -> Result<Self> {
        let cleaned = clean_weights(weights)?;
        let sum: f64 = cleaned.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroSum);
        }
        if (sum - 1.0).abs() > SIMPLEX_DRIFT_TOL {
            return Err(Error::RatioDrift { sum });
        }
        Ok(MixingRatio(normalize(cleaned, sum)))
    }

    /// Same as [`validate_ratio`] but also checks the dimension.
    pub fn with_dim(weights: &[f64], n_domains: usize) -> Result<Self> {
        if weights.len() != n_domains {
            return Err(Error::DimensionMismatch {
                expected: n_domains,
                got: weights.len(),
            });
        }
        validate_ratio(weights)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform ratio needs at least one domain");
        MixingRatio(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn squared_distance(&self, other: &MixingRatio) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn linf_distance(&self, other: &MixingRatio) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixingRatio {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        MixingRatio::from_simplex(&v)
    }
}

impl From<MixingRatio> for Vec<f64> {
    fn from(r: MixingRatio) -> Self {
        r.0
    }
}

impl fmt::Display for MixingRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w:.4}")?;
        }
        write!(f, "]")
    }
}

/// Largest-remainder apportionment of `total` items according to `ratio`.
///
/// Remainder ties go to the lower domain index. The result sums to `total`
/// and each count is within one of `ratio[i] * total`.
pub fn apportion(ratio: &MixingRatio, total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = ratio.weights().iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    // floor() of drifted quotas can overshoot by one in pathological cases
    let mut order: Vec<usize> = (0..counts.len()).collect();
    if assigned <= total {
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(total - assigned) {
            counts[i] += 1;
        }
    } else {
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            ra.total_cmp(&rb).then(b.cmp(&a))
        });
        let mut excess = assigned - total;
        for &i in order.iter().cycle() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub point_id: String,
    pub influence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
}

impl DataPoint {
    pub fn new(point_id: impl Into<String>, influence: f64) -> Self {
        DataPoint {
            point_id: point_id.into(),
            influence,
            payload_ref: None,
        }
    }
}

/// A named data domain with per-point influence values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct DomainDataset {
    name: String,
    points: Vec<DataPoint>,
}

#[derive(Deserialize)]
struct RawDomain {
    name: String,
    points: Vec<DataPoint>,
}

impl TryFrom<RawDomain> for DomainDataset {
    type Error = Error;

    fn try_from(raw: RawDomain) -> Result<Self> {
        DomainDataset::new(raw.name, raw.points)
    }
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, points: Vec<DataPoint>) -> Result<Self> {
        let name = name.into();
        if points.is_empty() {
            return Err(Error::EmptyDomain(name));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !p.influence.is_finite() {
                return Err(Error::NonFiniteInfluence {
                    domain: name,
                    point_id: p.point_id.clone(),
                });
            }
            if !seen.insert(p.point_id.as_str()) {
                return Err(Error::DuplicatePointId {
                    domain: name,
                    point_id: p.point_id.clone(),
                });
            }
        }
        Ok(DomainDataset { name, points })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn influences(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.influence)
    }
}

/// A concrete selection of `total_size` points across domains that realizes a
/// target ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct MixtureManifest {
    selections: IndexMap<String, Vec<String>>,
    target_ratio: MixingRatio,
    total_size: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    with_replacement: bool,
}

#[derive(Deserialize)]
struct RawManifest {
    selections: IndexMap<String, Vec<String>>,
    target_ratio: MixingRatio,
    total_size: usize,
    #[serde(default)]
    with_replacement: bool,
}

impl TryFrom<RawManifest> for MixtureManifest {
    type Error = Error;

    fn try_from(raw: RawManifest) -> Result<Self> {
        MixtureManifest::new(
            raw.selections,
            raw.target_ratio,
            raw.total_size,
            raw.with_replacement,
        )
    }
}

impl MixtureManifest {
    /// Build a manifest, checking the count and distinctness invariants.
    /// Membership in the source domains is checked by [`Self::check_domains`].
    pub fn new(
        selections: IndexMap<String, Vec<String>>,
        target_ratio: MixingRatio,
        total_size: usize,
        with_replacement: bool,
    ) -> Result<Self> {
        if total_size == 0 {
            return Err(Error::InvalidManifest("total_size must be positive".into()));
        }
        if selections.len() != target_ratio.dim() {
            return Err(Error::DimensionMismatch {
                expected: target_ratio.dim(),
                got: selections.len(),
            });
        }
        let counts: Vec<usize> = selections.values().map(Vec::len).collect();
        if counts.iter().sum::<usize>() != total_size {
            return Err(Error::InvalidManifest(format!(
                "selected {} points but total_size is {total_size}",
                counts.iter().sum::<usize>()
            )));
        }
        let expected = apportion(&target_ratio, total_size);
        if counts != expected {
            return Err(Error::InvalidManifest(format!(
                "per-domain counts {counts:?} differ from apportionment {expected:?}"
            )));
        }
        if !with_replacement {
            for (domain, ids) in &selections {
                let mut seen = HashSet::with_capacity(ids.len());
                if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                    return Err(Error::InvalidManifest(format!(
                        "point `{dup}` selected twice from `{domain}`"
                    )));
                }
            }
        }
        Ok(MixtureManifest {
            selections,
            target_ratio,
            total_size,
            with_replacement,
        })
    }

    /// Check that the manifest's domains match `domains` (same order) and
    /// that every selected id exists.
    pub fn check_domains(&self, domains: &[DomainDataset]) -> Result<()> {
        if domains.len() != self.selections.len() {
            return Err(Error::DimensionMismatch {
                expected: domains.len(),
                got: self.selections.len(),
            });
        }
        for ((name, ids), domain) in self.selections.iter().zip(domains) {
            if name != domain.name() {
                return Err(Error::InvalidManifest(format!(
                    "expected domain `{}`, found `{name}`",
                    domain.name()
                )));
            }
            let known: HashSet<&str> = domain
                .points()
                .iter()
                .map(|p| p.point_id.as_str())
                .collect();
            if let Some(missing) = ids.iter().find(|id| !known.contains(id.as_str())) {
                return Err(Error::InvalidManifest(format!(
                    "point `{missing}` does not exist in `{name}`"
                )));
            }
        }
        Ok(())
    }

    pub fn selections(&self) -> &IndexMap<String, Vec<String>> {
        &self.selections
    }

    pub fn target_ratio(&self) -> &MixingRatio {
        &self.target_ratio
    }

    pub fn total_size(&self) -> usize {
        self.total_size
    }

    pub fn with_replacement(&self) -> bool {
        self.with_replacement
    }

    pub fn counts(&self) -> Vec<usize> {
        self.selections.values().map(Vec::len).collect()
    }

    /// Stable content hash over the sorted `(domain, point_id)` pairs.
    pub fn digest(&self) -> String {
        let mut pairs: Vec<(&str, &str)> = self
            .selections
            .iter()
            .flat_map(|(d, ids)| ids.iter().map(move |id| (d.as_str(), id.as_str())))
            .collect();
        pairs.sort_unstable();
        let mut hasher = Sha256::new();
        for (d, id) in pairs {
            hasher.update((d.len() as u64).to_le_bytes());
            hasher.update(d.as_bytes());
            hasher.update((id.len() as u64).to_le_bytes());
            hasher.update(id.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Realized ratio of a manifest: per-domain counts over `total_size`.
pub fn ratio_of(manifest: &MixtureManifest) -> MixingRatio {
    let m = manifest.total_size() as f64;
    MixingRatio(
        manifest
            .counts()
            .into_iter()
            .map(|c| c as f64 / m)
            .collect(),
    )
}

/// One BO observation; `loss` follows the minimization convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub iteration: u64,
    pub ratio: MixingRatio,
    pub loss: f64,
    pub manifest_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    UniformRandom,
    #[default]
    IfDriven,
    RemoveHarmful,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::UniformRandom => "uniform_random",
            EstimatorKind::IfDriven => "if_driven",
            EstimatorKind::RemoveHarmful => "remove_harmful",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(EstimatorKind::UniformRandom),
            "if_driven" => Ok(EstimatorKind::IfDriven),
            "remove_harmful" => Ok(EstimatorKind::RemoveHarmful),
            other => Err(Error::ConfigInvalid(format!("unknown estimator `{other}`"))),
        }
    }
}

fn default_beta() -> f64 {
    0.5
}
fn default_zeta() -> f64 {
    0.01
}
fn default_n_candidates() -> usize {
    4096
}
fn default_refine_steps() -> usize {
    50
}
fn default_refine_step_size() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_domains: usize,
    /// Total number of points in every mixture (M).
    pub mixture_size: usize,
    /// Mixtures drawn per ratio (k).
    pub sampling_size: usize,
    /// BO iterations after the initial observation (T).
    pub iterations: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimator_kind: EstimatorKind,
    /// Feedback is a score to maximize; it is negated internally.
    #[serde(default)]
    pub maximize: bool,
    #[serde(default)]
    pub with_replacement: bool,
    /// Shift constant for influence normalization; relative default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence_epsilon: Option<f64>,
    #[serde(default = "default_n_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_refine_steps")]
    pub n_refine_steps: usize,
    #[serde(default = "default_refine_step_size")]
    pub refine_step_size: f64,
}

impl RunConfig {
    pub fn new(n_domains: usize, mixture_size: usize) -> Self {
        RunConfig {
            n_domains,
            mixture_size,
            sampling_size: 1,
            iterations: 10,
            beta: default_beta(),
            zeta: default_zeta(),
            seed: 0,
            estimator_kind: EstimatorKind::default(),
            maximize: false,
            with_replacement: false,
            influence_epsilon: None,
            n_candidates: default_n_candidates(),
            n_refine_steps: default_refine_steps(),
            refine_step_size: default_refine_step_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        if self.n_domains == 0 {
            return fail("n_domains must be positive");
        }
        if self.mixture_size < self.n_domains {
            return fail("mixture_size must be at least n_domains");
        }
        if self.sampling_size == 0 {
            return fail("sampling_size must be at least 1");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return fail("beta must be a non-negative finite number");
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return fail("zeta must be positive");
        }
        if let Some(eps) = self.influence_epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return fail("influence_epsilon must be positive");
            }
        }
        if self.n_candidates == 0 {
            return fail("n_candidates must be positive");
        }
        if !(self.refine_step_size.is_finite() && self.refine_step_size > 0.0) {
            return fail("refine_step_size must be positive");
        }
        Ok(())
    }
}
