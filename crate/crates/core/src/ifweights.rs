//! Influence-weighted sampling within a domain, influence file loading, and
//! an exact ridge-regression influence computation used as a small-scale
//! reference.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::{rng_from_seed, Rng};
use crate::types::{DataPoint, DomainDataset};

/// Fraction of lowest-influence points dropped by the remove-harmful variant.
pub const HARMFUL_FRACTION: f64 = 0.2;

/// Sampling distribution over one domain's points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedWeights {
    pub domain: String,
    pub point_ids: Vec<String>,
    pub probs: Vec<f64>,
    pub shift_epsilon: f64,
}

impl NormalizedWeights {
    /// Equal probability for every point.
    pub fn uniform(domain: &DomainDataset) -> Self {
        let n = domain.len();
        NormalizedWeights {
            domain: domain.name().to_string(),
            point_ids: domain.points().iter().map(|p| p.point_id.clone()).collect(),
            probs: vec![1.0 / n as f64; n],
            shift_epsilon: 0.0,
        }
    }

    /// Uniform over the points that survive dropping `⌊0.2·|D|⌋` lowest
    /// influences. At the cutoff, lexicographically smaller ids are kept.
    pub fn remove_harmful(domain: &DomainDataset) -> Self {
        let n = domain.len();
        let drop = (HARMFUL_FRACTION * n as f64).floor() as usize;
        let mut order: Vec<&DataPoint> = domain.points().iter().collect();
        order.sort_by(|a, b| {
            a.influence
                .total_cmp(&b.influence)
                .then_with(|| b.point_id.cmp(&a.point_id))
        });
        let mut dropped: std::collections::HashSet<&str> =
            order[..drop].iter().map(|p| p.point_id.as_str()).collect();
        let kept: Vec<String> = domain
            .points()
            .iter()
            .filter(|p| !dropped.remove(p.point_id.as_str()))
            .map(|p| p.point_id.clone())
            .collect();
        let k = kept.len();
        NormalizedWeights {
            domain: domain.name().to_string(),
            point_ids: kept,
            probs: vec![1.0 / k as f64; k],
            shift_epsilon: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `1e-6 · (max I − min I + 1)`.
pub fn default_shift_epsilon(domain: &DomainDataset) -> f64 {
    let (lo, hi) = min_max(domain.influences());
    1e-6 * (hi - lo + 1.0)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Map influence values to sampling probabilities
/// `p_i = (I_i − min I + ε) / Σ_j (I_j − min I + ε)`.
pub fn normalize_weights(domain: &DomainDataset, shift_epsilon: f64) -> Result<NormalizedWeights> {
    if !(shift_epsilon.is_finite() && shift_epsilon > 0.0) {
        return Err(Error::DomainError(format!(
            "shift epsilon must be positive, got {shift_epsilon}"
        )));
    }
    if domain.is_empty() {
        return Err(Error::EmptyDomain(domain.name().to_string()));
    }
    if let Some(p) = domain.points().iter().find(|p| !p.influence.is_finite()) {
        return Err(Error::NonFiniteInfluence {
            domain: domain.name().to_string(),
            point_id: p.point_id.clone(),
        });
    }
    let (lo, _) = min_max(domain.influences());
    let shifted: Vec<f64> = domain
        .influences()
        .map(|v| v - lo + shift_epsilon)
        .collect();
    let total: f64 = shifted.iter().sum();
    Ok(NormalizedWeights {
        domain: domain.name().to_string(),
        point_ids: domain.points().iter().map(|p| p.point_id.clone()).collect(),
        probs: shifted.into_iter().map(|v| v / total).collect(),
        shift_epsilon,
    })
}

/// Draw `count` point ids. Without replacement, draws are sequential with
/// the chosen point removed and the rest renormalized.
pub fn sample_domain(
    weights: &NormalizedWeights,
    count: usize,
    with_replacement: bool,
    rng_seed: u64,
) -> Result<Vec<String>> {
    let mut rng = rng_from_seed(rng_seed);
    sample_domain_with(weights, count, with_replacement, &mut rng)
}

pub fn sample_domain_with(
    weights: &NormalizedWeights,
    count: usize,
    with_replacement: bool,
    rng: &mut Rng,
) -> Result<Vec<String>> {
    Ok(sample_indices(weights, count, with_replacement, rng)?
        .into_iter()
        .map(|i| weights.point_ids[i].clone())
        .collect())
}

pub(crate) fn sample_indices(
    weights: &NormalizedWeights,
    count: usize,
    with_replacement: bool,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let n = weights.len();
    if !with_replacement && count > n {
        return Err(Error::CountExceedsDomain {
            domain: weights.domain.clone(),
            requested: count,
            available: n,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut tree = SumTree::new(&weights.probs);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total = tree.total();
        let i = tree.find(rng.random::<f64>() * total);
        out.push(i);
        if !with_replacement {
            tree.set(i, 0.0);
        }
    }
    Ok(out)
}

/// Fenwick-style sum tree supporting weighted draws and removals in
/// `O(log n)`.
struct SumTree {
    n: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let leaves = n.next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + n].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { n, leaves, nodes }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn set(&mut self, i: usize, w: f64) {
        let mut pos = self.leaves + i;
        self.nodes[pos] = w;
        while pos > 1 {
            pos /= 2;
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1];
        }
    }

    /// Leaf whose cumulative interval contains `target`; never a zero leaf.
    fn find(&self, mut target: f64) -> usize {
        let mut pos = 1;
        while pos < self.leaves {
            let left = self.nodes[2 * pos];
            let right = self.nodes[2 * pos + 1];
            if (target < left && left > 0.0) || right <= 0.0 {
                pos *= 2;
            } else {
                target -= left;
                pos = 2 * pos + 1;
            }
        }
        let i = pos - self.leaves;
        debug_assert!(i < self.n && self.nodes[pos] > 0.0);
        i
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct InfluenceRow {
    point_id: String,
    influence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload_ref: Option<String>,
}

/// Load one domain from a `point_id,influence[,payload_ref]` CSV.
pub fn load_influence_csv(path: &Path, name: &str) -> Result<DomainDataset> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("point_id") || headers.get(1) != Some("influence") {
        return Err(Error::InvalidManifest(format!(
            "{}: expected header `point_id,influence[,payload_ref]`",
            path.display()
        )));
    }
    let mut points = Vec::new();
    for row in reader.deserialize::<InfluenceRow>() {
        let row = row.map_err(csv_err)?;
        points.push(DataPoint {
            point_id: row.point_id,
            influence: row.influence,
            payload_ref: row.payload_ref.filter(|s| !s.is_empty()),
        });
    }
    DomainDataset::new(name, points)
}

pub fn write_influence_csv(path: &Path, domain: &DomainDataset) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let with_payload = domain.points().iter().any(|p| p.payload_ref.is_some());
    if with_payload {
        w.write_record(["point_id", "influence", "payload_ref"])
    } else {
        w.write_record(["point_id", "influence"])
    }
    .map_err(csv_err)?;
    for p in domain.points() {
        let infl = p.influence.to_string();
        if with_payload {
            w.write_record([
                p.point_id.as_str(),
                infl.as_str(),
                p.payload_ref.as_deref().unwrap_or(""),
            ])
        } else {
            w.write_record([p.point_id.as_str(), infl.as_str()])
        }
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ridge regression with squared-error loss, used to check the influence
/// formula against exact retraining.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeProblem {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    reg_lambda: f64,
    test_features: Vec<Vec<f64>>,
    test_labels: Vec<f64>,
}

impl RidgeProblem {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        reg_lambda: f64,
        test_features: Vec<Vec<f64>>,
        test_labels: Vec<f64>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if test_features.len() != test_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: test_features.len(),
                got: test_labels.len(),
            });
        }
        if !(reg_lambda.is_finite() && reg_lambda > 0.0) {
            return Err(Error::DomainError(format!(
                "ridge penalty must be positive, got {reg_lambda}"
            )));
        }
        let d = features
            .first()
            .or(test_features.first())
            .map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::DomainError(
                "ridge problem needs at least one feature".into(),
            ));
        }
        if let Some(bad) = features.iter().chain(&test_features).find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(RidgeProblem {
            features,
            labels,
            reg_lambda,
            test_features,
            test_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.features
            .first()
            .or(self.test_features.first())
            .map_or(0, Vec::len)
    }

    pub fn n_train(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn test_features(&self) -> &[Vec<f64>] {
        &self.test_features
    }

    pub fn test_labels(&self) -> &[f64] {
        &self.test_labels
    }

    /// Cholesky factor of `XᵀX + λI` over the rows not excluded.
    fn hessian_factor(&self, exclude: Option<usize>) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut h = vec![0.0; d * d];
        for (i, x) in self.features.iter().enumerate() {
            if Some(i) == exclude {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            h[a * d + a] += self.reg_lambda;
        }
        linalg::cholesky(&h, d).ok_or(Error::SingularHessian)
    }

    /// Ridge solution, optionally with one training row left out.
    pub fn fit(&self, exclude: Option<usize>) -> Result<Vec<f64>> {
        let d = self.dim();
        let l = self.hessian_factor(exclude)?;
        let mut xty = vec![0.0; d];
        for (i, (x, y)) in self.features.iter().zip(&self.labels).enumerate() {
            if Some(i) == exclude {
                continue;
            }
            for a in 0..d {
                xty[a] += x[a] * y;
            }
        }
        Ok(linalg::cholesky_solve(&l, d, &xty))
    }

    /// `Σ_test ½ (xᵀθ − y)²`.
    pub fn test_loss(&self, theta: &[f64]) -> f64 {
        self.test_features
            .iter()
            .zip(&self.test_labels)
            .map(|(x, y)| 0.5 * (linalg::dot(x, theta) - y).powi(2))
            .sum()
    }
}

/// Influence of every training point on the summed test loss at the exact
/// ridge solution.
///
/// Signed so that a higher value means a more helpful point: the value is
/// the first-order increase in test loss if the point were removed,
/// `∇L_testᵀ H⁻¹ ∇L(z_i)`, which is the negated up-weighting derivative.
pub fn ridge_influences(problem: &RidgeProblem) -> Result<Vec<f64>> {
    let d = problem.dim();
    let l = problem.hessian_factor(None)?;
    let theta = problem.fit(None)?;
    let mut g_test = vec![0.0; d];
    for (x, y) in problem.test_features.iter().zip(&problem.test_labels) {
        let r = linalg::dot(x, &theta) - y;
        for a in 0..d {
            g_test[a] += r * x[a];
        }
    }
    // H⁻¹ ∇L_test once, then one dot product per training point
    let h_inv_g = linalg::cholesky_solve(&l, d, &g_test);
    Ok(problem
        .features
        .iter()
        .zip(&problem.labels)
        .map(|(x, y)| {
            let r = linalg::dot(x, &theta) - y;
            r * linalg::dot(x, &h_inv_g)
        })
        .collect())
}
