//! Evaluators map a mixture manifest to a scalar loss. Synthetic tasks are
//! closed-form and pure; the external-process bridge talks line-delimited
//! JSON to a child process.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::time::Duration;

use indexmap::IndexMap;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::estimator::{sample_truncexp, TruncExpParams};
use crate::seed::{derive_seed, rng_from_seed, TAG_NOISE};
use crate::types::{ratio_of, DataPoint, DomainDataset, MixingRatio, MixtureManifest};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("evaluation timed out after {0:?}")]
    Timeout(Duration),

    #[error("evaluator returned a non-finite loss ({0})")]
    NonFiniteLoss(f64),

    #[error("evaluator child failed: {0}")]
    ChildFailed(String),

    #[error("evaluator reported an error: {0}")]
    Remote(String),

    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    SyntheticQuadratic,
    SyntheticTruncexp,
    TableLookup,
    ExternalProcess,
    /// A caller-supplied closure.
    Custom,
}

/// A black-box loss oracle. Implementations must be stateless across calls:
/// every call is an independent run from the same starting point.
pub trait Evaluator: Send + Sync {
    fn evaluate(
        &self,
        manifest: &MixtureManifest,
        iteration: u64,
        sample_index: usize,
        seed: u64,
    ) -> std::result::Result<f64, EvalError>;

    fn kind(&self) -> EvaluatorKind;

    fn supports_concurrency(&self) -> bool {
        true
    }

    /// True minimum loss, when the task knows it.
    fn known_optimum(&self) -> Option<f64> {
        None
    }
}

/// Shared, cheaply clonable evaluator reference.
#[derive(Clone)]
pub struct EvaluatorHandle {
    inner: Arc<dyn Evaluator>,
}

impl fmt::Debug for EvaluatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvaluatorHandle")
            .field("kind", &self.kind())
            .field("supports_concurrency", &self.supports_concurrency())
            .finish()
    }
}

impl EvaluatorHandle {
    pub fn new<E: Evaluator + 'static>(evaluator: E) -> Self {
        EvaluatorHandle {
            inner: Arc::new(evaluator),
        }
    }

    pub fn from_arc(inner: Arc<dyn Evaluator>) -> Self {
        EvaluatorHandle { inner }
    }

    pub fn kind(&self) -> EvaluatorKind {
        self.inner.kind()
    }

    pub fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.inner.known_optimum()
    }

    /// Evaluate and reject non-finite losses.
    pub fn evaluate(
        &self,
        manifest: &MixtureManifest,
        iteration: u64,
        sample_index: usize,
        seed: u64,
    ) -> std::result::Result<f64, EvalError> {
        let loss = self
            .inner
            .evaluate(manifest, iteration, sample_index, seed)?;
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(EvalError::NonFiniteLoss(loss))
        }
    }
}

pub fn evaluate(
    handle: &EvaluatorHandle,
    manifest: &MixtureManifest,
    iteration: u64,
    sample_index: usize,
    seed: u64,
) -> std::result::Result<f64, EvalError> {
    handle.evaluate(manifest, iteration, sample_index, seed)
}

/// Closure-backed evaluator, handy for tests and embedding.
pub struct FnEvaluator<F> {
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&MixtureManifest) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnEvaluator { f }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&MixtureManifest) -> f64 + Send + Sync,
{
    fn evaluate(
        &self,
        m: &MixtureManifest,
        _: u64,
        _: usize,
        _: u64,
    ) -> std::result::Result<f64, EvalError> {
        Ok((self.f)(m))
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::Custom
    }
}

fn default_curvature() -> f64 {
    1.0
}

/// Closed-form loss surface over ratios with an optional data-quality term
/// and optional truncated-exponential noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub optimum_ratio: MixingRatio,
    pub base_loss: f64,
    #[serde(default = "default_curvature")]
    pub curvature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<TruncExpParams>,
    #[serde(default)]
    pub quality_sensitivity: f64,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if !self.base_loss.is_finite() {
            return Err(Error::ConfigInvalid("base_loss must be finite".into()));
        }
        if !(self.curvature.is_finite() && self.curvature > 0.0) {
            return Err(Error::ConfigInvalid("curvature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.quality_sensitivity) {
            return Err(Error::ConfigInvalid(
                "quality_sensitivity must lie in [0, 1]".into(),
            ));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if noise.cutoff > 1.0 {
                return Err(Error::ConfigInvalid(
                    "noise cutoff must be at most 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-domain influence rescaled to `[0, 1]` by min-max; a constant domain
/// maps to 1.
fn quality_table(domains: &[DomainDataset]) -> HashMap<String, HashMap<String, f64>> {
    domains
        .iter()
        .map(|d| {
            let lo = d.influences().fold(f64::INFINITY, f64::min);
            let hi = d.influences().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            let q = d
                .points()
                .iter()
                .map(|p| {
                    let v = if span > 0.0 {
                        (p.influence - lo) / span
                    } else {
                        1.0
                    };
                    (p.point_id.clone(), v)
                })
                .collect();
            (d.name().to_string(), q)
        })
        .collect()
}

/// `base + curvature·‖ratio_of(X) − r*‖² + sensitivity·(1 − mean quality) + noise`.
pub struct SyntheticQuadratic {
    task: SyntheticTask,
    quality: HashMap<String, HashMap<String, f64>>,
}

impl SyntheticQuadratic {
    pub fn new(task: SyntheticTask, domains: &[DomainDataset]) -> Result<Self> {
        task.validate()?;
        if task.optimum_ratio.dim() != domains.len() {
            return Err(Error::DimensionMismatch {
                expected: domains.len(),
                got: task.optimum_ratio.dim(),
            });
        }
        Ok(SyntheticQuadratic {
            quality: quality_table(domains),
            task,
        })
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    /// Noise-free part of the loss.
    pub fn expected_loss_without_noise(
        &self,
        manifest: &MixtureManifest,
    ) -> std::result::Result<f64, EvalError> {
        let t = &self.task;
        let realized = ratio_of(manifest);
        if realized.dim() != t.optimum_ratio.dim() {
            return Err(EvalError::ProtocolViolation(format!(
                "manifest has {} domains, task expects {}",
                realized.dim(),
                t.optimum_ratio.dim()
            )));
        }
        let mut loss = t.base_loss + t.curvature * realized.squared_distance(&t.optimum_ratio);
        if t.quality_sensitivity > 0.0 {
            let mut sum = 0.0;
            for (domain, ids) in manifest.selections() {
                let table = self.quality.get(domain).ok_or_else(|| {
                    EvalError::ProtocolViolation(format!("unknown domain `{domain}`"))
                })?;
                for id in ids {
                    sum += table.get(id).ok_or_else(|| {
                        EvalError::ProtocolViolation(format!("unknown point `{id}` in `{domain}`"))
                    })?;
                }
            }
            let mean = sum / manifest.total_size() as f64;
            loss += t.quality_sensitivity * (1.0 - mean);
        }
        Ok(loss)
    }
}

impl Evaluator for SyntheticQuadratic {
    fn evaluate(
        &self,
        m: &MixtureManifest,
        _: u64,
        _: usize,
        seed: u64,
    ) -> std::result::Result<f64, EvalError> {
        let mut loss = self.expected_loss_without_noise(m)?;
        if let Some(noise) = &self.task.noise {
            let mut rng = rng_from_seed(derive_seed(seed, &[TAG_NOISE]));
            loss += sample_truncexp(noise.rate, noise.cutoff, &mut rng);
        }
        Ok(loss)
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::SyntheticQuadratic
    }

    /// The noise floor at the optimum ratio; the quality term is not included.
    fn known_optimum(&self) -> Option<f64> {
        Some(self.task.base_loss)
    }
}

/// Ratio-independent loss `base + X`, `X` truncated-exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTruncExp {
    pub base_loss: f64,
    pub rate: f64,
    pub cutoff: f64,
}

impl SyntheticTruncExp {
    pub fn new(base_loss: f64, rate: f64, cutoff: f64) -> Result<Self> {
        TruncExpParams::new(rate, cutoff, 1)?;
        if !base_loss.is_finite() {
            return Err(Error::ConfigInvalid("base_loss must be finite".into()));
        }
        Ok(SyntheticTruncExp {
            base_loss,
            rate,
            cutoff,
        })
    }
}

impl Evaluator for SyntheticTruncExp {
    fn evaluate(
        &self,
        _: &MixtureManifest,
        _: u64,
        _: usize,
        seed: u64,
    ) -> std::result::Result<f64, EvalError> {
        let mut rng = rng_from_seed(derive_seed(seed, &[TAG_NOISE]));
        Ok(self.base_loss + sample_truncexp(self.rate, self.cutoff, &mut rng))
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::SyntheticTruncexp
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(self.base_loss)
    }
}

/// Preloaded losses for offline replay. Slot entries `(iteration,
/// sample_index)` take precedence over digest entries and must match the
/// manifest digest.
#[derive(Debug, Clone, Default)]
pub struct TableLookup {
    by_digest: HashMap<String, f64>,
    by_slot: HashMap<(u64, usize), (String, f64)>,
}

impl TableLookup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_digest(&mut self, digest: impl Into<String>, loss: f64) -> Result<()> {
        let digest = digest.into();
        match self.by_digest.get(&digest) {
            Some(&prev) if prev != loss => Err(Error::ConfigInvalid(format!(
                "digest {digest} recorded with two different losses"
            ))),
            _ => {
                self.by_digest.insert(digest, loss);
                Ok(())
            }
        }
    }

    pub fn insert_slot(
        &mut self,
        iteration: u64,
        sample_index: usize,
        digest: impl Into<String>,
        loss: f64,
    ) {
        self.by_slot
            .insert((iteration, sample_index), (digest.into(), loss));
    }

    /// Load a `digest,loss` CSV.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            digest: String,
            loss: f64,
        }
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let mut table = TableLookup::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(csv_err)?;
            table.insert_digest(row.digest, row.loss)?;
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.by_digest.len() + self.by_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Evaluator for TableLookup {
    fn evaluate(
        &self,
        m: &MixtureManifest,
        iteration: u64,
        j: usize,
        _: u64,
    ) -> std::result::Result<f64, EvalError> {
        let digest = m.digest();
        if let Some((recorded, loss)) = self.by_slot.get(&(iteration, j)) {
            return if *recorded == digest {
                Ok(*loss)
            } else {
                Err(EvalError::ProtocolViolation(format!(
                    "slot {iteration}_{j}: manifest {digest} differs from recorded {recorded}"
                )))
            };
        }
        self.by_digest.get(&digest).copied().ok_or_else(|| {
            EvalError::ProtocolViolation(format!("no recorded loss for digest {digest}"))
        })
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::TableLookup
    }
}

/// Domain → point id → payload reference.
pub type PayloadIndex = HashMap<String, HashMap<String, String>>;

pub fn payload_index(domains: &[DomainDataset]) -> PayloadIndex {
    domains
        .iter()
        .map(|d| {
            let refs = d
                .points()
                .iter()
                .filter_map(|p| p.payload_ref.clone().map(|r| (p.point_id.clone(), r)))
                .collect();
            (d.name().to_string(), refs)
        })
        .collect()
}

/// On-disk manifest: the selection plus its digest and any payload
/// references aligned with the selected ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub iteration: u64,
    pub sample_index: usize,
    pub digest: String,
    #[serde(flatten)]
    pub manifest: MixtureManifest,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub payload_refs: IndexMap<String, Vec<Option<String>>>,
}

impl ManifestFile {
    pub fn new(
        manifest: &MixtureManifest,
        iteration: u64,
        sample_index: usize,
        payloads: &PayloadIndex,
    ) -> Self {
        let any = manifest
            .selections()
            .keys()
            .any(|d| payloads.get(d).is_some_and(|m| !m.is_empty()));
        let payload_refs = if any {
            manifest
                .selections()
                .iter()
                .map(|(d, ids)| {
                    let refs = payloads.get(d);
                    let aligned = ids
                        .iter()
                        .map(|id| refs.and_then(|r| r.get(id).cloned()))
                        .collect();
                    (d.clone(), aligned)
                })
                .collect()
        } else {
            IndexMap::new()
        };
        ManifestFile {
            iteration,
            sample_index,
            digest: manifest.digest(),
            manifest: manifest.clone(),
            payload_refs,
        }
    }

    pub fn file_name(iteration: u64, sample_index: usize) -> String {
        format!("{iteration}_{sample_index}.json")
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::file_name(self.iteration, self.sample_index));
        let body = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn default_timeout_secs() -> f64 {
    6.0 * 3600.0
}

fn default_parallel_children() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalProcessSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_parallel_children")]
    pub parallel_children: usize,
}

struct ChildProc {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
}

impl ChildProc {
    fn shutdown(mut self) {
        drop(self.stdin);
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Serialize)]
struct Request<'a> {
    manifest_path: &'a str,
    iteration: u64,
    sample_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    loss: Option<f64>,
    error: Option<String>,
}

/// Bridge to a long-lived child process speaking line-delimited JSON on its
/// standard streams. One request is in flight per child.
pub struct ExternalProcess {
    spec: ExternalProcessSpec,
    workdir: PathBuf,
    payloads: PayloadIndex,
    slots: Vec<Mutex<Option<ChildProc>>>,
}

impl ExternalProcess {
    /// Manifests are written under `workdir/manifests`, which is also the
    /// child's working directory root.
    pub fn new(
        spec: ExternalProcessSpec,
        workdir: impl Into<PathBuf>,
        payloads: PayloadIndex,
    ) -> Result<Self> {
        if spec.command.trim().is_empty() {
            return Err(Error::ConfigInvalid("external command is empty".into()));
        }
        if !(spec.timeout_secs.is_finite() && spec.timeout_secs > 0.0) {
            return Err(Error::ConfigInvalid("timeout_secs must be positive".into()));
        }
        if spec.parallel_children == 0 {
            return Err(Error::ConfigInvalid(
                "parallel_children must be at least 1".into(),
            ));
        }
        let slots = (0..spec.parallel_children)
            .map(|_| Mutex::new(None))
            .collect();
        Ok(ExternalProcess {
            spec,
            workdir: workdir.into(),
            payloads,
            slots,
        })
    }

    fn spawn(&self) -> std::result::Result<ChildProc, EvalError> {
        let mut child = Command::new(&self.spec.command)
            .args(&self.spec.args)
            .current_dir(&self.workdir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                EvalError::ChildFailed(format!("cannot start `{}`: {e}", self.spec.command))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ChildProc {
            child,
            stdin,
            lines: rx,
        })
    }

    fn acquire_slot(&self, sample_index: usize) -> MutexGuard<'_, Option<ChildProc>> {
        for slot in &self.slots {
            if let Ok(guard) = slot.try_lock() {
                return guard;
            }
        }
        let slot = &self.slots[sample_index % self.slots.len()];
        slot.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn exchange(
        &self,
        proc_: &mut ChildProc,
        request: &str,
    ) -> std::result::Result<f64, EvalError> {
        writeln!(proc_.stdin, "{request}")?;
        proc_.stdin.flush()?;
        let timeout = Duration::from_secs_f64(self.spec.timeout_secs);
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let remaining = deadline.saturating_duration_since(std::time::Instant::now());
            match proc_.lines.recv_timeout(remaining) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return parse_response(&line),
                Ok(Err(e)) => return Err(EvalError::Io(e)),
                Err(mpsc::RecvTimeoutError::Timeout) => return Err(EvalError::Timeout(timeout)),
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    let status = proc_.child.wait()?;
                    return Err(EvalError::ChildFailed(format!(
                        "child exited ({status}) without a response"
                    )));
                }
            }
        }
    }
}

fn parse_response(line: &str) -> std::result::Result<f64, EvalError> {
    let resp: Response = serde_json::from_str(line)
        .map_err(|e| EvalError::ProtocolViolation(format!("bad response `{line}`: {e}")))?;
    match (resp.loss, resp.error) {
        (Some(loss), None) => Ok(loss),
        (None, Some(msg)) => Err(EvalError::Remote(msg)),
        _ => Err(EvalError::ProtocolViolation(format!(
            "response must carry exactly one of `loss` or `error`: `{line}`"
        ))),
    }
}

impl Evaluator for ExternalProcess {
    fn evaluate(
        &self,
        m: &MixtureManifest,
        iteration: u64,
        sample_index: usize,
        _: u64,
    ) -> std::result::Result<f64, EvalError> {
        let file = ManifestFile::new(m, iteration, sample_index, &self.payloads);
        let path = file
            .write_to(&self.workdir.join("manifests"))
            .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
        let request = serde_json::to_string(&Request {
            manifest_path: &path.to_string_lossy(),
            iteration,
            sample_index,
        })
        .map_err(|e| EvalError::ProtocolViolation(e.to_string()))?;

        let mut slot = self.acquire_slot(sample_index);
        if slot.is_none() {
            *slot = Some(self.spawn()?);
        }
        let proc_ = slot.as_mut().expect("child present");
        let outcome = self.exchange(proc_, &request);
        // a child that timed out, died or broke the protocol is not reused
        if matches!(
            outcome,
            Err(EvalError::Timeout(_)
                | EvalError::ChildFailed(_)
                | EvalError::Io(_)
                | EvalError::ProtocolViolation(_))
        ) {
            if let Some(p) = slot.take() {
                p.shutdown();
            }
        }
        outcome
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::ExternalProcess
    }

    fn supports_concurrency(&self) -> bool {
        self.slots.len() > 1
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        for slot in &self.slots {
            let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(p) = guard.take() {
                p.shutdown();
            }
        }
    }
}

/// Serializable evaluator description, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    SyntheticQuadratic(SyntheticTask),
    SyntheticTruncexp {
        base_loss: f64,
        rate: f64,
        cutoff: f64,
    },
    TableLookup {
        table_csv: PathBuf,
    },
    ExternalProcess(ExternalProcessSpec),
}

impl EvaluatorSpec {
    /// Relative paths resolve against `base_dir`; external children run in
    /// `workdir`.
    pub fn build(
        &self,
        domains: &[DomainDataset],
        base_dir: &Path,
        workdir: &Path,
    ) -> Result<EvaluatorHandle> {
        Ok(match self {
            EvaluatorSpec::SyntheticQuadratic(task) => {
                EvaluatorHandle::new(SyntheticQuadratic::new(task.clone(), domains)?)
            }
            EvaluatorSpec::SyntheticTruncexp {
                base_loss,
                rate,
                cutoff,
            } => EvaluatorHandle::new(SyntheticTruncExp::new(*base_loss, *rate, *cutoff)?),
            EvaluatorSpec::TableLookup { table_csv } => {
                EvaluatorHandle::new(TableLookup::from_csv(&base_dir.join(table_csv))?)
            }
            EvaluatorSpec::ExternalProcess(spec) => {
                let mut spec = spec.clone();
                if spec.command.contains('/') && Path::new(&spec.command).is_relative() {
                    spec.command = base_dir.join(&spec.command).to_string_lossy().into_owned();
                }
                std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
                EvaluatorHandle::new(ExternalProcess::new(spec, workdir, payload_index(domains))?)
            }
        })
    }
}

/// Domains `domain_0 … domain_{n−1}` whose influences are uniform on `[−1, 1]`.
pub fn synthetic_domains(
    n_domains: usize,
    points_per_domain: usize,
    seed: u64,
) -> Result<Vec<DomainDataset>> {
    (0..n_domains)
        .map(|d| {
            let mut rng = rng_from_seed(derive_seed(seed, &[d as u64]));
            let points = (0..points_per_domain)
                .map(|i| DataPoint::new(format!("d{d}_p{i:05}"), rng.random_range(-1.0..=1.0)))
                .collect();
            DomainDataset::new(format!("domain_{d}"), points)
        })
        .collect()
}
