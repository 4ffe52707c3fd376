//! The outer optimization loop: propose a ratio, estimate its best loss from
//! sampled mixtures, record the observation, update the GP and track the
//! best mixture seen so far.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::acquire::{propose_ratio, AcquireConfig};
use crate::error::{Error, Result};
use crate::estimator::{estimate_with_plan, EstimateResult, SamplingPlan};
use crate::evaluate::{payload_index, EvaluatorHandle, ManifestFile, PayloadIndex, TableLookup};
use crate::gp::{
    default_lengthscale_grid, fit_lengthscale, GpCheckpoint, GpState, KernelParams, Standardize,
};
use crate::ifweights::{sample_indices, NormalizedWeights};
use crate::seed::{derive_seed, rng_from_seed, TAG_ACQUIRE};
use crate::types::{
    apportion, ratio_of, DomainDataset, MixingRatio, MixtureManifest, Observation, RunConfig,
};

/// Draw a manifest whose per-domain counts are the largest-remainder
/// apportionment of `ratio · total_size`. Domain `d` uses the seed
/// `derive_seed(seed, [d])`.
pub fn build_manifest(
    ratio: &MixingRatio,
    total_size: usize,
    weights: &[NormalizedWeights],
    with_replacement: bool,
    seed: u64,
) -> Result<MixtureManifest> {
    if ratio.dim() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: ratio.dim(),
        });
    }
    let counts = apportion(ratio, total_size);
    // report infeasibility before drawing anything
    if !with_replacement {
        if let Some((w, &c)) = weights.iter().zip(&counts).find(|(w, &c)| c > w.len()) {
            return Err(Error::CountExceedsDomain {
                domain: w.domain.clone(),
                requested: c,
                available: w.len(),
            });
        }
    }
    let mut selections = IndexMap::with_capacity(weights.len());
    for (d, (w, &count)) in weights.iter().zip(&counts).enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &[d as u64]));
        let ids = sample_indices(w, count, with_replacement, &mut rng)?
            .into_iter()
            .map(|i| w.point_ids[i].clone())
            .collect();
        selections.insert(w.domain.clone(), ids);
    }
    MixtureManifest::new(selections, ratio.clone(), total_size, with_replacement)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMixture {
    pub loss: f64,
    pub manifest: MixtureManifest,
    pub iteration: u64,
}

/// Per-iteration detail beyond the observation itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(flatten)]
    pub observation: Observation,
    /// Feedback per sample as returned by the evaluator.
    pub raw_feedback: Vec<f64>,
    pub sample_digests: Vec<String>,
    pub best_index: usize,
    /// Lengthscale in force when the ratio was proposed.
    pub lengthscale: f64,
}

#[derive(Debug, Clone)]
pub struct RunState {
    config: RunConfig,
    gp: GpState,
    records: Vec<StepRecord>,
    best: BestMixture,
    rng_root_seed: u64,
    plan: SamplingPlan,
}

/// Serializable [`RunState`]; sampling weights are rebuilt from the domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub config: RunConfig,
    pub gp: GpCheckpoint,
    pub records: Vec<StepRecord>,
    pub best: BestMixture,
    pub rng_root_seed: u64,
}

/// Hook invoked after the initial observation and after every step.
pub trait RunObserver {
    fn on_step(&mut self, state: &RunState, outcome: &EstimateResult) -> Result<()>;
}

impl RunObserver for () {
    fn on_step(&mut self, _: &RunState, _: &EstimateResult) -> Result<()> {
        Ok(())
    }
}

fn check_domains(config: &RunConfig, domains: &[DomainDataset]) -> Result<()> {
    config.validate()?;
    if domains.len() != config.n_domains {
        return Err(Error::ConfigInvalid(format!(
            "config declares {} domains but {} were supplied",
            config.n_domains,
            domains.len()
        )));
    }
    let mut names = std::collections::HashSet::new();
    for d in domains {
        if !names.insert(d.name()) {
            return Err(Error::ConfigInvalid(format!(
                "duplicate domain name `{}`",
                d.name()
            )));
        }
    }
    Ok(())
}

fn record_from(
    iteration: u64,
    ratio: MixingRatio,
    est: &EstimateResult,
    lengthscale: f64,
) -> StepRecord {
    StepRecord {
        observation: Observation {
            iteration,
            ratio,
            loss: est.value,
            manifest_digest: est.best_manifest.digest(),
        },
        raw_feedback: est.raw_feedback.clone(),
        sample_digests: est.all_digests.clone(),
        best_index: est.best_index,
        lengthscale,
    }
}

/// Evaluate the uniform ratio once and seed the GP with it.
pub fn init_run(
    config: &RunConfig,
    domains: &[DomainDataset],
    evaluator: &EvaluatorHandle,
) -> Result<RunState> {
    init_run_with_outcome(config, domains, evaluator).map(|(s, _)| s)
}

pub fn init_run_with_outcome(
    config: &RunConfig,
    domains: &[DomainDataset],
    evaluator: &EvaluatorHandle,
) -> Result<(RunState, EstimateResult)> {
    check_domains(config, domains)?;
    let plan = SamplingPlan::for_config(domains, config)?;
    let root = config.seed;
    let ratio = MixingRatio::uniform(config.n_domains);
    let est = estimate_with_plan(&ratio, &plan, config, evaluator, 0, derive_seed(root, &[0]))?;
    let kernel = KernelParams::default();
    let gp = GpState::new(config.n_domains, kernel, config.zeta)?
        .with_standardize(Standardize::MeanStd)?
        .append(ratio.clone(), est.value)?;
    let state = RunState {
        config: config.clone(),
        gp,
        best: BestMixture {
            loss: est.value,
            manifest: est.best_manifest.clone(),
            iteration: 0,
        },
        records: vec![record_from(0, ratio, &est, kernel.lengthscale)],
        rng_root_seed: root,
        plan,
    };
    Ok((state, est))
}

/// One iteration. The input state is untouched, so a failed step leaves the
/// caller's state as it was.
pub fn step(state: &RunState, evaluator: &EvaluatorHandle) -> Result<RunState> {
    state.step_with_outcome(evaluator).map(|(s, _)| s)
}

/// Initial observation plus `config.iterations` steps.
pub fn run_to_completion(
    config: &RunConfig,
    domains: &[DomainDataset],
    evaluator: &EvaluatorHandle,
) -> Result<RunState> {
    run_with_observer(config, domains, evaluator, &mut ())
}

pub fn run_with_observer(
    config: &RunConfig,
    domains: &[DomainDataset],
    evaluator: &EvaluatorHandle,
    observer: &mut dyn RunObserver,
) -> Result<RunState> {
    let (mut state, est) = init_run_with_outcome(config, domains, evaluator)?;
    observer.on_step(&state, &est)?;
    while !state.is_complete() {
        let (next, est) = state.step_with_outcome(evaluator)?;
        state = next;
        observer.on_step(&state, &est)?;
    }
    Ok(state)
}

/// Re-run from `config` with the recorded feedback served slot by slot and
/// check that the recomputed history matches `records` exactly.
pub fn replay(
    config: &RunConfig,
    domains: &[DomainDataset],
    records: &[StepRecord],
) -> Result<RunState> {
    let mut table = TableLookup::new();
    for rec in records {
        if rec.raw_feedback.len() != rec.sample_digests.len() {
            return Err(Error::InvalidLog(format!(
                "iteration {}: {} feedback values for {} digests",
                rec.observation.iteration,
                rec.raw_feedback.len(),
                rec.sample_digests.len()
            )));
        }
        for (j, (digest, &loss)) in rec.sample_digests.iter().zip(&rec.raw_feedback).enumerate() {
            table.insert_slot(rec.observation.iteration, j, digest.clone(), loss);
        }
    }
    let mut cfg = config.clone();
    cfg.iterations = records.len().saturating_sub(1);
    let state = run_to_completion(&cfg, domains, &EvaluatorHandle::new(table))?;
    if state.records() != records {
        let at = state
            .records()
            .iter()
            .zip(records)
            .position(|(a, b)| a != b)
            .unwrap_or(records.len().min(state.records().len()));
        return Err(Error::InvalidLog(format!(
            "replayed history diverges at iteration {at}"
        )));
    }
    Ok(state)
}

impl RunState {
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn gp(&self) -> &GpState {
        &self.gp
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn history(&self) -> Vec<Observation> {
        self.records.iter().map(|r| r.observation.clone()).collect()
    }

    pub fn best(&self) -> &BestMixture {
        &self.best
    }

    pub fn rng_root_seed(&self) -> u64 {
        self.rng_root_seed
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    /// Observation whose estimate produced the best loss.
    pub fn best_observation(&self) -> &Observation {
        &self.records[self.best.iteration as usize].observation
    }

    pub fn steps_taken(&self) -> usize {
        self.records.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.steps_taken() >= self.config.iterations
    }

    pub fn step_with_outcome(
        &self,
        evaluator: &EvaluatorHandle,
    ) -> Result<(RunState, EstimateResult)> {
        if self.is_complete() {
            return Err(Error::IterationsExhausted(self.config.iterations));
        }
        let cfg = &self.config;
        let t = self.records.len() as u64;
        let gp = if self.gp.len() >= 2 {
            let kernel = fit_lengthscale(
                self.gp.inputs(),
                &self.gp.standardized_targets(),
                cfg.zeta,
                &default_lengthscale_grid(),
            )?;
            self.gp.with_kernel(kernel)?
        } else {
            self.gp.clone()
        };
        let acq = AcquireConfig {
            beta: cfg.beta,
            n_candidates: cfg.n_candidates,
            n_refine_steps: cfg.n_refine_steps,
            refine_step_size: cfg.refine_step_size,
        };
        let ratio = propose_ratio(
            &gp,
            &acq,
            derive_seed(self.rng_root_seed, &[t, TAG_ACQUIRE]),
        )?;
        let est = estimate_with_plan(
            &ratio,
            &self.plan,
            cfg,
            evaluator,
            t,
            derive_seed(self.rng_root_seed, &[t]),
        )?;
        let lengthscale = gp.kernel().lengthscale;
        let gp = gp.append(ratio.clone(), est.value)?;
        let mut records = self.records.clone();
        records.push(record_from(t, ratio, &est, lengthscale));
        let best = if est.value < self.best.loss {
            BestMixture {
                loss: est.value,
                manifest: est.best_manifest.clone(),
                iteration: t,
            }
        } else {
            self.best.clone()
        };
        let next = RunState {
            config: self.config.clone(),
            gp,
            records,
            best,
            rng_root_seed: self.rng_root_seed,
            plan: self.plan.clone(),
        };
        Ok((next, est))
    }

    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot {
            config: self.config.clone(),
            gp: self.gp.checkpoint(),
            records: self.records.clone(),
            best: self.best.clone(),
            rng_root_seed: self.rng_root_seed,
        }
    }

    /// Rebuild a state from a snapshot and the same domains it was run on.
    pub fn restore(snapshot: RunSnapshot, domains: &[DomainDataset]) -> Result<Self> {
        check_domains(&snapshot.config, domains)?;
        let gp = GpState::from_checkpoint(snapshot.gp)?;
        if snapshot.records.is_empty() || gp.len() != snapshot.records.len() {
            return Err(Error::InvalidLog(
                "gp observations do not match the history".into(),
            ));
        }
        for (rec, (x, y)) in snapshot
            .records
            .iter()
            .zip(gp.inputs().iter().zip(gp.targets()))
        {
            if rec.observation.ratio != *x || rec.observation.loss != *y {
                return Err(Error::InvalidLog(format!(
                    "gp observation differs from history at iteration {}",
                    rec.observation.iteration
                )));
            }
        }
        let plan = SamplingPlan::for_config(domains, &snapshot.config)?;
        Ok(RunState {
            config: snapshot.config,
            gp,
            records: snapshot.records,
            best: snapshot.best,
            rng_root_seed: snapshot.rng_root_seed,
            plan,
        })
    }
}

/// Final summary written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best_loss: f64,
    pub best_iteration: u64,
    /// Ratio proposed at the best iteration.
    pub best_ratio: MixingRatio,
    /// Ratio actually realized by the best manifest.
    pub best_realized_ratio: MixingRatio,
    pub best_manifest_digest: String,
    pub best_manifest: MixtureManifest,
    /// Ratio proposed at the last iteration.
    pub final_ratio: MixingRatio,
    pub domains: Vec<String>,
    pub iterations_run: usize,
}

impl RunResult {
    pub fn from_state(state: &RunState) -> Self {
        let best = state.best();
        RunResult {
            best_loss: best.loss,
            best_iteration: best.iteration,
            best_ratio: state.best_observation().ratio.clone(),
            best_realized_ratio: ratio_of(&best.manifest),
            best_manifest_digest: best.manifest.digest(),
            best_manifest: best.manifest.clone(),
            final_ratio: state
                .records()
                .last()
                .expect("non-empty history")
                .observation
                .ratio
                .clone(),
            domains: best.manifest.selections().keys().cloned().collect(),
            iterations_run: state.steps_taken(),
        }
    }
}

pub const CONFIG_FILE: &str = "config.json";
pub const OBSERVATIONS_FILE: &str = "observations.jsonl";
pub const MANIFEST_DIR: &str = "manifests";
pub const GP_CHECKPOINT_FILE: &str = "gp_checkpoint.json";
pub const RESULT_FILE: &str = "result.json";

/// Writes the run directory incrementally so an aborted run keeps its log.
pub struct RunDirWriter {
    dir: PathBuf,
    observations: BufWriter<File>,
    payloads: PayloadIndex,
}

impl RunDirWriter {
    pub fn create(dir: &Path, config: &impl Serialize, domains: &[DomainDataset]) -> Result<Self> {
        fs::create_dir_all(dir.join(MANIFEST_DIR)).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(CONFIG_FILE), config)?;
        let obs_path = dir.join(OBSERVATIONS_FILE);
        let file = File::create(&obs_path).map_err(|e| Error::io(&obs_path, e))?;
        Ok(RunDirWriter {
            dir: dir.to_path_buf(),
            observations: BufWriter::new(file),
            payloads: payload_index(domains),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn finish(mut self, state: &RunState) -> Result<RunResult> {
        self.flush()?;
        let result = RunResult::from_state(state);
        write_json(&self.dir.join(RESULT_FILE), &result)?;
        Ok(result)
    }

    fn flush(&mut self) -> Result<()> {
        let path = self.dir.join(OBSERVATIONS_FILE);
        self.observations.flush().map_err(|e| Error::io(path, e))
    }
}

impl RunObserver for RunDirWriter {
    fn on_step(&mut self, state: &RunState, outcome: &EstimateResult) -> Result<()> {
        let rec = state.records().last().expect("non-empty history");
        let t = rec.observation.iteration;
        let manifest_dir = self.dir.join(MANIFEST_DIR);
        for (j, m) in outcome.manifests.iter().enumerate() {
            ManifestFile::new(m, t, j, &self.payloads).write_to(&manifest_dir)?;
        }
        let line = serde_json::to_string(rec).map_err(|e| Error::json("observation", e))?;
        let path = self.dir.join(OBSERVATIONS_FILE);
        writeln!(self.observations, "{line}").map_err(|e| Error::io(&path, e))?;
        self.flush()?;
        write_json(&self.dir.join(GP_CHECKPOINT_FILE), &state.gp().checkpoint())
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Parse `observations.jsonl`.
pub fn read_records(path: &Path) -> Result<Vec<StepRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::json(format!("{}: line {}", path.display(), i + 1), e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{synthetic_domains, EvalError, Evaluator, EvaluatorKind, FnEvaluator};
    use crate::types::validate_ratio;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn weights(sizes: &[usize]) -> Vec<NormalizedWeights> {
        let domains = synthetic_domains(sizes.len(), *sizes.iter().max().unwrap(), 1).unwrap();
        domains.iter().map(NormalizedWeights::uniform).collect()
    }

    #[test]
    fn manifest_counts_examples() {
        let w = weights(&[20, 20]);
        let m = build_manifest(&MixingRatio::uniform(2), 10, &w, false, 0).unwrap();
        assert_eq!(m.counts(), vec![5, 5]);
        let w3 = weights(&[20, 20, 20]);
        let m = build_manifest(&MixingRatio::uniform(3), 10, &w3, false, 0).unwrap();
        assert_eq!(m.counts(), vec![4, 3, 3]);
        let vertex = validate_ratio(&[1.0, 0.0]).unwrap();
        let m = build_manifest(&vertex, 5, &w, false, 0).unwrap();
        assert_eq!(m.counts(), vec![5, 0]);
    }

    #[test]
    fn manifest_infeasible() {
        let w = weights(&[4, 4]);
        let err =
            build_manifest(&validate_ratio(&[1.0, 0.0]).unwrap(), 6, &w, false, 0).unwrap_err();
        match err {
            Error::CountExceedsDomain {
                domain,
                requested,
                available,
            } => {
                assert_eq!(domain, "domain_0");
                assert_eq!((requested, available), (6, 4));
            }
            other => panic!("{other:?}"),
        }
        assert!(build_manifest(&validate_ratio(&[1.0, 0.0]).unwrap(), 6, &w, true, 0).is_ok());
    }

    fn quad_evaluator() -> EvaluatorHandle {
        let target = validate_ratio(&[0.3, 0.7]).unwrap();
        EvaluatorHandle::new(FnEvaluator::new(move |m| {
            ratio_of(m).squared_distance(&target)
        }))
    }

    fn cfg(iterations: usize) -> RunConfig {
        let mut c = RunConfig::new(2, 100);
        c.iterations = iterations;
        c.n_candidates = 512;
        c
    }

    #[test]
    fn init_uses_uniform_ratio() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let s = init_run(&cfg(3), &domains, &quad_evaluator()).unwrap();
        assert_eq!(s.history().len(), 1);
        assert_eq!(s.history()[0].ratio.weights(), &[0.5, 0.5]);
        let again = init_run(&cfg(3), &domains, &quad_evaluator()).unwrap();
        assert_eq!(
            s.history()[0].manifest_digest,
            again.history()[0].manifest_digest
        );
    }

    #[test]
    fn best_is_monotone_and_converges() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let ev = quad_evaluator();
        let mut s = init_run(&cfg(10), &domains, &ev).unwrap();
        let mut prev = s.best().loss;
        while !s.is_complete() {
            let n = s.history().len();
            s = step(&s, &ev).unwrap();
            assert_eq!(s.history().len(), n + 1);
            assert!(s.best().loss <= prev);
            prev = s.best().loss;
        }
        let best_ratio = &s.best_observation().ratio;
        assert!(best_ratio.linf_distance(&validate_ratio(&[0.3, 0.7]).unwrap()) <= 0.15);
        assert!(matches!(step(&s, &ev), Err(Error::IterationsExhausted(10))));
        assert_eq!(s.gp().len(), s.history().len());
    }

    #[test]
    fn t_zero_returns_initial() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let s = run_to_completion(&cfg(0), &domains, &quad_evaluator()).unwrap();
        assert_eq!(s.best().iteration, 0);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn snapshot_resume_matches_straight_run() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let ev = quad_evaluator();
        let s0 = init_run(&cfg(4), &domains, &ev).unwrap();
        let s1 = step(&s0, &ev).unwrap();
        let straight = step(&step(&s1, &ev).unwrap(), &ev).unwrap();
        let json = serde_json::to_string(&s1.snapshot()).unwrap();
        let restored = RunState::restore(serde_json::from_str(&json).unwrap(), &domains).unwrap();
        let resumed = step(&step(&restored, &ev).unwrap(), &ev).unwrap();
        assert_eq!(resumed.records(), straight.records());
    }

    struct FailAt {
        calls: AtomicUsize,
        fail_at: usize,
    }

    impl Evaluator for FailAt {
        fn evaluate(
            &self,
            m: &MixtureManifest,
            _: u64,
            _: usize,
            _: u64,
        ) -> std::result::Result<f64, EvalError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) == self.fail_at {
                Err(EvalError::ChildFailed("injected".into()))
            } else {
                Ok(ratio_of(m).weights()[0])
            }
        }
        fn kind(&self) -> EvaluatorKind {
            EvaluatorKind::Custom
        }
    }

    #[test]
    fn failed_step_leaves_state_unchanged() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let inner = Arc::new(FailAt {
            calls: AtomicUsize::new(0),
            fail_at: 3,
        });
        let ev = EvaluatorHandle::from_arc(inner);
        let mut s = init_run(&cfg(5), &domains, &ev).unwrap();
        s = step(&s, &ev).unwrap();
        s = step(&s, &ev).unwrap();
        let before = s.records().to_vec();
        assert!(matches!(step(&s, &ev), Err(Error::EvaluatorFailure { .. })));
        assert_eq!(s.records(), &before[..]);
    }

    #[test]
    fn maximize_tracks_max_raw_feedback() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let ev = EvaluatorHandle::new(FnEvaluator::new(|m| ratio_of(m).weights()[0]));
        let mut c = cfg(4);
        c.maximize = true;
        let s = run_to_completion(&c, &domains, &ev).unwrap();
        let max_raw = s
            .records()
            .iter()
            .flat_map(|r| r.raw_feedback.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.best().loss, -max_raw);
    }

    #[test]
    fn replay_reproduces_history() {
        let domains = synthetic_domains(2, 200, 0).unwrap();
        let mut c = cfg(4);
        c.sampling_size = 3;
        let s = run_to_completion(&c, &domains, &quad_evaluator()).unwrap();
        let replayed = replay(&c, &domains, s.records()).unwrap();
        assert_eq!(replayed.records(), s.records());
        let mut tampered = s.records().to_vec();
        tampered[2].observation.loss += 1.0;
        assert!(replay(&c, &domains, &tampered).is_err());
    }

    #[test]
    fn domain_count_must_match() {
        let domains = synthetic_domains(3, 50, 0).unwrap();
        assert!(matches!(
            init_run(&cfg(1), &domains, &quad_evaluator()),
            Err(Error::ConfigInvalid(_))
        ));
    }
}
