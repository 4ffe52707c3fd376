//! LCB acquisition over the probability simplex.

use std::cmp::Ordering;

use crate::error::Result;
use crate::gp::GpState;
use crate::seed::rng_from_seed;
use crate::types::MixingRatio;

const STEP_DECAY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquireConfig {
    pub beta: f64,
    pub n_candidates: usize,
    pub n_refine_steps: usize,
    pub refine_step_size: f64,
}

impl Default for AcquireConfig {
    fn default() -> Self {
        AcquireConfig {
            beta: 0.5,
            n_candidates: 4096,
            n_refine_steps: 50,
            refine_step_size: 0.05,
        }
    }
}

/// `μ(r) − β·σ(r)`.
pub fn lcb_value(state: &GpState, r: &MixingRatio, beta: f64) -> Result<f64> {
    let p = state.posterior(r)?;
    Ok(p.mean - beta * p.stddev)
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Uniform draw from the simplex: Dirichlet with all concentrations one.
pub fn sample_dirichlet_uniform(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..dim)
        .map(|_| {
            // u in (0, 1]
            let u: f64 = 1.0 - rng.random::<f64>();
            -u.ln()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn compare(a: &(f64, MixingRatio), b: &(f64, MixingRatio)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| {
        for (x, y) in a.1.weights().iter().zip(b.1.weights()) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    })
}

fn to_ratio(w: &[f64]) -> Option<MixingRatio> {
    MixingRatio::from_simplex(w).ok()
}

/// Propose the next ratio by minimizing the LCB over Dirichlet candidates,
/// observed inputs and the uniform ratio, then refining the winner with
/// projected coordinate moves.
pub fn propose_ratio(state: &GpState, cfg: &AcquireConfig, seed: u64) -> Result<MixingRatio> {
    let dim = state.dim();
    if dim == 1 {
        return Ok(MixingRatio::uniform(1));
    }
    let mut rng = rng_from_seed(seed);

    let mut candidates: Vec<MixingRatio> = Vec::with_capacity(cfg.n_candidates + state.len() + 1);
    for _ in 0..cfg.n_candidates {
        if let Some(r) = to_ratio(&sample_dirichlet_uniform(&mut rng, dim)) {
            candidates.push(r);
        }
    }
    let mut observed: Vec<(f64, &MixingRatio)> = state
        .targets()
        .iter()
        .copied()
        .zip(state.inputs())
        .collect();
    observed.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.extend(observed.into_iter().map(|(_, r)| r.clone()));
    candidates.push(MixingRatio::uniform(dim));

    let mut best: Option<(f64, MixingRatio)> = None;
    for c in candidates {
        let v = lcb_value(state, &c, cfg.beta)?;
        let entry = (v, c);
        if best
            .as_ref()
            .is_none_or(|b| compare(&entry, b) == Ordering::Less)
        {
            best = Some(entry);
        }
    }
    let (mut best_val, mut x) = best.expect("uniform candidate always present");

    let mut step = cfg.refine_step_size;
    for _ in 0..cfg.n_refine_steps {
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut w = x.weights().to_vec();
                w[i] += sign * step;
                let Some(cand) = to_ratio(&project_to_simplex(&w)) else {
                    continue;
                };
                let v = lcb_value(state, &cand, cfg.beta)?;
                if v < best_val {
                    best_val = v;
                    x = cand;
                }
            }
        }
        step *= STEP_DECAY;
    }
    Ok(x)
}
