//! Attained regret of completed runs and the closed-form average-regret
//! bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub per_step: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub average: Vec<f64>,
    pub f_star: f64,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    /// Average regret after the last step.
    pub fn final_average(&self) -> Option<f64> {
        self.average.last().copied()
    }

    /// CSV with columns `t,loss,per_step,cumulative,average`; `t` starts at 1.
    pub fn write_csv<W: Write>(&self, history: &[Observation], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |source| Error::Csv {
            path: "<regret trace>".into(),
            source,
        };
        w.write_record(["t", "loss", "per_step", "cumulative", "average"])
            .map_err(wrap)?;
        for (i, obs) in history.iter().enumerate().take(self.len()) {
            w.write_record([
                (i + 1).to_string(),
                obs.loss.to_string(),
                self.per_step[i].to_string(),
                self.cumulative[i].to_string(),
                self.average[i].to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("<regret trace>", e))
    }
}

/// `per_step_t = |loss_t − f*|` with prefix sums and running averages.
pub fn compute_trace(history: &[Observation], f_star: Option<f64>) -> Result<RegretTrace> {
    let f_star = f_star.ok_or(Error::UnknownOptimum)?;
    if !f_star.is_finite() {
        return Err(Error::DomainError(format!("f_star {f_star} is not finite")));
    }
    let per_step: Vec<f64> = history.iter().map(|o| (o.loss - f_star).abs()).collect();
    let mut cumulative = Vec::with_capacity(per_step.len());
    let mut acc = 0.0;
    for v in &per_step {
        acc += v;
        cumulative.push(acc);
    }
    let average = cumulative
        .iter()
        .enumerate()
        .map(|(i, c)| c / (i + 1) as f64)
        .collect();
    Ok(RegretTrace {
        per_step,
        cumulative,
        average,
        f_star,
    })
}

fn check_ck(c: f64, k: usize) -> Result<()> {
    if !(c.is_finite() && c > 0.0 && c <= 1.0) {
        return Err(Error::DomainError(format!(
            "cutoff c={c} must lie in (0, 1]"
        )));
    }
    if k == 0 {
        return Err(Error::DomainError("k must be at least 1".into()));
    }
    Ok(())
}

/// `A_{c,k} = c²(1 − e^{−c} − c/2)^{k−1} / (1 − e^{−c})^k`.
pub fn bound_constant(c: f64, k: usize) -> Result<f64> {
    check_ck(c, k)?;
    let one_minus = -(-c).exp_m1();
    let mid = one_minus - c / 2.0;
    Ok(c * c * mid.powi(k as i32 - 1) / one_minus.powi(k as i32))
}

/// `6(δ^{1/4} + √k)/(δ^{1/4} k) + 2A_{c,k} + √(2A_{c,k}) / δ^{1/4}`.
pub fn average_regret_bound(c: f64, k: usize, delta: f64) -> Result<f64> {
    check_ck(c, k)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::DomainError(format!(
            "delta={delta} must lie in (0, 1]"
        )));
    }
    let a = bound_constant(c, k)?;
    let q = delta.sqrt().sqrt();
    let kf = k as f64;
    Ok(6.0 * (q + kf.sqrt()) / (q * kf) + 2.0 * a + (2.0 * a).sqrt() / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MixingRatio;

    fn obs(losses: &[f64]) -> Vec<Observation> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &loss)| Observation {
                iteration: i as u64,
                ratio: MixingRatio::uniform(2),
                loss,
                manifest_digest: String::new(),
            })
            .collect()
    }

    #[test]
    fn trace_examples() {
        let t = compute_trace(&obs(&[0.3, 0.3, 0.3]), Some(0.3)).unwrap();
        assert_eq!(t.cumulative, vec![0.0; 3]);
        let t = compute_trace(&obs(&[1.2, 0.7]), Some(0.2)).unwrap();
        assert!((t.cumulative[0] - 1.0).abs() < 1e-12);
        assert!((t.cumulative[1] - 1.5).abs() < 1e-12);
        assert!((t.average[1] - 0.75).abs() < 1e-12);
        assert!(matches!(
            compute_trace(&obs(&[1.0]), None),
            Err(Error::UnknownOptimum)
        ));
    }

    #[test]
    fn constant_examples() {
        assert!((bound_constant(1.0, 1).unwrap() - 1.581_976_706_869_326).abs() < 1e-12);
        assert!((bound_constant(1.0, 2).unwrap() - 0.33065).abs() < 1e-5);
        for k in 1..4 {
            assert!(bound_constant(1.0, k + 1).unwrap() < bound_constant(1.0, k).unwrap());
        }
        assert!(bound_constant(0.0, 1).is_err());
        assert!(bound_constant(1.5, 1).is_err());
        assert!(bound_constant(1.0, 0).is_err());
    }

    #[test]
    fn bound_examples() {
        let a = bound_constant(1.0, 3).unwrap();
        let at_one = average_regret_bound(1.0, 3, 1.0).unwrap();
        let k = 3f64;
        assert!((at_one - (6.0 * (1.0 + k.sqrt()) / k + 2.0 * a + (2.0 * a).sqrt())).abs() < 1e-12);
        assert!((average_regret_bound(1.0, 1, 0.0625).unwrap() - 24.7215).abs() < 1e-3);
        for k in 1..16 {
            assert!(
                average_regret_bound(1.0, k + 1, 0.0625).unwrap()
                    < average_regret_bound(1.0, k, 0.0625).unwrap()
            );
        }
        assert!(average_regret_bound(1.0, 1, 0.0).is_err());
    }

    #[test]
    fn csv_columns() {
        let h = obs(&[1.2, 0.7]);
        let t = compute_trace(&h, Some(0.2)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&h, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,loss,per_step,cumulative,average\n1,1.2,"));
        assert_eq!(text.lines().count(), 3);
    }
}
