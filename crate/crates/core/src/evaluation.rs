//! Pairwise linkage error rates and posterior summaries of traces.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mcmc::diagnostics::{summarize, ChainSummary};
use crate::mcmc::Trace;
use crate::partition::Partition;

/// Counts over unordered record pairs: linked in both (`tp`), linked only in
/// the estimate (`fp`), linked only in the truth (`fn_`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PairConfusion {
    /// Missed true links; 0 when the truth has none.
    pub fn fnr(&self) -> f64 {
        let t = self.tp + self.fn_;
        if t == 0 {
            0.0
        } else {
            self.fn_ as f64 / t as f64
        }
    }

    /// Spurious declared links; 0 when none are declared.
    pub fn fdr(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            0.0
        } else {
            self.fp as f64 / d as f64
        }
    }
}

fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

pub fn pairwise_confusion(truth: &Partition, estimate: &Partition) -> Result<PairConfusion> {
    if truth.n() != estimate.n() {
        return Err(Error::DimensionMismatch(format!(
            "truth covers {} records, estimate {}",
            truth.n(),
            estimate.n()
        )));
    }
    let mut cells: Vec<(usize, usize)> = truth
        .allocations()
        .iter()
        .copied()
        .zip(estimate.allocations().iter().copied())
        .collect();
    cells.sort_unstable();
    let mut tp = 0;
    let mut run = 1u64;
    for w in cells.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tp += pairs(run);
            run = 1;
        }
    }
    tp += pairs(run);
    let truth_pairs = truth.linked_pairs();
    let est_pairs = estimate.linked_pairs();
    Ok(PairConfusion {
        tp,
        fp: est_pairs - tp,
        fn_: truth_pairs - tp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRates {
    pub fnr: ChainSummary,
    pub fdr: ChainSummary,
}

/// Per-sample FNR and FDR against the truth, averaged over the trace.
pub fn posterior_rates(trace: &Trace, truth: &Partition) -> Result<PosteriorRates> {
    if trace.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut fnr = Vec::with_capacity(trace.len());
    let mut fdr = Vec::with_capacity(trace.len());
    for s in &trace.samples {
        let c = pairwise_confusion(truth, &s.partition()?)?;
        fnr.push(c.fnr());
        fdr.push(c.fdr());
    }
    Ok(PosteriorRates {
        fnr: summarize(&fnr)?,
        fdr: summarize(&fdr)?,
    })
}

/// 2.5, 25, 50, 75 and 97.5 percent quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles(pub [f64; 5]);

const PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

fn quantiles(mut xs: Vec<f64>) -> Quantiles {
    xs.sort_by(|a, b| a.total_cmp(b));
    let last = (xs.len() - 1) as f64;
    Quantiles(PROBS.map(|p| {
        let h = p * last;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub k: ChainSummary,
    /// For every size seen in the trace, quantiles of the number of clusters
    /// of that size.
    pub occupancy: BTreeMap<usize, Quantiles>,
}

pub fn posterior_summaries(trace: &Trace) -> Result<PosteriorSummary> {
    if trace.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let ks = trace.series(|s| s.k as f64);
    let mut profiles = Vec::with_capacity(trace.len());
    for s in &trace.samples {
        profiles.push(s.partition()?.occupancy().clone());
    }
    let sizes: std::collections::BTreeSet<usize> = profiles.iter().flat_map(|o| o.keys().copied()).collect();
    let occupancy = sizes
        .into_iter()
        .map(|s| {
            let xs = profiles
                .iter()
                .map(|o| o.get(&s).copied().unwrap_or(0) as f64)
                .collect();
            (s, quantiles(xs))
        })
        .collect();
    Ok(PosteriorSummary {
        k: summarize(&ks)?,
        occupancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::TraceSample;

    fn part(z: &[usize]) -> Partition {
        Partition::from_allocations(z).unwrap()
    }

    fn sample(z: &[usize]) -> TraceSample {
        let p = part(z);
        TraceSample {
            iteration: 0,
            k: p.k(),
            r: None,
            p: None,
            theta: None,
            sigma: None,
            beta: vec![],
            allocations: p.allocations().to_vec(),
        }
    }

    #[test]
    fn confusion_examples() {
        let t = part(&[0, 0, 1, 1]);
        let c = pairwise_confusion(&t, &t).unwrap();
        assert_eq!((c.fnr(), c.fdr()), (0.0, 0.0));

        let c = pairwise_confusion(&t, &part(&[0, 0, 0, 0])).unwrap();
        assert_eq!(c, PairConfusion { tp: 2, fp: 4, fn_: 0 });
        assert_eq!(c.fnr(), 0.0);
        assert!((c.fdr() - 2.0 / 3.0).abs() < 1e-15);

        let c = pairwise_confusion(&part(&[0, 0, 1]), &part(&[0, 1, 2])).unwrap();
        assert_eq!(c.fn_, 1);
        assert_eq!((c.fnr(), c.fdr()), (1.0, 0.0));
        assert!(pairwise_confusion(&t, &part(&[0, 1])).is_err());
    }

    #[test]
    fn swap_and_relabel() {
        let a = part(&[0, 0, 1, 2, 2, 2, 3]);
        let b = part(&[5, 5, 5, 1, 1, 7, 7]);
        let ab = pairwise_confusion(&a, &b).unwrap();
        let ba = pairwise_confusion(&b, &a).unwrap();
        assert_eq!((ab.tp, ab.fp, ab.fn_), (ba.tp, ba.fn_, ba.fp));
        let relabeled = part(&[9, 9, 9, 4, 4, 0, 0]);
        assert_eq!(pairwise_confusion(&a, &relabeled).unwrap(), ab);
    }

    #[test]
    fn rates_over_traces() {
        let truth = part(&[0, 0, 1]);
        let trace = Trace {
            samples: vec![sample(&[0, 0, 1]); 3],
        };
        let r = posterior_rates(&trace, &truth).unwrap();
        assert_eq!((r.fnr.mean, r.fdr.mean), (0.0, 0.0));
        let trace = Trace {
            samples: vec![sample(&[0, 0, 1]), sample(&[0, 1, 2])],
        };
        assert_eq!(posterior_rates(&trace, &truth).unwrap().fnr.mean, 0.5);
        let mut broken = sample(&[0]);
        broken.allocations.clear();
        let trace = Trace { samples: vec![broken] };
        assert!(matches!(posterior_rates(&trace, &truth), Err(Error::MissingAllocations)));
    }

    #[test]
    fn summaries_of_constant_trace() {
        let trace = Trace {
            samples: vec![sample(&[0, 0, 1, 2, 2]); 150],
        };
        let s = posterior_summaries(&trace).unwrap();
        assert_eq!(s.k.mean, 3.0);
        assert_eq!(s.k.mcse, 0.0);
        assert_eq!(s.occupancy[&1].0, [1.0; 5]);
        assert_eq!(s.occupancy[&2].0, [2.0; 5]);
    }
}
