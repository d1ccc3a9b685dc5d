//! Univariate slice sampling with stepping out and shrinkage.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_STEPS: usize = 50;
const MAX_SHRINK: usize = 1000;

/// One slice-sampling update of `x0` targeting `exp(log_f)`. `log_f` should
/// return `-inf` outside the support; stepping out stops there.
pub fn slice_sample<F, R>(x0: f64, mut log_f: F, width: f64, max_steps: usize, rng: &mut R) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let f0 = log_f(x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteDensity);
    }
    let e: f64 = Exp1.sample(rng);
    let y = f0 - e;

    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut j = (max_steps as f64 * rng.random::<f64>()) as usize;
    let mut k = max_steps.saturating_sub(1).saturating_sub(j);
    while j > 0 && log_f(lo) > y {
        lo -= width;
        j -= 1;
    }
    while k > 0 && log_f(hi) > y {
        hi += width;
        k -= 1;
    }

    for _ in 0..MAX_SHRINK {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        if log_f(x1) > y {
            return Ok(x1);
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    Ok(x0)
}
