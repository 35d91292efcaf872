//! Acquisition functions and their random-search maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
pub use crate::gpr::Prediction;

fn std_normal() -> Normal {
    Normal::standard()
}

/// `sigma (z Phi(z) + phi(z))` with `z = (best - mean) / sigma`; the
/// `sigma = 0` limit is `max(best - mean, 0)`.
pub fn expected_improvement(pred: Prediction, best: f64) -> f64 {
    let gain = best - pred.mean;
    if !(pred.std > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / pred.std;
    let n = std_normal();
    (pred.std * (z * n.cdf(z) + n.pdf(z))).max(0.0)
}

/// `Pr(g > threshold)` under the predictive normal; an indicator when `std = 0`.
pub fn probability_of_feasibility(pred: Prediction, threshold: f64) -> f64 {
    if !(pred.std > 0.0) {
        return if pred.mean > threshold { 1.0 } else { 0.0 };
    }
    std_normal().cdf((pred.mean - threshold) / pred.std)
}

/// Constrained expected improvement. Without a feasible incumbent
/// (`best = None`) only the feasibility probability is scored.
pub fn eic(pred_b: Prediction, best_b: Option<f64>, pred_g: Prediction) -> f64 {
    let pof = probability_of_feasibility(pred_g, 0.0);
    match best_b {
        Some(best) => expected_improvement(pred_b, best) * pof,
        None => pof,
    }
}

/// Euclidean expected-improvement-matrix criterion: the smallest norm, over
/// front members, of the per-objective improvements on that member.
pub fn eim_euclidean(preds: &[Prediction; 3], front: &[[f64; 3]]) -> Result<f64> {
    if front.is_empty() {
        return Err(Error::Empty("Pareto front"));
    }
    let d = front
        .iter()
        .map(|o| {
            preds
                .iter()
                .zip(o)
                .map(|(p, oi)| expected_improvement(*p, *oi).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(d)
}

/// `EIM_e * Pr(g > 0)`.
pub fn ceim(preds: &[Prediction; 3], front: &[[f64; 3]], pred_g: Prediction) -> Result<f64> {
    Ok(eim_euclidean(preds, front)? * probability_of_feasibility(pred_g, 0.0))
}

/// Scores `budget` uniform points of `[0,1]^dim` and returns the first argmax
/// with its score. If no candidate scores above zero, a fresh uniform point is
/// returned instead (with score 0).
pub fn maximize_acquisition<F>(score: F, dim: usize, budget: usize, seed: u64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if budget == 0 || dim == 0 {
        return Err(Error::InvalidArgument("acquisition budget and dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Vec<f64>> =
        (0..budget).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let scores: Vec<f64> = candidates.par_iter().map(|c| score(c)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] || scores[best].is_nan() {
            best = i;
        }
    }
    let top = scores[best];
    if budget > 1 && !(top > 0.0) {
        let fallback = (0..dim).map(|_| rng.random::<f64>()).collect();
        return Ok((fallback, 0.0));
    }
    Ok((candidates.into_iter().nth(best).unwrap(), top))
}
