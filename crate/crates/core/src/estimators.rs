//! Sample-mean and control-variate estimators of a state-action value.
//!
//! Given `n` paired returns `(G^hi_i, G^lo_i)` from the same trajectories
//! and a reference value for the low-fidelity mean, the control-variate
//! estimate is
//!
//! ```text
//! Q̂ = mean(G^hi) + α* (Q^lo − mean(G^lo)),   α* = Cov(G^hi, G^lo) / Var(G^lo)
//! ```
//!
//! whose variance is `(1 − ρ²)` times that of the plain high-fidelity mean.
//! Variances and covariance use the unbiased `n − 1` denominator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this many paired samples the control variate is not applied.
pub const DEFAULT_MIN_CV_SAMPLES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("no samples")]
    Empty,
    #[error("paired lists differ in length ({high} vs {low})")]
    Unpaired { high: usize, low: usize },
    #[error("correlation {0} outside [-1, 1]")]
    Correlation(f64),
}

/// Index-paired high/low returns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairedReturns {
    high: Vec<f64>,
    low: Vec<f64>,
}

impl PairedReturns {
    pub fn new(high: Vec<f64>, low: Vec<f64>) -> Result<Self, EstimatorError> {
        if high.len() != low.len() {
            return Err(EstimatorError::Unpaired { high: high.len(), low: low.len() });
        }
        Ok(Self { high, low })
    }

    pub fn push(&mut self, high: f64, low: f64) {
        self.high.push(high);
        self.low.push(low);
    }

    pub fn len(&self) -> usize {
        self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.high.is_empty()
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }
}

/// Plain first-visit average.
pub fn sample_mean_q(returns: &[f64]) -> Result<f64, EstimatorError> {
    if returns.is_empty() {
        return Err(EstimatorError::Empty);
    }
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

/// Moments of a paired sample. Second moments are `None` when `n < 2`;
/// `rho` is `None` when either variance is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean_hi: f64,
    pub mean_lo: f64,
    pub var_hi: Option<f64>,
    pub var_lo: Option<f64>,
    pub cov: Option<f64>,
    pub rho: Option<f64>,
    /// The raw correlation fell outside `[-1, 1]` through rounding and was clipped.
    pub rho_clipped: bool,
}

pub fn summary_stats(paired: &PairedReturns) -> Result<SummaryStats, EstimatorError> {
    let mut acc = PairedMoments::default();
    for (&h, &l) in paired.high.iter().zip(&paired.low) {
        acc.push(h, l);
    }
    acc.stats()
}

/// Streaming co-moments (Welford) for paired returns.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairedMoments {
    n: usize,
    mean_hi: f64,
    mean_lo: f64,
    m2_hi: f64,
    m2_lo: f64,
    c_hilo: f64,
}

impl PairedMoments {
    pub fn push(&mut self, high: f64, low: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dh = high - self.mean_hi;
        let dl = low - self.mean_lo;
        self.mean_hi += dh / n;
        self.mean_lo += dl / n;
        self.m2_hi += dh * (high - self.mean_hi);
        self.m2_lo += dl * (low - self.mean_lo);
        self.c_hilo += dh * (low - self.mean_lo);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn stats(&self) -> Result<SummaryStats, EstimatorError> {
        if self.n == 0 {
            return Err(EstimatorError::Empty);
        }
        let mut out = SummaryStats {
            n: self.n,
            mean_hi: self.mean_hi,
            mean_lo: self.mean_lo,
            var_hi: None,
            var_lo: None,
            cov: None,
            rho: None,
            rho_clipped: false,
        };
        if self.n >= 2 {
            let d = (self.n - 1) as f64;
            let (vh, vl, c) = (self.m2_hi / d, self.m2_lo / d, self.c_hilo / d);
            out.var_hi = Some(vh);
            out.var_lo = Some(vl);
            out.cov = Some(c);
            if vh > 0.0 && vl > 0.0 {
                let raw = c / (vh * vl).sqrt();
                out.rho_clipped = !(-1.0..=1.0).contains(&raw);
                out.rho = Some(raw.clamp(-1.0, 1.0));
            }
        }
        Ok(out)
    }
}

/// Control-variate estimate and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfmcEstimate {
    pub q_value: f64,
    pub n: usize,
    pub mean_hi: f64,
    pub mean_lo: f64,
    pub var_hi: f64,
    pub var_lo: f64,
    pub cov: f64,
    pub rho: f64,
    pub alpha_star: f64,
    pub vr_factor: f64,
    pub fallback_used: bool,
    pub rho_clipped: bool,
}

impl MfmcEstimate {
    /// Plain high-fidelity mean, α treated as 0.
    fn fallback(stats: &SummaryStats) -> Self {
        Self {
            q_value: stats.mean_hi,
            n: stats.n,
            mean_hi: stats.mean_hi,
            mean_lo: stats.mean_lo,
            var_hi: stats.var_hi.unwrap_or(f64::NAN),
            var_lo: stats.var_lo.unwrap_or(f64::NAN),
            cov: stats.cov.unwrap_or(f64::NAN),
            rho: stats.rho.unwrap_or(f64::NAN),
            alpha_star: 0.0,
            vr_factor: 1.0,
            fallback_used: true,
            rho_clipped: stats.rho_clipped,
        }
    }
}

/// Control-variate estimate from precomputed moments.
///
/// Falls back to the sample mean when `n < min_samples`, when the
/// low-fidelity variance is zero, when the correlation is undefined, or when
/// no low-fidelity reference is available.
pub fn control_variate_from_stats(
    stats: &SummaryStats,
    low_ref_mean: Option<f64>,
    min_samples: usize,
) -> MfmcEstimate {
    let (Some(reference), Some(var_hi), Some(var_lo), Some(cov), Some(rho)) =
        (low_ref_mean, stats.var_hi, stats.var_lo, stats.cov, stats.rho)
    else {
        return MfmcEstimate::fallback(stats);
    };
    if stats.n < min_samples.max(2) || var_lo <= 0.0 || !reference.is_finite() {
        return MfmcEstimate::fallback(stats);
    }
    let alpha_star = cov / var_lo;
    MfmcEstimate {
        q_value: stats.mean_hi + alpha_star * (reference - stats.mean_lo),
        n: stats.n,
        mean_hi: stats.mean_hi,
        mean_lo: stats.mean_lo,
        var_hi,
        var_lo,
        cov,
        rho,
        alpha_star,
        vr_factor: 1.0 - rho * rho,
        fallback_used: false,
        rho_clipped: stats.rho_clipped,
    }
}

/// Control-variate estimate of the high-fidelity mean with the default
/// minimum sample count.
pub fn control_variate_q(
    paired: &PairedReturns,
    low_ref_mean: f64,
) -> Result<MfmcEstimate, EstimatorError> {
    let stats = summary_stats(paired)?;
    Ok(control_variate_from_stats(&stats, Some(low_ref_mean), DEFAULT_MIN_CV_SAMPLES))
}

/// `1 − ρ²`.
pub fn variance_reduction_factor(rho: f64) -> Result<f64, EstimatorError> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(EstimatorError::Correlation(rho));
    }
    Ok(1.0 - rho * rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paired(h: &[f64], l: &[f64]) -> PairedReturns {
        PairedReturns::new(h.to_vec(), l.to_vec()).unwrap()
    }

    #[test]
    fn sample_mean_examples() {
        assert_eq!(sample_mean_q(&[3.0]).unwrap(), 3.0);
        assert_eq!(sample_mean_q(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(sample_mean_q(&[]), Err(EstimatorError::Empty));
    }

    #[test]
    fn identical_series_are_perfectly_correlated() {
        let s = summary_stats(&paired(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!((s.rho.unwrap() - 1.0).abs() < 1e-15);
        assert!((s.cov.unwrap() - 1.0).abs() < 1e-15);
        assert!((s.var_hi.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reversed_series_are_anticorrelated() {
        let s = summary_stats(&paired(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert!((s.rho.unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_stats_are_flagged() {
        let s = summary_stats(&paired(&[1.0], &[2.0])).unwrap();
        assert!(s.var_hi.is_none() && s.rho.is_none());
        let s = summary_stats(&paired(&[1.0, 2.0], &[5.0, 5.0])).unwrap();
        assert_eq!(s.var_lo, Some(0.0));
        assert!(s.rho.is_none());
        assert_eq!(
            PairedReturns::new(vec![1.0], vec![]),
            Err(EstimatorError::Unpaired { high: 1, low: 0 })
        );
    }

    #[test]
    fn single_sample_falls_back_to_mean() {
        let est = control_variate_q(&paired(&[4.0], &[1.0]), 10.0).unwrap();
        assert!(est.fallback_used);
        assert_eq!(est.q_value, 4.0);
        assert_eq!(est.vr_factor, 1.0);
        assert_eq!(est.alpha_star, 0.0);
    }

    #[test]
    fn perfect_control_variate_recovers_reference() {
        let h = [0.3, 1.9, 2.2, 0.7, 1.4];
        let mu = 1.0;
        let est = control_variate_q(&paired(&h, &h), mu).unwrap();
        assert!(!est.fallback_used);
        assert!((est.alpha_star - 1.0).abs() < 1e-12);
        assert!((est.q_value - mu).abs() < 1e-12);
        assert!(est.vr_factor.abs() < 1e-12);
    }

    #[test]
    fn alpha_matches_rho_scaling() {
        let est = control_variate_q(&paired(&[1.0, 3.0, 2.0, 5.0], &[0.5, 1.0, 1.5, 1.0]), 1.0)
            .unwrap();
        let expect = est.rho * (est.var_hi / est.var_lo).sqrt();
        assert!((est.alpha_star - expect).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&est.rho));
        assert!((0.0..=1.0).contains(&est.vr_factor));
    }

    #[test]
    fn missing_reference_falls_back() {
        let stats = summary_stats(&paired(&[1.0, 2.0, 4.0], &[1.0, 3.0, 2.0])).unwrap();
        let est = control_variate_from_stats(&stats, None, 2);
        assert!(est.fallback_used);
        assert!((est.q_value - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vr_factor_examples() {
        assert_eq!(variance_reduction_factor(0.0).unwrap(), 1.0);
        assert_eq!(variance_reduction_factor(1.0).unwrap(), 0.0);
        assert_eq!(variance_reduction_factor(-1.0).unwrap(), 0.0);
        assert!((variance_reduction_factor(0.9).unwrap() - 0.19).abs() < 1e-12);
        assert!(variance_reduction_factor(1.5).is_err());
    }
}
