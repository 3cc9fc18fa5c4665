//! Stability, sensitivity and SSM of a redistribution matrix, and the
//! decomposition of an explanation into singular-value contributions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm, svd, top_singular_value, Matrix, Tensor};
use crate::redistribution::{explain_readout, RedistributionMatrix};

/// Above this `K` only `σ₁` is computed, by power iteration.
pub const FULL_SVD_LIMIT: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    /// Non-increasing singular values; only `σ₁` when `K > FULL_SVD_LIMIT`.
    pub sigma: Vec<f64>,
    /// `1/σ₁`.
    pub stability: f64,
    /// `‖σ‖₂`, the Frobenius norm.
    pub sensitivity: f64,
    /// `‖σ‖₂/σ₁`.
    pub ssm: f64,
    /// `min(d, h)`.
    pub k: usize,
}

impl SpectralSummary {
    pub fn sigma1(&self) -> f64 {
        self.sigma[0]
    }
}

/// Spectral summary of an arbitrary matrix.
pub fn summarize(m: &Matrix) -> Result<SpectralSummary> {
    let k = m.rows().min(m.cols());
    let sensitivity = frobenius_norm(m);
    let sigma = if k <= FULL_SVD_LIMIT {
        svd(m)?.singular_values
    } else {
        vec![top_singular_value(m, 1e-10, 100_000)?]
    };
    let s1 = sigma[0];
    if !(s1 > 0.0) {
        return Err(Error::invalid("spectral summary of a zero matrix"));
    }
    Ok(SpectralSummary {
        stability: 1.0 / s1,
        sensitivity,
        ssm: sensitivity / s1,
        sigma,
        k,
    })
}

pub fn spectral_summary(r: &RedistributionMatrix) -> Result<SpectralSummary> {
    summarize(r.matrix())
}

/// `‖Ry‖₂/‖y‖₂`.
pub fn amplification(r: &RedistributionMatrix, y: &[f64]) -> Result<f64> {
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ny == 0.0 {
        return Err(Error::invalid("readout has zero norm"));
    }
    Ok(explain_readout(r, y)?.l2_norm() / ny)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub sigma1: f64,
    pub trials: usize,
    pub max_ratio: f64,
    /// Readout attaining `max_ratio`.
    pub argmax: Vec<f64>,
    /// Readouts whose ratio exceeded `σ₁·(1 + 1e-9)`.
    pub violations: usize,
}

impl StabilityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Samples Gaussian readouts and checks `‖Ry‖₂/‖y‖₂ ≤ σ₁`.
pub fn verify_stability_bound(r: &RedistributionMatrix, trials: usize, seed: u64) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be ≥ 1"));
    }
    let sigma1 = svd(r.matrix())?.singular_values[0];
    let limit = sigma1 * (1.0 + 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = StabilityReport {
        sigma1,
        trials,
        max_ratio: 0.0,
        argmax: Vec::new(),
        violations: 0,
    };
    for _ in 0..trials {
        let y: Vec<f64> = (0..r.outputs()).map(|_| StandardNormal.sample(&mut rng)).collect();
        if y.iter().all(|v| *v == 0.0) {
            continue;
        }
        let ratio = amplification(r, &y)?;
        if ratio > limit {
            report.violations += 1;
        }
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.argmax = y;
        }
    }
    Ok(report)
}

/// A range of singular indices, 1-based and inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionBin {
    pub first: usize,
    pub last: usize,
    /// `Σ_{i in bin} σᵢ uᵢ vᵢᵀ y`.
    pub map: Tensor,
    /// `‖map‖₂ / ‖E(y)‖₂`.
    pub norm_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedExplanation {
    pub bins: Vec<ExpansionBin>,
    /// `cumulative[k-1] = ‖Σ_{i≤k} E(y;σᵢ)‖₂ / ‖E(y)‖₂`.
    pub cumulative: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `(1,1), (2,4), (5,10)` for `K ≤ 10`, otherwise `(1,1), (2,10), (11,100), …`,
/// clipped to `K`.
pub fn default_bins(k: usize) -> Vec<(usize, usize)> {
    let edges: Vec<(usize, usize)> = if k <= 10 {
        vec![(1, 1), (2, 4), (5, 10)]
    } else {
        let mut v = vec![(1, 1)];
        let mut lo = 2;
        let mut hi = 10;
        while lo <= k {
            v.push((lo, hi));
            lo = hi + 1;
            hi *= 10;
        }
        v
    };
    edges
        .into_iter()
        .filter(|&(a, _)| a <= k)
        .map(|(a, b)| (a, b.min(k)))
        .collect()
}

/// Splits `E(y) = Σ σᵢ uᵢ vᵢᵀ y` into bins of singular indices. Bins must be
/// ascending and disjoint; edges beyond `K` are clipped with a warning.
pub fn expand_explanation(r: &RedistributionMatrix, y: &[f64], bins: &[(usize, usize)]) -> Result<ExpandedExplanation> {
    let full = explain_readout(r, y)?;
    let full_norm = full.l2_norm();
    if full_norm == 0.0 {
        return Err(Error::invalid("readout produces a zero explanation"));
    }
    let dec = svd(r.matrix())?;
    let k = dec.rank_count();
    let d = r.inputs();

    let mut warnings = Vec::new();
    let mut clipped = Vec::new();
    let mut prev_last = 0;
    for &(first, last) in bins {
        if first == 0 || last < first || first <= prev_last {
            return Err(Error::invalid(format!(
                "bin ({first},{last}) must be 1-based, non-empty and after the previous bin"
            )));
        }
        prev_last = last;
        if first > k {
            warnings.push(format!("bin ({first},{last}) lies beyond K={k}; dropped"));
            continue;
        }
        if last > k {
            warnings.push(format!("bin ({first},{last}) clipped to ({first},{k})"));
        }
        clipped.push((first, last.min(k)));
    }

    // terms[i] = σᵢ uᵢ (vᵢᵀ y)
    let terms: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let vy: f64 = (0..y.len()).map(|j| dec.right_vectors.get(j, i) * y[j]).sum();
            let c = dec.singular_values[i] * vy;
            (0..d).map(|row| c * dec.left_vectors.get(row, i)).collect()
        })
        .collect();

    let mut cumulative = Vec::with_capacity(k);
    let mut acc = vec![0.0; d];
    for t in &terms {
        acc.iter_mut().zip(t).for_each(|(a, t)| *a += t);
        cumulative.push(acc.iter().map(|v| v * v).sum::<f64>().sqrt() / full_norm);
    }

    let shape = r.input_shape().to_vec();
    let bins = clipped
        .into_iter()
        .map(|(first, last)| {
            let map = if first == 1 && last == k {
                full.clone()
            } else {
                let mut m = vec![0.0; d];
                for t in &terms[first - 1..last] {
                    m.iter_mut().zip(t).for_each(|(a, t)| *a += t);
                }
                Tensor::new(shape.clone(), m)?
            };
            Ok(ExpansionBin {
                first,
                last,
                norm_fraction: map.l2_norm() / full_norm,
                map,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpandedExplanation {
        bins,
        cumulative,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_r(cols: &[&[f64]]) -> RedistributionMatrix {
        let t: Vec<Tensor> = cols.iter().map(|c| Tensor::from_vec(c.to_vec())).collect();
        RedistributionMatrix::from_attributions(&[cols[0].len()], &t).unwrap()
    }

    #[test]
    fn uniform_matrix_has_no_sensitivity() {
        let (d, h) = (6usize, 3usize);
        let r = matrix_r(&vec![&[1.0; 6][..]; h]);
        let s = spectral_summary(&r).unwrap();
        let expected = (h as f64 / d as f64).sqrt();
        assert!((s.sigma1() - expected).abs() < 1e-12);
        assert!((s.sensitivity - expected).abs() < 1e-12);
        assert!((s.ssm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_matrix() {
        let r = matrix_r(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let s = spectral_summary(&r).unwrap();
        assert!((s.stability - 1.0).abs() < 1e-12);
        assert!((s.sensitivity - 3f64.sqrt()).abs() < 1e-12);
        assert!((s.ssm - 3f64.sqrt()).abs() < 1e-12);
        let rep = verify_stability_bound(&r, 50, 1).unwrap();
        assert!(rep.holds());
        assert!((rep.max_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_bin_schemes() {
        assert_eq!(default_bins(10), vec![(1, 1), (2, 4), (5, 10)]);
        assert_eq!(default_bins(3), vec![(1, 1), (2, 3)]);
        assert_eq!(default_bins(150), vec![(1, 1), (2, 10), (11, 100), (101, 150)]);
    }

    #[test]
    fn bins_are_validated_and_clipped() {
        let r = matrix_r(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 1.0]]);
        let y = [1.0, 2.0];
        assert!(expand_explanation(&r, &y, &[(0, 1)]).is_err());
        assert!(expand_explanation(&r, &y, &[(1, 2), (2, 2)]).is_err());
        let e = expand_explanation(&r, &y, &[(1, 1), (2, 5), (7, 9)]).unwrap();
        assert_eq!(e.bins.len(), 2);
        assert_eq!(e.bins[1].last, 2);
        assert_eq!(e.warnings.len(), 2);
        assert!((e.cumulative[1] - 1.0).abs() < 1e-12);
        assert!(expand_explanation(&r, &[0.0, 0.0], &[(1, 2)]).is_err());
    }
}
