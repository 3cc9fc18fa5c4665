use crate::error::{Error, Result};

/// Natural-log entropy of `|R| / 1ᵀ|R|`, with `0·ln 0 = 0`.
pub fn shannon_entropy(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attribution".into()));
    }
    // scaling by the largest magnitude keeps the uniform case exact: every
    // q is 1 and the entropy reduces to ln d
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::invalid("entropy of an all-zero attribution is undefined"));
    }
    let q: Vec<f64> = values.iter().map(|v| v.abs() / peak).filter(|&q| q > 0.0).collect();
    let total: f64 = q.iter().sum();
    let h = total.ln() - q.iter().map(|q| q * q.ln()).sum::<f64>() / total;
    Ok(h.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((shannon_entropy(&[0.3; 784]).unwrap() - 784f64.ln()).abs() < 1e-12);
        assert_eq!(shannon_entropy(&[0.0, 5.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.0, 2.0, -2.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(shannon_entropy(&[0.0, 0.0]).is_err());
    }
}
