//! Softmax, KL and Jensen-Shannon divergence (natural log).

use super::AlignError;

/// Categorical distribution produced by [`softmax`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Max-subtracted softmax of `z / temperature`.
pub fn softmax_t(z: &[f64], temperature: f64) -> Result<DistributionVector, AlignError> {
    if z.is_empty() {
        return Err(AlignError::DimensionMismatch { left: 0, right: 1 });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(AlignError::NonFiniteInput);
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(DistributionVector(
        exps.into_iter().map(|e| e / sum).collect(),
    ))
}

pub fn softmax(z: &[f64]) -> Result<DistributionVector, AlignError> {
    softmax_t(z, 1.0)
}

/// `sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64, AlignError> {
    if p.len() != q.len() {
        return Err(AlignError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(AlignError::InvalidDistribution(
                    "q has zero mass where p does not".into(),
                ));
            }
            sum += pi * (pi / qi).ln();
        }
    }
    // rounding can leave a tiny negative value at p = q
    Ok(sum.max(0.0))
}

/// `0.5 KL(P||M) + 0.5 KL(Q||M)` with `M = (P + Q) / 2`; lies in `[0, ln 2]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, AlignError> {
    if p.len() != q.len() {
        return Err(AlignError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    // symmetric term-by-term form, so jsd(p, q) == jsd(q, p) bitwise
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = 0.5 * (pi + qi);
        let mut t = 0.0;
        if pi > 0.0 {
            t += pi * (pi / mi).ln();
        }
        if qi > 0.0 {
            t += qi * (qi / mi).ln();
        }
        sum += 0.5 * t;
    }
    Ok(sum.clamp(0.0, std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0; 4]).unwrap();
        assert_eq!(p.as_slice(), &[0.25; 4]);
        for c in [-50.0, 0.0, 3.7, 1e3] {
            let p = softmax(&[c, c + 3f64.ln()]).unwrap();
            assert!((p.as_slice()[0] - 0.25).abs() < 1e-12);
            assert!((p.as_slice()[1] - 0.75).abs() < 1e-12);
        }
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.090_030_57, 0.244_728_47, 0.665_240_96];
        for (a, b) in p.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(matches!(
            softmax(&[1.0, f64::NAN]),
            Err(AlignError::NonFiniteInput)
        ));
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_div(&p, &p).unwrap(), 0.0);
        assert!((kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - LN_2).abs() < 1e-15);
        assert!(kl_div(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_div(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn jsd_examples() {
        let p = [0.1, 0.9];
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn jsd_matches_kl_definition() {
        let p = softmax(&[0.3, -1.0, 2.0, 0.1]).unwrap().into_inner();
        let q = softmax(&[1.3, 0.0, -2.0, 0.5]).unwrap().into_inner();
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let via_kl = 0.5 * kl_div(&p, &m).unwrap() + 0.5 * kl_div(&q, &m).unwrap();
        assert!((jsd(&p, &q).unwrap() - via_kl).abs() < 1e-15);
    }
}
