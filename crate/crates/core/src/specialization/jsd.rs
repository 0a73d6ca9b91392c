use crate::error::{Error, Result};

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log2())
        .sum()
}

/// Jensen-Shannon divergence in bits, clamped to `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Config(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Numeric("distribution has negative or non-finite mass".into()));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m);
    Ok(d.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_supports_give_one_bit() {
        assert_eq!(jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_against_uniform_pair() {
        let expect = 1.5 - 0.75 * 3f64.log2();
        assert!((jsd(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.311278).abs() < 1e-6);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(jsd(&[1.0], &[0.5, 0.5]).is_err());
    }
}
