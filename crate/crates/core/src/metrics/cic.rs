use crate::error::{Error, Result};
use crate::scm::mean_std;

fn standardized(name: &str, v: &[f64]) -> Result<Vec<f64>> {
    let (m, s) = mean_std(v);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateColumn(name.to_string()));
    }
    Ok(v.iter().map(|x| (x - m) / s).collect())
}

/// Relative noise recovery error `Σ(û - u)² / Σu²` after standardizing
/// both sequences.
pub fn delta_u(recovered: &[f64], truth: &[f64]) -> Result<f64> {
    if recovered.len() != truth.len() {
        return Err(Error::dim("noise sequences", truth.len(), recovered.len()));
    }
    if truth.len() < 10 {
        return Err(Error::Data(format!(
            "noise recovery error needs at least 10 units, got {}",
            truth.len()
        )));
    }
    let r = standardized("recovered noise", recovered)?;
    let u = standardized("true noise", truth)?;
    let num: f64 = r.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = u.iter().map(|b| b * b).sum();
    Ok(num / den)
}

/// Round-trip reconstruction error relative to the spread of `original`.
pub fn delta_sre(reconstructed: &[f64], original: &[f64]) -> Result<f64> {
    if reconstructed.len() != original.len() {
        return Err(Error::dim(
            "round-trip values",
            original.len(),
            reconstructed.len(),
        ));
    }
    let (m, s) = mean_std(original);
    if !(s > 0.0) {
        return Err(Error::DegenerateColumn("round-trip input".into()));
    }
    let num: f64 = reconstructed
        .iter()
        .zip(original)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = original.iter().map(|x| (x - m) * (x - m)).sum();
    Ok(num / den)
}

/// `exp(-(δ_U + δ_SRE))`.
pub fn cic_score(delta_u: f64, delta_sre: f64) -> Result<f64> {
    if !(delta_u >= 0.0) || !(delta_sre >= 0.0) {
        return Err(Error::Data(format!(
            "CIC inputs must be non-negative, got δ_U={delta_u}, δ_SRE={delta_sre}"
        )));
    }
    Ok((-(delta_u + delta_sre)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_noise_has_zero_error() {
        let u: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(delta_u(&u, &u).unwrap(), 0.0);
        let scaled: Vec<f64> = u.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!(delta_u(&scaled, &u).unwrap() < 1e-24);
    }

    #[test]
    fn independent_noise_approaches_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let d = delta_u(&a, &b).unwrap();
        assert!((1.8..=2.2).contains(&d), "{d}");
    }

    #[test]
    fn cic_values() {
        assert_eq!(cic_score(0.0, 0.0).unwrap(), 1.0);
        assert!((cic_score(1.0, 0.0).unwrap() - 0.36788).abs() < 1e-5);
        assert!((cic_score(0.5, 0.25).unwrap() - 0.4724).abs() < 1e-4);
        assert!(cic_score(-0.1, 0.0).is_err());
    }

    #[test]
    fn bad_inputs() {
        assert!(delta_u(&[1.0; 5], &[1.0; 5]).is_err());
        assert!(matches!(
            delta_u(&[1.0; 12], &(0..12).map(f64::from).collect::<Vec<_>>()),
            Err(Error::DegenerateColumn(_))
        ));
        assert!(delta_u(&[1.0; 12], &[1.0; 11]).is_err());
    }
}
