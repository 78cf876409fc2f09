use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scm::mean_std;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_samples(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::dim("sample dimension", a.cols(), b.cols()));
    }
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::Data(
            "MMD needs at least two points per sample".into(),
        ));
    }
    Ok(())
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Data(format!(
            "kernel bandwidth must be > 0, got {sigma}"
        )));
    }
    Ok(())
}

/// Unbiased squared MMD between two samples (rows are points) under the RBF
/// kernel `exp(-‖a - b‖² / (2σ²))`.
pub fn mmd2_unbiased(a: &Matrix<f64>, b: &Matrix<f64>, sigma: f64) -> Result<f64> {
    check_samples(a, b)?;
    check_bandwidth(sigma)?;
    let c = -0.5 / (sigma * sigma);
    let within = |s: &Matrix<f64>| {
        let n = s.rows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += (c * sq_dist(s.row(i), s.row(j))).exp();
            }
        }
        2.0 * acc / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            cross += (c * sq_dist(a.row(i), b.row(j))).exp();
        }
    }
    Ok(within(a) + within(b) - 2.0 * cross / (a.rows() * b.rows()) as f64)
}

/// Median pairwise Euclidean distance of the pooled sample after
/// standardizing each column with pooled statistics.
pub fn median_heuristic(pooled: &Matrix<f64>) -> Result<f64> {
    let n = pooled.rows();
    if n < 2 {
        return Err(Error::Data(
            "median heuristic needs at least two points".into(),
        ));
    }
    let mut z = pooled.clone();
    for j in 0..z.cols() {
        let col: Vec<f64> = (0..n).map(|i| z.get(i, j)).collect();
        let (m, s) = mean_std(&col);
        let s = if s > 0.0 { s } else { 1.0 };
        for i in 0..n {
            z.set(i, j, (col[i] - m) / s);
        }
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(z.row(i), z.row(j)).sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        Ok(m)
    } else {
        Err(Error::Data("median pairwise distance is zero".into()))
    }
}

/// Permutation p-value of the unbiased MMD² statistic.
pub fn mmd_permutation_test(
    a: &Matrix<f64>,
    b: &Matrix<f64>,
    sigma: f64,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    check_samples(a, b)?;
    check_bandwidth(sigma)?;
    let (m, n) = (a.rows(), b.rows());
    let pooled = Matrix::vstack(&[a, b])?;
    let total = m + n;
    let c = -0.5 / (sigma * sigma);
    let mut kernel = vec![0.0; total * total];
    for i in 0..total {
        for j in i + 1..total {
            let k = (c * sq_dist(pooled.row(i), pooled.row(j))).exp();
            kernel[i * total + j] = k;
            kernel[j * total + i] = k;
        }
    }
    let statistic = |order: &[usize]| {
        let (sa, sb) = order.split_at(m);
        let sum = |p: &[usize], q: &[usize]| {
            p.iter()
                .map(|&i| q.iter().map(|&j| kernel[i * total + j]).sum::<f64>())
                .sum::<f64>()
        };
        sum(sa, sa) / (m * (m - 1)) as f64 + sum(sb, sb) / (n * (n - 1)) as f64
            - 2.0 * sum(sa, sb) / (m * n) as f64
    };
    let mut order: Vec<usize> = (0..total).collect();
    let observed = statistic(&order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0;
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        if statistic(&order) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (1 + permutations) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, shift: f64, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n)
            .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::column(&v)
    }

    #[test]
    fn identical_samples_bounded() {
        let a = gaussian(200, 0.0, 1);
        let v = mmd2_unbiased(&a, &a, 1.0).unwrap();
        assert!(v.abs() <= 4.0 / 200.0, "{v}");
    }

    #[test]
    fn shifted_gaussians_detected() {
        let v = mmd2_unbiased(&gaussian(500, 0.0, 2), &gaussian(500, 1.0, 3), 1.0).unwrap();
        assert!(v > 0.1, "{v}");
    }

    #[test]
    fn same_law_not_rejected() {
        let (a, b) = (gaussian(150, 0.0, 4), gaussian(150, 0.0, 5));
        let s = median_heuristic(&Matrix::vstack(&[&a, &b]).unwrap()).unwrap();
        let p = mmd_permutation_test(&a, &b, s, 200, 0).unwrap();
        assert!(p > 0.01, "{p}");
        let p_shift = mmd_permutation_test(&a, &gaussian(150, 1.0, 6), s, 200, 0).unwrap();
        assert!(p_shift < 0.01, "{p_shift}");
    }

    #[test]
    fn median_of_known_points() {
        let m = Matrix::column(&[0.0, 1.0, 2.0]);
        // standardized spacing is 1/sqrt(2/3); distances d, d, 2d
        let d = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((median_heuristic(&m).unwrap() - d).abs() < 1e-12);
        assert!(mmd2_unbiased(&m, &m, 0.0).is_err());
    }
}
