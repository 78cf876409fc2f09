use crate::error::{Error, Result};
use crate::scm::mean_std;

/// Default neighbour count.
pub const KSG_NEIGHBOURS: usize = 5;

/// Digamma function for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let (m, s) = mean_std(v);
    let s = if s > 0.0 { s } else { 1.0 };
    v.iter().map(|x| (x - m) / s).collect()
}

/// Conditional mutual information `I(X; Y | Z)` in nats by the
/// nearest-neighbour estimator under the max-norm. With no `z` columns this is
/// plain mutual information.
///
/// Every column is standardized first.
pub fn ksg_cmi(x: &[f64], y: &[f64], z: &[&[f64]], k: usize) -> Result<f64> {
    let n = x.len();
    if y.len() != n || z.iter().any(|c| c.len() != n) {
        return Err(Error::Data(
            "mutual information inputs differ in length".into(),
        ));
    }
    if k == 0 || n <= k {
        return Err(Error::Data(format!(
            "need more than k={k} samples, got {n}"
        )));
    }
    if x.iter()
        .chain(y)
        .chain(z.iter().flat_map(|c| c.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(Error::Data(
            "mutual information inputs must be finite".into(),
        ));
    }
    let xs = standardize(x);
    let ys = standardize(y);
    let zs: Vec<Vec<f64>> = z.iter().map(|c| standardize(c)).collect();
    let zdist = |i: usize, j: usize| zs.iter().fold(0.0f64, |m, c| m.max((c[i] - c[j]).abs()));

    let mut joint = vec![0.0; n - 1];
    let mut total = 0.0;
    for i in 0..n {
        let mut idx = 0;
        for j in (0..n).filter(|&j| j != i) {
            joint[idx] = zdist(i, j)
                .max((xs[i] - xs[j]).abs())
                .max((ys[i] - ys[j]).abs());
            idx += 1;
        }
        let (_, eps, _) = joint.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let (mut nxz, mut nyz, mut nz) = (0usize, 0usize, 0usize);
        for j in (0..n).filter(|&j| j != i) {
            let dz = zdist(i, j);
            if dz >= eps {
                continue;
            }
            nz += 1;
            if (xs[i] - xs[j]).abs() < eps {
                nxz += 1;
            }
            if (ys[i] - ys[j]).abs() < eps {
                nyz += 1;
            }
        }
        total += digamma(nxz as f64 + 1.0) + digamma(nyz as f64 + 1.0) - digamma(nz as f64 + 1.0);
    }
    Ok(digamma(k as f64) - total / n as f64)
}
