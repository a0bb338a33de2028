use crate::error::check_dim;
use crate::{Error, Result};

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("mse operands", a.len(), b.len())?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// `1 - cos(f1, f2)`, in `[0, 2]`; zero when both vectors are zero and one
/// when exactly one of them is.
pub fn feature_distance(f1: &[f64], f2: &[f64]) -> Result<f64> {
    check_dim("feature vectors", f1.len(), f2.len())?;
    let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (a, b) in f1.iter().zip(f2) {
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 && n2 == 0.0 {
        return Ok(0.0);
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(1.0);
    }
    let cos = (dot / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

fn tri_sign(d: f64, tol: f64) -> i8 {
    if d.abs() <= tol {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// Fraction of the `d(d-1)/2` feature pairs whose ordering agrees between `x`
/// and `x_hat`. Differences within `tie_tol` count as ties; two ties agree.
pub fn rank_order_consistency(x: &[f64], x_hat: &[f64], tie_tol: f64) -> Result<f64> {
    check_dim("rank-order operands", x.len(), x_hat.len())?;
    let d = x.len();
    if d < 2 {
        return Err(Error::invalid("rank-order consistency needs at least 2 features"));
    }
    let mut agree = 0usize;
    for i in 0..d {
        for j in i + 1..d {
            if tri_sign(x[i] - x[j], tie_tol) == tri_sign(x_hat[i] - x_hat[j], tie_tol) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (d * (d - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    #[test]
    fn mse_cases() {
        let x = [0.3, -1.0, 2.0];
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse(&[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mse_matches_resummation() {
        let mut rng = RngState::new(21);
        let a = rng.gaussian_vec(10);
        let b = rng.gaussian_vec(10);
        // Independent route: pairwise (tree) summation in reverse order.
        let mut sq: Vec<f64> = a.iter().zip(&b).rev().map(|(x, y)| (x - y).powi(2)).collect();
        while sq.len() > 1 {
            sq = sq.chunks(2).map(|c| c.iter().sum()).collect();
        }
        assert!((mse(&a, &b).unwrap() - sq[0] / 10.0).abs() < 1e-12);
    }

    #[test]
    fn feature_distance_cases() {
        let f = [1.0, -2.0, 0.5];
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!(feature_distance(&f, &f).unwrap().abs() < 1e-15);
        assert!((feature_distance(&f, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!((feature_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(feature_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(feature_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rank_order_cases() {
        assert_eq!(rank_order_consistency(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1e-9).unwrap(), 1.0);
        assert_eq!(rank_order_consistency(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], 1e-9).unwrap(), 0.0);
        let v = rank_order_consistency(&[1.0, 3.0, 2.0], &[1.0, 2.0, 3.0], 1e-9).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        // tie in both -> concordant; tie in one only -> discordant
        assert_eq!(rank_order_consistency(&[1.0, 1.0], &[5.0, 5.0], 1e-9).unwrap(), 1.0);
        assert_eq!(rank_order_consistency(&[1.0, 1.0], &[5.0, 6.0], 1e-9).unwrap(), 0.0);
        assert!(rank_order_consistency(&[1.0], &[1.0], 1e-9).is_err());
    }

    proptest! {
        #[test]
        fn rank_order_invariant_under_increasing_maps(
            x in proptest::collection::vec(-5.0f64..5.0, 2..12),
            noise in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let xh: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let base = rank_order_consistency(&x, &xh, 0.0).unwrap();
            let f = |v: &f64| v.powi(3) + 2.0 * v;
            let tx: Vec<f64> = x.iter().map(f).collect();
            let txh: Vec<f64> = xh.iter().map(f).collect();
            prop_assert_eq!(base, rank_order_consistency(&tx, &txh, 0.0).unwrap());
        }
    }
}
