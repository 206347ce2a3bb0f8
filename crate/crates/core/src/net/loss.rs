//! Training objective: mean absolute error plus a pairwise monotonicity term,
//! and the PLCC / RMSE evaluation metrics.

use crate::error::{Error, Result};

fn check_lengths(preds: &[f64], gts: &[f64]) -> Result<()> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} labels", preds.len(), gts.len())));
    }
    Ok(())
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Σ_{i≠j} max((p_i − p_j)·sgn(g_j − g_i), 0)` with its gradient in `preds`.
/// The kink at 0 gets subgradient 0.
pub fn mono_loss(preds: &[f64], gts: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(preds, gts)?;
    let mut total = 0.0;
    let mut grad = vec![0.0; preds.len()];
    for i in 0..preds.len() {
        for j in 0..preds.len() {
            let s = sgn(gts[j] - gts[i]);
            let term = (preds[i] - preds[j]) * s;
            if i != j && term > 0.0 {
                total += term;
                grad[i] += s;
                grad[j] -= s;
            }
        }
    }
    Ok((total, grad))
}

/// Mean absolute error and its gradient (0 where prediction equals label).
pub fn l1_loss(preds: &[f64], gts: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(preds, gts)?;
    let n = preds.len() as f64;
    let loss = preds.iter().zip(gts).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
    let grad = preds.iter().zip(gts).map(|(p, g)| sgn(p - g) / n).collect();
    Ok((loss, grad))
}

/// `l1_loss + lambda_mono · mono_loss`, with gradient.
pub fn overall_loss(preds: &[f64], gts: &[f64], lambda_mono: f64) -> Result<(f64, Vec<f64>)> {
    if !(lambda_mono >= 0.0) {
        return Err(Error::contract(format!("lambda_mono {lambda_mono} must be non-negative")));
    }
    let (l1, g1) = l1_loss(preds, gts)?;
    let (mono, gm) = mono_loss(preds, gts)?;
    let grad = g1.iter().zip(&gm).map(|(a, b)| a + lambda_mono * b).collect();
    Ok((l1 + lambda_mono * mono, grad))
}

/// Pearson correlation and root-mean-square error of predictions against labels.
///
/// Constant labels leave PLCC undefined and are an error; constant predictions
/// give PLCC 0.
pub fn evaluate(preds: &[f64], gts: &[f64]) -> Result<(f64, f64)> {
    check_lengths(preds, gts)?;
    if preds.len() < 2 {
        return Err(Error::contract("PLCC needs at least two samples"));
    }
    let n = preds.len() as f64;
    let (mp, mg) = (preds.iter().sum::<f64>() / n, gts.iter().sum::<f64>() / n);
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        cov += (p - mp) * (g - mg);
        vp += (p - mp) * (p - mp);
        vg += (g - mg) * (g - mg);
    }
    if vg == 0.0 {
        return Err(Error::contract("labels have zero variance; PLCC undefined"));
    }
    let plcc = if vp == 0.0 { 0.0 } else { cov / (vp * vg).sqrt() };
    let rmse = (preds.iter().zip(gts).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n).sqrt();
    Ok((plcc, rmse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::check;
    use proptest::prelude::*;

    #[test]
    fn mono_examples() {
        assert_eq!(mono_loss(&[0.1, 0.5, 2.0], &[0.0, 1.0, 3.0]).unwrap().0, 0.0);
        assert_eq!(mono_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap().0, 2.0);
        assert_eq!(mono_loss(&[3.0, -1.0, 7.0], &[1.5; 3]).unwrap().0, 0.0);
    }

    #[test]
    fn composition_example() {
        let (l, _) = overall_loss(&[1.0, 0.0], &[0.0, 1.0], 0.3).unwrap();
        assert_eq!(l, 1.6);
        assert_eq!(overall_loss(&[0.5, 2.0], &[0.5, 2.0], 0.3).unwrap().0, 0.0);
        assert_eq!(overall_loss(&[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap().0, l1_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap().0);
    }

    #[test]
    fn metric_examples() {
        let g = [0.0, 0.5, 1.5, 3.0];
        assert_eq!(evaluate(&g, &g).unwrap(), (1.0, 0.0));
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!((evaluate(&neg, &g).unwrap().0 + 1.0).abs() < 1e-12);
        let affine: Vec<f64> = g.iter().map(|v| 2.0 * v + 3.0).collect();
        let (plcc, rmse) = evaluate(&affine, &g).unwrap();
        assert!((plcc - 1.0).abs() < 1e-12 && rmse > 0.0);
        assert!(evaluate(&g, &[1.0; 4]).is_err());
        assert!(evaluate(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(mono_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(overall_loss(&[], &[], 0.3).is_err());
    }

    fn brute_mono(p: &[f64], g: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..p.len() {
            for j in 0..p.len() {
                if i != j {
                    total += ((p[i] - p[j]) * sgn(g[j] - g[i])).max(0.0);
                }
            }
        }
        total
    }

    proptest! {
        #[test]
        fn mono_is_shift_invariant_and_nonnegative(
            pg in prop::collection::vec((-3.0f64..3.0, 0u8..7), 1..12),
            shift in -10.0f64..10.0,
        ) {
            let p: Vec<f64> = pg.iter().map(|x| x.0).collect();
            let g: Vec<f64> = pg.iter().map(|x| x.1 as f64 * 0.5).collect();
            let (m, _) = mono_loss(&p, &g).unwrap();
            let shifted: Vec<f64> = p.iter().map(|v| v + shift).collect();
            prop_assert!(m >= 0.0);
            prop_assert!((mono_loss(&shifted, &g).unwrap().0 - m).abs() <= 1e-9 * (1.0 + m));
            prop_assert!((brute_mono(&p, &g) - m).abs() <= 1e-12 * (1.0 + m));
        }

        #[test]
        fn mono_zero_iff_weakly_order_consistent(pg in prop::collection::vec((0u8..5, 0u8..5), 1..10)) {
            let p: Vec<f64> = pg.iter().map(|x| x.0 as f64).collect();
            let g: Vec<f64> = pg.iter().map(|x| x.1 as f64).collect();
            let consistent = (0..p.len()).all(|i| (0..p.len()).all(|j| !(g[i] < g[j] && p[i] > p[j])));
            prop_assert_eq!(mono_loss(&p, &g).unwrap().0 == 0.0, consistent);
        }

        #[test]
        fn l1_term_is_one_lipschitz(p in prop::collection::vec(-3.0f64..3.0, 2..8), k in 0usize..8, d in -1.0f64..1.0) {
            let g: Vec<f64> = (0..p.len()).map(|i| (i % 4) as f64 * 0.5).collect();
            let mut q = p.clone();
            let k = k % p.len();
            q[k] += d;
            let (a, _) = overall_loss(&p, &g, 0.0).unwrap();
            let (b, _) = overall_loss(&q, &g, 0.0).unwrap();
            prop_assert!((a - b).abs() <= d.abs() + 1e-12);
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        // distinct predictions, away from every pairwise and L1 kink
        let p = [0.13, 1.91, 0.77, 2.42, 1.36];
        let g = [0.0, 1.5, 0.5, 1.0, 3.0];
        let (_, grad) = overall_loss(&p, &g, 0.3).unwrap();
        assert!(check(|v| overall_loss(v, &g, 0.3).unwrap().0, &p, &grad) < 1e-5);
    }
}
