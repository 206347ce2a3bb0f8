//! Rate-distortion curves and Bjøntegaard-Delta metrics.
//!
//! Each curve is fit with a least-squares cubic `log10(bitrate) = p(quality)`.
//! BD-Rate is the mean gap between the two cubics over the quality range both
//! curves cover, mapped back from log space: `10^mean - 1`. The cubic is fit in
//! a centered, half-range-scaled variable so that qualities on a 0..100 scale
//! do not wreck the normal equations, and it is integrated analytically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum condition number accepted for the 4×4 normal equations.
pub const MAX_CONDITION: f64 = 1e10;
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bitrate_kbps: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(bitrate_kbps: f64, quality: f64) -> Self {
        RdPoint { bitrate_kbps, quality }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    points: Vec<RdPoint>,
    level: f64,
}

impl RdCurve {
    /// Validates and sorts `points` by quality.
    pub fn new(mut points: Vec<RdPoint>, level: f64) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::contract(format!(
                "an RD curve needs at least {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.bitrate_kbps.is_finite() && p.bitrate_kbps > 0.0) {
                return Err(Error::contract(format!("bitrate must be positive, got {}", p.bitrate_kbps)));
            }
            if !p.quality.is_finite() {
                return Err(Error::contract(format!("quality must be finite, got {}", p.quality)));
            }
        }
        points.sort_by(|a, b| a.quality.total_cmp(&b.quality));
        if let Some(w) = points.windows(2).find(|w| w[0].quality == w[1].quality) {
            return Err(Error::contract(format!("duplicate quality {} in RD curve", w[0].quality)));
        }
        Ok(RdCurve { points, level })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality, self.points[self.points.len() - 1].quality)
    }

    fn log_rate_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .map(|p| p.bitrate_kbps.log10())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }
}

/// A cubic `p(x) = c0 + c1 t + c2 t^2 + c3 t^3` with `t = (x - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    center: f64,
    scale: f64,
    coeffs: [f64; 4],
    condition: f64,
}

impl CubicFit {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        let c = &self.coeffs;
        ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
    }

    /// Exact integral over `[a, b]` from the antiderivative.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.center) / self.scale;
            let c = &self.coeffs;
            t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)))
        };
        self.scale * (anti(b) - anti(a))
    }

    /// Coefficients `[a0, a1, a2, a3]` of the same cubic in the raw variable,
    /// `p(x) = a0 + a1 x + a2 x^2 + a3 x^3`.
    pub fn monomial_coefficients(&self) -> [f64; 4] {
        // substitute t = (x - m) / s and expand
        let (m, s) = (self.center, self.scale);
        let c = &self.coeffs;
        let d = [c[0], c[1] / s, c[2] / (s * s), c[3] / (s * s * s)];
        [
            d[0] - d[1] * m + d[2] * m * m - d[3] * m * m * m,
            d[1] - 2.0 * d[2] * m + 3.0 * d[3] * m * m,
            d[2] - 3.0 * d[3] * m,
            d[3],
        ]
    }

    /// Condition number of the normal equations the fit was solved from.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// Least-squares cubic through `(x, y)`; exact interpolation for four points.
pub fn fit_cubic(xs: &[f64], ys: &[f64]) -> Result<CubicFit> {
    if xs.len() != ys.len() {
        return Err(Error::contract("x and y lengths differ"));
    }
    if xs.len() < MIN_POINTS {
        return Err(Error::Fit(format!("cubic fit needs {MIN_POINTS} points, got {}", xs.len())));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Fit("duplicate abscissae make the fit rank deficient".into()));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);

    let mut ata = [[0.0; 4]; 4];
    let mut aty = [0.0; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - center) / scale;
        let row = [1.0, t, t * t, t * t * t];
        for i in 0..4 {
            aty[i] += row[i] * y;
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let eig = symmetric_eigenvalues(ata);
    let (min_eig, max_eig) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Fit(format!("normal equations ill-conditioned (condition {condition:.3e})")));
    }
    let coeffs = cholesky_solve(ata, aty)
        .ok_or_else(|| Error::Fit("normal equations are not positive definite".into()))?;
    Ok(CubicFit { center, scale, coeffs, condition })
}

/// Cubic of `log10(bitrate)` as a function of quality.
pub fn fit_log_poly(points: &[RdPoint]) -> Result<CubicFit> {
    let qs: Vec<f64> = points.iter().map(|p| p.quality).collect();
    let rs: Vec<f64> = points.iter().map(|p| p.bitrate_kbps.log10()).collect();
    fit_cubic(&qs, &rs)
}

fn cholesky_solve(a: [[f64; 4]; 4], b: [f64; 4]) -> Option<[f64; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        x[i] = (y[i] - (i + 1..4).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Cyclic Jacobi rotations; converges in a handful of sweeps for 4×4.
fn symmetric_eigenvalues(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    for _ in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    [a[0][0], a[1][1], a[2][2], a[3][3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdRateResult {
    /// Fractional bitrate change at equal quality; `-0.25` is a 25% saving.
    pub value: f64,
    pub overlap: (f64, f64),
    pub anchor_level: f64,
    pub test_level: f64,
}

fn overlap((a_lo, a_hi): (f64, f64), (b_lo, b_hi): (f64, f64)) -> Result<(f64, f64)> {
    let (low, high) = (a_lo.max(b_lo), a_hi.min(b_hi));
    if !(high > low) {
        return Err(Error::NoOverlap { low, high });
    }
    Ok((low, high))
}

/// Mean log10-bitrate difference (test minus anchor) over the shared quality
/// interval, with the fits and the interval it was computed on.
pub fn mean_log_rate_gap(anchor: &RdCurve, test: &RdCurve) -> Result<(f64, (f64, f64))> {
    let (low, high) = overlap(anchor.quality_range(), test.quality_range())?;
    let fa = fit_log_poly(&anchor.points)?;
    let ft = fit_log_poly(&test.points)?;
    let gap = (ft.integral(low, high) - fa.integral(low, high)) / (high - low);
    Ok((gap, (low, high)))
}

pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdRateResult> {
    let (gap, overlap) = mean_log_rate_gap(anchor, test)?;
    Ok(BdRateResult {
        value: 10f64.powf(gap) - 1.0,
        overlap,
        anchor_level: anchor.level,
        test_level: test.level,
    })
}

/// Average quality difference (test minus anchor) at equal bitrate.
pub fn bd_quality(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (low, high) = overlap(anchor.log_rate_range(), test.log_rate_range())?;
    let fit = |c: &RdCurve| {
        let rs: Vec<f64> = c.points.iter().map(|p| p.bitrate_kbps.log10()).collect();
        let qs: Vec<f64> = c.points.iter().map(|p| p.quality).collect();
        fit_cubic(&rs, &qs)
    };
    let (fa, ft) = (fit(anchor)?, fit(test)?);
    Ok((ft.integral(low, high) - fa.integral(low, high)) / (high - low))
}
