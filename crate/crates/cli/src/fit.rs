//! Small regression helpers for trace summaries.

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (my + slope * (a - mx));
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: n,
    })
}

/// Median pairwise slope with the rank-based confidence band on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheilSen {
    pub slope: f64,
    pub low: f64,
    pub high: f64,
}

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

pub fn theil_sen(x: &[f64], y: &[f64]) -> Option<TheilSen> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(f64::total_cmp);
    let k = slopes.len();
    let median = if k % 2 == 1 {
        slopes[k / 2]
    } else {
        0.5 * (slopes[k / 2 - 1] + slopes[k / 2])
    };
    let nf = n as f64;
    let c = Z_95 * (nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0).sqrt();
    let lo = (((k as f64 - c) / 2.0).round().max(0.0) as usize).min(k - 1);
    let hi = (((k as f64 + c) / 2.0).round() as usize).min(k - 1);
    Some(TheilSen {
        slope: median,
        low: slopes[lo],
        high: slopes[hi],
    })
}

/// Fit of `log10(gap)` against the index over the stretch where the gap
/// first falls from `upper` to `lower`.
pub fn log_gap_segment(gaps: &[f64], upper: f64, lower: f64) -> Option<(usize, usize, LineFit)> {
    let start = gaps.iter().position(|g| *g <= upper)?;
    let end = start + gaps[start..].iter().position(|g| *g <= lower)?;
    let x: Vec<f64> = (start..=end).map(|k| k as f64).collect();
    let y: Vec<f64> = gaps[start..=end]
        .iter()
        .map(|g| g.max(f64::MIN_POSITIVE).log10())
        .collect();
    linear_fit(&x, &y).map(|f| (start, end, f))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn theil_sen_ignores_outlier() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        y[7] = 100.0;
        let t = theil_sen(&x, &y).unwrap();
        assert!((t.slope - 0.5).abs() < 1e-12);
        assert!(t.low <= 0.5 && t.high >= 0.5);
    }

    #[test]
    fn theil_sen_flat_noise_band_straddles_zero() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 7.3).sin()).collect();
        let t = theil_sen(&x, &y).unwrap();
        assert!(t.low < 0.0 && t.high > 0.0);
    }

    #[test]
    fn geometric_gap_segment() {
        let gaps: Vec<f64> = (0..100).map(|k| 10.0 * 0.8f64.powi(k)).collect();
        let (s, e, f) = log_gap_segment(&gaps, 1e-1, 1e-8).unwrap();
        assert!(s > 0 && e > s);
        assert!((f.slope - 0.8f64.log10()).abs() < 1e-12);
        assert!(f.r2 > 0.999_999);
    }
}
