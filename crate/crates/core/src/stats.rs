//! Scalar-generic numeric kernels: aggregation, rank correlation, softmax,
//! smoothed KL divergence, Gaussian path smoothing, and discrete curvature.

use crate::error::{Error, Result};
use crate::scalar::{cast, Float};

/// Arithmetic mean. `None` for an empty slice.
pub fn mean<F: Float>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<F>() / cast(xs.len() as f64))
}

/// Standard median: the middle value, or the average of the two middle values
/// for even length. `None` for an empty slice.
pub fn median<F: Float>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = sorted.len();
    if n % 2 == 1 {
        Some(sorted[n / 2])
    } else {
        Some((sorted[n / 2 - 1] + sorted[n / 2]) / cast(2.0))
    }
}

/// 1-based ranks with average ranks assigned to ties.
pub fn ranks<F: Float>(xs: &[F]) -> Vec<F> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite value in ranks"));

    let mut out = vec![F::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the group average.
        let avg = cast::<F>((i + j + 2) as f64) / cast(2.0);
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation coefficient.
pub fn pearson<F: Float>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewValues {
            what: "correlation",
            need: 2,
            got: xs.len(),
        });
    }
    let mx = mean(xs).unwrap();
    let my = mean(ys).unwrap();
    let mut cov = F::zero();
    let mut vx = F::zero();
    let mut vy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov = cov + dx * dy;
        vx = vx + dx * dx;
        vy = vy + dy * dy;
    }
    if vx == F::zero() || vy == F::zero() {
        return Err(Error::ConstantInput);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of the rank vectors, with
/// average ranks for ties.
pub fn spearman<F: Float>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Numerically stable softmax of `-costs / temperature`.
///
/// Equal costs map to equal weights; subtracting the minimum cost before
/// exponentiation keeps the result finite for large cost magnitudes.
pub fn softmax_neg_costs<F: Float>(costs: &[F], temperature: F) -> Vec<F> {
    if costs.is_empty() {
        return Vec::new();
    }
    let min = costs.iter().copied().fold(F::infinity(), F::min);
    let raw: Vec<F> = costs.iter().map(|&c| (-(c - min) / temperature).exp()).collect();
    let total: F = raw.iter().copied().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Smoothed KL divergence over aligned supports:
/// `sum_i p_i * ln((p_i + eps) / (q_i + eps))`, clamped at zero from below.
///
/// Both slices must describe probabilities over the same cells in the same
/// order; entries missing from one side are expected as explicit zeros.
pub fn kl_divergence_smoothed<F: Float>(p: &[F], q: &[F], eps: F) -> F {
    debug_assert_eq!(p.len(), q.len());
    let mut total = F::zero();
    for (&pv, &qv) in p.iter().zip(q) {
        if pv > F::zero() {
            total = total + pv * ((pv + eps) / (qv + eps)).ln();
        }
    }
    total.max(F::zero())
}

/// Discrete Gaussian kernel truncated at three sigma, normalized to sum 1.
pub fn gaussian_kernel<F: Float>(sigma: F) -> Vec<F> {
    assert!(sigma > F::zero(), "gaussian sigma must be positive");
    let radius = (sigma * cast(3.0)).ceil().to_usize().unwrap_or(1).max(1);
    let mut weights = Vec::with_capacity(2 * radius + 1);
    for k in -(radius as isize)..=(radius as isize) {
        let d = cast::<F>(k as f64);
        weights.push((-(d * d) / (cast::<F>(2.0) * sigma * sigma)).exp());
    }
    let total: F = weights.iter().copied().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Smooth a 2D point sequence with a truncated Gaussian, renormalizing the
/// kernel where it overhangs the sequence boundary.
pub fn smooth_positions<F: Float>(points: &[(F, F)], sigma: F) -> Vec<(F, F)> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sx = F::zero();
        let mut sy = F::zero();
        let mut sw = F::zero();
        for (k, &w) in kernel.iter().enumerate() {
            let j = i as isize + k as isize - radius as isize;
            if j < 0 || j >= n as isize {
                continue;
            }
            let (x, y) = points[j as usize];
            sx = sx + w * x;
            sy = sy + w * y;
            sw = sw + w;
        }
        out.push((sx / sw, sy / sw));
    }
    out
}

/// Unsigned curvature `|x'y'' - y'x''| / (x'^2 + y'^2)^(3/2)` of a point
/// sequence via central differences (one-sided at the ends).
///
/// The quotient is invariant to the parameter spacing, so index-parametrized
/// differences recover the geometric curvature. Poses with near-zero
/// parametric speed (repeated points) get curvature 0.
pub fn curvature_profile<F: Float>(points: &[(F, F)]) -> Vec<F> {
    let n = points.len();
    let mut out = vec![F::zero(); n];
    if n < 3 {
        return out;
    }
    let speed_floor = cast::<F>(1e-9);
    for i in 0..n {
        let (prev, next) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let span = cast::<F>((next - prev) as f64);
        if span == F::zero() {
            continue;
        }
        let dx = (points[next].0 - points[prev].0) / span;
        let dy = (points[next].1 - points[prev].1) / span;
        // Second difference needs both neighbors; fall back to the nearest
        // interior estimate at the ends.
        let j = i.clamp(1, n - 2);
        let ddx = points[j + 1].0 - points[j].0 * cast(2.0) + points[j - 1].0;
        let ddy = points[j + 1].1 - points[j].1 * cast(2.0) + points[j - 1].1;
        let speed_sq = dx * dx + dy * dy;
        if speed_sq.sqrt() < speed_floor {
            continue;
        }
        let denom = speed_sq.powf(cast(1.5));
        out[i] = (dx * ddy - dy * ddx).abs() / denom;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_median_basics() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 100.0]), Some(103.0 / 3.0));
        assert_eq!(median(&[0.0, 0.0, 0.0]), Some(0.0));
        assert_eq!(median(&[1.0, 2.0, 100.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        // Order must not matter.
        assert_eq!(median(&[100.0, 1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn ranks_with_ties_average() {
        let r = ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn spearman_identical_and_reversed() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_hand_value() {
        // Tie-free case: 1 - 6*sum(d^2)/(n(n^2-1)) with d^2 = (1,1,1,1) -> 0.6.
        let rho = spearman(&[1.0f64, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((rho - 0.6).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[1.0], &[1.0]),
            Err(Error::TooFewValues { .. })
        ));
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantInput)
        ));
    }

    #[test]
    fn spearman_works_at_f32() {
        let rho = spearman(&[1.0f32, 2.0, 3.0, 4.0], &[2.0f32, 1.0, 4.0, 3.0]).unwrap();
        assert!((rho - 0.6).abs() < 1e-6);
    }

    #[test]
    fn softmax_equal_costs_is_uniform() {
        let w = softmax_neg_costs(&[0.0f64; 25], 1.0);
        for &wi in &w {
            assert_eq!(wi, w[0]);
            assert!((wi - 1.0 / 25.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_costs_hand_value() {
        // costs (0, ln 3), T = 1  ->  weights (3/4, 1/4).
        let w = softmax_neg_costs(&[0.0, 3.0f64.ln()], 1.0);
        assert!((w[0] - 0.75).abs() < 1e-12);
        assert!((w[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kl_identity_is_exactly_zero() {
        let p = [0.3, 0.2, 0.5];
        assert_eq!(kl_divergence_smoothed(&p, &p, 1e-12), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        // p=[1,0], q=[0.5,0.5] -> ln 2 = 0.6931...
        let d = kl_divergence_smoothed(&[1.0f64, 0.0], &[0.5, 0.5], 1e-12);
        assert!((d - 0.6931).abs() < 1e-4);
        // p=[0.75,0.25], q=[0.5,0.5] -> 0.75 ln 1.5 + 0.25 ln 0.5 = 0.1308...
        let d = kl_divergence_smoothed(&[0.75f64, 0.25], &[0.5, 0.5], 1e-12);
        assert!((d - 0.1308).abs() < 1e-4);
    }

    #[test]
    fn gaussian_kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(2.0f64);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() / 2 {
            assert!((k[i] - k[k.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn straight_line_curvature_is_zero() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.8, 3.0)).collect();
        for k in curvature_profile(&pts) {
            assert!(k <= 1e-9);
        }
    }

    #[test]
    fn circle_curvature_matches_radius() {
        let r = 20.0f64;
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let a = i as f64 * 0.04;
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let ks = curvature_profile(&pts);
        for &k in &ks[5..195] {
            assert!((k - 0.05).abs() / 0.05 < 0.05, "kappa = {k}");
        }
    }

    #[test]
    fn repeated_points_have_zero_curvature() {
        let pts = vec![(1.0, 1.0); 10];
        assert!(curvature_profile(&pts).iter().all(|&k| k == 0.0));
    }

    #[test]
    fn smoothing_reduces_noise_curvature() {
        // Zig-zag around a straight line: smoothing must lower the max curvature.
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|i| (i as f64, if i % 2 == 0 { 0.2 } else { -0.2 }))
            .collect();
        let raw_max = curvature_profile(&pts).into_iter().fold(0.0, f64::max);
        let smoothed = smooth_positions(&pts, 2.0);
        let smooth_max = curvature_profile(&smoothed).into_iter().fold(0.0, f64::max);
        assert!(smooth_max < raw_max);
    }
}
