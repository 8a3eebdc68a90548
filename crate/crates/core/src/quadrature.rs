//! Deterministic integration helpers shared by the numerical modules.

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

/// Order of the Gauss-Legendre rule used on short panels.
const PANEL_ORDER: usize = 8;

/// Pairwise (cascade) summation; fixed order, so reductions are reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `log(sum(exp(values)))` with max shifting; `-inf` for empty input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Composite Simpson weights for `intervals` (even) equal sub-intervals of width `h`.
pub fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    debug_assert!(intervals >= 2 && intervals % 2 == 0);
    (0..=intervals)
        .map(|k| {
            let c = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn legendre_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).unwrap())
            .as_node_weight_pairs()
            .to_vec()
    })
}

/// Gauss-Legendre integral of `f` over `[a, b]` (single panel).
pub fn legendre_panel<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    legendre_rule()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integral of `f` over `[a, b]` split into panels no wider than `max_width`.
/// Works for `b < a` (returns the signed integral).
pub fn legendre_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, max_width: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = (((b - a).abs() / max_width).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let parts: Vec<f64> = (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            legendre_panel(&f, lo, lo + h)
        })
        .collect();
    pairwise_sum(&parts)
}

/// Gauss-Hermite rule rescaled to the standard normal: `E[g(Z)] ~ sum w_i g(z_i)`.
pub fn normal_rule(order: usize) -> Vec<(f64, f64)> {
    let gh = GaussHermite::new(NonZeroUsize::new(order).expect("positive order"));
    let norm = std::f64::consts::PI.sqrt();
    gh.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
        .collect()
}

/// Visits every point of the tensor product of a 1-d rule in `dim` dimensions,
/// passing the point and the product weight.
pub fn for_each_tensor<F: FnMut(&[f64], f64)>(rule: &[(f64, f64)], dim: usize, mut f: F) {
    let n = rule.len();
    let total = n.checked_pow(dim as u32).expect("tensor grid too large");
    let mut point = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        let mut weight = 1.0;
        for p in point.iter_mut() {
            let (x, w) = rule[rest % n];
            *p = x;
            weight *= w;
            rest /= n;
        }
        f(&point, weight);
    }
}

/// Equally spaced grid of `points` nodes on `[-half_width, half_width]`.
pub fn uniform_grid(half_width: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    let h = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|k| -half_width + k as f64 * h).collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let w = simpson_weights(4, 0.5);
        let xs = [0.0f64, 0.5, 1.0, 1.5, 2.0];
        let s: f64 = xs.iter().zip(&w).map(|(x, w)| w * x.powi(3)).sum();
        assert_relative_eq!(s, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn panels_handle_reversed_limits() {
        let fwd = legendre_panels(|x| x.exp(), 0.0, 2.0, 0.3);
        let rev = legendre_panels(|x| x.exp(), 2.0, 0.0, 0.3);
        assert_relative_eq!(fwd, 2f64.exp() - 1.0, epsilon = 1e-13);
        assert_relative_eq!(rev, -fwd, epsilon = 1e-13);
    }

    #[test]
    fn normal_rule_reproduces_moments() {
        let rule = normal_rule(32);
        let m2: f64 = rule.iter().map(|(z, w)| w * z * z).sum();
        let m4: f64 = rule.iter().map(|(z, w)| w * z.powi(4)).sum();
        assert_relative_eq!(m2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m4, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_large_arguments() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert_relative_eq!(v, 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
