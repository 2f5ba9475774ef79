//! Scalar mean-field quantities: `m_β`, entropy, `f_β`, `β̃(b)`, `β̄(λ)`.

use crate::error::{KacError, Result};

/// Default `b̄`; any value above 7 is covered by the Peierls estimates.
pub const DEFAULT_B_BAR: f64 = 7.5;

/// Inverse temperature together with its spontaneous magnetization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldPoint {
    pub beta: f64,
    pub m_beta: f64,
}

impl MeanFieldPoint {
    pub fn new(beta: f64) -> Self {
        Self { beta, m_beta: solve_m_beta(beta) }
    }

    /// `β m_β²`.
    pub fn b(&self) -> f64 {
        self.beta * self.m_beta * self.m_beta
    }
}

/// Nonnegative root of `m = tanh(βm)`: zero for `β ≤ 1`.
///
/// Bisection on `(0, 1)` followed by a few Newton polishing steps; the
/// residual `|m − tanh(βm)|` is below `1e-12`.
pub fn solve_m_beta(beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    if beta <= 1.0 {
        return 0.0;
    }
    let g = |m: f64| (beta * m).tanh() - m;
    // g > 0 just right of 0 when β > 1, g(1) < 0
    let mut lo = f64::MIN_POSITIVE.max(1e-300);
    let mut hi = 1.0;
    while g(lo) <= 0.0 && lo < 1e-3 {
        lo *= 16.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..4 {
        let t = (beta * m).tanh();
        let dg = beta * (1.0 - t * t) - 1.0;
        if dg.abs() < 1e-300 {
            break;
        }
        let next = m - (t - m) / dg;
        if next > 0.0 && next < 1.0 && (next - m).abs() < 1e-6 {
            m = next;
        }
    }
    m
}

/// `S(m) = −(1+m)/2 ln((1+m)/2) − (1−m)/2 ln((1−m)/2)` on `(−1, 1)`.
pub fn entropy(m: f64) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(KacError::Domain(format!("entropy needs |m| < 1, got {m}")));
    }
    Ok(entropy_closed(m))
}

/// Entropy extended by continuity to `[−1, 1]` (`S(±1) = 0`).
pub fn entropy_closed(m: f64) -> f64 {
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    -xlogx(0.5 * (1.0 + m)) - xlogx(0.5 * (1.0 - m))
}

/// Mean-field free energy `f_β(m) = −m²/2 − S(m)/β`.
pub fn f_beta(beta: f64, m: f64) -> Result<f64> {
    Ok(-0.5 * m * m - entropy(m)? / beta)
}

/// `f_β` on the closed interval, with `S(±1) = 0`.
pub fn f_beta_closed(beta: f64, m: f64) -> f64 {
    -0.5 * m * m - entropy_closed(m) / beta
}

/// `f_β'(m) = −m + artanh(m)/β`.
pub fn f_beta_prime(beta: f64, m: f64) -> f64 {
    -m + m.atanh() / beta
}

/// `f_β''(m) = −1 + 1/(β(1−m²))`.
pub fn f_beta_second(beta: f64, m: f64) -> f64 {
    -1.0 + 1.0 / (beta * (1.0 - m * m))
}

/// The `β > 1` solving `β m_β² = b`.
pub fn beta_tilde(b: f64) -> f64 {
    assert!(b > 0.0, "b must be positive");
    let phi = |beta: f64| MeanFieldPoint::new(beta).b();
    let mut lo = 1.0;
    let mut hi = 2.0 * b + 2.0;
    while phi(hi) < b {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `β̄(λ) = β̃(b̄/λ)`.
pub fn beta_bar(lambda: f64, b_bar: f64) -> f64 {
    assert!(lambda > 0.0 && b_bar > 0.0);
    beta_tilde(b_bar / lambda)
}

/// Dobrushin uniqueness bound `(1 + 4λγ)⁻¹ < β_c`.
pub fn dobrushin_lower(gamma: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + 4.0 * lambda * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Damped fixed-point iteration, independent of the bisection path.
    fn fixed_point_oracle(beta: f64) -> f64 {
        let mut m = 1.0;
        for _ in 0..100_000 {
            let next = 0.5 * m + 0.5 * (beta * m).tanh();
            if (next - m).abs() < 1e-16 {
                return next;
            }
            m = next;
        }
        m
    }

    #[test]
    fn m_beta_examples() {
        assert_eq!(solve_m_beta(1.0), 0.0);
        assert_eq!(solve_m_beta(0.5), 0.0);
        assert!(solve_m_beta(100.0) > 0.999);
        let m2 = solve_m_beta(2.0);
        assert!((m2 - fixed_point_oracle(2.0)).abs() < 1e-12);
        assert!((m2 - 0.95750).abs() < 5e-6);
        let m3 = solve_m_beta(3.0);
        assert!((m3 - 0.99490).abs() < 5e-5, "{m3}");
    }

    #[test]
    fn residuals_are_tiny() {
        for beta in [1.01, 1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 50.0] {
            let m = solve_m_beta(beta);
            assert!((m - (beta * m).tanh()).abs() < 1e-12, "beta={beta}");
        }
    }

    #[test]
    fn entropy_and_free_energy() {
        assert!((entropy(0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(entropy(1.0).is_err());
        assert_eq!(entropy_closed(1.0), 0.0);
        assert!((f_beta(2.0, 0.0).unwrap() + std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        let m = solve_m_beta(2.0);
        assert!(f_beta(2.0, m).unwrap() < f_beta(2.0, 0.0).unwrap());
        for x in [0.1, 0.4, 0.9] {
            assert_eq!(f_beta(3.0, x).unwrap(), f_beta(3.0, -x).unwrap());
        }
    }

    #[test]
    fn curvature_at_m_beta_is_positive() {
        for beta in [1.2, 2.0, 3.0, 5.0] {
            let m = solve_m_beta(beta);
            let h = 1e-4_f64.min((1.0 - m) / 4.0);
            let fd = (f_beta(beta, m + h).unwrap() - 2.0 * f_beta(beta, m).unwrap() + f_beta(beta, m - h).unwrap()) / (h * h);
            assert!(fd > 0.0);
            if beta <= 3.0 {
                assert!((fd - f_beta_second(beta, m)).abs() < 1e-2 * f_beta_second(beta, m));
            }
        }
    }

    #[test]
    fn beta_tilde_round_trip_and_monotone() {
        assert!(beta_tilde(1e-6) < 1.001);
        let b2 = 2.0 * solve_m_beta(2.0).powi(2);
        assert!((beta_tilde(b2) - 2.0).abs() < 1e-9);
        for beta in [1.2, 2.0, 3.0, 5.0] {
            let b = MeanFieldPoint::new(beta).b();
            assert!((beta_tilde(b) - beta).abs() < 1e-8);
        }
        let b7 = beta_tilde(7.0);
        assert!((MeanFieldPoint::new(b7).b() - 7.0).abs() < 1e-10);
        let mut prev = 0.0;
        for k in 1..50 {
            let bt = beta_tilde(0.2 * k as f64);
            assert!(bt > prev);
            prev = bt;
        }
    }

    #[test]
    fn beta_bar_and_dobrushin() {
        assert!(beta_bar(10.0, 7.5) < beta_bar(5.0, 7.5));
        assert_eq!(beta_bar(7.5, 7.5), beta_tilde(1.0));
        assert_eq!(beta_bar(5.0, 7.5), beta_tilde(1.5));
        assert_eq!(dobrushin_lower(0.125, 2.0), 0.5);
        assert!((dobrushin_lower(1e-12, 1.0) - 1.0).abs() < 1e-11);
        for lambda in [0.5, 1.0, 5.0, 20.0] {
            for gamma in [1.0 / 64.0, 1.0 / 256.0] {
                assert!(dobrushin_lower(gamma, lambda) < beta_bar(lambda, DEFAULT_B_BAR));
            }
        }
    }
}
