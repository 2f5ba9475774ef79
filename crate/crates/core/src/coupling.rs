//! The Kac coupling with a `λ/r²` tail, and certified sums of its tail.

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};

/// Parameters of the pair interaction.
///
/// The short-range part has strength `γ` up to distance `half_range = 1/(2γ)`,
/// beyond which the coupling is `λ/r²`. `γ` is stored through `half_range`
/// so that `2·γ·half_range = 1` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    half_range: u64,
    lambda: f64,
}

impl CouplingSpec {
    /// `half_range` must be a positive even integer and `lambda > 0`.
    pub fn new(half_range: u64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(KacError::InvalidCoupling(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Self::with_lambda(half_range, lambda)
    }

    /// Same as [`CouplingSpec::new`] with `γ` given directly; it must equal `1/(2k)`, `k` even.
    pub fn from_gamma(gamma: f64, lambda: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(KacError::InvalidCoupling(format!("gamma must lie in (0,1), got {gamma}")));
        }
        let k = (0.5 / gamma).round();
        if (0.5 / k - gamma).abs() > 1e-15 * gamma {
            return Err(KacError::InvalidCoupling(format!(
                "gamma = {gamma} is not of the form 1/(2k)"
            )));
        }
        Self::new(k as u64, lambda)
    }

    /// The short-range reference coupling (`λ = 0`), used for the `F⁰` functional.
    pub fn short_range(half_range: u64) -> Result<Self> {
        Self::with_lambda(half_range, 0.0)
    }

    fn with_lambda(half_range: u64, lambda: f64) -> Result<Self> {
        if half_range == 0 || half_range % 2 != 0 {
            return Err(KacError::InvalidCoupling(format!(
                "half range (2γ)^-1 must be a positive even integer, got {half_range}"
            )));
        }
        Ok(Self { half_range, lambda })
    }

    pub fn half_range(&self) -> u64 {
        self.half_range
    }

    pub fn gamma(&self) -> f64 {
        0.5 / self.half_range as f64
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `λ̃ = λγ`.
    pub fn lambda_tilde(&self) -> f64 {
        self.lambda * self.gamma()
    }

    /// Copy with the long-range tail switched off.
    pub fn without_tail(&self) -> Self {
        Self { half_range: self.half_range, lambda: 0.0 }
    }

    /// Default boundary window `W_cut = 10·half_range`.
    pub fn cutoff_window(&self) -> usize {
        10 * self.half_range as usize
    }

    /// `J_γ(r)` for `r ≥ 1`.
    pub fn coupling(&self, r: u64) -> Result<f64> {
        if r == 0 {
            return Err(KacError::SelfCoupling);
        }
        Ok(self.j(r))
    }

    /// Unchecked `J_γ(r)`; `r = 0` yields `γ` (the indicator includes the origin).
    #[inline]
    pub fn j(&self, r: u64) -> f64 {
        if r <= self.half_range {
            self.gamma()
        } else {
            let rf = r as f64;
            self.lambda / (rf * rf)
        }
    }

    /// `Σ_{r ≥ d} J_γ(r)` for `d ≥ 1`, with the `1/r²` part summed through [`tail_sum`].
    pub fn tail_from(&self, d: u64) -> f64 {
        debug_assert!(d >= 1);
        let short = if d <= self.half_range {
            self.gamma() * (self.half_range - d + 1) as f64
        } else {
            0.0
        };
        if self.lambda == 0.0 {
            return short;
        }
        short + self.lambda * tail_sum(d.max(self.half_range + 1))
    }

    /// `Σ_{k ≥ k0} J_γ(k·step)` for `k0 ≥ 1`: the coupling summed along a coarse lattice.
    pub fn lattice_tail_from(&self, k0: u64, step: u64) -> f64 {
        debug_assert!(k0 >= 1 && step >= 1);
        let k_short = self.half_range / step;
        let short = if k0 <= k_short {
            self.gamma() * (k_short - k0 + 1) as f64
        } else {
            0.0
        };
        if self.lambda == 0.0 {
            return short;
        }
        let s = step as f64;
        short + self.lambda / (s * s) * tail_sum(k0.max(k_short + 1))
    }
}

/// Number of leading terms summed explicitly before the asymptotic remainder.
const ASYMPTOTIC_START: u64 = 24;

/// `Σ_{r ≥ R} 1/r²` (the trigamma function at integer `R`), absolute error below `1e-15`.
///
/// Terms below [`ASYMPTOTIC_START`] are summed from the smallest upward; the rest uses
/// the Euler–Maclaurin expansion `1/x + 1/(2x²) + Σ B_{2k}/x^{2k+1}`.
pub fn tail_sum(r: u64) -> f64 {
    assert!(r >= 1, "tail_sum needs R >= 1");
    let start = r.max(ASYMPTOTIC_START);
    let mut acc = trigamma_asymptotic(start as f64);
    for k in (r..start).rev() {
        let kf = k as f64;
        acc += 1.0 / (kf * kf);
    }
    acc
}

fn trigamma_asymptotic(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: 1/6, -1/30, 1/42, -1/30, 5/66
    let series = inv2 * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))));
    inv + 0.5 * inv2 + inv * series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_examples() {
        let spec = CouplingSpec::new(4, 2.0).unwrap();
        assert_eq!(spec.gamma(), 0.125);
        assert_eq!(spec.coupling(4).unwrap(), 0.125);
        assert_eq!(spec.coupling(8).unwrap(), 0.03125);
        assert!((spec.coupling(5).unwrap() - 0.08).abs() < 1e-16);
        assert_eq!(spec.coupling(0), Err(KacError::SelfCoupling));
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(CouplingSpec::new(3, 1.0).is_err());
        assert!(CouplingSpec::new(0, 1.0).is_err());
        assert!(CouplingSpec::new(4, 0.0).is_err());
        assert!(CouplingSpec::from_gamma(0.1, 1.0).is_err());
        assert!(CouplingSpec::from_gamma(1.0 / 6.0, 1.0).is_err());
        assert_eq!(CouplingSpec::from_gamma(1.0 / 32.0, 5.0).unwrap().half_range(), 16);
    }

    #[test]
    fn tail_sum_values() {
        let z2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((tail_sum(1) - z2).abs() < 1e-14);
        let t5 = z2 - (1.0 + 0.25 + 1.0 / 9.0 + 1.0 / 16.0);
        assert!((tail_sum(5) - t5).abs() < 1e-14);
        let big = tail_sum(1_000_000);
        assert!(big >= 1e-6 && big <= 1.0 / 999_999.0);
    }

    #[test]
    fn tail_sum_partial_sum_oracle() {
        // 10^7 explicit terms plus the integral bracket [1/(N+1), 1/N] for the rest.
        let n = 10_000_000u64;
        let partial: f64 = (5..=n).rev().map(|k| 1.0 / (k as f64 * k as f64)).sum();
        let lo = partial + 1.0 / (n as f64 + 1.0);
        let hi = partial + 1.0 / n as f64;
        let t = tail_sum(5);
        assert!(t >= lo - 1e-15 && t <= hi + 1e-15);
        assert!((t - 0.2213229).abs() < 1e-7);
    }

    #[test]
    fn tail_brackets_and_monotone() {
        let mut prev = tail_sum(1);
        for r in 2..400u64 {
            let t = tail_sum(r);
            assert!(t < prev);
            assert!(t >= 1.0 / r as f64 && t <= 1.0 / (r as f64 - 1.0));
            prev = t;
        }
    }

    #[test]
    fn tail_from_matches_direct_sum() {
        let spec = CouplingSpec::new(4, 2.0).unwrap();
        for d in 1..12u64 {
            let direct: f64 = (d..2_000_000).rev().map(|r| spec.j(r)).sum::<f64>() + 2.0 / 2_000_000.0;
            assert!((spec.tail_from(d) - direct).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn lattice_tail_matches_direct_sum() {
        let spec = CouplingSpec::new(16, 5.0).unwrap();
        for step in [1u64, 3, 6] {
            for k0 in 1..10u64 {
                let direct: f64 =
                    (k0..1_000_000).rev().map(|k| spec.j(k * step)).sum::<f64>() + 5.0 / ((step * step) as f64 * 1_000_000.0);
                assert!((spec.lattice_tail_from(k0, step) - direct).abs() < 1e-11);
            }
        }
    }
}
