//! Interaction between two disjoint `ℓ₊`-measurable intervals at the `ℓ₀` and `ℓ₋` levels.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::coarse::{MagProfile, Scales};
use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionDiff {
    /// `ℓ₀² Σ_{x∈A, y∈B} J(|x−y|) m(x)m(y)` over `ℓ₀` block corners.
    pub fine: f64,
    /// `ℓ₋² Σ_{u∈A, v∈B} J(|u−v|) m^{ℓ₋}(u)m^{ℓ₋}(v)` over `ℓ₋` block corners.
    pub coarse: f64,
    pub diff: f64,
    /// `d(A, B) = 1`.
    pub adjacent: bool,
    pub deltam: f64,
    pub lambda: f64,
    pub ellm: u64,
}

impl InteractionDiff {
    /// `ℓ₋[4δ₋ 1_{d(A,B)=1} + 8λK]`.
    pub fn bound(&self, k: f64) -> f64 {
        self.ellm as f64 * (4.0 * self.deltam * if self.adjacent { 1.0 } else { 0.0 } + 8.0 * self.lambda * k)
    }

    /// Smallest `K` for which this sample satisfies the bound (`0` if the `δ₋` term suffices).
    pub fn k_needed(&self) -> f64 {
        let excess = self.diff / self.ellm as f64 - if self.adjacent { 4.0 * self.deltam } else { 0.0 };
        if excess <= 0.0 {
            0.0
        } else if self.lambda > 0.0 {
            excess / (8.0 * self.lambda)
        } else {
            f64::INFINITY
        }
    }
}

fn check(r: &Range<i64>, m: &MagProfile, ellp: i64) -> Result<()> {
    if r.start % ellp != 0 || r.end % ellp != 0 || r.start >= r.end {
        return Err(KacError::Domain(format!("{r:?} is not a nonempty ℓ₊-measurable interval")));
    }
    let end = m.origin + (m.len() * m.level) as i64;
    if r.start < m.origin || r.end > end {
        return Err(KacError::Domain(format!("{r:?} leaves the profile")));
    }
    Ok(())
}

/// Both double sums of the `ℓ₀`/`ℓ₋` interaction comparison and their difference.
pub fn block_interaction_diff(
    coupling: &CouplingSpec,
    m: &MagProfile,
    a: Range<i64>,
    b: Range<i64>,
    scales: &Scales,
) -> Result<InteractionDiff> {
    if m.level as u64 != scales.ell0 || m.origin % scales.ellm as i64 != 0 {
        return Err(KacError::Domain("profile must be an ℓ₀ profile starting on the ℓ₋ grid".into()));
    }
    let ellp = scales.ellp as i64;
    check(&a, m, ellp)?;
    check(&b, m, ellp)?;
    if a.start < b.end && b.start < a.end {
        return Err(KacError::Domain(format!("A = {a:?} and B = {b:?} overlap")));
    }
    let l0 = scales.ell0 as i64;
    let lm = scales.ellm as i64;
    let at = |x: i64| m.values[((x - m.origin) / l0) as usize];
    let coarse_at = |u: i64| (u..u + lm).step_by(l0 as usize).map(at).sum::<f64>() * l0 as f64 / lm as f64;
    let pair_sum = |step: i64, val: &dyn Fn(i64) -> f64| {
        let mut s = 0.0;
        for x in a.clone().step_by(step as usize) {
            let vx = val(x);
            for y in b.clone().step_by(step as usize) {
                s += coupling.j(x.abs_diff(y)) * vx * val(y);
            }
        }
        (step * step) as f64 * s
    };
    let fine = pair_sum(l0, &at);
    let coarse = pair_sum(lm, &coarse_at);
    let gap = (b.start - a.end + 1).max(a.start - b.end + 1);
    Ok(InteractionDiff {
        fine,
        coarse,
        diff: (fine - coarse).abs(),
        adjacent: gap == 1,
        deltam: scales.deltam(),
        lambda: coupling.lambda(),
        ellm: scales.ellm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scales() -> Scales {
        Scales::new(6, 12, 48, 16).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> MagProfile {
        MagProfile::new(6, 0, (0..n).map(|_| rng.gen_range(0..=6) as f64 / 3.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn zero_profile_and_far_apart() {
        let c = CouplingSpec::new(16, 3.0).unwrap();
        let z = MagProfile::new(6, 0, vec![0.0; 64]).unwrap();
        let r = block_interaction_diff(&c, &z, 0..96, 96..240, &scales()).unwrap();
        assert_eq!((r.fine, r.coarse, r.diff), (0.0, 0.0, 0.0));
        assert!(r.adjacent);
        let short = CouplingSpec::short_range(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random(&mut rng, 64);
        let r = block_interaction_diff(&short, &m, 0..96, 192..384, &scales()).unwrap();
        assert_eq!((r.fine, r.coarse), (0.0, 0.0));
        assert!(!r.adjacent);
    }

    #[test]
    fn matches_naive_sums() {
        let c = CouplingSpec::new(16, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random(&mut rng, 40);
        let r = block_interaction_diff(&c, &m, 48..96, 144..240, &scales()).unwrap();
        let v = &m.values;
        let mut fine = 0.0;
        for p in 8..16usize {
            for q in 24..40usize {
                fine += 36.0 * c.j(6 * (q - p) as u64) * v[p] * v[q];
            }
        }
        let mut coarse = 0.0;
        for u in 4..8usize {
            for w in 12..20usize {
                let mu = (v[2 * u] + v[2 * u + 1]) / 2.0;
                let mw = (v[2 * w] + v[2 * w + 1]) / 2.0;
                coarse += 144.0 * c.j(12 * (w - u) as u64) * mu * mw;
            }
        }
        assert!((r.fine - fine).abs() < 1e-12 && (r.coarse - coarse).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_is_not_exact() {
        // Riemann sums at two resolutions differ even for constant m once J varies inside ℓ₋ blocks.
        let c = CouplingSpec::short_range(16).unwrap();
        let m = MagProfile::new(6, 0, vec![1.0; 16]).unwrap();
        let r = block_interaction_diff(&c, &m, 0..48, 48..96, &scales()).unwrap();
        assert!(r.diff > 0.0);
        assert!(r.diff <= r.bound(0.0));
    }

    #[test]
    fn overlap_rejected() {
        let c = CouplingSpec::new(16, 2.0).unwrap();
        let m = MagProfile::new(6, 0, vec![0.0; 32]).unwrap();
        assert!(block_interaction_diff(&c, &m, 0..96, 48..144, &scales()).is_err());
        assert!(block_interaction_diff(&c, &m, 0..50, 96..144, &scales()).is_err());
    }
}
