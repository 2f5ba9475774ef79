//! Three-scale coarse graining: block magnetizations, the phase labels `η` and `Θ`,
//! and the classification of `Θ` into rectangles and almost-signed intervals.

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};
use crate::lattice::SpinConfig;

/// Block lengths `ℓ₀ | ℓ₋ | ℓ₊` with `ℓ₀ < ℓ₋ < (2γ)⁻¹ < ℓ₊`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scales {
    pub ell0: u64,
    pub ellm: u64,
    pub ellp: u64,
    half_range: u64,
}

/// Multipliers used when the asymptotic scale formulas do not order at the given `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleOverrides {
    pub ellm_factor: u64,
    pub ellp_factor: u64,
}

impl Default for ScaleOverrides {
    fn default() -> Self {
        Self { ellm_factor: 2, ellp_factor: 4 }
    }
}

impl Scales {
    pub fn new(ell0: u64, ellm: u64, ellp: u64, half_range: u64) -> Result<Self> {
        let bad = |msg: String| Err(KacError::InvalidScales(msg));
        if ell0 == 0 || ellm == 0 || ellp == 0 {
            return bad("scales must be positive".into());
        }
        if ellm % ell0 != 0 || ellp % ellm != 0 {
            return bad(format!("need ell0 | ellm | ellp, got ({ell0}, {ellm}, {ellp})"));
        }
        if !(ell0 < ellm && ellm < half_range && half_range < ellp) {
            return bad(format!(
                "need ell0 < ellm < (2γ)^-1 < ellp, got ({ell0}, {ellm}, {half_range}, {ellp})"
            ));
        }
        Ok(Self { ell0, ellm, ellp, half_range })
    }

    pub fn half_range(&self) -> u64 {
        self.half_range
    }

    pub fn gamma(&self) -> f64 {
        0.5 / self.half_range as f64
    }

    pub fn delta0(&self) -> f64 {
        self.ell0 as f64 * self.gamma()
    }

    pub fn deltam(&self) -> f64 {
        self.ellm as f64 * self.gamma()
    }

    pub fn deltap(&self) -> f64 {
        self.ellp as f64 * self.gamma()
    }
}

/// Ideal (unrounded) scales `ℓ* = δ*/γ` with `δ₀ = γ^{1/2}`, `δ₋ = 1/ln γ⁻¹`,
/// `δ₊ = γ^{-1/2}/(ln γ⁻¹)³`.
pub fn ideal_scales(gamma: f64) -> (f64, f64, f64) {
    let l = (1.0 / gamma).ln();
    let d0 = gamma.sqrt();
    let dm = 1.0 / l;
    let dp = 1.0 / (gamma.sqrt() * l * l * l);
    (d0 / gamma, dm / gamma, dp / gamma)
}

/// Scales for a coupling: the asymptotic formulas rounded onto the divisibility
/// lattice when they already order correctly, otherwise the override multipliers
/// adjusted minimally until `ℓ₋ < (2γ)⁻¹ < ℓ₊`.
pub fn derive_scales(coupling: &CouplingSpec, overrides: ScaleOverrides) -> Result<Scales> {
    let half = coupling.half_range();
    let (i0, im, ip) = ideal_scales(coupling.gamma());
    let ell0 = (i0.round() as u64).max(1);
    let half_f = half as f64;
    if im < half_f && half_f < ip {
        let ellm = ell0 * ((im / ell0 as f64).round() as u64).max(1);
        let ellp = ellm * ((ip / ellm as f64).round() as u64).max(2);
        if let Ok(s) = Scales::new(ell0, ellm, ellp, half) {
            return Ok(s);
        }
    }
    let mut fm = overrides.ellm_factor.max(2);
    while fm > 1 && ell0 * fm >= half {
        fm -= 1;
    }
    if fm < 2 {
        return Err(KacError::InvalidScales(format!(
            "no ellm with ell0 = {ell0} < ellm < (2γ)^-1 = {half}; γ too large for three scales"
        )));
    }
    let ellm = ell0 * fm;
    let mut fp = overrides.ellp_factor.max(2);
    while ellm * fp <= half {
        fp += 1;
    }
    Scales::new(ell0, ellm, ellm * fp, half)
}

/// Block magnetizations `m^{ℓ}(x) = ℓ⁻¹ Σ_{i∈[x, x+ℓ)} σ(i)` on an `ℓ`-aligned interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagProfile {
    pub level: usize,
    /// First site of the first block; a multiple of `level`.
    pub origin: i64,
    pub values: Vec<f64>,
}

impl MagProfile {
    /// Profile with grid validation: every `ℓ(v+1)/2` must be an integer in `0..=ℓ`.
    pub fn new(level: usize, origin: i64, values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !on_grid(v, level) {
                return Err(KacError::OffGrid { value: v, level });
            }
        }
        Ok(Self { level, origin, values })
    }

    /// Profile without the grid check (real-valued relaxations).
    pub fn real(level: usize, origin: i64, values: Vec<f64>) -> Self {
        Self { level, origin, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Site where block `k` starts.
    pub fn block_site(&self, k: usize) -> i64 {
        self.origin + (k * self.level) as i64
    }

    /// Number of `+1` spins each block value corresponds to.
    pub fn plus_counts(&self) -> Result<Vec<usize>> {
        self.values
            .iter()
            .map(|&v| {
                if on_grid(v, self.level) {
                    Ok(((v + 1.0) * self.level as f64 / 2.0).round() as usize)
                } else {
                    Err(KacError::OffGrid { value: v, level: self.level })
                }
            })
            .collect()
    }
}

pub fn on_grid(v: f64, level: usize) -> bool {
    let k = (v + 1.0) * level as f64 / 2.0;
    (-1.0..=1.0).contains(&v) && (k - k.round()).abs() < 1e-9
}

/// Integer spin sums over consecutive blocks of length `level`.
pub fn block_sums(spins: &[i8], level: usize) -> Vec<i64> {
    spins.chunks(level).map(|c| c.iter().map(|&s| s as i64).sum()).collect()
}

pub fn block_mag(sigma: &SpinConfig, level: usize) -> Result<MagProfile> {
    if level == 0 || sigma.start().rem_euclid(level as i64) != 0 || sigma.len() % level != 0 {
        return Err(KacError::Domain(format!(
            "domain [{}, {}) is not {level}-measurable",
            sigma.start(),
            sigma.end()
        )));
    }
    let values = block_sums(sigma.spins(), level).into_iter().map(|s| s as f64 / level as f64).collect();
    Ok(MagProfile { level, origin: sigma.start(), values })
}

/// Phase label of one `ℓ₊` block from the spin sums of its `ℓ₋` sub-blocks.
pub fn eta_from_sums(sums: &[i64], ellm: u64, m_beta: f64, psi: f64) -> i8 {
    let l = ellm as f64;
    if sums.iter().all(|&s| (s as f64 / l - m_beta).abs() < psi) {
        1
    } else if sums.iter().all(|&s| (s as f64 / l + m_beta).abs() < psi) {
        -1
    } else {
        0
    }
}

/// `η^ψ` on the `ℓ₊` blocks of `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaField {
    pub psi: f64,
    /// Index of the first `ℓ₊` block (`start/ℓ₊`).
    pub origin_block: i64,
    pub values: Vec<i8>,
}

pub fn eta_field(sigma: &SpinConfig, scales: &Scales, m_beta: f64, psi: f64) -> Result<EtaField> {
    let ellp = scales.ellp as usize;
    if sigma.start().rem_euclid(ellp as i64) != 0 || sigma.len() % ellp != 0 {
        return Err(KacError::Domain(format!(
            "domain [{}, {}) is not ℓ₊ = {ellp} measurable",
            sigma.start(),
            sigma.end()
        )));
    }
    Ok(EtaField {
        psi,
        origin_block: sigma.start() / ellp as i64,
        values: eta_values(sigma.spins(), scales, m_beta, psi),
    })
}

pub fn eta_values(spins: &[i8], scales: &Scales, m_beta: f64, psi: f64) -> Vec<i8> {
    let sums = block_sums(spins, scales.ellm as usize);
    let per = (scales.ellp / scales.ellm) as usize;
    sums.chunks(per).map(|c| eta_from_sums(c, scales.ellm, m_beta, psi)).collect()
}

/// `Θ` on the blocks of `Λ` plus one guard block on each side.
///
/// Blocks outside `Λ` carry `η = outer`; the guard entries are evaluated with the
/// same triple-window rule, so edge effects look exactly like interior ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaField {
    pub origin_block: i64,
    pub outer: i8,
    /// `values[k]` is `Θ` at block offset `k − 1`.
    values: Vec<i8>,
}

impl ThetaField {
    pub fn from_extended(origin_block: i64, outer: i8, values: Vec<i8>) -> Self {
        Self { origin_block, outer, values }
    }

    /// Number of blocks of `Λ`.
    pub fn len(&self) -> usize {
        self.values.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Θ` at block offset `k` (relative to `Λ`'s first block); constant outside the guards.
    pub fn at(&self, k: i64) -> i8 {
        let idx = k + 1;
        if idx < 0 || idx >= self.values.len() as i64 {
            self.outer
        } else {
            self.values[idx as usize]
        }
    }

    pub fn interior(&self) -> &[i8] {
        &self.values[1..self.values.len() - 1]
    }

    /// Values on offsets `−1..=len`.
    pub fn extended(&self) -> &[i8] {
        &self.values
    }
}

/// `η` at block offset `k`, with `outer` outside `Λ`.
pub fn eta_at(eta: &[i8], outer: i8, k: i64) -> i8 {
    if k < 0 || k >= eta.len() as i64 {
        outer
    } else {
        eta[k as usize]
    }
}

/// Triple-window rule: `Θ(h) = s` iff `η(h−1) = η(h) = η(h+1) = s ≠ 0`.
pub fn theta_field(eta: &EtaField, outer: i8) -> ThetaField {
    theta_from_eta(&eta.values, eta.origin_block, outer)
}

pub fn theta_from_eta(eta: &[i8], origin_block: i64, outer: i8) -> ThetaField {
    let n = eta.len() as i64;
    let values = (-1..=n)
        .map(|h| {
            let a = eta_at(eta, outer, h - 1);
            let b = eta_at(eta, outer, h);
            let c = eta_at(eta, outer, h + 1);
            if a == b && b == c {
                a
            } else {
                0
            }
        })
        .collect();
    ThetaField { origin_block, outer, values }
}

/// Maximal run of `Θ = 0` blocks, in block offsets `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rectangle {
    pub start: i64,
    pub end: i64,
    pub left_sign: i8,
    pub right_sign: i8,
}

impl Rectangle {
    /// Separates phases of opposite sign.
    pub fn is_interface(&self) -> bool {
        self.left_sign != self.right_sign
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maximal almost-positive (`sign = 1`) or almost-negative interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub start: i64,
    pub end: i64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub rectangles: Vec<Rectangle>,
    pub phases: Vec<PhaseInterval>,
}

impl Classification {
    pub fn interface_rectangles(&self) -> impl Iterator<Item = &Rectangle> {
        self.rectangles.iter().filter(|r| r.is_interface())
    }

    pub fn almost_positive(&self) -> impl Iterator<Item = &PhaseInterval> {
        self.phases.iter().filter(|p| p.sign > 0)
    }

    pub fn almost_negative(&self) -> impl Iterator<Item = &PhaseInterval> {
        self.phases.iter().filter(|p| p.sign < 0)
    }
}

/// Rectangles and maximal almost-signed intervals of a `Θ` field (guards included).
pub fn classify_intervals(theta: &ThetaField) -> Classification {
    let n = theta.len() as i64;
    let mut rectangles = Vec::new();
    let mut k = -1;
    while k <= n {
        if theta.at(k) == 0 {
            let start = k;
            while k <= n && theta.at(k) == 0 {
                k += 1;
            }
            rectangles.push(Rectangle { start, end: k, left_sign: theta.at(start - 1), right_sign: theta.at(k) });
        } else {
            k += 1;
        }
    }

    let mut phases: Vec<PhaseInterval> = Vec::new();
    let mut current: Option<PhaseInterval> = None;
    for k in -1..=n {
        let t = theta.at(k);
        if t == 0 {
            continue;
        }
        match current.as_mut() {
            Some(p) if p.sign == t => p.end = k + 1,
            _ => {
                if let Some(p) = current.take() {
                    phases.push(p);
                }
                current = Some(PhaseInterval { start: k, end: k + 1, sign: t });
            }
        }
    }
    if let Some(p) = current {
        phases.push(p);
    }
    Classification { rectangles, phases }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoundaryCondition;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hand_eta() -> Vec<i8> {
        vec![1, 1, 1, -1, -1, -1, 1, 1, 1]
    }

    #[test]
    fn derive_scales_gamma_32() {
        let c = CouplingSpec::new(16, 5.0).unwrap();
        let s = derive_scales(&c, ScaleOverrides::default()).unwrap();
        assert_eq!((s.ell0, s.ellm, s.ellp), (6, 12, 48));
        assert!((s.delta0() - 6.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_formulas_order_for_tiny_gamma() {
        let gamma = 1e-12;
        let (_, im, ip) = ideal_scales(gamma);
        let half = 0.5 / gamma;
        assert!(im < half && half < ip);
        let c = CouplingSpec::from_gamma(gamma, 1.0).unwrap();
        let s = derive_scales(&c, ScaleOverrides::default()).unwrap();
        assert_eq!(s.ell0, 1_000_000);
        assert!(s.ellp as f64 > half);
    }

    #[test]
    fn derived_scales_always_valid() {
        for k in (2..400u64).step_by(2) {
            let c = CouplingSpec::new(k, 1.0).unwrap();
            if let Ok(s) = derive_scales(&c, ScaleOverrides::default()) {
                assert_eq!(s.ellm % s.ell0, 0);
                assert_eq!(s.ellp % s.ellm, 0);
                assert!(s.ell0 < s.ellm && s.ellm < k && k < s.ellp);
            }
        }
        assert!(derive_scales(&CouplingSpec::new(2, 1.0).unwrap(), ScaleOverrides::default()).is_err());
        assert!(Scales::new(2, 4, 6, 4).is_err());
        assert!(Scales::new(2, 3, 6, 4).is_err());
    }

    #[test]
    fn block_mag_examples() {
        let s = SpinConfig::new(0, vec![1, 1, 1, 1, 1, -1, 1, -1], BoundaryCondition::Free).unwrap();
        let m = block_mag(&s, 4).unwrap();
        assert_eq!(m.values, vec![1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spins: Vec<i8> = (0..120).map(|_| if rng.gen_bool(0.4) { 1 } else { -1 }).collect();
        let s = SpinConfig::new(-12, spins.clone(), BoundaryCondition::Free).unwrap();
        let m = block_mag(&s, 6).unwrap();
        for (k, v) in m.values.iter().enumerate() {
            let sum: i64 = spins[6 * k..6 * k + 6].iter().map(|&x| x as i64).sum();
            assert_eq!(*v, sum as f64 / 6.0);
        }
        assert!(MagProfile::new(6, 0, m.values.clone()).is_ok());
        assert!(block_mag(&SpinConfig::uniform(1, 12, 1, BoundaryCondition::Free).unwrap(), 6).is_err());
        assert!(MagProfile::new(4, 0, vec![0.3]).is_err());
    }

    #[test]
    fn eta_examples() {
        let scales = Scales::new(6, 12, 48, 16).unwrap();
        let m_beta = 0.95;
        let all_up = SpinConfig::uniform(0, 96, 1, BoundaryCondition::PlusOnes).unwrap();
        let eta = eta_field(&all_up, &scales, m_beta, 0.06).unwrap();
        assert_eq!(eta.values, vec![1, 1]);
        // zero out one ℓ₋ sub-block of the second ℓ₊ block
        let mut spins = vec![1i8; 96];
        for (k, s) in spins[60..72].iter_mut().enumerate() {
            *s = if k % 2 == 0 { 1 } else { -1 };
        }
        let s = SpinConfig::new(0, spins, BoundaryCondition::PlusOnes).unwrap();
        assert_eq!(eta_field(&s, &scales, m_beta, 0.5).unwrap().values, vec![1, 0]);
        let neg = s.negated();
        assert_eq!(eta_field(&neg, &scales, m_beta, 0.5).unwrap().values, vec![-1, 0]);
    }

    #[test]
    fn theta_hand_trace() {
        let th = theta_from_eta(&hand_eta(), 0, 1);
        assert_eq!(th.interior(), &[1, 1, 0, 0, -1, 0, 0, 1, 1]);
        assert_eq!(th.at(-1), 1);
        assert_eq!(th.at(9), 1);
        let c = classify_intervals(&th);
        let rects: Vec<(i64, i64, bool)> = c.rectangles.iter().map(|r| (r.start, r.end, r.is_interface())).collect();
        assert_eq!(rects, vec![(2, 4, true), (5, 7, true)]);
        assert_eq!(c.phases, vec![
            PhaseInterval { start: -1, end: 2, sign: 1 },
            PhaseInterval { start: 4, end: 5, sign: -1 },
            PhaseInterval { start: 7, end: 10, sign: 1 },
        ]);
    }

    #[test]
    fn all_plus_has_no_rectangles() {
        let th = theta_from_eta(&[1; 12], 0, 1);
        assert!(th.interior().iter().all(|&t| t == 1));
        let c = classify_intervals(&th);
        assert!(c.rectangles.is_empty());
        assert_eq!(c.phases, vec![PhaseInterval { start: -1, end: 13, sign: 1 }]);
    }

    fn random_eta(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
        let mut v = Vec::with_capacity(n);
        let mut cur: i8 = 1;
        while v.len() < n {
            let r: f64 = rng.gen();
            cur = if r < 0.15 { 0 } else if r < 0.3 { -cur.signum().max(-1).min(1) * if cur == 0 { -1 } else { 1 } } else { cur };
            let run = rng.gen_range(1..6);
            for _ in 0..run {
                if v.len() < n {
                    v.push(cur);
                }
            }
        }
        v
    }

    proptest! {
        #[test]
        fn theta_structure(seed in 0u64..10_000, n in 4usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eta = random_eta(&mut rng, n);
            let th = theta_from_eta(&eta, 0, 1);
            let c = classify_intervals(&th);
            // no isolated zero, short rectangles are opposite-η pairs
            for r in &c.rectangles {
                prop_assert!(r.len() >= 2);
                if r.len() == 2 {
                    prop_assert_eq!(eta_at(&eta, 1, r.start) * eta_at(&eta, 1, r.start + 1), -1);
                }
            }
            // rectangles cover exactly the zero set
            let mut covered = vec![false; n + 2];
            for r in &c.rectangles {
                for k in r.start..r.end {
                    prop_assert!(!covered[(k + 1) as usize]);
                    covered[(k + 1) as usize] = true;
                }
            }
            for k in -1..=n as i64 {
                prop_assert_eq!(covered[(k + 1) as usize], th.at(k) == 0);
            }
            // phases plus rectangles outside phases tile the extended domain
            let mut tile = vec![0u32; n + 2];
            for p in &c.phases {
                prop_assert_eq!(th.at(p.start), p.sign);
                prop_assert_eq!(th.at(p.end - 1), p.sign);
                for k in p.start..p.end {
                    prop_assert!(th.at(k) != -p.sign);
                    tile[(k + 1) as usize] += 1;
                }
            }
            for r in &c.rectangles {
                let inside = c.phases.iter().any(|p| p.start <= r.start && r.end <= p.end);
                if !inside {
                    for k in r.start..r.end {
                        tile[(k + 1) as usize] += 1;
                    }
                }
            }
            prop_assert!(tile.iter().all(|&t| t == 1));
        }

        #[test]
        fn eta_flip_and_permutation(seed in 0u64..10_000) {
            let scales = Scales::new(6, 12, 48, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: f64 = rng.gen_range(0.0..1.0);
            let mut spins: Vec<i8> = (0..192).map(|_| if rng.gen_bool(p) { 1 } else { -1 }).collect();
            let eta = eta_values(&spins, &scales, 0.9, 0.2);
            let neg: Vec<i8> = spins.iter().map(|s| -s).collect();
            let eta_neg = eta_values(&neg, &scales, 0.9, 0.2);
            prop_assert_eq!(eta_neg, eta.iter().map(|e| -e).collect::<Vec<_>>());
            for chunk in spins.chunks_mut(12) {
                chunk.reverse();
                chunk.rotate_left(5);
            }
            prop_assert_eq!(eta_values(&spins, &scales, 0.9, 0.2), eta.clone());
            let th = theta_from_eta(&eta, 0, 1);
            let th_neg = theta_from_eta(&eta.iter().map(|e| -e).collect::<Vec<_>>(), 0, -1);
            let flipped: Vec<i8> = th.extended().iter().map(|t| -t).collect();
            prop_assert_eq!(th_neg.extended(), &flipped[..]);
        }
    }
}
