//! Exact enumeration on tiny volumes: the `G` correction, constrained partition
//! functions and the contour-bucketed `Ĥ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::functional::{f_terms, BoundaryProfile, ProfileContext};
use crate::coarse::{eta_values, on_grid, MagProfile, Scales};
use crate::error::{KacError, Result};
use crate::geometry::{extract_contours, Contour, Element};
use crate::lattice::{boundary_field_at, coupling_table, hamiltonian, BoundaryCondition, SpinConfig};
use crate::meanfield::{entropy_closed, solve_m_beta};
use crate::sampler::{config_of, MAX_EXACT_SITES};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_profile(ctx: &ProfileContext, m: &MagProfile) -> Result<Vec<usize>> {
    if m.level as u64 != ctx.ell0 {
        return Err(KacError::Domain(format!("profile level {} != ℓ₀ = {}", m.level, ctx.ell0)));
    }
    let n = m.len() * m.level;
    if n > MAX_EXACT_SITES {
        return Err(KacError::TooLarge { size: n, max: MAX_EXACT_SITES });
    }
    if m.values.iter().any(|&v| !on_grid(v, m.level)) {
        return Err(KacError::Unrealizable);
    }
    m.plus_counts()
}

/// Calls `f` on every configuration whose `ℓ`-blocks carry the given numbers of `+` spins.
fn for_each_constrained(counts: &[usize], ell: usize, mut f: impl FnMut(&[i8])) {
    let patterns: Vec<Vec<Vec<i8>>> = counts
        .iter()
        .map(|&k| {
            (0..1usize << ell)
                .filter(|b| b.count_ones() as usize == k)
                .map(|b| config_of(b, ell))
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; counts.len()];
    let mut sigma = vec![0i8; counts.len() * ell];
    loop {
        for (p, &i) in idx.iter().enumerate() {
            sigma[p * ell..(p + 1) * ell].copy_from_slice(&patterns[p][i]);
        }
        f(&sigma);
        let mut p = 0;
        loop {
            if p == idx.len() {
                return;
            }
            idx[p] += 1;
            if idx[p] < patterns[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// `ln Z_Λ(m|σ̄) = ln Σ_{σ: m^{ℓ₀}(σ) = m} e^{−βH_Λ(σ|σ̄)}` by brute force, with the
/// coupling of `ctx` (tail on or off).
pub fn constrained_log_z(ctx: &ProfileContext, m: &MagProfile, boundary: &BoundaryCondition) -> Result<f64> {
    let counts = check_profile(ctx, m)?;
    let j = ctx.j();
    let mut log_z = f64::NEG_INFINITY;
    let mut err = None;
    for_each_constrained(&counts, m.level, |s| {
        match SpinConfig::new(m.origin, s.to_vec(), boundary.clone()).and_then(|c| hamiltonian(&j, &c)) {
            Ok(h) => log_z = log_add(log_z, -ctx.beta * h),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(log_z),
    }
}

/// `G_Λ(m|σ̄)`, defined so that `−(γ/β) ln Z_Λ(m|σ̄) = F_Λ(m|m̄) + G_Λ(m|σ̄)` with
/// `m̄` the `ℓ₀` block averages of `σ̄`.
///
/// Writing `J(i−j) = J(x_i−x_j) + ΔJ_ij` with `x` the block corners, and the boundary
/// field as `ℓ₀ Σ_{y∉Λ} J(x−y) m̄(y) + B_i`,
/// `G = (δ₀/β) Σ S(m) + (1−‖J‖₀)(δ₀/2) Σ m² − γℓ₀² Σ_{x∈Λ,y∉Λ} J m̄(y)² + γ²|Λ|/2
///      − (γ/β) ln Σ_{σ: m} exp(β(Σ_{i<j} ΔJ_ij σ_iσ_j + Σ_i B_i σ_i))`.
pub fn eval_g(ctx: &ProfileContext, m: &MagProfile, boundary: &BoundaryCondition) -> Result<f64> {
    let counts = check_profile(ctx, m)?;
    let j = ctx.j();
    let ell0 = m.level;
    let nb = m.len();
    let n = nb * ell0;
    let bdry = BoundaryProfile::from_condition(boundary, ctx.ell0);
    let corner = |i: usize| (i / ell0 * ell0) as i64;
    let mut dj = vec![0.0; n * n];
    for i in 0..n {
        for k in i + 1..n {
            dj[i * n + k] = j.j((k - i) as u64) - j.j(corner(k).abs_diff(corner(i)));
        }
    }
    if !matches!(boundary, BoundaryCondition::Free) {
        SpinConfig::new(m.origin, vec![1; n], boundary.clone())?.check_boundary(&j)?;
    }
    let b: Vec<f64> = (0..n)
        .map(|i| boundary_field_at(&j, boundary, n, i) - ell0 as f64 * bdry.outside_sum(ctx, nb, i / ell0, |v| v))
        .collect();
    let mut log_sum = f64::NEG_INFINITY;
    for_each_constrained(&counts, ell0, |s| {
        let mut r = 0.0;
        for i in 0..n {
            let si = s[i] as f64;
            let mut acc = b[i];
            for k in i + 1..n {
                acc += dj[i * n + k] * s[k] as f64;
            }
            r += si * acc;
        }
        log_sum = log_add(log_sum, ctx.beta * r);
    });
    let gamma = ctx.gamma();
    let d0 = ctx.delta0();
    let entropy: f64 = m.values.iter().map(|&v| entropy_closed(v)).sum();
    let square: f64 = m.values.iter().map(|&v| v * v).sum();
    let boundary_sq = 2.0 * f_terms(ctx, &m.values, &bdry).boundary_sq;
    Ok(d0 / ctx.beta * entropy + 0.5 * (1.0 - ctx.norm_j0()) * d0 * square - boundary_sq
        + 0.5 * gamma * gamma * n as f64
        - gamma / ctx.beta * log_sum)
}

/// `−(γ/β) ln Z_Λ(m|σ̄) − F_Λ(m|m̄) − G_Λ(m|σ̄)`, zero up to rounding.
pub fn identity_gap(ctx: &ProfileContext, m: &MagProfile, boundary: &BoundaryCondition) -> Result<f64> {
    let bdry = BoundaryProfile::from_condition(boundary, ctx.ell0);
    let lhs = -ctx.gamma() / ctx.beta * constrained_log_z(ctx, m, boundary)?;
    let f = f_terms(ctx, &m.values, &bdry).total();
    Ok(lhs - f - eval_g(ctx, m, boundary)?)
}

/// One bucket of configurations sharing the same contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatHBucket {
    pub elements: Vec<Element>,
    pub contours: Vec<Contour>,
    /// `−(γ/β) ln Σ_{σ in bucket} e^{−βH}`.
    pub hat_h: f64,
    pub configurations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatHTable {
    pub buckets: Vec<HatHBucket>,
    pub log_z: f64,
}

impl HatHTable {
    pub fn empty_bucket(&self) -> Option<&HatHBucket> {
        self.buckets.iter().find(|b| b.elements.is_empty())
    }

    /// `ln Σ_buckets e^{−βγ⁻¹Ĥ}`.
    pub fn log_bucket_sum(&self, gamma: f64, beta: f64) -> f64 {
        self.buckets.iter().fold(f64::NEG_INFINITY, |acc, b| log_add(acc, -beta / gamma * b.hat_h))
    }
}

/// Enumerates every `σ` on `[start, start+n)`, extracts its contours and returns
/// `Ĥ` per contour configuration.
pub fn hat_h_enumerate(
    ctx: &ProfileContext,
    scales: &Scales,
    start: i64,
    n: usize,
    boundary: &BoundaryCondition,
    psi: f64,
    varpi: f64,
) -> Result<HatHTable> {
    if n > MAX_EXACT_SITES {
        return Err(KacError::TooLarge { size: n, max: MAX_EXACT_SITES });
    }
    let ellp = scales.ellp;
    if start.rem_euclid(ellp as i64) != 0 || n as u64 % ellp != 0 {
        return Err(KacError::Domain(format!("[{start}, {start}+{n}) is not ℓ₊ = {ellp} measurable")));
    }
    let j = ctx.j();
    let m_beta = solve_m_beta(ctx.beta);
    let outer = boundary.outer_sign();
    let origin_block = start / ellp as i64;
    let mut sums: BTreeMap<Vec<Element>, (Vec<Contour>, f64, usize)> = BTreeMap::new();
    SpinConfig::new(start, vec![1; n], boundary.clone())?.check_boundary(&j)?;
    let table = coupling_table(&j, n);
    let field: Vec<f64> = (0..n).map(|i| boundary_field_at(&j, boundary, n, i)).collect();
    let mut log_z = f64::NEG_INFINITY;
    for idx in 0..1usize << n {
        let s = config_of(idx, n);
        let mut h = 0.0;
        for i in 0..n {
            let mut acc = field[i];
            for k in i + 1..n {
                acc += table[k - i] * s[k] as f64;
            }
            h -= s[i] as f64 * acc;
        }
        let w = -ctx.beta * h;
        let eta = eta_values(&s, scales, m_beta, psi);
        let ex = extract_contours(&eta, origin_block, outer, ellp, varpi);
        let e = sums.entry(ex.elements).or_insert_with(|| (ex.contours, f64::NEG_INFINITY, 0));
        e.1 = log_add(e.1, w);
        e.2 += 1;
        log_z = log_add(log_z, w);
    }
    let gamma = ctx.gamma();
    let buckets = sums
        .into_iter()
        .map(|(elements, (contours, ls, count))| HatHBucket {
            elements,
            contours,
            hat_h: -gamma / ctx.beta * ls,
            configurations: count,
        })
        .collect();
    Ok(HatHTable { buckets, log_z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingSpec;
    use crate::lattice::BoundaryWindow;

    fn identity_gap(ctx: &ProfileContext, m: &MagProfile, boundary: &BoundaryCondition) -> f64 {
        super::identity_gap(ctx, m, boundary).unwrap()
    }

    #[test]
    fn single_block_free() {
        let c = ProfileContext::new(1.3, CouplingSpec::short_range(2).unwrap(), 4, false).unwrap();
        let m = MagProfile::new(4, 0, vec![0.0]).unwrap();
        let mut z = 0.0;
        for b in 0..16usize {
            if b.count_ones() == 2 {
                let s = config_of(b, 4);
                let mut h = 0.0;
                for i in 0..4 {
                    for k in i + 1..4 {
                        h -= c.coupling.j((k - i) as u64) * (s[i] * s[k]) as f64;
                    }
                }
                z += (-1.3 * h).exp();
            }
        }
        assert!((constrained_log_z(&c, &m, &BoundaryCondition::Free).unwrap() - z.ln()).abs() < 1e-13);
        assert!(identity_gap(&c, &m, &BoundaryCondition::Free).abs() < 1e-12);
    }

    #[test]
    fn saturated_block() {
        let c = ProfileContext::new(2.0, CouplingSpec::new(2, 1.0).unwrap(), 4, true).unwrap();
        let m = MagProfile::new(4, 0, vec![1.0, -0.5]).unwrap();
        assert!(identity_gap(&c, &m, &BoundaryCondition::PlusOnes).abs() < 1e-9);
        let full = MagProfile::new(4, 0, vec![1.0]).unwrap();
        assert!(identity_gap(&c, &full, &BoundaryCondition::MinusOnes).abs() < 1e-12);
    }

    #[test]
    fn identity_on_all_two_block_profiles() {
        let left: Vec<i8> = (0..20).map(|k| if k % 3 == 1 { -1 } else { 1 }).collect();
        let right: Vec<i8> = (0..23).map(|k| if k % 4 == 0 { 1 } else { -1 }).collect();
        let w = BoundaryWindow::new(left, right, 0.25).unwrap();
        let boundaries = [BoundaryCondition::Free, BoundaryCondition::PlusOnes, BoundaryCondition::Explicit(w)];
        for lambda_on in [false, true] {
            let c = ProfileContext::new(1.7, CouplingSpec::new(2, 1.0).unwrap(), 4, lambda_on).unwrap();
            for b in &boundaries {
                for a in 0..=4 {
                    for d in 0..=4 {
                        let m = MagProfile::new(4, 0, vec![a as f64 / 2.0 - 1.0, d as f64 / 2.0 - 1.0]).unwrap();
                        let gap = identity_gap(&c, &m, b);
                        assert!(gap.abs() < 1e-9, "{lambda_on} {b:?} {:?}: {gap}", m.values);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_profiles() {
        let c = ProfileContext::new(2.0, CouplingSpec::new(2, 1.0).unwrap(), 4, true).unwrap();
        let big = MagProfile::new(4, 0, vec![0.0; 6]).unwrap();
        assert!(matches!(eval_g(&c, &big, &BoundaryCondition::Free), Err(KacError::TooLarge { .. })));
        let off = MagProfile::real(4, 0, vec![0.3]);
        assert!(matches!(eval_g(&c, &off, &BoundaryCondition::Free), Err(KacError::Unrealizable)));
    }

    #[test]
    fn buckets_partition_z() {
        let c = ProfileContext::new(3.0, CouplingSpec::new(4, 5.0).unwrap(), 1, true).unwrap();
        let scales = Scales::new(1, 2, 6, 4).unwrap();
        let mb = solve_m_beta(3.0);
        let t = hat_h_enumerate(&c, &scales, 0, 12, &BoundaryCondition::PlusOnes, mb * mb / 4.0, 10.0).unwrap();
        assert_eq!(t.buckets.iter().map(|b| b.configurations).sum::<usize>(), 1 << 12);
        let mut direct = f64::NEG_INFINITY;
        for idx in 0..1usize << 12 {
            let sigma = SpinConfig::new(0, config_of(idx, 12), BoundaryCondition::PlusOnes).unwrap();
            direct = log_add(direct, -3.0 * hamiltonian(&c.coupling, &sigma).unwrap());
        }
        assert!((direct - t.log_z).abs() < 1e-9 * direct.abs());
        let lz = t.log_bucket_sum(c.gamma(), c.beta);
        assert!(((lz - t.log_z) / t.log_z).abs() < 1e-12);
        let empty = t.empty_bucket().unwrap();
        for b in &t.buckets {
            assert!(b.elements.is_empty() || b.hat_h > empty.hat_h, "{:?}", b.elements);
        }
    }
}
