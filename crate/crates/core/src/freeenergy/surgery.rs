//! Profile surgeries `m̃` and `m*` around a rectangle or a triangle with its two rectangles.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::functional::{grid_value, BoundaryProfile, ProfileContext};
use super::profile::relax;
use crate::coarse::MagProfile;
use crate::error::{KacError, Result};
use crate::geometry::{Element, ElementKind};
use crate::meanfield::solve_m_beta;

const COLLAR_ROUNDS: usize = 50;
const COLLAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurgeryTarget {
    Rectangle(Element),
    Triangle { triangle: Element, left: Element, right: Element },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surgery {
    pub tilde: MagProfile,
    pub star: MagProfile,
    /// Blocks of `B(Q)` (offsets into the profile).
    pub collar: Vec<usize>,
    /// Real-valued `φ` on the collar blocks, before projection.
    pub phi: Vec<f64>,
    /// Blocks forced to `s(m_β)_γ` in `m*`.
    pub core: Vec<usize>,
    pub sign: i8,
}

/// Collar `{x ∈ Q : d(x, Qᶜ) < ℓ₊}` and core `{x ∈ Q : d(x, Qᶜ) > ℓ₊/3}` of a
/// rectangle, as block ranges; distances are measured from the block's sites.
fn collar_and_core(q: &Element, origin: i64, ell0: i64, ellp: i64) -> (Vec<Range<usize>>, Vec<usize>) {
    let first = ((q.start - origin) / ell0) as usize;
    let last = ((q.end - origin) / ell0) as usize;
    let mut collar = Vec::new();
    let mut core = Vec::new();
    for p in first..last {
        let x = origin + p as i64 * ell0;
        let d = (x - q.start + 1).min(q.end - x - ell0 + 1);
        if d < ellp {
            collar.push(p);
        }
        if 3 * d > ellp {
            core.push(p);
        }
    }
    let mut ranges: Vec<Range<usize>> = Vec::new();
    for p in collar {
        match ranges.last_mut() {
            Some(r) if r.end == p => r.end = p + 1,
            _ => ranges.push(p..p + 1),
        }
    }
    (ranges, core)
}

/// Relaxes the collar ranges jointly (block Gauss–Seidel over the ranges).
fn relax_collars(ctx: &ProfileContext, m: &mut [f64], ranges: &[Range<usize>], bdry: &BoundaryProfile) -> Result<()> {
    let ctx = ctx.short_range();
    for _ in 0..COLLAR_ROUNDS {
        let before = m.to_vec();
        for r in ranges {
            relax(&ctx, m, r.clone(), bdry)?;
        }
        if m.iter().zip(&before).all(|(a, b)| (a - b).abs() < COLLAR_TOL) {
            return Ok(());
        }
    }
    Err(KacError::NoConvergence("collar relaxation".into()))
}

fn check_rectangle(q: &Element, origin: i64, end: i64, ell0: i64) -> Result<()> {
    if q.kind != ElementKind::Rectangle {
        return Err(KacError::Shape(format!("{q:?} is not a rectangle")));
    }
    if q.start < origin || q.end > end || (q.start - origin) % ell0 != 0 || (q.end - origin) % ell0 != 0 {
        return Err(KacError::Shape(format!("{q:?} is not an ℓ₀-measurable subset of Λ")));
    }
    Ok(())
}

fn neighbor_value(m: &[f64], bdry: &BoundaryProfile, p: i64) -> f64 {
    if p < 0 {
        bdry.value(true, (-p) as usize)
    } else if p as usize >= m.len() {
        bdry.value(false, p as usize - m.len() + 1)
    } else {
        m[p as usize]
    }
}

/// `m̃` and `m*` for a profile `m` on `Λ` with outside values `bdry`.
///
/// Rectangle `Q`: `m̃` replaces `m` on `B(Q)` by `(φ_{B(Q)}(·; m))_γ`; `m*` further sets
/// `s(m_β)_γ` on `Q̂`, `s` the common sign of the blocks next to `Q`.
/// Triangle `T` with rectangles `Q_l, Q_r`: `m̃` as before on `B(Q_l) ∪ B(Q_r)`; `m*` is
/// `−m` on `T`, `m̃` on the collars and `(s m_β)_γ` on the rest of `Q_u`, `s` the sign of `T`.
pub fn surgery_profiles(
    ctx: &ProfileContext,
    m: &MagProfile,
    bdry: &BoundaryProfile,
    ellp: u64,
    target: SurgeryTarget,
) -> Result<Surgery> {
    if ctx.beta <= 1.0 {
        return Err(KacError::Domain(format!("φ needs β > 1, got {}", ctx.beta)));
    }
    if m.level as u64 != ctx.ell0 {
        return Err(KacError::Domain(format!("profile level {} != ℓ₀ = {}", m.level, ctx.ell0)));
    }
    let ell0 = ctx.ell0 as i64;
    let origin = m.origin;
    let end = origin + m.len() as i64 * ell0;
    let mb = grid_value(solve_m_beta(ctx.beta), ctx.ell0);
    let rects: Vec<Element> = match target {
        SurgeryTarget::Rectangle(q) => vec![q],
        SurgeryTarget::Triangle { triangle, left, right } => {
            if triangle.kind != ElementKind::Triangle {
                return Err(KacError::Shape(format!("{triangle:?} is not a triangle")));
            }
            if left.end > right.start {
                return Err(KacError::Shape(format!("{left:?} must lie left of {right:?}")));
            }
            if triangle.start < origin || triangle.end > end {
                return Err(KacError::Shape(format!("{triangle:?} leaves Λ")));
            }
            vec![left, right]
        }
    };
    let mut ranges = Vec::new();
    let mut cores = Vec::new();
    for q in &rects {
        check_rectangle(q, origin, end, ell0)?;
        let (r, c) = collar_and_core(q, origin, ell0, ellp as i64);
        ranges.extend(r);
        cores.push(c);
    }
    let mut work = m.values.clone();
    relax_collars(ctx, &mut work, &ranges, bdry)?;
    let collar: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
    let phi: Vec<f64> = collar.iter().map(|&p| work[p]).collect();
    let mut tilde = m.values.clone();
    for &p in &collar {
        tilde[p] = grid_value(work[p], ctx.ell0);
    }
    let mut star = tilde.clone();
    let (sign, core) = match target {
        SurgeryTarget::Rectangle(q) => {
            let first = (q.start - origin) / ell0;
            let last = (q.end - origin) / ell0;
            let l = neighbor_value(&m.values, bdry, first - 1);
            let r = neighbor_value(&m.values, bdry, last);
            if l == 0.0 || r == 0.0 || l.signum() != r.signum() {
                return Err(KacError::Shape(format!("blocks next to {q:?} have no common sign ({l}, {r})")));
            }
            let s = l.signum() as i8;
            for &p in &cores[0] {
                star[p] = s as f64 * mb;
            }
            (s, cores[0].clone())
        }
        SurgeryTarget::Triangle { triangle, .. } => {
            let s = triangle.sign;
            let in_collar = |p: usize| collar.contains(&p);
            let mut core = Vec::new();
            for q in &rects {
                for p in ((q.start - origin) / ell0) as usize..((q.end - origin) / ell0) as usize {
                    if !in_collar(p) {
                        star[p] = s as f64 * mb;
                        core.push(p);
                    }
                }
            }
            for p in ((triangle.start - origin) / ell0) as usize..((triangle.end - origin) / ell0) as usize {
                star[p] = -m.values[p];
            }
            core.retain(|p| !triangle.contains_site(origin + *p as i64 * ell0));
            (s, core)
        }
    };
    Ok(Surgery {
        tilde: MagProfile::real(m.level, origin, tilde),
        star: MagProfile::real(m.level, origin, star),
        collar,
        phi,
        core,
        sign,
    })
}
