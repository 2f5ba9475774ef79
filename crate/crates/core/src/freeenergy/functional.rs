//! The coarse-grained functional `F_Λ(m|m̄)`, its short-range version `F⁰`, and `F_{A,B}`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::coarse::{on_grid, MagProfile};
use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};
use crate::lattice::BoundaryCondition;
use crate::meanfield::f_beta_closed;

/// Parameters shared by every functional evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileContext {
    pub beta: f64,
    pub coupling: CouplingSpec,
    pub ell0: u64,
    /// `false` evaluates `F⁰` (the `1/r²` tail switched off).
    pub lambda_on: bool,
}

impl ProfileContext {
    pub fn new(beta: f64, coupling: CouplingSpec, ell0: u64, lambda_on: bool) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(KacError::Domain(format!("β = {beta} must be positive")));
        }
        if ell0 == 0 {
            return Err(KacError::InvalidScales("ℓ₀ must be positive".into()));
        }
        Ok(Self { beta, coupling, ell0, lambda_on })
    }

    pub fn short_range(&self) -> Self {
        Self { lambda_on: false, ..*self }
    }

    /// Coupling actually used by the functional.
    pub fn j(&self) -> CouplingSpec {
        if self.lambda_on {
            self.coupling
        } else {
            self.coupling.without_tail()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.coupling.gamma()
    }

    pub fn delta0(&self) -> f64 {
        self.ell0 as f64 * self.gamma()
    }

    /// `J(kℓ₀)` for a block separation `k ≥ 0`.
    pub fn jb(&self, k: u64) -> f64 {
        self.j().j(k * self.ell0)
    }

    /// `Σ_{k ≥ k0} J(kℓ₀)`.
    pub fn jb_tail(&self, k0: u64) -> f64 {
        self.j().lattice_tail_from(k0, self.ell0)
    }

    /// `‖J‖₀ = ℓ₀ Σ_{i∈ℤ} J(iℓ₀)`.
    pub fn norm_j0(&self) -> f64 {
        self.ell0 as f64 * (self.gamma() + 2.0 * self.jb_tail(1))
    }

    /// Largest block separation inside the short-range window.
    pub fn band(&self) -> usize {
        (self.coupling.half_range() / self.ell0) as usize
    }
}

/// `m̄` on the `ℓ₀` blocks outside `Λ`: explicit values nearest first, then a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub far_left: f64,
    pub far_right: f64,
}

impl BoundaryProfile {
    pub fn constant(v: f64) -> Self {
        Self { left: Vec::new(), right: Vec::new(), far_left: v, far_right: v }
    }

    pub fn sides(left: f64, right: f64) -> Self {
        Self { left: Vec::new(), right: Vec::new(), far_left: left, far_right: right }
    }

    /// `m^{ℓ₀}(·; σ̄)` of a boundary condition; a window that does not fill its last
    /// block is completed with the far-field mean.
    pub fn from_condition(boundary: &BoundaryCondition, ell0: u64) -> Self {
        match boundary {
            BoundaryCondition::PlusOnes => Self::constant(1.0),
            BoundaryCondition::MinusOnes => Self::constant(-1.0),
            BoundaryCondition::Free => Self::constant(0.0),
            BoundaryCondition::Explicit(w) | BoundaryCondition::Sampled { window: w, .. } => {
                let blocks = |side: &[i8]| -> Vec<f64> {
                    side.chunks(ell0 as usize)
                        .map(|c| {
                            let s: f64 = c.iter().map(|&x| x as f64).sum();
                            (s + w.far * (ell0 as usize - c.len()) as f64) / ell0 as f64
                        })
                        .collect()
                };
                Self { left: blocks(&w.left), right: blocks(&w.right), far_left: w.far, far_right: w.far }
            }
        }
    }

    /// `m̄` on the `k`-th block (`k ≥ 1`) beyond the given edge.
    pub fn value(&self, left: bool, k: usize) -> f64 {
        let (v, far) = if left { (&self.left, self.far_left) } else { (&self.right, self.far_right) };
        v.get(k - 1).copied().unwrap_or(far)
    }

    /// `Σ_{k ≥ 1} J((d+k)ℓ₀) g(m̄_k)` on one side, `d` blocks from the edge.
    pub fn side_sum(&self, ctx: &ProfileContext, left: bool, d: u64, g: impl Fn(f64) -> f64) -> f64 {
        let (v, far) = if left { (&self.left, self.far_left) } else { (&self.right, self.far_right) };
        let mut acc = 0.0;
        for (k, &x) in v.iter().enumerate() {
            acc += ctx.jb(d + k as u64 + 1) * g(x);
        }
        let gf = g(far);
        if gf != 0.0 {
            acc += gf * ctx.jb_tail(d + v.len() as u64 + 1);
        }
        acc
    }

    /// `Σ_{y ∉ Λ} J(|x−y|) g(m̄(y))` for block `p` of an `n`-block domain.
    pub fn outside_sum(&self, ctx: &ProfileContext, n: usize, p: usize, g: impl Fn(f64) -> f64 + Copy) -> f64 {
        self.side_sum(ctx, true, p as u64, g) + self.side_sum(ctx, false, (n - 1 - p) as u64, g)
    }

    pub fn negated(&self) -> Self {
        Self {
            left: self.left.iter().map(|v| -v).collect(),
            right: self.right.iter().map(|v| -v).collect(),
            far_left: -self.far_left,
            far_right: -self.far_right,
        }
    }
}

/// The four terms of `F_Λ(m|m̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTerms {
    pub local: f64,
    pub interior: f64,
    pub boundary: f64,
    pub boundary_sq: f64,
}

impl FTerms {
    pub fn total(&self) -> f64 {
        self.local + self.interior + self.boundary + self.boundary_sq
    }
}

/// `F` on a grid profile.
pub fn eval_f(ctx: &ProfileContext, m: &MagProfile, bdry: &BoundaryProfile) -> Result<f64> {
    check_level(ctx, m)?;
    if let Some(&v) = m.values.iter().find(|&&v| !on_grid(v, m.level)) {
        return Err(KacError::OffGrid { value: v, level: m.level });
    }
    Ok(f_terms(ctx, &m.values, bdry).total())
}

/// `F` on real-valued profiles in `[-1, 1]`.
pub fn eval_f_real(ctx: &ProfileContext, m: &[f64], bdry: &BoundaryProfile) -> f64 {
    f_terms(ctx, m, bdry).total()
}

pub fn f_terms(ctx: &ProfileContext, m: &[f64], bdry: &BoundaryProfile) -> FTerms {
    let n = m.len();
    let g = ctx.gamma();
    let l0 = ctx.ell0 as f64;
    let coef = g * l0 * l0; // δ₀²/γ
    let local = ctx.delta0() * m.iter().map(|&v| f_beta_closed(ctx.beta, v)).sum::<f64>();
    let reach = if ctx.lambda_on { n } else { ctx.band() + 1 };
    let mut interior = 0.0;
    for p in 0..n {
        for q in p + 1..n.min(p + reach) {
            let d = m[p] - m[q];
            interior += ctx.jb((q - p) as u64) * d * d;
        }
    }
    let mut boundary = 0.0;
    let mut boundary_sq = 0.0;
    for (p, &v) in m.iter().enumerate() {
        boundary += bdry.outside_sum(ctx, n, p, |b| (v - b) * (v - b));
        boundary_sq += bdry.outside_sum(ctx, n, p, |b| b * b);
    }
    FTerms { local, interior: coef / 2.0 * interior, boundary: coef / 2.0 * boundary, boundary_sq: coef / 2.0 * boundary_sq }
}

/// `F_{A,B}(m)` for disjoint block ranges of `m`.
pub fn eval_f_ab(ctx: &ProfileContext, m: &MagProfile, a: Range<usize>, b: Range<usize>) -> Result<f64> {
    check_level(ctx, m)?;
    if a.end > m.len() || b.end > m.len() {
        return Err(KacError::Domain("block range outside the profile".into()));
    }
    if a.start < b.end && b.start < a.end {
        return Err(KacError::Domain(format!("A = {a:?} and B = {b:?} overlap")));
    }
    let v = &m.values;
    let local = ctx.delta0() * v[a.clone()].iter().map(|&x| f_beta_closed(ctx.beta, x)).sum::<f64>();
    let mut cross = 0.0;
    for x in a {
        for y in b.clone() {
            let d = v[x] - v[y];
            cross += ctx.jb(x.abs_diff(y) as u64) * d * d;
        }
    }
    let l0 = ctx.ell0 as f64;
    Ok(local + ctx.gamma() * l0 * l0 / 2.0 * cross)
}

fn check_level(ctx: &ProfileContext, m: &MagProfile) -> Result<()> {
    if m.level as u64 != ctx.ell0 {
        return Err(KacError::Domain(format!("profile level {} != ℓ₀ = {}", m.level, ctx.ell0)));
    }
    Ok(())
}

/// Nearest point of the `ℓ₀` grid, `(m)_γ`.
pub fn grid_value(v: f64, ell0: u64) -> f64 {
    let l = ell0 as f64;
    let k = ((v + 1.0) * l / 2.0).round().clamp(0.0, l);
    2.0 * k / l - 1.0
}

pub fn grid_project(m: &MagProfile) -> MagProfile {
    let level = m.level as u64;
    MagProfile { level: m.level, origin: m.origin, values: m.values.iter().map(|&v| grid_value(v, level)).collect() }
}
