//! Euler–Lagrange profiles of `F⁰`: `φ_Δ`, the kink cost `J̃`, and exponential-decay fits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::functional::{eval_f_real, BoundaryProfile, ProfileContext};
use crate::error::{KacError, Result};
use crate::meanfield::solve_m_beta;

const GS_TOL: f64 = 1e-7;
const POLISH_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 500;
const ACCEPT_TOL: f64 = 1e-11;
const LM_DAMPING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiResult {
    pub profile: Vec<f64>,
    /// `sup_x |m(x) − tanh(β·(J⁰ block average of m around x))|`.
    pub residual: f64,
    pub sweeps: usize,
}

/// Short-range stationarity data: `atanh(m)/β − (1−a)m = ℓ₀γ Σ_{0<|x−y|≤(2γ)⁻¹} m(y)`.
struct El<'a> {
    beta: f64,
    /// `1 − a`, `a = 2Kℓ₀γ`.
    c: f64,
    w: f64,
    band: usize,
    bdry: &'a BoundaryProfile,
}

impl<'a> El<'a> {
    fn new(ctx: &ProfileContext, bdry: &'a BoundaryProfile) -> Self {
        let band = ctx.band();
        let w = ctx.ell0 as f64 * ctx.gamma();
        Self { beta: ctx.beta, c: 1.0 - 2.0 * band as f64 * w, w, band, bdry }
    }

    fn neighbor_sum(&self, m: &[f64], p: usize) -> f64 {
        let n = m.len() as i64;
        let mut s = 0.0;
        for q in p as i64 - self.band as i64..=p as i64 + self.band as i64 {
            if q == p as i64 {
                continue;
            }
            s += if q < 0 {
                self.bdry.value(true, (-q) as usize)
            } else if q >= n {
                self.bdry.value(false, (q - n + 1) as usize)
            } else {
                m[q as usize]
            };
        }
        self.w * s
    }

    fn g(&self, x: f64) -> f64 {
        x.atanh() / self.beta - self.c * x
    }

    fn g_prime(&self, x: f64) -> f64 {
        1.0 / (self.beta * (1.0 - x * x)) - self.c
    }

    fn sup_residual(&self, m: &[f64], free: &Range<usize>) -> f64 {
        free.clone().map(|p| self.residual(m, p).abs()).fold(0.0, f64::max)
    }

    fn residual(&self, m: &[f64], p: usize) -> f64 {
        self.g(m[p]) - self.neighbor_sum(m, p)
    }

    fn tanh_residual(&self, m: &[f64], p: usize) -> f64 {
        (m[p] - (self.beta * (self.c * m[p] + self.neighbor_sum(m, p))).tanh()).abs()
    }

    /// Root of `g(x) = rhs` in the basin of descent from `x0`.
    fn coordinate_min(&self, x0: f64, rhs: f64) -> f64 {
        let h = |x: f64| self.g(x) - rhs;
        let lim = 1.0 - 1e-15;
        if self.beta * self.c <= 1.0 {
            return bisect(h, -lim, lim);
        }
        let mc = (1.0 - 1.0 / (self.beta * self.c)).sqrt();
        // h increases on (−1, −mc], decreases on [−mc, mc], increases on [mc, 1)
        let lo = if h(-mc) > 0.0 { Some(bisect(h, -lim, -mc)) } else { None };
        let hi = if h(mc) < 0.0 { Some(bisect(h, mc, lim)) } else { None };
        match (lo, hi) {
            (Some(a), Some(b)) => {
                let mid = bisect(|x| -h(x), -mc, mc);
                if x0 < mid {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("h is continuous from −∞ to +∞"),
        }
    }
}

fn bisect(h: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ha = h(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (h(mid) > 0.0) == (ha > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Relaxes the blocks in `free` of a profile on `Λ` to a stationary point of `F⁰`,
/// everything else (inside and outside `Λ`) held fixed. Damped Newton on the banded
/// Jacobian from the given profile; if that stalls, coordinate minimization sweeps
/// from the same start and Newton again.
pub fn relax(ctx: &ProfileContext, m: &mut [f64], free: Range<usize>, bdry: &BoundaryProfile) -> Result<PhiResult> {
    let el = El::new(ctx, bdry);
    let start = m[free.clone()].to_vec();
    let mut sweeps = 0;
    let mut res = newton(&el, m, &free, 60);
    if !(res <= ACCEPT_TOL) {
        m[free.clone()].copy_from_slice(&start);
        let mut forward = true;
        while sweeps < MAX_SWEEPS && el.sup_residual(m, &free) > GS_TOL {
            let order: Vec<usize> = if forward { free.clone().collect() } else { free.clone().rev().collect() };
            for p in order {
                let rhs = el.neighbor_sum(m, p);
                m[p] = el.coordinate_min(m[p], rhs);
            }
            forward = !forward;
            sweeps += 1;
        }
        res = newton(&el, m, &free, 400);
    }
    if !(res <= ACCEPT_TOL) {
        return Err(KacError::NoConvergence(format!("φ residual {res:.3e} after {sweeps} sweeps")));
    }
    let residual = free.clone().map(|p| el.tanh_residual(m, p)).fold(0.0, f64::max);
    Ok(PhiResult { profile: m.to_vec(), residual, sweeps })
}

/// Levenberg–Marquardt-damped Newton with a line search on `‖r‖₂`; returns the final sup residual.
fn newton(el: &El, m: &mut [f64], free: &Range<usize>, iters: usize) -> f64 {
    let l2 = |m: &[f64]| free.clone().map(|p| el.residual(m, p).powi(2)).sum::<f64>();
    let mut mu = LM_DAMPING;
    for _ in 0..iters {
        let r: Vec<f64> = free.clone().map(|p| el.residual(m, p)).collect();
        if r.iter().all(|x| x.abs() < POLISH_TOL) {
            break;
        }
        let diag: Vec<f64> = free.clone().map(|p| el.g_prime(m[p]) + mu).collect();
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let Some(step) = banded_solve(&diag, -el.w, el.band, &rhs) else {
            mu *= 100.0;
            continue;
        };
        let old: Vec<f64> = m[free.clone()].to_vec();
        let l2_0: f64 = r.iter().map(|x| x * x).sum();
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            for (k, p) in free.clone().enumerate() {
                m[p] = (old[k] + t * step[k]).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
            }
            if l2(m) < (1.0 - 1e-4 * t) * l2_0 {
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if improved {
            mu = (mu / 10.0).max(LM_DAMPING);
        } else {
            m[free.clone()].copy_from_slice(&old);
            mu *= 100.0;
            if mu > 1e6 {
                break;
            }
        }
    }
    el.sup_residual(m, free)
}

/// Solves `A x = b` for symmetric banded `A` with the given diagonal and a constant
/// off-diagonal `off` on every band `1..=band` (Gaussian elimination, no pivoting).
/// Returns `None` on a vanishing pivot.
fn banded_solve(diag: &[f64], off: f64, band: usize, b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let w = 2 * band + 1;
    let mut a = vec![0.0; n * w];
    let idx = |i: usize, j: usize| i * w + (j + band - i);
    for i in 0..n {
        a[idx(i, i)] = diag[i];
        for j in i.saturating_sub(band)..(i + band + 1).min(n) {
            if j != i {
                a[idx(i, j)] = off;
            }
        }
    }
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = a[idx(k, k)];
        if piv.abs() < 1e-12 * diag[k].abs().max(1.0) {
            return None;
        }
        for i in k + 1..(k + band + 1).min(n) {
            let f = a[idx(i, k)] / piv;
            if f == 0.0 {
                continue;
            }
            for j in k..(k + band + 1).min(n) {
                a[idx(i, j)] -= f * a[idx(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..(k + band + 1).min(n) {
            s -= a[idx(k, j)] * x[j];
        }
        x[k] = s / a[idx(k, k)];
    }
    Some(x)
}

/// `φ_Δ(·; m̄)` on `n` blocks for `F⁰`, started from `init` (default: `m_β`).
pub fn phi_profile(ctx: &ProfileContext, n: usize, bdry: &BoundaryProfile, init: Option<&[f64]>) -> Result<PhiResult> {
    if ctx.beta <= 1.0 {
        return Err(KacError::Domain(format!("φ needs β > 1, got {}", ctx.beta)));
    }
    let ctx = ctx.short_range();
    let mut m = match init {
        Some(v) if v.len() == n => v.to_vec(),
        Some(_) => return Err(KacError::Domain("initial profile has the wrong length".into())),
        None => vec![solve_m_beta(ctx.beta); n],
    };
    relax(&ctx, &mut m, 0..n, bdry)
}

/// One point of the `J̃` convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JTildePoint {
    pub blocks: usize,
    pub value: f64,
}

/// `F⁰_Λ(φ | −m_β, +m_β) − F⁰_Λ(m_β | m_β)` on `n` blocks, kink seeded `offset` blocks off
/// centre. The offset is rounded to a half block so the seed is centred on a bond or a block.
pub fn kink_cost(ctx: &ProfileContext, n: usize, offset: f64) -> Result<f64> {
    let offset = (2.0 * offset).round() / 2.0;
    let m_beta = solve_m_beta(ctx.beta);
    if m_beta == 0.0 {
        return Ok(0.0);
    }
    let ctx = ctx.short_range();
    let width = 1.0 / (ctx.delta0() * 2.0);
    let init: Vec<f64> =
        (0..n).map(|p| m_beta * ((p as f64 + 0.5 - n as f64 / 2.0 - offset) / width).tanh()).collect();
    let bdry = BoundaryProfile::sides(-m_beta, m_beta);
    let phi = phi_profile(&ctx, n, &bdry, Some(&init))?;
    let flat = eval_f_real(&ctx, &vec![m_beta; n], &BoundaryProfile::constant(m_beta));
    Ok(eval_f_real(&ctx, &phi.profile, &bdry) - flat)
}

/// `J̃` on `n0, 2n0, 4n0, …` blocks (`levels` sizes), the lower of the bond- and block-centred kinks.
pub fn j_tilde(ctx: &ProfileContext, n0: usize, levels: usize) -> Result<Vec<JTildePoint>> {
    (0..levels)
        .map(|k| {
            let n = n0 << k;
            let value = kink_cost(ctx, n, 0.0)?.min(kink_cost(ctx, n, 0.5)?);
            Ok(JTildePoint { blocks: n, value })
        })
        .collect()
}

/// Blocks covering `40/γ` sites, the start of the `J̃` doubling sequence.
pub fn j_tilde_base_blocks(ctx: &ProfileContext) -> usize {
    (40.0 / ctx.gamma() / ctx.ell0 as f64).ceil() as usize
}

/// Converged `J̃`: the last value of a three-level doubling sequence.
pub fn j_tilde_value(ctx: &ProfileContext) -> Result<f64> {
    if ctx.beta <= 1.0 {
        return Ok(0.0);
    }
    let seq = j_tilde(ctx, j_tilde_base_blocks(ctx), 3)?;
    Ok(seq.last().expect("three levels").value)
}

/// Least-squares line `y = a + b x` and its `R²`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Fit of `ln|φ(x) − m_β|` against the block distance to the left edge, over the
/// blocks in `range` whose deviation is above `floor`.
pub fn decay_fit(profile: &[f64], m_beta: f64, range: Range<usize>, floor: f64) -> (f64, f64, f64) {
    let pts: Vec<(f64, f64)> = range
        .filter_map(|p| {
            let d = (profile[p] - m_beta).abs();
            (d > floor).then(|| ((p + 1) as f64, d.ln()))
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&xs, &ys)
}
