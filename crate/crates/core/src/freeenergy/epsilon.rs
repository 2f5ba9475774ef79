//! Rectangle costs `ε_a`, `ε_b`: constrained minima of the free energy of one `ℓ₊`
//! block over the two classes of `η = 0` configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functional::ProfileContext;
use super::profile::linear_fit;
use crate::coarse::Scales;
use crate::error::{KacError, Result};
use crate::meanfield::{f_beta_closed, f_beta_prime, solve_m_beta};

pub const STARTS: usize = 20;
const DESCENT_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 20_000;
const EDGE: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

/// Closed interval `[lo, hi]` for the mean of one `ℓ₋` block.
type Slab = (f64, f64);

/// Local plus interior free energy of one `ℓ₊` block, minus its value at `m_β`.
struct Objective {
    beta: f64,
    delta0: f64,
    coef: f64,
    /// `J(kℓ₀)` for `k = 0..n`.
    jb: Vec<f64>,
    base: f64,
}

impl Objective {
    fn new(ctx: &ProfileContext, n: usize, m_beta: f64) -> Self {
        let jb = (0..n as u64).map(|k| ctx.jb(k)).collect();
        let delta0 = ctx.delta0();
        let coef = ctx.gamma() * (ctx.ell0 * ctx.ell0) as f64;
        Self { beta: ctx.beta, delta0, coef, jb, base: delta0 * n as f64 * f_beta_closed(ctx.beta, m_beta) }
    }

    fn value(&self, m: &[f64]) -> f64 {
        let mut v = self.delta0 * m.iter().map(|&x| f_beta_closed(self.beta, x)).sum::<f64>();
        let mut inter = 0.0;
        for p in 0..m.len() {
            for q in p + 1..m.len() {
                inter += self.jb[q - p] * (m[p] - m[q]).powi(2);
            }
        }
        v += self.coef / 2.0 * inter;
        v - self.base
    }

    fn gradient(&self, m: &[f64]) -> Vec<f64> {
        (0..m.len())
            .map(|p| {
                let x = m[p].clamp(-1.0 + EDGE, 1.0 - EDGE);
                let mut g = self.delta0 * f_beta_prime(self.beta, x);
                for q in 0..m.len() {
                    if q != p {
                        g += self.coef * self.jb[q.abs_diff(p)] * (m[p] - m[q]);
                    }
                }
                g
            })
            .collect()
    }
}

/// Euclidean projection of `v` (one `ℓ₋` block) onto `[−1,1]^k ∩ {lo ≤ mean ≤ hi}`.
fn project_block(v: &mut [f64], (lo, hi): Slab) {
    let clip = |v: &[f64], t: f64| v.iter().map(|x| (x + t).clamp(-1.0 + EDGE, 1.0 - EDGE)).collect::<Vec<_>>();
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let c = clip(v, 0.0);
    let target = if mean(&c) < lo {
        lo
    } else if mean(&c) > hi {
        hi
    } else {
        v.copy_from_slice(&c);
        return;
    };
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bottom = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut a, mut b) = (-2.0 - top, 2.0 - bottom);
    for _ in 0..200 {
        let t = 0.5 * (a + b);
        if mean(&clip(v, t)) < target {
            a = t;
        } else {
            b = t;
        }
    }
    let out = clip(v, 0.5 * (a + b));
    v.copy_from_slice(&out);
}

fn project(m: &mut [f64], per: usize, slabs: &[Slab]) {
    for (chunk, &s) in m.chunks_mut(per).zip(slabs) {
        project_block(chunk, s);
    }
}

fn feasible(m: &[f64], per: usize, slabs: &[Slab]) -> bool {
    m.iter().all(|x| x.abs() <= 1.0)
        && m.chunks(per).zip(slabs).all(|(c, &(lo, hi))| {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            mean >= lo - FEAS_TOL && mean <= hi + FEAS_TOL
        })
}

/// Spectral projected gradient from one start.
fn descend(obj: &Objective, mut m: Vec<f64>, per: usize, slabs: &[Slab]) -> (f64, Vec<f64>) {
    project(&mut m, per, slabs);
    let mut f = obj.value(&m);
    let mut g = obj.gradient(&m);
    let mut step = 1.0;
    for _ in 0..MAX_ITERS {
        let mut trial: Vec<f64> = m.iter().zip(&g).map(|(x, d)| x - step * d).collect();
        project(&mut trial, per, slabs);
        let dir: Vec<f64> = trial.iter().zip(&m).map(|(a, b)| a - b).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(d, gg)| d * gg).sum();
        if dir.iter().all(|d| d.abs() < DESCENT_TOL * 1e-4) {
            break;
        }
        let mut t = 1.0;
        let mut next = trial;
        let mut fn_ = obj.value(&next);
        while fn_ > f + 1e-4 * t * slope && t > 1e-12 {
            t *= 0.5;
            next = m.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            fn_ = obj.value(&next);
        }
        if fn_ > f {
            break;
        }
        let gn = obj.gradient(&next);
        let s: Vec<f64> = next.iter().zip(&m).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e3) } else { 1.0 };
        let done = (f - fn_).abs() < DESCENT_TOL * 1e-6 && s.iter().all(|d| d.abs() < DESCENT_TOL);
        m = next;
        f = fn_;
        g = gn;
        if done {
            break;
        }
    }
    (f, m)
}

/// Minimum over starts, ties by start index.
fn multistart(obj: &Objective, n: usize, per: usize, slabs: &[Slab], seed: u64) -> (f64, Vec<f64>) {
    let results: Vec<(f64, Vec<f64>)> = (0..STARTS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let init: Vec<f64> = if k == 0 {
                slabs.iter().flat_map(|&(lo, hi)| std::iter::repeat(0.5 * (lo + hi)).take(per)).collect()
            } else {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            descend(obj, init, per, slabs)
        })
        .collect();
    results.into_iter().fold((f64::INFINITY, Vec::new()), |best, r| if r.0 < best.0 { r } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub eps_a: f64,
    pub eps_b: f64,
    /// Minimizing `ℓ₀` profiles of the `ℓ₊` block.
    pub argmin_a: Vec<f64>,
    pub argmin_b: Vec<f64>,
}

/// Constrained minima of `F_{C⁺}(m|m) − F_{C⁺}(m_β|m_β)` (local and interior terms of
/// one `ℓ₊` block) over real `ℓ₀` profiles:
/// `ε_a`: some `ℓ₋` block has `||m^{ℓ₋}| − m_β| ≥ ψ`;
/// `ε_b`: every `ℓ₋` block has `||m^{ℓ₋}| − m_β| ≤ ψ` with both signs present.
pub fn epsilon_ab(ctx: &ProfileContext, scales: &Scales, psi: f64, seed: u64) -> Result<EpsilonResult> {
    if ctx.beta <= 1.0 {
        return Err(KacError::Domain(format!("ε needs β > 1, got {}", ctx.beta)));
    }
    if scales.ell0 != ctx.ell0 {
        return Err(KacError::Domain("scales and context disagree on ℓ₀".into()));
    }
    let mb = solve_m_beta(ctx.beta);
    if !(psi > 0.0 && psi < mb) {
        return Err(KacError::Domain(format!("ψ = {psi} outside (0, m_β)")));
    }
    let n = (scales.ellp / scales.ell0) as usize;
    let per = (scales.ellm / scales.ell0) as usize;
    let nm = n / per;
    let obj = Objective::new(ctx, n, mb);
    let free = (-1.0, 1.0);

    let mut best_a = (f64::INFINITY, Vec::new());
    for z in 0..nm {
        let mut pieces = vec![(-mb + psi, mb - psi)];
        if mb + psi < 1.0 {
            pieces.push((mb + psi, 1.0));
        }
        for piece in pieces {
            let mut slabs = vec![free; nm];
            slabs[z] = piece;
            let r = multistart(&obj, n, per, &slabs, seed ^ (z as u64) << 8);
            if !feasible(&r.1, per, &slabs) {
                return Err(KacError::Infeasible(format!("ε_a optimum leaves the class (block {z})")));
            }
            if r.0 < best_a.0 {
                best_a = r;
            }
        }
    }

    let mut best_b = (f64::INFINITY, Vec::new());
    for pattern in 0..1usize << (nm - 1) {
        if pattern == 0 {
            continue;
        }
        let slabs: Vec<Slab> = (0..nm)
            .map(|z| {
                let s = if z > 0 && pattern >> (z - 1) & 1 == 1 { -1.0 } else { 1.0 };
                ((s * mb - psi).max(-1.0), (s * mb + psi).min(1.0))
            })
            .collect();
        let r = multistart(&obj, n, per, &slabs, seed ^ (pattern as u64) << 24);
        if !feasible(&r.1, per, &slabs) {
            return Err(KacError::Infeasible(format!("ε_b optimum leaves the class (pattern {pattern:b})")));
        }
        if r.0 < best_b.0 {
            best_b = r;
        }
    }
    Ok(EpsilonResult { eps_a: best_a.0, eps_b: best_b.0, argmin_a: best_a.1, argmin_b: best_b.1 })
}

/// Objective of a given `ℓ₀` profile of one `ℓ₊` block (the quantity `ε_a`, `ε_b` minimize).
pub fn block_cost(ctx: &ProfileContext, m: &[f64]) -> f64 {
    Objective::new(ctx, m.len(), solve_m_beta(ctx.beta)).value(m)
}

/// `(exponent, prefactor, R²)` of the fit `ε_a ≈ c ψ^k` over the given `ψ` values.
pub fn epsilon_a_scaling(ctx: &ProfileContext, scales: &Scales, psis: &[f64], seed: u64) -> Result<(f64, f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &psi in psis {
        let e = epsilon_ab(ctx, scales, psi, seed)?.eps_a;
        if !(e > 0.0) {
            return Err(KacError::Domain(format!("ε_a = {e} at ψ = {psi} is not positive")));
        }
        xs.push(psi.ln());
        ys.push(e.ln());
    }
    let (a, b, r2) = linear_fit(&xs, &ys);
    Ok((b, a.exp(), r2))
}
