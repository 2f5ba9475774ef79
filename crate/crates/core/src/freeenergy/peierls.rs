//! Peierls weights of contours and the constants that enter them.

use serde::{Deserialize, Serialize};

use crate::coarse::Scales;
use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};
use crate::geometry::{Contour, Element, ElementKind};
use crate::meanfield::solve_m_beta;

pub const DEFAULT_RHO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeierlsParams {
    pub varpi: f64,
    pub psi: f64,
    /// `(1 − 10/(ϖm_β²))(1 − ψ/m_β)²`.
    pub a_beta: f64,
    /// `2λβm_β² a_β`.
    pub b_beta: f64,
    /// Smallest per-element constant in the single-element bound (see [`PeierlsParams::new`]).
    pub c_gamma: f64,
    pub b_bar: f64,
    pub rho: f64,
    /// `min(ε_a, ε_b)/δ₋`.
    pub epsilon: f64,
    pub j_tilde: f64,
    pub beta: f64,
    pub m_beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub ellp: u64,
    pub ellm: u64,
}

impl PeierlsParams {
    /// `eps_min = min(ε_a, ε_b)` and `J̃` come from their numeric evaluations.
    ///
    /// `c(γ)` is the least constant `c` such that every element's factor in the
    /// product bound is at most `e^{−b_β ln(|S|γ) − c}`: `(β/γ)(J̃ − 5λ̃ ln 5)` for
    /// triangles, `min_n [n(βεℓ₋/7 − ln 3) − b_β ln(nℓ₊γ)]` over rectangles of `n ≥ 2` blocks.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta: f64,
        coupling: &CouplingSpec,
        scales: &Scales,
        psi: f64,
        varpi: f64,
        eps_min: f64,
        j_tilde: f64,
        b_bar: f64,
        rho: f64,
    ) -> Result<Self> {
        let m_beta = solve_m_beta(beta);
        if m_beta == 0.0 {
            return Err(KacError::Domain(format!("no phase coexistence at β = {beta}")));
        }
        let a_beta = (1.0 - 10.0 / (varpi * m_beta * m_beta)) * (1.0 - psi / m_beta).powi(2);
        if !(a_beta > 0.0 && a_beta < 1.0) {
            return Err(KacError::Domain(format!("a_β = {a_beta} outside (0, 1)")));
        }
        let gamma = coupling.gamma();
        let lambda = coupling.lambda();
        let b_beta = 2.0 * lambda * beta * m_beta * m_beta * a_beta;
        let epsilon = eps_min / scales.deltam();
        let c_t = beta / gamma * (j_tilde - 5.0 * coupling.lambda_tilde() * 5f64.ln());
        let per_block = beta * epsilon * scales.ellm as f64 / 7.0 - 3f64.ln();
        let c_q = (2..=100_000u64)
            .map(|n| n as f64 * per_block - b_beta * (n as f64 * scales.ellp as f64 * gamma).ln())
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            varpi,
            psi,
            a_beta,
            b_beta,
            c_gamma: c_t.min(c_q),
            b_bar,
            rho,
            epsilon,
            j_tilde,
            beta,
            m_beta,
            gamma,
            lambda,
            ellp: scales.ellp,
            ellm: scales.ellm,
        })
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.lambda * self.gamma
    }

    pub fn deltam(&self) -> f64 {
        self.ellm as f64 * self.gamma
    }

    /// `1 − 10/(ϖm_β²)`.
    pub fn damping(&self) -> f64 {
        1.0 - 10.0 / (self.varpi * self.m_beta * self.m_beta)
    }
}

/// Contribution of one element to `W`.
pub fn element_weight(params: &PeierlsParams, s: &Element) -> f64 {
    let len = s.len() as f64;
    match s.kind {
        ElementKind::Rectangle => params.deltam() * params.epsilon / 7.0 * len / params.ellp as f64,
        ElementKind::Triangle => {
            let lt = params.lambda_tilde();
            2.0 * lt * (params.m_beta - params.psi).powi(2) * (len * params.gamma).ln() + params.j_tilde
                - 5.0 * lt * 5f64.ln()
        }
    }
}

/// `W(Γ) = Σ_Q (δ₋ε/7)|Q|/ℓ₊ + Σ_T (2λ̃(m_β−ψ)² ln(|T|γ) + J̃ − 5λ̃ ln 5)`.
pub fn peierls_weight(params: &PeierlsParams, contour: &Contour) -> f64 {
    peierls_weight_elements(params, &contour.elements)
}

pub fn peierls_weight_elements(params: &PeierlsParams, elements: &[Element]) -> f64 {
    elements.iter().map(|s| element_weight(params, s)).sum()
}

/// `W(Γ)(1 − 10/(ϖm_β²))`, the cost of adding `Γ` to other compatible contours.
pub fn peierls_weight_damped(params: &PeierlsParams, contour: &Contour) -> f64 {
    peierls_weight(params, contour) * params.damping()
}

/// `Σ_{m≥1} m⁶ e^{−b(1−ρ)/2 · ln m} < e^c/(2ϖ)`; the series is summed to `10⁴` with
/// an integral bound for the rest. `false` when it diverges.
pub fn entropy_condition(b: f64, c: f64, varpi: f64, rho: f64) -> bool {
    let s = b * (1.0 - rho) / 2.0 - 6.0;
    if s <= 1.0 {
        return false;
    }
    let cut = 10_000u32;
    let head: f64 = (1..=cut).map(|m| (m as f64).powf(-s)).sum();
    let tail = (cut as f64).powf(1.0 - s) / (s - 1.0);
    head + tail < c.exp() / (2.0 * varpi)
}
