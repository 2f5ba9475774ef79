//! Partial sums of the contour entropy series over a finite window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::geometry::{check_compatibility, group_contours, Element, ElementKind};

/// Largest number of size-feasible element sets visited before giving up.
pub const ENUMERATION_BUDGET: f64 = 2e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySum {
    /// `Σ_{Γ∋0, |Γ|=m} Π_S e^{−b ln(|S|γ) − c}` over contours inside the window.
    pub lhs: f64,
    /// `2m e^{−b ln m − (c − ln 2)}`.
    pub rhs: f64,
    pub contours: u64,
}

impl EntropySum {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Clone, Copy)]
struct Cand {
    start: i64,
    len: i64,
    kind: ElementKind,
}

impl Cand {
    fn element(&self, ellp: i64) -> Element {
        let (a, b) = (self.start * ellp, (self.start + self.len) * ellp);
        match self.kind {
            ElementKind::Triangle => Element::triangle(a, b, 1),
            ElementKind::Rectangle => Element::rectangle(a, b),
        }
    }
}

/// Number of candidate subsets with sizes summing to `m`, ignoring compatibility.
fn subset_count(cands: &[Cand], m: usize) -> f64 {
    let mut ways = vec![0.0f64; m + 1];
    ways[0] = 1.0;
    for c in cands {
        let l = c.len as usize;
        for s in (l..=m).rev() {
            ways[s] += ways[s - l];
        }
    }
    ways[m]
}

struct Search<'a> {
    cands: &'a [Cand],
    ellp: i64,
    varpi: f64,
    log_w: &'a [f64],
}

impl Search<'_> {
    fn go(&self, chosen: &mut Vec<usize>, elems: &mut Vec<Element>, left: i64, next: usize, acc: &mut (f64, u64)) {
        if left == 0 {
            let groups = group_contours(elems, self.varpi, self.ellp as u64);
            if groups.len() == 1 && groups[0].covers(0) {
                acc.0 += chosen.iter().map(|&i| self.log_w[i]).sum::<f64>().exp();
                acc.1 += 1;
            }
            return;
        }
        for i in next..self.cands.len() {
            let c = self.cands[i];
            if c.len > left {
                continue;
            }
            let e = c.element(self.ellp);
            if elems.iter().any(|o| !check_compatibility(&[*o, e], self.ellp as u64, None).is_empty()) {
                continue;
            }
            chosen.push(i);
            elems.push(e);
            self.go(chosen, elems, left - c.len, i + 1, acc);
            chosen.pop();
            elems.pop();
        }
    }
}

/// Enumerates contours `Γ ∋ 0` with `|Γ| = m` whose elements lie in the window of
/// `window` `ℓ₊` blocks `[−⌊window/2⌋, ⌈window/2⌉)`. Each element is a triangle or a
/// rectangle (at least two blocks); `Γ ∋ 0` means some element contains site 0, and
/// the elements must be pairwise compatible and form a single group.
pub fn entropy_partial_sum(b: f64, c: f64, m: u32, window: u32, ellp: u64, gamma: f64, varpi: f64) -> Result<EntropySum> {
    if m < 3 {
        return Err(KacError::Domain(format!("|Γ| = {m} < 3")));
    }
    let mf = m as f64;
    let rhs = 2.0 * mf * (-b * mf.ln() - (c - 2f64.ln())).exp();
    let lo = -((window / 2) as i64);
    let hi = lo + window as i64;
    let mut cands = Vec::new();
    for start in lo..hi {
        for len in 1..=(m as i64).min(hi - start) {
            cands.push(Cand { start, len, kind: ElementKind::Triangle });
            if len >= 2 {
                cands.push(Cand { start, len, kind: ElementKind::Rectangle });
            }
        }
    }
    let visits = subset_count(&cands, m as usize);
    if visits > ENUMERATION_BUDGET {
        return Err(KacError::TooLarge { size: visits as usize, max: ENUMERATION_BUDGET as usize });
    }
    let log_w: Vec<f64> = cands.iter().map(|k| -b * (k.len as f64 * ellp as f64 * gamma).ln() - c).collect();
    let search = Search { cands: &cands, ellp: ellp as i64, varpi, log_w: &log_w };
    // The element with the smallest start must begin at or left of site 0.
    let firsts: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].start <= 0).collect();
    let parts: Vec<(f64, u64)> = firsts
        .par_iter()
        .map(|&i| {
            let mut acc = (0.0, 0);
            let e = cands[i].element(ellp as i64);
            search.go(&mut vec![i], &mut vec![e], m as i64 - cands[i].len, i + 1, &mut acc);
            acc
        })
        .collect();
    let (lhs, contours) = parts.iter().fold((0.0, 0), |(s, n), &(a, k)| (s + a, n + k));
    Ok(EntropySum { lhs, rhs, contours })
}
