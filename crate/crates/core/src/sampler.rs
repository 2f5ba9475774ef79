//! Single-flip Markov chains for the finite-volume Gibbs measure, an exact
//! enumeration oracle for small systems, and `S^±` boundary sampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{eta_values, Scales};
use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};
use crate::lattice::{
    apply_flip, boundary_field_at, coupling_table, delta_energy, hamiltonian_unchecked, BoundaryCondition,
    BoundaryWindow, FieldCache, SpinConfig, UpdateStrategy,
};
use crate::snapshot::{Snapshot, SnapshotHeader};

pub const MAX_EXACT_SITES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Metropolis,
    Glauber,
}

impl Kernel {
    /// Acceptance probability of a proposed flip with energy change `de`.
    pub fn acceptance(self, beta: f64, de: f64) -> f64 {
        match self {
            Kernel::Metropolis => {
                if de <= 0.0 {
                    1.0
                } else {
                    (-beta * de).exp()
                }
            }
            Kernel::Glauber => 1.0 / (1.0 + (beta * de).exp()),
        }
    }
}

/// A running chain. The generator is keyed by `(seed, chain_id)`.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub coupling: CouplingSpec,
    pub sigma: SpinConfig,
    pub cache: FieldCache,
    pub beta: f64,
    pub seed: u64,
    pub chain_id: u64,
    pub step_count: u64,
    rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(
        coupling: CouplingSpec,
        sigma: SpinConfig,
        beta: f64,
        seed: u64,
        chain_id: u64,
        strategy: UpdateStrategy,
    ) -> Result<Self> {
        sigma.check_boundary(&coupling)?;
        if sigma.is_empty() {
            return Err(KacError::Domain("empty domain".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(KacError::Domain(format!("β = {beta} must be finite and non-negative")));
        }
        let cache = FieldCache::new(&coupling, &sigma, strategy);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_id);
        Ok(Self { coupling, sigma, cache, beta, seed, chain_id, step_count: 0, rng })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            header: SnapshotHeader {
                gamma_num: 1,
                gamma_den: 2 * self.coupling.half_range(),
                lambda: self.coupling.lambda(),
                beta: self.beta,
                start: self.sigma.start(),
                end: self.sigma.end(),
                step: self.step_count,
                seed: self.seed,
            },
            spins: self.sigma.spins().to_vec(),
        }
    }
}

/// One proposal at a uniform site. The uniform variate is drawn on every step so
/// that both kernels consume randomness identically. Returns whether it flipped.
pub fn mcmc_step(state: &mut ChainState, kernel: Kernel) -> bool {
    let n = state.sigma.len();
    let i = state.rng.gen_range(0..n);
    let u: f64 = state.rng.gen();
    let de = delta_energy(&state.sigma, &state.cache, i).expect("cache tracks its own chain");
    state.step_count += 1;
    if u < kernel.acceptance(state.beta, de) {
        apply_flip(&mut state.sigma, &mut state.cache, i);
        true
    } else {
        false
    }
}

/// `|Λ|` proposals. Returns the number of accepted flips.
pub fn sweep(state: &mut ChainState, kernel: Kernel) -> u64 {
    let n = state.sigma.len();
    (0..n).map(|_| mcmc_step(state, kernel) as u64).sum()
}

/// Sweep counts for a run; snapshots are taken every `snapshot_every` sweeps after burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSchedule {
    pub burn_in_sweeps: u64,
    pub sweeps: u64,
    /// `0` records nothing.
    pub snapshot_every: u64,
}

/// Passed to the observer after every post-burn-in sweep.
pub struct SweepEvent<'a> {
    pub sweep: u64,
    pub recorded: bool,
    pub state: &'a ChainState,
}

/// Runs the schedule, calling `observer` after every measured sweep.
pub fn run_chain_with<F>(state: &mut ChainState, kernel: Kernel, schedule: &RunSchedule, mut observer: F) -> Result<()>
where
    F: FnMut(SweepEvent<'_>) -> Result<()>,
{
    for _ in 0..schedule.burn_in_sweeps {
        sweep(state, kernel);
    }
    for s in 1..=schedule.sweeps {
        sweep(state, kernel);
        let recorded = schedule.snapshot_every > 0 && s % schedule.snapshot_every == 0;
        observer(SweepEvent { sweep: s, recorded, state })?;
    }
    Ok(())
}

/// Runs the schedule and returns the recorded snapshots, also writing them to
/// `out_dir` as `chain<id>_step<step>.kac` when given.
pub fn run_chain(
    state: &mut ChainState,
    kernel: Kernel,
    schedule: &RunSchedule,
    out_dir: Option<&Path>,
) -> Result<Vec<Snapshot>> {
    let mut snaps = Vec::new();
    run_chain_with(state, kernel, schedule, |ev| {
        if ev.recorded {
            let snap = ev.state.snapshot();
            if let Some(dir) = out_dir {
                snap.save(&dir.join(format!("chain{}_step{}.kac", ev.state.chain_id, snap.header.step)))?;
            }
            snaps.push(snap);
        }
        Ok(())
    })?;
    Ok(snaps)
}

/// Exact Gibbs law on `2^n` configurations. Index bit `k` set means spin `k` is `+1`.
#[derive(Debug, Clone)]
pub struct GibbsTable {
    pub n: usize,
    pub beta: f64,
    pub energies: Vec<f64>,
    pub probs: Vec<f64>,
    /// `ln Z`.
    pub log_z: f64,
}

impl GibbsTable {
    pub fn config(&self, idx: usize) -> Vec<i8> {
        config_of(idx, self.n)
    }

    /// Single-flip transition matrix of a kernel, dense `2^n × 2^n`.
    pub fn transition_matrix(&self, kernel: Kernel) -> Vec<Vec<f64>> {
        let size = 1usize << self.n;
        let mut p = vec![vec![0.0; size]; size];
        for (x, row) in p.iter_mut().enumerate() {
            let mut stay = 1.0;
            for k in 0..self.n {
                let y = x ^ (1 << k);
                let q = kernel.acceptance(self.beta, self.energies[y] - self.energies[x]) / self.n as f64;
                row[y] = q;
                stay -= q;
            }
            row[x] = stay;
        }
        p
    }

    pub fn total_variation(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        0.5 * counts
            .iter()
            .zip(&self.probs)
            .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
            .sum::<f64>()
    }
}

pub fn config_of(idx: usize, n: usize) -> Vec<i8> {
    (0..n).map(|k| if idx >> k & 1 == 1 { 1 } else { -1 }).collect()
}

pub fn index_of(spins: &[i8]) -> usize {
    spins.iter().enumerate().filter(|(_, &s)| s > 0).map(|(k, _)| 1 << k).sum()
}

/// Enumerates all configurations of `[start, start+n)` by Gray code with
/// incrementally updated fields.
pub fn exact_gibbs(
    coupling: &CouplingSpec,
    boundary: &BoundaryCondition,
    start: i64,
    n: usize,
    beta: f64,
) -> Result<GibbsTable> {
    if n > MAX_EXACT_SITES {
        return Err(KacError::TooLarge { size: n, max: MAX_EXACT_SITES });
    }
    let mut sigma = SpinConfig::uniform(start, n, -1, boundary.clone())?;
    sigma.check_boundary(coupling)?;
    let table = coupling_table(coupling, n);
    let mut fields: Vec<f64> = (0..n)
        .map(|i| {
            let inner: f64 = (0..n).filter(|&j| j != i).map(|j| -table[i.abs_diff(j)]).sum();
            inner + boundary_field_at(coupling, boundary, n, i)
        })
        .collect();
    let size = 1usize << n;
    let mut energies = vec![0.0; size];
    let mut e = hamiltonian_unchecked(coupling, &sigma);
    let mut idx = 0usize;
    energies[0] = e;
    for g in 1..size {
        let k = g.trailing_zeros() as usize;
        let s = sigma.get(k);
        e += 2.0 * s as f64 * fields[k];
        sigma.flip(k);
        for (j, f) in fields.iter_mut().enumerate() {
            if j != k {
                *f -= 2.0 * table[j.abs_diff(k)] * s as f64;
            }
        }
        idx ^= 1 << k;
        energies[idx] = e;
    }
    let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|&e| (-beta * (e - emin)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / z).collect();
    Ok(GibbsTable { n, beta, energies, probs, log_z: z.ln() - beta * emin })
}

/// Draws a boundary in `S^sign`: i.i.d. spins of mean `sign·m_β` on ℓ₊-aligned
/// windows of at least `W_cut` sites, redrawn until every boundary block has `η = sign`.
#[allow(clippy::too_many_arguments)]
pub fn sample_boundary(
    coupling: &CouplingSpec,
    scales: &Scales,
    m_beta: f64,
    psi: f64,
    sign: i8,
    seed: u64,
    max_retries: usize,
) -> Result<BoundaryCondition> {
    let ellp = scales.ellp as usize;
    let len = coupling.cutoff_window().div_ceil(ellp).max(1) * ellp;
    let p_plus = (1.0 + sign as f64 * m_beta) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_side = |rng: &mut ChaCha8Rng| -> Result<Vec<i8>> {
        for _ in 0..max_retries {
            let spins: Vec<i8> = (0..len).map(|_| if rng.gen_bool(p_plus) { 1 } else { -1 }).collect();
            if eta_values(&spins, scales, m_beta, psi).iter().all(|&e| e == sign) {
                return Ok(spins);
            }
        }
        Err(KacError::RetriesExhausted(max_retries))
    };
    let left = draw_side(&mut rng)?;
    let right = draw_side(&mut rng)?;
    let window = BoundaryWindow::new(left, right, sign as f64 * m_beta)?;
    debug_assert!(in_s_sign(&window, scales, m_beta, psi, sign));
    Ok(BoundaryCondition::Sampled { sign, seed, window })
}

/// Membership of a boundary window in `S^sign` (every resolved ℓ₊ block has `η = sign`).
pub fn in_s_sign(window: &BoundaryWindow, scales: &Scales, m_beta: f64, psi: f64, sign: i8) -> bool {
    let ellp = scales.ellp as usize;
    [&window.left, &window.right].iter().all(|side| {
        side.len() % ellp == 0 && eta_values(side, scales, m_beta, psi).iter().all(|&e| e == sign)
    }) && (window.far - sign as f64 * m_beta).abs() < psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::hamiltonian;
    use crate::meanfield::solve_m_beta;

    fn small() -> (CouplingSpec, BoundaryCondition) {
        (CouplingSpec::new(2, 1.0).unwrap(), BoundaryCondition::PlusOnes)
    }

    #[test]
    fn kernel_formulas() {
        assert_eq!(Kernel::Metropolis.acceptance(2.0, 0.0), 1.0);
        assert_eq!(Kernel::Glauber.acceptance(2.0, 0.0), 0.5);
        assert_eq!(Kernel::Metropolis.acceptance(2.0, -1.0), 1.0);
        assert!((Kernel::Metropolis.acceptance(2.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_site_tables() {
        let c = CouplingSpec::new(2, 1.0).unwrap();
        let t = exact_gibbs(&c, &BoundaryCondition::Free, 0, 1, 1.7).unwrap();
        assert!((t.probs[0] - 0.5).abs() < 1e-15);
        let t = exact_gibbs(&c, &BoundaryCondition::PlusOnes, 5, 1, 1.7).unwrap();
        let h = boundary_field_at(&c, &BoundaryCondition::PlusOnes, 1, 0);
        let expect = (1.7 * h).exp() / (2.0 * (1.7 * h).cosh());
        assert!((t.probs[1] - expect).abs() < 1e-12);
        assert!(exact_gibbs(&c, &BoundaryCondition::Free, 0, 21, 1.0).is_err());
    }

    #[test]
    fn gray_code_matches_reversed_direct_sum() {
        let (c, b) = small();
        let n = 10;
        let t = exact_gibbs(&c, &b, 0, n, 1.5).unwrap();
        let size = 1 << n;
        let mut direct = vec![0.0; size];
        for idx in (0..size).rev() {
            let s = SpinConfig::new(0, config_of(idx, n), b.clone()).unwrap();
            direct[idx] = hamiltonian(&c, &s).unwrap();
        }
        let emin = direct.iter().cloned().fold(f64::INFINITY, f64::min);
        let z: f64 = direct.iter().rev().map(|e| (-1.5 * (e - emin)).exp()).sum();
        for idx in 0..size {
            assert!((t.energies[idx] - direct[idx]).abs() < 1e-12);
            let p = (-1.5 * (direct[idx] - emin)).exp() / z;
            assert!((t.probs[idx] - p).abs() < 1e-12);
        }
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detailed_balance_both_kernels() {
        let (c, b) = small();
        let t = exact_gibbs(&c, &b, 0, 6, 1.5).unwrap();
        for kernel in [Kernel::Metropolis, Kernel::Glauber] {
            let p = t.transition_matrix(kernel);
            for x in 0..p.len() {
                assert!((p[x].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for y in 0..p.len() {
                    assert!((t.probs[x] * p[x][y] - t.probs[y] * p[y][x]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn chain_matches_exact_law() {
        let (c, b) = small();
        let n = 8;
        let t = exact_gibbs(&c, &b, 0, n, 1.5).unwrap();
        for kernel in [Kernel::Metropolis, Kernel::Glauber] {
            let sigma = SpinConfig::uniform(0, n, 1, b.clone()).unwrap();
            let mut st = ChainState::new(c, sigma, 1.5, 11, 0, UpdateStrategy::Eager).unwrap();
            let mut counts = vec![0u64; 1 << n];
            for _ in 0..400_000 {
                mcmc_step(&mut st, kernel);
                counts[index_of(st.sigma.spins())] += 1;
            }
            assert!(t.total_variation(&counts) < 0.03, "{kernel:?}");
        }
    }

    #[test]
    fn infinite_temperature_is_unbiased() {
        let c = CouplingSpec::new(4, 1.0).unwrap();
        let sigma = SpinConfig::uniform(0, 200, 1, BoundaryCondition::PlusOnes).unwrap();
        let mut st = ChainState::new(c, sigma, 0.0, 3, 0, UpdateStrategy::Eager).unwrap();
        let sched = RunSchedule { burn_in_sweeps: 20, sweeps: 400, snapshot_every: 0 };
        let mut acc = Vec::new();
        run_chain_with(&mut st, Kernel::Metropolis, &sched, |ev| {
            acc.push(ev.state.sigma.spins().iter().map(|&s| s as f64).sum::<f64>() / 200.0);
            Ok(())
        })
        .unwrap();
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        // independent sweeps: σ ≈ 1/√(200·400)
        assert!(mean.abs() < 3.0 / (200.0f64 * 400.0).sqrt() * 1.5);
    }

    #[test]
    fn snapshots_are_deterministic() {
        let c = CouplingSpec::new(8, 2.0).unwrap();
        let run = |seed| {
            let sigma = SpinConfig::uniform(0, 64, 1, BoundaryCondition::PlusOnes).unwrap();
            let mut st = ChainState::new(c, sigma, 2.0, seed, 1, UpdateStrategy::Lazy { batch: 16 }).unwrap();
            run_chain(&mut st, Kernel::Glauber, &RunSchedule { burn_in_sweeps: 2, sweeps: 6, snapshot_every: 2 }, None)
                .unwrap()
        };
        let a = run(9);
        assert_eq!(a.len(), 3);
        assert_eq!(a, run(9));
        assert_ne!(a, run(10));
        assert_eq!(a[0].header.step, 4 * 64);
        let sigma = SpinConfig::uniform(0, 64, 1, BoundaryCondition::PlusOnes).unwrap();
        let mut st = ChainState::new(c, sigma, 2.0, 9, 1, UpdateStrategy::Eager).unwrap();
        let none = run_chain(&mut st, Kernel::Glauber, &RunSchedule { burn_in_sweeps: 0, sweeps: 5, snapshot_every: 0 }, None);
        assert!(none.unwrap().is_empty());
    }

    #[test]
    fn snapshots_written_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = CouplingSpec::new(8, 2.0).unwrap();
        let sigma = SpinConfig::uniform(16, 32, 1, BoundaryCondition::PlusOnes).unwrap();
        let mut st = ChainState::new(c, sigma, 2.0, 1, 0, UpdateStrategy::Eager).unwrap();
        let snaps =
            run_chain(&mut st, Kernel::Metropolis, &RunSchedule { burn_in_sweeps: 0, sweeps: 2, snapshot_every: 1 }, Some(dir.path()))
                .unwrap();
        let back = Snapshot::load(&dir.path().join("chain0_step64.kac")).unwrap();
        assert_eq!(back, snaps[1]);
        assert_eq!(back.header.gamma_den, 16);
    }

    #[test]
    fn glauber_flip_covariance_is_bit_exact() {
        let c = CouplingSpec::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let left: Vec<i8> = (0..80).map(|_| if rng.gen_bool(0.8) { 1 } else { -1 }).collect();
        let right: Vec<i8> = (0..80).map(|_| if rng.gen_bool(0.7) { 1 } else { -1 }).collect();
        let b = BoundaryCondition::Explicit(BoundaryWindow::new(left, right, 0.6).unwrap());
        let spins: Vec<i8> = (0..48).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let sigma = SpinConfig::new(0, spins, b).unwrap();
        let mut a = ChainState::new(c, sigma.clone(), 1.3, 77, 2, UpdateStrategy::Eager).unwrap();
        let mut m = ChainState::new(c, sigma.negated(), 1.3, 77, 2, UpdateStrategy::Eager).unwrap();
        for _ in 0..20_000 {
            assert_eq!(mcmc_step(&mut a, Kernel::Glauber), mcmc_step(&mut m, Kernel::Glauber));
            assert_eq!(a.sigma.negated().spins(), m.sigma.spins());
        }
        let fa = a.cache.fields().to_vec();
        let fm = m.cache.fields().to_vec();
        assert!(fa.iter().zip(&fm).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn boundary_sampling() {
        let c = CouplingSpec::new(16, 5.0).unwrap();
        let scales = Scales::new(6, 12, 48, 16).unwrap();
        let m10 = solve_m_beta(10.0);
        let b = sample_boundary(&c, &scales, m10, m10 * m10 / 10.0, 1, 1, 1).unwrap();
        let m3 = solve_m_beta(3.0);
        let psi = m3 * m3 / 10.0;
        for seed in 0..20 {
            let b = sample_boundary(&c, &scales, m3, psi, 1, seed, 100).unwrap();
            let BoundaryCondition::Sampled { window, .. } = &b else { panic!() };
            assert!(in_s_sign(window, &scales, m3, psi, 1));
            assert!(window.left.len() >= c.cutoff_window());
            let nb = sample_boundary(&c, &scales, m3, psi, -1, seed, 100).unwrap();
            assert_eq!(nb.outer_sign(), -1);
        }
        assert!(matches!(b, BoundaryCondition::Sampled { sign: 1, .. }));
        assert_eq!(sample_boundary(&c, &scales, 0.5, 0.01, 1, 0, 3), Err(KacError::RetriesExhausted(3)));
    }
}
