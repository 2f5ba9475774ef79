//! Run configuration, parallel experiments, statistics and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{derive_scales, eta_values, ScaleOverrides, Scales};
use crate::coupling::CouplingSpec;
use crate::error::{KacError, Result};
use crate::geometry::{default_varpi, extract_contours};
use crate::lattice::{BoundaryCondition, SpinConfig, UpdateStrategy};
use crate::meanfield::{beta_bar, solve_m_beta};
use crate::snapshot::Snapshot;
use crate::sampler::{run_chain_with, sample_boundary, ChainState, Kernel, RunSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    PlusOnes,
    MinusOnes,
    Free,
    SampledPlus,
    SampledMinus,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::PlusOnes => "plus",
            BoundaryKind::MinusOnes => "minus",
            BoundaryKind::Free => "free",
            BoundaryKind::SampledPlus => "sampled_plus",
            BoundaryKind::SampledMinus => "sampled_minus",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "plus" => BoundaryKind::PlusOnes,
            "minus" => BoundaryKind::MinusOnes,
            "free" => BoundaryKind::Free,
            "sampled_plus" => BoundaryKind::SampledPlus,
            "sampled_minus" => BoundaryKind::SampledMinus,
            _ => return Err(KacError::Config(format!("unknown boundary `{s}`"))),
        })
    }

    fn sign(self) -> i8 {
        match self {
            BoundaryKind::MinusOnes | BoundaryKind::SampledMinus => -1,
            _ => 1,
        }
    }
}

fn kernel_name(k: Kernel) -> &'static str {
    match k {
        Kernel::Metropolis => "metropolis",
        Kernel::Glauber => "glauber",
    }
}

/// Flat `key = value` run description. `gamma` is written `1/(2k)`; lengths of `Λ`
/// are in `ℓ₊` blocks, schedules in sweeps of `|Λ|` proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `k` with `γ = 1/(2k)`.
    pub half_range: u64,
    pub lambda: f64,
    pub beta: f64,
    pub blocks: u64,
    pub boundary: BoundaryKind,
    /// `N` in `ψ = m_β²/N`.
    pub psi_divisor: f64,
    pub ellm_factor: u64,
    pub ellp_factor: u64,
    pub kernel: Kernel,
    pub seed: u64,
    pub chains: u64,
    pub sweeps: u64,
    pub burn_in: u64,
    /// Measurement (and snapshot) cadence in sweeps.
    pub snapshot_every: u64,
    pub save_snapshots: bool,
    pub out_dir: PathBuf,
    /// Threshold `b̄` in `β̄(λ) = β̃(b̄/λ)`.
    pub b_bar: f64,
    pub allow_subcritical: bool,
    pub boundary_retries: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            half_range: 16,
            lambda: 5.0,
            beta: 3.0,
            blocks: 64,
            boundary: BoundaryKind::PlusOnes,
            psi_divisor: 10.0,
            ellm_factor: 2,
            ellp_factor: 4,
            kernel: Kernel::Metropolis,
            seed: 1,
            chains: 4,
            sweeps: 1000,
            burn_in: 100,
            snapshot_every: 1,
            save_snapshots: false,
            out_dir: PathBuf::from("out"),
            b_bar: 7.0,
            allow_subcritical: false,
            boundary_retries: 100,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| KacError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(KacError::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn gamma(&self) -> f64 {
        0.5 / self.half_range as f64
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| KacError::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "gamma" => {
                let den = v
                    .strip_prefix("1/")
                    .ok_or_else(|| KacError::Config(format!("gamma must be 1/(2k), got `{v}`")))?;
                let den: u64 = parse_num(key, den.trim())?;
                if den < 2 || den % 2 != 0 {
                    return Err(KacError::Config(format!("gamma = 1/{den}: denominator must be even and ≥ 2")));
                }
                self.half_range = den / 2;
            }
            "lambda" => self.lambda = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "blocks" => self.blocks = parse_num(key, v)?,
            "boundary" => self.boundary = BoundaryKind::parse(v)?,
            "psi_divisor" => self.psi_divisor = parse_num(key, v)?,
            "ellm_factor" => self.ellm_factor = parse_num(key, v)?,
            "ellp_factor" => self.ellp_factor = parse_num(key, v)?,
            "kernel" => {
                self.kernel = match v {
                    "metropolis" => Kernel::Metropolis,
                    "glauber" => Kernel::Glauber,
                    _ => return Err(KacError::Config(format!("unknown kernel `{v}`"))),
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            "chains" => self.chains = parse_num(key, v)?,
            "sweeps" => self.sweeps = parse_num(key, v)?,
            "burn_in" => self.burn_in = parse_num(key, v)?,
            "snapshot_every" => self.snapshot_every = parse_num(key, v)?,
            "save_snapshots" => self.save_snapshots = parse_bool(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "b_bar" => self.b_bar = parse_num(key, v)?,
            "allow_subcritical" => self.allow_subcritical = parse_bool(key, v)?,
            "boundary_retries" => self.boundary_retries = parse_num(key, v)?,
            _ => return Err(KacError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("gamma", format!("1/{}", 2 * self.half_range)),
            ("lambda", format!("{:?}", self.lambda)),
            ("beta", format!("{:?}", self.beta)),
            ("blocks", self.blocks.to_string()),
            ("boundary", self.boundary.name().into()),
            ("psi_divisor", format!("{:?}", self.psi_divisor)),
            ("ellm_factor", self.ellm_factor.to_string()),
            ("ellp_factor", self.ellp_factor.to_string()),
            ("kernel", kernel_name(self.kernel).into()),
            ("seed", self.seed.to_string()),
            ("chains", self.chains.to_string()),
            ("sweeps", self.sweeps.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("save_snapshots", self.save_snapshots.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("b_bar", format!("{:?}", self.b_bar)),
            ("allow_subcritical", self.allow_subcritical.to_string()),
            ("boundary_retries", self.boundary_retries.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn coupling(&self) -> Result<CouplingSpec> {
        CouplingSpec::new(self.half_range, self.lambda)
    }

    pub fn scales(&self) -> Result<Scales> {
        derive_scales(&self.coupling()?, ScaleOverrides { ellm_factor: self.ellm_factor, ellp_factor: self.ellp_factor })
    }

    pub fn m_beta(&self) -> f64 {
        if self.beta > 1.0 {
            solve_m_beta(self.beta)
        } else {
            0.0
        }
    }

    /// `ψ = m_β²/N`.
    pub fn psi(&self) -> f64 {
        let m = self.m_beta();
        m * m / self.psi_divisor
    }

    /// Checks coupling and scales; rejects `β ≤ β̄(λ)` unless subcritical runs are
    /// allowed, in which case the returned warnings say so.
    pub fn validate(&self) -> Result<Vec<String>> {
        let coupling = self.coupling()?;
        self.scales()?;
        let mut warnings = Vec::new();
        if self.blocks == 0 || self.chains == 0 {
            return Err(KacError::Config("blocks and chains must be positive".into()));
        }
        if !(self.psi_divisor > 1.0) {
            return Err(KacError::Config(format!("psi_divisor = {} must exceed 1", self.psi_divisor)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(KacError::Config(format!("beta = {} must be finite and non-negative", self.beta)));
        }
        let bb = beta_bar(coupling.lambda(), self.b_bar);
        if self.beta <= bb {
            let msg = format!("beta = {} ≤ beta_bar({}) = {bb:.6}", self.beta, self.lambda);
            if !self.allow_subcritical {
                return Err(KacError::Config(format!("{msg}; pass --allow-subcritical to run anyway")));
            }
            warnings.push(format!("subcritical: {msg}"));
        }
        if matches!(self.boundary, BoundaryKind::SampledPlus | BoundaryKind::SampledMinus) && self.m_beta() == 0.0 {
            return Err(KacError::Config("sampled boundaries need β > 1".into()));
        }
        Ok(warnings)
    }

    /// The boundary condition of the run (sampled ones drawn from a seed derived from `seed`).
    pub fn boundary_condition(&self) -> Result<BoundaryCondition> {
        Ok(match self.boundary {
            BoundaryKind::PlusOnes => BoundaryCondition::PlusOnes,
            BoundaryKind::MinusOnes => BoundaryCondition::MinusOnes,
            BoundaryKind::Free => BoundaryCondition::Free,
            BoundaryKind::SampledPlus | BoundaryKind::SampledMinus => sample_boundary(
                &self.coupling()?,
                &self.scales()?,
                self.m_beta(),
                self.psi(),
                self.boundary.sign(),
                self.seed ^ 0xB0B0_CAFE,
                self.boundary_retries,
            )?,
        })
    }
}

/// Mean and standard error of batch means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

const BATCHES: usize = 10;

fn batch_estimate(series: &[Vec<f64>]) -> Estimate {
    let mut means = Vec::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for s in series {
        total += s.iter().sum::<f64>();
        count += s.len();
        let per = s.len() / BATCHES;
        if per == 0 {
            continue;
        }
        for b in s.chunks_exact(per).take(BATCHES) {
            means.push(b.iter().sum::<f64>() / per as f64);
        }
    }
    if count == 0 {
        return Estimate::default();
    }
    let mean = total / count as f64;
    let k = means.len();
    let stderr = if k > 1 {
        let mu = means.iter().sum::<f64>() / k as f64;
        (means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / ((k - 1) * k) as f64).sqrt()
    } else {
        0.0
    };
    Estimate { mean, stderr }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub samples: u64,
    pub sigma0: Estimate,
    pub magnetization: Estimate,
    /// Counts of `η = −1, 0, +1` over all blocks and samples.
    pub eta_hist: [u64; 3],
    pub p_eta0_not_plus: Estimate,
    pub p_eta0_minus: Estimate,
    /// Contour count by `|Γ|` (in `ℓ₊` blocks).
    pub contour_sizes: BTreeMap<u64, u64>,
    /// Mean number of observed contours containing site 0 per sample.
    pub union_sum: Estimate,
    pub elapsed_secs: f64,
}

impl RunStats {
    pub fn contours(&self) -> u64 {
        self.contour_sizes.values().sum()
    }

    pub fn eta_plus_fraction(&self) -> f64 {
        let n: u64 = self.eta_hist.iter().sum();
        if n == 0 {
            0.0
        } else {
            self.eta_hist[2] as f64 / n as f64
        }
    }

    /// `P̂(η(0) ≠ 1) ≤ Σ̂_{Γ∋0} P̂(X_Γ) + 3·(combined stderr)`.
    pub fn union_bound_holds(&self) -> bool {
        let se = self.p_eta0_not_plus.stderr.hypot(self.union_sum.stderr);
        self.p_eta0_not_plus.mean <= self.union_sum.mean + 3.0 * se
    }
}

#[derive(Default)]
struct ChainRecord {
    sigma0: Vec<f64>,
    magnetization: Vec<f64>,
    not_plus: Vec<f64>,
    minus: Vec<f64>,
    union: Vec<f64>,
    eta_hist: [u64; 3],
    contour_sizes: BTreeMap<u64, u64>,
}

fn run_one(cfg: &RunConfig, coupling: &CouplingSpec, scales: &Scales, boundary: &BoundaryCondition, chain: u64) -> Result<ChainRecord> {
    let ellp = scales.ellp as i64;
    let start = -((cfg.blocks / 2) as i64) * ellp;
    let n = (cfg.blocks * scales.ellp) as usize;
    let outer = boundary.outer_sign();
    let sigma = SpinConfig::uniform(start, n, outer, boundary.clone())?;
    let mut state = ChainState::new(coupling.clone(), sigma, cfg.beta, cfg.seed, chain, UpdateStrategy::Eager)?;
    let schedule = RunSchedule { burn_in_sweeps: cfg.burn_in, sweeps: cfg.sweeps, snapshot_every: cfg.snapshot_every };
    let m_beta = cfg.m_beta();
    let psi = cfg.psi();
    let varpi = default_varpi(m_beta.max(1e-3));
    let origin_block = start / ellp;
    let zero = (-start) as usize;
    let zero_block = (cfg.blocks / 2) as usize;
    let dir = cfg.out_dir.clone();
    if cfg.save_snapshots {
        std::fs::create_dir_all(&dir)?;
    }
    let mut rec = ChainRecord::default();
    run_chain_with(&mut state, cfg.kernel, &schedule, |ev| {
        if !ev.recorded {
            return Ok(());
        }
        let spins = ev.state.sigma.spins();
        if cfg.save_snapshots {
            let snap = ev.state.snapshot();
            snap.save(&dir.join(format!("chain{}_step{}.kac", chain, snap.header.step)))?;
        }
        rec.sigma0.push(spins[zero] as f64);
        rec.magnetization.push(spins.iter().map(|&s| s as f64).sum::<f64>() / n as f64);
        let eta = eta_values(spins, scales, m_beta, psi);
        for &e in &eta {
            rec.eta_hist[(e + 1) as usize] += 1;
        }
        rec.not_plus.push((eta[zero_block] != 1) as u8 as f64);
        rec.minus.push((eta[zero_block] == -1) as u8 as f64);
        let ex = extract_contours(&eta, origin_block, outer, scales.ellp, varpi);
        let mut covering = 0;
        for c in &ex.contours {
            *rec.contour_sizes.entry(c.size.round() as u64).or_insert(0) += 1;
            if c.covers(0) {
                covering += 1;
            }
        }
        rec.union.push(covering as f64);
        Ok(())
    })?;
    Ok(rec)
}

/// Runs `chains` independent chains in parallel and reduces them in chain order.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunStats> {
    cfg.validate()?;
    let t0 = Instant::now();
    let coupling = cfg.coupling()?;
    let scales = cfg.scales()?;
    let boundary = cfg.boundary_condition()?;
    let recs: Vec<ChainRecord> =
        (0..cfg.chains).into_par_iter().map(|c| run_one(cfg, &coupling, &scales, &boundary, c)).collect::<Result<_>>()?;
    let mut stats = RunStats::default();
    let pick = |f: fn(&ChainRecord) -> &Vec<f64>| -> Vec<Vec<f64>> { recs.iter().map(|r| f(r).clone()).collect() };
    stats.sigma0 = batch_estimate(&pick(|r| &r.sigma0));
    stats.magnetization = batch_estimate(&pick(|r| &r.magnetization));
    stats.p_eta0_not_plus = batch_estimate(&pick(|r| &r.not_plus));
    stats.p_eta0_minus = batch_estimate(&pick(|r| &r.minus));
    stats.union_sum = batch_estimate(&pick(|r| &r.union));
    for r in &recs {
        stats.samples += r.sigma0.len() as u64;
        for k in 0..3 {
            stats.eta_hist[k] += r.eta_hist[k];
        }
        for (&s, &c) in &r.contour_sizes {
            *stats.contour_sizes.entry(s).or_insert(0) += c;
        }
    }
    stats.elapsed_secs = t0.elapsed().as_secs_f64();
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Text,
}

pub const CSV_HEADER: &str = "variable,index,value";

/// Long-format CSV: `config.*` rows, then the statistics. Timing is left out so that
/// identical configurations give identical files. Empty statistics give the header only.
pub fn report_csv(cfg: &RunConfig, stats: &RunStats) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    if stats.samples == 0 {
        return s;
    }
    let mut row = |var: &str, idx: &str, val: String| {
        let _ = writeln!(s, "{var},{idx},{val}");
    };
    for (k, v) in cfg.entries() {
        row(&format!("config.{k}"), "", v);
    }
    row("samples", "", stats.samples.to_string());
    for (name, e) in [
        ("sigma0", stats.sigma0),
        ("magnetization", stats.magnetization),
        ("p_eta0_not_plus", stats.p_eta0_not_plus),
        ("p_eta0_minus", stats.p_eta0_minus),
        ("union_sum", stats.union_sum),
    ] {
        row(&format!("{name}.mean"), "", format!("{:?}", e.mean));
        row(&format!("{name}.stderr"), "", format!("{:?}", e.stderr));
    }
    for (k, c) in stats.eta_hist.iter().enumerate() {
        row("eta_hist", &(k as i64 - 1).to_string(), c.to_string());
    }
    for (size, c) in &stats.contour_sizes {
        row("contour_size_hist", &size.to_string(), c.to_string());
    }
    s
}

/// Inverse of [`report_csv`] (timing is not recovered).
pub fn parse_report_csv(text: &str) -> Result<(Option<RunConfig>, RunStats)> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(KacError::Format("missing CSV header".into()));
    }
    let mut cfg: Option<RunConfig> = None;
    let mut stats = RunStats::default();
    for line in lines {
        let mut parts = line.splitn(3, ',');
        let (Some(var), Some(idx), Some(val)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(KacError::Format(format!("bad row `{line}`")));
        };
        let num = |v: &str| -> Result<f64> { v.parse().map_err(|_| KacError::Format(format!("bad number `{v}`"))) };
        let int = |v: &str| -> Result<u64> { v.parse().map_err(|_| KacError::Format(format!("bad count `{v}`"))) };
        if let Some(key) = var.strip_prefix("config.") {
            cfg.get_or_insert_with(RunConfig::default).set(key, val)?;
            continue;
        }
        match var {
            "samples" => stats.samples = int(val)?,
            "eta_hist" => {
                let k: i64 = idx.parse().map_err(|_| KacError::Format(format!("bad index `{idx}`")))?;
                let slot = stats.eta_hist.get_mut((k + 1) as usize).ok_or_else(|| KacError::Format(format!("η = {k}")))?;
                *slot = int(val)?;
            }
            "contour_size_hist" => {
                stats.contour_sizes.insert(int(idx)?, int(val)?);
            }
            _ => {
                let (name, field) =
                    var.rsplit_once('.').ok_or_else(|| KacError::Format(format!("unknown variable `{var}`")))?;
                let e = match name {
                    "sigma0" => &mut stats.sigma0,
                    "magnetization" => &mut stats.magnetization,
                    "p_eta0_not_plus" => &mut stats.p_eta0_not_plus,
                    "p_eta0_minus" => &mut stats.p_eta0_minus,
                    "union_sum" => &mut stats.union_sum,
                    _ => return Err(KacError::Format(format!("unknown variable `{var}`"))),
                };
                match field {
                    "mean" => e.mean = num(val)?,
                    "stderr" => e.stderr = num(val)?,
                    _ => return Err(KacError::Format(format!("unknown variable `{var}`"))),
                }
            }
        }
    }
    Ok((cfg, stats))
}

/// Writes `report.csv` or `report.json` into `dir`; returns the path.
pub fn emit_report(cfg: &RunConfig, stats: &RunStats, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (name, body) = match format {
        ReportFormat::Csv => ("report.csv", report_csv(cfg, stats)),
        ReportFormat::Text => {
            let mut stats = stats.clone();
            stats.elapsed_secs = 0.0;
            let v = serde_json::json!({ "config": cfg.entries().into_iter().collect::<BTreeMap<_, _>>(), "stats": stats });
            ("report.json", serde_json::to_string_pretty(&v).expect("serializable") + "\n")
        }
    };
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

/// Spins of a `KAC1` snapshot as a configuration with the given boundary.
pub fn read_snapshot(path: &Path, boundary: BoundaryCondition) -> Result<SpinConfig> {
    let snap = Snapshot::load(path)?;
    SpinConfig::new(snap.header.start, snap.spins, boundary)
}

/// Writes the chain's current state as a `KAC1` snapshot.
pub fn write_snapshot(path: &Path, state: &ChainState) -> Result<()> {
    state.snapshot().save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            half_range: 16,
            lambda: 5.0,
            beta: 3.0,
            blocks: 4,
            chains: 2,
            sweeps: 200,
            burn_in: 20,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_round_trip() {
        let c = RunConfig { boundary: BoundaryKind::SampledMinus, kernel: Kernel::Glauber, ..small() };
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let c = RunConfig::parse("# comment\ngamma = 1/64\nbeta=2.5 # tail\n").unwrap();
        assert_eq!((c.half_range, c.beta), (32, 2.5));
        assert!(RunConfig::parse("gamma = 1/3").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        assert!(RunConfig::parse("beta").is_err());
    }

    #[test]
    fn subcritical_gate() {
        let c = RunConfig { beta: 1.05, ..small() };
        assert!(matches!(c.validate(), Err(KacError::Config(_))));
        let c = RunConfig { allow_subcritical: true, ..c };
        assert_eq!(c.validate().unwrap().len(), 1);
        assert!(small().validate().unwrap().is_empty());
    }

    #[test]
    fn infinite_temperature() {
        let c = RunConfig { beta: 0.0, allow_subcritical: true, boundary: BoundaryKind::Free, ..small() };
        let s = run_experiment(&c).unwrap();
        assert_eq!(s.samples, 400);
        assert!(s.sigma0.mean.abs() <= 3.0 * s.sigma0.stderr + 1e-12, "{:?}", s.sigma0);
    }

    #[test]
    fn deterministic_and_mirrored() {
        let c = RunConfig { kernel: Kernel::Glauber, ..small() };
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(report_csv(&c, &a), report_csv(&c, &b));
        let m = run_experiment(&RunConfig { boundary: BoundaryKind::MinusOnes, ..c.clone() }).unwrap();
        assert_eq!(m.sigma0.mean, -a.sigma0.mean);
        assert_eq!(m.eta_hist, [a.eta_hist[2], a.eta_hist[1], a.eta_hist[0]]);
    }

    #[test]
    fn probabilities_and_histograms() {
        let c = RunConfig { beta: 1.8, ..small() };
        let s = run_experiment(&c).unwrap();
        for p in [s.p_eta0_not_plus.mean, s.p_eta0_minus.mean] {
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(s.p_eta0_minus.mean <= s.p_eta0_not_plus.mean);
        assert_eq!(s.eta_hist.iter().sum::<u64>(), s.samples * c.blocks);
        assert!(s.union_bound_holds());
    }

    #[test]
    fn csv_round_trip() {
        let c = RunConfig { beta: 1.8, ..small() };
        let s = run_experiment(&c).unwrap();
        let text = report_csv(&c, &s);
        let (cfg, back) = parse_report_csv(&text).unwrap();
        assert_eq!(cfg.unwrap(), c);
        assert_eq!(back, RunStats { elapsed_secs: 0.0, ..s.clone() });
        let rows: u64 =
            text.lines().filter(|l| l.starts_with("contour_size_hist,")).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
        assert_eq!(rows, s.contours());
        assert_eq!(report_csv(&c, &RunStats::default()), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn snapshot_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = CouplingSpec::new(16, 5.0).unwrap();
        let sigma = SpinConfig::new(-5, vec![1, -1, 1, 1, -1, -1, 1, 1, 1], BoundaryCondition::PlusOnes).unwrap();
        let state = ChainState::new(c, sigma.clone(), 2.0, 3, 0, UpdateStrategy::Eager).unwrap();
        let path = dir.path().join("s.kac");
        write_snapshot(&path, &state).unwrap();
        assert_eq!(read_snapshot(&path, BoundaryCondition::PlusOnes).unwrap(), sigma);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[12] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_snapshot(&path, BoundaryCondition::PlusOnes), Err(KacError::Crc { .. })));
    }

    #[test]
    fn stderr_halves_with_four_times_data() {
        let series = |n: usize| -> Vec<Vec<f64>> {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            vec![(0..n).map(|_| r.gen::<f64>()).collect()]
        };
        let a = batch_estimate(&series(10_000)).stderr;
        let b = batch_estimate(&series(20_000)).stderr;
        assert!((b / a - 0.5f64.sqrt()).abs() < 0.3 * 0.5f64.sqrt());
    }
}
