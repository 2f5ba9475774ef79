use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kac_core::coarse::{eta_field, theta_field};
use kac_core::freeenergy::peierls::DEFAULT_RHO;
use kac_core::freeenergy::{epsilon_ab, j_tilde_value, peierls_weight, PeierlsParams, ProfileContext};
use kac_core::geometry::{contour_report, default_varpi, extract_contours};
use kac_core::harness::{emit_report, parse_report_csv, read_snapshot, run_experiment, ReportFormat, RunConfig};
use kac_core::meanfield::{beta_bar, dobrushin_lower, f_beta_closed, solve_m_beta};
use kac_core::verify::verify;
use kac_core::KacError;

#[derive(Parser)]
#[command(name = "kac", version, about = "Kac + 1/r² Ising chain: sampling, coarse graining, contours, free energies")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run at β ≤ β̄(λ).
    #[arg(long, global = true)]
    allow_subcritical: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured chains and write report.csv and report.json.
    Simulate,
    /// η and Θ per ℓ₊ block of a snapshot, as CSV.
    CoarseGrain {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Contours of a snapshot, one JSON object per line.
    Contours {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// ε_a, ε_b, J̃ and the Peierls constants; with a snapshot, W per contour.
    Freeenergy {
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// m_β, βm_β², f_β(m_β) on a list of β.
    Meanfield {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 2.0, 3.0])]
        betas: Vec<f64>,
    },
    /// Acceptance checks; the selector is empty, `all`, a suite name or a criterion number.
    Verify {
        #[arg(default_value = "")]
        selector: String,
    },
    /// Re-emit a CSV report in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<KacError> for Failure {
    fn from(e: KacError) -> Self {
        match e {
            KacError::Config(_) | KacError::InvalidCoupling(_) | KacError::InvalidScales(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.allow_subcritical |= cli.allow_subcritical;
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(KacError::from)?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(KacError::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let stats = run_experiment(&cfg)?;
            println!(
                "⟨σ₀⟩ = {:.6} ± {:.6}, P(η(0)≠1) = {:.4}, P(η(0)=−1) = {:.4}, {} samples in {:.1}s",
                stats.sigma0.mean,
                stats.sigma0.stderr,
                stats.p_eta0_not_plus.mean,
                stats.p_eta0_minus.mean,
                stats.samples,
                stats.elapsed_secs
            );
            for f in [ReportFormat::Csv, ReportFormat::Text] {
                println!("wrote {}", emit_report(&cfg, &stats, f, &cfg.out_dir)?.display());
            }
            if !stats.union_bound_holds() {
                eprintln!("union bound check failed");
                return Ok(false);
            }
            Ok(true)
        }
        Command::CoarseGrain { snapshot } => {
            let cfg = load_config(cli)?;
            let bc = cfg.boundary_condition()?;
            let outer = bc.outer_sign();
            let sigma = read_snapshot(snapshot, bc)?;
            let eta = eta_field(&sigma, &cfg.scales()?, cfg.m_beta(), cfg.psi())?;
            let theta = theta_field(&eta, outer);
            let mut s = String::from("block,eta,theta\n");
            for (k, &e) in eta.values.iter().enumerate() {
                let _ = writeln!(s, "{},{e},{}", eta.origin_block + k as i64, theta.interior()[k]);
            }
            print!("{s}");
            Ok(true)
        }
        Command::Contours { snapshot } => {
            let cfg = load_config(cli)?;
            let scales = cfg.scales()?;
            let bc = cfg.boundary_condition()?;
            let outer = bc.outer_sign();
            let sigma = read_snapshot(snapshot, bc)?;
            let eta = eta_field(&sigma, &scales, cfg.m_beta(), cfg.psi())?;
            let x = extract_contours(&eta.values, eta.origin_block, outer, scales.ellp, default_varpi(cfg.m_beta()));
            print!("{}", contour_report(&x.contours));
            Ok(true)
        }
        Command::Freeenergy { snapshot } => {
            let cfg = load_config(cli)?;
            let coupling = cfg.coupling()?;
            let scales = cfg.scales()?;
            let ctx = ProfileContext::new(cfg.beta, coupling.clone(), scales.ell0, true)?;
            let eps = epsilon_ab(&ctx, &scales, cfg.psi(), cfg.seed)?;
            let jt = j_tilde_value(&ProfileContext::new(cfg.beta, coupling.clone(), scales.ell0, false)?)?;
            let varpi = default_varpi(cfg.m_beta());
            let p = PeierlsParams::new(
                cfg.beta,
                &coupling,
                &scales,
                cfg.psi(),
                varpi,
                eps.eps_a.min(eps.eps_b),
                jt,
                cfg.b_bar,
                DEFAULT_RHO,
            )?;
            let mut s = String::from("beta,gamma,lambda,eps_a,eps_b,j_tilde,b_beta,c_gamma\n");
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                cfg.beta,
                cfg.gamma(),
                cfg.lambda,
                eps.eps_a,
                eps.eps_b,
                jt,
                p.b_beta,
                p.c_gamma
            );
            print!("{s}");
            write_out(&cfg.out_dir, "freeenergy.csv", &s)?;
            if let Some(path) = snapshot {
                let bc = cfg.boundary_condition()?;
                let outer = bc.outer_sign();
                let sigma = read_snapshot(path, bc)?;
                let eta = eta_field(&sigma, &scales, cfg.m_beta(), cfg.psi())?;
                let x = extract_contours(&eta.values, eta.origin_block, outer, scales.ellp, varpi);
                let mut w = String::from("contour,start,end,size,weight\n");
                for (k, c) in x.contours.iter().enumerate() {
                    let _ = writeln!(w, "{k},{},{},{:?},{:?}", c.envelope.0, c.envelope.1, c.size, peierls_weight(&p, c));
                }
                print!("{w}");
                write_out(&cfg.out_dir, "peierls.csv", &w)?;
            }
            Ok(true)
        }
        Command::Meanfield { betas } => {
            let cfg = load_config(cli)?;
            println!("beta,m_beta,beta_m2,f_beta");
            for &b in betas {
                if !(b > 0.0) {
                    return Err(Failure::Usage(format!("β = {b} must be positive")));
                }
                let m = solve_m_beta(b);
                println!("{b:?},{m:?},{:?},{:?}", b * m * m, f_beta_closed(b, m));
            }
            println!(
                "# beta_bar(lambda = {}) = {:?}; Dobrushin lower bound = {:?}",
                cfg.lambda,
                beta_bar(cfg.lambda, cfg.b_bar),
                dobrushin_lower(cfg.gamma(), cfg.lambda)
            );
            Ok(true)
        }
        Command::Verify { selector } => {
            let checks = verify(selector);
            if checks.is_empty() {
                return Err(Failure::Usage(format!("no criteria match `{selector}`")));
            }
            for c in &checks {
                println!("{}", c.line());
            }
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            write_out(&dir, "verify.json", &(serde_json::to_string_pretty(&checks).expect("serializable") + "\n"))?;
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(input).map_err(KacError::from)?;
            let (cfg, stats) = parse_report_csv(&text)?;
            let cfg = cfg.unwrap_or_default();
            let dir = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
            println!("wrote {}", emit_report(&cfg, &stats, (*format).into(), &dir)?.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
