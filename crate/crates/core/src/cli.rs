//! Command-line front end: parses a run configuration, drives the engines and
//! writes curves, dumps and a run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::boundary::{compute_h_function, map_boundary_source, SourceMapMode};
use crate::config::{parse_config, EngineKind, ResolvedConfig};
use crate::correlation::{c12_from_fields, c12_from_tally, compare_curves, run_sweep, CorrelationCurve, SweepEngine};
use crate::diffusion::{solve_diffusion, CorrelationField, DiffusionProblem};
use crate::error::{Error, Result};
use crate::medium::Dimension;
use crate::transport::{run_transport, McParams};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SPECKLE_WORKERS";

/// Relative tolerance used by `compare` next to three standard errors.
const AGREEMENT_REL_TOL: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "speckle", version, about = "Speckle decorrelation in locally shifted random media")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed; overrides the configured one.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo worker threads. Falls back to the configuration, then to
    /// the SPECKLE_WORKERS environment variable, then to 1.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print Σ, η, g and the diffusion coefficients of the configured medium.
    Kernel {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate the H-function as `μ H(μ)`.
    Hfun {
        #[arg(long, default_value_t = 1.0)]
        albedo: f64,
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One Monte Carlo run of the configured scene and shift.
    Mc(RunArgs),
    /// One diffusion solve of the configured scene and shift.
    Diffusion(RunArgs),
    /// Wavefront sweep with the configured engine(s).
    Sweep(RunArgs),
    /// Sweep with both engines and report their agreement.
    Compare(RunArgs),
}

/// Parses the process arguments and runs; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kernel { config } => kernel(&config),
        Command::Hfun { albedo, nodes, tol, out } => hfun(albedo, nodes, tol, out.as_deref()),
        Command::Mc(args) => Session::open("mc", &args)?.mc(),
        Command::Diffusion(args) => Session::open("diffusion", &args)?.diffusion(),
        Command::Sweep(args) => Session::open("sweep", &args)?.sweep(),
        Command::Compare(args) => Session::open("compare", &args)?.compare(),
    }
}

fn kernel(config: &Path) -> Result<()> {
    let c = parse_config(config)?;
    let k = &c.medium.coefficients;
    println!("dimension        {}", k.dimension.as_usize());
    println!("wavenumber       {}", k.wavenumber);
    println!("sigma_total      {}", k.sigma_total);
    println!("mean_free_path   {}", k.mean_free_path);
    println!("anisotropy_g     {}", k.anisotropy_g);
    println!("diffusion_scalar {}", k.diffusion_scalar);
    println!("reduced_D        {}", k.reduced_diffusion());
    Ok(())
}

fn hfun(albedo: f64, nodes: usize, tol: f64, out: Option<&Path>) -> Result<()> {
    let h = compute_h_function(albedo, nodes, tol)?;
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, h.to_text())?;
        }
        None => print!("{}", h.to_text()),
    }
    Ok(())
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A configured run writing into one output directory.
struct Session {
    command: &'static str,
    cfg: ResolvedConfig,
    out: PathBuf,
    mc: Option<McParams>,
    clock: Instant,
    written: Vec<String>,
}

impl Session {
    fn open(command: &'static str, args: &RunArgs) -> Result<Self> {
        let cfg = parse_config(&args.config)?;
        let out = args.out.clone().unwrap_or_else(|| cfg.config.outputs.directory.clone());
        fs::create_dir_all(&out)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;
        let env_workers = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
        let configured = cfg.config.engine.mc.as_ref().and_then(|m| m.n_workers);
        let mc = cfg.mc_params().map(|mut p| {
            p.n_workers = args.workers.or(configured).or(env_workers).unwrap_or(1).max(1);
            if let Some(seed) = args.seed {
                p.seed = seed;
            }
            p
        });
        Ok(Self { command, cfg, out, mc, clock: Instant::now(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.out.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn mc_params(&self) -> Result<McParams> {
        self.mc.ok_or_else(|| Error::Config("this command needs an [engine.mc] block".into()))
    }

    fn diffusion_settings(&self) -> Result<(f64, f64, f64)> {
        let d = self
            .cfg
            .config
            .engine
            .diffusion
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs an [engine.diffusion] block".into()))?;
        // Without an H-theory in 2D the datum is the source level itself.
        let mode = match self.cfg.scene.dimension() {
            Dimension::D2 => SourceMapMode::IsotropicIdentity,
            Dimension::D3 => d.source_mode,
        };
        let q = if mode == SourceMapMode::IsotropicIdentity {
            d.source_level
        } else {
            let h = compute_h_function(1.0, 64, 1e-13)?;
            map_boundary_source(|_, _| d.source_level, &h, mode, [0.0; 3])?
        };
        Ok((d.grid_spacing, d.solver_tol, q))
    }

    fn wavefront(&self) -> Result<(crate::correlation::Wavefront, Vec<f64>)> {
        self.cfg.wavefront.clone().ok_or_else(|| Error::Config("this command needs a [wavefront] block".into()))
    }

    fn finish(mut self) -> Result<()> {
        let seed = self.mc.map(|p| p.seed.to_string()).unwrap_or_else(|| "none".into());
        let workers = self.mc.map_or(0, |p| p.n_workers);
        let mut m = String::new();
        let _ = writeln!(m, "command = \"{}\"", self.command);
        let _ = writeln!(m, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "config_sha256 = \"{}\"", sha256_hex(&self.cfg.text));
        let _ = writeln!(m, "seed = \"{seed}\"");
        let _ = writeln!(m, "workers = {workers}");
        let _ = writeln!(m, "wall_time_seconds = {:.3}", self.clock.elapsed().as_secs_f64());
        let files: Vec<String> = self.written.iter().map(|f| format!("\"{f}\"")).collect();
        let _ = writeln!(m, "outputs = [{}]", files.join(", "));
        self.write("manifest.toml", &m)?;
        println!("wrote {} files to {}", self.written.len(), self.out.display());
        Ok(())
    }

    fn mc(mut self) -> Result<()> {
        let params = self.mc_params()?;
        let tally = run_transport(&self.cfg.scene, &self.cfg.medium, &params)?;
        let est = c12_from_tally(&tally)?;
        println!("C12 = {} ± {} ({} packets, seed {})", est.value, est.std_error, tally.n_launched, params.seed);
        self.write("tally.txt", &tally.to_text())?;
        self.finish()
    }

    fn diffusion(mut self) -> Result<()> {
        let (h, tol, q) = self.diffusion_settings()?;
        let scene = &self.cfg.scene;
        let coeffs = &self.cfg.medium.coefficients;
        let solve = |field| {
            let mut p = DiffusionProblem::from_scene(scene, coeffs, field, h, q);
            p.solver_tol = tol;
            solve_diffusion(&p)
        };
        let w11 = solve(CorrelationField::Auto)?;
        let w12 = solve(CorrelationField::Cross)?;
        if w12.disconnected {
            eprintln!("warning: excluded regions disconnect the source from the measured boundary");
        }
        let c12 = c12_from_fields(&w11, &w11, &w12, &scene.measured)?;
        println!("C12 = {c12} (h = {h}, residual {:.2e})", w12.residual_norm.max(w11.residual_norm));
        if self.cfg.config.outputs.field_dump {
            self.write("field_w11.txt", &w11.to_text())?;
            self.write("field_w12.txt", &w12.to_text())?;
        }
        self.finish()
    }

    fn curve(&self, engine: EngineKind) -> Result<CorrelationCurve> {
        let (wave, radii) = self.wavefront()?;
        match engine {
            EngineKind::Mc => {
                let params = self.mc_params()?;
                run_sweep(&self.cfg.scene, &radii, wave, &SweepEngine::Mc { medium: &self.cfg.medium, params })
            }
            EngineKind::Diffusion | EngineKind::Both => {
                let (grid_spacing, _, source_level) = self.diffusion_settings()?;
                run_sweep(
                    &self.cfg.scene,
                    &radii,
                    wave,
                    &SweepEngine::Diffusion { coefficients: &self.cfg.medium.coefficients, grid_spacing, source_level },
                )
            }
        }
    }

    fn sweep(mut self) -> Result<()> {
        let kind = self.cfg.config.engine.kind;
        if matches!(kind, EngineKind::Diffusion | EngineKind::Both) {
            let curve = self.curve(EngineKind::Diffusion)?;
            let name = self.cfg.config.outputs.diffusion_csv.clone();
            self.write(&name, &curve.to_csv())?;
        }
        if matches!(kind, EngineKind::Mc | EngineKind::Both) {
            let curve = self.curve(EngineKind::Mc)?;
            let name = self.cfg.config.outputs.mc_csv.clone();
            self.write(&name, &curve.to_csv())?;
        }
        self.finish()
    }

    fn compare(mut self) -> Result<()> {
        let diffusion = self.curve(EngineKind::Diffusion)?;
        let mc = self.curve(EngineKind::Mc)?;
        let rows = compare_curves(&mc, &diffusion, AGREEMENT_REL_TOL)?;
        let mut report = String::from("r,c12_mc,c12_diffusion,tolerance,agrees\n");
        for r in &rows {
            let _ = writeln!(report, "{},{},{},{},{}", r.radius, r.mc, r.diffusion, r.tolerance, r.agrees);
        }
        let agreeing = rows.iter().filter(|r| r.agrees).count();
        println!("engines agree at {agreeing} of {} radii", rows.len());
        let (dn, mn) = (self.cfg.config.outputs.diffusion_csv.clone(), self.cfg.config.outputs.mc_csv.clone());
        self.write(&dn, &diffusion.to_csv())?;
        self.write(&mn, &mc.to_csv())?;
        self.write("agreement.csv", &report)?;
        self.finish()
    }
}
