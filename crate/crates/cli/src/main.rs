use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lerw_core::harmonic::{DriftConfig, DriftContext};
use lerw_core::harness::experiments::{Setup, EDGE_SUBDIVISION};
use lerw_core::harness::{configure_threads, default_domain, run_experiment, sample_seed, ExperimentConfig, ExperimentKind};
use lerw_core::lerw_continuous::{partition_function, sample_driver, solve_driving_sde, LerwConfig};
use lerw_core::lerw_discrete::{extract_driving_with, sample_lerw, ConditionedWalk, ExtractOptions};
use lerw_core::loewner::driving_to_curve;
use lerw_core::{build_grid, DomainSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lerw", version, about = "Continuous and discrete loop-erased random walk from an interior point")]
struct Cli {
    /// JSON configuration (an experiment config for `experiment`, a solver config for `solve-continuous`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DomainArgs {
    /// Domain file; the unit disk with target 1/2 when absent.
    #[arg(long)]
    domain: Option<PathBuf>,
}

impl DomainArgs {
    fn load(&self) -> Result<DomainSpec> {
        Ok(match &self.domain {
            Some(p) => DomainSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => default_domain(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the lattice approximation and write its vertices.
    Grid {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        delta: f64,
    },
    /// Sample discrete LERWs from 0 to the target.
    SampleDiscrete {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Solve the driving equation for one Brownian sample and trace the curve.
    SolveContinuous {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Start time; required on the sphere, fitted otherwise.
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Sample one discrete LERW and extract its driving function.
    ExtractDriving {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        delta: f64,
        /// Base capacity.
        #[arg(long, default_value_t = f64::NEG_INFINITY, allow_hyphen_values = true)]
        b: f64,
        /// Pieces each lattice edge is cut into before welding.
        #[arg(long, default_value_t = EDGE_SUBDIVISION)]
        subdivide: usize,
    },
    /// Run an experiment; exits non-zero unless every check passes.
    Experiment {
        /// drift_moments | martingale_poisson | martingale_partition | convergence_driving |
        /// reversibility | conformal_invariance | loewner_roundtrip | green_validation
        kind: String,
        /// Overrides the sample count.
        #[arg(long)]
        n: Option<usize>,
    },
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let d = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        configure_threads(n)?;
    }
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::Grid { domain, delta } => {
            let g = build_grid(&domain.load()?, delta)?;
            let dir = out_dir(&cli.out)?;
            let mut w = create(&dir, "vertices.csv")?;
            use std::io::Write;
            writeln!(w, "index,x,y")?;
            for v in 0..g.n_interior() as u32 {
                let z = g.pos(v);
                writeln!(w, "{v},{},{}", z.re, z.im)?;
            }
            let (targets, _) = g.target_sets();
            println!(
                "{}",
                json!({"delta": delta, "interior": g.n_interior(), "boundary": g.n_boundary(), "origin": g.origin, "target_vertices": targets.len()})
            );
        }
        Command::SampleDiscrete { domain, delta, count } => {
            let g = build_grid(&domain.load()?, delta)?;
            let walk = ConditionedWalk::for_grid(&g)?;
            let dir = out_dir(&cli.out)?;
            let mut lens = Vec::new();
            for i in 0..count {
                let p = sample_lerw(&g, &walk, sample_seed(seed, i as u64))?;
                p.write_csv(&g, create(&dir, &format!("lerw_{i}.csv"))?)?;
                lens.push(p.len());
            }
            println!("{}", json!({"samples": count, "lengths": lens}));
        }
        Command::SolveContinuous { domain, kappa, lambda, dt, t_start, t_end } => {
            let mut cfg: LerwConfig = match &cli.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => LerwConfig::default(),
            };
            cfg.kappa = kappa.unwrap_or(cfg.kappa);
            cfg.lambda = lambda.unwrap_or(cfg.lambda);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.t_start = t_start.or(cfg.t_start);
            cfg.t_end = t_end.unwrap_or(cfg.t_end);
            let d = domain.load()?;
            let (ctx, fit) = if d.is_sphere() {
                (DriftContext::new(&d, DriftConfig::for_domain(&default_domain(), 1.0 / 64.0), &[])?, None)
            } else {
                let s = Setup::new(d, &[], cfg.lambda)?;
                (s.ctx, Some(s.fit))
            };
            let Some(start) = cfg.t_start.or(fit.map(|f| f.t_start)) else {
                bail!("the sphere needs --t-start");
            };
            let driver = sample_driver(cfg.kappa, start, cfg.t_end, cfg.dt, seed)?;
            let run = solve_driving_sde(&ctx, &cfg, &driver, fit.as_ref())?;
            let dir = out_dir(&cli.out)?;
            run.xi.write_csv(create(&dir, "driving.csv")?)?;
            driving_to_curve(&run.xi)?.write_csv(create(&dir, "curve.csv")?)?;
            let m = partition_function(&run, cfg.lambda / cfg.kappa)?;
            println!(
                "{}",
                json!({
                    "t_start": start,
                    "t_stop": run.xi.t_end(),
                    "stop_reason": format!("{:?}", run.stop_reason),
                    "truncation_bound": run.truncation_bound,
                    "m_final": m.m_values.last(),
                })
            );
        }
        Command::ExtractDriving { domain, delta, b, subdivide } => {
            let g = build_grid(&domain.load()?, delta)?;
            let walk = ConditionedWalk::for_grid(&g)?;
            let p = sample_lerw(&g, &walk, seed)?;
            let opts = ExtractOptions { subdivide, ..Default::default() };
            let dd = extract_driving_with(&g, &p, b, &opts)?;
            let dir = out_dir(&cli.out)?;
            p.write_csv(&g, create(&dir, "lerw.csv")?)?;
            dd.write_csv(create(&dir, "driving.csv")?)?;
            println!("{}", json!({"vertices": p.len(), "first_vertex": dd.first_vertex, "capacity_end": dd.capacities.last()}));
        }
        Command::Experiment { kind, n } => {
            let kind = ExperimentKind::parse(&kind)?;
            let mut cfg = match &cli.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::for_kind(kind),
            };
            cfg.kind = kind;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            cfg.out_dir = cli.out.clone().or(cfg.out_dir);
            let report = run_experiment(&cfg)?;
            print!("{}", report.markdown());
            if !report.passed() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
