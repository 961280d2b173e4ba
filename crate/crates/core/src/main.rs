//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gnb_sleep::config::{config_hash, hash_hex, load_config, parse_config, ExperimentKind, LoadedConfig, PolicyKind};
use gnb_sleep::experiment::{evaluate_point, run_experiment, solve_optimal, ExperimentReport, RunContext};
use gnb_sleep::index::{build_index_table, DecoupledModel};
use gnb_sleep::joint_mdp::{solver_size, JointStateIndex};
use gnb_sleep::report::{fmt_num, report_summary, write_csv_atomic};
use gnb_sleep::{Cluster, Error, Result};

const BUNDLED_CONFIG: &str = include_str!("../configs/standard.cfg");

#[derive(Parser)]
#[command(name = "gnb-sleep", version, about = "Sleep control policies for clusters of 5G cells")]
struct Cli {
    /// Master seed for simulations (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Segments per simulation (overrides the config file)
    #[arg(long, global = true)]
    segments: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for sweep points; defaults to the number of CPUs
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file; the standard four-cell setup when omitted
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override the number of cells allowed to sleep
    #[arg(long, short)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the joint MDP and report the optimal gain
    Solve {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Directory for cached solutions
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Also write the dense value and policy tables (small instances only)
        #[arg(long)]
        tables: bool,
    },
    /// Simulate policies on shared arrival streams
    Simulate {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Comma-separated policy names
        #[arg(long, value_delimiter = ',', default_value = "optimal,index,greedy,uniform,round-robin")]
        policies: Vec<PolicyKind>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Compute the index table of one cell
    IndexTable {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value_t = 0)]
        cell: usize,
    },
    /// Run the experiment described by the config
    Experiment {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Override the experiment kind
        #[arg(long)]
        kind: Option<ExperimentKind>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Check a config file and print its canonical form and hash
    Validate {
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

fn load(cli: &Cli, arg: &ConfigArg) -> Result<LoadedConfig> {
    let mut cfg = match &arg.config {
        Some(p) => load_config(p)?,
        None => parse_config(BUNDLED_CONFIG)?,
    };
    if let Some(k) = arg.k {
        cfg.cluster = cfg.cluster.with_k(k)?;
    }
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(s) = cli.segments {
        if s == 0 {
            return Err(Error::InvalidParameter {
                field: "segments".into(),
                reason: "must be >= 1".into(),
            });
        }
        cfg.experiment.segments = s;
    }
    Ok(cfg)
}

fn context(cli: &Cli, cache_dir: &Option<PathBuf>) -> Result<RunContext> {
    std::fs::create_dir_all(&cli.out_dir)?;
    let mut ctx = RunContext::new(&cli.out_dir);
    ctx.cache_dir = cache_dir.clone();
    Ok(ctx)
}

fn finish(rep: &ExperimentReport) -> Result<()> {
    print!("{}", report_summary(rep));
    rep.consistency()
}

fn solve(cli: &Cli, cfg: &LoadedConfig, cache_dir: &Option<PathBuf>, tables: bool) -> Result<()> {
    let ctx = context(cli, cache_dir)?;
    let cl = Cluster::new(cfg.cluster.clone())?;
    let size = solver_size(cl.m(), cl.k(), cl.n_th());
    let solved = solve_optimal(&cl, &ctx)?;
    println!("config hash   {}", hash_hex(&config_hash(cl.config())));
    println!("solver size   {size}");
    println!("sweeps        {}", solved.sweeps());
    println!("residual      {:e}", solved.residual());
    println!("gain          {}", fmt_num(solved.gain()));
    if tables {
        let (h, policy) = solved.tables(ctx.rvia.budget)?;
        let idx = JointStateIndex::new(cl.m(), cl.n_th());
        let mut header: Vec<String> = Vec::new();
        for i in 0..cl.m() {
            header.push(format!("prev_on_{i}"));
            header.push(format!("n_{i}"));
        }
        header.extend(["h".into(), "action".into()]);
        let rows: Vec<Vec<String>> = h
            .iter()
            .zip(&policy)
            .enumerate()
            .map(|(s, (hv, code))| {
                let mut r = Vec::with_capacity(header.len());
                for c in idx.decode(s) {
                    r.push((c.prev_on as u8).to_string());
                    r.push(c.residual_users.to_string());
                }
                r.push(fmt_num(*hv));
                r.push(format!("{code:0w$b}", w = cl.m()));
                r
            })
            .collect();
        let path = cli.out_dir.join("solve_tables.csv");
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv_atomic(&path, &hdr, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(cli: &Cli, cfg: &LoadedConfig, policies: &[PolicyKind], cache_dir: &Option<PathBuf>) -> Result<()> {
    let ctx = context(cli, cache_dir)?;
    let cl = Cluster::new(cfg.cluster.clone())?;
    let e = &cfg.experiment;
    let pt = evaluate_point(&cl.k().to_string(), cl.k() as f64, &cl, policies, None, e.segments, e.seed, &ctx)?;
    let rows: Vec<Vec<String>> = pt
        .outcomes
        .iter()
        .map(|o| {
            let r = o.result.as_ref();
            vec![
                o.policy.name().to_string(),
                fmt_num(r.map_or(f64::NAN, |r| r.avg_cost)),
                fmt_num(r.map_or(f64::NAN, |r| r.ci_halfwidth)),
                fmt_num(pt.lower_bound),
                fmt_num(o.delta),
            ]
        })
        .collect();
    let path = cli.out_dir.join("simulate.csv");
    write_csv_atomic(&path, &["policy", "avg_cost", "ci_halfwidth", "lower_bound", "delta"], &rows)?;
    let rep = ExperimentReport {
        kind: ExperimentKind::KSweep,
        checks: vec![],
        files: vec![path],
        points: vec![pt],
    };
    print!("{}", report_summary(&rep).replacen("experiment: k-sweep", "simulate", 1));
    Ok(())
}

fn index_table(cli: &Cli, cfg: &LoadedConfig, cell: usize) -> Result<()> {
    let cl = Cluster::new(cfg.cluster.clone())?;
    if cell >= cl.m() {
        return Err(Error::InvalidParameter {
            field: "cell".into(),
            reason: format!("cell {cell} does not exist (M = {})", cl.m()),
        });
    }
    let ctx = context(cli, &None)?;
    let table = build_index_table(&DecoupledModel::from_cluster(&cl, cell), &ctx.index)?;
    let path: PathBuf = Path::new(&cli.out_dir).join(format!("index_table_cell{cell}.csv"));
    table.write_csv(&path)?;
    println!("wrote {} ({} states)", path.display(), table.values().len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Domain(e.to_string()))?;
    }
    match &cli.cmd {
        Command::Solve { cfg, cache_dir, tables } => solve(cli, &load(cli, cfg)?, cache_dir, *tables),
        Command::Simulate { cfg, policies, cache_dir } => simulate(cli, &load(cli, cfg)?, policies, cache_dir),
        Command::IndexTable { cfg, cell } => index_table(cli, &load(cli, cfg)?, *cell),
        Command::Experiment { cfg, kind, cache_dir } => {
            let mut c = load(cli, cfg)?;
            if let Some(k) = kind {
                c.experiment.kind = *k;
            }
            let rep = run_experiment(&c, &context(cli, cache_dir)?)?;
            finish(&rep)
        }
        Command::Validate { cfg } => {
            let c = load(cli, cfg)?;
            print!("{}", gnb_sleep::config::canonical_cluster(&c.cluster));
            println!("n_th_auto={}", c.n_th_auto);
            println!("experiment={}", c.experiment.kind.name());
            println!("hash={}", hash_hex(&config_hash(&c.cluster)));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
