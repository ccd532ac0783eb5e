//! Command-line front end: solve (train a policy against a PDE), eval-expr
//! (pointwise residual inspection), report (aggregate runs), and sample
//! (dump policy rollouts).

mod files;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sympde_core::autodiff::checkpoint::save_params;
use sympde_core::expr::{parse_prefix_str, CompiledExpr, EvalScratch};
use sympde_core::pde::catalog::{catalog, find_problem};
use sympde_core::pde::energy::interior_residual_expr;
use sympde_core::pde::{parse_problem, PdeProblem};
use sympde_core::policy::{sample_batch, PolicyConfig, SymFormer};
use sympde_core::trainer::{run_curriculum_artifacts, TrainerConfig};

#[derive(Parser)]
#[command(name = "sympde", about = "Discover closed-form PDE solutions by symbolic search", version)]
struct Cli {
    /// Worker threads for candidate evaluation (0 = all cores). Never
    /// affects results, only wall-clock.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProblemArgs {
    /// Catalog problem name.
    #[arg(long, conflicts_with = "problem_file")]
    problem: Option<String>,
    /// Problem definition file.
    #[arg(long)]
    problem_file: Option<PathBuf>,
}

impl ProblemArgs {
    fn load(&self) -> Result<PdeProblem> {
        match (&self.problem, &self.problem_file) {
            (Some(name), None) => find_problem(name).map_err(|_| {
                let names: Vec<String> = catalog().iter().map(|p| p.name.clone()).collect();
                anyhow!("unknown problem `{name}`; catalog: {}", names.join(", "))
            }),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_problem(&text).map_err(|e| anyhow!("{e}"))
            }
            _ => bail!("exactly one of --problem or --problem-file is required"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy on a problem and write result, history, memory, and
    /// checkpoint files to the output directory.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
        /// Maximum expression tree depth.
        #[arg(long, default_value_t = 7)]
        d_max: usize,
        /// Per-stage epoch cap (overrides the default 200-epoch advance).
        #[arg(long)]
        epochs_cap: Option<usize>,
        /// Restrict the run to a single curriculum stage.
        #[arg(long)]
        stage: Option<u8>,
    },
    /// Evaluate an expression on a problem: value, interior PDE residual,
    /// and error against the analytic solution per point.
    EvalExpr {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Prefix expression, e.g. "* * sin x cos y exp * -2.0 t".
        #[arg(long)]
        expr: String,
        /// Point like "x=0.5,y=0.3,t=0.2"; repeatable. Missing coordinates
        /// default to domain midpoints (kappa to 1).
        #[arg(long = "point")]
        points: Vec<String>,
        /// Additionally evaluate at this many random points.
        #[arg(long, default_value_t = 0)]
        random_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate MSE and symbolic-recovery rate across run directories.
    Report {
        /// Run directories containing result files.
        dirs: Vec<PathBuf>,
    },
    /// Sample rollouts from a freshly initialized policy.
    Sample {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        d_max: usize,
        /// Curriculum stage whose vocabulary view to sample under.
        #[arg(long, default_value_t = 3)]
        stage: u8,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.workers > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let run = || -> Result<()> {
        match cli.command {
            Command::Solve { ref problem, seed, ref out, d_max, epochs_cap, stage } => {
                solve(problem, seed, out, d_max, epochs_cap, stage)
            }
            Command::EvalExpr { ref problem, ref expr, ref points, random_points, seed } => {
                eval_expr(problem, expr, points, random_points, seed)
            }
            Command::Report { ref dirs } => report(dirs),
            Command::Sample { ref problem, n, seed, d_max, stage } => {
                sample(problem, n, seed, d_max, stage)
            }
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Usage-shaped failures (bad selection/arguments) exit 2,
            // runtime failures 3.
            if e.to_string().starts_with("unknown problem")
                || e.to_string().starts_with("exactly one of")
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn solve(
    problem_args: &ProblemArgs,
    seed: u64,
    out: &Path,
    d_max: usize,
    epochs_cap: Option<usize>,
    stage: Option<u8>,
) -> Result<()> {
    let problem = problem_args.load()?;
    fs::create_dir_all(out)?;

    let policy_cfg = PolicyConfig { d_max, ..PolicyConfig::default() };
    let mut cfg = TrainerConfig { seed, ..TrainerConfig::default() };
    if let Some(cap) = epochs_cap {
        cfg.stage_advance_epochs = cap;
        cfg.stage_max_epochs = cfg.stage_max_epochs.max(cap);
    }

    // History streams to disk row by row so an interrupted run keeps it.
    let mut history = fs::File::create(out.join(files::HISTORY_FILE))?;
    writeln!(history, "{}", files::HISTORY_HEADER)?;
    let started = Instant::now();
    let mut sink = |r: &sympde_core::trainer::EpochRecord| {
        let _ = writeln!(history, "{}", files::history_row(r));
        let _ = history.flush();
    };
    let (result, policy, memory) =
        run_curriculum_artifacts(&problem, policy_cfg, &cfg, stage, &mut sink)?;
    drop(history);
    let wall = started.elapsed();

    fs::write(out.join(files::RESULT_FILE), files::render_result(&problem, &result)?)?;
    fs::write(out.join(files::MEMORY_FILE), files::render_memory(&problem, &memory)?)?;
    let mut ckpt = fs::File::create(out.join(files::CHECKPOINT_FILE))?;
    save_params(&mut ckpt, &policy.params)?;
    files::validate_expressions(&problem, out)?;

    match &result.best {
        Some(best) => println!(
            "{}: reward {:.6} mse {:.3e} srr {} in {:.1?} ({} epochs)\n  {}",
            result.problem,
            best.reward,
            best.mse,
            best.srr,
            wall,
            result.history.len(),
            best.tree.render_infix(&problem.vocab)?,
        ),
        None => println!("{}: no candidate survived ({:.1?})", result.problem, wall),
    }
    Ok(())
}

fn parse_point(spec: &str, problem: &PdeProblem) -> Result<Vec<f64>> {
    let layout = problem.point_layout();
    let mut point: Vec<f64> = layout
        .iter()
        .enumerate()
        .map(|(i, &var)| {
            if i < problem.spatial_dim() {
                let (lo, hi) = problem.domain[i];
                (lo + hi) / 2.0
            } else if var == "t" {
                problem.t_max / 2.0
            } else {
                1.0
            }
        })
        .collect();
    for part in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (name, value) = part
            .split_once('=')
            .with_context(|| format!("bad point component `{part}` (want var=value)"))?;
        let idx = layout
            .iter()
            .position(|v| *v == name.trim())
            .with_context(|| format!("`{}` is not a variable of {}", name.trim(), problem.name))?;
        point[idx] = value.trim().parse().with_context(|| format!("bad value in `{part}`"))?;
    }
    Ok(point)
}

fn eval_expr(
    problem_args: &ProblemArgs,
    expr_text: &str,
    point_specs: &[String],
    random_points: usize,
    seed: u64,
) -> Result<()> {
    let problem = problem_args.load()?;
    let tree = parse_prefix_str(&problem.vocab, expr_text).map_err(|e| anyhow!("{e}"))?;
    let u = tree.to_expr(&problem.vocab)?;
    let layout = problem.point_layout();

    let mut points: Vec<Vec<f64>> = point_specs
        .iter()
        .map(|s| parse_point(s, &problem))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_points {
        let mut p = Vec::with_capacity(layout.len());
        for &(lo, hi) in &problem.domain {
            p.push(rng.gen_range(lo..hi));
        }
        if problem.time_dependent {
            p.push(rng.gen_range(0.0..problem.t_max));
        }
        if let Some((lo, hi)) = problem.kappa_range {
            p.push(rng.gen_range(lo..hi));
        }
        points.push(p);
    }
    if points.is_empty() {
        points.push(parse_point("", &problem)?);
    }

    let value = CompiledExpr::compile(&u, &layout)?;
    let residual = CompiledExpr::compile(&interior_residual_expr(&problem, &u)?, &layout)?;
    let analytic = problem
        .analytic
        .as_ref()
        .map(|a| CompiledExpr::compile(a, &layout))
        .transpose()?;

    let header: Vec<String> = layout.iter().map(|s| s.to_string()).collect();
    print!("{:>10}", header.join(" "));
    print!("{:>16}{:>16}", "value", "residual");
    if analytic.is_some() {
        print!("{:>16}", "err_vs_exact");
    }
    println!();
    let mut scratch = EvalScratch::default();
    for p in &points {
        let coords: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
        print!("{:>10}", coords.join(" "));
        let v = value.eval(p, &tree.constants, &mut scratch);
        let r = residual.eval(p, &tree.constants, &mut scratch);
        print!("{v:>16.6e}{r:>16.6e}");
        if let Some(a) = &analytic {
            let want = a.eval(p, &[], &mut scratch);
            print!("{:>16.6e}", v - want);
        }
        println!();
    }
    Ok(())
}

fn report(dirs: &[PathBuf]) -> Result<()> {
    use std::collections::BTreeMap;
    // problem -> (seeds, srr hits, best mse)
    let mut rows: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for dir in dirs {
        let path = dir.join(files::RESULT_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        let summary = match files::parse_result(&text) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        let entry = rows.entry(summary.problem.clone()).or_insert((0, 0, f64::INFINITY));
        entry.0 += 1;
        entry.1 += usize::from(summary.srr);
        if summary.mse < entry.2 {
            entry.2 = summary.mse;
        }
    }
    println!("{:<24}{:>8}{:>14}{:>8}", "problem", "runs", "mse(best)", "srr");
    for (problem, (runs, srr_hits, mse)) in rows {
        let pct = 100.0 * srr_hits as f64 / runs as f64;
        println!("{problem:<24}{runs:>8}{mse:>14.3e}{pct:>7.0}%");
    }
    Ok(())
}

fn sample(
    problem_args: &ProblemArgs,
    n: usize,
    seed: u64,
    d_max: usize,
    stage: u8,
) -> Result<()> {
    let problem = problem_args.load()?;
    let policy_cfg = PolicyConfig { d_max, ..PolicyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = SymFormer::new(policy_cfg, problem.vocab.clone(), &mut rng)?;
    let allowed = problem.vocab.stage_mask(stage);
    let rollouts = sample_batch(&policy, n, &allowed, seed)?;
    for r in rollouts {
        println!(
            "depth {} logp {:+.3}  {}",
            r.depth,
            r.total_log_prob(),
            r.tree.render_prefix_inline(&problem.vocab)
        );
    }
    Ok(())
}
