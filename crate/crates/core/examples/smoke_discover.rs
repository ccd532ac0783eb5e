//! Quick manual check: discover exp(x)+exp(y) for the exponential Poisson
//! problem with a restricted vocabulary, printing per-epoch progress.

use std::time::Instant;

use sympde_core::pde::parse_problem;
use sympde_core::pde::metrics::srr_check;
use sympde_core::policy::PolicyConfig;
use sympde_core::trainer::{run_curriculum_with, TrainerConfig};

fn main() {
    let problem = parse_problem(
        "name poisson2d_exp\nspatial x y\ntime false\nparam none\n\
         residual - - neg u_xx u_yy neg + exp x exp y\nic none\n\
         bc dirichlet_analytic\nanalytic + exp x exp y\nhj none\n\
         binary + - *\nunary exp\n",
    )
    .unwrap();

    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let policy_cfg = PolicyConfig { d_max: 4, ..PolicyConfig::default() };
    let cfg = TrainerConfig { seed, stage_advance_epochs: 300, ..TrainerConfig::default() };

    let start = Instant::now();
    let mut last = Instant::now();
    let result = run_curriculum_with(&problem, policy_cfg, &cfg, &mut |r| {
        println!(
            "epoch {:3} stage {} best {:.4} mean {:.4} ent {:.3} lr {:.2e} ({:?})",
            r.epoch,
            r.stage,
            r.best_reward,
            r.mean_reward,
            r.mean_entropy,
            r.lr,
            last.elapsed()
        );
        last = Instant::now();
    })
    .unwrap();

    println!("total {:?}", start.elapsed());
    if let Some(best) = &result.best {
        println!(
            "best: {}  reward {:.4} mse {:.3e} srr {}",
            best.tree.render_prefix_inline(&problem.vocab),
            best.reward,
            best.mse,
            best.srr
        );
        println!("srr re-check: {}", srr_check(&problem, &best.tree).unwrap());
    } else {
        println!("no candidate survived");
    }
}
