//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measurements (run with `cargo test --test acceptance -- --nocapture`
//! to see them).

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sympde_core::autodiff::Tape;
use sympde_core::constopt::{optimize_constants, ConstOptConfig};
use sympde_core::expr::{parse_prefix_str, TokenId};
use sympde_core::grammar::valid_next_tokens;
use sympde_core::pde::catalog::find_problem;
use sympde_core::pde::energy::{energy, reward, sample_collocation};
use sympde_core::pde::metrics::srr_check;
use sympde_core::pde::{parse_problem, PdeProblem};
use sympde_core::policy::{
    next_token_distribution, sample_batch, score_sequence, PolicyConfig, SymFormer,
};
use sympde_core::trainer::{
    depth_weights, imitation_weights, rank_rewards, run_curriculum_artifacts,
    stage_should_advance, TopKMemory, TrainerConfig,
};
use sympde_core::Vocabulary;

fn pass(name: &str, detail: String) {
    println!("[PASS] {name}: {detail}");
}

/// Criterion 1: energies of the registered analytic solutions vanish on
/// 10^3 random points per problem, within 1e-16, in under 10 s total.
/// The eikonal oracle samples interior points outside the rest region
/// (r > t), where the implicit characteristic form is exact.
#[test]
fn criterion_1_zero_residual_oracles() {
    let started = Instant::now();
    let names = [
        "heat2d",
        "advection2d",
        "poisson2d_exp",
        "burgers2d",
        "eikonal2d",
        "param_heat2d_sincos",
        "param_advection2d_sin",
    ];
    let mut worst: f64 = 0.0;
    for name in names {
        let mut p = find_problem(name).unwrap();
        p.n_pde = 1000;
        p.n_bc = 1000;
        p.n_ic = 1000;
        let stage = p.stage_count();
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
        let mut colloc = sample_collocation(&p, stage, &mut rng);
        if name == "eikonal2d" {
            colloc.interior.retain(|pt| (pt[0] * pt[0] + pt[1] * pt[1]).sqrt() > pt[2]);
            while colloc.interior.len() < 1000 {
                let extra = sample_collocation(&p, stage, &mut rng);
                for pt in extra.interior {
                    if (pt[0] * pt[0] + pt[1] * pt[1]).sqrt() > pt[2] {
                        colloc.interior.push(pt);
                        if colloc.interior.len() == 1000 {
                            break;
                        }
                    }
                }
            }
        }
        let u = p.analytic.clone().unwrap();
        let report = energy(&p, &u, &[], stage, &colloc).unwrap();
        assert!(report.finite, "{name} hit the non-finite sentinel");
        assert!(report.e < 1e-16, "{name}: energy {} >= 1e-16", report.e);
        worst = worst.max(report.e);
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(
        "criterion 1 (zero-residual oracles)",
        format!("7 problems, worst energy {worst:.2e}, {elapsed:?}"),
    );
}

/// Criterion 2: the printed benchmark predictions for Poisson and Burgers
/// pass the symbolic-recovery check against their analytic solutions; five
/// mismatched pairs fail. Under 1 s.
#[test]
fn criterion_2_srr_fixture_suite() {
    let started = Instant::now();

    let poisson = find_problem("poisson2d").unwrap();
    let pred =
        parse_prefix_str(&poisson.vocab, "- * square square y 1.2 neg square square x").unwrap();
    assert!(srr_check(&poisson, &pred).unwrap(), "poisson prediction must recover");

    let burgers = find_problem("burgers2d").unwrap();
    let pred =
        parse_prefix_str(&burgers.vocab, "+ abs y - + -0.0 abs x * -0.2436 / t 0.2436").unwrap();
    assert!(srr_check(&burgers, &pred).unwrap(), "burgers prediction must recover");

    // Five mismatched pairs: wrong structure, missing term, the printed
    // heat prediction (kappa factor and 0.99 constant) against the
    // parametric analytic, a sum/product confusion, and a matching skeleton
    // whose constant misses numerically (MSE clause).
    let heat = find_problem("heat2d").unwrap();
    let pexp = find_problem("poisson2d_exp").unwrap();
    let pheat = find_problem("param_heat2d_sincos").unwrap();
    let cases: Vec<(&PdeProblem, &str)> = vec![
        (&poisson, "square square x"),
        (&burgers, "+ abs x abs y"),
        (&pheat, "* sin x * exp * -2.0 * k t * 0.99 cos y"),
        (&pexp, "* exp x exp y"),
        (&heat, "* * sin x cos y exp * -3.0 t"),
    ];
    for (problem, text) in cases {
        let tree = parse_prefix_str(&problem.vocab, text).unwrap();
        assert!(
            !srr_check(problem, &tree).unwrap(),
            "{}: `{text}` must not recover",
            problem.name
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    pass("criterion 2 (srr fixtures)", format!("2 recoveries + 5 rejections, {elapsed:?}"));
}

/// Criterion 3: 10^4 rollouts at each d_max in {7, 10} all parse complete,
/// respect the depth bound, and never select a masked token. Under 2 min.
#[test]
fn criterion_3_grammar_soundness() {
    let started = Instant::now();
    let vocab = Vocabulary::standard(&["x", "y", "t"], Some("t"), None);
    for d_max in [7usize, 10] {
        let cfg = PolicyConfig { d_max, ..PolicyConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0x503D + d_max as u64);
        let policy = SymFormer::new(cfg, vocab.clone(), &mut rng).unwrap();
        let allowed = vocab.stage_mask(3);
        let rollouts = sample_batch(&policy, 10_000, &allowed, 0xD_u64 + d_max as u64).unwrap();
        assert_eq!(rollouts.len(), 10_000);
        for r in &rollouts {
            // Completeness + depth.
            match sympde_core::expr::parse_prefix(&vocab, &r.tree.tokens).unwrap() {
                sympde_core::expr::ParseOutcome::Complete(_) => {}
                _ => panic!("incomplete rollout at d_max {d_max}"),
            }
            assert!(r.tree.depth(&vocab) <= d_max, "depth exceeded at d_max {d_max}");
            // Support containment: replay the grammar and check every
            // chosen token against its step's valid set.
            let mut ast = sympde_core::grammar::PartialAst::new();
            for (k, &tok) in r.tree.tokens.iter().enumerate() {
                let mask =
                    valid_next_tokens(&ast, &r.tree.tokens[..k], &vocab, &allowed, d_max);
                assert!(mask[tok.0], "masked token selected at step {k}");
                ast.push(vocab.arity(tok)).unwrap();
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    pass("criterion 3 (grammar soundness)", format!("2x10^4 rollouts clean, {elapsed:?}"));
}

/// Criterion 4: finite-difference integrity of the network gradients (10
/// seeds) and of the symbolic constant gradients. Under 1 min.
#[test]
fn criterion_4_gradient_integrity() {
    let started = Instant::now();

    // d(sequence log-prob)/d(params) vs central differences, 10 seeds.
    let vocab = Vocabulary::standard(&["x", "y"], None, None);
    for seed in 0..10u64 {
        let cfg = PolicyConfig {
            d_model: 16,
            ffn_hidden: 32,
            layers: 2,
            heads: 4,
            d_max: 4,
            temperature: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = SymFormer::new(cfg, vocab.clone(), &mut rng).unwrap();
        let allowed = vocab.stage_mask(3);
        let rollout = &sample_batch(&policy, 1, &allowed, seed ^ 0xF00D).unwrap()[0];

        let mut tape = Tape::new();
        let params = policy.insert_params(&mut tape, true);
        let score =
            score_sequence(&policy, &mut tape, &params, &rollout.tree.tokens, &allowed).unwrap();
        tape.backward(score.log_prob).unwrap();

        // Probe a handful of parameter coordinates per seed.
        let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBEEF);
        for _ in 0..6 {
            let ti = probe_rng.gen_range(0..policy.params.len());
            let n = policy.params.tensors[ti].array.numel();
            let j = probe_rng.gen_range(0..n);
            let analytic = tape.grad(params.ordered[ti]).unwrap()[j];
            let h = 1e-5;
            let mut value_with = |delta: f64| -> f64 {
                let orig = policy.params.tensors[ti].array.data()[j];
                policy.params.tensors[ti].array.data_mut()[j] = orig + delta;
                let mut t2 = Tape::new();
                let p2 = policy.insert_params(&mut t2, false);
                let s2 = score_sequence(&policy, &mut t2, &p2, &rollout.tree.tokens, &allowed)
                    .unwrap();
                let v = t2.value(s2.log_prob).data()[0];
                policy.params.tensors[ti].array.data_mut()[j] = orig;
                v
            };
            let fd = (value_with(h) - value_with(-h)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "seed {seed} tensor {ti} elem {j}: {analytic} vs {fd}"
            );
        }
    }

    // Symbolic dE/dc vs finite differences on random constant-bearing trees.
    let p = find_problem("heat2d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..10 {
        let c0: Vec<f64> = vec![rng.gen_range(0.5..1.5), rng.gen_range(-1.5..-0.5)];
        let mut tree =
            parse_prefix_str(&p.vocab, "+ * const * sin x cos y * const exp neg t").unwrap();
        tree.constants = c0.clone();
        let u = tree.to_expr(&p.vocab).unwrap();
        let mut crng = ChaCha8Rng::seed_from_u64(trial);
        let colloc = sample_collocation(&p, 2, &mut crng);
        let e_at = |c: &[f64]| energy(&p, &u, c, 2, &colloc).unwrap().e;
        // The optimizer's first gradient equals dE/dc at the init: recover
        // it through one zero-lr probe via finite difference of its path is
        // convoluted; instead use the exposed symbolic machinery directly.
        let grad = sympde_core::constopt::stage_energy_gradient(&p, &tree, 2, &colloc).unwrap();
        let h = 1e-5;
        for k in 0..c0.len() {
            let mut cp = c0.clone();
            let mut cm = c0.clone();
            cp[k] += h;
            cm[k] -= h;
            let fd = (e_at(&cp) - e_at(&cm)) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!(
                (fd - grad[k]).abs() / denom < 1e-5,
                "trial {trial} slot {k}: fd {fd} vs {g}",
                g = grad[k]
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass("criterion 4 (gradient integrity)", format!("10 policy seeds + 10 dE/dc trials, {elapsed:?}"));
}

/// Criterion 5: formula plug-ins and the near-optimal recovery bound by
/// enumeration over random candidate pools.
#[test]
fn criterion_5_formula_plugins() {
    assert_eq!(reward(0.0), 1.0);
    assert_eq!(reward(1.0), 0.5);

    let r = rank_rewards(&[0.1, 0.5, 0.2, 0.9]);
    for (got, want) in r.iter().zip([1.0, 1.0 / 3.0, 2.0 / 3.0, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }

    assert_eq!(depth_weights(&[3])[0], 0.25);

    let alpha = imitation_weights(&[1.0, 0.9], 0.1);
    assert!((alpha[0] - 0.731).abs() < 1e-3);
    assert!((alpha[1] - 0.269).abs() < 1e-3);

    // Near-optimal recovery: mean reward >= 1 - eps implies some member has
    // E <= eps^2/(1-eps)^2. Enumerate 100 random pools per eps.
    let mut rng = ChaCha8Rng::seed_from_u64(0xD4);
    for eps in [0.1, 0.3, 0.5] {
        let bound = eps * eps / ((1.0 - eps) * (1.0 - eps));
        let mut pools = 0;
        while pools < 100 {
            let m = rng.gen_range(2..=20);
            let rewards: Vec<f64> =
                (0..m).map(|_| rng.gen_range(f64::max(1.0 - 2.0 * eps, 0.05)..1.0)).collect();
            let mean = rewards.iter().sum::<f64>() / m as f64;
            if mean < 1.0 - eps {
                continue; // premise not satisfied; draw another pool
            }
            pools += 1;
            let energies: Vec<f64> =
                rewards.iter().map(|r| ((1.0 - r) / r) * ((1.0 - r) / r)).collect();
            assert!(
                energies.iter().any(|&e| e <= bound + 1e-12),
                "eps {eps}: pool {energies:?} violates the bound {bound}"
            );
        }
    }
    pass("criterion 5 (formula plug-ins)", "reward/rank/depth/imitation + recovery bound".into());
}

/// Criterion 6: memory invariants after 10^3 randomized inserts and
/// refinements, plus the behavioral-duplicate rejection case.
#[test]
fn criterion_6_memory_invariants() {
    let p = find_problem("heat2d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6E6);
    let points: Vec<Vec<f64>> = (0..64)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    let mut mem = TopKMemory::new(10, 3, 1e-3, points);

    // The canonical behavioral-duplicate case.
    let a = parse_prefix_str(&p.vocab, "x").unwrap();
    assert!(mem.insert(&p, &p.vocab, a, 0.5, 1));
    let b = parse_prefix_str(&p.vocab, "+ * 1.0 x - y y").unwrap();
    assert!(!mem.insert(&p, &p.vocab, b, 0.4, 1), "behavioral duplicate must be rejected");

    // Randomized churn: inserts interleaved with refinements.
    let leaves = ["x", "y", "t"];
    let uns = ["sin", "cos", "exp", "abs", "square", "sqrt"];
    let bins = ["+", "-", "*"];
    for step in 0..1000 {
        let l = leaves[rng.gen_range(0..3)];
        let text = match rng.gen_range(0..4) {
            0 => format!("* {:.3} {l}", rng.gen_range(-40.0..40.0)),
            1 => format!(
                "* {:.3} {} * {:.2} {l}",
                rng.gen_range(-40.0..40.0),
                uns[rng.gen_range(0..uns.len())],
                rng.gen_range(0.5..9.0)
            ),
            2 => format!(
                "{} * {:.3} {l} {} {}",
                bins[rng.gen_range(0..bins.len())],
                rng.gen_range(-40.0..40.0),
                uns[rng.gen_range(0..uns.len())],
                leaves[rng.gen_range(0..3)]
            ),
            _ => format!("+ const * {:.3} square {l}", rng.gen_range(-40.0..40.0)),
        };
        let tree = parse_prefix_str(&p.vocab, &text).unwrap();
        mem.insert(&p, &p.vocab, tree, rng.gen_range(0.0..1.0), 2);
        if step % 100 == 99 {
            sympde_core::constopt::refine_memory(
                &p,
                &mut mem,
                2,
                ConstOptConfig { steps: 20, lr: 0.02 },
                step as u64,
            )
            .unwrap();
            mem.check_invariants().unwrap_or_else(|e| panic!("after refinement: {e}"));
        }
        if step % 61 == 0 {
            mem.check_invariants().unwrap_or_else(|e| panic!("at step {step}: {e}"));
        }
    }
    mem.check_invariants().unwrap();
    assert!(mem.len() <= 10);
    pass("criterion 6 (memory invariants)", format!("10^3 inserts, size {}", mem.len()));
}

/// Criterion 7: the constant-fit oracle c x^2 vs 2 x^2 under the published
/// settings (50 Adam steps at lr 0.02) recovers c within 1e-3.
#[test]
fn criterion_7_constant_fit_oracle() {
    let p = parse_problem(
        "name fit\nspatial x\ntime true\nparam none\nresidual u_t\n\
         ic * 2.0 square x\nbc dirichlet_analytic\nanalytic * 2.0 square x\nhj none\n",
    )
    .unwrap();
    let tree = parse_prefix_str(&p.vocab, "* const square x").unwrap();
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, _) =
            optimize_constants(&p, &tree, 1, ConstOptConfig { steps: 50, lr: 0.02 }, &mut rng)
                .unwrap();
        assert!((c[0] - 2.0).abs() < 1e-3, "seed {seed}: c = {}", c[0]);
    }
    pass("criterion 7 (constant-fit oracle)", "c -> 2 within 1e-3 in 50 steps".into());
}

/// Criterion 8: with tied terminal embeddings, next-token distributions for
/// the structurally isomorphic prefixes (+ x) and (+ y) are identical to
/// machine precision.
#[test]
fn criterion_8_structural_equivariance() {
    let vocab = Vocabulary::standard(&["x", "y"], None, None);
    let mut rng = ChaCha8Rng::seed_from_u64(0xE9);
    let mut policy = SymFormer::new(PolicyConfig::default(), vocab.clone(), &mut rng).unwrap();

    // Tie the x and y embedding rows.
    let (x, y) = (vocab.lookup("x").unwrap(), vocab.lookup("y").unwrap());
    let d = policy.config.d_model;
    let embed = policy.params.get_mut("embed").unwrap();
    let row: Vec<f64> = embed.array.data()[x.0 * d..(x.0 + 1) * d].to_vec();
    embed.array.data_mut()[y.0 * d..(y.0 + 1) * d].copy_from_slice(&row);

    let allowed = vocab.stage_mask(3);
    let plus = vocab.lookup("+").unwrap();
    let pa = next_token_distribution(&policy, &[plus, x], &allowed).unwrap();
    let pb = next_token_distribution(&policy, &[plus, y], &allowed).unwrap();
    for (a, b) in pa.iter().zip(&pb) {
        assert_eq!(a.to_bits(), b.to_bits(), "distributions differ: {a} vs {b}");
    }
    pass("criterion 8 (structural equivariance)", "(+ x) and (+ y) bit-identical".into());
}

/// Criterion 9: bounded end-to-end discovery. (a) The exponential Poisson
/// problem with vocabulary {+,-,*,exp,x,y,const} at d_max 4 reaches
/// symbolic recovery in at least 3 of 5 seeds within 300 epochs; (b)
/// stage-1-only training on the heat initial condition reaches the stage's
/// success condition (best reward > 0.99, early advance) in at least 3 of 5
/// seeds within 200 epochs. Each run stays under 20 minutes.
#[test]
fn criterion_9_end_to_end_discovery() {
    let run_cap = Duration::from_secs(20 * 60);

    // (a) Exponential Poisson with a restricted vocabulary.
    let poisson = parse_problem(
        "name poisson2d_exp\nspatial x y\ntime false\nparam none\n\
         residual - - neg u_xx u_yy neg + exp x exp y\nic none\n\
         bc dirichlet_analytic\nanalytic + exp x exp y\nhj none\n\
         binary + - *\nunary exp\n",
    )
    .unwrap();
    let mut srr_hits = 0;
    for seed in 0..5u64 {
        let started = Instant::now();
        let policy_cfg = PolicyConfig { d_max: 4, ..PolicyConfig::default() };
        let cfg = TrainerConfig { seed, stage_advance_epochs: 300, ..TrainerConfig::default() };
        let (result, _, _) =
            run_curriculum_artifacts(&poisson, policy_cfg, &cfg, None, &mut |_| {}).unwrap();
        let elapsed = started.elapsed();
        assert!(elapsed < run_cap, "seed {seed} took {elapsed:?}");
        let hit = result.best.as_ref().map(|b| b.srr).unwrap_or(false);
        println!(
            "  poisson2d_exp seed {seed}: epochs {} srr {} ({elapsed:?})",
            result.history.len(),
            hit
        );
        srr_hits += usize::from(hit);
    }
    assert!(srr_hits >= 3, "only {srr_hits}/5 seeds recovered");

    // (b) Stage-1 heat initial-condition discovery.
    let heat = find_problem("heat2d").unwrap();
    let mut ic_hits = 0;
    for seed in 0..5u64 {
        let started = Instant::now();
        let policy_cfg = PolicyConfig { d_max: 4, ..PolicyConfig::default() };
        let cfg = TrainerConfig { seed, stage_advance_epochs: 200, ..TrainerConfig::default() };
        let (result, _, _) =
            run_curriculum_artifacts(&heat, policy_cfg, &cfg, Some(1), &mut |_| {}).unwrap();
        let elapsed = started.elapsed();
        assert!(elapsed < run_cap, "seed {seed} took {elapsed:?}");
        let best = result.history.last().map(|r| r.best_reward).unwrap_or(0.0);
        println!(
            "  heat2d stage-1 seed {seed}: epochs {} best reward {best:.4} ({elapsed:?})",
            result.history.len()
        );
        ic_hits += usize::from(best > 0.99);
    }
    assert!(ic_hits >= 3, "only {ic_hits}/5 stage-1 seeds succeeded");

    pass(
        "criterion 9 (end-to-end discovery)",
        format!("poisson srr {srr_hits}/5, heat stage-1 {ic_hits}/5"),
    );
}

/// Criterion 10: curriculum plumbing — nested stage vocabularies and the
/// stage-advance schedule on a stubbed reward sequence (threshold 0.99
/// immediate, fallback 200, hard cap 500).
#[test]
fn criterion_10_curriculum_plumbing() {
    // Vocabularies nest with stable indices.
    let p = find_problem("param_heat2d").unwrap();
    let (m1, m2, m3) = (p.vocab.stage_mask(1), p.vocab.stage_mask(2), p.vocab.stage_mask(3));
    for i in 0..p.vocab.len() {
        assert!(!m1[i] || m2[i]);
        assert!(!m2[i] || m3[i]);
    }
    let t = p.vocab.lookup("t").unwrap();
    let k = p.vocab.lookup("k").unwrap();
    assert!(!m1[t.0] && m2[t.0] && !m2[k.0] && m3[k.0]);

    // Stubbed reward schedule against the advance rule.
    let cfg = TrainerConfig::default();
    assert!(stage_should_advance(1, 0.995, &cfg), "reward above threshold advances immediately");
    assert!(!stage_should_advance(1, 0.99, &cfg), "threshold is strict");
    assert!(!stage_should_advance(199, 0.5, &cfg));
    assert!(stage_should_advance(200, 0.5, &cfg), "fallback advance at 200 epochs");

    // Hard cap 500 backstops a raised fallback.
    let loose = TrainerConfig { stage_advance_epochs: 10_000, ..TrainerConfig::default() };
    assert!(!stage_should_advance(499, 0.5, &loose));
    assert!(stage_should_advance(500, 0.5, &loose), "hard cap at 500");

    // A stubbed monotone reward trajectory 0.3 + 0.02e strictly exceeds
    // 0.99 at epoch 35 and must advance exactly there.
    let mut advanced_at = None;
    for epoch in 1..=500 {
        let reward = 0.3 + 0.02 * epoch as f64;
        if stage_should_advance(epoch, reward, &cfg) {
            advanced_at = Some(epoch);
            break;
        }
    }
    assert_eq!(advanced_at, Some(35));

    pass("criterion 10 (curriculum plumbing)", "nesting + stubbed schedule".into());
}

/// Support-containment companion to criterion 3 at the distribution level:
/// masked tokens carry exactly zero probability at depth caps.
#[test]
fn depth_cap_distribution_support() {
    let vocab = Vocabulary::standard(&["x", "y"], None, None);
    let cfg = PolicyConfig { d_max: 3, ..PolicyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let policy = SymFormer::new(cfg, vocab.clone(), &mut rng).unwrap();
    let allowed = vocab.stage_mask(3);
    let sin = vocab.lookup("sin").unwrap();
    let p = next_token_distribution(&policy, &[sin, sin], &allowed).unwrap();
    for i in 0..vocab.len() {
        if vocab.arity(TokenId(i)) > 0 {
            assert_eq!(p[i], 0.0);
        }
    }
}
