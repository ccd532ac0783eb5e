//! Hot-path benchmarks: compiled expression evaluation, symbolic
//! differentiation, candidate energies, rollout sampling, and the
//! differentiable scoring pass.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sympde_core::constopt::{optimize_constants, ConstOptConfig};
use sympde_core::expr::{parse_prefix_str, CompiledExpr, EvalScratch};
use sympde_core::pde::catalog::find_problem;
use sympde_core::pde::energy::{energy, sample_collocation};
use sympde_core::policy::{sample_batch, score_sequence, PolicyConfig, SymFormer};
use sympde_core::autodiff::Tape;

fn bench_eval(c: &mut Criterion) {
    let p = find_problem("heat2d").unwrap();
    let tree = p.analytic_tree().unwrap();
    let expr = tree.to_expr(&p.vocab).unwrap();
    let compiled = CompiledExpr::compile(&expr, &p.point_layout()).unwrap();
    let mut scratch = EvalScratch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Vec<f64>> = (0..1000)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    c.bench_function("compiled_eval_1k_points", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for pt in &points {
                acc += compiled.eval(black_box(pt), &tree.constants, &mut scratch);
            }
            black_box(acc)
        })
    });
}

fn bench_diff(c: &mut Criterion) {
    let p = find_problem("heat2d").unwrap();
    let tree = parse_prefix_str(&p.vocab, "* * sin * 1.3 x cos * 0.7 y exp * -2.0 t").unwrap();
    let expr = tree.to_expr(&p.vocab).unwrap();
    c.bench_function("second_derivative", |b| {
        b.iter(|| {
            let dx = sympde_core::expr::diff(black_box(&expr), sympde_core::expr::Wrt::Var("x"));
            sympde_core::expr::diff(&dx, sympde_core::expr::Wrt::Var("x"))
        })
    });
}

fn bench_energy(c: &mut Criterion) {
    let p = find_problem("heat2d").unwrap();
    let tree = p.analytic_tree().unwrap();
    let expr = tree.to_expr(&p.vocab).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let colloc = sample_collocation(&p, 2, &mut rng);
    c.bench_function("heat_energy_full_draw", |b| {
        b.iter(|| energy(&p, black_box(&expr), &tree.constants, 2, &colloc).unwrap())
    });
}

fn bench_constopt(c: &mut Criterion) {
    let p = find_problem("heat2d").unwrap();
    let tree = parse_prefix_str(&p.vocab, "* const * sin x cos y").unwrap();
    c.bench_function("constant_fit_50_steps", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            optimize_constants(&p, black_box(&tree), 1, ConstOptConfig::in_loop(), &mut rng)
                .unwrap()
        })
    });
}

fn bench_policy(c: &mut Criterion) {
    let p = find_problem("heat2d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let policy = SymFormer::new(
        PolicyConfig { d_max: 7, ..PolicyConfig::default() },
        p.vocab.clone(),
        &mut rng,
    )
    .unwrap();
    let allowed = p.vocab.stage_mask(2);
    c.bench_function("sample_batch_16", |b| {
        b.iter(|| sample_batch(&policy, 16, &allowed, black_box(11)).unwrap())
    });

    let rollouts = sample_batch(&policy, 8, &allowed, 12).unwrap();
    c.bench_function("score_and_backward_8", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let params = policy.insert_params(&mut tape, true);
            let mut total = None;
            for r in &rollouts {
                let s = score_sequence(&policy, &mut tape, &params, &r.tree.tokens, &allowed)
                    .unwrap();
                total = Some(match total {
                    None => s.log_prob,
                    Some(t) => tape.add(t, s.log_prob).unwrap(),
                });
            }
            tape.backward(total.unwrap()).unwrap();
            black_box(tape.len())
        })
    });
}

criterion_group!(
    benches,
    bench_eval,
    bench_diff,
    bench_energy,
    bench_constopt,
    bench_policy
);
criterion_main!(benches);
