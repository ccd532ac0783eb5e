//! Central finite-difference gradient checks for every tape op, plus the
//! contract tests (masked probabilities, repeated backward, determinism).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_array(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array {
    Array::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Check d(scalar_fn)/d(inputs) against central differences. `build` maps
/// leaf ids to a scalar loss node.
fn grad_check<F>(inputs: &[Array], build: F, tol: f64)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    // Analytic gradients.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|a| tape.leaf(a.clone(), true)).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> =
        ids.iter().map(|&id| tape.grad(id).unwrap().to_vec()).collect();

    // Finite differences.
    let h = 1e-5;
    for (ti, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let run = |delta: f64| -> f64 {
                let mut tape = Tape::new();
                let ids: Vec<NodeId> = inputs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let mut a = a.clone();
                        if k == ti {
                            a.data_mut()[j] += delta;
                        }
                        tape.leaf(a, false)
                    })
                    .collect();
                let loss = build(&mut tape, &ids);
                tape.value(loss).data()[0]
            };
            let fd = (run(h) - run(-h)) / (2.0 * h);
            let an = analytic[ti][j];
            let denom = an.abs().max(fd.abs()).max(1.0);
            assert!(
                (an - fd).abs() / denom < tol,
                "tensor {ti} elem {j}: analytic {an} vs fd {fd}"
            );
        }
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_array(&mut rng, 2, 3);
    let b = rand_array(&mut rng, 3, 2);
    let w = rand_array(&mut rng, 2, 2);
    grad_check(
        &[a, b, w],
        |t, ids| {
            let c = t.matmul(ids[0], ids[1]).unwrap();
            let m = t.mul(c, ids[2]).unwrap();
            t.sum(m)
        },
        1e-4,
    );
}

#[test]
fn elementwise_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_array(&mut rng, 3, 4);
    let b = rand_array(&mut rng, 3, 4);
    grad_check(
        &[a.clone(), b.clone()],
        |t, ids| {
            let s = t.add(ids[0], ids[1]).unwrap();
            let m = t.mul(s, ids[0]).unwrap();
            let sc = t.scale(m, -0.7);
            t.sum(sc)
        },
        1e-4,
    );
    grad_check(
        &[a],
        |t, ids| {
            let r = t.relu(ids[0]);
            t.mean(r)
        },
        1e-4,
    );
}

#[test]
fn transpose_slice_concat_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_array(&mut rng, 3, 4);
    let b = rand_array(&mut rng, 3, 2);
    grad_check(
        &[a, b],
        |t, ids| {
            let left = t.slice_cols(ids[0], 1, 2);
            let cat = t.concat_cols(&[left, ids[1]]).unwrap();
            let tr = t.transpose(cat);
            let sq = t.mul(tr, tr).unwrap();
            t.sum(sq)
        },
        1e-4,
    );
}

#[test]
fn add_row_and_gather_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let table = rand_array(&mut rng, 5, 3);
    let bias = rand_array(&mut rng, 1, 3);
    grad_check(
        &[table, bias],
        |t, ids| {
            // Repeated rows exercise scatter-add accumulation.
            let g = t.gather_rows(ids[0], vec![0, 2, 2, 4]);
            let shifted = t.add_row(g, ids[1]).unwrap();
            let sq = t.mul(shifted, shifted).unwrap();
            t.sum(sq)
        },
        1e-4,
    );
}

#[test]
fn layer_norm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_array(&mut rng, 3, 6);
    let gamma = rand_array(&mut rng, 1, 6);
    let beta = rand_array(&mut rng, 1, 6);
    let probe = rand_array(&mut rng, 3, 6);
    grad_check(
        &[x, gamma, beta],
        move |t, ids| {
            let ln = t.layer_norm(ids[0], ids[1], ids[2]).unwrap();
            let p = t.constant(probe.clone());
            let m = t.mul(ln, p).unwrap();
            t.sum(m)
        },
        1e-3,
    );
}

#[test]
fn layer_norm_of_constant_row_is_zero_before_affine() {
    let mut tape = Tape::new();
    let x = tape.leaf(Array::new(1, 4, vec![2.5; 4]), false);
    let gamma = tape.leaf(Array::new(1, 4, vec![1.0; 4]), false);
    let beta = tape.leaf(Array::new(1, 4, vec![0.0; 4]), false);
    let ln = tape.layer_norm(x, gamma, beta).unwrap();
    for &v in tape.value(ln).data() {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn masked_softmax_probabilities_and_gradient() {
    // Symmetry plug-in: logits [1,1,1] with the middle entry masked.
    let mut tape = Tape::new();
    let x = tape.leaf(Array::new(1, 3, vec![1.0, 1.0, 1.0]), false);
    let mask = Arc::new(vec![true, false, true]);
    let p = tape.masked_softmax(x, mask);
    assert_eq!(tape.value(p).data(), &[0.5, 0.0, 0.5]);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_array(&mut rng, 2, 5);
    let probe = rand_array(&mut rng, 2, 5);
    let mask = Arc::new(vec![true, false, true, true, false, true, true, true, false, true]);
    let mask2 = mask.clone();
    grad_check(
        &[x.clone()],
        move |t, ids| {
            let p = t.masked_softmax(ids[0], mask2.clone());
            let pr = t.constant(probe.clone());
            let m = t.mul(p, pr).unwrap();
            t.sum(m)
        },
        1e-4,
    );

    // Sum over unmasked entries is 1; masked entries identically 0.
    let mut tape = Tape::new();
    let xid = tape.leaf(x, true);
    let p = tape.masked_softmax(xid, mask.clone());
    for i in 0..2 {
        let mut s = 0.0;
        for j in 0..5 {
            let v = tape.value(p).at(i, j);
            if mask[i * 5 + j] {
                s += v;
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert!((s - 1.0).abs() < 1e-12);
    }
    // Masked entries also get exactly zero gradient.
    let loss = tape.sum(p);
    tape.backward(loss).unwrap();
    let g = tape.grad(xid).unwrap();
    for (j, &m) in mask.iter().enumerate() {
        if !m {
            assert_eq!(g[j], 0.0);
        }
    }
}

#[test]
fn masked_log_softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_array(&mut rng, 2, 4);
    let probe = rand_array(&mut rng, 2, 4);
    let mask = Arc::new(vec![true, true, false, true, false, true, true, true]);
    grad_check(
        &[x],
        move |t, ids| {
            let lp = t.masked_log_softmax(ids[0], mask.clone());
            let pr = t.constant(probe.clone());
            let m = t.mul(lp, pr).unwrap();
            t.sum(m)
        },
        1e-4,
    );
}

#[test]
fn log_select_and_per_row_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Array::new(2, 3, (0..6).map(|_| rng.gen_range(0.5..2.0)).collect());
    grad_check(
        &[x],
        |t, ids| {
            let l = t.log(ids[0]);
            let s1 = t.select(l, 4);
            let col = t.select_per_row(l, vec![2, 0]);
            let s2 = t.sum(col);
            t.add(s1, s2).unwrap()
        },
        1e-4,
    );
}

#[test]
fn relation_bias_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let qr = rand_array(&mut rng, 3, 6);
    let codes: Arc<Vec<u8>> = Arc::new(vec![0, 1, 5, 2, 0, 3, 4, 3, 0]);
    let probe = rand_array(&mut rng, 3, 3);
    grad_check(
        &[qr],
        move |t, ids| {
            let b = t.relation_bias(ids[0], codes.clone(), 3);
            let pr = t.constant(probe.clone());
            let m = t.mul(b, pr).unwrap();
            t.sum(m)
        },
        1e-4,
    );
}

#[test]
fn backward_simple_identities() {
    // loss = sum(p) -> gradient all ones.
    let mut tape = Tape::new();
    let p = tape.leaf(Array::new(2, 2, vec![0.3, -1.0, 2.0, 0.0]), true);
    let loss = tape.sum(p);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(p).unwrap(), &[1.0, 1.0, 1.0, 1.0]);

    // loss = sum(p * p) -> gradient 2p.
    let mut tape = Tape::new();
    let vals = vec![0.3, -1.0, 2.0, 0.5];
    let p = tape.leaf(Array::new(2, 2, vals.clone()), true);
    let sq = tape.mul(p, p).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    let g = tape.grad(p).unwrap();
    for (gi, v) in g.iter().zip(&vals) {
        assert!((gi - 2.0 * v).abs() < 1e-12);
    }
}

#[test]
fn repeated_backward_is_an_error() {
    let mut tape = Tape::new();
    let p = tape.leaf(Array::scalar(1.0), true);
    let loss = tape.scale(p, 2.0);
    tape.backward(loss).unwrap();
    assert!(matches!(tape.backward(loss), Err(AutodiffError::BackwardTwice)));
}

#[test]
fn non_scalar_loss_is_an_error() {
    let mut tape = Tape::new();
    let p = tape.leaf(Array::zeros(2, 2), true);
    assert!(matches!(
        tape.backward(p),
        Err(AutodiffError::NonScalarLoss { rows: 2, cols: 2 })
    ));
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Array::zeros(2, 3), false);
    let b = tape.leaf(Array::zeros(3, 3), false);
    assert!(tape.add(a, b).is_err());
    assert!(tape.matmul(b, b).is_ok());
    let c = tape.leaf(Array::zeros(2, 2), false);
    assert!(tape.matmul(a, c).is_err());
}

/// Random 3-layer network gradient vs finite differences over 10 seeds.
#[test]
fn random_network_gradients_over_ten_seeds() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_array(&mut rng, 2, 4);
        let w1 = rand_array(&mut rng, 4, 8);
        let b1 = rand_array(&mut rng, 1, 8);
        let w2 = rand_array(&mut rng, 8, 8);
        let gamma = rand_array(&mut rng, 1, 8);
        let beta = rand_array(&mut rng, 1, 8);
        let w3 = rand_array(&mut rng, 8, 3);
        grad_check(
            &[x, w1, b1, w2, gamma, beta, w3],
            |t, ids| {
                let h = t.matmul(ids[0], ids[1]).unwrap();
                let h = t.add_row(h, ids[2]).unwrap();
                let h = t.relu(h);
                let h = t.matmul(h, ids[3]).unwrap();
                let h = t.layer_norm(h, ids[4], ids[5]).unwrap();
                let h = t.matmul(h, ids[6]).unwrap();
                let mask = Arc::new(vec![true, true, false, true, true, true]);
                let lp = t.masked_log_softmax(h, mask);
                let picked = t.select_per_row(lp, vec![0, 1]);
                t.sum(picked)
            },
            1e-4,
        );
    }
}

#[test]
fn forward_values_are_deterministic() {
    let run = || -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tape = Tape::new();
        let a = rand_array(&mut rng, 4, 4);
        let b = rand_array(&mut rng, 4, 4);
        let (a, b) = (tape.leaf(a, false), tape.leaf(b, false));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.masked_softmax(c, Arc::new(vec![true; 16]));
        tape.value(s).data().to_vec()
    };
    let (x, y) = (run(), run());
    for (a, b) in x.iter().zip(&y) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
