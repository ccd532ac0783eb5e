//! Incremental decoding for sampling.
//!
//! Every transformer computation here is row-local given cached keys and
//! values (attention row i reads K/V of rows j <= i; layer norm and the FFN
//! act per row; pairwise relation codes never change once both nodes
//! exist), so extending the sequence only costs the new row. The same
//! kernels as the tape ops are reused with identical accumulation order,
//! which keeps sampled log-probabilities bit-identical to a full tape
//! re-scoring; `rescoring_matches_sampled_log_probs_bitwise` pins that.

use crate::autodiff::{masked_softmax_kernel, matmul_kernel, LAYER_NORM_EPS};
use crate::expr::TokenId;
use crate::grammar::{relation_code, PartialAst, NUM_RELATIONS, REL_OTHER, REL_SELF};
use crate::policy::SymFormer;

struct LayerCache {
    /// Key rows, d_model wide, one per model position.
    k: Vec<Vec<f64>>,
    /// Value rows.
    v: Vec<Vec<f64>>,
}

/// Grow-only decoder state over one expression prefix.
pub struct RowDecoder<'p> {
    policy: &'p SymFormer,
    layers: Vec<LayerCache>,
    /// Per-head transposed relation embedding (d_head x NUM_RELATIONS),
    /// fixed for the lifetime of the decoder.
    rel_t: Vec<Vec<f64>>,
    /// Relation code rows: codes[i][j] for j <= i over model positions.
    codes: Vec<Vec<u8>>,
    /// Partial AST over the prefix (model position i = prefix index i - 1).
    pub ast: PartialAst,
    prefix: Vec<TokenId>,
    /// Logits row for the next token, refreshed by `push`.
    logits: Vec<f64>,
}

fn row_matmul(row: &[f64], w: &[f64], k: usize, n: usize) -> Vec<f64> {
    matmul_kernel(row, w, 1, k, n)
}

fn layer_norm_row(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    (0..n).map(|j| (x[j] - mean) * inv * gamma[j] + beta[j]).collect()
}

impl<'p> RowDecoder<'p> {
    /// Fresh decoder positioned at the begin-of-sequence marker; `logits`
    /// immediately describes the root expansion.
    pub fn new(policy: &'p SymFormer) -> Self {
        let cfg = &policy.config;
        let d_head = cfg.d_head();
        let rel = &policy.params.get("rel_embed").expect("relation embeddings").array;
        let rel_t = (0..cfg.heads)
            .map(|h| {
                // Transpose of rows h*R .. (h+1)*R, exactly as the tape does.
                let mut t = vec![0.0; d_head * NUM_RELATIONS];
                for r in 0..NUM_RELATIONS {
                    for p in 0..d_head {
                        t[p * NUM_RELATIONS + r] = rel.at(h * NUM_RELATIONS + r, p);
                    }
                }
                t
            })
            .collect();
        let mut dec = Self {
            policy,
            layers: (0..cfg.layers).map(|_| LayerCache { k: Vec::new(), v: Vec::new() }).collect(),
            rel_t,
            codes: Vec::new(),
            ast: PartialAst::new(),
            prefix: Vec::new(),
            logits: Vec::new(),
        };
        dec.extend_codes_for_bos();
        dec.advance(policy.bos_index());
        dec
    }

    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    /// Next-token logits (temperature applied).
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Append a sampled token and refresh the logits row.
    pub fn push(&mut self, token: TokenId) {
        let arity = self.policy.vocab.arity(token);
        self.prefix.push(token);
        self.ast.push(arity).expect("sampler only pushes into open slots");
        self.extend_codes_for_node(self.prefix.len() - 1);
        self.advance(token.0);
    }

    fn extend_codes_for_bos(&mut self) {
        self.codes.push(vec![REL_SELF]);
    }

    /// Relation-code row for prefix node `n` (model position n + 1) against
    /// all previous model positions. Existing rows never change: parents,
    /// depths, and ancestry of already-placed nodes are final.
    fn extend_codes_for_node(&mut self, n: usize) {
        let i = n + 1;
        let mut row = vec![REL_OTHER; i + 1];
        row[0] = REL_OTHER; // begin marker
        for j in 0..n {
            row[j + 1] = relation_code(&self.ast, n, j);
        }
        row[i] = REL_SELF;
        self.codes.push(row);
    }

    fn advance(&mut self, embed_row: usize) {
        let policy = self.policy;
        let cfg = &policy.config;
        let (d, d_head) = (cfg.d_model, cfg.d_head());
        let pos = self.layers[0].k.len();
        let params = &policy.params;
        let get = |name: &str| &params.get(name).expect("parameter").array;

        let embed = get("embed");
        let pos_table = policy.pos_table();
        let mut x: Vec<f64> = (0..d)
            .map(|j| embed.at(embed_row, j) + pos_table.at(pos, j))
            .collect();

        let scale = 1.0 / (d_head as f64).sqrt();
        for l in 0..cfg.layers {
            let q = row_matmul(&x, get(&format!("layer{l}.attn.wq")).data(), d, d);
            let k = row_matmul(&x, get(&format!("layer{l}.attn.wk")).data(), d, d);
            let v = row_matmul(&x, get(&format!("layer{l}.attn.wv")).data(), d, d);
            self.layers[l].k.push(k);
            self.layers[l].v.push(v);
            let n_rows = self.layers[l].k.len();

            let mut merged = vec![0.0; d];
            for h in 0..cfg.heads {
                let q_h = &q[h * d_head..(h + 1) * d_head];
                // Scores against cached keys, in the tape's layout: the
                // key block is transposed so accumulation order matches
                // matmul(q_h, transpose(k_h)).
                let mut kt = vec![0.0; d_head * n_rows];
                for (j, krow) in self.layers[l].k.iter().enumerate() {
                    for p in 0..d_head {
                        kt[p * n_rows + j] = krow[h * d_head + p];
                    }
                }
                let qk = row_matmul(q_h, &kt, d_head, n_rows);
                let qr = row_matmul(q_h, &self.rel_t[h], d_head, NUM_RELATIONS);
                let code_row = &self.codes[pos];
                let mut scores = vec![0.0; n_rows];
                for j in 0..n_rows {
                    scores[j] = (qk[j] + qr[code_row[j] as usize]) * scale;
                }
                let probs =
                    masked_softmax_kernel(&scores, &vec![true; n_rows], 1, n_rows);
                // Mix values: same j-ascending accumulation as the tape's
                // matmul(probs, v_h).
                let mut vh = vec![0.0; n_rows * d_head];
                for (j, vrow) in self.layers[l].v.iter().enumerate() {
                    vh[j * d_head..(j + 1) * d_head]
                        .copy_from_slice(&vrow[h * d_head..(h + 1) * d_head]);
                }
                let out = matmul_kernel(&probs, &vh, 1, n_rows, d_head);
                merged[h * d_head..(h + 1) * d_head].copy_from_slice(&out);
            }
            let attn = row_matmul(&merged, get(&format!("layer{l}.attn.wo")).data(), d, d);
            let res: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
            x = layer_norm_row(
                &res,
                get(&format!("layer{l}.ln1.gamma")).data(),
                get(&format!("layer{l}.ln1.beta")).data(),
            );

            let f = row_matmul(&x, get(&format!("layer{l}.ffn.w1")).data(), d, cfg.ffn_hidden);
            let b1 = get(&format!("layer{l}.ffn.b1"));
            let f: Vec<f64> = f
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let s = v + b1.data()[j];
                    if s > 0.0 {
                        s
                    } else {
                        0.0
                    }
                })
                .collect();
            let f = row_matmul(&f, get(&format!("layer{l}.ffn.w2")).data(), cfg.ffn_hidden, d);
            let b2 = get(&format!("layer{l}.ffn.b2"));
            let res: Vec<f64> =
                x.iter().zip(f.iter().zip(b2.data())).map(|(a, (b, c))| a + (b + c)).collect();
            x = layer_norm_row(
                &res,
                get(&format!("layer{l}.ln2.gamma")).data(),
                get(&format!("layer{l}.ln2.beta")).data(),
            );
        }

        let vocab_size = policy.vocab.len();
        let mut logits = row_matmul(&x, get("out.w").data(), d, vocab_size);
        let out_b = get("out.b");
        for (j, v) in logits.iter_mut().enumerate() {
            *v += out_b.data()[j];
        }
        if cfg.temperature != 1.0 {
            for v in logits.iter_mut() {
                *v *= 1.0 / cfg.temperature;
            }
        }
        self.logits = logits;
    }
}
