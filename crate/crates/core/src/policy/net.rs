//! Tape forward pass shared by sampling and scoring.

use std::collections::HashMap;
use std::sync::Arc;

use crate::autodiff::{NodeId, Tape};
use crate::grammar::{RelationMatrix, NUM_RELATIONS, REL_OTHER, REL_SELF};
use crate::policy::{PolicyError, SymFormer};

/// Parameter tensors registered on a tape, by name.
pub struct TapeParams {
    by_name: HashMap<String, NodeId>,
    /// Node ids in `ParamSet` order, for gradient collection.
    pub ordered: Vec<NodeId>,
}

impl TapeParams {
    pub fn get(&self, name: &str) -> NodeId {
        self.by_name[name]
    }
}

impl SymFormer {
    /// Register all parameters as tape leaves (cheap: buffers are shared).
    pub fn insert_params(&self, tape: &mut Tape, requires_grad: bool) -> TapeParams {
        let mut by_name = HashMap::new();
        let mut ordered = Vec::with_capacity(self.params.len());
        for t in &self.params.tensors {
            let id = tape.leaf(t.array.clone(), requires_grad);
            by_name.insert(t.name.clone(), id);
            ordered.push(id);
        }
        TapeParams { by_name, ordered }
    }

    /// Hidden states for the model sequence (begin marker + prefix tokens).
    /// `ids` are embedding-table rows; `codes` is the model-level relation
    /// matrix from [`model_relation_codes`].
    pub fn forward_hidden(
        &self,
        tape: &mut Tape,
        params: &TapeParams,
        ids: &[usize],
        codes: &Arc<Vec<u8>>,
    ) -> Result<NodeId, PolicyError> {
        let n = ids.len();
        assert_eq!(codes.len(), n * n, "relation codes must cover the model sequence");
        let cfg = &self.config;
        let d_head = cfg.d_head();
        let scale = 1.0 / (d_head as f64).sqrt();
        let causal = causal_mask(n);

        let embed = tape.gather_rows(params.get("embed"), ids.to_vec());
        let pos = tape.constant(self.pos_table().clone());
        let pos_rows = tape.gather_rows(pos, (0..n).collect());
        let mut h = tape.add(embed, pos_rows)?;

        for l in 0..cfg.layers {
            let wq = params.get(&format!("layer{l}.attn.wq"));
            let wk = params.get(&format!("layer{l}.attn.wk"));
            let wv = params.get(&format!("layer{l}.attn.wv"));
            let wo = params.get(&format!("layer{l}.attn.wo"));

            let q = tape.matmul(h, wq)?;
            let k = tape.matmul(h, wk)?;
            let v = tape.matmul(h, wv)?;

            let mut head_outputs = Vec::with_capacity(cfg.heads);
            for hd in 0..cfg.heads {
                let qh = tape.slice_cols(q, hd * d_head, d_head);
                let kh = tape.slice_cols(k, hd * d_head, d_head);
                let vh = tape.slice_cols(v, hd * d_head, d_head);
                let kt = tape.transpose(kh);
                let qk = tape.matmul(qh, kt)?;
                // Keys are shifted by the relation embedding of the pair:
                // Q (K + R)^T = Q K^T + Q R^T, gathered per relation code.
                let rel = tape.gather_rows(
                    params.get("rel_embed"),
                    (hd * NUM_RELATIONS..(hd + 1) * NUM_RELATIONS).collect(),
                );
                let rel_t = tape.transpose(rel);
                let qr = tape.matmul(qh, rel_t)?;
                let bias = tape.relation_bias(qr, codes.clone(), n);
                let scores = tape.add(qk, bias)?;
                let scores = tape.scale(scores, scale);
                let probs = tape.masked_softmax(scores, causal.clone());
                head_outputs.push(tape.matmul(probs, vh)?);
            }
            let merged = tape.concat_cols(&head_outputs)?;
            let attn_out = tape.matmul(merged, wo)?;

            let res = tape.add(h, attn_out)?;
            h = tape.layer_norm(
                res,
                params.get(&format!("layer{l}.ln1.gamma")),
                params.get(&format!("layer{l}.ln1.beta")),
            )?;

            let f = tape.matmul(h, params.get(&format!("layer{l}.ffn.w1")))?;
            let f = tape.add_row(f, params.get(&format!("layer{l}.ffn.b1")))?;
            let f = tape.relu(f);
            let f = tape.matmul(f, params.get(&format!("layer{l}.ffn.w2")))?;
            let f = tape.add_row(f, params.get(&format!("layer{l}.ffn.b2")))?;
            let res = tape.add(h, f)?;
            h = tape.layer_norm(
                res,
                params.get(&format!("layer{l}.ln2.gamma")),
                params.get(&format!("layer{l}.ln2.beta")),
            )?;
        }
        Ok(h)
    }

    /// Vocabulary logits (temperature applied) for the selected hidden rows.
    /// Sampling projects only the last row; scoring projects every
    /// prediction position. Rows are independent in every kernel involved,
    /// so both paths produce bit-identical values for shared positions.
    pub fn project_rows(
        &self,
        tape: &mut Tape,
        params: &TapeParams,
        hidden: NodeId,
        rows: Vec<usize>,
    ) -> Result<NodeId, PolicyError> {
        let h = tape.gather_rows(hidden, rows);
        let logits = tape.matmul(h, params.get("out.w"))?;
        let logits = tape.add_row(logits, params.get("out.b"))?;
        Ok(if self.config.temperature != 1.0 {
            tape.scale(logits, 1.0 / self.config.temperature)
        } else {
            logits
        })
    }

    /// Vocabulary logits for every model position.
    pub fn forward_logits(
        &self,
        tape: &mut Tape,
        params: &TapeParams,
        ids: &[usize],
        codes: &Arc<Vec<u8>>,
    ) -> Result<NodeId, PolicyError> {
        let h = self.forward_hidden(tape, params, ids, codes)?;
        self.project_rows(tape, params, h, (0..ids.len()).collect())
    }
}

/// Causal attention mask for an n-token model sequence: position i attends
/// to j <= i.
pub fn causal_mask(n: usize) -> Arc<Vec<bool>> {
    let mut m = vec![false; n * n];
    for i in 0..n {
        for j in 0..=i {
            m[i * n + j] = true;
        }
    }
    Arc::new(m)
}

/// Extend a prefix-level relation matrix with the begin-of-sequence row and
/// column (relation "other" except the diagonal).
pub fn model_relation_codes(rel: &RelationMatrix) -> Arc<Vec<u8>> {
    let n = rel.dim + 1;
    let mut codes = vec![REL_OTHER; n * n];
    codes[0] = REL_SELF;
    for i in 0..rel.dim {
        for j in 0..rel.dim {
            codes[(i + 1) * n + (j + 1)] = rel.get(i, j);
        }
    }
    Arc::new(codes)
}
