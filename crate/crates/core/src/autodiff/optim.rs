//! Adam, global-norm gradient clipping, and a reduce-on-plateau scheduler.
//!
//! Two Adam flavors are supported. The policy optimizer uses the standard
//! bias-corrected update. The constant optimizer runs without bias
//! correction and with lower momentum: its job is to travel an O(1) distance
//! in 50 steps at lr 0.02, and the corrected transient provably cannot cover
//! that (50 steps x lr bounds the displacement at exactly the typical
//! init-to-target distance, with no slack for deceleration). The uncorrected
//! update takes larger early steps and settles within tolerance.

use crate::autodiff::params::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: bool,
}

impl AdamConfig {
    /// Standard defaults for long-horizon network training.
    pub fn standard(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, bias_correction: true }
    }

    /// Fast-transit settings for short constant-fitting runs.
    pub fn constant_fit(lr: f64) -> Self {
        Self { lr, beta1: 0.5, beta2: 0.999, eps: 1e-8, bias_correction: false }
    }
}

/// Per-parameter moment accumulators plus step counter, current learning
/// rate, and the plateau tracker.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub lr: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    plateau: PlateauTracker,
}

#[derive(Debug, Clone)]
struct PlateauTracker {
    factor: f64,
    patience: u32,
    best: f64,
    bad_epochs: u32,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamConfig, plateau_factor: f64, patience: u32) -> Self {
        let shapes: Vec<usize> = params.tensors.iter().map(|t| t.array.numel()).collect();
        Self {
            config,
            lr: config.lr,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            plateau: PlateauTracker {
                factor: plateau_factor,
                patience,
                best: f64::NEG_INFINITY,
                bad_epochs: 0,
            },
        }
    }

    /// One Adam update over all tensors. `grads` aligns with `params` by
    /// index; empty gradient slots are skipped.
    pub fn adam_step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), params.tensors.len(), "gradient/parameter count mismatch");
        self.step += 1;
        let c = self.config;
        let (bc1, bc2) = if c.bias_correction {
            (
                1.0 - c.beta1.powi(self.step as i32),
                1.0 - c.beta2.powi(self.step as i32),
            )
        } else {
            (1.0, 1.0)
        };
        for (ti, tensor) in params.tensors.iter_mut().enumerate() {
            if grads[ti].is_empty() {
                continue;
            }
            let data = tensor.array.data_mut();
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for (j, &g) in grads[ti].iter().enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                data[j] -= self.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }

    /// Forget the tracked metric (used at curriculum stage transitions,
    /// where the reward scale changes).
    pub fn reset_plateau(&mut self) {
        self.plateau.best = f64::NEG_INFINITY;
        self.plateau.bad_epochs = 0;
    }

    /// Track a maximized metric; multiply lr by `factor` after `patience`
    /// consecutive non-improving reports. Returns true when a decay fired.
    pub fn plateau_decay(&mut self, metric: f64) -> bool {
        if metric > self.plateau.best {
            self.plateau.best = metric;
            self.plateau.bad_epochs = 0;
            return false;
        }
        self.plateau.bad_epochs += 1;
        if self.plateau.bad_epochs > self.plateau.patience {
            self.lr *= self.plateau.factor;
            self.plateau.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}

/// Rescale the concatenated gradient vector to global l2 norm <= max_norm.
/// Identity when already within the bound; returns the pre-clip norm.
pub fn grad_clip(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm_sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|&x| x * x).sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Array;

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("c", Array::scalar(v));
        p
    }

    #[test]
    fn grad_clip_halves_norm_ten() {
        let mut grads = vec![vec![6.0, 8.0]]; // norm 10
        let norm = grad_clip(&mut grads, 5.0);
        assert_eq!(norm, 10.0);
        assert!((grads[0][0] - 3.0).abs() < 1e-12);
        assert!((grads[0][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn grad_clip_identity_under_bound() {
        let mut grads = vec![vec![3.0]];
        grad_clip(&mut grads, 5.0);
        assert_eq!(grads[0][0], 3.0);
    }

    #[test]
    fn grad_clip_never_increases_norm() {
        let mut grads = vec![vec![0.5, -0.2], vec![1.0]];
        let before: f64 = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        grad_clip(&mut grads, 5.0);
        let after: f64 = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        assert!(after <= before + 1e-12);
    }

    #[test]
    fn plateau_decays_after_patience_exceeded() {
        let params = one_param(0.0);
        let mut st = OptimizerState::new(&params, AdamConfig::standard(5e-4), 0.9, 10);
        assert!(!st.plateau_decay(0.5)); // improvement
        for i in 0..10 {
            assert!(!st.plateau_decay(0.4), "decayed too early at bad epoch {}", i + 1);
        }
        // 11th consecutive non-improving report fires the decay.
        assert!(st.plateau_decay(0.4));
        assert!((st.lr - 4.5e-4).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut params = one_param(1.0);
        let mut st = OptimizerState::new(&params, AdamConfig::standard(0.05), 0.9, 10);
        for _ in 0..500 {
            let c = params.tensors[0].array.data()[0];
            let g = 2.0 * (c - 2.0);
            st.adam_step(&mut params, &[vec![g]]);
        }
        let c = params.tensors[0].array.data()[0];
        assert!((c - 2.0).abs() < 1e-3, "c = {c}");
    }

    #[test]
    fn constant_fit_adam_covers_unit_distance_in_fifty_steps() {
        let mut params = one_param(1.0);
        let mut st =
            OptimizerState::new(&params, AdamConfig::constant_fit(0.02), 0.9, 10);
        let mut best = f64::INFINITY;
        for _ in 0..50 {
            let c = params.tensors[0].array.data()[0];
            best = best.min((c - 2.0).abs());
            let g = 0.4 * (c - 2.0);
            st.adam_step(&mut params, &[vec![g]]);
        }
        let c = params.tensors[0].array.data()[0];
        best = best.min((c - 2.0).abs());
        assert!(best < 1e-3, "best |c-2| = {best}");
    }
}
