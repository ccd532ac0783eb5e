//! Rank-based rewards, depth weights, and imitation weights.

/// Rank-based reward r_i = 1 - rank(E_i)/(N-1): the smallest energy gets 1,
/// the largest 0, ties broken by sample index. A single sample gets 1.
/// Non-finite energies rank last.
pub fn rank_rewards(energies: &[f64]) -> Vec<f64> {
    let n = energies.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1.0];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ea = if energies[a].is_nan() { f64::INFINITY } else { energies[a] };
        let eb = if energies[b].is_nan() { f64::INFINITY } else { energies[b] };
        ea.partial_cmp(&eb).unwrap().then(a.cmp(&b))
    });
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = 1.0 - rank as f64 / (n - 1) as f64;
    }
    out
}

/// Normalize to zero mean and unit variance in place, when applicable
/// (more than one sample and a spread above 1e-8).
pub fn normalize_rewards(rewards: &mut [f64]) {
    let n = rewards.len();
    if n <= 1 {
        return;
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std <= 1e-8 {
        return;
    }
    for r in rewards.iter_mut() {
        *r = (*r - mean) / std;
    }
}

/// Depth weight 1/(D + 1), penalizing deep trees in the policy gradient.
pub fn depth_weights(depths: &[usize]) -> Vec<f64> {
    depths.iter().map(|&d| 1.0 / (d as f64 + 1.0)).collect()
}

/// Softmax over memory rewards with temperature tau.
pub fn imitation_weights(rewards: &[f64], tau: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let mx = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = rewards.iter().map(|r| ((r - mx) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
