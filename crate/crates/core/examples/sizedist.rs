use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use sympde_core::policy::{sample_batch, PolicyConfig, SymFormer};
use sympde_core::Vocabulary;

fn main() {
    let vocab = Vocabulary::standard(&["x", "y", "t"], Some("t"), None);
    let cfg = PolicyConfig { d_max: 10, ..PolicyConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0x503D + 10);
    let policy = SymFormer::new(cfg, vocab.clone(), &mut rng).unwrap();
    let allowed = vocab.stage_mask(3);
    let t = Instant::now();
    let rollouts = sample_batch(&policy, 200, &allowed, 0xD_u64 + 10).unwrap();
    let mut sizes: Vec<usize> = rollouts.iter().map(|r| r.tree.len()).collect();
    sizes.sort();
    let total: usize = sizes.iter().sum();
    println!(
        "200 rollouts in {:?}; sizes: min {} med {} p90 {} max {} mean {:.1}",
        t.elapsed(), sizes[0], sizes[100], sizes[180], sizes[199], total as f64 / 200.0
    );
}
