use std::time::Instant;
fn main() {
    // 13x64 @ 64x64 — the shape that dominates sampling forwards
    let m = 13; let k = 64; let n = 64;
    let a = vec![0.5f64; m*k];
    let b = vec![0.25f64; k*n];
    let iters = 20000;
    let t = Instant::now();
    let mut sink = 0.0;
    for _ in 0..iters {
        let c = sympde_core::autodiff::matmul_kernel(&a, &b, m, k, n);
        sink += c[0];
    }
    let el = t.elapsed().as_secs_f64();
    let flops = (2*m*k*n*iters) as f64 / el / 1e9;
    println!("matmul 13x64x64: {flops:.2} GFLOP/s (sink {sink})");
}
