//! Rough single-thread throughput of the 3×3 same-size convolution.
use std::time::Instant;

use pathroute::nn::{Conv2dOpts, Tape, Tensor};

fn main() {
    for features in [16usize, 32] {
        let x = Tensor::full([1, features, 63, 63], 0.1);
        let w = Tensor::full([features, features, 3, 3], 0.01);
        let b = Tensor::zeros([1, features, 1, 1]);
        let reps = 50;
        let start = Instant::now();
        for _ in 0..reps {
            let mut tape = Tape::new();
            let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
            let y = tape.conv2d(xv, wv, bv, Conv2dOpts::same(3)).unwrap();
            let p = tape.global_avg_pool(y);
            let z = tape.leaf(Tensor::zeros([1, features, 1, 1]));
            let l = tape.mse(p, z).unwrap();
            tape.backward(l).unwrap();
        }
        let secs = start.elapsed().as_secs_f64() / reps as f64;
        let flops = 2.0 * 9.0 * (features * features * 63 * 63) as f64;
        println!(
            "F={features}: {:.2} ms per fwd+bwd, {:.1} GFLOP/s (counting 3x forward flops)",
            secs * 1e3,
            3.0 * flops / secs / 1e9
        );
    }
}
