//! Kernel throughput benchmarks.
//!
//! Group names carry the iteration mode (`parallel` with the default
//! feature set, `sequential` with `--no-default-features`), so running the
//! suite once per mode leaves both sets side by side in the criterion
//! report for comparison.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fdrnet_core::gain_control::{gdn_forward, GainControlParams};
use fdrnet_core::net::{Network, NetworkConfig};
use fdrnet_core::svdo::svdo_loss;
use fdrnet_core::tensor::{Graph, Shape, Tensor};
use fdrnet_core::train::total_loss;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_conv2d(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::randn(Shape::new(8, 8, 63, 63), 1.0, &mut rng);
    let w = Tensor::randn(Shape::new(8, 8, 3, 3), 0.1, &mut rng);
    let b = Tensor::zeros(Shape::new(1, 8, 1, 1));
    let mut group = c.benchmark_group(format!("conv2d/{}", mode()));
    group.bench_function("forward_8x8x63x63", |bench| {
        bench.iter(|| {
            let mut g = Graph::no_grad();
            std::hint::black_box(g.conv2d(&x, &w, &b).unwrap());
        })
    });
    let xp = Tensor::param_from_vec(x.shape(), x.data().to_vec()).unwrap();
    let wp = Tensor::param_from_vec(w.shape(), w.data().to_vec()).unwrap();
    let bp = Tensor::param_from_vec(b.shape(), b.data().to_vec()).unwrap();
    group.bench_function("forward_backward_8x8x63x63", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let y = g.conv2d(&xp, &wp, &bp).unwrap();
            let loss = g.sum(&y).unwrap();
            g.backward(&loss).unwrap();
            xp.zero_grad();
            wp.zero_grad();
            bp.zero_grad();
        })
    });
    group.finish();
}

fn bench_gdn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = Tensor::randn(Shape::new(8, 8, 63, 63), 1.0, &mut rng);
    let params = GainControlParams::new(8);
    let mut group = c.benchmark_group(format!("gdn/{}", mode()));
    group.bench_function("forward_8x8x63x63", |bench| {
        bench.iter(|| {
            let mut g = Graph::no_grad();
            std::hint::black_box(gdn_forward(&mut g, &s, &params).unwrap());
        })
    });
    group.finish();
}

fn bench_svdo(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = Tensor::randn(Shape::new(8, 8, 63, 63), 1.0, &mut rng);
    let mut group = c.benchmark_group(format!("svdo/{}", mode()));
    group.bench_function("loss_8x8x63x63", |bench| {
        bench.iter(|| {
            let mut g = Graph::no_grad();
            std::hint::black_box(svdo_loss(&mut g, &f).unwrap());
        })
    });
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = NetworkConfig {
        phases: 2,
        channels: 8,
        fd_layers: 3,
        aux_blocks: 1,
        reduction: 4,
        in_channels: 3,
    };
    let net = Network::new(config, &mut rng).unwrap();
    let image = Tensor::rand_uniform(Shape::new(8, 3, 63, 63), 0.0, 1.0, &mut rng);
    let target = Tensor::rand_uniform(Shape::new(8, 3, 63, 63), 0.0, 1.0, &mut rng);
    let mut group = c.benchmark_group(format!("network/{}", mode()));
    group.sample_size(10);
    group.bench_function("forward_toy_batch8", |bench| {
        bench.iter(|| {
            let mut g = Graph::no_grad();
            std::hint::black_box(net.forward(&mut g, &image).unwrap());
        })
    });
    group.bench_function("train_step_toy_batch8", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let trace = net.forward(&mut g, &image).unwrap();
            let loss = total_loss(&mut g, &trace.restored, &target, &trace.fdm_outputs, 1e-5)
                .unwrap();
            g.backward(&loss).unwrap();
            net.zero_grads();
        })
    });
    group.finish();
}

criterion_group!(benches, bench_conv2d, bench_gdn, bench_svdo, bench_network);
criterion_main!(benches);
