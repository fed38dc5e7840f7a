use std::time::Instant;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use fdrnet_core::net::{Network, NetworkConfig};
use fdrnet_core::tensor::{Graph, Shape, Tensor};
use fdrnet_core::train::{adam_step, total_loss, AdamState};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = NetworkConfig { phases: 2, channels: 8, fd_layers: 3, aux_blocks: 1, reduction: 4, in_channels: 3 };
    let mut net = Network::new(config, &mut rng).unwrap();
    let mut adam = AdamState::new(&net);
    let x = Tensor::rand_uniform(Shape::new(8, 3, 63, 63), 0.0, 1.0, &mut rng);
    let y = Tensor::rand_uniform(Shape::new(8, 3, 63, 63), 0.0, 1.0, &mut rng);

    // Warmup + timed loop
    let t0 = Instant::now();
    let mut fwd_time = 0.0;
    let mut bwd_time = 0.0;
    let n = 10;
    for _ in 0..n {
        let tf = Instant::now();
        let mut g = Graph::new();
        let trace = net.forward(&mut g, &x).unwrap();
        let loss = total_loss(&mut g, &trace.restored, &y, &trace.fdm_outputs, 1e-5).unwrap();
        fwd_time += tf.elapsed().as_secs_f64();
        let tb = Instant::now();
        g.backward(&loss).unwrap();
        bwd_time += tb.elapsed().as_secs_f64();
        drop(g); drop(trace); drop(loss);
        adam_step(&mut net, &mut adam, 1e-4).unwrap();
        net.zero_grads();
    }
    let per_iter = t0.elapsed().as_secs_f64() / n as f64;
    println!("fwd {:.1} ms  bwd {:.1} ms  total {:.1} ms/iter  -> 2000 iters = {:.1} min",
        1e3*fwd_time/n as f64, 1e3*bwd_time/n as f64, 1e3*per_iter, 2000.0*per_iter/60.0);

    // P=1 variant for the hybrid toy run
    let config1 = NetworkConfig { phases: 1, ..config };
    let net1 = Network::new(config1, &mut rng).unwrap();
    let t0 = Instant::now();
    for _ in 0..n {
        let mut g = Graph::new();
        let trace = net1.forward(&mut g, &x).unwrap();
        let loss = total_loss(&mut g, &trace.restored, &y, &trace.fdm_outputs, 1e-5).unwrap();
        g.backward(&loss).unwrap();
        net1.zero_grads();
    }
    let per_iter1 = t0.elapsed().as_secs_f64() / n as f64;
    println!("P=1: {:.1} ms/iter -> 2000 iters = {:.1} min", 1e3*per_iter1, 2000.0*per_iter1/60.0);
}
