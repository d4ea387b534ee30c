//! One forward and backward pass through a small three-layer network, then a
//! few plain gradient steps to watch the rate loss fall.
//!
//! cargo run --example backward_pass

use hm2bp::data::{make_targets, poisson_steps};
use hm2bp::grad::{backward_pass, rate_loss};
use hm2bp::lif::{forward_compiled, CompiledNetwork, ForwardOptions};
use hm2bp::optim::sgd_step;
use hm2bp::{LayerSpec, NetworkTopology, NeuronParams, Shape, TimeGrid};
use rand::SeedableRng;

fn main() -> hm2bp::Result<()> {
    let grid = TimeGrid::new(300.0, 1.0)?;
    let p = |nu| NeuronParams::for_grid(&grid, nu);
    let mut net = NetworkTopology::new(vec![
        LayerSpec::input(Shape::flat(50), p(1.0)?),
        LayerSpec::dense(20, p(10.0)?),
        LayerSpec::dense(3, p(5.0)?).with_init_scale(2.0),
    ])?;
    net.init_uniform(&mut rand_chacha::ChaCha8Rng::seed_from_u64(4));
    let pixels: Vec<u8> = (0..50).map(|j| (j * 5) as u8).collect();
    let input = poisson_steps(&pixels, &grid, 0.5, 11);
    let targets = make_targets(2, 3, 35.0, 5.0)?;

    for step in 0..6 {
        let compiled = CompiledNetwork::new(&net);
        let fwd = forward_compiled(&net, &compiled, input.clone(), &grid, ForwardOptions::default())?;
        let o = fwd.output_counts();
        let grads = backward_pass(&net, &compiled, &fwd, &targets, 1.0)?;
        println!(
            "step {step}: output counts {o:?}, loss {:.1}, grad norms {:.3?}, delta norms {:.3?}",
            rate_loss(&o, &targets),
            grads.grad_norms(),
            grads.delta_norms()
        );
        sgd_step(2e-5, &grads, net.all_weights_mut())?;
    }
    Ok(())
}
