//! Output-layer lateral inhibition: its effect on firing counts in the
//! forward pass and the gamma factors it contributes to the gradient.
//!
//! cargo run --example lateral_inhibition

use hm2bp::data::poisson_steps;
use hm2bp::grad::lateral_gamma;
use hm2bp::lif::{forward_compiled, CompiledNetwork, ForwardOptions};
use hm2bp::{LayerSpec, NetworkTopology, NeuronParams, Shape, TimeGrid};
use rand::SeedableRng;

fn main() -> hm2bp::Result<()> {
    let grid = TimeGrid::new(300.0, 1.0)?;
    let p = |nu| NeuronParams::for_grid(&grid, nu);
    let input = poisson_steps(&[200; 30], &grid, 0.3, 2);
    for w0 in [0.0, -0.5, -2.0] {
        let mut net = NetworkTopology::new(vec![
            LayerSpec::input(Shape::flat(30), p(1.0)?),
            LayerSpec::dense(5, p(5.0)?).with_lateral(w0).with_init_scale(0.6),
        ])?;
        net.init_uniform(&mut rand_chacha::ChaCha8Rng::seed_from_u64(8));
        let compiled = CompiledNetwork::new(&net);
        for lateral_forward in [false, true] {
            let opts = ForwardOptions {
                lateral_forward,
                ..ForwardOptions::default()
            };
            let fwd = forward_compiled(&net, &compiled, input.clone(), &grid, opts)?;
            let table = fwd.tables[1].as_ref().expect("tables built");
            let gamma = match &table.lateral {
                Some(l) => lateral_gamma(w0, 5.0, l, &table.o_post)?,
                None => vec![1.0; 5],
            };
            println!(
                "w0 = {w0:>4}, coupled forward = {lateral_forward:<5}: counts {:?}, gamma {:.4?}",
                fwd.output_counts(),
                gamma
            );
        }
    }
    Ok(())
}
