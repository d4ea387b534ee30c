//! Simulates one LIF neuron driven by Poisson inputs and writes its membrane
//! trace as `step time voltage spike` lines.
//!
//! cargo run --example lif_trace -- [trace.tsv]

use std::io::Write;

use hm2bp::data::poisson_encode;
use hm2bp::lif::simulate_layer;
use hm2bp::{NeuronParams, TimeGrid};

fn main() -> hm2bp::Result<()> {
    let grid = TimeGrid::new(200.0, 1.0)?;
    let params = NeuronParams::for_grid(&grid, 10.0)?;
    // 40 inputs at 20% per-step firing probability.
    let inputs = poisson_encode(&[102; 40], &grid, 0.5, 3);
    let weights = vec![(0..40).map(|j| if j % 4 == 0 { -0.1 } else { 0.25 }).collect::<Vec<f64>>()];
    let (post, traces) = simulate_layer(&inputs, &weights, &params, &grid, None)?;
    println!("{} input spikes, {} output spikes", inputs.iter().map(|t| t.times().len()).sum::<usize>(), post[0].times().len());
    println!("output spike times (ms): {:?}", post[0].times());

    let path = std::env::args().nth(1).unwrap_or_else(|| "lif_trace.tsv".into());
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "step\ttime_ms\tvoltage\tspike")?;
    traces[0].write_log(&grid, &mut out)?;
    println!("trace written to {path}");
    Ok(())
}
