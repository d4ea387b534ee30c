//! Discrete-time LIF simulation with first-order synaptic current.
//!
//! Both state variables decay in closed form over a step, so the simulated
//! membrane equals the SRM sum of PSP kernels exactly for inputs that lie on
//! the grid. Per step `n`:
//!
//! 1. advance `u` and `I` from `t_{n-1}` to `t_n`;
//! 2. if `u >= nu`, record a spike at step `n` and reset `u` to zero;
//! 3. inject the charge of pre spikes at step `n` (and lateral spikes from step `n-1`).

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::spike::{last_firing_before, NeuronParams, SpikeTrain, TimeGrid};
use crate::spsp::{bucket_by_step, psp_kernel, SpsPTable};
use crate::topology::{Connectivity, NetworkTopology};

/// Voltage of one neuron at every grid step, after reset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MembraneTrace {
    pub voltages: Vec<f64>,
    pub spike_steps: Vec<usize>,
}

impl MembraneTrace {
    /// Writes a `step voltage spike` line per step.
    pub fn write_log<W: Write>(&self, grid: &TimeGrid, out: &mut W) -> io::Result<()> {
        let mut spikes = self.spike_steps.iter().peekable();
        for (n, v) in self.voltages.iter().enumerate() {
            let fired = spikes.next_if(|&&s| s == n).is_some();
            writeln!(out, "{n}\t{:.4}\t{v:.6}\t{}", grid.time_of(n), u8::from(fired))?;
        }
        Ok(())
    }
}

/// Per-step decay constants of the two-state update.
#[derive(Debug, Clone, Copy)]
struct StepConstants {
    membrane_decay: f64,
    synapse_decay: f64,
    current_gain: f64,
    charge: f64,
}

impl StepConstants {
    fn new(params: &NeuronParams, dt: f64) -> Self {
        let dm = (-dt / params.tau_m()).exp();
        let ds = (-dt / params.tau_s()).exp();
        Self {
            membrane_decay: dm,
            synapse_decay: ds,
            current_gain: (dm - ds) / (1.0 / params.tau_s() - 1.0 / params.tau_m()),
            charge: 1.0 / params.tau_s(),
        }
    }
}

/// Connection weights of one layer laid out for the forward and backward passes.
#[derive(Debug, Clone)]
pub struct CompiledLayer {
    /// Weight per connection, in row (post-major) order.
    pub conn_weights: Vec<f64>,
    by_col_weight: Vec<f64>,
    by_col_post: Vec<u32>,
}

impl CompiledLayer {
    pub fn new(conn: &Connectivity, slots: &[f64]) -> Self {
        let conn_weights = conn.connection_weights(slots);
        let post = conn.post_of_connections();
        let by_col_weight = conn.col_conn().iter().map(|&c| conn_weights[c as usize]).collect();
        let by_col_post = conn.col_conn().iter().map(|&c| post[c as usize]).collect();
        Self {
            conn_weights,
            by_col_weight,
            by_col_post,
        }
    }
}

/// Per-layer compiled weights of a whole network (index 0 is the input and stays `None`).
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    pub layers: Vec<Option<CompiledLayer>>,
}

impl CompiledNetwork {
    pub fn new(net: &NetworkTopology) -> Self {
        let layers = (0..net.n_layers())
            .map(|k| net.link(k).map(|c| CompiledLayer::new(c, net.weights(k))))
            .collect();
        Self { layers }
    }
}

/// Simulates one layer on the grid and returns the post spike steps.
pub fn simulate_connected(
    conn: &Connectivity,
    layer: &CompiledLayer,
    pre_steps: &[Vec<u32>],
    params: &NeuronParams,
    grid: &TimeGrid,
    lateral_w0: Option<f64>,
    record: bool,
) -> Result<(Vec<Vec<u32>>, Option<Vec<MembraneTrace>>)> {
    if pre_steps.len() != conn.n_pre() {
        return Err(Error::config(format!(
            "layer expects {} pre neurons, got {}",
            conn.n_pre(),
            pre_steps.len()
        )));
    }
    let n = conn.n_post();
    let n_steps = grid.n_steps();
    let k = StepConstants::new(params, grid.dt_ms());
    let nu = params.threshold();
    let by_step = bucket_by_step(pre_steps, n_steps);
    let col_ptr = conn.col_ptr();

    let mut u = vec![0.0f64; n];
    let mut current = vec![0.0f64; n];
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut traces = record.then(|| {
        (0..n)
            .map(|_| MembraneTrace {
                voltages: Vec::with_capacity(n_steps),
                spike_steps: Vec::new(),
            })
            .collect::<Vec<_>>()
    });
    let mut fired_prev: Vec<u32> = Vec::new();
    let mut fired_now: Vec<u32> = Vec::new();

    for step in 0..n_steps {
        if step > 0 {
            for (ui, ii) in u.iter_mut().zip(current.iter_mut()) {
                *ui = *ui * k.membrane_decay + *ii * k.current_gain;
                *ii *= k.synapse_decay;
            }
        }
        fired_now.clear();
        for (i, ui) in u.iter_mut().enumerate() {
            if *ui >= nu {
                *ui = 0.0;
                out[i].push(step as u32);
                fired_now.push(i as u32);
            }
        }
        if let Some(tr) = traces.as_mut() {
            for (i, t) in tr.iter_mut().enumerate() {
                t.voltages.push(u[i]);
            }
            for &i in &fired_now {
                tr[i as usize].spike_steps.push(step);
            }
        }
        for &j in &by_step[step] {
            let j = j as usize;
            for c in col_ptr[j]..col_ptr[j + 1] {
                current[layer.by_col_post[c] as usize] += layer.by_col_weight[c] * k.charge;
            }
        }
        if let Some(w0) = lateral_w0 {
            if !fired_prev.is_empty() {
                let total = fired_prev.len() as f64;
                for (i, ii) in current.iter_mut().enumerate() {
                    let self_spikes = fired_prev.binary_search(&(i as u32)).is_ok() as u8 as f64;
                    *ii += w0 * (total - self_spikes) * k.charge;
                }
            }
        }
        std::mem::swap(&mut fired_prev, &mut fired_now);
    }
    Ok((out, traces))
}

/// Simulates a dense layer driven by `pre_trains` through `weights[post][pre]`.
///
/// Input times are rounded to the nearest grid step; spikes outside the
/// window are dropped. `lateral_w0` couples the post neurons with a fixed
/// weight and a one-step delay.
pub fn simulate_layer(
    pre_trains: &[SpikeTrain],
    weights: &[Vec<f64>],
    params: &NeuronParams,
    grid: &TimeGrid,
    lateral_w0: Option<f64>,
) -> Result<(Vec<SpikeTrain>, Vec<MembraneTrace>)> {
    let n_pre = pre_trains.len();
    if weights.iter().any(|row| row.len() != n_pre) {
        return Err(Error::config(format!(
            "weight rows must have {n_pre} columns to match the pre-synaptic trains"
        )));
    }
    let conn = Connectivity::dense(n_pre, weights.len());
    let flat: Vec<f64> = weights.iter().flatten().copied().collect();
    let layer = CompiledLayer::new(&conn, &flat);
    let pre_steps = trains_to_steps(pre_trains, grid);
    let (post, traces) = simulate_connected(&conn, &layer, &pre_steps, params, grid, lateral_w0, true)?;
    let trains = post.iter().map(|s| steps_to_train(s, grid)).collect();
    Ok((trains, traces.unwrap_or_default()))
}

/// Membrane potential of a neuron from its SRM form at time `t`.
pub fn srm_membrane(
    pre_trains: &[SpikeTrain],
    weights_row: &[f64],
    post_train: &SpikeTrain,
    params: &NeuronParams,
    t: f64,
) -> f64 {
    let s = t - last_firing_before(post_train, t);
    pre_trains
        .iter()
        .zip(weights_row)
        .map(|(pre, w)| {
            w * pre
                .times()
                .iter()
                .map(|&tj| psp_kernel(s, t - tj, params))
                .sum::<f64>()
        })
        .sum()
}

/// Converts trains to ascending grid steps, dropping anything past the window.
pub fn trains_to_steps(trains: &[SpikeTrain], grid: &TimeGrid) -> Vec<Vec<u32>> {
    trains
        .iter()
        .map(|t| {
            let mut steps: Vec<u32> = t
                .steps(grid)
                .filter(|&s| s < grid.n_steps())
                .map(|s| s as u32)
                .collect();
            steps.dedup();
            steps
        })
        .collect()
}

pub fn steps_to_train(steps: &[u32], grid: &TimeGrid) -> SpikeTrain {
    let s: Vec<usize> = steps.iter().map(|&v| v as usize).collect();
    SpikeTrain::from_steps(&s, grid)
}

/// Switches for [`forward_pass`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    /// Couple the output layer through its lateral-inhibition synapses.
    pub lateral_forward: bool,
    /// Build the S-PSP tables needed by the backward pass.
    pub build_tables: bool,
    /// Keep membrane traces of every layer.
    pub record_traces: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            lateral_forward: true,
            build_tables: true,
            record_traces: false,
        }
    }
}

/// Everything the backward pass needs from one forward simulation.
#[derive(Debug, Clone)]
pub struct ForwardArtifacts {
    /// Spike steps per layer per neuron; layer 0 is the input.
    pub spikes: Vec<Vec<Vec<u32>>>,
    /// S-PSP table per layer (`None` for the input, or when tables were skipped).
    pub tables: Vec<Option<SpsPTable>>,
    pub traces: Option<Vec<Vec<MembraneTrace>>>,
}

impl ForwardArtifacts {
    pub fn counts(&self, layer: usize) -> Vec<u32> {
        self.spikes[layer].iter().map(|s| s.len() as u32).collect()
    }

    pub fn output_counts(&self) -> Vec<u32> {
        self.counts(self.spikes.len() - 1)
    }

    pub fn trains(&self, layer: usize, grid: &TimeGrid) -> Vec<SpikeTrain> {
        self.spikes[layer].iter().map(|s| steps_to_train(s, grid)).collect()
    }
}

/// Runs every layer in order on grid-step inputs.
pub fn forward_compiled(
    net: &NetworkTopology,
    compiled: &CompiledNetwork,
    input_steps: Vec<Vec<u32>>,
    grid: &TimeGrid,
    opts: ForwardOptions,
) -> Result<ForwardArtifacts> {
    if input_steps.len() != net.input_len() {
        return Err(Error::config(format!(
            "network expects {} input trains, got {}",
            net.input_len(),
            input_steps.len()
        )));
    }
    let last = net.n_layers() - 1;
    let mut spikes = vec![input_steps];
    let mut tables = vec![None];
    let mut traces = opts.record_traces.then(|| vec![Vec::new()]);
    for k in 1..net.n_layers() {
        let conn = net.link(k).expect("non-input layer has connectivity");
        let layer = compiled.layers[k].as_ref().expect("compiled layer");
        let spec = net.layer(k);
        let w0 = (k == last && spec.lateral_w0 != 0.0).then_some(spec.lateral_w0);
        let forward_w0 = if opts.lateral_forward { w0 } else { None };
        let (post, tr) = simulate_connected(
            conn,
            layer,
            &spikes[k - 1],
            &spec.params,
            grid,
            forward_w0,
            opts.record_traces,
        )?;
        if let (Some(all), Some(tr)) = (traces.as_mut(), tr) {
            all.push(tr);
        }
        let table = if opts.build_tables {
            Some(SpsPTable::build(
                conn,
                &layer.conn_weights,
                &spikes[k - 1],
                &post,
                grid,
                &spec.params,
                w0,
            )?)
        } else {
            None
        };
        tables.push(table);
        spikes.push(post);
    }
    Ok(ForwardArtifacts {
        spikes,
        tables,
        traces,
    })
}

/// Forward simulation of a network on spike-train inputs.
pub fn forward_pass(
    net: &NetworkTopology,
    input_trains: &[SpikeTrain],
    grid: &TimeGrid,
    opts: ForwardOptions,
) -> Result<ForwardArtifacts> {
    let compiled = CompiledNetwork::new(net);
    forward_compiled(net, &compiled, trains_to_steps(input_trains, grid), grid, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LayerSpec, Shape};
    use rand::{Rng, SeedableRng};

    fn p() -> NeuronParams {
        NeuronParams::new(8.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn zero_weights_stay_silent() {
        let g = TimeGrid::new(50.0, 1.0).unwrap();
        let pre: Vec<SpikeTrain> = (0..3)
            .map(|k| SpikeTrain::new(vec![k as f64, 10.0 + k as f64]).unwrap())
            .collect();
        let (post, traces) = simulate_layer(&pre, &[vec![0.0; 3], vec![0.0; 3]], &p(), &g, None).unwrap();
        assert!(post.iter().all(SpikeTrain::is_empty));
        assert!(traces.iter().all(|t| t.voltages.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_strong_spike_fires_once() {
        // One pre spike at t=0 on a 4 ms grid. At step 1 the PSP is
        // eps(4, 4) = (e^-0.5 - e^-2)/0.75 = 0.62826, so a weight of 2 lifts u
        // to 1.2565 >= nu = 1 while 1.5 would stay below threshold. After the
        // reset the residual current peaks far below threshold.
        let g = TimeGrid::new(80.0, 4.0).unwrap();
        let params = NeuronParams::new(8.0, 2.0, 1.0).unwrap();
        let peak = psp_kernel(4.0, 4.0, &params);
        assert!((peak - 0.6282605).abs() < 1e-6);
        assert!(2.0 * peak >= 1.0 && 1.5 * peak < 1.0);
        let pre = vec![SpikeTrain::new(vec![0.0]).unwrap()];
        let (post, traces) = simulate_layer(&pre, &[vec![2.0]], &params, &g, None).unwrap();
        assert_eq!(post[0].times(), &[4.0]);
        assert_eq!(traces[0].spike_steps, vec![1]);
        assert_eq!(traces[0].voltages[1], 0.0);
        let (quiet, _) = simulate_layer(&pre, &[vec![1.5]], &params, &g, None).unwrap();
        assert!(quiet[0].is_empty());
    }

    #[test]
    fn identical_rows_identical_trains() {
        let g = TimeGrid::new(100.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pre: Vec<SpikeTrain> = (0..6)
            .map(|_| SpikeTrain::new((0..100).filter(|_| rng.gen_bool(0.1)).map(|s| s as f64).collect()).unwrap())
            .collect();
        let row: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (post, _) = simulate_layer(&pre, &[row.clone(), row], &p(), &g, None).unwrap();
        assert_eq!(post[0], post[1]);
        assert!(!post[0].is_empty());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let g = TimeGrid::new(10.0, 1.0).unwrap();
        let pre = vec![SpikeTrain::empty(); 2];
        let err = simulate_layer(&pre, &[vec![1.0; 3]], &p(), &g, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn srm_zero_before_input_and_linear() {
        let params = p();
        let pre = vec![SpikeTrain::new(vec![5.0]).unwrap(), SpikeTrain::new(vec![7.0]).unwrap()];
        let post = SpikeTrain::empty();
        assert_eq!(srm_membrane(&pre, &[1.0, 1.0], &post, &params, 4.0), 0.0);
        let u = srm_membrane(&pre, &[0.5, -0.25], &post, &params, 12.0);
        let u2 = srm_membrane(&pre, &[1.0, -0.5], &post, &params, 12.0);
        assert_eq!(u2, 2.0 * u);
    }

    #[test]
    fn trace_matches_srm_on_grid_inputs() {
        let g = TimeGrid::new(150.0, 1.0).unwrap();
        let params = NeuronParams::new(20.0, 5.0, 1.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pre: Vec<SpikeTrain> = (0..8)
            .map(|_| SpikeTrain::new((0..150).filter(|_| rng.gen_bool(0.08)).map(|s| s as f64).collect()).unwrap())
            .collect();
        let weights: Vec<Vec<f64>> = (0..3).map(|_| (0..8).map(|_| rng.gen_range(-0.5..1.0)).collect()).collect();
        let (post, traces) = simulate_layer(&pre, &weights, &params, &g, None).unwrap();
        for i in 0..3 {
            for n in 0..g.n_steps() {
                if traces[i].spike_steps.contains(&n) {
                    continue;
                }
                let srm = srm_membrane(&pre, &weights[i], &post[i], &params, g.time_of(n));
                assert!((srm - traces[i].voltages[n]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lateral_inhibition_suppresses() {
        let g = TimeGrid::new(200.0, 1.0).unwrap();
        let params = NeuronParams::new(20.0, 5.0, 1.0).unwrap();
        let pre = vec![SpikeTrain::new((0..200).step_by(4).map(|s| s as f64).collect()).unwrap()];
        let weights = vec![vec![1.0], vec![0.9]];
        let (free, _) = simulate_layer(&pre, &weights, &params, &g, None).unwrap();
        let (inhibited, _) = simulate_layer(&pre, &weights, &params, &g, Some(-2.0)).unwrap();
        let total = |t: &[SpikeTrain]| t.iter().map(|x| x.times().len()).sum::<usize>();
        assert!(total(&inhibited) < total(&free));
        let (zero, _) = simulate_layer(&pre, &weights, &params, &g, Some(0.0)).unwrap();
        assert_eq!(zero, free);
    }

    #[test]
    fn forward_pass_determinism_and_zero_net() {
        let g = TimeGrid::new(100.0, 1.0).unwrap();
        let params = NeuronParams::new(16.0, 4.0, 2.0).unwrap();
        let mut net = NetworkTopology::new(vec![
            LayerSpec::input(Shape::flat(10), params),
            LayerSpec::dense(6, params),
            LayerSpec::dense(3, params).with_lateral(-0.5),
        ])
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let input: Vec<SpikeTrain> = (0..10)
            .map(|_| SpikeTrain::new((0..100).filter(|_| rng.gen_bool(0.2)).map(|s| s as f64).collect()).unwrap())
            .collect();
        let zero = forward_pass(&net, &input, &g, ForwardOptions::default()).unwrap();
        assert!(zero.output_counts().iter().all(|&c| c == 0));

        net.init_uniform(&mut rng);
        let a = forward_pass(&net, &input, &g, ForwardOptions::default()).unwrap();
        let b = forward_pass(&net, &input, &g, ForwardOptions::default()).unwrap();
        assert_eq!(a.spikes, b.spikes);
        assert_eq!(a.tables, b.tables);
        assert!(forward_pass(&net, &input[..9], &g, ForwardOptions::default()).is_err());
    }

    #[test]
    fn single_synapse_network_fires() {
        let g = TimeGrid::new(40.0, 1.0).unwrap();
        let params = p();
        let mut net = NetworkTopology::new(vec![
            LayerSpec::input(Shape::flat(1), params),
            LayerSpec::dense(1, params),
        ])
        .unwrap();
        net.weights_mut(1)[0] = 4.0;
        let input = vec![SpikeTrain::new(vec![0.0]).unwrap()];
        let out = forward_pass(&net, &input, &g, ForwardOptions::default()).unwrap();
        assert!(out.output_counts()[0] >= 1);
    }

    #[test]
    fn trace_log_format() {
        let g = TimeGrid::new(3.0, 1.0).unwrap();
        let t = MembraneTrace {
            voltages: vec![0.0, 0.5, 0.0],
            spike_steps: vec![2],
        };
        let mut buf = Vec::new();
        t.write_log(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with("\t1"));
    }
}
