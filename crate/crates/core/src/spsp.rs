//! Post-synaptic potential kernel, spike-train level PSPs (S-PSP) and the
//! decoupled rate model used by the backward pass.
//!
//! The S-PSP `e_{i|j}` is the total potential that pre neuron `j` contributed
//! to post neuron `i` at the moments `i` fired. For a membrane that resets
//! to zero at `t_hat`, the potential left by one pre spike is the free
//! (never reset) response minus that response at the reset, decayed by the
//! membrane leak. With `B_j(t) = sum_f exp(-(t - t_f)/tau_m) - exp(-(t - t_f)/tau_s)`
//! that gives
//!
//! ```text
//! e_{i|j} = c * sum_{post spikes t} [ B_j(t) - exp(-(t - t_hat)/tau_m) * B_j(t_hat) ]
//! ```
//!
//! with `c = 1 / (1 - tau_s/tau_m)`. [`PspTraces`] keeps `B` on the grid so a
//! whole layer's table costs one pass per post spike instead of a double sum
//! over spike pairs. [`spsp`] evaluates the pair sum directly and is used for
//! off-grid trains and as a cross-check.

use crate::error::{Error, Result};
use crate::spike::{last_firing_before, NeuronParams, SpikeTrain, TimeGrid};
use crate::topology::Connectivity;

/// Normalised PSP evoked at time `t` after a pre spike, `s` after the last reset.
pub fn psp_kernel(s: f64, t: f64, params: &NeuronParams) -> f64 {
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let m = s.min(t);
    let carry = (-(t - s).max(0.0) / params.tau_s()).exp();
    params.kernel_scale() * carry * ((-m / params.tau_m()).exp() - (-m / params.tau_s()).exp())
}

/// Spike-train level PSP of `pre` onto `post`, by direct pair summation.
pub fn spsp(pre: &SpikeTrain, post: &SpikeTrain, params: &NeuronParams) -> f64 {
    let mut total = 0.0;
    for &ti in post.times() {
        let s = ti - last_firing_before(post, ti);
        for &tj in pre.times() {
            if tj >= ti {
                break;
            }
            total += psp_kernel(s, ti - tj, params);
        }
    }
    total
}

/// Total PSP: weighted sum of a post neuron's S-PSPs.
pub fn tpsp(weights_row: &[f64], spsp_row: &[f64]) -> Result<f64> {
    if weights_row.len() != spsp_row.len() {
        return Err(Error::config(format!(
            "tpsp: {} weights vs {} S-PSPs",
            weights_row.len(),
            spsp_row.len()
        )));
    }
    Ok(weights_row.iter().zip(spsp_row).map(|(w, e)| w * e).sum())
}

/// Firing count implied by a total PSP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountEstimate {
    /// `floor(a / nu)`, clamped at zero.
    pub floor: u64,
    /// `a / nu`, the differentiable form.
    pub smooth: f64,
}

pub fn firing_count_estimate(a: f64, nu: f64) -> CountEstimate {
    let smooth = a / nu;
    CountEstimate {
        floor: smooth.floor().max(0.0) as u64,
        smooth,
    }
}

/// Timing factor of the decoupled model, `e / (o_pre * o_post)`.
pub fn alpha_hat(e: f64, o_pre: u32, o_post: u32) -> f64 {
    if o_pre == 0 || o_post == 0 {
        0.0
    } else {
        e / (o_pre as f64 * o_post as f64)
    }
}

/// Estimated `de/do_post`.
pub fn d_spsp_d_opost(e: f64, o_post: u32) -> f64 {
    if o_post == 0 {
        0.0
    } else {
        e / o_post as f64
    }
}

/// Estimated `de/do_pre`.
pub fn d_spsp_d_opre(e: f64, o_pre: u32) -> f64 {
    if o_pre == 0 {
        0.0
    } else {
        e / o_pre as f64
    }
}

/// Free-response traces `B_j(n)` of a population, stored step-major.
#[derive(Debug, Clone)]
pub struct PspTraces {
    n_neurons: usize,
    data: Vec<f64>,
}

impl PspTraces {
    /// `spike_steps[j]` lists the (ascending) grid steps at which neuron `j` fires.
    pub fn build(spike_steps: &[Vec<u32>], grid: &TimeGrid, params: &NeuronParams) -> Self {
        let n = spike_steps.len();
        let n_steps = grid.n_steps();
        let by_step = bucket_by_step(spike_steps, n_steps);
        let dm = (-grid.dt_ms() / params.tau_m()).exp();
        let ds = (-grid.dt_ms() / params.tau_s()).exp();
        let mut am = vec![0.0; n];
        let mut as_ = vec![0.0; n];
        let mut data = vec![0.0; n * n_steps];
        for (step, firing) in by_step.iter().enumerate() {
            for (m, s) in am.iter_mut().zip(as_.iter_mut()) {
                *m *= dm;
                *s *= ds;
            }
            for &j in firing {
                am[j as usize] += 1.0;
                as_[j as usize] += 1.0;
            }
            let row = &mut data[step * n..(step + 1) * n];
            for ((b, m), s) in row.iter_mut().zip(&am).zip(&as_) {
                *b = m - s;
            }
        }
        Self { n_neurons: n, data }
    }

    pub fn at(&self, step: usize) -> &[f64] {
        &self.data[step * self.n_neurons..(step + 1) * self.n_neurons]
    }
}

/// Groups per-neuron spike steps into per-step lists of firing neurons.
pub(crate) fn bucket_by_step(spike_steps: &[Vec<u32>], n_steps: usize) -> Vec<Vec<u32>> {
    let mut by_step = vec![Vec::new(); n_steps];
    for (j, steps) in spike_steps.iter().enumerate() {
        for &s in steps {
            if (s as usize) < n_steps {
                by_step[s as usize].push(j as u32);
            }
        }
    }
    by_step
}

/// Per post spike: `(step, 1)` plus `(reset step, -exp(-(t - t_hat)/tau_m))`.
fn readout_coefficients(post: &[u32], grid: &TimeGrid, params: &NeuronParams) -> Vec<(usize, f64)> {
    let mut coefs = Vec::with_capacity(2 * post.len());
    let mut prev: Option<u32> = None;
    for &t in post {
        coefs.push((t as usize, 1.0));
        if let Some(p) = prev {
            let gap = (t - p) as f64 * grid.dt_ms();
            coefs.push((p as usize, -(-gap / params.tau_m()).exp()));
        }
        prev = Some(t);
    }
    coefs
}

/// S-PSPs among the neurons of a laterally inhibited layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralTable {
    pub w0: f64,
    pub n: usize,
    /// `e[i * n + l]` is the S-PSP of neuron `l`'s (one-step delayed) train onto `i`; the diagonal is zero.
    pub e: Vec<f64>,
}

impl LateralTable {
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.e[i * self.n + l]
    }
}

/// S-PSPs of one layer, cached from the forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpsPTable {
    /// One S-PSP per connection, in the layer's connection order. For dense
    /// layers this is the row-major `post x pre` matrix.
    pub e: Vec<f64>,
    pub o_pre: Vec<u32>,
    pub o_post: Vec<u32>,
    /// Feed-forward T-PSP per post neuron, `sum_j w_ij e_ij`.
    pub a: Vec<f64>,
    pub lateral: Option<LateralTable>,
}

impl SpsPTable {
    /// Builds the table of a layer from the grid spike steps of its pre and post populations.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        conn: &Connectivity,
        conn_weights: &[f64],
        pre_steps: &[Vec<u32>],
        post_steps: &[Vec<u32>],
        grid: &TimeGrid,
        params: &NeuronParams,
        lateral_w0: Option<f64>,
    ) -> Result<Self> {
        if pre_steps.len() != conn.n_pre() || post_steps.len() != conn.n_post() {
            return Err(Error::config(format!(
                "S-PSP table: populations {}→{} do not match connectivity {}→{}",
                pre_steps.len(),
                post_steps.len(),
                conn.n_pre(),
                conn.n_post()
            )));
        }
        let traces = PspTraces::build(pre_steps, grid, params);
        let scale = params.kernel_scale();
        let mut e = vec![0.0; conn.n_connections()];
        let mut a = vec![0.0; conn.n_post()];
        let pre_idx = conn.pre_indices();
        for (i, post) in post_steps.iter().enumerate() {
            if post.is_empty() {
                continue;
            }
            let row = conn.row(i);
            let e_row = &mut e[row.clone()];
            let pre_row = &pre_idx[row.clone()];
            for (step, coef) in readout_coefficients(post, grid, params) {
                let b = traces.at(step);
                for (ev, &j) in e_row.iter_mut().zip(pre_row) {
                    *ev += coef * b[j as usize];
                }
            }
            let mut ai = 0.0;
            for (ev, w) in e_row.iter_mut().zip(&conn_weights[row]) {
                *ev *= scale;
                ai += w * *ev;
            }
            a[i] = ai;
        }
        let lateral = match lateral_w0 {
            Some(w0) => Some(lateral_table(post_steps, grid, params, w0)),
            None => None,
        };
        Ok(Self {
            e,
            o_pre: pre_steps.iter().map(|s| s.len() as u32).collect(),
            o_post: post_steps.iter().map(|s| s.len() as u32).collect(),
            a,
            lateral,
        })
    }
}

/// One-step delayed copy of each train, dropping spikes that fall off the grid.
pub(crate) fn delayed_steps(steps: &[Vec<u32>], n_steps: usize) -> Vec<Vec<u32>> {
    steps
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| t + 1)
                .filter(|&t| (t as usize) < n_steps)
                .collect()
        })
        .collect()
}

fn lateral_table(post_steps: &[Vec<u32>], grid: &TimeGrid, params: &NeuronParams, w0: f64) -> LateralTable {
    let n = post_steps.len();
    let delayed = delayed_steps(post_steps, grid.n_steps());
    let traces = PspTraces::build(&delayed, grid, params);
    let scale = params.kernel_scale();
    let mut e = vec![0.0; n * n];
    for (i, post) in post_steps.iter().enumerate() {
        let row = &mut e[i * n..(i + 1) * n];
        for (step, coef) in readout_coefficients(post, grid, params) {
            let b = traces.at(step);
            for (l, v) in row.iter_mut().enumerate() {
                if l != i {
                    *v += coef * b[l];
                }
            }
        }
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    LateralTable { w0, n, e }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params(tau_m: f64, tau_s: f64) -> NeuronParams {
        NeuronParams::new(tau_m, tau_s, 10.0).unwrap()
    }

    /// Composite Simpson quadrature of the kernel's defining integral.
    fn kernel_quadrature(s: f64, t: f64, p: &NeuronParams) -> f64 {
        if s <= 0.0 || t <= 0.0 {
            return 0.0;
        }
        let upper = s.min(t);
        let n = 20_000;
        let h = upper / n as f64;
        let f = |x: f64| (-x / p.tau_m()).exp() * (-(t - x) / p.tau_s()).exp() / p.tau_s();
        let mut acc = f(0.0) + f(upper);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn kernel_heaviside_factors() {
        let p = params(8.0, 2.0);
        assert_eq!(psp_kernel(4.0, -1.0, &p), 0.0);
        assert_eq!(psp_kernel(-1.0, 4.0, &p), 0.0);
    }

    #[test]
    fn kernel_matches_quadrature() {
        let p = params(8.0, 2.0);
        let v = psp_kernel(4.0, 4.0, &p);
        let expected = (1.0 / 0.75) * ((-0.5f64).exp() - (-2.0f64).exp());
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.62825).abs() < 5e-5);
        assert!((v - kernel_quadrature(4.0, 4.0, &p)).abs() < 1e-8);
        for &(s, t) in &[(1.0, 3.0), (5.0, 2.0), (0.3, 10.0), (12.0, 12.5)] {
            assert!((psp_kernel(s, t, &p) - kernel_quadrature(s, t, &p)).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_continuous_at_reset() {
        let p = params(8.0, 2.0);
        let s = 3.7;
        let h = 1e-12;
        assert!((psp_kernel(s, s - h, &p) - psp_kernel(s, s + h, &p)).abs() < 1e-9);
    }

    #[test]
    fn spsp_edge_cases() {
        let p = params(8.0, 2.0);
        let pre = SpikeTrain::new(vec![1.0]).unwrap();
        let post = SpikeTrain::new(vec![5.0]).unwrap();
        assert_eq!(spsp(&SpikeTrain::empty(), &post, &p), 0.0);
        assert_eq!(spsp(&pre, &SpikeTrain::empty(), &p), 0.0);
        let direct = spsp(&pre, &post, &p);
        assert_eq!(direct, psp_kernel(5.0, 4.0, &p));
        assert!((direct - kernel_quadrature(5.0, 4.0, &p)).abs() < 1e-8);
    }

    #[test]
    fn tpsp_examples() {
        assert_eq!(tpsp(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert_eq!(tpsp(&[1.0], &[3.2]).unwrap(), 3.2);
        assert_eq!(tpsp(&[2.0, -1.0], &[3.0, 4.0]).unwrap(), 2.0);
        assert!(tpsp(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn count_estimates() {
        assert_eq!(firing_count_estimate(23.0, 10.0), CountEstimate { floor: 2, smooth: 2.3 });
        assert_eq!(firing_count_estimate(0.0, 10.0).floor, 0);
        assert_eq!(firing_count_estimate(9.99, 10.0).floor, 0);
        assert_eq!(firing_count_estimate(-5.0, 10.0).floor, 0);
    }

    #[test]
    fn decoupled_model() {
        assert_eq!(alpha_hat(6.0, 2, 3), 1.0);
        assert_eq!(alpha_hat(0.0, 0, 5), 0.0);
        assert_eq!(d_spsp_d_opost(4.0, 2), 2.0);
        assert_eq!(d_spsp_d_opre(0.0, 0), 0.0);

        let p = params(8.0, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pre = random_train(&mut rng, 60.0, 0.2);
            let post = random_train(&mut rng, 60.0, 0.1);
            let e = spsp(&pre, &post, &p);
            let (op, oq) = (pre.times().len() as u32, post.times().len() as u32);
            let ah = alpha_hat(e, op, oq);
            if op > 0 && oq > 0 {
                assert!((ah - e / (op as f64 * oq as f64)).abs() < 1e-15);
                assert!((d_spsp_d_opost(e, oq) - ah * op as f64).abs() < 1e-12);
                assert!((d_spsp_d_opre(e, op) - ah * oq as f64).abs() < 1e-12);
            } else {
                assert_eq!(e, 0.0);
                assert_eq!(ah, 0.0);
            }
        }
    }

    fn random_train<R: Rng>(rng: &mut R, len: f64, rate: f64) -> SpikeTrain {
        let steps = (0..len as usize).filter(|_| rng.gen_bool(rate)).map(|s| s as f64).collect();
        SpikeTrain::new(steps).unwrap()
    }

    fn to_steps(t: &SpikeTrain, g: &TimeGrid) -> Vec<u32> {
        t.steps(g).map(|s| s as u32).collect()
    }

    #[test]
    fn table_matches_pair_sums() {
        let g = TimeGrid::new(120.0, 1.0).unwrap();
        let p = params(16.0, 4.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pre: Vec<SpikeTrain> = (0..5).map(|_| random_train(&mut rng, 120.0, 0.15)).collect();
        let post: Vec<SpikeTrain> = (0..3).map(|_| random_train(&mut rng, 120.0, 0.08)).collect();
        let conn = Connectivity::dense(5, 3);
        let w: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pre_steps: Vec<Vec<u32>> = pre.iter().map(|t| to_steps(t, &g)).collect();
        let post_steps: Vec<Vec<u32>> = post.iter().map(|t| to_steps(t, &g)).collect();
        let table = SpsPTable::build(&conn, &w, &pre_steps, &post_steps, &g, &p, Some(-1.0)).unwrap();
        for i in 0..3 {
            let row: Vec<f64> = (0..5).map(|j| spsp(&pre[j], &post[i], &p)).collect();
            for j in 0..5 {
                let v = table.e[i * 5 + j];
                assert!((v - row[j]).abs() <= 1e-10 * (1.0 + row[j].abs()), "e[{i}][{j}] {v} vs {}", row[j]);
                assert!(v >= -1e-12);
            }
            let a = tpsp(&w[i * 5..(i + 1) * 5], &table.e[i * 5..(i + 1) * 5]).unwrap();
            assert!((a - table.a[i]).abs() < 1e-12);
            let lat = table.lateral.as_ref().unwrap();
            for l in 0..3 {
                let expected = if l == i {
                    0.0
                } else {
                    spsp(&post[l].shifted(1.0, 120.0), &post[i], &p)
                };
                assert!((lat.get(i, l) - expected).abs() < 1e-10);
            }
        }
        assert_eq!(table.o_pre, pre.iter().map(|t| t.times().len() as u32).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn kernel_non_negative(s in 0.0f64..200.0, t in 0.0f64..200.0, tau_s in 0.5f64..10.0, ratio in 1.01f64..20.0) {
            let p = NeuronParams::new(tau_s * ratio, tau_s, 1.0).unwrap();
            prop_assert!(psp_kernel(s, t, &p) >= 0.0);
        }

        #[test]
        fn spsp_additive_over_disjoint_pre(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = params(8.0, 2.0);
            let post = random_train(&mut rng, 80.0, 0.1);
            let all: Vec<f64> = (0..80).filter(|_| rng.gen_bool(0.3)).map(|s| s as f64).collect();
            let (a, b): (Vec<f64>, Vec<f64>) = all.iter().partition(|_| rng.gen_bool(0.5));
            let ta = SpikeTrain::new(a).unwrap();
            let tb = SpikeTrain::new(b).unwrap();
            let union = SpikeTrain::new(all).unwrap();
            let lhs = spsp(&union, &post, &p);
            let rhs = spsp(&ta, &post, &p) + spsp(&tb, &post, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn tpsp_linear_in_weights(w in prop::collection::vec(-2.0f64..2.0, 1..20), lambda in -4.0f64..4.0) {
            let e: Vec<f64> = (0..w.len()).map(|k| k as f64 * 0.37).collect();
            let scaled: Vec<f64> = w.iter().map(|v| v * lambda).collect();
            let lhs = tpsp(&scaled, &e).unwrap();
            let rhs = lambda * tpsp(&w, &e).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
