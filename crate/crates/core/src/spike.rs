//! Spike trains, simulation grids and per-layer neuron constants.

use crate::error::{Error, Result};

/// Uniform simulation grid over one presentation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    duration_ms: f64,
    dt_ms: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(duration_ms: f64, dt_ms: f64) -> Result<Self> {
        if !(dt_ms > 0.0) || !dt_ms.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {dt_ms}")));
        }
        if !(duration_ms > 0.0) || !duration_ms.is_finite() {
            return Err(Error::config(format!(
                "duration must be positive, got {duration_ms}"
            )));
        }
        let n_steps = (duration_ms / dt_ms).round() as usize;
        if n_steps == 0 {
            return Err(Error::config("grid has zero steps"));
        }
        Ok(Self {
            duration_ms,
            dt_ms,
            n_steps,
        })
    }

    /// 400 ms at 1 ms, the static-image presentation window.
    pub fn mnist() -> Self {
        Self::new(400.0, 1.0).expect("valid grid")
    }

    /// 300 ms at 0.6 ms, the neuromorphic presentation window.
    pub fn nmnist() -> Self {
        Self::new(300.0, 0.6).expect("valid grid")
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Grid time of step `n`.
    pub fn time_of(&self, step: usize) -> f64 {
        step as f64 * self.dt_ms
    }

    /// Nearest grid step of a time in ms.
    pub fn step_of(&self, t_ms: f64) -> usize {
        (t_ms / self.dt_ms).round().max(0.0) as usize
    }
}

/// Firing times of one neuron within one window, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpikeTrain {
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn empty() -> Self {
        Self { times: Vec::new() }
    }

    /// Builds a train from already strictly increasing times.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::data("spike times must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data("spike times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    /// Sorts unordered input and drops exact duplicates.
    pub fn from_unsorted(mut times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::data("spike times must be finite"));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        Self::new(times)
    }

    /// Train from ascending step indices on `grid`. Duplicate steps collapse.
    pub fn from_steps(steps: &[usize], grid: &TimeGrid) -> Self {
        let mut times: Vec<f64> = Vec::with_capacity(steps.len());
        let mut last = None;
        for &s in steps {
            if last.is_some_and(|l| s <= l) {
                continue;
            }
            last = Some(s);
            times.push(grid.time_of(s));
        }
        Self { times }
    }

    /// Checks that every spike lies in `[0, duration)` of `grid`.
    pub fn check_window(&self, grid: &TimeGrid) -> Result<()> {
        match self.times.last() {
            Some(&t) if t >= grid.duration_ms() => Err(Error::data(format!(
                "spike at {t} ms outside window of {} ms",
                grid.duration_ms()
            ))),
            _ => Ok(()),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Step index of every spike on `grid`.
    pub fn steps(&self, grid: &TimeGrid) -> impl Iterator<Item = usize> + '_ {
        let dt = grid.dt_ms();
        self.times.iter().map(move |t| (t / dt).round() as usize)
    }

    /// Same train delayed by `delay_ms`, keeping only spikes before `end_ms`.
    pub fn shifted(&self, delay_ms: f64, end_ms: f64) -> Self {
        Self {
            times: self
                .times
                .iter()
                .map(|t| t + delay_ms)
                .filter(|t| *t < end_ms)
                .collect(),
        }
    }

    /// Union of two trains; coincident spikes collapse.
    pub fn merge(&self, other: &SpikeTrain) -> Self {
        let mut times = Vec::with_capacity(self.times.len() + other.times.len());
        times.extend_from_slice(&self.times);
        times.extend_from_slice(&other.times);
        Self::from_unsorted(times).expect("merged trains are finite")
    }
}

/// Number of spikes in a train.
pub fn firing_count(train: &SpikeTrain) -> usize {
    train.times.len()
}

/// Latest spike strictly before `t`, or the window start when there is none.
pub fn last_firing_before(train: &SpikeTrain, t: f64) -> f64 {
    let idx = train.times.partition_point(|&tf| tf < t);
    if idx == 0 {
        0.0
    } else {
        train.times[idx - 1]
    }
}

/// Membrane and synaptic time constants plus firing threshold of one layer.
///
/// Charge and capacitance are folded into the weights, so the membrane obeys
/// `du/dt = -u/tau_m + I(t)` with first-order synaptic current of time
/// constant `tau_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    tau_m: f64,
    tau_s: f64,
    threshold: f64,
}

impl NeuronParams {
    pub fn new(tau_m: f64, tau_s: f64, threshold: f64) -> Result<Self> {
        if !(tau_s > 0.0) || !tau_m.is_finite() || !tau_s.is_finite() {
            return Err(Error::config(format!(
                "time constants must be positive and finite (tau_m={tau_m}, tau_s={tau_s})"
            )));
        }
        if !(tau_m > tau_s) {
            return Err(Error::config(format!(
                "tau_m must exceed tau_s (tau_m={tau_m}, tau_s={tau_s})"
            )));
        }
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::config(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self {
            tau_m,
            tau_s,
            threshold,
        })
    }

    /// Default constants for a grid: `tau_m = 64 dt`, `tau_s = 8 dt`.
    pub fn for_grid(grid: &TimeGrid, threshold: f64) -> Result<Self> {
        Self::new(64.0 * grid.dt_ms(), 8.0 * grid.dt_ms(), threshold)
    }

    pub fn tau_m(&self) -> f64 {
        self.tau_m
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        Self::new(self.tau_m, self.tau_s, self.threshold)
    }

    /// `1 / (1 - tau_s / tau_m)`, the kernel normalisation.
    pub fn kernel_scale(&self) -> f64 {
        1.0 / (1.0 - self.tau_s / self.tau_m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train(times: &[f64]) -> SpikeTrain {
        SpikeTrain::new(times.to_vec()).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(firing_count(&SpikeTrain::empty()), 0);
        assert_eq!(firing_count(&train(&[1.0, 5.0, 9.0])), 3);
    }

    #[test]
    fn last_firing() {
        let t = train(&[2.0, 6.0]);
        assert_eq!(last_firing_before(&t, 5.0), 2.0);
        assert_eq!(last_firing_before(&t, 2.0), 0.0);
        assert_eq!(last_firing_before(&t, 7.0), 6.0);
        assert_eq!(last_firing_before(&SpikeTrain::empty(), 3.0), 0.0);
    }

    #[test]
    fn rejects_unordered_and_duplicates() {
        assert!(SpikeTrain::new(vec![3.0, 1.0]).is_err());
        assert!(SpikeTrain::new(vec![1.0, 1.0]).is_err());
        assert!(SpikeTrain::new(vec![-1.0]).is_err());
    }

    #[test]
    fn grid_steps() {
        let g = TimeGrid::new(300.0, 0.6).unwrap();
        assert_eq!(g.n_steps(), 500);
        assert!((g.n_steps() as f64 * g.dt_ms() - g.duration_ms()).abs() < g.dt_ms());
        assert!(TimeGrid::new(10.0, 0.0).is_err());
        assert!(TimeGrid::new(10.0, -1.0).is_err());
    }

    #[test]
    fn from_steps_collapses_duplicates() {
        let g = TimeGrid::new(10.0, 0.5).unwrap();
        let t = SpikeTrain::from_steps(&[1, 1, 4], &g);
        assert_eq!(t.times(), &[0.5, 2.0]);
        assert_eq!(t.steps(&g).collect::<Vec<_>>(), vec![1, 4]);
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::new(8.0, 8.0, 10.0).is_err());
        assert!(NeuronParams::new(2.0, 8.0, 10.0).is_err());
        assert!(NeuronParams::new(8.0, 2.0, 0.0).is_err());
        let p = NeuronParams::for_grid(&TimeGrid::mnist(), 10.0).unwrap();
        assert_eq!((p.tau_m(), p.tau_s()), (64.0, 8.0));
    }

    proptest! {
        #[test]
        fn unsorted_input_is_stored_sorted(mut v in prop::collection::vec(0u32..1000, 0..50), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            v.shuffle(&mut rng);
            let t = SpikeTrain::from_unsorted(v.iter().map(|&x| x as f64).collect()).unwrap();
            prop_assert!(t.times().windows(2).all(|w| w[0] < w[1]));
            let mut uniq = v.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(firing_count(&t), uniq.len());
        }

        #[test]
        fn last_firing_is_monotone(v in prop::collection::vec(0.0f64..100.0, 0..20), a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let t = SpikeTrain::from_unsorted(v).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(last_firing_before(&t, lo) <= last_firing_before(&t, hi));
        }
    }
}
