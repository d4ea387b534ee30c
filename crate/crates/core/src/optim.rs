//! Adam, exponential weight regularization and error-driven sample weights.

use crate::error::{Error, Result};
use crate::grad::GradientBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per weight, one array per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `weights`.
    pub fn new(config: AdamConfig, weights: &[Vec<f64>]) -> Self {
        Self {
            config,
            m: weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v: weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `weights` in place.
pub fn adam_step(state: &mut AdamState, grads: &GradientBundle, weights: &mut [Vec<f64>]) -> Result<()> {
    if grads.grads.len() != weights.len() || state.m.len() != weights.len() {
        return Err(Error::config("adam: layer count mismatch"));
    }
    for (k, w) in weights.iter().enumerate() {
        let g = &grads.grads[k];
        if !g.is_empty() && g.len() != w.len() || state.m[k].len() != w.len() {
            return Err(Error::config(format!("adam: shape mismatch in layer {k}")));
        }
    }
    grads.ensure_finite()?;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (k, w) in weights.iter_mut().enumerate() {
        let g = &grads.grads[k];
        if g.is_empty() {
            continue;
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..w.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Plain gradient descent `w -= lr * g`.
pub fn sgd_step(lr: f64, grads: &GradientBundle, weights: &mut [Vec<f64>]) -> Result<()> {
    grads.ensure_finite()?;
    for (w, g) in weights.iter_mut().zip(&grads.grads) {
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= lr * gi;
        }
    }
    Ok(())
}

/// Adds `lambda * sign(w) * exp(beta * |w|)` to each gradient entry.
pub fn exp_weight_regularize(weights: &[Vec<f64>], grads: &mut GradientBundle, lambda: f64, beta: f64) {
    if lambda == 0.0 {
        return;
    }
    for (w, g) in weights.iter().zip(grads.grads.iter_mut()) {
        for (wi, gi) in w.iter().zip(g.iter_mut()) {
            *gi += regularizer_term(*wi, lambda, beta);
        }
    }
}

pub fn regularizer_term(w: f64, lambda: f64, beta: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        lambda * w.signum() * (beta * w.abs()).exp()
    }
}

/// Per-sample loss multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    weights: Vec<f64>,
}

impl SampleWeights {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0; n] }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Misclassified samples get `kappa` (clamped to `[1, cap]`), the rest 1.
pub fn reweight_samples(correct: &[bool], kappa: f64, cap: f64) -> SampleWeights {
    let boost = kappa.clamp(1.0, cap.max(1.0));
    SampleWeights {
        weights: correct.iter().map(|&c| if c { 1.0 } else { boost }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle(g: Vec<f64>) -> GradientBundle {
        GradientBundle {
            grads: vec![Vec::new(), g],
            deltas: vec![Vec::new(), Vec::new()],
        }
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = vec![Vec::new(), vec![0.3, -0.2]];
        let mut s = AdamState::new(AdamConfig::default(), &w);
        adam_step(&mut s, &bundle(vec![0.0, 0.0]), &mut w).unwrap();
        assert_eq!(w[1], vec![0.3, -0.2]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // m_hat = 1, v_hat = 1 after bias correction: dw = -lr / (1 + eps)
        let mut w = vec![Vec::new(), vec![0.0]];
        let mut s = AdamState::new(AdamConfig::default(), &w);
        adam_step(&mut s, &bundle(vec![1.0]), &mut w).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((w[1][0] - expected).abs() < 1e-18);
    }

    #[test]
    fn identical_entries_update_identically() {
        let mut w = vec![Vec::new(), vec![0.5, 0.5]];
        let mut s = AdamState::new(AdamConfig::default(), &w);
        for g in [0.3, -1.2, 0.7] {
            adam_step(&mut s, &bundle(vec![g, g]), &mut w).unwrap();
        }
        assert_eq!(w[1][0], w[1][1]);
        assert!(s.v[1].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_non_finite_and_mismatched() {
        let mut w = vec![Vec::new(), vec![0.0]];
        let mut s = AdamState::new(AdamConfig::default(), &w);
        assert!(adam_step(&mut s, &bundle(vec![f64::NAN]), &mut w).is_err());
        assert!(adam_step(&mut s, &bundle(vec![1.0, 2.0]), &mut w).is_err());
    }

    #[test]
    fn regularizer_examples() {
        let w = vec![vec![1.0, 0.0]];
        let mut g = GradientBundle {
            grads: vec![vec![0.5, 0.5]],
            deltas: vec![Vec::new()],
        };
        exp_weight_regularize(&w, &mut g, 0.0, 1.0);
        assert_eq!(g.grads[0], vec![0.5, 0.5]);
        exp_weight_regularize(&w, &mut g, 1e-5, 1.0);
        assert!((g.grads[0][0] - 0.5 - 1e-5 * std::f64::consts::E).abs() < 1e-15);
        assert!((regularizer_term(1.0, 1e-5, 1.0) - 2.718e-5).abs() < 1e-8);
        assert_eq!(g.grads[0][1], 0.5);
    }

    #[test]
    fn reweighting() {
        assert_eq!(reweight_samples(&[true, true], 2.0, 4.0).as_slice(), &[1.0, 1.0]);
        assert_eq!(reweight_samples(&[true, false], 2.0, 4.0).as_slice(), &[1.0, 2.0]);
        assert_eq!(reweight_samples(&[false], 10.0, 3.0).as_slice(), &[3.0]);
    }

    proptest! {
        #[test]
        fn regularizer_is_odd(w in -5.0f64..5.0, lambda in 0.0f64..1.0, beta in 0.0f64..3.0) {
            prop_assert_eq!(regularizer_term(-w, lambda, beta), -regularizer_term(w, lambda, beta));
        }

        #[test]
        fn adam_is_deterministic(gs in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let run = || {
                let mut w = vec![Vec::new(), vec![0.1; gs.len()]];
                let mut s = AdamState::new(AdamConfig::default(), &w);
                adam_step(&mut s, &bundle(gs.clone()), &mut w).unwrap();
                adam_step(&mut s, &bundle(gs.clone()), &mut w).unwrap();
                w
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn first_step_magnitude_is_lr(g in prop::sample::select(vec![-3.0f64, -0.5, 0.01, 2.0, 100.0])) {
            let mut w = vec![Vec::new(), vec![0.0]];
            let mut s = AdamState::new(AdamConfig::default(), &w);
            adam_step(&mut s, &bundle(vec![g]), &mut w).unwrap();
            prop_assert!((w[1][0].abs() - 1e-3).abs() < 1e-9);
        }
    }
}
