//! Backward pass: rate-coded error propagated through firing counts and
//! total PSPs (macro level) and through the S-PSPs' dependence on firing
//! counts (micro level).
//!
//! For post neuron `i` of layer `k` with threshold `nu`:
//!
//! ```text
//! output:  delta_i = (o_i - y_i) / nu
//! hidden:  delta_i = 1/nu * sum_l delta_l * w_li * e_{l|i} / o_i
//! weight:  dE/dw_ij = delta_i * gamma_i * e_{i|j} * (1 + 1/nu * sum_h w_ih * e_{i|h} / o_i)
//! ```
//!
//! `gamma_i` is one except on a laterally inhibited output layer, where
//! `gamma_i = 1 / (1 - w0^2/nu^2 * sum_{l != i} (e_{i|l}/o_l) (e_{l|i}/o_i))`.

use crate::error::{Error, Result};
use crate::lif::{CompiledNetwork, ForwardArtifacts};
use crate::spsp::{d_spsp_d_opost, d_spsp_d_opre, LateralTable, SpsPTable};
use crate::topology::{Connectivity, NetworkTopology};

/// Smallest admissible denominator of the lateral-inhibition factor.
pub const GAMMA_DENOMINATOR_FLOOR: f64 = 1e-6;

/// Per-layer weight gradients and deltas from one or more backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `grads[k]` matches `NetworkTopology::weights(k)`; empty for untrained layers.
    pub grads: Vec<Vec<f64>>,
    /// `deltas[k]` has one entry per neuron of layer `k`; empty for the input.
    pub deltas: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros(net: &NetworkTopology) -> Self {
        Self {
            grads: net.all_weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            deltas: (0..net.n_layers())
                .map(|k| if k == 0 { Vec::new() } else { vec![0.0; net.shape(k).len()] })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.deltas.iter_mut().zip(&other.deltas) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.grads.iter_mut().chain(self.deltas.iter_mut()) {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.grads.iter().map(|g| l2(g)).collect()
    }

    pub fn delta_norms(&self) -> Vec<f64> {
        self.deltas.iter().map(|d| l2(d)).collect()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (k, g) in self.grads.iter().enumerate() {
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite gradient in layer {k} at slot {pos}: {}",
                    g[pos]
                )));
            }
        }
        Ok(())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// Rate-coded loss `0.5 * ||o - y||^2`.
pub fn rate_loss(o: &[u32], y: &[f64]) -> f64 {
    0.5 * o
        .iter()
        .zip(y)
        .map(|(&oi, yi)| (oi as f64 - yi).powi(2))
        .sum::<f64>()
}

/// Output-layer error `(o_i - y_i) / nu`.
pub fn output_delta(o: &[u32], y: &[f64], nu: f64) -> Result<Vec<f64>> {
    if o.len() != y.len() {
        return Err(Error::config(format!(
            "output delta: {} counts vs {} targets",
            o.len(),
            y.len()
        )));
    }
    Ok(o.iter().zip(y).map(|(&oi, yi)| (oi as f64 - yi) / nu).collect())
}

/// Error of the pre population of a layer, propagated through its S-PSPs.
///
/// `next_delta`, `conn`, `conn_weights` and `next_table` describe the layer
/// above; `nu` is the threshold of the layer whose delta is returned.
pub fn hidden_delta(
    next_delta: &[f64],
    conn: &Connectivity,
    conn_weights: &[f64],
    next_table: &SpsPTable,
    nu: f64,
) -> Result<Vec<f64>> {
    if next_delta.len() != conn.n_post()
        || conn_weights.len() != conn.n_connections()
        || next_table.e.len() != conn.n_connections()
        || next_table.o_pre.len() != conn.n_pre()
    {
        return Err(Error::config("hidden delta: dimension mismatch"));
    }
    let mut acc = vec![0.0; conn.n_pre()];
    let pre = conn.pre_indices();
    for (l, &dl) in next_delta.iter().enumerate() {
        if dl == 0.0 {
            continue;
        }
        for c in conn.row(l) {
            acc[pre[c] as usize] += dl * conn_weights[c] * next_table.e[c];
        }
    }
    Ok(acc
        .iter()
        .zip(&next_table.o_pre)
        .map(|(&s, &o)| d_spsp_d_opre(s, o) / nu)
        .collect())
}

/// `da_i/dw_ij`: the S-PSP plus its hidden dependence on the post firing count.
pub fn micro_dadw(e_ij: f64, weights_row: &[f64], spsp_row: &[f64], o_post: u32, nu: f64) -> f64 {
    e_ij * micro_factor(weights_row, spsp_row, o_post, nu)
}

/// `1 + 1/nu * sum_l w_il * de_il/do_i`, shared by every synapse of post neuron `i`.
pub fn micro_factor(weights_row: &[f64], spsp_row: &[f64], o_post: u32, nu: f64) -> f64 {
    let sum: f64 = weights_row
        .iter()
        .zip(spsp_row)
        .map(|(w, e)| w * d_spsp_d_opost(*e, o_post))
        .sum();
    1.0 + sum / nu
}

/// Lateral-inhibition factor per output neuron.
pub fn lateral_gamma(w0: f64, nu: f64, lateral: &LateralTable, o_post: &[u32]) -> Result<Vec<f64>> {
    let n = lateral.n;
    if o_post.len() != n {
        return Err(Error::config("lateral gamma: dimension mismatch"));
    }
    let coupling = w0 * w0 / (nu * nu);
    (0..n)
        .map(|i| {
            let sum: f64 = (0..n)
                .filter(|&l| l != i)
                .map(|l| d_spsp_d_opre(lateral.get(i, l), o_post[l]) * d_spsp_d_opost(lateral.get(l, i), o_post[i]))
                .sum();
            let denom = 1.0 - coupling * sum;
            if denom <= GAMMA_DENOMINATOR_FLOOR || !denom.is_finite() {
                return Err(Error::numerical(format!(
                    "lateral inhibition factor degenerate for output {i}: denominator {denom:e} (w0={w0}, nu={nu}, sum={sum:e}, counts={o_post:?})"
                )));
            }
            Ok(1.0 / denom)
        })
        .collect()
}

/// Per-connection `dE/dw` of one layer.
pub fn connection_gradient(
    conn: &Connectivity,
    delta: &[f64],
    table: &SpsPTable,
    conn_weights: &[f64],
    nu: f64,
    gamma: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if delta.len() != conn.n_post() || table.e.len() != conn.n_connections() {
        return Err(Error::config("weight gradient: dimension mismatch"));
    }
    let mut g = vec![0.0; conn.n_connections()];
    for (i, &di) in delta.iter().enumerate() {
        let row = conn.row(i);
        if di == 0.0 || table.o_post[i] == 0 {
            continue;
        }
        let m = micro_factor(&conn_weights[row.clone()], &table.e[row.clone()], table.o_post[i], nu);
        let mut coef = di * m;
        if let Some(gm) = gamma {
            coef *= gm[i];
        }
        for c in row {
            g[c] = coef * table.e[c];
        }
    }
    if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite gradient at connection {pos}")));
    }
    Ok(g)
}

/// `dE/dw` of one layer, folded onto its (possibly shared) weight slots.
pub fn weight_gradient(
    conn: &Connectivity,
    delta: &[f64],
    table: &SpsPTable,
    conn_weights: &[f64],
    nu: f64,
    gamma: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let per_conn = connection_gradient(conn, delta, table, conn_weights, nu, gamma)?;
    conn.fold(&per_conn)
}

/// Full backward pass of one sample. `sample_weight` scales the loss.
pub fn backward_pass(
    net: &NetworkTopology,
    compiled: &CompiledNetwork,
    fwd: &ForwardArtifacts,
    targets: &[f64],
    sample_weight: f64,
) -> Result<GradientBundle> {
    let last = net.n_layers() - 1;
    let mut bundle = GradientBundle::zeros(net);
    let out_counts = fwd.output_counts();
    let mut delta = output_delta(&out_counts, targets, net.layer(last).params.threshold())?;
    if sample_weight != 1.0 {
        for d in delta.iter_mut() {
            *d *= sample_weight;
        }
    }
    for k in (1..=last).rev() {
        let spec = net.layer(k);
        let conn = net.link(k).expect("non-input layer");
        let weights = &compiled.layers[k].as_ref().expect("compiled layer").conn_weights;
        let table = fwd.tables[k]
            .as_ref()
            .ok_or_else(|| Error::config(format!("no S-PSP table for layer {k}")))?;
        let nu = spec.params.threshold();
        let gamma = match (&table.lateral, k == last) {
            (Some(lat), true) if spec.lateral_w0 != 0.0 => Some(lateral_gamma(spec.lateral_w0, nu, lat, &table.o_post)?),
            _ => None,
        };
        if spec.is_trainable() {
            bundle.grads[k] = weight_gradient(conn, &delta, table, weights, nu, gamma.as_deref())?;
        }
        if k > 1 {
            let below = net.layer(k - 1).params.threshold();
            let next = hidden_delta(&delta, conn, weights, table, below)?;
            bundle.deltas[k] = delta;
            delta = next;
        } else {
            bundle.deltas[k] = delta;
            break;
        }
    }
    bundle.ensure_finite()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(e: Vec<f64>, o_pre: Vec<u32>, o_post: Vec<u32>, w: &[f64], n_pre: usize) -> SpsPTable {
        let a = (0..o_post.len())
            .map(|i| (0..n_pre).map(|j| w[i * n_pre + j] * e[i * n_pre + j]).sum())
            .collect();
        SpsPTable {
            e,
            o_pre,
            o_post,
            a,
            lateral: None,
        }
    }

    #[test]
    fn output_delta_examples() {
        assert_eq!(output_delta(&[3], &[5.0], 10.0).unwrap(), vec![-0.2]);
        assert_eq!(output_delta(&[4, 2], &[4.0, 2.0], 10.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(output_delta(&[7, 0], &[5.0, 2.0], 5.0).unwrap(), vec![0.4, -0.4]);
        assert!(output_delta(&[1], &[1.0, 2.0], 5.0).is_err());
    }

    #[test]
    fn hidden_delta_examples() {
        let conn = Connectivity::dense(1, 1);
        let t = table(vec![4.0], vec![2], vec![3], &[2.0], 1);
        let d = hidden_delta(&[1.0], &conn, &[2.0], &t, 10.0).unwrap();
        assert!((d[0] - 0.4).abs() < 1e-15);
        assert_eq!(hidden_delta(&[0.0], &conn, &[2.0], &t, 10.0).unwrap(), vec![0.0]);

        let conn = Connectivity::dense(1, 2);
        let t = table(vec![3.0, 3.0], vec![2], vec![1, 1], &[1.5, 1.5], 1);
        let d = hidden_delta(&[0.7, -0.7], &conn, &[1.5, 1.5], &t, 10.0).unwrap();
        assert_eq!(d, vec![0.0]);

        let silent = table(vec![0.0], vec![0], vec![2], &[2.0], 1);
        assert_eq!(hidden_delta(&[1.0], &Connectivity::dense(1, 1), &[2.0], &silent, 10.0).unwrap(), vec![0.0]);
        assert!(hidden_delta(&[1.0, 1.0], &Connectivity::dense(1, 1), &[2.0], &silent, 10.0).is_err());
    }

    #[test]
    fn micro_examples() {
        // sum_l w_il * e_il / o_i = 2  with  w = [1, 1], e = [2, 2], o_i = 2
        assert!((micro_dadw(5.0, &[1.0, 1.0], &[2.0, 2.0], 2, 10.0) - 6.0).abs() < 1e-12);
        assert_eq!(micro_dadw(0.0, &[1.0], &[3.0], 1, 10.0), 0.0);
        assert!((micro_dadw(3.0, &[1.0], &[3.0], 1, 10.0) - 3.9).abs() < 1e-12);
        assert_eq!(micro_dadw(2.0, &[1.0], &[3.0], 0, 10.0), 2.0);
    }

    #[test]
    fn gamma_examples() {
        let lat = LateralTable {
            w0: 1.0,
            n: 2,
            e: vec![0.0, 2.0, 2.0, 0.0],
        };
        let g = lateral_gamma(1.0, 10.0, &lat, &[1, 1]).unwrap();
        assert!((g[0] - 1.0 / 0.96).abs() < 1e-12);
        // e/o = 2 on both sides: 1 / (1 - 0.01 * 4)
        let lat4 = LateralTable {
            w0: 1.0,
            n: 2,
            e: vec![0.0, 4.0, 4.0, 0.0],
        };
        let g = lateral_gamma(1.0, 10.0, &lat4, &[2, 2]).unwrap();
        assert!((g[1] - 1.0 / 0.96).abs() < 1e-12);
        assert_eq!(lateral_gamma(0.0, 10.0, &lat4, &[2, 2]).unwrap(), vec![1.0, 1.0]);
        let quiet = LateralTable {
            w0: 1.0,
            n: 2,
            e: vec![0.0; 4],
        };
        assert_eq!(lateral_gamma(-3.0, 10.0, &quiet, &[0, 0]).unwrap(), vec![1.0, 1.0]);
        let huge = LateralTable {
            w0: 1.0,
            n: 2,
            e: vec![0.0, 100.0, 100.0, 0.0],
        };
        assert!(matches!(lateral_gamma(1.0, 10.0, &huge, &[1, 1]), Err(Error::Numerical(_))));
    }

    #[test]
    fn weight_gradient_single_synapse() {
        let conn = Connectivity::dense(1, 1);
        let t = table(vec![3.0], vec![2], vec![1], &[1.0], 1);
        let g = weight_gradient(&conn, &[-0.2], &t, &[1.0], 10.0, None).unwrap();
        assert!((g[0] - (-0.2 * 3.0 * 1.3)).abs() < 1e-12);
        let zero = weight_gradient(&conn, &[0.0], &t, &[1.0], 10.0, None).unwrap();
        assert_eq!(zero, vec![0.0]);
        let gm = weight_gradient(&conn, &[-0.2], &t, &[1.0], 10.0, Some(&[1.0])).unwrap();
        assert_eq!(gm, g);
    }

    #[test]
    fn gradient_linear_in_delta() {
        let conn = Connectivity::dense(3, 2);
        let w = [0.5, -0.2, 0.9, 1.1, 0.3, -0.7];
        let t = table(vec![1.0, 2.0, 0.5, 0.0, 3.0, 1.5], vec![2, 3, 1], vec![2, 4], &w, 3);
        let base = weight_gradient(&conn, &[0.3, -0.1], &t, &w, 10.0, None).unwrap();
        let scaled = weight_gradient(&conn, &[0.6, -0.2], &t, &w, 10.0, None).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn loss_value() {
        assert_eq!(rate_loss(&[3, 5], &[5.0, 5.0]), 2.0);
    }
}
