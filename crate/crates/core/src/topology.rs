//! Layer shapes, sparse connectivity and weight storage.
//!
//! Every non-input layer owns a [`Connectivity`]: a row-compressed list of
//! synapses (post neuron → pre neuron, weight slot). Dense layers use one slot
//! per synapse laid out row-major (`post * n_pre + pre`), convolutional layers
//! share kernel slots between spatial positions, and pooling synapses carry a
//! fixed weight with no slot at all. The forward and backward passes only
//! ever walk this list, so they are oblivious to the layer kind.

use rand::Rng;

use crate::error::{Error, Result};
use crate::spike::NeuronParams;

/// Weight of every pooling synapse.
pub const POOL_WEIGHT: f64 = 0.25;

/// Marks a synapse whose weight is fixed rather than trainable.
pub const FIXED_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Input { shape: Shape },
    Dense { neurons: usize },
    Conv { out_channels: usize, kernel: usize, stride: usize },
    Pool { window: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub params: NeuronParams,
    /// Fixed lateral-inhibition weight among neurons of this layer; 0 disables.
    /// Inhibition is negative by convention.
    pub lateral_w0: f64,
    /// Half-width of the uniform initialisation; `None` uses 1 (dense) or 0.5 (conv).
    pub init_scale: Option<f64>,
}

impl LayerSpec {
    pub fn input(shape: Shape, params: NeuronParams) -> Self {
        Self {
            kind: LayerKind::Input { shape },
            params,
            lateral_w0: 0.0,
            init_scale: None,
        }
    }

    pub fn dense(neurons: usize, params: NeuronParams) -> Self {
        Self {
            kind: LayerKind::Dense { neurons },
            params,
            lateral_w0: 0.0,
            init_scale: None,
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, params: NeuronParams) -> Self {
        Self {
            kind: LayerKind::Conv {
                out_channels,
                kernel,
                stride: 1,
            },
            params,
            lateral_w0: 0.0,
            init_scale: None,
        }
    }

    pub fn pool(params: NeuronParams) -> Self {
        Self {
            kind: LayerKind::Pool { window: 2 },
            params,
            lateral_w0: 0.0,
            init_scale: None,
        }
    }

    pub fn with_lateral(mut self, w0: f64) -> Self {
        self.lateral_w0 = w0;
        self
    }

    pub fn with_init_scale(mut self, a: f64) -> Self {
        self.init_scale = Some(a);
        self
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv { .. })
    }

    fn default_init_scale(&self) -> f64 {
        match self.kind {
            LayerKind::Conv { .. } => 0.5,
            _ => 1.0,
        }
    }
}

/// Row-compressed synapse list of one layer, with its column transpose.
#[derive(Debug, Clone)]
pub struct Connectivity {
    n_pre: usize,
    n_post: usize,
    n_slots: usize,
    row_ptr: Vec<usize>,
    pre: Vec<u32>,
    slot: Vec<u32>,
    fixed_weight: f64,
    col_ptr: Vec<usize>,
    col_conn: Vec<u32>,
}

impl Connectivity {
    fn from_rows(
        n_pre: usize,
        n_slots: usize,
        fixed_weight: f64,
        rows: Vec<Vec<(u32, u32)>>,
    ) -> Self {
        let n_post = rows.len();
        let mut row_ptr = Vec::with_capacity(n_post + 1);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut pre = Vec::with_capacity(total);
        let mut slot = Vec::with_capacity(total);
        row_ptr.push(0);
        for row in rows {
            for (p, s) in row {
                pre.push(p);
                slot.push(s);
            }
            row_ptr.push(pre.len());
        }
        let mut counts = vec![0usize; n_pre + 1];
        for &p in &pre {
            counts[p as usize + 1] += 1;
        }
        for j in 0..n_pre {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut col_conn = vec![0u32; pre.len()];
        for (c, &p) in pre.iter().enumerate() {
            col_conn[fill[p as usize]] = c as u32;
            fill[p as usize] += 1;
        }
        Self {
            n_pre,
            n_post,
            n_slots,
            row_ptr,
            pre,
            slot,
            fixed_weight,
            col_ptr,
            col_conn,
        }
    }

    /// All-to-all synapses; slot `post * n_pre + pre`.
    pub fn dense(n_pre: usize, n_post: usize) -> Self {
        let rows = (0..n_post)
            .map(|i| {
                (0..n_pre)
                    .map(|j| (j as u32, (i * n_pre + j) as u32))
                    .collect()
            })
            .collect();
        Self::from_rows(n_pre, n_pre * n_post, 0.0, rows)
    }

    /// Valid (no padding) stride-1 convolution with a shared kernel laid out
    /// as `[out_c][in_c][ky][kx]`.
    pub fn conv(input: Shape, out_channels: usize, kernel: usize) -> Result<(Self, Shape)> {
        if kernel == 0 || kernel > input.height || kernel > input.width {
            return Err(Error::config(format!(
                "kernel {kernel} does not fit input {}x{}",
                input.height, input.width
            )));
        }
        let out = Shape::new(
            out_channels,
            input.height - kernel + 1,
            input.width - kernel + 1,
        );
        let mut rows = Vec::with_capacity(out.len());
        for oc in 0..out_channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    let mut row = Vec::with_capacity(input.channels * kernel * kernel);
                    for ic in 0..input.channels {
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let pre = input.index(ic, y + ky, x + kx);
                                let slot = ((oc * input.channels + ic) * kernel + ky) * kernel + kx;
                                row.push((pre as u32, slot as u32));
                            }
                        }
                    }
                    rows.push(row);
                }
            }
        }
        let n_slots = out_channels * input.channels * kernel * kernel;
        Ok((Self::from_rows(input.len(), n_slots, 0.0, rows), out))
    }

    /// Non-overlapping `window x window` pooling with fixed weights.
    pub fn pool(input: Shape, window: usize) -> Result<(Self, Shape)> {
        if window == 0 || input.height < window || input.width < window {
            return Err(Error::config("pooling window larger than input"));
        }
        let out = Shape::new(input.channels, input.height / window, input.width / window);
        let mut rows = Vec::with_capacity(out.len());
        for c in 0..out.channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    let mut row = Vec::with_capacity(window * window);
                    for dy in 0..window {
                        for dx in 0..window {
                            let pre = input.index(c, window * y + dy, window * x + dx);
                            row.push((pre as u32, FIXED_SLOT));
                        }
                    }
                    rows.push(row);
                }
            }
        }
        Ok((Self::from_rows(input.len(), 0, POOL_WEIGHT, rows), out))
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn n_connections(&self) -> usize {
        self.pre.len()
    }

    /// Number of trainable weight slots.
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Connection index range of post neuron `i`.
    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn pre_of(&self, conn: usize) -> usize {
        self.pre[conn] as usize
    }

    pub fn pre_indices(&self) -> &[u32] {
        &self.pre
    }

    pub fn slot_of(&self, conn: usize) -> Option<usize> {
        match self.slot[conn] {
            FIXED_SLOT => None,
            s => Some(s as usize),
        }
    }

    /// Connections leaving pre neuron `j`, as connection indices.
    pub fn outgoing(&self, j: usize) -> &[u32] {
        &self.col_conn[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn col_conn(&self) -> &[u32] {
        &self.col_conn
    }

    /// Post neuron owning each connection.
    pub fn post_of_connections(&self) -> Vec<u32> {
        let mut post = vec![0u32; self.n_connections()];
        for i in 0..self.n_post {
            for c in self.row(i) {
                post[c] = i as u32;
            }
        }
        post
    }

    /// Effective weight of every connection given the layer's slot values.
    pub fn connection_weights(&self, slots: &[f64]) -> Vec<f64> {
        debug_assert_eq!(slots.len(), self.n_slots);
        self.slot
            .iter()
            .map(|&s| {
                if s == FIXED_SLOT {
                    self.fixed_weight
                } else {
                    slots[s as usize]
                }
            })
            .collect()
    }

    /// Sums per-connection gradients into their shared slots.
    pub fn fold(&self, per_connection: &[f64]) -> Result<Vec<f64>> {
        conv_gradient_fold(per_connection, &self.slot, self.n_slots)
    }
}

/// Accumulates untied per-connection gradients into tied weight slots.
///
/// `slots[c]` names the shared weight of connection `c` (or [`FIXED_SLOT`]);
/// each slot's gradient is the sum over every connection sharing it.
pub fn conv_gradient_fold(per_connection: &[f64], slots: &[u32], n_slots: usize) -> Result<Vec<f64>> {
    if per_connection.len() != slots.len() {
        return Err(Error::config(format!(
            "fold: {} gradients for {} connections",
            per_connection.len(),
            slots.len()
        )));
    }
    let mut out = vec![0.0; n_slots];
    for (&g, &s) in per_connection.iter().zip(slots) {
        if s == FIXED_SLOT {
            continue;
        }
        let s = s as usize;
        if s >= n_slots {
            return Err(Error::config(format!("fold: slot {s} out of range {n_slots}")));
        }
        out[s] += g;
    }
    Ok(out)
}

/// Feed-forward network: layer specs, derived shapes, connectivity and weights.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    links: Vec<Option<Connectivity>>,
    weights: Vec<Vec<f64>>,
}

impl NetworkTopology {
    /// Builds shapes and connectivity with all weights zero.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::config("network has no layers"));
        };
        let LayerKind::Input { shape } = first.kind else {
            return Err(Error::config("first layer must be the input layer"));
        };
        if layers.len() < 2 {
            return Err(Error::config("network needs at least one layer after the input"));
        }
        if shape.is_empty() {
            return Err(Error::config("input layer is empty"));
        }
        let mut shapes = vec![shape];
        let mut links = vec![None];
        let mut weights = vec![Vec::new()];
        let last = layers.len() - 1;
        for (k, spec) in layers.iter().enumerate().skip(1) {
            let prev = shapes[k - 1];
            if spec.lateral_w0 != 0.0 && k != last {
                return Err(Error::config(format!(
                    "lateral inhibition is only supported on the output layer (layer {k})"
                )));
            }
            let (conn, shape) = match spec.kind {
                LayerKind::Input { .. } => {
                    return Err(Error::config(format!("layer {k}: input layer must come first")))
                }
                LayerKind::Dense { neurons } => {
                    if neurons == 0 {
                        return Err(Error::config(format!("layer {k}: dense layer is empty")));
                    }
                    (Connectivity::dense(prev.len(), neurons), Shape::flat(neurons))
                }
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    if stride != 1 {
                        return Err(Error::config(format!("layer {k}: conv stride must be 1")));
                    }
                    if out_channels == 0 {
                        return Err(Error::config(format!("layer {k}: conv has no channels")));
                    }
                    Connectivity::conv(prev, out_channels, kernel)?
                }
                LayerKind::Pool { window } => {
                    if window != 2 {
                        return Err(Error::config(format!("layer {k}: pooling window must be 2")));
                    }
                    Connectivity::pool(prev, window)?
                }
            };
            weights.push(vec![0.0; conn.n_slots()]);
            links.push(Some(conn));
            shapes.push(shape);
        }
        Ok(Self {
            layers,
            shapes,
            links,
            weights,
        })
    }

    /// Draws every trainable weight from `U[-a, a]`.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        for (spec, w) in self.layers.iter().zip(self.weights.iter_mut()) {
            if !spec.is_trainable() {
                continue;
            }
            let a = spec.init_scale.unwrap_or_else(|| spec.default_init_scale());
            for v in w.iter_mut() {
                *v = if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
            }
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &LayerSpec {
        &self.layers[k]
    }

    pub fn shape(&self, k: usize) -> Shape {
        self.shapes[k]
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn output_len(&self) -> usize {
        self.shapes[self.shapes.len() - 1].len()
    }

    /// Connectivity into layer `k` (`None` for the input layer).
    pub fn link(&self, k: usize) -> Option<&Connectivity> {
        self.links[k].as_ref()
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weights[k]
    }

    pub fn weights_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.weights[k]
    }

    pub fn all_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn all_weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    /// Indices of layers with trainable weights, in topology order.
    pub fn trainable_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&k| self.layers[k].is_trainable())
            .collect()
    }

    /// Replaces all weights; array lengths must match the topology.
    pub fn set_weights(&mut self, weights: Vec<Vec<f64>>) -> Result<()> {
        if weights.len() != self.weights.len()
            || weights
                .iter()
                .zip(&self.weights)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::config("weight arrays do not match the topology"));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn set_lateral(&mut self, w0: f64) {
        let last = self.layers.len() - 1;
        self.layers[last].lateral_w0 = w0;
    }
}
