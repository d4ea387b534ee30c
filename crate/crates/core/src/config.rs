//! Run configuration: a TOML file plus `key=value` overrides.
//!
//! ```toml
//! dataset = "mnist"            # mnist | nmnist | emnist
//! data_dir = "/data/mnist"     # or set HM2BP_DATA_DIR
//! epochs = 20
//! train_n = 10000
//! test_n = 2000
//!
//! [optimizer]
//! lr = 1e-3
//!
//! [[layer]]
//! kind = "input"
//! shape = [1, 28, 28]
//!
//! [[layer]]
//! kind = "dense"
//! neurons = 400
//! nu = 10
//!
//! [[layer]]
//! kind = "dense"
//! neurons = 10
//! nu = 20
//! w0 = -1.0
//! ```
//!
//! Overrides address keys by dotted path, with array indices as numbers:
//! `optimizer.lr=5e-4`, `layer.1.neurons=800`. Values are parsed as TOML
//! scalars and fall back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::{NeuronParams, TimeGrid};
use crate::topology::{LayerSpec, NetworkTopology, Shape};

pub const DATA_DIR_ENV: &str = "HM2BP_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Nmnist,
    Emnist,
}

impl Dataset {
    pub fn default_grid(self) -> TimeGrid {
        match self {
            Dataset::Nmnist => TimeGrid::nmnist(),
            _ => TimeGrid::mnist(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Defaults to 400 ms for static images and 300 ms for events.
    pub duration_ms: Option<f64>,
    pub dt_ms: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            duration_ms: None,
            dt_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronConfig {
    /// Defaults to 64 dt.
    pub tau_m: Option<f64>,
    /// Defaults to 8 dt.
    pub tau_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub poisson_scale: f64,
    /// Draw fresh Poisson trains every epoch instead of a fixed encoding.
    pub resample_each_epoch: bool,
    pub reduction_us: u32,
    /// Transpose images on load; defaults to true for EMNIST.
    pub transpose: Option<bool>,
    /// Read static-image splits from `train.spkc`/`test.spkc` written by
    /// `encode-cache`. Event datasets use a cache whenever one exists.
    pub use_cache: bool,
    /// Where caches live; defaults to the data directory.
    pub cache_dir: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            poisson_scale: crate::data::encode::DEFAULT_POISSON_SCALE,
            resample_each_epoch: false,
            reduction_us: crate::data::nmnist::DEFAULT_REDUCTION_US,
            transpose: None,
            use_cache: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub hi: f64,
    pub lo: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { hi: 35.0, lo: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub reg_lambda: f64,
    pub reg_beta: f64,
    pub reweight: bool,
    pub reweight_kappa: f64,
    pub reweight_cap: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            reg_lambda: 0.0,
            reg_beta: 1.0,
            reweight: true,
            reweight_kappa: 2.0,
            reweight_cap: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Log per-batch gradient and delta norms.
    pub gradient_diagnostics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            checkpoint_every: 1,
            gradient_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerConfig {
    Input {
        /// `[channels, height, width]` or `[n]`.
        shape: Vec<usize>,
    },
    Dense {
        neurons: usize,
        nu: Option<f64>,
        w0: Option<f64>,
        init: Option<f64>,
    },
    Conv {
        channels: usize,
        kernel: usize,
        nu: Option<f64>,
        init: Option<f64>,
    },
    Pool {
        nu: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub data_dir: Option<PathBuf>,
    pub train_n: usize,
    pub test_n: usize,
    /// Ignore `train_n`/`test_n` and use every sample.
    pub full_data: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Simulate lateral inhibition in the forward pass. When off, the
    /// inhibition still shapes the output gradient.
    pub lateral_forward: bool,
    pub grid: GridConfig,
    pub neuron: NeuronConfig,
    pub encoder: EncoderConfig,
    pub targets: TargetConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
    pub layer: Vec<LayerConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Mnist,
            data_dir: None,
            train_n: 10_000,
            test_n: 2_000,
            full_data: false,
            epochs: 20,
            batch_size: 100,
            seed: 1,
            workers: 0,
            lateral_forward: true,
            grid: GridConfig::default(),
            neuron: NeuronConfig::default(),
            encoder: EncoderConfig::default(),
            targets: TargetConfig::default(),
            optimizer: OptimizerConfig::default(),
            output: OutputConfig::default(),
            layer: vec![
                LayerConfig::Input {
                    shape: vec![1, 28, 28],
                },
                LayerConfig::Dense {
                    neurons: 400,
                    nu: None,
                    w0: None,
                    init: None,
                },
                LayerConfig::Dense {
                    neurons: 10,
                    nu: None,
                    w0: None,
                    init: None,
                },
            ],
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Value, path: &[&str], value: toml::Value, full: &str) -> Result<()> {
    let (head, rest) = path.split_first().ok_or_else(|| Error::config(format!("empty override key in {full:?}")))?;
    let slot = match root {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                t.insert(head.to_string(), value);
                return Ok(());
            }
            t.entry(head.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        }
        toml::Value::Array(a) => {
            let i: usize = head
                .parse()
                .map_err(|_| Error::config(format!("override {full:?}: {head:?} is not an index")))?;
            let len = a.len();
            let slot = a
                .get_mut(i)
                .ok_or_else(|| Error::config(format!("override {full:?}: index {i} out of range {len}")))?;
            if rest.is_empty() {
                *slot = value;
                return Ok(());
            }
            slot
        }
        _ => return Err(Error::config(format!("override {full:?}: {head:?} is not a table"))),
    };
    set_path(slot, rest, value, full)
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::config(format!("config: {e}")))?;
        let mut root = toml::Value::Table(table);
        if !overrides.is_empty() {
            // Start from the defaults so overrides can target keys the file omits.
            let defaults = toml::Value::try_from(RunConfig::default()).expect("defaults serialise");
            let mut merged = defaults;
            merge(&mut merged, root);
            root = merged;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {o:?} is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            set_path(&mut root, &path, parse_scalar(raw.trim()), o)?;
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.targets.hi > self.targets.lo && self.targets.lo >= 0.0) {
            return Err(Error::config("targets need hi > lo >= 0"));
        }
        if !(self.encoder.poisson_scale >= 0.0 && self.encoder.poisson_scale <= 1.0) {
            return Err(Error::config("poisson_scale must lie in [0, 1]"));
        }
        if self.encoder.use_cache && self.encoder.resample_each_epoch {
            return Err(Error::config("encoder: a spike cache holds one fixed encoding, so use_cache excludes resample_each_epoch"));
        }
        if self.encoder.reduction_us == 0 {
            return Err(Error::config("reduction_us must be positive"));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::config("optimizer: need lr > 0, betas in [0, 1), eps > 0"));
        }
        if o.reg_lambda < 0.0 || o.reg_beta < 0.0 {
            return Err(Error::config("optimizer: regularizer lambda and beta must be >= 0"));
        }
        if o.reweight_kappa < 1.0 || o.reweight_cap < 1.0 {
            return Err(Error::config("optimizer: reweight_kappa and reweight_cap must be >= 1"));
        }
        self.grid()?;
        self.build_topology()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let d = self.dataset.default_grid();
        TimeGrid::new(
            self.grid.duration_ms.unwrap_or(d.duration_ms()),
            self.grid.dt_ms.unwrap_or(d.dt_ms()),
        )
    }

    pub fn transpose_images(&self) -> bool {
        self.encoder.transpose.unwrap_or(self.dataset == Dataset::Emnist)
    }

    /// Path of the spike cache for `split` ("train" or "test").
    pub fn cache_path(&self, split: &str) -> Result<PathBuf> {
        let dir = match &self.encoder.cache_dir {
            Some(d) => d.clone(),
            None => self.data_dir()?,
        };
        Ok(dir.join(format!("{split}.spkc")))
    }

    /// Data directory from the config, else from `HM2BP_DATA_DIR`.
    pub fn data_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::config(format!("no data_dir configured and {DATA_DIR_ENV} is unset")))
    }

    /// Builds the network with zero weights.
    pub fn build_topology(&self) -> Result<NetworkTopology> {
        let grid = self.grid()?;
        let tau_m = self.neuron.tau_m.unwrap_or(64.0 * grid.dt_ms());
        let tau_s = self.neuron.tau_s.unwrap_or(8.0 * grid.dt_ms());
        let params = |nu: f64| NeuronParams::new(tau_m, tau_s, nu);
        let last = self.layer.len().saturating_sub(1);
        let mut specs = Vec::with_capacity(self.layer.len());
        for (k, l) in self.layer.iter().enumerate() {
            let spec = match l {
                LayerConfig::Input { shape } => {
                    let shape = match shape.as_slice() {
                        [n] => Shape::flat(*n),
                        [c, h, w] => Shape::new(*c, *h, *w),
                        _ => return Err(Error::config(format!("layer {k}: input shape must be [n] or [c, h, w]"))),
                    };
                    LayerSpec::input(shape, params(1.0)?)
                }
                LayerConfig::Dense { neurons, nu, w0, init } => {
                    let default_nu = if k == last { 20.0 } else { 10.0 };
                    let mut s = LayerSpec::dense(*neurons, params(nu.unwrap_or(default_nu))?);
                    if let Some(w0) = w0 {
                        s = s.with_lateral(*w0);
                    }
                    if let Some(a) = init {
                        s = s.with_init_scale(*a);
                    }
                    s
                }
                LayerConfig::Conv { channels, kernel, nu, init } => {
                    let mut s = LayerSpec::conv(*channels, *kernel, params(nu.unwrap_or(5.0))?);
                    if let Some(a) = init {
                        s = s.with_init_scale(*a);
                    }
                    s
                }
                LayerConfig::Pool { nu } => LayerSpec::pool(params(nu.unwrap_or(5.0))?),
            };
            specs.push(spec);
        }
        NetworkTopology::new(specs)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
dataset = "mnist"
epochs = 3

[optimizer]
lr = 0.002

[[layer]]
kind = "input"
shape = [1, 28, 28]

[[layer]]
kind = "dense"
neurons = 800

[[layer]]
kind = "dense"
neurons = 10
w0 = -1.0
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = RunConfig::from_toml_str(SAMPLE, &[]).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.optimizer.lr, 0.002);
        assert_eq!(c.optimizer.beta2, 0.999);
        assert_eq!(c.batch_size, 100);
        let net = c.build_topology().unwrap();
        assert_eq!(net.shape(1).len(), 800);
        assert_eq!(net.layer(1).params.threshold(), 10.0);
        assert_eq!(net.layer(2).params.threshold(), 20.0);
        assert_eq!(net.layer(2).lateral_w0, -1.0);
        assert_eq!(net.layer(1).params.tau_m(), 64.0);
    }

    #[test]
    fn overrides() {
        let o = vec![
            "optimizer.lr=5e-4".to_string(),
            "layer.1.neurons=400".to_string(),
            "output.dir=/tmp/x".to_string(),
            "dataset=nmnist".to_string(),
        ];
        let c = RunConfig::from_toml_str(SAMPLE, &o).unwrap();
        assert_eq!(c.optimizer.lr, 5e-4);
        assert_eq!(c.optimizer.beta1, 0.9);
        assert_eq!(c.output.dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.dataset, Dataset::Nmnist);
        assert_eq!(c.grid().unwrap().n_steps(), 500);
        assert!(matches!(&c.layer[1], LayerConfig::Dense { neurons: 400, .. }));
        assert!(RunConfig::from_toml_str(SAMPLE, &["layer.9.neurons=1".into()]).is_err());
        assert!(RunConfig::from_toml_str(SAMPLE, &["nokey".into()]).is_err());
    }

    #[test]
    fn rejects_invalid() {
        assert!(matches!(RunConfig::from_toml_str("bogus = 1", &[]), Err(Error::Config(_))));
        assert!(RunConfig::from_toml_str(SAMPLE, &["batch_size=0".into()]).is_err());
        assert!(RunConfig::from_toml_str(SAMPLE, &["neuron.tau_s=100".into()]).is_err());
        assert!(RunConfig::from_toml_str("[[layer]]\nkind = \"dense\"\nneurons = 3", &[]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::from_toml_str(SAMPLE, &["seed=9".into()]).unwrap();
        let again = RunConfig::from_toml_str(&c.to_toml_string(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn cnn_topology() {
        let text = r#"
[[layer]]
kind = "input"
shape = [1, 28, 28]
[[layer]]
kind = "conv"
channels = 15
kernel = 5
[[layer]]
kind = "pool"
[[layer]]
kind = "conv"
channels = 40
kernel = 5
[[layer]]
kind = "pool"
[[layer]]
kind = "dense"
neurons = 300
[[layer]]
kind = "dense"
neurons = 10
"#;
        let net = RunConfig::from_toml_str(text, &[]).unwrap().build_topology().unwrap();
        assert_eq!(net.shape(4), Shape::new(40, 4, 4));
    }
}
