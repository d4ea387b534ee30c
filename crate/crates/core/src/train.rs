//! Training loop, evaluation and metrics.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::config::{Dataset, RunConfig};
use crate::data::encode::{poisson_steps, predict, sample_seed};
use crate::data::{self, make_targets, CachedSample, StaticImage};
use crate::error::{Error, Result};
use crate::grad::{backward_pass, rate_loss, GradientBundle};
use crate::lif::{forward_compiled, CompiledNetwork, ForwardOptions};
use crate::optim::{adam_step, exp_weight_regularize, reweight_samples, AdamConfig, AdamState, SampleWeights};
use crate::spike::TimeGrid;
use crate::topology::NetworkTopology;

/// Inputs of one split, encoded lazily for static images.
#[derive(Debug, Clone)]
pub enum SampleSet {
    Static {
        images: Vec<StaticImage>,
        /// Position of each image in its source file; seeds its encoding.
        source_index: Vec<usize>,
        scale: f64,
        seed: u64,
        resample: bool,
    },
    Spikes {
        samples: Vec<CachedSample>,
    },
}

impl SampleSet {
    /// Static images encoded with a fixed seed, indexed by position.
    pub fn from_images(images: Vec<StaticImage>, scale: f64, seed: u64) -> Self {
        SampleSet::Static {
            source_index: (0..images.len()).collect(),
            images,
            scale,
            seed,
            resample: false,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SampleSet::Static { images, .. } => images.len(),
            SampleSet::Spikes { samples } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, i: usize) -> usize {
        match self {
            SampleSet::Static { images, .. } => images[i].label as usize,
            SampleSet::Spikes { samples } => samples[i].label as usize,
        }
    }

    pub fn n_inputs(&self) -> Option<usize> {
        match self {
            SampleSet::Static { images, .. } => images.first().map(|i| i.pixels.len()),
            SampleSet::Spikes { samples } => samples.first().map(|s| s.steps.len()),
        }
    }

    /// Input spike steps of sample `i` during `epoch`.
    pub fn input_steps(&self, i: usize, epoch: usize, grid: &TimeGrid) -> Vec<Vec<u32>> {
        match self {
            SampleSet::Static {
                images,
                source_index,
                scale,
                seed,
                resample,
            } => {
                let base = if *resample {
                    seed.wrapping_add((epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
                } else {
                    *seed
                };
                poisson_steps(&images[i].pixels, grid, *scale, sample_seed(base, source_index[i]))
            }
            SampleSet::Spikes { samples } => samples[i].steps.clone(),
        }
    }

    pub fn n_classes(&self) -> usize {
        (0..self.len()).map(|i| self.label(i) + 1).max().unwrap_or(0)
    }
}

/// Seeded subset of `0..n` of size `limit`, in ascending order.
pub fn subset_indices(n: usize, limit: Option<usize>, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(k) = limit.filter(|&k| k < n) {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5ab5_e7));
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}

fn static_split(cfg: &RunConfig, images: Vec<StaticImage>, limit: usize) -> Result<SampleSet> {
    let limit = (!cfg.full_data).then_some(limit);
    let idx = subset_indices(images.len(), limit, cfg.seed);
    Ok(SampleSet::Static {
        images: idx.iter().map(|&i| images[i].clone()).collect(),
        source_index: idx,
        scale: cfg.encoder.poisson_scale,
        seed: cfg.seed,
        resample: cfg.encoder.resample_each_epoch,
    })
}

/// File names of the train and test splits of an IDX dataset.
pub fn idx_files(dataset: Dataset) -> [[&'static str; 2]; 2] {
    match dataset {
        Dataset::Emnist => [
            ["emnist-balanced-train-images-idx3-ubyte", "emnist-balanced-train-labels-idx1-ubyte"],
            ["emnist-balanced-test-images-idx3-ubyte", "emnist-balanced-test-labels-idx1-ubyte"],
        ],
        _ => [
            ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"],
            ["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"],
        ],
    }
}

fn load_cached_split(cfg: &RunConfig, split: &str, limit: usize, grid: &TimeGrid) -> Result<SampleSet> {
    let cache = cfg.cache_path(split)?;
    let (cached_grid, samples) = data::read_cache(&cache)?;
    if cached_grid.n_steps() != grid.n_steps() || (cached_grid.dt_ms() - grid.dt_ms()).abs() > 1e-12 {
        return Err(Error::data(format!("{}: cache grid does not match the configured grid", cache.display())));
    }
    let idx = subset_indices(samples.len(), (!cfg.full_data).then_some(limit), cfg.seed);
    Ok(SampleSet::Spikes {
        samples: idx.into_iter().map(|i| samples[i].clone()).collect(),
    })
}

/// Every N-MNIST file of `split` under `dir`, binned onto `grid`.
pub fn event_split_samples(dir: &Path, split: &str, idx: Option<&[usize]>, reduction_us: u32, grid: &TimeGrid) -> Result<Vec<CachedSample>> {
    let files = data::list_nmnist_dir(&dir.join(split))?;
    let all: Vec<usize>;
    let idx = match idx {
        Some(i) => i,
        None => {
            all = (0..files.len()).collect();
            &all
        }
    };
    idx.par_iter()
        .map(|&i| {
            let (path, label) = files.get(i).ok_or_else(|| Error::data(format!("{split}: no sample {i}")))?;
            let s = data::load_nmnist(path)?;
            Ok(CachedSample {
                label: *label as u32,
                steps: data::nmnist_to_steps(&s, reduction_us, grid),
            })
        })
        .collect()
}

fn load_event_split(cfg: &RunConfig, dir: &Path, split: &str, limit: usize, grid: &TimeGrid) -> Result<SampleSet> {
    if cfg.cache_path(&split.to_lowercase())?.exists() {
        return load_cached_split(cfg, &split.to_lowercase(), limit, grid);
    }
    let n = data::list_nmnist_dir(&dir.join(split))?.len();
    let idx = subset_indices(n, (!cfg.full_data).then_some(limit), cfg.seed);
    let samples = event_split_samples(dir, split, Some(&idx), cfg.encoder.reduction_us, grid)?;
    Ok(SampleSet::Spikes { samples })
}

/// Loads the train and test splits named by the config.
pub fn load_splits(cfg: &RunConfig) -> Result<(SampleSet, SampleSet)> {
    let dir = cfg.data_dir()?;
    let grid = cfg.grid()?;
    match cfg.dataset {
        Dataset::Nmnist => Ok((
            load_event_split(cfg, &dir, "Train", cfg.train_n, &grid)?,
            load_event_split(cfg, &dir, "Test", cfg.test_n, &grid)?,
        )),
        _ if cfg.encoder.use_cache => Ok((
            load_cached_split(cfg, "train", cfg.train_n, &grid)?,
            load_cached_split(cfg, "test", cfg.test_n, &grid)?,
        )),
        ds => {
            let [train, test] = load_static_images(cfg, ds, &dir)?;
            Ok((
                static_split(cfg, train, cfg.train_n)?,
                static_split(cfg, test, cfg.test_n)?,
            ))
        }
    }
}

/// Full train and test image sets of an IDX dataset.
pub fn load_static_images(cfg: &RunConfig, ds: Dataset, dir: &Path) -> Result<[Vec<StaticImage>; 2]> {
    let [train, test] = idx_files(ds);
    let t = cfg.transpose_images();
    Ok([
        data::load_idx(&dir.join(train[0]), &dir.join(train[1]), t)?,
        data::load_idx(&dir.join(test[0]), &dir.join(test[1]), t)?,
    ])
}

/// Encodes whole splits into spike caches and returns the files written.
///
/// Event datasets are binned; static images get the fixed Poisson encoding
/// training would draw for them, so a cached run matches an uncached one.
pub fn encode_cache(cfg: &RunConfig, splits: &[&str]) -> Result<Vec<PathBuf>> {
    const CHUNK: usize = 1024;
    let dir = cfg.data_dir()?;
    let grid = cfg.grid()?;
    let mut written = Vec::new();
    let static_images = match cfg.dataset {
        Dataset::Nmnist => None,
        ds => Some(load_static_images(cfg, ds, &dir)?),
    };
    for &split in splits {
        let path = cfg.cache_path(split)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        match &static_images {
            None => {
                let sub = if split == "train" { "Train" } else { "Test" };
                let n = data::list_nmnist_dir(&dir.join(sub))?.len();
                let mut w = data::CacheWriter::create(&path, &grid, n)?;
                let all: Vec<usize> = (0..n).collect();
                for chunk in all.chunks(CHUNK) {
                    for s in event_split_samples(&dir, sub, Some(chunk), cfg.encoder.reduction_us, &grid)? {
                        w.push(&s)?;
                    }
                }
                w.finish()?;
            }
            Some([train, test]) => {
                let images = if split == "train" { train } else { test };
                let mut w = data::CacheWriter::create(&path, &grid, images.len())?;
                for (c, chunk) in images.chunks(CHUNK).enumerate() {
                    let encoded: Vec<CachedSample> = chunk
                        .par_iter()
                        .enumerate()
                        .map(|(k, im)| CachedSample {
                            label: im.label as u32,
                            steps: poisson_steps(&im.pixels, &grid, cfg.encoder.poisson_scale, sample_seed(cfg.seed, c * CHUNK + k)),
                        })
                        .collect();
                    for s in &encoded {
                        w.push(s)?;
                    }
                }
                w.finish()?;
            }
        }
        log::info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean rate loss over training samples (measured before each batch update).
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub wall_time_s: f64,
    /// Mean per-batch gradient norm per layer.
    pub grad_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[label][prediction]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_total: Vec<u64>,
    pub per_class_correct: Vec<u64>,
}

/// Settings shared by training and evaluation.
#[derive(Debug, Clone)]
pub struct Session {
    pub grid: TimeGrid,
    pub n_classes: usize,
    pub hi: f64,
    pub lo: f64,
    pub forward: ForwardOptions,
}

impl Session {
    pub fn from_config(cfg: &RunConfig, n_classes: usize) -> Result<Self> {
        Ok(Self {
            grid: cfg.grid()?,
            n_classes,
            hi: cfg.targets.hi,
            lo: cfg.targets.lo,
            forward: ForwardOptions {
                lateral_forward: cfg.lateral_forward,
                build_tables: true,
                record_traces: false,
            },
        })
    }

    fn eval_options(&self) -> ForwardOptions {
        ForwardOptions {
            build_tables: false,
            ..self.forward
        }
    }
}

/// Accuracy, loss and confusion counts of `net` on `set`.
pub fn evaluate(net: &NetworkTopology, set: &SampleSet, session: &Session, epoch: usize) -> Result<EvalReport> {
    let compiled = CompiledNetwork::new(net);
    let n_out = net.output_len();
    let results = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let fwd = forward_compiled(net, &compiled, set.input_steps(i, epoch, &session.grid), &session.grid, session.eval_options())?;
            let o = fwd.output_counts();
            let y = make_targets(set.label(i), n_out, session.hi, session.lo)?;
            Ok((predict(&o), rate_loss(&o, &y)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = vec![vec![0u64; n_out]; n_out];
    let mut loss = 0.0;
    for (i, (pred, l)) in results.iter().enumerate() {
        confusion[set.label(i)][*pred] += 1;
        loss += l;
    }
    let per_class_total: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let per_class_correct: Vec<u64> = (0..n_out).map(|c| confusion[c][c]).collect();
    let n = set.len().max(1) as f64;
    Ok(EvalReport {
        accuracy: per_class_correct.iter().sum::<u64>() as f64 / n,
        mean_loss: loss / n,
        confusion,
        per_class_total,
        per_class_correct,
    })
}

struct SampleOutcome {
    bundle: GradientBundle,
    loss: f64,
    correct: bool,
}

/// Receives the network after every epoch (epoch 0 is the initial state).
pub trait EpochObserver {
    fn on_epoch(&mut self, epoch: usize, net: &NetworkTopology, metrics: &EpochMetrics) -> Result<()>;
}

impl<F: FnMut(usize, &NetworkTopology, &EpochMetrics) -> Result<()>> EpochObserver for F {
    fn on_epoch(&mut self, epoch: usize, net: &NetworkTopology, metrics: &EpochMetrics) -> Result<()> {
        self(epoch, net, metrics)
    }
}

/// Full training state; `run_epoch` advances it by one epoch.
pub struct Trainer {
    pub net: NetworkTopology,
    pub adam: AdamState,
    pub session: Session,
    pub sample_weights: SampleWeights,
    pub cfg: RunConfig,
    epoch: usize,
}

impl Trainer {
    /// Builds the network from `cfg` and draws initial weights from its seed.
    pub fn new(cfg: &RunConfig, n_classes: usize, n_train: usize) -> Result<Self> {
        let mut net = cfg.build_topology()?;
        if net.output_len() != n_classes {
            return Err(Error::config(format!(
                "output layer has {} neurons, dataset has {n_classes} classes",
                net.output_len()
            )));
        }
        net.init_uniform(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let o = &cfg.optimizer;
        let adam = AdamState::new(
            AdamConfig {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            },
            net.all_weights(),
        );
        Ok(Self {
            net,
            adam,
            session: Session::from_config(cfg, n_classes)?,
            sample_weights: SampleWeights::uniform(n_train),
            cfg: cfg.clone(),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn sample_step(&self, compiled: &CompiledNetwork, set: &SampleSet, i: usize) -> Result<SampleOutcome> {
        let s = &self.session;
        let fwd = forward_compiled(&self.net, compiled, set.input_steps(i, self.epoch, &s.grid), &s.grid, s.forward)?;
        let o = fwd.output_counts();
        let label = set.label(i);
        let y = make_targets(label, s.n_classes, s.hi, s.lo)?;
        let bundle = backward_pass(&self.net, compiled, &fwd, &y, self.sample_weights.get(i)).map_err(|e| match e {
            Error::Numerical(m) => Error::numerical(format!("sample {i} (label {label}, output counts {o:?}): {m}")),
            other => other,
        })?;
        Ok(SampleOutcome {
            bundle,
            loss: rate_loss(&o, &y),
            correct: predict(&o) == label,
        })
    }

    /// Averaged gradient of one batch, reduced in sample order.
    fn batch_gradient(&self, compiled: &CompiledNetwork, set: &SampleSet, batch: &[usize]) -> Result<(GradientBundle, Vec<SampleOutcome>)> {
        let outcomes = batch
            .par_iter()
            .map(|&i| self.sample_step(compiled, set, i))
            .collect::<Result<Vec<_>>>()?;
        let mut total = GradientBundle::zeros(&self.net);
        for o in &outcomes {
            total.add_assign(&o.bundle);
        }
        total.scale(1.0 / batch.len() as f64);
        Ok((total, outcomes))
    }

    /// One pass over `train` in a seeded order followed by a test evaluation.
    pub fn run_epoch(&mut self, train: &SampleSet, test: &SampleSet) -> Result<EpochMetrics> {
        let start = Instant::now();
        self.epoch += 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(self.epoch as u64)));
        let mut correct = vec![true; train.len()];
        let mut loss_sum = 0.0;
        let mut norm_sum = vec![0.0; self.net.n_layers()];
        let mut n_batches = 0usize;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let compiled = CompiledNetwork::new(&self.net);
            let (mut grads, outcomes) = self.batch_gradient(&compiled, train, batch)?;
            for (&i, o) in batch.iter().zip(&outcomes) {
                correct[i] = o.correct;
                loss_sum += o.loss;
            }
            let o = &self.cfg.optimizer;
            exp_weight_regularize(self.net.all_weights(), &mut grads, o.reg_lambda, o.reg_beta);
            if let Err(e) = grads.ensure_finite() {
                self.dump_abort(b, batch, &grads, &e);
                return Err(e);
            }
            let norms = grads.grad_norms();
            if self.cfg.output.gradient_diagnostics {
                log::info!(
                    "epoch {} batch {b}: grad norms {:?} delta norms {:?}",
                    self.epoch,
                    norms,
                    grads.delta_norms()
                );
            }
            for (s, n) in norm_sum.iter_mut().zip(&norms) {
                *s += n;
            }
            n_batches += 1;
            adam_step(&mut self.adam, &grads, self.net.all_weights_mut())?;
        }
        if self.cfg.optimizer.reweight {
            let o = &self.cfg.optimizer;
            self.sample_weights = reweight_samples(&correct, o.reweight_kappa, o.reweight_cap);
        }
        let test_report = evaluate(&self.net, test, &self.session, self.epoch)?;
        let n = train.len().max(1) as f64;
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct.iter().filter(|&&c| c).count() as f64 / n,
            test_loss: test_report.mean_loss,
            test_accuracy: test_report.accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
            grad_norms: norm_sum.iter().map(|s| s / n_batches.max(1) as f64).collect(),
        })
    }

    /// Metrics of the untrained network.
    pub fn initial_metrics(&self, train: &SampleSet, test: &SampleSet) -> Result<EpochMetrics> {
        let start = Instant::now();
        let tr = evaluate(&self.net, train, &self.session, 0)?;
        let te = evaluate(&self.net, test, &self.session, 0)?;
        Ok(EpochMetrics {
            epoch: 0,
            train_loss: tr.mean_loss,
            train_accuracy: tr.accuracy,
            test_loss: te.mean_loss,
            test_accuracy: te.accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
            grad_norms: vec![0.0; self.net.n_layers()],
        })
    }

    fn dump_abort(&self, batch_index: usize, batch: &[usize], grads: &GradientBundle, err: &Error) {
        let dump = serde_json::json!({
            "epoch": self.epoch,
            "batch": batch_index,
            "samples": batch,
            "error": err.to_string(),
            "grad_norms": grads.grad_norms(),
            "delta_norms": grads.delta_norms(),
        });
        let path = self.cfg.output.dir.join("abort.json");
        if std::fs::create_dir_all(&self.cfg.output.dir).is_ok() {
            let _ = std::fs::write(&path, dump.to_string());
            log::error!("numerical abort, diagnostics written to {}", path.display());
        }
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub net: NetworkTopology,
    pub history: Vec<EpochMetrics>,
    pub final_checkpoint: PathBuf,
}

/// Runs `cfg.epochs` epochs, appending metrics to `metrics.jsonl` and
/// writing checkpoints into `cfg.output.dir`.
pub fn train(cfg: &RunConfig, train_set: &SampleSet, test_set: &SampleSet, observer: &mut dyn EpochObserver) -> Result<TrainOutcome> {
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let n_classes = cfg.build_topology()?.output_len();
    if let Some(n) = train_set.n_inputs() {
        let expected = cfg.build_topology()?.input_len();
        if n != expected {
            return Err(Error::config(format!("input layer has {expected} neurons, data has {n} channels")));
        }
    }
    let max_label = train_set.n_classes().max(test_set.n_classes());
    if max_label > n_classes {
        return Err(Error::data(format!("data has labels up to {}, output layer has {n_classes} neurons", max_label - 1)));
    }
    let mut trainer = Trainer::new(cfg, n_classes, train_set.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let metrics_path = out.join("metrics.jsonl");
    let mut log_file = std::fs::File::create(&metrics_path)?;
    let mut history = Vec::new();
    let mut record = |m: &EpochMetrics, net: &NetworkTopology, history: &mut Vec<EpochMetrics>| -> Result<()> {
        writeln!(log_file, "{}", serde_json::to_string(m).expect("metrics serialise"))?;
        log_file.flush()?;
        log::info!(
            "epoch {}: train loss {:.3} acc {:.4}, test acc {:.4} ({:.1}s)",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.test_accuracy,
            m.wall_time_s
        );
        observer.on_epoch(m.epoch, net, m)?;
        history.push(m.clone());
        Ok(())
    };
    let initial = pool.install(|| trainer.initial_metrics(train_set, test_set))?;
    record(&initial, &trainer.net, &mut history)?;
    for epoch in 1..=cfg.epochs {
        let m = pool.install(|| trainer.run_epoch(train_set, test_set))?;
        record(&m, &trainer.net, &mut history)?;
        if cfg.output.checkpoint_every > 0 && epoch % cfg.output.checkpoint_every == 0 {
            save_checkpoint(&out.join(format!("epoch-{epoch:04}.hm2b")), &trainer.net)?;
        }
    }
    let final_checkpoint = out.join("final.hm2b");
    save_checkpoint(&final_checkpoint, &trainer.net)?;
    Ok(TrainOutcome {
        net: trainer.net,
        history,
        final_checkpoint,
    })
}

/// Reads a metrics log written by [`train`].
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::data(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_seeded_and_sorted() {
        let a = subset_indices(100, Some(10), 3);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, subset_indices(100, Some(10), 3));
        assert_ne!(a, subset_indices(100, Some(10), 4));
        assert_eq!(subset_indices(5, Some(10), 3), vec![0, 1, 2, 3, 4]);
        assert_eq!(subset_indices(3, None, 3), vec![0, 1, 2]);
    }
}
