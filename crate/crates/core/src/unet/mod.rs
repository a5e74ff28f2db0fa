//! Spectrogram denoiser: U-Net architecture, MSE training with Adam,
//! transfer-learning pretraining, checkpointing and leave-one-subject-out
//! splits.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod model;

pub use adam::AdamConfig;
pub use model::{UNet, UNetConfig};

use crate::error::{Error, Result};
use crate::spectro::LogMelSpectrogram;
use adam::Adam;
use ndarray::{Array2, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 64, adam: AdamConfig::default(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

/// One supervised example: stacked audio spectrogram in, clean reference
/// spectrogram out, tagged for subject-level cross validation.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub input: LogMelSpectrogram,
    pub target: LogMelSpectrogram,
    pub subject: String,
    pub activity: String,
}

/// A set of training pairs normalized with one shared constant.
#[derive(Debug, Clone, Default)]
pub struct SpectrogramDataset {
    pub pairs: Vec<TrainPair>,
    pub norm_constant: f64,
}

impl SpectrogramDataset {
    pub fn subjects(&self) -> Vec<String> {
        let mut subjects: Vec<String> = self.pairs.iter().map(|p| p.subject.clone()).collect();
        subjects.sort();
        subjects.dedup();
        subjects
    }
}

/// Epochs seen and per-epoch training loss.
#[derive(Debug, Clone, Default)]
pub struct TrainingMeta {
    pub epochs_seen: usize,
    pub loss_history: Vec<f64>,
}

/// The denoiser: network weights plus the normalization constant the model
/// was trained with (persisted with the checkpoint).
pub struct DenoiserModel {
    net: UNet<f32>,
    norm_constant: f64,
    meta: TrainingMeta,
}

impl DenoiserModel {
    /// Freshly initialized model (seeded Kaiming-uniform weights).
    pub fn new(config: UNetConfig, seed: u64, norm_constant: f64) -> Result<Self> {
        if !(norm_constant > 0.0) {
            return Err(Error::Config(format!(
                "normalization constant must be > 0, got {norm_constant}"
            )));
        }
        Ok(Self { net: UNet::init(config, seed)?, norm_constant, meta: TrainingMeta::default() })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.net.config
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn set_norm_constant(&mut self, c: f64) {
        self.norm_constant = c;
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Inference pass on one normalized input spectrogram; deterministic
    /// (dropout off, batchnorm on running statistics). Output values are
    /// clipped back into the normalized range.
    pub fn forward(&self, x: &LogMelSpectrogram) -> Result<LogMelSpectrogram> {
        Ok(self.forward_batch(std::slice::from_ref(x))?.pop().unwrap())
    }

    /// Batched inference; one output spectrogram per input.
    pub fn forward_batch(&self, xs: &[LogMelSpectrogram]) -> Result<Vec<LogMelSpectrogram>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let (h, w) = self.net.config.input_size;
        for x in xs {
            self.check_input(x, h, w)?;
        }
        let batch = self.batch_tensor(xs, h, w);
        let y = self.net.forward_eval(&batch);
        Ok(self.outputs_from(y, xs))
    }

    /// Inference with encoder skip `level` zeroed; diagnostic for verifying
    /// that skip connections carry information.
    pub fn forward_ablating_skip(
        &self,
        x: &LogMelSpectrogram,
        level: usize,
    ) -> Result<LogMelSpectrogram> {
        let (h, w) = self.net.config.input_size;
        self.check_input(x, h, w)?;
        let batch = self.batch_tensor(std::slice::from_ref(x), h, w);
        let y = self.net.forward_eval_ablating(&batch, Some(level));
        Ok(self.outputs_from(y, std::slice::from_ref(x)).pop().unwrap())
    }

    fn check_input(&self, x: &LogMelSpectrogram, h: usize, w: usize) -> Result<()> {
        if x.num_channels() != self.net.config.in_channels {
            return Err(Error::Shape(format!(
                "denoiser expects {} input channels, got {}",
                self.net.config.in_channels,
                x.num_channels()
            )));
        }
        if x.shape() != (h, w) {
            return Err(Error::Shape(format!(
                "denoiser expects {h}x{w} spectrograms, got {:?}",
                x.shape()
            )));
        }
        if !x.is_normalized() {
            return Err(Error::Config("denoiser input must be normalized".into()));
        }
        Ok(())
    }

    fn batch_tensor(&self, xs: &[LogMelSpectrogram], h: usize, w: usize) -> Array4<f32> {
        let c = self.net.config.in_channels;
        let mut batch = Array4::<f32>::zeros((xs.len(), c, h, w));
        for (s, x) in xs.iter().enumerate() {
            for (ci, plane) in x.channels().iter().enumerate() {
                for ((i, j), &v) in plane.indexed_iter() {
                    batch[(s, ci, i, j)] = v as f32;
                }
            }
        }
        batch
    }

    fn outputs_from(&self, y: Array4<f32>, xs: &[LogMelSpectrogram]) -> Vec<LogMelSpectrogram> {
        let (n, co, h, w) = y.dim();
        debug_assert_eq!(n, xs.len());
        xs.iter()
            .enumerate()
            .map(|(s, x)| {
                let channels: Vec<Array2<f64>> = (0..co)
                    .map(|ci| {
                        Array2::from_shape_fn((h, w), |(i, j)| {
                            (y[(s, ci, i, j)] as f64).clamp(0.0, 1.0)
                        })
                    })
                    .collect();
                LogMelSpectrogram::from_normalized(
                    channels,
                    x.norm_constant().unwrap(),
                    x.log_floor_eps(),
                )
            })
            .collect()
    }

    /// Serialize to the binary checkpoint format.
    pub fn save(&self) -> Vec<u8> {
        checkpoint::serialize(&self.net, self.norm_constant, &self.meta.loss_history)
    }

    /// Load from checkpoint bytes.
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let (net, norm_constant, loss_history) = checkpoint::deserialize(bytes)?;
        let epochs_seen = loss_history.len();
        Ok(Self { net, norm_constant, meta: TrainingMeta { epochs_seen, loss_history } })
    }
}

/// Mean squared error between two equal-shape single-channel spectrograms:
/// the elementwise squared difference averaged over all time/frequency bins.
pub fn mse_loss(y: &LogMelSpectrogram, y_hat: &LogMelSpectrogram) -> Result<f64> {
    if y.num_channels() != 1 || y_hat.num_channels() != 1 {
        return Err(Error::Shape("mse is defined on single-channel spectrograms".into()));
    }
    if y.shape() != y_hat.shape() {
        return Err(Error::Shape(format!(
            "shape mismatch: {:?} vs {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    let (t, f) = y.shape();
    let mut acc = 0.0;
    for (a, b) in y.channel(0).iter().zip(y_hat.channel(0).iter()) {
        acc += (a - b) * (a - b);
    }
    Ok(acc / (t * f) as f64)
}

/// Train the denoiser with shuffled mini-batches of (input, target) pairs.
///
/// Deterministic for a fixed seed: shuffling, dropout masks and gradient
/// accumulation all run in a fixed order. The per-epoch mean training loss
/// is appended to the model's loss history.
pub fn train(
    model: &mut DenoiserModel,
    dataset: &SpectrogramDataset,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if dataset.pairs.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let (h, w) = model.net.config.input_size;
    let cin = model.net.config.in_channels;
    let cout = model.net.config.out_channels;
    for (i, p) in dataset.pairs.iter().enumerate() {
        if p.input.num_channels() != cin || p.input.shape() != (h, w) {
            return Err(Error::Shape(format!("pair {i}: input shape mismatch")));
        }
        if p.target.num_channels() != cout || p.target.shape() != (h, w) {
            return Err(Error::Shape(format!("pair {i}: target shape mismatch")));
        }
        let (nc_in, nc_t) = (p.input.norm_constant(), p.target.norm_constant());
        if nc_in != Some(dataset.norm_constant) || nc_t != Some(dataset.norm_constant) {
            return Err(Error::Config(format!(
                "pair {i} is not normalized with the dataset constant {}",
                dataset.norm_constant
            )));
        }
    }
    model.norm_constant = dataset.norm_constant;

    let m = dataset.pairs.len();
    let mut inputs = Array4::<f32>::zeros((m, cin, h, w));
    let mut targets = Array4::<f32>::zeros((m, cout, h, w));
    for (s, p) in dataset.pairs.iter().enumerate() {
        for (ci, plane) in p.input.channels().iter().enumerate() {
            for ((i, j), &v) in plane.indexed_iter() {
                inputs[(s, ci, i, j)] = v as f32;
            }
        }
        for (ci, plane) in p.target.channels().iter().enumerate() {
            for ((i, j), &v) in plane.indexed_iter() {
                targets[(s, ci, i, j)] = v as f32;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let param_lens: Vec<usize> = model.net.trainable_mut().iter().map(|p| p.len()).collect();
    let mut opt: Adam<f32> = Adam::new(cfg.adam, &param_lens);
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 0..cfg.epochs {
        // Fisher-Yates shuffle.
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = inputs.select(Axis(0), chunk);
            let tb = targets.select(Axis(0), chunk);
            let (y, tape) = model.net.forward_train(xb, &mut rng);
            let numel = y.len() as f32;
            let diff = &y - &tb;
            let loss = diff.mapv(|v| (v as f64) * (v as f64)).sum() / numel as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            let dy = diff.mapv(|v| 2.0 * v / numel);
            let (mut grads, _) = model.net.backward(&tape, &dy);
            let mut grad_slices = model.net.grad_slices(&mut grads);
            let mut params = model.net.trainable_mut();
            opt.step(&mut params, &grad_slices.as_mut_slice());
        }
        model.meta.loss_history.push(epoch_loss / m as f64);
        model.meta.epochs_seen += 1;
    }

    // Batchnorm re-estimation: dropout inflates the activation variance the
    // running statistics see during training; inference runs without
    // dropout, so the stats are refreshed on dropout-free passes until the
    // exponential moving average has forgotten the training-time values.
    if cfg.epochs > 0 {
        let refresh_batches = 70usize;
        let mut done = 0;
        'refresh: loop {
            for chunk in order.chunks(cfg.batch_size) {
                if done >= refresh_batches {
                    break 'refresh;
                }
                let xb = inputs.select(Axis(0), chunk);
                let _ = model.net.forward_train_with_dropout(xb, &mut rng, 0.0);
                done += 1;
            }
        }
    }
    Ok(())
}

/// Autoencoder pretraining on a corpus of single-channel spectrograms: each
/// one serves as both input (duplicated across the input channels) and
/// label. The resulting weights are the initialization for [`train`].
pub fn pretrain(
    model: &mut DenoiserModel,
    corpus: &[LogMelSpectrogram],
    cfg: &TrainConfig,
) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".into()));
    }
    let cin = model.net.config.in_channels;
    let mut pairs = Vec::with_capacity(corpus.len());
    let norm_constant = corpus[0]
        .norm_constant()
        .ok_or_else(|| Error::Config("pretraining corpus must be normalized".into()))?;
    for (i, s) in corpus.iter().enumerate() {
        if s.num_channels() != 1 {
            return Err(Error::Shape(format!(
                "corpus spectrogram {i} must be single-channel"
            )));
        }
        pairs.push(TrainPair {
            input: s.duplicate_channels(cin),
            target: s.clone(),
            subject: "pretrain".into(),
            activity: "corpus".into(),
        });
    }
    let dataset = SpectrogramDataset { pairs, norm_constant };
    train(model, &dataset, cfg)
}

/// Split a dataset for leave-one-subject-out testing: the held-out subject's
/// pairs form the test set, everything else trains.
pub fn loso_split(
    dataset: &SpectrogramDataset,
    held_out: &str,
) -> Result<(SpectrogramDataset, SpectrogramDataset)> {
    if !dataset.pairs.iter().any(|p| p.subject == held_out) {
        return Err(Error::Data(format!("subject {held_out:?} not present in dataset")));
    }
    let (test, training): (Vec<TrainPair>, Vec<TrainPair>) =
        dataset.pairs.iter().cloned().partition(|p| p.subject == held_out);
    if training.is_empty() {
        return Err(Error::Config(format!(
            "holding out {held_out:?} leaves an empty training set"
        )));
    }
    Ok((
        SpectrogramDataset { pairs: training, norm_constant: dataset.norm_constant },
        SpectrogramDataset { pairs: test, norm_constant: dataset.norm_constant },
    ))
}
