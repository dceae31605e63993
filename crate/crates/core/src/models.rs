//! Three small differentiable classifiers (linear softmax, one-hidden-layer
//! MLP, single-conv CNN) exposed through one flat parameter vector, plus
//! cross-entropy, its analytic gradient and mini-batch SGD.
//!
//! Flattening order is part of the checkpoint and averaging contract: layers
//! in forward order, each layer's weights before its bias, weights row-major
//! with the input axis first.
//!
//! | kind   | layout                                                        |
//! |--------|---------------------------------------------------------------|
//! | LINEAR | `W[d×N]`, `b[N]`                                              |
//! | MLP    | `W1[d×H]`, `b1[H]`, `W2[H×N]`, `b2[N]`                        |
//! | CNN    | `K[k×k×c×F]`, `bK[F]`, `W[(ph·pw·F)×N]`, `b[N]`               |
//!
//! The CNN applies `conv → relu → maxpool2 → flatten → dense`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_file, write_file, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{
    argmax, conv2d_valid, matmul, maxpool2_with_argmax, relu, rng_normal, softmax_rows, RngStream,
    Tensor,
};

pub const INIT_STD: f64 = 0.05;
pub const DEFAULT_HIDDEN: usize = 32;
pub const PROB_FLOOR: f64 = 1e-12;

pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ArchKind {
    Linear,
    Mlp,
    Cnn,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Linear, ArchKind::Mlp, ArchKind::Cnn];
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Linear => "LINEAR",
            ArchKind::Mlp => "MLP",
            ArchKind::Cnn => "CNN",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            filters: 4,
            kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub kind: ArchKind,
    /// Per-sample input shape. `[h, w, c]` for CNN, any shape otherwise.
    pub input_shape: Vec<usize>,
    pub hidden: usize,
    pub conv: ConvSpec,
    pub num_classes: usize,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Clone, Copy, Debug)]
struct Block {
    start: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn end(&self) -> usize {
        self.start + self.len()
    }

    fn tensor(&self, flat: &[f64]) -> Tensor {
        Tensor::from_parts(
            vec![self.rows, self.cols],
            flat[self.start..self.end()].to_vec(),
        )
    }
}

fn blocks(shapes: &[(usize, usize)]) -> Vec<Block> {
    let mut start = 0;
    shapes
        .iter()
        .map(|&(rows, cols)| {
            let b = Block { start, rows, cols };
            start += rows * cols;
            b
        })
        .collect()
}

impl Architecture {
    pub fn new(kind: ArchKind, input_shape: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind,
            input_shape,
            hidden: DEFAULT_HIDDEN,
            conv: ConvSpec::default(),
            num_classes,
        }
    }

    /// Architecture of `kind` for samples of `feature_shape`.
    ///
    /// For CNN the features are viewed as an image: `[h, w, c]` is used as is,
    /// `[h, w]` becomes `[h, w, 1]`, and a flat `[d]` with `d` a perfect square
    /// becomes `[√d, √d, 1]`.
    pub fn for_features(
        kind: ArchKind,
        feature_shape: &[usize],
        num_classes: usize,
        hidden: usize,
    ) -> Result<Self> {
        let input_shape = match kind {
            ArchKind::Cnn => image_shape(feature_shape)?,
            _ => feature_shape.to_vec(),
        };
        let arch = Self {
            hidden,
            ..Self::new(kind, input_shape, num_classes)
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::arg(
                "an architecture needs at least 2 output classes",
            ));
        }
        if self.input_len() == 0 {
            return Err(Error::arg(format!(
                "empty input shape {:?}",
                self.input_shape
            )));
        }
        match self.kind {
            ArchKind::Linear => {}
            ArchKind::Mlp => {
                if self.hidden == 0 {
                    return Err(Error::arg("MLP hidden width must be positive"));
                }
            }
            ArchKind::Cnn => {
                let [h, w, _] = self.image()?;
                let k = self.conv.kernel;
                if self.conv.filters == 0 || k == 0 {
                    return Err(Error::arg("CNN needs at least one filter of positive size"));
                }
                if k > h || k > w || h - k + 1 < 2 || w - k + 1 < 2 {
                    return Err(Error::arg(format!(
                        "input {:?} too small for a {k}x{k} convolution followed by 2x2 pooling",
                        self.input_shape
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn image(&self) -> Result<[usize; 3]> {
        match self.input_shape[..] {
            [h, w, c] => Ok([h, w, c]),
            _ => Err(Error::arg(format!(
                "CNN input shape must be [h, w, c], got {:?}",
                self.input_shape
            ))),
        }
    }

    /// `(h, w, c, conv_h, conv_w, pool_h, pool_w)`.
    fn cnn_dims(&self) -> (usize, usize, usize, usize, usize, usize, usize) {
        let [h, w, c] = self.image().expect("validated CNN shape");
        let k = self.conv.kernel;
        let (oh, ow) = (h - k + 1, w - k + 1);
        (h, w, c, oh, ow, oh / 2, ow / 2)
    }

    fn layout(&self) -> Vec<Block> {
        let d = self.input_len();
        let n = self.num_classes;
        match self.kind {
            ArchKind::Linear => blocks(&[(d, n), (1, n)]),
            ArchKind::Mlp => {
                let h = self.hidden;
                blocks(&[(d, h), (1, h), (h, n), (1, n)])
            }
            ArchKind::Cnn => {
                let (_, _, c, _, _, ph, pw) = self.cnn_dims();
                let (k, f) = (self.conv.kernel, self.conv.filters);
                blocks(&[(k * k * c, f), (1, f), (ph * pw * f, n), (1, n)])
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().last().map_or(0, Block::end)
    }

    /// Flat ranges that hold biases.
    fn bias_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.layout()
            .iter()
            .skip(1)
            .step_by(2)
            .map(|b| b.start..b.end())
            .collect()
    }
}

fn image_shape(feature_shape: &[usize]) -> Result<Vec<usize>> {
    match *feature_shape {
        [h, w, c] => Ok(vec![h, w, c]),
        [h, w] => Ok(vec![h, w, 1]),
        [d] => {
            let side = (d as f64).sqrt().round() as usize;
            if side * side == d {
                Ok(vec![side, side, 1])
            } else {
                Err(Error::arg(format!(
                    "CNN needs image-shaped features; {d} is not a perfect square"
                )))
            }
        }
        _ => Err(Error::arg(format!(
            "cannot view feature shape {feature_shape:?} as an image"
        ))),
    }
}

/// All weights and biases of one model, flattened in layout order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub kind: ArchKind,
    pub values: Tensor,
}

impl ParameterVector {
    pub fn new(kind: ArchKind, values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            kind,
            values: Tensor::vector(values)?,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.data()
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseLearner {
    architecture: Architecture,
    params: ParameterVector,
}

/// Weights ~ Normal(0, 0.05), biases exactly 0.
pub fn init_model(arch: &Architecture, rng: &mut RngStream) -> Result<BaseLearner> {
    arch.validate()?;
    let mut values = rng_normal(rng, arch.param_count(), 0.0, INIT_STD)?.into_data();
    for r in arch.bias_ranges() {
        values[r].fill(0.0);
    }
    Ok(BaseLearner {
        architecture: arch.clone(),
        params: ParameterVector::new(arch.kind, values)?,
    })
}

/// Intermediate values kept from the forward pass for backpropagation.
enum Trace {
    Linear,
    Mlp {
        pre: Tensor,
        hidden: Tensor,
    },
    Cnn {
        images: Vec<Tensor>,
        conv_pre: Vec<Tensor>,
        pool_arg: Vec<Vec<usize>>,
        pooled: Tensor,
    },
}

impl BaseLearner {
    pub fn from_params(architecture: Architecture, params: ParameterVector) -> Result<Self> {
        architecture.validate()?;
        check_compatible(&architecture, &params)?;
        Ok(Self {
            architecture,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn kind(&self) -> ArchKind {
        self.architecture.kind
    }

    pub fn num_classes(&self) -> usize {
        self.architecture.num_classes
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    fn batch_rows(&self, batch: &Tensor) -> Result<(usize, Tensor)> {
        let d = self.architecture.input_len();
        let per_sample: usize = batch.shape().iter().skip(1).product();
        if batch.shape().is_empty() || per_sample != d {
            return Err(Error::shape(format!(
                "batch of shape {:?} does not match {} input shape {:?}",
                batch.shape(),
                self.architecture.kind,
                self.architecture.input_shape
            )));
        }
        let m = batch.shape()[0];
        Ok((m, Tensor::from_parts(vec![m, d], batch.data().to_vec())))
    }

    fn logits(&self, batch: &Tensor) -> Result<(Tensor, Tensor, Trace)> {
        let (m, x) = self.batch_rows(batch)?;
        let arch = &self.architecture;
        let flat = self.params.as_slice();
        let layout = arch.layout();
        let (z, trace) = match arch.kind {
            ArchKind::Linear => {
                let z = add_bias(
                    matmul(&x, &layout[0].tensor(flat))?,
                    &flat[layout[1].start..layout[1].end()],
                );
                (z, Trace::Linear)
            }
            ArchKind::Mlp => {
                let pre = add_bias(
                    matmul(&x, &layout[0].tensor(flat))?,
                    &flat[layout[1].start..layout[1].end()],
                );
                let hidden = relu(&pre);
                let z = add_bias(
                    matmul(&hidden, &layout[2].tensor(flat))?,
                    &flat[layout[3].start..layout[3].end()],
                );
                (z, Trace::Mlp { pre, hidden })
            }
            ArchKind::Cnn => {
                let (h, w, c, _, _, ph, pw) = arch.cnn_dims();
                let (k, f) = (arch.conv.kernel, arch.conv.filters);
                let kernels = Tensor::from_parts(
                    vec![k, k, c, f],
                    flat[layout[0].start..layout[0].end()].to_vec(),
                );
                let kbias =
                    Tensor::from_parts(vec![f], flat[layout[1].start..layout[1].end()].to_vec());
                let mut images = Vec::with_capacity(m);
                let mut conv_pre = Vec::with_capacity(m);
                let mut pool_arg = Vec::with_capacity(m);
                let mut pooled = Vec::with_capacity(m * ph * pw * f);
                for i in 0..m {
                    let img = Tensor::from_parts(vec![h, w, c], x.row(i).to_vec());
                    let pre = conv2d_valid(&img, &kernels, &kbias)?;
                    let (p, arg) = maxpool2_with_argmax(&relu(&pre))?;
                    pooled.extend_from_slice(p.data());
                    images.push(img);
                    conv_pre.push(pre);
                    pool_arg.push(arg);
                }
                let pooled = Tensor::from_parts(vec![m, ph * pw * f], pooled);
                let z = add_bias(
                    matmul(&pooled, &layout[2].tensor(flat))?,
                    &flat[layout[3].start..layout[3].end()],
                );
                (
                    z,
                    Trace::Cnn {
                        images,
                        conv_pre,
                        pool_arg,
                        pooled,
                    },
                )
            }
        };
        Ok((x, z, trace))
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let (_, z, _) = self.logits(batch)?;
        softmax_rows(&z)
    }

    /// Argmax class per sample; ties go to the lowest class index.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let probs = self.forward(batch)?;
        Ok((0..probs.shape()[0])
            .map(|i| argmax(probs.row(i)))
            .collect())
    }

    /// Mean cross-entropy of the model on `(batch, labels)`.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        cross_entropy(&self.forward(batch)?, labels)
    }

    /// Analytic gradient of the mean cross-entropy with respect to every
    /// parameter, in flattening order.
    pub fn gradient(&self, batch: &Tensor, labels: &[usize]) -> Result<ParameterVector> {
        let (x, z, trace) = self.logits(batch)?;
        let m = x.shape()[0];
        check_labels(labels, m, self.num_classes())?;
        let n = self.num_classes();

        // d(mean CE)/d(logits) = (softmax - onehot) / m. A sample whose true
        // class probability sits below the clamp has a locally constant loss.
        let mut dz = softmax_rows(&z)?;
        for (i, &l) in labels.iter().enumerate() {
            let row = &mut dz.data_mut()[i * n..(i + 1) * n];
            if row[l] < PROB_FLOOR {
                row.fill(0.0);
            } else {
                row[l] -= 1.0;
            }
        }
        for v in dz.data_mut() {
            *v /= m as f64;
        }

        let arch = &self.architecture;
        let flat = self.params.as_slice();
        let layout = arch.layout();
        let mut grad = vec![0.0; arch.param_count()];
        match trace {
            Trace::Linear => {
                dense_backward(&x, &dz, &layout[0], &layout[1], &mut grad)?;
            }
            Trace::Mlp { pre, hidden } => {
                dense_backward(&hidden, &dz, &layout[2], &layout[3], &mut grad)?;
                let mut dh = matmul(&dz, &layout[2].tensor(flat).transpose()?)?;
                for (g, &p) in dh.data_mut().iter_mut().zip(pre.data()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
                dense_backward(&x, &dh, &layout[0], &layout[1], &mut grad)?;
            }
            Trace::Cnn {
                images,
                conv_pre,
                pool_arg,
                pooled,
            } => {
                dense_backward(&pooled, &dz, &layout[2], &layout[3], &mut grad)?;
                let dpooled = matmul(&dz, &layout[2].tensor(flat).transpose()?)?;
                let (_, w, c, oh, ow, _, _) = arch.cnn_dims();
                let (k, f) = (arch.conv.kernel, arch.conv.filters);
                let (kstart, bstart) = (layout[0].start, layout[1].start);
                let mut dconv = vec![0.0; oh * ow * f];
                for i in 0..m {
                    dconv.fill(0.0);
                    for (&src, &g) in pool_arg[i].iter().zip(dpooled.row(i)) {
                        if conv_pre[i].data()[src] > 0.0 {
                            dconv[src] += g;
                        }
                    }
                    let img = images[i].data();
                    for y in 0..oh {
                        for xx in 0..ow {
                            let cell = &dconv[(y * ow + xx) * f..(y * ow + xx + 1) * f];
                            if cell.iter().all(|&g| g == 0.0) {
                                continue;
                            }
                            for (fi, &g) in cell.iter().enumerate() {
                                grad[bstart + fi] += g;
                            }
                            for dy in 0..k {
                                for dx in 0..k {
                                    for ch in 0..c {
                                        let v = img[((y + dy) * w + xx + dx) * c + ch];
                                        let base = kstart + ((dy * k + dx) * c + ch) * f;
                                        for (fi, &g) in cell.iter().enumerate() {
                                            grad[base + fi] += v * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        ParameterVector::new(arch.kind, grad)
    }
}

fn add_bias(mut z: Tensor, bias: &[f64]) -> Tensor {
    let n = bias.len();
    for row in z.data_mut().chunks_mut(n) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    z
}

/// Accumulates `inputᵀ·dout` into the weight block and the column sums of
/// `dout` into the bias block.
fn dense_backward(
    input: &Tensor,
    dout: &Tensor,
    weights: &Block,
    bias: &Block,
    grad: &mut [f64],
) -> Result<()> {
    let dw = matmul(&input.transpose()?, dout)?;
    grad[weights.start..weights.end()].copy_from_slice(dw.data());
    let n = bias.cols;
    for row in dout.data().chunks(n) {
        for (g, &d) in grad[bias.start..bias.end()].iter_mut().zip(row) {
            *g += d;
        }
    }
    Ok(())
}

fn check_labels(labels: &[usize], m: usize, n: usize) -> Result<()> {
    if labels.len() != m {
        return Err(Error::shape(format!(
            "{m} samples but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::arg(format!("label {bad} outside {n} classes")));
    }
    Ok(())
}

fn check_compatible(arch: &Architecture, p: &ParameterVector) -> Result<()> {
    if p.kind != arch.kind {
        return Err(Error::incompatible(format!(
            "{} parameters cannot be loaded into a {} model",
            p.kind, arch.kind
        )));
    }
    if p.len() != arch.param_count() {
        return Err(Error::incompatible(format!(
            "{} model expects {} parameters, got {}",
            arch.kind,
            arch.param_count(),
            p.len()
        )));
    }
    Ok(())
}

/// `L = -(1/m) Σ_i log(max(p[i, y_i], 1e-12))`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (m, n) = match probs.shape() {
        &[m, n] => (m, n),
        s => {
            return Err(Error::shape(format!(
                "cross_entropy expects [m, N] probabilities, got {s:?}"
            )))
        }
    };
    if m == 0 {
        return Err(Error::arg("cross_entropy of an empty batch"));
    }
    check_labels(labels, m, n)?;
    let log_sum: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| probs.at(i, l).max(PROB_FLOOR).ln())
        .sum();
    // `0.0 -` rather than negation keeps a perfect score at +0.
    Ok((0.0 - log_sum) / m as f64)
}

pub fn get_params(model: &BaseLearner) -> ParameterVector {
    model.params.clone()
}

pub fn set_params(model: &BaseLearner, params: ParameterVector) -> Result<BaseLearner> {
    check_compatible(&model.architecture, &params)?;
    Ok(BaseLearner {
        architecture: model.architecture.clone(),
        params,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_lr")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    fn default_lr() -> f64 {
        0.05
    }
    fn default_epochs() -> usize {
        20
    }
    fn default_batch() -> usize {
        32
    }

    /// Every violated constraint, as human-readable lines.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        // lr = 0 is accepted: it is a useful no-op for experiments.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            out.push(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            ));
        }
        if self.epochs == 0 {
            out.push("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        out
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: Self::default_lr(),
            epochs: Self::default_epochs(),
            batch_size: Self::default_batch(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: BaseLearner,
    /// Sample-weighted mean mini-batch loss of each epoch, measured before
    /// each step.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD on mean cross-entropy. Samples are reshuffled every epoch
/// from a stream keyed by `cfg.seed`; the last batch of an epoch may be short.
pub fn train_local(
    model: &BaseLearner,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if let Some(p) = cfg.problems().into_iter().next() {
        return Err(Error::arg(p));
    }
    if train.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if train.feature_len() != model.architecture.input_len() {
        return Err(Error::shape(format!(
            "dataset feature shape {:?} does not match {} input shape {:?}",
            train.feature_shape(),
            model.kind(),
            model.architecture.input_shape
        )));
    }

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut current = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.subset(chunk);
            loss_sum += current.loss(batch.features(), batch.labels())? * chunk.len() as f64;
            if cfg.learning_rate == 0.0 {
                continue;
            }
            let grad = current.gradient(batch.features(), batch.labels())?;
            let mut values = current.params.values.clone();
            for (p, g) in values.data_mut().iter_mut().zip(grad.as_slice()) {
                *p -= cfg.learning_rate * g;
            }
            if values.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!(
                    "{} training diverged; lower the learning rate",
                    current.kind()
                )));
            }
            current.params.values = values;
        }
        epoch_losses.push(loss_sum / train.len() as f64);
    }
    Ok(TrainOutcome {
        model: current,
        epoch_losses,
    })
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &BaseLearner, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(d.features())?;
    let hits = pred.iter().zip(d.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / d.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    format_version: u32,
    architecture: Architecture,
    param_count: usize,
}

/// Writes `model.json` and `params.bin` (little-endian f64 in flattening
/// order) into `dir`.
pub fn save_model(model: &BaseLearner, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ModelManifest {
        format_version: 1,
        architecture: model.architecture.clone(),
        param_count: model.params.len(),
    };
    write_file(
        &dir.join(MODEL_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    let bytes: Vec<u8> = model
        .params
        .as_slice()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    write_file(&dir.join(PARAMS_FILE), &bytes)
}

pub fn load_model(dir: &Path) -> Result<BaseLearner> {
    let raw = read_file(&dir.join(MODEL_FILE))?;
    let manifest: ModelManifest =
        serde_json::from_slice(&raw).map_err(|e| Error::format(MODEL_FILE, e.to_string()))?;
    if manifest.format_version != 1 {
        return Err(Error::format(
            "format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    manifest
        .architecture
        .validate()
        .map_err(|e| Error::format("architecture", e.to_string()))?;
    if manifest.param_count != manifest.architecture.param_count() {
        return Err(Error::format(
            "param_count",
            format!(
                "{} declared but the architecture has {}",
                manifest.param_count,
                manifest.architecture.param_count()
            ),
        ));
    }
    let bytes = read_file(&dir.join(PARAMS_FILE))?;
    if bytes.len() != manifest.param_count * 8 {
        return Err(Error::format(
            "param_count",
            format!(
                "{} parameters declared but `{PARAMS_FILE}` holds {} bytes",
                manifest.param_count,
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ParameterVector::new(manifest.architecture.kind, values)
        .map_err(|e| Error::format(PARAMS_FILE, e.to_string()))?;
    BaseLearner::from_params(manifest.architecture, params)
}
