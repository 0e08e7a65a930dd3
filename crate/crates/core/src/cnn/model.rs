//! Forward, backward and Adadelta for the CNN classifier.
//!
//! Index 0 is the PAD token with a frozen all-zero embedding. Sequences are
//! zero-context padded by (window-1)/2 on each side, so the convolution
//! yields one feature vector per position and max-pooling runs over every
//! padded position.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CnnConfig, Head};
use crate::util::sigmoid;
use crate::{Error, Result};

const CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    /// Vocabulary size excluding PAD; valid token indices are 1..=vocab_size.
    pub vocab_size: usize,
    pub embedding: Array2<f64>,
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    pub hidden_w: Array2<f64>,
    pub hidden_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl CnnModel {
    /// Seeded uniform(-0.05, 0.05) initialization; the PAD embedding row
    /// stays zero. `pretrained` replaces the random embedding matrix.
    pub fn init(
        config: &CnnConfig,
        vocab_size: usize,
        pretrained: Option<Array2<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut uniform =
            |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| rng.random_range(-0.05..0.05));
        let d = config.embed_dim;
        let embedding = match pretrained {
            Some(mut e) => {
                if e.nrows() != vocab_size + 1 || e.ncols() != d {
                    return Err(Error::ShapeMismatch(format!(
                        "pretrained embeddings are {}x{}, expected {}x{d}",
                        e.nrows(),
                        e.ncols(),
                        vocab_size + 1
                    )));
                }
                e.row_mut(0).fill(0.0);
                e
            }
            None => {
                let mut e = uniform((vocab_size + 1, d));
                e.row_mut(0).fill(0.0);
                e
            }
        };
        let conv_w = uniform((config.conv_window * d, config.conv_units));
        let hidden_w = uniform((config.conv_units, config.hidden_units));
        let out_w = uniform((config.hidden_units, config.num_classes));
        Ok(Self {
            config: config.clone(),
            vocab_size,
            embedding,
            conv_w,
            conv_b: Array1::zeros(config.conv_units),
            hidden_w,
            hidden_b: Array1::zeros(config.hidden_units),
            out_w,
            out_b: Array1::zeros(config.num_classes),
        })
    }
}

/// A batch of index sequences padded to a common length, with target rows.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    /// `batch x m_max` token indices, PAD = 0.
    pub indices: Array2<u32>,
    /// `batch x K` targets: one-hot rows for softmax, binary for sigmoid.
    pub targets: Array2<f64>,
}

impl PaddedBatch {
    pub fn new(sequences: &[&[u32]], targets: Array2<f64>, m_max: usize) -> Result<Self> {
        if sequences.len() != targets.nrows() {
            return Err(Error::LengthMismatch {
                left: sequences.len(),
                right: targets.nrows(),
            });
        }
        if m_max == 0 || sequences.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidConfig(
                "sequences must be non-empty".into(),
            ));
        }
        let mut indices = Array2::zeros((sequences.len(), m_max));
        for (b, seq) in sequences.iter().enumerate() {
            if seq.len() > m_max {
                return Err(Error::ShapeMismatch(format!(
                    "sequence of length {} exceeds batch length {m_max}",
                    seq.len()
                )));
            }
            for (i, &tok) in seq.iter().enumerate() {
                indices[(b, i)] = tok;
            }
        }
        Ok(Self { indices, targets })
    }

    pub fn len(&self) -> usize {
        self.indices.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.nrows() == 0
    }
}

/// Dropout masks for one example, pre-scaled by 1/(1-p).
#[derive(Debug, Clone)]
struct DropoutMasks {
    emb: Array2<f64>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
}

/// Cached activations of one example.
#[derive(Debug, Clone)]
pub struct ExampleCache {
    emb_dropped: Array2<f64>,
    masks: Option<DropoutMasks>,
    argmax: Vec<usize>,
    pub(crate) pooled_relu: Vec<f64>,
    pooled_dropped: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden_dropped: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) examples: Vec<ExampleCache>,
}

/// Per-parameter gradients; same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Array2<f64>,
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    pub hidden_w: Array2<f64>,
    pub hidden_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Self {
            embedding: Array2::zeros(model.embedding.dim()),
            conv_w: Array2::zeros(model.conv_w.dim()),
            conv_b: Array1::zeros(model.conv_b.len()),
            hidden_w: Array2::zeros(model.hidden_w.dim()),
            hidden_b: Array1::zeros(model.hidden_b.len()),
            out_w: Array2::zeros(model.out_w.dim()),
            out_b: Array1::zeros(model.out_b.len()),
        }
    }
}

fn forward_example(
    model: &CnnModel,
    indices: &[u32],
    masks: Option<DropoutMasks>,
) -> (Vec<f64>, ExampleCache) {
    let cfg = &model.config;
    let d = cfg.embed_dim;
    let n = cfg.conv_window;
    let half = n / 2;
    let m_max = indices.len();
    let c_units = cfg.conv_units;

    let mut emb = Array2::zeros((m_max, d));
    for (i, &tok) in indices.iter().enumerate() {
        let row = model.embedding.row(tok as usize);
        emb.row_mut(i).assign(&row);
    }
    if let Some(m) = &masks {
        emb *= &m.emb;
    }

    // Window matrix: each row is the concatenation of the surrounding
    // embeddings, zero outside the sequence.
    let mut windows = Array2::zeros((m_max, n * d));
    for i in 0..m_max {
        for k in 0..n {
            let pos = i as i64 + k as i64 - half as i64;
            if pos >= 0 && (pos as usize) < m_max {
                let src = emb.row(pos as usize);
                windows
                    .row_mut(i)
                    .slice_mut(ndarray::s![k * d..(k + 1) * d])
                    .assign(&src);
            }
        }
    }
    let mut a1 = windows.dot(&model.conv_w);
    for mut row in a1.rows_mut() {
        row += &model.conv_b;
    }

    // ReLU + max-over-time with first-index tie breaking.
    let mut argmax = vec![0usize; c_units];
    let mut pooled_relu = vec![f64::NEG_INFINITY; c_units];
    for (i, row) in a1.rows().into_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let r = v.max(0.0);
            if r > pooled_relu[c] {
                pooled_relu[c] = r;
                argmax[c] = i;
            }
        }
    }

    let pooled_dropped: Vec<f64> = match &masks {
        Some(m) => pooled_relu
            .iter()
            .zip(&m.pooled)
            .map(|(v, k)| v * k)
            .collect(),
        None => pooled_relu.clone(),
    };

    let pd = Array1::from_vec(pooled_dropped.clone());
    let mut hidden_pre = pd.dot(&model.hidden_w);
    hidden_pre += &model.hidden_b;
    let hidden_relu: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let hidden_dropped: Vec<f64> = match &masks {
        Some(m) => hidden_relu
            .iter()
            .zip(&m.hidden)
            .map(|(v, k)| v * k)
            .collect(),
        None => hidden_relu,
    };

    let hd = Array1::from_vec(hidden_dropped.clone());
    let mut logits = hd.dot(&model.out_w);
    logits += &model.out_b;

    let output: Vec<f64> = match cfg.head {
        Head::Softmax => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        }
        Head::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
    };

    (
        output,
        ExampleCache {
            emb_dropped: emb,
            masks,
            argmax,
            pooled_relu,
            pooled_dropped,
            hidden_pre: hidden_pre.to_vec(),
            hidden_dropped,
        },
    )
}

/// Forward over a batch. In training mode, dropout masks are drawn from
/// `rng` example by example before any parallel work, so results do not
/// depend on the worker count.
pub fn forward(
    model: &CnnModel,
    batch: &PaddedBatch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, ForwardCache)> {
    let cfg = &model.config;
    let m_max = batch.indices.ncols();
    if m_max == 0 {
        return Err(Error::InvalidConfig("zero-length batch".into()));
    }
    let masks: Vec<Option<DropoutMasks>> = match rng {
        Some(rng) if cfg.dropout > 0.0 => {
            let p = cfg.dropout;
            let scale = 1.0 / (1.0 - p);
            let mut draw = |len: usize| -> Vec<f64> {
                (0..len)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
                    .collect()
            };
            (0..batch.len())
                .map(|_| {
                    Some(DropoutMasks {
                        emb: Array2::from_shape_vec(
                            (m_max, cfg.embed_dim),
                            draw(m_max * cfg.embed_dim),
                        )
                        .expect("mask shape"),
                        pooled: draw(cfg.conv_units),
                        hidden: draw(cfg.hidden_units),
                    })
                })
                .collect()
        }
        _ => vec![None; batch.len()],
    };

    let results: Vec<(Vec<f64>, ExampleCache)> = batch
        .indices
        .rows()
        .into_iter()
        .zip(masks)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(row, mask)| forward_example(model, row.to_slice().expect("row-major"), mask))
        .collect();

    let mut outputs = Array2::zeros((batch.len(), cfg.num_classes));
    let mut examples = Vec::with_capacity(batch.len());
    for (b, (out, cache)) in results.into_iter().enumerate() {
        for (k, &v) in out.iter().enumerate() {
            outputs[(b, k)] = v;
        }
        examples.push(cache);
    }
    Ok((outputs, ForwardCache { examples }))
}

/// `-sum_k y_k ln o_k` with outputs clipped away from 0 and 1.
pub fn categorical_cross_entropy(output: &[f64], target: &[f64]) -> f64 {
    output
        .iter()
        .zip(target)
        .map(|(&o, &y)| -y * o.clamp(CLIP, 1.0 - CLIP).ln())
        .sum()
}

/// `-sum_k (y_k ln o_k + (1-y_k) ln(1-o_k))` with clipping.
pub fn binary_cross_entropy(output: &[f64], target: &[f64]) -> f64 {
    output
        .iter()
        .zip(target)
        .map(|(&o, &y)| {
            let o = o.clamp(CLIP, 1.0 - CLIP);
            -(y * o.ln() + (1.0 - y) * (1.0 - o).ln())
        })
        .sum()
}

/// Mean loss of a batch under the model's head.
pub fn batch_loss(head: Head, outputs: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let n = outputs.nrows().max(1) as f64;
    outputs
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(o, y)| {
            let (o, y) = (o.to_slice().expect("row-major"), y.to_slice().expect("row-major"));
            match head {
                Head::Softmax => categorical_cross_entropy(o, y),
                Head::Sigmoid => binary_cross_entropy(o, y),
            }
        })
        .sum::<f64>()
        / n
}

/// Exact gradients of the mean batch loss with respect to every parameter.
/// The PAD embedding row is frozen: its gradient is identically zero.
pub fn backward(
    model: &CnnModel,
    batch: &PaddedBatch,
    outputs: &Array2<f64>,
    cache: &ForwardCache,
) -> Gradients {
    let cfg = &model.config;
    let d = cfg.embed_dim;
    let n = cfg.conv_window;
    let half = n / 2;
    let m_max = batch.indices.ncols();
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(model);

    for (b, ex) in cache.examples.iter().enumerate() {
        // Softmax + cross-entropy and sigmoid + binary cross-entropy share
        // the logit gradient (o - y).
        let dz: Vec<f64> = (0..cfg.num_classes)
            .map(|k| (outputs[(b, k)] - batch.targets[(b, k)]) * inv_b)
            .collect();

        // Output layer.
        for h in 0..cfg.hidden_units {
            let hv = ex.hidden_dropped[h];
            for (k, &dzk) in dz.iter().enumerate() {
                grads.out_w[(h, k)] += hv * dzk;
            }
        }
        for (k, &dzk) in dz.iter().enumerate() {
            grads.out_b[k] += dzk;
        }

        // Hidden layer.
        let mut da2 = vec![0.0; cfg.hidden_units];
        for h in 0..cfg.hidden_units {
            let mut g = 0.0;
            for (k, &dzk) in dz.iter().enumerate() {
                g += model.out_w[(h, k)] * dzk;
            }
            if let Some(m) = &ex.masks {
                g *= m.hidden[h];
            }
            if ex.hidden_pre[h] <= 0.0 {
                g = 0.0;
            }
            da2[h] = g;
        }
        for c in 0..cfg.conv_units {
            let pv = ex.pooled_dropped[c];
            for (h, &g) in da2.iter().enumerate() {
                grads.hidden_w[(c, h)] += pv * g;
            }
        }
        for (h, &g) in da2.iter().enumerate() {
            grads.hidden_b[h] += g;
        }

        // Pooled vector; gradient flows only to each filter's argmax
        // position, and through ReLU only where the pooled value is positive.
        let mut demb = Array2::<f64>::zeros((m_max, d));
        for c in 0..cfg.conv_units {
            let mut g = 0.0;
            for (h, &ga) in da2.iter().enumerate() {
                g += model.hidden_w[(c, h)] * ga;
            }
            if let Some(m) = &ex.masks {
                g *= m.pooled[c];
            }
            if ex.pooled_relu[c] <= 0.0 {
                continue;
            }
            if g == 0.0 {
                continue;
            }
            let i = ex.argmax[c];
            grads.conv_b[c] += g;
            for k in 0..n {
                let pos = i as i64 + k as i64 - half as i64;
                if pos < 0 || pos as usize >= m_max {
                    continue;
                }
                let pos = pos as usize;
                let emb_row = ex.emb_dropped.row(pos);
                for dd in 0..d {
                    grads.conv_w[(k * d + dd, c)] += g * emb_row[dd];
                    demb[(pos, dd)] += g * model.conv_w[(k * d + dd, c)];
                }
            }
        }

        // Embedding rows (PAD frozen).
        for i in 0..m_max {
            let tok = batch.indices[(b, i)] as usize;
            if tok == 0 {
                continue;
            }
            for dd in 0..d {
                let mut g = demb[(i, dd)];
                if let Some(m) = &ex.masks {
                    g *= m.emb[(i, dd)];
                }
                grads.embedding[(tok, dd)] += g;
            }
        }
    }
    grads
}

/// Accumulator state of the Adadelta rule.
#[derive(Debug, Clone)]
pub struct AdadeltaState {
    accum_grad: Gradients,
    accum_update: Gradients,
}

impl AdadeltaState {
    pub fn new(model: &CnnModel) -> Self {
        Self {
            accum_grad: Gradients::zeros_like(model),
            accum_update: Gradients::zeros_like(model),
        }
    }
}

fn adadelta_array2(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    eg: &mut Array2<f64>,
    ex: &mut Array2<f64>,
    rho: f64,
    eps: f64,
) {
    for (((p, &g), e_g), e_x) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(eg.iter_mut())
        .zip(ex.iter_mut())
    {
        *e_g = rho * *e_g + (1.0 - rho) * g * g;
        let update = -((*e_x + eps).sqrt() / (*e_g + eps).sqrt()) * g;
        *e_x = rho * *e_x + (1.0 - rho) * update * update;
        *p += update;
    }
}

fn adadelta_array1(
    param: &mut Array1<f64>,
    grad: &Array1<f64>,
    eg: &mut Array1<f64>,
    ex: &mut Array1<f64>,
    rho: f64,
    eps: f64,
) {
    for (((p, &g), e_g), e_x) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(eg.iter_mut())
        .zip(ex.iter_mut())
    {
        *e_g = rho * *e_g + (1.0 - rho) * g * g;
        let update = -((*e_x + eps).sqrt() / (*e_g + eps).sqrt()) * g;
        *e_x = rho * *e_x + (1.0 - rho) * update * update;
        *p += update;
    }
}

/// One Adadelta step over every parameter array.
pub fn adadelta_step(model: &mut CnnModel, grads: &Gradients, state: &mut AdadeltaState) {
    let (rho, eps) = (model.config.rho, model.config.epsilon);
    adadelta_array2(
        &mut model.embedding,
        &grads.embedding,
        &mut state.accum_grad.embedding,
        &mut state.accum_update.embedding,
        rho,
        eps,
    );
    adadelta_array2(
        &mut model.conv_w,
        &grads.conv_w,
        &mut state.accum_grad.conv_w,
        &mut state.accum_update.conv_w,
        rho,
        eps,
    );
    adadelta_array1(
        &mut model.conv_b,
        &grads.conv_b,
        &mut state.accum_grad.conv_b,
        &mut state.accum_update.conv_b,
        rho,
        eps,
    );
    adadelta_array2(
        &mut model.hidden_w,
        &grads.hidden_w,
        &mut state.accum_grad.hidden_w,
        &mut state.accum_update.hidden_w,
        rho,
        eps,
    );
    adadelta_array1(
        &mut model.hidden_b,
        &grads.hidden_b,
        &mut state.accum_grad.hidden_b,
        &mut state.accum_update.hidden_b,
        rho,
        eps,
    );
    adadelta_array2(
        &mut model.out_w,
        &grads.out_w,
        &mut state.accum_grad.out_w,
        &mut state.accum_update.out_w,
        rho,
        eps,
    );
    adadelta_array1(
        &mut model.out_b,
        &grads.out_b,
        &mut state.accum_grad.out_b,
        &mut state.accum_update.out_b,
        rho,
        eps,
    );
}
