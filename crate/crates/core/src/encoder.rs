//! The shared sentence encoder: token embeddings, inverted dropout on the
//! embedded positions, mean pooling and a tanh affine projection.
//!
//! One set of parameters produces every dropout view of a sentence; only the
//! masks differ between views.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsclError, Result};
use crate::numerics::{l2_norm, sample_dropout_mask, DropoutMask, DropoutSpec, RngStream, Tensor};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub output_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.output_dim == 0 {
            return Err(EsclError::Config(format!(
                "encoder dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn num_params(&self) -> usize {
        self.vocab_size * self.embed_dim + self.embed_dim * self.output_dim + self.output_dim
    }
}

/// Trainable weights of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    /// (vocab_size, embed_dim)
    pub token_embeddings: Tensor,
    /// (embed_dim, output_dim)
    pub projection_weight: Tensor,
    /// (output_dim)
    pub projection_bias: Tensor,
}

/// A non-empty sentence of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(EsclError::Input("empty token sequence".into()));
        }
        Ok(TokenSequence(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Embeddings of a minibatch under the three dropout views, one row per
/// sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchViews {
    /// Low-rate view.
    pub anchor: Tensor,
    /// Second, independent low-rate view.
    pub positive: Tensor,
    /// High-rate view.
    pub negative: Tensor,
}

impl BatchViews {
    pub fn new(anchor: Tensor, positive: Tensor, negative: Tensor) -> Result<Self> {
        if anchor.shape().len() != 2
            || anchor.shape() != positive.shape()
            || anchor.shape() != negative.shape()
        {
            return Err(EsclError::Dimension(format!(
                "view shapes {:?}, {:?}, {:?}",
                anchor.shape(),
                positive.shape(),
                negative.shape()
            )));
        }
        Ok(BatchViews {
            anchor,
            positive,
            negative,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.anchor.rows()
    }

    pub fn dim(&self) -> usize {
        self.anchor.cols()
    }
}

/// Index of each view in mask-stream keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Anchor = 0,
    Positive = 1,
    Negative = 2,
}

impl View {
    pub const ALL: [View; 3] = [View::Anchor, View::Positive, View::Negative];
}

/// Intermediate values of one forward pass needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub embedding: Vec<f64>,
    pub pooled: Vec<f64>,
    pub mask: DropoutMask,
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &RngStream) -> Tensor {
    let mut g = rng.generator();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = g.random_range(-bound..=bound);
    }
    t
}

/// Uniform Glorot initialization with zero bias, deterministic in `rng`.
pub fn init_params(config: EncoderConfig, rng: &RngStream) -> Result<EncoderParams> {
    config.validate()?;
    let EncoderConfig {
        vocab_size,
        embed_dim,
        output_dim,
    } = config;
    let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
    Ok(EncoderParams {
        config,
        token_embeddings: uniform_tensor(
            &[vocab_size, embed_dim],
            glorot(vocab_size, embed_dim),
            &rng.derive_label("token_embeddings"),
        ),
        projection_weight: uniform_tensor(
            &[embed_dim, output_dim],
            glorot(embed_dim, output_dim),
            &rng.derive_label("projection_weight"),
        ),
        projection_bias: Tensor::zeros(&[output_dim]),
    })
}

impl EncoderParams {
    pub fn from_tensors(
        config: EncoderConfig,
        token_embeddings: Tensor,
        projection_weight: Tensor,
        projection_bias: Tensor,
    ) -> Result<Self> {
        config.validate()?;
        let expect = |t: &Tensor, shape: &[usize], name: &str| {
            if t.shape() == shape {
                Ok(())
            } else {
                Err(EsclError::Dimension(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )))
            }
        };
        expect(
            &token_embeddings,
            &[config.vocab_size, config.embed_dim],
            "token_embeddings",
        )?;
        expect(
            &projection_weight,
            &[config.embed_dim, config.output_dim],
            "projection_weight",
        )?;
        expect(&projection_bias, &[config.output_dim], "projection_bias")?;
        for (t, name) in [
            (&token_embeddings, "token_embeddings"),
            (&projection_weight, "projection_weight"),
            (&projection_bias, "projection_bias"),
        ] {
            t.check_finite(name)?;
        }
        Ok(EncoderParams {
            config,
            token_embeddings,
            projection_weight,
            projection_bias,
        })
    }

    /// All-zero tensors with this encoder's shapes, used to accumulate gradients.
    pub fn zeros_like(config: EncoderConfig) -> Self {
        EncoderParams {
            config,
            token_embeddings: Tensor::zeros(&[config.vocab_size, config.embed_dim]),
            projection_weight: Tensor::zeros(&[config.embed_dim, config.output_dim]),
            projection_bias: Tensor::zeros(&[config.output_dim]),
        }
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    /// Parameters concatenated as embeddings, weight, bias.
    pub fn flatten(&self) -> Vec<f64> {
        [
            self.token_embeddings.data(),
            self.projection_weight.data(),
            self.projection_bias.data(),
        ]
        .concat()
    }

    /// Inverse of [`EncoderParams::flatten`].
    pub fn from_flat(config: EncoderConfig, flat: &[f64]) -> Result<Self> {
        if flat.len() != config.num_params() {
            return Err(EsclError::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                config.num_params()
            )));
        }
        let e = config.vocab_size * config.embed_dim;
        let w = config.embed_dim * config.output_dim;
        EncoderParams::from_tensors(
            config,
            Tensor::from_vec(&[config.vocab_size, config.embed_dim], flat[..e].to_vec())?,
            Tensor::from_vec(
                &[config.embed_dim, config.output_dim],
                flat[e..e + w].to_vec(),
            )?,
            Tensor::from_vec(&[config.output_dim], flat[e + w..].to_vec())?,
        )
    }

    /// Mutable views of the three parameter blocks, in flatten order.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.token_embeddings.data_mut(),
            self.projection_weight.data_mut(),
            self.projection_bias.data_mut(),
        ]
    }

    pub fn blocks(&self) -> [&[f64]; 3] {
        [
            self.token_embeddings.data(),
            self.projection_weight.data(),
            self.projection_bias.data(),
        ]
    }

    pub fn check_finite(&self) -> Result<()> {
        self.token_embeddings.check_finite("token_embeddings")?;
        self.projection_weight.check_finite("projection_weight")?;
        self.projection_bias.check_finite("projection_bias")
    }

    fn check_tokens(&self, x: &TokenSequence) -> Result<()> {
        match x.ids().iter().find(|&&id| id >= self.config.vocab_size) {
            Some(id) => Err(EsclError::Dimension(format!(
                "token id {id} outside vocabulary of size {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }
}

/// Forward pass keeping the pooled activation for backpropagation.
pub fn encode_cached(
    params: &EncoderParams,
    x: &TokenSequence,
    spec: DropoutSpec,
    mask: &DropoutMask,
) -> Result<Encoded> {
    let EncoderConfig {
        embed_dim,
        output_dim,
        ..
    } = params.config;
    if x.is_empty() {
        return Err(EsclError::Input("empty token sequence".into()));
    }
    params.check_tokens(x)?;
    if mask.shape() != [x.len(), embed_dim] {
        return Err(EsclError::Dimension(format!(
            "mask shape {:?} for a sequence of {} tokens and embed_dim {embed_dim}",
            mask.shape(),
            x.len()
        )));
    }
    if mask.spec() != spec {
        return Err(EsclError::Config(format!(
            "mask drawn at rate {} used with rate {}",
            mask.spec().rate(),
            spec.rate()
        )));
    }

    let inv_len = 1.0 / x.len() as f64;
    let mut pooled = vec![0.0; embed_dim];
    for (pos, &tok) in x.ids().iter().enumerate() {
        let emb = params.token_embeddings.row(tok);
        for ((p, e), m) in pooled.iter_mut().zip(emb).zip(mask.row(pos)) {
            *p += e * m;
        }
    }
    pooled.iter_mut().for_each(|p| *p *= inv_len);

    let mut embedding = params.projection_bias.data().to_vec();
    for (k, &p) in pooled.iter().enumerate() {
        let w = params.projection_weight.row(k);
        for (z, wk) in embedding.iter_mut().zip(w) {
            *z += p * wk;
        }
    }
    embedding.iter_mut().for_each(|z| *z = z.tanh());
    debug_assert_eq!(embedding.len(), output_dim);

    Ok(Encoded {
        embedding,
        pooled,
        mask: mask.clone(),
    })
}

/// `f(x, r, m)`: one embedding of `x` under the given mask.
pub fn encode(
    params: &EncoderParams,
    x: &TokenSequence,
    spec: DropoutSpec,
    mask: &DropoutMask,
) -> Result<Vec<f64>> {
    encode_cached(params, x, spec, mask).map(|e| e.embedding)
}

/// Inference embedding: dropout disabled.
pub fn embed(params: &EncoderParams, x: &TokenSequence) -> Result<Vec<f64>> {
    let mask = DropoutMask::ones(&[x.len(), params.config.embed_dim]);
    encode(params, x, DropoutSpec::NONE, &mask)
}

/// Sparse gradient contribution of one encoded sentence.
struct SentenceGrad {
    tokens: Vec<(usize, Vec<f64>)>,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

fn sentence_backward(
    params: &EncoderParams,
    x: &TokenSequence,
    enc: &Encoded,
    grad_out: &[f64],
) -> SentenceGrad {
    let EncoderConfig {
        embed_dim,
        output_dim,
        ..
    } = params.config;
    // through tanh
    let dz: Vec<f64> = grad_out
        .iter()
        .zip(&enc.embedding)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    let mut weight = vec![0.0; embed_dim * output_dim];
    let mut dpooled = vec![0.0; embed_dim];
    for k in 0..embed_dim {
        let w = params.projection_weight.row(k);
        let row = &mut weight[k * output_dim..(k + 1) * output_dim];
        for ((gw, d), wk) in row.iter_mut().zip(&dz).zip(w) {
            *gw = enc.pooled[k] * d;
            dpooled[k] += wk * d;
        }
    }
    let inv_len = 1.0 / x.len() as f64;
    let tokens = x
        .ids()
        .iter()
        .enumerate()
        .map(|(pos, &tok)| {
            let g = dpooled
                .iter()
                .zip(enc.mask.row(pos))
                .map(|(d, m)| d * m * inv_len)
                .collect();
            (tok, g)
        })
        .collect();
    SentenceGrad {
        tokens,
        weight,
        bias: dz,
    }
}

fn accumulate(grads: &mut EncoderParams, sg: &SentenceGrad) {
    for (tok, g) in &sg.tokens {
        for (acc, v) in grads.token_embeddings.row_mut(*tok).iter_mut().zip(g) {
            *acc += v;
        }
    }
    for (acc, v) in grads
        .projection_weight
        .data_mut()
        .iter_mut()
        .zip(&sg.weight)
    {
        *acc += v;
    }
    for (acc, v) in grads.projection_bias.data_mut().iter_mut().zip(&sg.bias) {
        *acc += v;
    }
}

/// Gradient of `grad_out · f(x, r, m)` with respect to every parameter.
pub fn encode_backward(
    params: &EncoderParams,
    x: &TokenSequence,
    enc: &Encoded,
    grad_out: &[f64],
) -> EncoderParams {
    let mut grads = EncoderParams::zeros_like(params.config);
    accumulate(&mut grads, &sentence_backward(params, x, enc, grad_out));
    grads
}

/// Cached forward state of a batch under all three views.
#[derive(Debug, Clone)]
pub struct ViewsCache {
    /// `encoded[i][v]` for sentence `i` and view `v`.
    encoded: Vec<[Encoded; 3]>,
}

fn mask_stream(rng: &RngStream, key: u64, view: View) -> RngStream {
    rng.derive(key).derive(view as u64)
}

/// Three-view forward pass with caller-chosen mask-stream keys.
///
/// Sentence `i` draws its masks from streams keyed by `(keys[i], view)`, so a
/// sentence's views depend on its key and not on its position in the batch.
pub fn forward_views(
    params: &EncoderParams,
    batch: &[(u64, &TokenSequence)],
    r_low: DropoutSpec,
    r_high: DropoutSpec,
    rng: &RngStream,
) -> Result<(BatchViews, ViewsCache)> {
    if batch.is_empty() {
        return Err(EsclError::Input("empty batch".into()));
    }
    if r_low.rate() > r_high.rate() || (r_low.rate() == r_high.rate() && r_low.rate() != 0.0) {
        return Err(EsclError::Config(format!(
            "low dropout rate {} must be below high rate {}",
            r_low.rate(),
            r_high.rate()
        )));
    }
    let embed_dim = params.config.embed_dim;
    let encoded = parallel::map(batch, |&(key, x)| -> Result<[Encoded; 3]> {
        let shape = [x.len(), embed_dim];
        let run = |view: View, spec: DropoutSpec| {
            let mask = sample_dropout_mask(&shape, spec, &mask_stream(rng, key, view));
            encode_cached(params, x, spec, &mask)
        };
        Ok([
            run(View::Anchor, r_low)?,
            run(View::Positive, r_low)?,
            run(View::Negative, r_high)?,
        ])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = batch.len();
    let out = params.config.output_dim;
    let mut views = [
        Tensor::zeros(&[n, out]),
        Tensor::zeros(&[n, out]),
        Tensor::zeros(&[n, out]),
    ];
    for (i, per_view) in encoded.iter().enumerate() {
        for (v, enc) in per_view.iter().enumerate() {
            if l2_norm(&enc.embedding) == 0.0 {
                return Err(EsclError::Degenerate(format!(
                    "sentence {i} encoded to the zero vector in view {v}"
                )));
            }
            views[v].row_mut(i).copy_from_slice(&enc.embedding);
        }
    }
    let [a, p, ng] = views;
    Ok((BatchViews::new(a, p, ng)?, ViewsCache { encoded }))
}

/// Embeds every sentence under two low-rate views and one high-rate view.
///
/// Mask streams are keyed by batch position; see [`forward_views`] for
/// position-independent keys.
pub fn embed_batch_views(
    params: &EncoderParams,
    batch: &[TokenSequence],
    r_low: DropoutSpec,
    r_high: DropoutSpec,
    rng: &RngStream,
) -> Result<BatchViews> {
    let keyed: Vec<(u64, &TokenSequence)> = batch
        .iter()
        .enumerate()
        .map(|(i, x)| (i as u64, x))
        .collect();
    forward_views(params, &keyed, r_low, r_high, rng).map(|(v, _)| v)
}

/// Backpropagates row gradients of the three view matrices to the parameters.
pub fn backward_views(
    params: &EncoderParams,
    batch: &[(u64, &TokenSequence)],
    cache: &ViewsCache,
    grads: &BatchViews,
) -> Result<EncoderParams> {
    if cache.encoded.len() != batch.len() || grads.batch_size() != batch.len() {
        return Err(EsclError::Dimension(format!(
            "backward over {} sentences with {} cached and {} gradient rows",
            batch.len(),
            cache.encoded.len(),
            grads.batch_size()
        )));
    }
    let grad_views = [&grads.anchor, &grads.positive, &grads.negative];
    let contributions = parallel::map_range(batch.len(), |i| {
        let x = batch[i].1;
        let enc = &cache.encoded[i];
        View::ALL
            .map(|v| sentence_backward(params, x, &enc[v as usize], grad_views[v as usize].row(i)))
    });
    // fixed reduction order keeps the sum independent of scheduling
    let mut total = EncoderParams::zeros_like(params.config);
    for per_view in &contributions {
        for sg in per_view {
            accumulate(&mut total, sg);
        }
    }
    Ok(total)
}
