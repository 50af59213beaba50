use serde::{Deserialize, Serialize};

use crate::encoder::{embed, encode, EncoderParams, TokenSequence};
use crate::error::{EsclError, Result};
use crate::numerics::{cosine_similarity, sample_dropout_mask, DropoutSpec, RngStream};
use crate::parallel;

/// Mean cosine drift at one dropout rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub rate: f64,
    /// Mean over sentences and trials of `1 - sim(f(x, 0), f(x, r, m))`.
    pub mean_drift: f64,
    /// Standard error of the mean, from the spread of per-trial means.
    pub std_error: f64,
    pub trials: usize,
}

/// How far dropout at each rate moves embeddings away from the clean ones.
///
/// Trial `t` of sentence `i` at rate `r` draws its mask from the stream keyed
/// by `(r, i, t)`, so runs with more trials extend runs with fewer.
pub fn sensitivity_probe(
    params: &EncoderParams,
    sample: &[TokenSequence],
    rates: &[DropoutSpec],
    trials: usize,
    rng: &RngStream,
) -> Result<Vec<DriftPoint>> {
    if trials < 10 {
        return Err(EsclError::Config(format!(
            "need at least 10 trials, got {trials}"
        )));
    }
    if sample.is_empty() {
        return Err(EsclError::Input("empty probe sample".into()));
    }
    if rates.windows(2).any(|w| w[0].rate() > w[1].rate()) {
        return Err(EsclError::Config(
            "probe rates must be sorted ascending".into(),
        ));
    }
    let clean = sample
        .iter()
        .map(|x| embed(params, x))
        .collect::<Result<Vec<_>>>()?;
    let embed_dim = params.config().embed_dim;

    rates
        .iter()
        .map(|&spec| {
            let stream = rng.derive(spec.rate().to_bits());
            let per_trial = parallel::map_range(trials, |t| -> Result<f64> {
                let mut total = 0.0;
                for (i, (x, h)) in sample.iter().zip(&clean).enumerate() {
                    let mask = sample_dropout_mask(
                        &[x.len(), embed_dim],
                        spec,
                        &stream.derive_path(&[i as u64, t as u64]),
                    );
                    let noisy = encode(params, x, spec, &mask)?;
                    total += 1.0 - cosine_similarity(h, &noisy)?;
                }
                Ok(total / sample.len() as f64)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            let n = per_trial.len() as f64;
            let mean = per_trial.iter().sum::<f64>() / n;
            let var = per_trial.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(DriftPoint {
                rate: spec.rate(),
                mean_drift: mean,
                std_error: (var / n).sqrt(),
                trials,
            })
        })
        .collect()
}
