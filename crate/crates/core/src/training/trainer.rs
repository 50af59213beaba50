use std::time::Instant;

use log::{debug, info};

use super::{epoch_batches, EvalRecord, MetricTrace, OptimizerState, StepRecord, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::encoder::{
    backward_views, forward_views, init_params, EncoderConfig, EncoderParams, TokenSequence,
};
use crate::error::{EsclError, Result};
use crate::evaluation::{evaluate_sts, StsPair, Vocabulary};
use crate::losses::{escl_loss_grad, LossBreakdown};
use crate::numerics::RngStream;

/// Result of one optimization step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub params: EncoderParams,
    pub optimizer: OptimizerState,
    pub breakdown: LossBreakdown,
}

fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(EsclError::Numeric(format!("{name} is {v}")))
    }
}

/// One update: three-view forward pass, combined loss, backpropagation to
/// the encoder and one optimizer step. Inputs are left untouched.
pub fn train_step(
    params: &EncoderParams,
    batch: &[(u64, &TokenSequence)],
    cfg: &TrainConfig,
    rng: &RngStream,
    optimizer: &OptimizerState,
) -> Result<StepOutcome> {
    let (views, cache) = forward_views(params, batch, cfg.r_low, cfg.r_high, rng)?;
    let (breakdown, view_grads) = escl_loss_grad(&views, &cfg.loss)?;
    ensure_finite("info_nce loss", breakdown.info_nce)?;
    ensure_finite("equivariant loss", breakdown.equivariant)?;
    ensure_finite("total loss", breakdown.total)?;

    let grads = backward_views(params, batch, &cache, &view_grads)?;
    grads
        .check_finite()
        .map_err(|e| EsclError::Numeric(format!("gradient: {e}")))?;

    let mut params = params.clone();
    let mut optimizer = optimizer.clone();
    optimizer.apply(cfg.optimizer, cfg.learning_rate, &mut params, &grads)?;
    params
        .check_finite()
        .map_err(|e| EsclError::Numeric(format!("updated parameters: {e}")))?;
    Ok(StepOutcome {
        params,
        optimizer,
        breakdown,
    })
}

/// Resumable training state.
///
/// Batch order and dropout masks are functions of `(seed, step)` alone, so a
/// run restored from a checkpoint continues exactly as an uninterrupted one.
pub struct Trainer<'a> {
    config: TrainConfig,
    corpus: &'a [TokenSequence],
    params: EncoderParams,
    optimizer: OptimizerState,
    step: u64,
    trace: MetricTrace,
    epoch_cache: Option<(u64, Vec<Vec<usize>>)>,
}

impl<'a> Trainer<'a> {
    /// Fresh parameters for a vocabulary of `vocab_size` ids.
    pub fn new(
        config: TrainConfig,
        vocab_size: usize,
        corpus: &'a [TokenSequence],
    ) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderConfig {
            vocab_size,
            embed_dim: config.embed_dim,
            output_dim: config.output_dim,
        };
        let params = init_params(encoder, &RngStream::new(config.seed).derive_label("init"))?;
        let optimizer = OptimizerState::new(config.optimizer, encoder.num_params());
        Trainer::with_state(config, corpus, params, optimizer, 0)
    }

    pub fn from_checkpoint(
        config: TrainConfig,
        corpus: &'a [TokenSequence],
        ckpt: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        let c = ckpt.params.config();
        if c.embed_dim != config.embed_dim || c.output_dim != config.output_dim {
            return Err(EsclError::Checkpoint(format!(
                "checkpoint dims ({}, {}) differ from config ({}, {})",
                c.embed_dim, c.output_dim, config.embed_dim, config.output_dim
            )));
        }
        Trainer::with_state(config, corpus, ckpt.params, ckpt.optimizer, ckpt.step)
    }

    fn with_state(
        config: TrainConfig,
        corpus: &'a [TokenSequence],
        params: EncoderParams,
        optimizer: OptimizerState,
        step: u64,
    ) -> Result<Self> {
        if corpus.len() < config.batch_size {
            return Err(EsclError::Config(format!(
                "corpus of {} sentences is smaller than the batch size {}",
                corpus.len(),
                config.batch_size
            )));
        }
        let vocab_size = params.config().vocab_size;
        if let Some(id) = corpus
            .iter()
            .flat_map(|s| s.ids())
            .find(|&&id| id >= vocab_size)
        {
            return Err(EsclError::Dimension(format!(
                "corpus token id {id} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Trainer {
            config,
            corpus,
            params,
            optimizer,
            step,
            trace: MetricTrace::default(),
            epoch_cache: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// Updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn trace(&self) -> &MetricTrace {
        &self.trace
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.config.seed)
    }

    /// Mask stream for global step `step`.
    pub fn mask_stream(&self, step: u64) -> RngStream {
        self.root().derive_label("masks").derive(step)
    }

    /// Corpus indices of the batch used at global step `step`.
    pub fn batch_indices(&mut self, step: u64) -> Result<Vec<usize>> {
        let per_epoch = (self.corpus.len() / self.config.batch_size) as u64;
        let epoch = step / per_epoch;
        if self.epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let rng = self.root().derive_label("batches").derive(epoch);
            self.epoch_cache = Some((
                epoch,
                epoch_batches(self.corpus.len(), self.config.batch_size, &rng)?,
            ));
        }
        let (_, batches) = self.epoch_cache.as_ref().expect("filled above");
        Ok(batches[(step % per_epoch) as usize].clone())
    }

    /// Runs one step and records it.
    pub fn step_once(&mut self) -> Result<StepRecord> {
        let step = self.step;
        let indices = self.batch_indices(step)?;
        let batch: Vec<(u64, &TokenSequence)> = indices
            .iter()
            .map(|&i| (i as u64, &self.corpus[i]))
            .collect();
        let out = train_step(
            &self.params,
            &batch,
            &self.config,
            &self.mask_stream(step),
            &self.optimizer,
        )
        .map_err(|e| match e {
            EsclError::Numeric(m) => EsclError::Numeric(format!("step {step}: {m}")),
            other => other,
        })?;
        self.params = out.params;
        self.optimizer = out.optimizer;
        self.step += 1;
        let record = StepRecord::new(step, &out.breakdown);
        self.trace.push_step(record);
        Ok(record)
    }

    pub fn checkpoint(&self, vocab: &Vocabulary) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            vocab: vocab.clone(),
            optimizer: self.optimizer.clone(),
            step: self.step,
        }
    }

    fn record_eval(&mut self, pairs: &[StsPair]) -> Result<f64> {
        let rho = evaluate_sts(&self.params, pairs, "eval")?.rho;
        self.trace.push_eval(EvalRecord {
            step: self.step,
            rho,
        });
        Ok(rho)
    }

    /// Trains until `config.steps` updates have been applied, evaluating
    /// every `eval_every` updates and after the last one. With a checkpoint
    /// path, a checkpoint is written at every evaluation point, so an abort
    /// leaves the last good one in place.
    pub fn run(
        &mut self,
        vocab: &Vocabulary,
        eval_pairs: Option<&[StsPair]>,
    ) -> Result<TrainOutcome> {
        if vocab.len() != self.params.config().vocab_size {
            return Err(EsclError::Dimension(format!(
                "vocabulary of {} ids for an embedding table of {} rows",
                vocab.len(),
                self.params.config().vocab_size
            )));
        }
        let started = Instant::now();
        let mut best: Option<(f64, u64, EncoderParams)> = None;
        let every = self.config.eval_every;
        let mut snapshot = |t: &mut Self| -> Result<()> {
            if let Some(pairs) = eval_pairs {
                let rho = t.record_eval(pairs)?;
                info!("step {}: rho {rho:.4}", t.step);
                if best.as_ref().is_none_or(|(b, _, _)| rho > *b) {
                    best = Some((rho, t.step, t.params.clone()));
                }
            }
            if let Some(path) = &t.config.checkpoint_path {
                t.checkpoint(vocab).save(path)?;
            }
            Ok(())
        };

        if every > 0 && self.step == 0 {
            snapshot(self)?;
        }
        while self.step < self.config.steps {
            let r = self.step_once()?;
            debug!(
                "step {} total {:.5} info_nce {:.5} eq {:.5} gap {:.5} ({:?} elapsed)",
                r.step,
                r.total,
                r.info_nce,
                r.equivariant,
                r.gap(),
                started.elapsed()
            );
            if (every > 0 && self.step.is_multiple_of(every)) || self.step == self.config.steps {
                snapshot(self)?;
            }
        }
        info!("trained {} steps in {:?}", self.step, started.elapsed());

        let final_rho = self.trace.evals.last().map(|e| e.rho);
        let (params, selected_step) = match (&best, self.config.select_best) {
            (Some((_, step, p)), true) => (p.clone(), *step),
            _ => (self.params.clone(), self.step),
        };
        let selected_rho = if self.config.select_best {
            best.as_ref().map(|(r, _, _)| *r)
        } else {
            final_rho
        };
        let mut checkpoint = self.checkpoint(vocab);
        checkpoint.params = params;
        if let (true, Some(path)) = (self.config.select_best, &self.config.checkpoint_path) {
            checkpoint.save(path)?;
        }
        Ok(TrainOutcome {
            checkpoint,
            trace: self.trace.clone(),
            rho: selected_rho,
            selected_step,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final parameters, or the best snapshot's with `select_best`.
    pub checkpoint: Checkpoint,
    pub trace: MetricTrace,
    /// Rho of the returned parameters, when evaluation pairs were given.
    pub rho: Option<f64>,
    pub selected_step: u64,
}

/// Trains a fresh encoder on `corpus` (tokenized with `vocab`).
pub fn train(
    config: &TrainConfig,
    vocab: &Vocabulary,
    corpus: &[TokenSequence],
    eval_pairs: Option<&[StsPair]>,
) -> Result<TrainOutcome> {
    Trainer::new(config.clone(), vocab.len(), corpus)?.run(vocab, eval_pairs)
}
