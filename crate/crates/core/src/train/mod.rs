//! Teacher-forced training, greedy decoding and checkpoints.

mod checkpoint;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{DataError, EncodedSample, Vocabularies, EOS};
use crate::lang::{RelationalTuple, PAD};
use crate::model::{build_model, ModelError, StepOutput, Tpn2fModel};
use crate::parallel::{self, Parallelism, REDUCTION_CHUNKS};
use crate::tensor::{adam_step, AdamState, ParamId, Tape, Tensor, TensorError, Var};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{outputs} decoder steps but {targets} gold tuples")]
    LengthMismatch { outputs: usize, targets: usize },
    #[error("vocabulary does not match the model: {0}")]
    VocabMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("training set is empty")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// `Σₜ CE(relᵗ) + Σₜ Σᵢ CE(argᵢᵗ)` over the steps of one sequence.
pub fn sequence_loss(tape: &mut Tape<'_>, outputs: &[StepOutput], gold: &[Vec<usize>]) -> Result<Var> {
    if outputs.len() != gold.len() || outputs.is_empty() {
        return Err(TrainError::LengthMismatch {
            outputs: outputs.len(),
            targets: gold.len(),
        });
    }
    let mut terms = Vec::with_capacity(gold.len() * 3);
    for (o, t) in outputs.iter().zip(gold) {
        if t.len() != o.argument_logits.len() + 1 {
            return Err(TrainError::LengthMismatch {
                outputs: o.argument_logits.len() + 1,
                targets: t.len(),
            });
        }
        terms.push(tape.cross_entropy(o.relation_logits, t[0])?);
        for (&l, &a) in o.argument_logits.iter().zip(&t[1..]) {
            terms.push(tape.cross_entropy(l, a)?);
        }
    }
    Ok(tape.add_n(&terms)?)
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn predicted_tuple(tape: &Tape<'_>, out: &StepOutput) -> Vec<usize> {
    let mut t = Vec::with_capacity(out.argument_logits.len() + 1);
    t.push(argmax(tape.value(out.relation_logits).data()));
    t.extend(out.argument_logits.iter().map(|&l| argmax(tape.value(l).data())));
    t
}

/// Summed gradients and statistics over a group of samples.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub loss_sum: f64,
    /// Samples whose every teacher-forced argmax equals the gold tuple.
    pub exact: usize,
    /// One entry per parameter in store order.
    pub grads: Vec<Option<Tensor>>,
}

impl BatchGradients {
    fn empty(n: usize) -> Self {
        Self {
            loss_sum: 0.0,
            exact: 0,
            grads: vec![None; n],
        }
    }

    fn absorb(&mut self, other: BatchGradients) -> Result<()> {
        self.loss_sum += other.loss_sum;
        self.exact += other.exact;
        for (acc, g) in self.grads.iter_mut().zip(other.grads) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g)?,
                (None, Some(g)) => *acc = Some(g),
                (_, None) => {}
            }
        }
        Ok(())
    }
}

fn sample_gradients(model: &Tpn2fModel, sample: &EncodedSample) -> Result<BatchGradients> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let start = Vocabularies::go_tuple(model.dims.positions);
    let outs = model.teacher_forced(&mut tape, &p, &sample.tokens, &start, &sample.targets)?;
    // With every step right under teacher forcing, greedy decoding
    // reproduces the gold sequence, so this is operation accuracy.
    let exact = outs
        .iter()
        .zip(&sample.targets)
        .all(|(o, t)| predicted_tuple(&tape, o) == *t);
    let loss = sequence_loss(&mut tape, &outs, &sample.targets)?;
    let loss_sum = tape.value(loss).item();
    let mut g = tape.backward(loss)?;
    Ok(BatchGradients {
        loss_sum,
        exact: usize::from(exact),
        grads: p.iter().map(|(_, v)| g.take(v)).collect(),
    })
}

/// Per-sample gradients summed over `batch`. Samples are split into
/// [`REDUCTION_CHUNKS`] fixed chunks that are summed in order, so the result
/// does not depend on `mode`.
pub fn batch_gradients(model: &Tpn2fModel, batch: &[&EncodedSample], mode: Parallelism) -> Result<BatchGradients> {
    let n = model.params.len();
    let chunks = parallel::map_chunks(batch.len(), REDUCTION_CHUNKS, mode, |range| {
        let mut acc = BatchGradients::empty(n);
        for s in &batch[range] {
            acc.absorb(sample_gradients(model, s)?)?;
        }
        Ok::<_, TrainError>(acc)
    });
    let mut total = BatchGradients::empty(n);
    for c in chunks {
        total.absorb(c?)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub op_acc: f64,
    /// Seconds.
    pub wallclock: f64,
}

/// Checks that every id in `data` fits the model's vocabularies.
pub fn check_vocabulary(model: &Tpn2fModel, data: &[EncodedSample]) -> Result<()> {
    let d = &model.dims;
    for (i, s) in data.iter().enumerate() {
        let bad_token = s.tokens.iter().any(|&t| t >= d.n_tokens);
        let bad_tuple = s.targets.iter().any(|t| {
            t.len() != d.positions + 1 || t[0] >= d.n_relations || t[1..].iter().any(|&a| a >= d.n_args)
        });
        if bad_token || bad_tuple {
            return Err(TrainError::VocabMismatch(format!("sample {i} has ids outside the model")));
        }
    }
    Ok(())
}

/// One shuffled pass over `data`. Each batch's summed gradient is divided by
/// the batch size, optionally clipped, and applied with Adam. Loss and
/// accuracy are measured on the parameters each batch was trained from.
pub fn train_epoch(
    model: &mut Tpn2fModel,
    data: &[EncodedSample],
    optimizer: &mut AdamState,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mode: Parallelism,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    check_vocabulary(model, data)?;
    let started = Instant::now();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (mut loss, mut exact) = (0.0, 0);
    for idx in order.chunks(config.batch_size.max(1)) {
        let batch: Vec<&EncodedSample> = idx.iter().map(|&i| &data[i]).collect();
        let g = batch_gradients(model, &batch, mode)?;
        loss += g.loss_sum;
        exact += g.exact;
        let scale = 1.0 / batch.len() as f64;
        model.params.zero_grad();
        for (i, grad) in g.grads.into_iter().enumerate() {
            if let Some(grad) = grad {
                model.params.accumulate(ParamId(i), &grad.scale(scale))?;
            }
        }
        if let Some(max) = config.grad_clip {
            model.params.clip_grad_norm(max);
        }
        adam_step(&mut model.params, optimizer)?;
    }
    Ok(EpochStats {
        epoch: 0,
        mean_loss: loss / data.len() as f64,
        op_acc: exact as f64 / data.len() as f64,
        wallclock: started.elapsed().as_secs_f64(),
    })
}

/// One greedily decoded tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeStep {
    pub tuple: Vec<usize>,
    /// `r′_rel` at this step (TPR decoder only).
    pub relation_vector: Option<Tensor>,
}

/// Greedy decoding from the GO tuple: argmax on every head, the predicted
/// tuple is fed back, and decoding stops at EOS (not returned) or after
/// `max_len` tuples.
pub fn greedy_decode_steps(model: &Tpn2fModel, tokens: &[usize], max_len: usize) -> Result<Vec<DecodeStep>> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let encoded = model.encode_sequence(&mut tape, &p, tokens)?;
    let ctx = model.prepare_attention(&mut tape, &p, &encoded.context)?;
    let mut state = model.initial_decoder_state(&mut tape, &p, &encoded)?;
    let mut prev = Vocabularies::go_tuple(model.dims.positions);
    let mut steps = Vec::new();
    for _ in 0..max_len {
        let (next, _) = model.decoder_step(&mut tape, &p, &prev, state, &ctx)?;
        state = next;
        let out = model.unbinding_module(&mut tape, &p, state.h)?;
        let tuple = predicted_tuple(&tape, &out);
        if tuple[0] == EOS {
            break;
        }
        steps.push(DecodeStep {
            tuple: tuple.clone(),
            relation_vector: out.relation_unbinding.map(|v| tape.value(v).clone()),
        });
        prev = tuple;
    }
    Ok(steps)
}

pub fn greedy_decode(model: &Tpn2fModel, tokens: &[usize], max_len: usize) -> Result<Vec<Vec<usize>>> {
    Ok(greedy_decode_steps(model, tokens, max_len)?.into_iter().map(|s| s.tuple).collect())
}

/// Decodes to symbols, dropping `PAD` arguments.
pub fn decode_program(
    model: &Tpn2fModel,
    vocab: &Vocabularies,
    text: &[String],
    max_len: usize,
) -> Result<Vec<RelationalTuple>> {
    let ids = greedy_decode(model, &vocab.encode_tokens(text), max_len)?;
    Ok(ids
        .iter()
        .map(|t| {
            let mut tuple = vocab.decode_tuple(t);
            tuple.args.retain(|a| a != PAD);
            tuple
        })
        .collect())
}

/// Model, optimizer and shuffling state for one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub vocab: Vocabularies,
    pub model: Tpn2fModel,
    pub optimizer: AdamState,
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    pub parallelism: Parallelism,
}

impl Trainer {
    /// Fresh model seeded from `config.seed`; shuffling uses a separate
    /// stream of the same seed.
    pub fn new(config: TrainConfig, vocab: Vocabularies) -> Result<Self> {
        let model = build_model(config.variant(), config.model_dims(&vocab), config.seed)?;
        let optimizer = AdamState::new(&model.params, config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            vocab,
            model,
            optimizer,
            rng,
            epoch: 0,
            parallelism: Parallelism::default(),
        })
    }

    pub fn encode(&self, samples: &[crate::data::Sample]) -> Result<Vec<EncodedSample>> {
        samples
            .iter()
            .map(|s| self.vocab.encode_sample(s, self.config.positions).map_err(TrainError::from))
            .collect()
    }

    pub fn train_epoch(&mut self, data: &[EncodedSample]) -> Result<EpochStats> {
        let mut stats = train_epoch(
            &mut self.model,
            data,
            &mut self.optimizer,
            &self.config,
            &mut self.rng,
            self.parallelism,
        )?;
        self.epoch += 1;
        stats.epoch = self.epoch;
        Ok(stats)
    }

    /// Trains up to `config.epochs` total epochs, stopping early when
    /// `config.patience` epochs pass without a lower mean loss. `after_epoch`
    /// sees each epoch's stats and may stop the run by returning `false`.
    pub fn fit(
        &mut self,
        data: &[EncodedSample],
        mut after_epoch: impl FnMut(&Self, &EpochStats) -> Result<bool>,
    ) -> Result<Vec<EpochStats>> {
        let mut history = Vec::new();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        while self.epoch < self.config.epochs {
            let stats = self.train_epoch(data)?;
            log::info!(
                "epoch {} loss {:.6} op_acc {:.4} ({:.2}s)",
                stats.epoch,
                stats.mean_loss,
                stats.op_acc,
                stats.wallclock
            );
            let keep_going = after_epoch(self, &stats)?;
            if stats.mean_loss < best {
                best = stats.mean_loss;
                stale = 0;
            } else {
                stale += 1;
            }
            history.push(stats);
            if !keep_going || self.config.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
        Ok(history)
    }

    pub fn decode(&self, text: &[String]) -> Result<Vec<RelationalTuple>> {
        decode_program(&self.model, &self.vocab, text, self.config.max_decode_len)
    }
}
