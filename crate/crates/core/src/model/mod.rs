//! The TP-N2F network and its ablation variants.
//!
//! * Encoder: a Filler-LSTM and a Role-LSTM read each token together with the
//!   flattened binding `T^{t−1}` of the previous token. Their hidden states
//!   select (temperature-0.1 softmax) a filler and a role from learned
//!   dictionaries, and `T^t = f^t ⊗ r^t`.
//! * Reasoning MLP: affine + tanh layers from the pooled encoding to the
//!   decoder's initial state.
//! * Decoder: a Tuple-LSTM with dot-product attention over the encoder
//!   bindings. Its state `H^t` is reshaped to `d_Arg × d_Rel × d_Pos` and
//!   unbound: `Bᵢ = H·p′ᵢ`, `r′ = W_dual·♭(ΣBᵢ)`, `aᵢ = Bᵢ·r′`.
//!
//! Swapping either side for a plain LSTM gives the TP2LSTM, LSTM2TP and
//! LSTM2LSTM baselines.

mod decoder;
mod encoder;

pub use decoder::{AttentionContext, DecoderState, StepOutput};
pub use encoder::{EncoderOutput, EncoderState, EncoderStepOutput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// Temperature of the filler and role selection softmax.
pub const SELECTION_TEMPERATURE: f64 = 0.1;

/// Half-width of the uniform weight initialisation.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("inconsistent dimensions: {0}")]
    Dims(String),
    #[error("{kind} id {id} outside vocabulary of size {size}")]
    Vocab {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("{0} is not available for this model variant")]
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Tpr,
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Tpr,
    Lstm,
}

/// How the encoder's per-token outputs become the reasoning MLP input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Sum of every token's binding.
    SumTprs,
    /// Binding of the final token only.
    LastState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub pooling: Pooling,
    pub reasoning_layers: usize,
}

impl ModelVariant {
    pub fn new(encoder: EncoderKind, decoder: DecoderKind) -> Self {
        Self {
            encoder,
            decoder,
            pooling: Pooling::SumTprs,
            reasoning_layers: 1,
        }
    }

    pub fn tp_n2f() -> Self {
        Self::new(EncoderKind::Tpr, DecoderKind::Tpr)
    }

    pub fn name(&self) -> &'static str {
        match (self.encoder, self.decoder) {
            (EncoderKind::Tpr, DecoderKind::Tpr) => "TP-N2F",
            (EncoderKind::Lstm, DecoderKind::Tpr) => "LSTM2TP",
            (EncoderKind::Tpr, DecoderKind::Lstm) => "TP2LSTM",
            (EncoderKind::Lstm, DecoderKind::Lstm) => "LSTM2LSTM",
        }
    }

    pub fn all() -> [Self; 4] {
        [
            Self::new(EncoderKind::Tpr, DecoderKind::Tpr),
            Self::new(EncoderKind::Lstm, DecoderKind::Tpr),
            Self::new(EncoderKind::Tpr, DecoderKind::Lstm),
            Self::new(EncoderKind::Lstm, DecoderKind::Lstm),
        ]
    }
}

/// Every size the network needs, including vocabulary sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_tokens: usize,
    pub n_relations: usize,
    pub n_args: usize,
    /// Word embedding size `d`.
    pub d_word: usize,
    pub n_fillers: usize,
    pub n_roles: usize,
    pub d_filler: usize,
    pub d_role: usize,
    pub d_rel: usize,
    pub d_arg: usize,
    pub d_pos: usize,
    /// Argument slots per tuple (2, or 3 for the padded Lisp setup).
    pub positions: usize,
    /// Hidden size of the LSTM baselines.
    pub lstm_hidden: usize,
    /// Extra linear map from `r′_rel` before the relation classifier.
    pub relation_linear: bool,
    /// Apply tanh after the attention combiner.
    pub attention_tanh: bool,
}

impl ModelDims {
    /// Published MathQA sizes: `n_F=150, n_R=50, d_F=30, d_R=20, d_Rel=20,
    /// d_Arg=10, d_Pos=5`.
    pub fn mathqa(n_tokens: usize, n_relations: usize, n_args: usize) -> Self {
        Self {
            n_tokens,
            n_relations,
            n_args,
            d_word: 100,
            n_fillers: 150,
            n_roles: 50,
            d_filler: 30,
            d_role: 20,
            d_rel: 20,
            d_arg: 10,
            d_pos: 5,
            positions: 2,
            lstm_hidden: 100,
            relation_linear: false,
            attention_tanh: true,
        }
    }

    /// Published AlgoLisp sizes: as MathQA but `d_R=30, d_Rel=30, d_Arg=20`.
    pub fn algolisp(n_tokens: usize, n_relations: usize, n_args: usize) -> Self {
        Self {
            d_role: 30,
            d_rel: 30,
            d_arg: 20,
            positions: 3,
            ..Self::mathqa(n_tokens, n_relations, n_args)
        }
    }

    pub fn d_tpr(&self) -> usize {
        self.d_filler * self.d_role
    }

    pub fn d_tuple(&self) -> usize {
        self.d_arg * self.d_rel * self.d_pos
    }

    pub fn d_decoder_input(&self) -> usize {
        self.d_rel + self.positions * self.d_arg
    }

    fn validate(&self) -> Result<()> {
        let named = [
            ("n_tokens", self.n_tokens),
            ("n_relations", self.n_relations),
            ("n_args", self.n_args),
            ("d_word", self.d_word),
            ("n_fillers", self.n_fillers),
            ("n_roles", self.n_roles),
            ("d_filler", self.d_filler),
            ("d_role", self.d_role),
            ("d_rel", self.d_rel),
            ("d_arg", self.d_arg),
            ("d_pos", self.d_pos),
            ("lstm_hidden", self.lstm_hidden),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(ModelError::Dims(format!("{name} must be positive")));
            }
        }
        if !(1..=self.d_pos).contains(&self.positions) {
            return Err(ModelError::Dims(format!(
                "positions = {} must lie in 1..=d_pos ({})",
                self.positions, self.d_pos
            )));
        }
        Ok(())
    }
}

/// Parameter handles of one LSTM, gates in the order forget, cell, input, output.
#[derive(Clone, Debug)]
pub(crate) struct LstmIds {
    pub u: [ParamId; 4],
    pub v: [ParamId; 4],
    pub b: [ParamId; 4],
}

#[derive(Clone, Debug)]
pub(crate) enum EncoderIds {
    Tpr {
        embed: ParamId,
        filler_lstm: LstmIds,
        role_lstm: LstmIds,
        filler_attn: ParamId,
        role_attn: ParamId,
        fillers: ParamId,
        roles: ParamId,
    },
    Lstm {
        embed: ParamId,
        lstm: LstmIds,
    },
}

#[derive(Clone, Debug)]
pub(crate) enum HeadIds {
    Tpr {
        pos_unbind: Vec<ParamId>,
        dual: ParamId,
        rel_out: Option<ParamId>,
        rel_classifier: ParamId,
        arg_classifier: ParamId,
    },
    Lstm {
        rel_classifier: ParamId,
        arg_classifiers: Vec<ParamId>,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderIds {
    pub rel_embed: ParamId,
    pub arg_embed: ParamId,
    pub lstm: LstmIds,
    pub ctx_proj: ParamId,
    pub combiner: ParamId,
    pub head: HeadIds,
}

/// All learned parameters plus the structure that ties them together.
#[derive(Clone, Debug)]
pub struct Tpn2fModel {
    pub variant: ModelVariant,
    pub dims: ModelDims,
    pub params: ParamStore,
    pub(crate) encoder: EncoderIds,
    pub(crate) reasoning: Vec<(ParamId, ParamId)>,
    pub(crate) decoder: DecoderIds,
}

/// A model's parameters recorded on a tape, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.vars.iter().enumerate().map(|(i, &v)| (ParamId(i), v))
    }
}

struct Init<'s> {
    store: &'s mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize]) -> ParamId {
        let t = Tensor::from_fn(shape, |_| self.rng.random_range(-INIT_RANGE..INIT_RANGE));
        self.store.add(name, t)
    }

    fn unit_gaussian(&mut self, name: String, n: usize) -> ParamId {
        let raw: Vec<f64> = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        self.store.add(name, Tensor::vector(raw.into_iter().map(|x| x / norm).collect()))
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> LstmIds {
        let gates = ["f", "g", "i", "o"];
        let u = gates.map(|g| self.uniform(format!("{prefix}.U_{g}"), &[hidden, input]));
        let v = gates.map(|g| self.uniform(format!("{prefix}.V_{g}"), &[hidden, hidden]));
        let b = gates.map(|g| self.uniform(format!("{prefix}.b_{g}"), &[hidden]));
        LstmIds { u, v, b }
    }
}

/// Assembles the requested encoder/decoder pair with freshly initialised
/// weights: uniform(−0.1, 0.1) everywhere, positional unbinding vectors drawn
/// from a unit Gaussian and normalised.
pub fn build_model(variant: ModelVariant, dims: ModelDims, seed: u64) -> Result<Tpn2fModel> {
    dims.validate()?;
    if variant.reasoning_layers == 0 {
        return Err(ModelError::Dims("reasoning_layers must be at least 1".into()));
    }
    let mut params = ParamStore::new();
    let mut init = Init {
        store: &mut params,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let d_tpr = dims.d_tpr();
    let (encoder, d_enc) = match variant.encoder {
        EncoderKind::Tpr => {
            let embed = init.uniform("encoder.embed".into(), &[dims.n_tokens, dims.d_word]);
            let filler_lstm = init.lstm("encoder.filler_lstm", dims.d_word, d_tpr);
            let role_lstm = init.lstm("encoder.role_lstm", dims.d_word, d_tpr);
            let filler_attn = init.uniform("encoder.W_fa".into(), &[dims.n_fillers, d_tpr]);
            let role_attn = init.uniform("encoder.W_ra".into(), &[dims.n_roles, d_tpr]);
            let fillers = init.uniform("encoder.F".into(), &[dims.d_filler, dims.n_fillers]);
            let roles = init.uniform("encoder.R".into(), &[dims.d_role, dims.n_roles]);
            (
                EncoderIds::Tpr {
                    embed,
                    filler_lstm,
                    role_lstm,
                    filler_attn,
                    role_attn,
                    fillers,
                    roles,
                },
                d_tpr,
            )
        }
        EncoderKind::Lstm => {
            let embed = init.uniform("encoder.embed".into(), &[dims.n_tokens, dims.d_word]);
            let lstm = init.lstm("encoder.lstm", dims.d_word, dims.lstm_hidden);
            (EncoderIds::Lstm { embed, lstm }, dims.lstm_hidden)
        }
    };

    let d_hid = match variant.decoder {
        DecoderKind::Tpr => dims.d_tuple(),
        DecoderKind::Lstm => dims.lstm_hidden,
    };

    let mut reasoning = Vec::with_capacity(variant.reasoning_layers);
    for layer in 0..variant.reasoning_layers {
        let input = if layer == 0 { d_enc } else { d_hid };
        let w = init.uniform(format!("reasoning.{layer}.W"), &[d_hid, input]);
        let b = init.uniform(format!("reasoning.{layer}.b"), &[d_hid]);
        reasoning.push((w, b));
    }

    let rel_embed = init.uniform("decoder.rel_embed".into(), &[dims.n_relations, dims.d_rel]);
    let arg_embed = init.uniform("decoder.arg_embed".into(), &[dims.n_args, dims.d_arg]);
    let lstm = init.lstm("decoder.tuple_lstm", dims.d_decoder_input(), d_hid);
    let ctx_proj = init.uniform("decoder.W_ctx".into(), &[d_hid, d_enc]);
    let combiner = init.uniform("decoder.K".into(), &[d_hid, 2 * d_hid]);
    let head = match variant.decoder {
        DecoderKind::Tpr => {
            let pos_unbind = (0..dims.positions)
                .map(|i| init.unit_gaussian(format!("decoder.p_unbind_{}", i + 1), dims.d_pos))
                .collect();
            let dual = init.uniform("decoder.W_dual".into(), &[dims.d_rel, dims.d_arg * dims.d_rel]);
            let rel_out = dims
                .relation_linear
                .then(|| init.uniform("decoder.W_rel".into(), &[dims.d_rel, dims.d_rel]));
            let rel_classifier = init.uniform("decoder.L_r".into(), &[dims.n_relations, dims.d_rel]);
            let arg_classifier = init.uniform("decoder.L_a".into(), &[dims.n_args, dims.d_arg]);
            HeadIds::Tpr {
                pos_unbind,
                dual,
                rel_out,
                rel_classifier,
                arg_classifier,
            }
        }
        DecoderKind::Lstm => {
            let rel_classifier = init.uniform("decoder.L_r".into(), &[dims.n_relations, d_hid]);
            let arg_classifiers = (0..dims.positions)
                .map(|i| init.uniform(format!("decoder.L_a{}", i + 1), &[dims.n_args, d_hid]))
                .collect();
            HeadIds::Lstm {
                rel_classifier,
                arg_classifiers,
            }
        }
    };
    let decoder = DecoderIds {
        rel_embed,
        arg_embed,
        lstm,
        ctx_proj,
        combiner,
        head,
    };
    Ok(Tpn2fModel {
        variant,
        dims,
        params,
        encoder,
        reasoning,
        decoder,
    })
}

impl Tpn2fModel {
    /// Width of the encoder's per-token output.
    pub fn encoder_width(&self) -> usize {
        match self.variant.encoder {
            EncoderKind::Tpr => self.dims.d_tpr(),
            EncoderKind::Lstm => self.dims.lstm_hidden,
        }
    }

    /// Width of the decoder state `H^t`.
    pub fn decoder_width(&self) -> usize {
        match self.variant.decoder {
            DecoderKind::Tpr => self.dims.d_tuple(),
            DecoderKind::Lstm => self.dims.lstm_hidden,
        }
    }

    /// Records every parameter on `tape` by reference.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(_, p)| tape.leaf_ref(&p.value, p.requires_grad))
            .collect();
        BoundParams { vars }
    }

    /// Reasoning MLP: `H⁰ = tanh(W_L … tanh(W_1 ♭(T_S) + b_1) … + b_L)`.
    pub fn reasoning_map(&self, tape: &mut Tape<'_>, p: &BoundParams, pooled: Var) -> Result<Var> {
        let mut x = tape.flatten(pooled)?;
        for &(w, b) in &self.reasoning {
            let wx = tape.matmul(p.get(w), x)?;
            let z = tape.add(wx, p.get(b))?;
            x = tape.tanh(z)?;
        }
        Ok(x)
    }

    pub fn positional_unbinding(&self) -> Option<Vec<&Tensor>> {
        match &self.decoder.head {
            HeadIds::Tpr { pos_unbind, .. } => {
                Some(pos_unbind.iter().map(|&id| self.params.value(id)).collect())
            }
            HeadIds::Lstm { .. } => None,
        }
    }

    pub fn has_dictionaries(&self) -> bool {
        matches!(self.encoder, EncoderIds::Tpr { .. })
    }

    pub(crate) fn check_token(&self, id: usize) -> Result<()> {
        if id >= self.dims.n_tokens {
            return Err(ModelError::Vocab {
                kind: "token",
                id,
                size: self.dims.n_tokens,
            });
        }
        Ok(())
    }
}

/// One LSTM step: returns `(h, c)`.
pub(crate) fn lstm_cell(
    tape: &mut Tape<'_>,
    p: &BoundParams,
    ids: &LstmIds,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let mut gates = [x; 4];
    for (k, gate) in gates.iter_mut().enumerate() {
        let ux = tape.matmul(p.get(ids.u[k]), x)?;
        let vh = tape.matmul(p.get(ids.v[k]), h_prev)?;
        *gate = tape.add_n(&[ux, vh, p.get(ids.b[k])])?;
    }
    let f = tape.sigmoid(gates[0])?;
    let g = tape.tanh(gates[1])?;
    let i = tape.sigmoid(gates[2])?;
    let o = tape.sigmoid(gates[3])?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}
