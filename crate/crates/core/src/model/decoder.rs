use crate::tensor::{Tape, Tensor, Var};

use super::{
    lstm_cell, BoundParams, EncoderOutput, HeadIds, ModelError, Result, Tpn2fModel,
};

/// Encoder context projected into decoder space, computed once per sequence.
#[derive(Clone, Copy, Debug)]
pub struct AttentionContext {
    /// Rows are `W_ctx·♭T^j` (`n × d_H`).
    pub rows: Var,
    /// `C_T`, i.e. the same vectors as columns (`d_H × n`).
    pub columns: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
}

/// Classifier outputs for one decoded tuple.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub relation_logits: Var,
    /// One logit vector per argument position.
    pub argument_logits: Vec<Var>,
    /// `r′_rel` (TPR decoder only).
    pub relation_unbinding: Option<Var>,
    /// Unbound argument vectors `aᵢ` (TPR decoder only).
    pub arguments: Vec<Var>,
}

impl Tpn2fModel {
    pub fn prepare_attention(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        context: &[Var],
    ) -> Result<AttentionContext> {
        if context.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let w = p.get(self.decoder.ctx_proj);
        let mut projected = Vec::with_capacity(context.len());
        for &ctx in context {
            let flat = tape.flatten(ctx)?;
            projected.push(tape.matmul(w, flat)?);
        }
        let rows = tape.stack(&projected)?;
        let columns = tape.transpose(rows)?;
        Ok(AttentionContext { rows, columns })
    }

    /// Dot-product attention: `d = C_Tᵀ h`, `s = C_T·softmax(d)`,
    /// `H = tanh(K·[h; s])`. Returns `H` and the attention weights.
    pub fn attention(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        h: Var,
        ctx: &AttentionContext,
    ) -> Result<(Var, Var)> {
        let scores = tape.matmul(ctx.rows, h)?;
        let weights = tape.softmax(scores, 1.0)?;
        let s = tape.matmul(ctx.columns, weights)?;
        let hs = tape.concat(&[h, s])?;
        let mut out = tape.matmul(p.get(self.decoder.combiner), hs)?;
        if self.dims.attention_tanh {
            out = tape.tanh(out)?;
        }
        Ok((out, weights))
    }

    /// `H⁰` from the reasoning MLP and a zero cell.
    pub fn initial_decoder_state(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        encoded: &EncoderOutput,
    ) -> Result<DecoderState> {
        let h = self.reasoning_map(tape, p, encoded.pooled)?;
        let c = tape.constant(Tensor::zeros(&[self.decoder_width()]));
        Ok(DecoderState { h, c })
    }

    /// Feeds the previous tuple `(rel, arg₁, …)` through the Tuple-LSTM and
    /// attends over the encoder context.
    pub fn decoder_step(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        prev_tuple: &[usize],
        prev: DecoderState,
        ctx: &AttentionContext,
    ) -> Result<(DecoderState, Var)> {
        let Some((&rel, args)) = prev_tuple.split_first() else {
            return Err(ModelError::Dims("empty previous tuple".into()));
        };
        if args.len() != self.dims.positions {
            return Err(ModelError::Dims(format!(
                "tuple has {} arguments, model expects {}",
                args.len(),
                self.dims.positions
            )));
        }
        if rel >= self.dims.n_relations {
            return Err(ModelError::Vocab {
                kind: "relation",
                id: rel,
                size: self.dims.n_relations,
            });
        }
        let mut parts = Vec::with_capacity(prev_tuple.len());
        parts.push(tape.row(p.get(self.decoder.rel_embed), rel)?);
        for &a in args {
            if a >= self.dims.n_args {
                return Err(ModelError::Vocab {
                    kind: "argument",
                    id: a,
                    size: self.dims.n_args,
                });
            }
            parts.push(tape.row(p.get(self.decoder.arg_embed), a)?);
        }
        let x = tape.concat(&parts)?;
        let (h_lstm, c) = lstm_cell(tape, p, &self.decoder.lstm, x, prev.h, prev.c)?;
        let (h, weights) = self.attention(tape, p, h_lstm, ctx)?;
        Ok((DecoderState { h, c }, weights))
    }

    /// Turns a decoder state into relation and argument logits.
    ///
    /// TPR head: `H` is viewed as `d_Arg × d_Rel × d_Pos`, `Bᵢ = H·p′ᵢ`,
    /// `r′ = W_dual·♭(ΣBᵢ)`, `aᵢ = Bᵢ·r′`, `l_r = L_r·r′`, `l_aᵢ = L_a·aᵢ`.
    pub fn unbinding_module(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        h: Var,
    ) -> Result<StepOutput> {
        match &self.decoder.head {
            HeadIds::Tpr {
                pos_unbind,
                dual,
                rel_out,
                rel_classifier,
                arg_classifier,
            } => {
                let d = &self.dims;
                let cube = tape.reshape(h, &[d.d_arg, d.d_rel, d.d_pos])?;
                let mut bs = Vec::with_capacity(pos_unbind.len());
                for &pu in pos_unbind {
                    bs.push(tape.contract_last(cube, p.get(pu))?);
                }
                let b_sum = tape.add_n(&bs)?;
                let b_flat = tape.flatten(b_sum)?;
                let r_unbind = tape.matmul(p.get(*dual), b_flat)?;
                let r_rel = match rel_out {
                    Some(w) => tape.matmul(p.get(*w), r_unbind)?,
                    None => r_unbind,
                };
                let relation_logits = tape.matmul(p.get(*rel_classifier), r_rel)?;
                let mut arguments = Vec::with_capacity(bs.len());
                let mut argument_logits = Vec::with_capacity(bs.len());
                for b in bs {
                    let a = tape.matmul(b, r_unbind)?;
                    argument_logits.push(tape.matmul(p.get(*arg_classifier), a)?);
                    arguments.push(a);
                }
                Ok(StepOutput {
                    relation_logits,
                    argument_logits,
                    relation_unbinding: Some(r_unbind),
                    arguments,
                })
            }
            HeadIds::Lstm {
                rel_classifier,
                arg_classifiers,
            } => {
                let relation_logits = tape.matmul(p.get(*rel_classifier), h)?;
                let argument_logits = arg_classifiers
                    .iter()
                    .map(|&l| tape.matmul(p.get(l), h))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(StepOutput {
                    relation_logits,
                    argument_logits,
                    relation_unbinding: None,
                    arguments: Vec::new(),
                })
            }
        }
    }

    /// Full forward pass with teacher forcing. Step 0 is fed `start`; step
    /// `t > 0` is fed the gold tuple `targets[t−1]`, so a gold tuple never
    /// influences its own logits.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        tokens: &[usize],
        start: &[usize],
        targets: &[Vec<usize>],
    ) -> Result<Vec<StepOutput>> {
        let encoded = self.encode_sequence(tape, p, tokens)?;
        let ctx = self.prepare_attention(tape, p, &encoded.context)?;
        let mut state = self.initial_decoder_state(tape, p, &encoded)?;
        let mut outputs = Vec::with_capacity(targets.len());
        let mut prev = start;
        for target in targets {
            let (next, _) = self.decoder_step(tape, p, prev, state, &ctx)?;
            state = next;
            outputs.push(self.unbinding_module(tape, p, state.h)?);
            prev = target;
        }
        Ok(outputs)
    }
}
