use crate::tensor::{Tape, Tensor, Var};

use super::{
    lstm_cell, BoundParams, EncoderIds, ModelError, Pooling, Result, Tpn2fModel,
    SELECTION_TEMPERATURE,
};

/// Result of reading a token sequence.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Pooled encoding fed to the reasoning MLP.
    pub pooled: Var,
    /// One entry per token: `T^t` (`d_F × d_R`) or an LSTM hidden state.
    pub context: Vec<Var>,
    /// Filler selection weights `a_f^t` per token (TPR encoder only).
    pub filler_weights: Vec<Var>,
    /// Role selection weights `a_r^t` per token (TPR encoder only).
    pub role_weights: Vec<Var>,
}

/// Recurrent state carried between encoder steps.
#[derive(Clone, Copy, Debug)]
pub struct EncoderState {
    /// `T^{t−1}` for the TPR encoder, `h^{t−1}` for the LSTM encoder.
    pub hidden: Var,
    pub cell_filler: Var,
    /// Unused by the LSTM encoder.
    pub cell_role: Var,
}

/// Per-token output of [`Tpn2fModel::encoder_step`].
#[derive(Clone, Copy, Debug)]
pub struct EncoderStepOutput {
    pub state: EncoderState,
    pub filler_weights: Option<Var>,
    pub role_weights: Option<Var>,
}

impl Tpn2fModel {
    pub fn initial_encoder_state(&self, tape: &mut Tape<'_>) -> EncoderState {
        let (hidden, cell) = match self.encoder {
            EncoderIds::Tpr { .. } => (
                Tensor::zeros(&[self.dims.d_filler, self.dims.d_role]),
                self.dims.d_tpr(),
            ),
            EncoderIds::Lstm { .. } => (
                Tensor::zeros(&[self.dims.lstm_hidden]),
                self.dims.lstm_hidden,
            ),
        };
        EncoderState {
            hidden: tape.constant(hidden),
            cell_filler: tape.constant(Tensor::zeros(&[cell])),
            cell_role: tape.constant(Tensor::zeros(&[cell])),
        }
    }

    /// One encoder step on token `token`.
    ///
    /// For the TPR encoder both LSTMs take `(w^t, ♭T^{t−1})`, then
    /// `f^t = F·softmax(W_fa h_F / 0.1)`, `r^t = R·softmax(W_ra h_R / 0.1)` and
    /// `T^t = f^t ⊗ r^t`.
    pub fn encoder_step(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        token: usize,
        prev: EncoderState,
    ) -> Result<EncoderStepOutput> {
        self.check_token(token)?;
        match &self.encoder {
            EncoderIds::Tpr {
                embed,
                filler_lstm,
                role_lstm,
                filler_attn,
                role_attn,
                fillers,
                roles,
            } => {
                let w = tape.row(p.get(*embed), token)?;
                let t_prev = tape.flatten(prev.hidden)?;
                let (h_f, c_f) = lstm_cell(tape, p, filler_lstm, w, t_prev, prev.cell_filler)?;
                let (h_r, c_r) = lstm_cell(tape, p, role_lstm, w, t_prev, prev.cell_role)?;
                let zf = tape.matmul(p.get(*filler_attn), h_f)?;
                let a_f = tape.softmax(zf, SELECTION_TEMPERATURE)?;
                let zr = tape.matmul(p.get(*role_attn), h_r)?;
                let a_r = tape.softmax(zr, SELECTION_TEMPERATURE)?;
                let f = tape.matmul(p.get(*fillers), a_f)?;
                let r = tape.matmul(p.get(*roles), a_r)?;
                let t = tape.outer(f, r)?;
                Ok(EncoderStepOutput {
                    state: EncoderState {
                        hidden: t,
                        cell_filler: c_f,
                        cell_role: c_r,
                    },
                    filler_weights: Some(a_f),
                    role_weights: Some(a_r),
                })
            }
            EncoderIds::Lstm { embed, lstm } => {
                let w = tape.row(p.get(*embed), token)?;
                let (h, c) = lstm_cell(tape, p, lstm, w, prev.hidden, prev.cell_filler)?;
                Ok(EncoderStepOutput {
                    state: EncoderState {
                        hidden: h,
                        cell_filler: c,
                        cell_role: prev.cell_role,
                    },
                    filler_weights: None,
                    role_weights: None,
                })
            }
        }
    }

    /// Runs the encoder over `tokens` and pools the per-token outputs.
    ///
    /// The LSTM encoder always pools with its last hidden state.
    pub fn encode_sequence(
        &self,
        tape: &mut Tape<'_>,
        p: &BoundParams,
        tokens: &[usize],
    ) -> Result<EncoderOutput> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut state = self.initial_encoder_state(tape);
        let mut context = Vec::with_capacity(tokens.len());
        let mut filler_weights = Vec::new();
        let mut role_weights = Vec::new();
        for &tok in tokens {
            let out = self.encoder_step(tape, p, tok, state)?;
            state = out.state;
            context.push(state.hidden);
            filler_weights.extend(out.filler_weights);
            role_weights.extend(out.role_weights);
        }
        let pooled = match (&self.encoder, self.variant.pooling) {
            (EncoderIds::Tpr { .. }, Pooling::SumTprs) => tape.add_n(&context)?,
            _ => *context.last().expect("non-empty"),
        };
        Ok(EncoderOutput {
            pooled,
            context,
            filler_weights,
            role_weights,
        })
    }
}
