use ndarray::{Array2, ArrayView2};

use super::{Learnable, Mode, PointConv, PointConvTape};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dropout probability between hidden stages.
pub const DROPOUT: f64 = 0.6;

/// Classifier head: hidden stages of affine + normalization + leaky
/// activation + dropout, then an affine map to class logits. Operates on a
/// `B x F` batch of pooled features; normalization statistics span the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub hidden: Vec<PointConv>,
    pub output: PointConv,
    pub dropout: f64,
}

pub struct HeadTape {
    stage_inputs: Vec<Array2<f64>>,
    tapes: Vec<PointConvTape>,
    /// Inverted-dropout multipliers per hidden stage (0 or 1/keep).
    masks: Vec<Option<Array2<f64>>>,
    output_tape: PointConvTape,
}

impl Head {
    pub fn new(input: usize, hidden: &[usize], classes: usize, dropout: f64, rng: &mut Rng) -> Self {
        let mut stages = Vec::with_capacity(hidden.len());
        let mut width = input;
        for &h in hidden {
            stages.push(PointConv::new(width, h, rng));
            width = h;
        }
        Self {
            hidden: stages,
            output: PointConv::linear(width, classes, rng),
            dropout,
        }
    }

    pub fn classes(&self) -> usize {
        self.output.out_features()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.iter().map(PointConv::zeros_like).collect(),
            output: self.output.zeros_like(),
            dropout: self.dropout,
        }
    }

    /// `rngs[b]` drives dropout for row `b` in train mode.
    pub fn forward(&self, features: ArrayView2<'_, f64>, mode: Mode, rngs: &mut [Rng]) -> Result<(Array2<f64>, HeadTape)> {
        if mode == Mode::Train && rngs.len() != features.nrows() {
            return Err(Error::Shape("one rng per batch row is required in train mode".into()));
        }
        let keep = 1.0 - self.dropout;
        let mut x = features.to_owned();
        let mut stage_inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut tapes = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        for stage in &self.hidden {
            let (mut out, tape) = stage.forward(&[x.view()], mode)?;
            let mut y = out.pop().expect("one block");
            let mask = if mode == Mode::Train && self.dropout > 0.0 {
                let mut m = Array2::zeros(y.raw_dim());
                for (b, mut row) in m.rows_mut().into_iter().enumerate() {
                    for v in row.iter_mut() {
                        *v = if rngs[b].bernoulli(keep) { 1.0 / keep } else { 0.0 };
                    }
                }
                y *= &m;
                Some(m)
            } else {
                None
            };
            stage_inputs.push(x);
            tapes.push(tape);
            masks.push(mask);
            x = y;
        }
        let (mut out, output_tape) = self.output.forward(&[x.view()], mode)?;
        stage_inputs.push(x);
        Ok((
            out.pop().expect("one block"),
            HeadTape {
                stage_inputs,
                tapes,
                masks,
                output_tape,
            },
        ))
    }

    pub fn backward(&self, tape: &HeadTape, grad_logits: ArrayView2<'_, f64>) -> (Head, Array2<f64>) {
        let mut grads = self.zeros_like();
        let last = tape.stage_inputs.last().expect("output input");
        let (g, mut gx) = self.output.backward(&[last.view()], &tape.output_tape, &[grad_logits]);
        grads.output = g;
        let mut g_in = gx.pop().expect("one block");
        for s in (0..self.hidden.len()).rev() {
            if let Some(m) = &tape.masks[s] {
                g_in *= m;
            }
            let (g, mut gx) = self.hidden[s].backward(&[tape.stage_inputs[s].view()], &tape.tapes[s], &[g_in.view()]);
            grads.hidden[s] = g;
            g_in = gx.pop().expect("one block");
        }
        (grads, g_in)
    }

    pub fn update_running(&mut self, tape: &HeadTape) {
        for (stage, t) in self.hidden.iter_mut().zip(&tape.tapes) {
            stage.update_running(t);
        }
    }

    /// Fraction of hidden activations zeroed by dropout in the recorded pass.
    pub fn dropped_fraction(tape: &HeadTape) -> Option<f64> {
        let mut zero = 0usize;
        let mut total = 0usize;
        for m in tape.masks.iter().flatten() {
            zero += m.iter().filter(|&&v| v == 0.0).count();
            total += m.len();
        }
        (total > 0).then(|| zero as f64 / total as f64)
    }
}

impl Learnable for Head {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut t = Vec::new();
        for (s, stage) in self.hidden.iter().enumerate() {
            t.extend(stage.tensors().into_iter().map(|(n, v)| (format!("hidden{s}.{n}"), v)));
        }
        t.extend(self.output.tensors().into_iter().map(|(n, v)| (format!("output.{n}"), v)));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = Vec::new();
        for stage in &mut self.hidden {
            t.extend(stage.tensors_mut());
        }
        t.extend(self.output.tensors_mut());
        t
    }

    fn buffers(&self) -> Vec<(String, &[f64])> {
        let mut t = Vec::new();
        for (s, stage) in self.hidden.iter().enumerate() {
            t.extend(stage.buffers().into_iter().map(|(n, v)| (format!("hidden{s}.{n}"), v)));
        }
        t
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = Vec::new();
        for stage in &mut self.hidden {
            t.extend(stage.buffers_mut());
        }
        t
    }
}
