//! Generator and discriminator networks over flat parameter vectors.
//!
//! Generator: LSTM over a `window_len`-step noise sequence, then a per-step
//! dense projection to one output. Discriminator: LSTM over the input
//! sequence, last hidden state through a dense layer to one logit.
//!
//! The discriminator can subtract each window's own mean before the LSTM
//! ([`InputTransform::Center`]). Real and generated windows go through the
//! same transform, so the game is played on in-window shape only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{self, LstmShape, LstmTape};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputTransform {
    Identity,
    /// Subtract the window mean.
    #[default]
    Center,
}

impl InputTransform {
    pub(crate) fn tag(self) -> u8 {
        match self {
            InputTransform::Identity => 0,
            InputTransform::Center => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(InputTransform::Identity),
            1 => Some(InputTransform::Center),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window_len: usize,
    pub noise_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub disc_input: InputTransform,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            window_len: 40,
            noise_dim: 8,
            gen_hidden: 32,
            disc_hidden: 32,
            disc_input: InputTransform::Center,
        }
    }
}

impl Architecture {
    pub const fn gen_lstm(&self) -> LstmShape {
        LstmShape::new(self.noise_dim, self.gen_hidden)
    }

    pub const fn disc_lstm(&self) -> LstmShape {
        LstmShape::new(1, self.disc_hidden)
    }

    pub const fn gen_len(&self) -> usize {
        self.gen_lstm().param_len() + self.gen_hidden + 1
    }

    pub const fn disc_len(&self) -> usize {
        self.disc_lstm().param_len() + self.disc_hidden + 1
    }

    /// Uniform `±1/sqrt(fan)` initialization for both networks.
    pub fn init_params<T: Scalar, R: Rng>(&self, rng: &mut R) -> (Vec<T>, Vec<T>) {
        let mut init = |shape: LstmShape| -> Vec<T> {
            let lstm_bound = 1.0 / (shape.hidden as f64).sqrt();
            let dense_bound = 1.0 / (shape.hidden as f64).sqrt();
            let mut p: Vec<T> = (0..shape.param_len())
                .map(|_| T::of(rng.random_range(-lstm_bound..lstm_bound)))
                .collect();
            p.extend(
                (0..=shape.hidden).map(|_| T::of(rng.random_range(-dense_bound..dense_bound))),
            );
            p
        };
        let generator = init(self.gen_lstm());
        let discriminator = init(self.disc_lstm());
        (generator, discriminator)
    }
}

pub struct GeneratorPass<T> {
    tape: LstmTape<T>,
    /// `steps x batch`.
    pub out: Vec<T>,
}

/// `noise` is time-major, `window_len x batch x noise_dim`.
pub fn generator_forward<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    noise: &[T],
    batch: usize,
) -> GeneratorPass<T> {
    let shape = arch.gen_lstm();
    let (lstm_p, dense) = params.split_at(shape.param_len());
    let (w, bias) = dense.split_at(shape.hidden);
    let tape = lstm::forward(shape, lstm_p, noise, batch, arch.window_len);
    let out = tape
        .hidden
        .chunks_exact(shape.hidden)
        .map(|h| dot(w, h) + bias[0])
        .collect();
    GeneratorPass { tape, out }
}

/// Accumulates generator parameter gradients given `d_out` (`steps x batch`).
pub fn generator_backward<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    pass: &GeneratorPass<T>,
    d_out: &[T],
    grads: &mut [T],
) {
    let shape = arch.gen_lstm();
    let h = shape.hidden;
    let (lstm_p, dense) = params.split_at(shape.param_len());
    let w = &dense[..h];
    let (g_lstm, g_dense) = grads.split_at_mut(shape.param_len());
    let mut d_hidden = vec![T::zero(); pass.tape.hidden.len()];
    for ((dh, hv), &d) in d_hidden
        .chunks_exact_mut(h)
        .zip(pass.tape.hidden.chunks_exact(h))
        .zip(d_out)
    {
        for u in 0..h {
            dh[u] = d * w[u];
            g_dense[u] += d * hv[u];
        }
        g_dense[h] += d;
    }
    lstm::backward(shape, lstm_p, &pass.tape, &d_hidden, g_lstm);
}

pub struct DiscriminatorPass<T> {
    tape: LstmTape<T>,
    pub logits: Vec<T>,
}

/// `x` is time-major, `window_len x batch`.
pub fn discriminator_forward<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    x: &[T],
    batch: usize,
) -> DiscriminatorPass<T> {
    let shape = arch.disc_lstm();
    let (lstm_p, dense) = params.split_at(shape.param_len());
    let (w, bias) = dense.split_at(shape.hidden);
    let centered;
    let x = match arch.disc_input {
        InputTransform::Identity => x,
        InputTransform::Center => {
            centered = center_columns(x, batch, arch.window_len);
            &centered[..]
        }
    };
    let tape = lstm::forward(shape, lstm_p, x, batch, arch.window_len);
    let last = arch.window_len - 1;
    let logits = (0..batch)
        .map(|b| dot(w, tape.h(shape.hidden, last, b)) + bias[0])
        .collect();
    DiscriminatorPass { tape, logits }
}

/// Accumulates discriminator gradients (when `grads` is given) and returns
/// the gradient on the input sequence, time-major.
pub fn discriminator_backward<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    pass: &DiscriminatorPass<T>,
    d_logits: &[T],
    grads: &mut [T],
) -> Vec<T> {
    let shape = arch.disc_lstm();
    let h = shape.hidden;
    let batch = pass.tape.batch;
    let last = arch.window_len - 1;
    let (lstm_p, dense) = params.split_at(shape.param_len());
    let w = &dense[..h];
    let (g_lstm, g_dense) = grads.split_at_mut(shape.param_len());
    let mut d_hidden = vec![T::zero(); pass.tape.hidden.len()];
    for (b, &d) in d_logits.iter().enumerate() {
        let hv = pass.tape.h(h, last, b);
        let off = (last * batch + b) * h;
        for u in 0..h {
            d_hidden[off + u] = d * w[u];
            g_dense[u] += d * hv[u];
        }
        g_dense[h] += d;
    }
    let d_x = lstm::backward(shape, lstm_p, &pass.tape, &d_hidden, g_lstm);
    match arch.disc_input {
        InputTransform::Identity => d_x,
        // Centering is linear and self-adjoint.
        InputTransform::Center => center_columns(&d_x, batch, arch.window_len),
    }
}

/// Subtracts each sample's mean over time from a time-major `steps x batch` block.
fn center_columns<T: Scalar>(x: &[T], batch: usize, steps: usize) -> Vec<T> {
    let mut mean = vec![T::zero(); batch];
    for row in x.chunks_exact(batch) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = T::of(steps as f64);
    mean.iter_mut().for_each(|m| *m /= n);
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(batch) {
        for (v, &m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Sample-major `batch x len` to time-major `len x batch`.
pub fn to_time_major<T: Copy>(rows: &[&[T]], len: usize) -> Vec<T> {
    let batch = rows.len();
    let mut out = Vec::with_capacity(batch * len);
    for t in 0..len {
        out.extend(rows.iter().map(|r| r[t]));
    }
    debug_assert_eq!(out.len(), batch * len);
    out
}
