//! Batched single-layer LSTM with full backpropagation through time.
//!
//! Parameters live in one flat slice: the weight block of `(input + hidden)`
//! rows by `4 * hidden` columns, followed by the `4 * hidden` bias. Row `k`
//! holds the contribution of the `k`-th entry of `[x_t, h_{t-1}]` to every
//! gate pre-activation, gate order `i | f | g | o`. All activations are laid
//! out time-major: `[step][batch][unit]`.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
}

impl LstmShape {
    pub const fn new(input: usize, hidden: usize) -> Self {
        Self { input, hidden }
    }

    #[inline]
    pub const fn gates(&self) -> usize {
        4 * self.hidden
    }

    #[inline]
    pub const fn fan_in(&self) -> usize {
        self.input + self.hidden
    }

    pub const fn weight_len(&self) -> usize {
        self.fan_in() * self.gates()
    }

    pub const fn param_len(&self) -> usize {
        self.weight_len() + self.gates()
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmTape<T> {
    pub batch: usize,
    pub steps: usize,
    /// `steps x batch x fan_in`, concatenated `[x_t, h_{t-1}]`.
    z: Vec<T>,
    /// `steps x batch x 4H`, post-activation gate values.
    gates: Vec<T>,
    /// `(steps + 1) x batch x H`, cell state with `c_0 = 0` in slot 0.
    cell: Vec<T>,
    /// `steps x batch x H`, `tanh(c_t)`.
    tanh_cell: Vec<T>,
    /// `steps x batch x H`, hidden outputs `h_t`.
    pub hidden: Vec<T>,
}

impl<T: Scalar> LstmTape<T> {
    /// Hidden output of step `t` for sample `b`.
    pub fn h(&self, hidden: usize, t: usize, b: usize) -> &[T] {
        let off = (t * self.batch + b) * hidden;
        &self.hidden[off..off + hidden]
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Runs the cell over `steps` time-major inputs (`steps x batch x input`).
pub fn forward<T: Scalar>(
    shape: LstmShape,
    params: &[T],
    x: &[T],
    batch: usize,
    steps: usize,
) -> LstmTape<T> {
    let (n_in, h, g4, fan) = (shape.input, shape.hidden, shape.gates(), shape.fan_in());
    debug_assert_eq!(params.len(), shape.param_len());
    debug_assert_eq!(x.len(), steps * batch * n_in);
    let (weights, bias) = params.split_at(shape.weight_len());

    let mut tape = LstmTape {
        batch,
        steps,
        z: vec![T::zero(); steps * batch * fan],
        gates: vec![T::zero(); steps * batch * g4],
        cell: vec![T::zero(); (steps + 1) * batch * h],
        tanh_cell: vec![T::zero(); steps * batch * h],
        hidden: vec![T::zero(); steps * batch * h],
    };

    for t in 0..steps {
        for b in 0..batch {
            let row = t * batch + b;
            let z = &mut tape.z[row * fan..(row + 1) * fan];
            z[..n_in].copy_from_slice(&x[row * n_in..(row + 1) * n_in]);
            if t > 0 {
                let prev = ((t - 1) * batch + b) * h;
                z[n_in..].copy_from_slice(&tape.hidden[prev..prev + h]);
            }

            let pre = &mut tape.gates[row * g4..(row + 1) * g4];
            pre.copy_from_slice(bias);
            for (k, &zk) in z.iter().enumerate() {
                if zk == T::zero() {
                    continue;
                }
                let w = &weights[k * g4..(k + 1) * g4];
                for (p, &wk) in pre.iter_mut().zip(w) {
                    *p += zk * wk;
                }
            }
            let (gi, rest) = pre.split_at_mut(h);
            let (gf, rest) = rest.split_at_mut(h);
            let (gg, go) = rest.split_at_mut(h);
            gi.iter_mut().for_each(|v| *v = sigmoid(*v));
            gf.iter_mut().for_each(|v| *v = sigmoid(*v));
            gg.iter_mut().for_each(|v| *v = v.tanh());
            go.iter_mut().for_each(|v| *v = sigmoid(*v));

            let c_prev_off = (t * batch + b) * h;
            let c_off = ((t + 1) * batch + b) * h;
            let out_off = row * h;
            for u in 0..h {
                let c = gf[u] * tape.cell[c_prev_off + u] + gi[u] * gg[u];
                tape.cell[c_off + u] = c;
                let tc = c.tanh();
                tape.tanh_cell[out_off + u] = tc;
                tape.hidden[out_off + u] = go[u] * tc;
            }
        }
    }
    tape
}

/// Backpropagates `d_hidden` (`steps x batch x H`, the upstream gradient on
/// every `h_t`) through the tape. Parameter gradients are accumulated into
/// `grads`; the returned vector is the gradient on the inputs
/// (`steps x batch x input`).
pub fn backward<T: Scalar>(
    shape: LstmShape,
    params: &[T],
    tape: &LstmTape<T>,
    d_hidden: &[T],
    grads: &mut [T],
) -> Vec<T> {
    let (n_in, h, g4, fan) = (shape.input, shape.hidden, shape.gates(), shape.fan_in());
    let (batch, steps) = (tape.batch, tape.steps);
    debug_assert_eq!(d_hidden.len(), steps * batch * h);
    debug_assert_eq!(grads.len(), shape.param_len());
    let weights = &params[..shape.weight_len()];
    let (d_weights, d_bias) = grads.split_at_mut(shape.weight_len());

    let mut d_x = vec![T::zero(); steps * batch * n_in];
    let mut dh_next = vec![T::zero(); batch * h];
    let mut dc_next = vec![T::zero(); batch * h];
    let mut d_pre = vec![T::zero(); g4];
    let one = T::one();

    for t in (0..steps).rev() {
        for b in 0..batch {
            let row = t * batch + b;
            let gates = &tape.gates[row * g4..(row + 1) * g4];
            let (gi, rest) = gates.split_at(h);
            let (gf, rest) = rest.split_at(h);
            let (gg, go) = rest.split_at(h);
            let c_prev = &tape.cell[(t * batch + b) * h..(t * batch + b + 1) * h];
            let tc = &tape.tanh_cell[row * h..(row + 1) * h];
            let dh_up = &d_hidden[row * h..(row + 1) * h];
            let dhn = &mut dh_next[b * h..(b + 1) * h];
            let dcn = &mut dc_next[b * h..(b + 1) * h];

            for u in 0..h {
                let dh = dh_up[u] + dhn[u];
                let d_o = dh * tc[u];
                let dc = dcn[u] + dh * go[u] * (one - tc[u] * tc[u]);
                let d_i = dc * gg[u];
                let d_g = dc * gi[u];
                let d_f = dc * c_prev[u];
                dcn[u] = dc * gf[u];
                d_pre[u] = d_i * gi[u] * (one - gi[u]);
                d_pre[h + u] = d_f * gf[u] * (one - gf[u]);
                d_pre[2 * h + u] = d_g * (one - gg[u] * gg[u]);
                d_pre[3 * h + u] = d_o * go[u] * (one - go[u]);
            }

            for (db, &dp) in d_bias.iter_mut().zip(&d_pre) {
                *db += dp;
            }
            let z = &tape.z[row * fan..(row + 1) * fan];
            for k in 0..fan {
                let w = &weights[k * g4..(k + 1) * g4];
                let dw = &mut d_weights[k * g4..(k + 1) * g4];
                let zk = z[k];
                for (d, &dp) in dw.iter_mut().zip(&d_pre) {
                    *d += zk * dp;
                }
                let dz = dot(w, &d_pre);
                if k < n_in {
                    d_x[row * n_in + k] = dz;
                } else {
                    dhn[k - n_in] = dz;
                }
            }
        }
    }
    d_x
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}
