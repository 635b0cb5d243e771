//! Network building blocks on the tape: sinusoidal positional encodings and
//! a pre-norm multi-head self-attention encoder stack.

use super::tape::{NdiffError, Tape, Var};
use super::tensor::Tensor;
use crate::rng::SplitRng;

/// Sinusoidal positional encoding over *normalized event times*.
///
/// Positions are `p = (t - t₁)/(tₙ - t₁) · scale` so a window maps onto
/// `[0, scale]` regardless of its absolute time units; a single-event window
/// sits at position zero. Even columns carry `sin`, odd columns `cos`, with
/// the standard `10000^{2k/d}` frequency ladder.
pub fn sinusoidal_positions(times: &[f64], d_model: usize, scale: f64) -> Tensor {
    assert!(d_model % 2 == 0, "d_model must be even");
    let n = times.len();
    let span = if n > 1 { times[n - 1] - times[0] } else { 0.0 };
    let mut data = vec![0.0; n * d_model];
    for (i, &t) in times.iter().enumerate() {
        let pos = if span > 0.0 {
            (t - times[0]) / span * scale
        } else {
            0.0
        };
        for k in 0..d_model / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * k as f64 / d_model as f64);
            data[i * d_model + 2 * k] = (pos * freq).sin();
            data[i * d_model + 2 * k + 1] = (pos * freq).cos();
        }
    }
    Tensor::matrix(n, d_model, data)
}

/// A linear map's weights as tape variables.
#[derive(Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NdiffError> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }
}

/// One pre-norm transformer encoder layer's weights as tape variables.
#[derive(Clone, Copy)]
pub struct EncoderLayerVars {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub query: LinearVars,
    pub key: LinearVars,
    pub value: LinearVars,
    pub output: LinearVars,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub ff1: LinearVars,
    pub ff2: LinearVars,
}

/// Pre-norm multi-head self-attention stack over the full history window
/// (bidirectional, no causal mask). Deterministic given weights.
pub fn attention_encoder(
    tape: &mut Tape,
    mut x: Var,
    layers: &[EncoderLayerVars],
    heads: usize,
) -> Result<Var, NdiffError> {
    let d_model = tape.value(x).cols();
    assert!(
        heads >= 1 && d_model % heads == 0,
        "d_model must divide into heads"
    );
    let d_head = d_model / heads;
    for layer in layers {
        // Attention sublayer with residual.
        let normed = tape.layer_norm_rows(x, layer.ln1_gain, layer.ln1_bias)?;
        let q = layer.query.apply(tape, normed)?;
        let k = layer.key.apply(tape, normed)?;
        let v = layer.value.apply(tape, normed)?;
        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * d_head, (h + 1) * d_head);
            let qh = tape.slice_cols(q, lo, hi)?;
            let kh = tape.slice_cols(k, lo, hi)?;
            let vh = tape.slice_cols(v, lo, hi)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scaled = tape.scale(scores, 1.0 / (d_head as f64).sqrt());
            let attn = tape.softmax_rows(scaled)?;
            head_outputs.push(tape.matmul(attn, vh)?);
        }
        let merged = tape.concat_cols(&head_outputs)?;
        let projected = layer.output.apply(tape, merged)?;
        x = tape.add(x, projected)?;

        // Feed-forward sublayer with residual.
        let normed = tape.layer_norm_rows(x, layer.ln2_gain, layer.ln2_bias)?;
        let hidden = layer.ff1.apply(tape, normed)?;
        let activated = tape.softplus(hidden);
        let ff = layer.ff2.apply(tape, activated)?;
        x = tape.add(x, ff)?;
    }
    Ok(x)
}

/// Xavier-uniform matrix initialization.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut SplitRng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    Tensor::matrix(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndiff::gradcheck;

    #[test]
    fn positions_start_at_sin_cos_pattern() {
        let pe = sinusoidal_positions(&[3.0, 5.0, 9.0], 8, 100.0);
        // First event sits at position 0 → [0, 1, 0, 1, …].
        for k in 0..4 {
            assert_eq!(pe.at(0, 2 * k), 0.0);
            assert_eq!(pe.at(0, 2 * k + 1), 1.0);
        }
        for v in pe.data() {
            assert!(*v >= -1.0 && *v <= 1.0);
        }
    }

    #[test]
    fn single_event_window_uses_position_zero() {
        let pe = sinusoidal_positions(&[42.0], 4, 100.0);
        assert_eq!(pe.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn equally_spaced_times_match_index_encoding() {
        // With scale n-1, normalized equal-spaced times land on integer
        // positions, coinciding with an index-based encoding.
        let times: Vec<f64> = (0..6).map(|i| 10.0 + 3.5 * i as f64).collect();
        let by_time = sinusoidal_positions(&times, 16, (times.len() - 1) as f64);
        let indices: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let by_index = sinusoidal_positions(&indices, 16, (indices.len() - 1) as f64);
        for (a, b) in by_time.data().iter().zip(by_index.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn toy_layer(tape: &mut Tape, d: usize, d_hidden: usize, x: &[f64]) -> EncoderLayerVars {
        let mut idx = 0;
        let mut take = |n: usize| {
            let s = &x[idx..idx + n];
            idx += n;
            s.to_vec()
        };
        let mut linear = |tape: &mut Tape, rows: usize, cols: usize| LinearVars {
            weight: tape.leaf(Tensor::matrix(rows, cols, take(rows * cols))),
            bias: tape.leaf(Tensor::vector(take(cols))),
        };
        let query = linear(tape, d, d);
        let key = linear(tape, d, d);
        let value = linear(tape, d, d);
        let output = linear(tape, d, d);
        let ff1 = linear(tape, d, d_hidden);
        let ff2 = linear(tape, d_hidden, d);
        EncoderLayerVars {
            ln1_gain: tape.leaf(Tensor::filled(vec![d], 1.0)),
            ln1_bias: tape.leaf(Tensor::zeros(vec![d])),
            query,
            key,
            value,
            output,
            ln2_gain: tape.leaf(Tensor::filled(vec![d], 1.0)),
            ln2_bias: tape.leaf(Tensor::zeros(vec![d])),
            ff1,
            ff2,
        }
    }

    #[test]
    fn single_event_attention_is_finite_and_shaped() {
        let d = 4;
        let mut rng = crate::rng::SplitRng::new(3);
        let weights: Vec<f64> = (0..4 * (d * d + d) + (d * 8 + 8) + (8 * d + d))
            .map(|_| rng.uniform_in(-0.4, 0.4))
            .collect();
        let mut tape = Tape::new();
        let layer = toy_layer(&mut tape, d, 8, &weights);
        let x = tape.constant(Tensor::matrix(1, d, vec![0.2, -0.1, 0.4, 0.9]));
        let out = attention_encoder(&mut tape, x, &[layer], 2).unwrap();
        let v = tape.value(out);
        assert_eq!(v.shape(), &[1, d]);
        assert!(v.all_finite());
    }

    #[test]
    fn permuting_rows_with_their_encodings_permutes_outputs() {
        let d = 4;
        let mut rng = crate::rng::SplitRng::new(5);
        let weights: Vec<f64> = (0..4 * (d * d + d) + (d * 8 + 8) + (8 * d + d))
            .map(|_| rng.uniform_in(-0.4, 0.4))
            .collect();
        // Embedded rows already carry their positional encodings; permuting
        // whole rows must permute outputs identically (self-attention is
        // permutation-equivariant).
        let rows = [
            vec![0.3, 0.1, -0.2, 0.5],
            vec![-0.4, 0.2, 0.9, 0.0],
            vec![0.7, -0.6, 0.1, 0.3],
        ];
        let run = |order: &[usize]| -> Vec<f64> {
            let mut tape = Tape::new();
            let layer = toy_layer(&mut tape, d, 8, &weights);
            let data: Vec<f64> = order.iter().flat_map(|&i| rows[i].clone()).collect();
            let x = tape.constant(Tensor::matrix(3, d, data));
            let out = attention_encoder(&mut tape, x, &[layer], 2).unwrap();
            tape.value(out).data().to_vec()
        };
        let base = run(&[0, 1, 2]);
        let permuted = run(&[2, 0, 1]);
        for j in 0..d {
            assert!((base[j] - permuted[d + j]).abs() < 1e-12);
            assert!((base[d + j] - permuted[2 * d + j]).abs() < 1e-12);
            assert!((base[2 * d + j] - permuted[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        // Two events, d_model = 8, one layer; gradient w.r.t. a probe subset
        // of weights and the inputs.
        let d = 8;
        let dh = 8;
        let n_weights = 4 * (d * d + d) + (d * dh + dh) + (dh * d + d);
        let mut rng = crate::rng::SplitRng::new(11);
        let base: Vec<f64> = (0..n_weights + 2 * d)
            .map(|_| rng.uniform_in(-0.3, 0.3))
            .collect();
        let f = |x: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let layer = toy_layer(&mut tape, d, dh, &x[..n_weights]);
            let inp = tape.leaf(Tensor::matrix(2, d, x[n_weights..].to_vec()));
            let out = attention_encoder(&mut tape, inp, &[layer], 2).unwrap();
            let pooled = tape.mean_rows(out).unwrap();
            let sm = tape.softmax_rows(pooled).unwrap();
            let picked = tape.slice_cols(sm, 0, 3).unwrap();
            let s = tape.sum_all(picked);
            tape.value(s).item()
        };
        let analytic = {
            let mut tape = Tape::new();
            let layer = toy_layer(&mut tape, d, dh, &base[..n_weights]);
            let inp = tape.leaf(Tensor::matrix(2, d, base[n_weights..].to_vec()));
            let out = attention_encoder(&mut tape, inp, &[layer], 2).unwrap();
            let pooled = tape.mean_rows(out).unwrap();
            let sm = tape.softmax_rows(pooled).unwrap();
            let picked = tape.slice_cols(sm, 0, 3).unwrap();
            let s = tape.sum_all(picked);
            let grads = tape.backward(s).unwrap();
            let mut flat = grads.get(layer.query.weight).unwrap().data().to_vec();
            flat.extend(grads.get(layer.ff1.weight).unwrap().data());
            flat.extend(grads.get(inp).unwrap().data());
            flat
        };
        // Finite differences on matching coordinates: query weight block,
        // ff1 weight block, and the inputs.
        let query_offset = 0;
        let ff1_offset = 4 * (d * d + d);
        let mut fd = Vec::new();
        let mut probe = base.clone();
        let mut push_fd = |range: std::ops::Range<usize>, probe: &mut Vec<f64>| {
            for i in range {
                let h = 1e-5 * probe[i].abs().max(1.0);
                let orig = probe[i];
                probe[i] = orig + h;
                let fp = f(probe);
                probe[i] = orig - h;
                let fm = f(probe);
                probe[i] = orig;
                fd.push((fp - fm) / (2.0 * h));
            }
        };
        push_fd(query_offset..query_offset + d * d, &mut probe);
        push_fd(ff1_offset..ff1_offset + d * dh, &mut probe);
        push_fd(n_weights..n_weights + 2 * d, &mut probe);
        let err = gradcheck::max_relative_error(&analytic, &fd);
        assert!(err < 1e-3, "rel err {err}");
    }
}
