use crate::nn::{dot, softmax, GruCache};

use super::{ModelError, ModelParams};

/// Encoder output for one source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    /// Right-to-left states, `backward[i] = f_bwd(x_i, backward[i + 1])`.
    pub backward: Vec<Vec<f64>>,
    /// Left-to-right states, `forward[i] = f_fwd(x_i, forward[i - 1])`.
    pub forward: Vec<Vec<f64>>,
    /// `h[i] = [backward[i]; forward[i]]`.
    pub h: Vec<Vec<f64>>,
    /// Source-side half of the attention network's first layer, plus its
    /// bias, precomputed per position.
    pub(crate) keys: Vec<Vec<f64>>,
}

impl EncoderStates {
    pub fn new(params: &ModelParams, backward: Vec<Vec<f64>>, forward: Vec<Vec<f64>>) -> Self {
        let d = params.hidden_dim();
        let h: Vec<Vec<f64>> = backward
            .iter()
            .zip(&forward)
            .map(|(b, f)| {
                let mut v = Vec::with_capacity(2 * d);
                v.extend_from_slice(b);
                v.extend_from_slice(f);
                v
            })
            .collect();
        let att = &params.attention;
        let keys = h
            .iter()
            .map(|hi| {
                let mut k = att.b1.data().to_vec();
                att.w1.matvec_cols_add(d, hi, &mut k);
                k
            })
            .collect();
        EncoderStates {
            backward,
            forward,
            h,
            keys,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

pub(crate) struct EncoderCache {
    pub fwd: Vec<GruCache>,
    pub bwd: Vec<GruCache>,
}

pub(crate) fn check_ids(ids: &[usize], size: usize, side: &'static str) -> Result<(), ModelError> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(ModelError::IdOutOfRange { side, id, size }),
        None => Ok(()),
    }
}

pub(crate) fn encode_cached(
    params: &ModelParams,
    source: &[usize],
) -> Result<(EncoderStates, EncoderCache), ModelError> {
    if source.is_empty() {
        return Err(ModelError::EmptySource);
    }
    check_ids(source, params.src_vocab_size(), "source")?;
    let d = params.hidden_dim();
    let l = source.len();

    let mut fwd_states = Vec::with_capacity(l);
    let mut fwd_cache = Vec::with_capacity(l);
    let mut h = vec![0.0; d];
    for &x in source {
        let (next, cache) = params.encoder_fwd.forward(params.src_embedding.row(x), &h);
        fwd_cache.push(cache);
        fwd_states.push(next.clone());
        h = next;
    }

    let mut bwd_states = vec![Vec::new(); l];
    let mut bwd_cache: Vec<Option<GruCache>> = (0..l).map(|_| None).collect();
    let mut h = vec![0.0; d];
    for i in (0..l).rev() {
        let (next, cache) = params
            .encoder_bwd
            .forward(params.src_embedding.row(source[i]), &h);
        bwd_cache[i] = Some(cache);
        bwd_states[i] = next.clone();
        h = next;
    }

    let states = EncoderStates::new(params, bwd_states, fwd_states);
    let cache = EncoderCache {
        fwd: fwd_cache,
        bwd: bwd_cache.into_iter().map(Option::unwrap).collect(),
    };
    Ok((states, cache))
}

/// Runs both encoder GRUs over the source ids.
pub fn encode(params: &ModelParams, source: &[usize]) -> Result<EncoderStates, ModelError> {
    encode_cached(params, source).map(|(s, _)| s)
}

/// `s_0 = tanh(W_s h_bwd_1)`.
pub fn initial_state(params: &ModelParams, enc: &EncoderStates) -> Vec<f64> {
    let mut s = vec![0.0; params.hidden_dim()];
    params.init_w.matvec_add(&enc.backward[0], &mut s);
    s.iter_mut().for_each(|v| *v = v.tanh());
    s
}

pub(crate) struct AttentionCache {
    /// tanh activations of the first layer, per source position.
    pub hidden: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
}

pub(crate) fn attend_cached(
    params: &ModelParams,
    s_prime: &[f64],
    enc: &EncoderStates,
    mask: Option<&[bool]>,
) -> Result<AttentionCache, ModelError> {
    let att = &params.attention;
    let d = params.hidden_dim();
    let mut query = vec![0.0; att.hidden_size()];
    att.w1.matvec_cols_add(0, s_prime, &mut query);
    let w2 = att.w2.row(0);
    let b2 = att.b2.data()[0];

    let l = enc.len();
    let mut hidden = Vec::with_capacity(l);
    let mut scores = vec![0.0; l];
    for i in 0..l {
        if mask.is_some_and(|m| !m[i]) {
            hidden.push(Vec::new());
            continue;
        }
        let hid: Vec<f64> = query
            .iter()
            .zip(&enc.keys[i])
            .map(|(q, k)| (q + k).tanh())
            .collect();
        scores[i] = dot(w2, &hid) + b2;
        hidden.push(hid);
    }
    let alpha = softmax(&scores, mask)?;
    let mut context = vec![0.0; 2 * d];
    for (a, hi) in alpha.iter().zip(&enc.h) {
        if *a != 0.0 {
            crate::nn::axpy(*a, hi, &mut context);
        }
    }
    Ok(AttentionCache {
        hidden,
        alpha,
        context,
    })
}

/// Alignment weights `α_t` and context `H_t = Σ_i α_{t,i} h_i` for the
/// intermediate state `s'_t`. Masked positions receive exactly zero weight.
pub fn attend(
    params: &ModelParams,
    s_prime: &[f64],
    enc: &EncoderStates,
    mask: Option<&[bool]>,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if let Some(m) = mask {
        if m.len() != enc.len() {
            return Err(crate::nn::NnError::ShapeMismatch {
                expected: enc.len(),
                found: m.len(),
                context: "attention mask",
            }
            .into());
        }
    }
    let c = attend_cached(params, s_prime, enc, mask)?;
    Ok((c.alpha, c.context))
}

/// Everything one decoder step computes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStepState {
    pub s_prime: Vec<f64>,
    pub s: Vec<f64>,
    pub context: Vec<f64>,
    pub alpha: Vec<f64>,
    pub probs: Vec<f64>,
}

pub(crate) struct StepCache {
    pub u: GruCache,
    pub attention: AttentionCache,
    pub q: GruCache,
    pub readout: crate::nn::Feedforward2Cache,
    pub readout_out: Vec<f64>,
    pub logits: Vec<f64>,
}

pub(crate) fn step_cached(
    params: &ModelParams,
    s_prev: &[f64],
    y_prev: usize,
    enc: &EncoderStates,
    mask: Option<&[bool]>,
) -> Result<(Vec<f64>, StepCache), ModelError> {
    let emb = params.tgt_embedding.row(y_prev);
    let (s_prime, u) = params.decoder_u.forward(emb, s_prev);
    let attention = attend_cached(params, &s_prime, enc, mask)?;
    let (s, q) = params.decoder_q.forward(&attention.context, &s_prime);

    let mut g_in = Vec::with_capacity(params.readout.input_size());
    g_in.extend_from_slice(&s);
    g_in.extend_from_slice(emb);
    g_in.extend_from_slice(&attention.context);
    let (readout_out, readout) = params.readout.forward(&g_in);
    let mut logits = params.output_b.data().to_vec();
    params.output_w.matvec_add(&readout_out, &mut logits);
    Ok((
        s,
        StepCache {
            u,
            attention,
            q,
            readout,
            readout_out,
            logits,
        },
    ))
}

/// One decoder step from `s_{t-1}` and the previous target word.
pub fn decoder_step(
    params: &ModelParams,
    s_prev: &[f64],
    y_prev: usize,
    enc: &EncoderStates,
    mask: Option<&[bool]>,
) -> Result<DecoderStepState, ModelError> {
    check_ids(&[y_prev], params.tgt_vocab_size(), "target")?;
    if s_prev.len() != params.hidden_dim() {
        return Err(crate::nn::NnError::ShapeMismatch {
            expected: params.hidden_dim(),
            found: s_prev.len(),
            context: "decoder state",
        }
        .into());
    }
    let (s, cache) = step_cached(params, s_prev, y_prev, enc, mask)?;
    let probs = softmax(&cache.logits, None)?;
    Ok(DecoderStepState {
        // q consumed s'_t as its previous state
        s_prime: cache.q.h_prev.clone(),
        s,
        context: cache.attention.context,
        alpha: cache.attention.alpha,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BOS;
    use crate::model::ModelConfig;
    use crate::nn::{feedforward2, gru_step, ParamSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embedding_dim: 5,
            hidden_dim: 4,
            attention_hidden: 3,
            readout_hidden: 6,
            src_vocab_size: 9,
            tgt_vocab_size: 7,
            max_decode_len: 10,
        }
    }

    fn random_params(seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::init_with_scale(&tiny_config(), 0.5, &mut rng).unwrap();
        // non-zero biases so they are exercised too
        for t in p.tensors_mut() {
            if t.shape().len() == 1 {
                for v in t.data_mut() {
                    *v = rng.gen_range(-0.3..0.3);
                }
            }
        }
        p
    }

    #[test]
    fn zero_params_give_zero_encoder_states() {
        let p = ModelParams::zeros(&tiny_config());
        let enc = encode(&p, &[4, 5, 6]).unwrap();
        assert_eq!(enc.len(), 3);
        for h in &enc.h {
            assert_eq!(h.len(), 8);
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encoder_rejects_bad_input() {
        let p = ModelParams::zeros(&tiny_config());
        assert_eq!(encode(&p, &[]), Err(ModelError::EmptySource));
        assert!(matches!(
            encode(&p, &[4, 9]),
            Err(ModelError::IdOutOfRange { id: 9, .. })
        ));
    }

    #[test]
    fn encoder_matches_gru_oracle_and_bracket_order() {
        let p = random_params(1);
        let src = [4, 7, 5, 8];
        let enc = encode(&p, &src).unwrap();
        let d = 4;
        let mut f = vec![0.0; d];
        let mut fwd = Vec::new();
        for &x in &src {
            f = gru_step(&p.encoder_fwd, p.src_embedding.row(x), &f).unwrap();
            fwd.push(f.clone());
        }
        let mut b = vec![0.0; d];
        let mut bwd = vec![Vec::new(); 4];
        for i in (0..4).rev() {
            b = gru_step(&p.encoder_bwd, p.src_embedding.row(src[i]), &b).unwrap();
            bwd[i] = b.clone();
        }
        for i in 0..4 {
            assert_eq!(&enc.h[i][..d], bwd[i].as_slice());
            assert_eq!(&enc.h[i][d..], fwd[i].as_slice());
        }
    }

    #[test]
    fn perturbing_a_later_word_leaves_earlier_forward_states() {
        let p = random_params(2);
        let a = encode(&p, &[4, 5, 6, 7]).unwrap();
        let b = encode(&p, &[4, 5, 8, 7]).unwrap();
        assert_eq!(a.forward[0], b.forward[0]);
        assert_eq!(a.forward[1], b.forward[1]);
        assert_ne!(a.forward[2], b.forward[2]);
        assert_eq!(a.backward[3], b.backward[3]);
        assert_ne!(a.backward[2], b.backward[2]);
        assert_ne!(a.backward[0], b.backward[0]);
    }

    #[test]
    fn zero_attention_network_averages_states() {
        let mut p = random_params(3);
        p.attention = crate::nn::Feedforward2Params::zeros(12, 3, 1);
        let enc = encode(&p, &[4, 5, 6]).unwrap();
        let (alpha, ctx) = attend(&p, &[0.1, 0.2, 0.3, 0.4], &enc, None).unwrap();
        for a in &alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        for k in 0..8 {
            let mean = enc.h.iter().map(|h| h[k]).sum::<f64>() / 3.0;
            assert!((ctx[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn single_position_attention_is_trivial() {
        let p = random_params(4);
        let enc = encode(&p, &[6]).unwrap();
        let (alpha, ctx) = attend(&p, &[0.5, -0.5, 0.1, 0.0], &enc, None).unwrap();
        assert_eq!(alpha, vec![1.0]);
        assert_eq!(ctx, enc.h[0]);
    }

    #[test]
    fn attention_matches_direct_summation() {
        let p = random_params(5);
        let enc = encode(&p, &[4, 5, 6, 7, 8]).unwrap();
        let s_prime = [0.3, -0.1, 0.7, 0.2];
        let (alpha, ctx) = attend(&p, &s_prime, &enc, None).unwrap();
        // oracle: r on the explicit concatenation, then softmax and weighted sums
        let scores: Vec<f64> = enc
            .h
            .iter()
            .map(|h| {
                let mut x = s_prime.to_vec();
                x.extend_from_slice(h);
                feedforward2(&p.attention, &x).unwrap()[0]
            })
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let want_alpha: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (a, w) in alpha.iter().zip(&want_alpha) {
            assert!((a - w).abs() < 1e-10);
        }
        for k in 0..4 {
            let bwd: f64 = (0..5).map(|i| want_alpha[i] * enc.backward[i][k]).sum();
            let fwd: f64 = (0..5).map(|i| want_alpha[i] * enc.forward[i][k]).sum();
            assert!((ctx[k] - bwd).abs() < 1e-10);
            assert!((ctx[4 + k] - fwd).abs() < 1e-10);
        }
    }

    #[test]
    fn masked_positions_get_zero_weight() {
        let p = random_params(6);
        let real = encode(&p, &[4, 5]).unwrap();
        let mut padded = real.clone();
        // garbage padding rows
        padded.h.push(vec![9.0; 8]);
        padded.keys.push(vec![9.0; 3]);
        let s_prime = [0.2, 0.1, -0.4, 0.3];
        let (a_real, c_real) = attend(&p, &s_prime, &real, None).unwrap();
        let (a_pad, c_pad) = attend(&p, &s_prime, &padded, Some(&[true, true, false])).unwrap();
        assert_eq!(a_pad[2], 0.0);
        assert_eq!(&a_pad[..2], a_real.as_slice());
        assert_eq!(c_pad, c_real);
        assert!(matches!(
            attend(&p, &s_prime, &real, Some(&[false, false])),
            Err(ModelError::Nn(crate::nn::NnError::FullyMasked))
        ));
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let p = ModelParams::zeros(&tiny_config());
        let enc = encode(&p, &[4, 5]).unwrap();
        let st = decoder_step(&p, &initial_state(&p, &enc), BOS, &enc, None).unwrap();
        for pr in &st.probs {
            assert!((pr - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_matches_composition_of_primitives() {
        let p = random_params(7);
        let enc = encode(&p, &[4, 6, 8]).unwrap();
        let s0 = initial_state(&p, &enc);
        let st = decoder_step(&p, &s0, 5, &enc, None).unwrap();

        let emb = p.tgt_embedding.row(5);
        let s_prime = gru_step(&p.decoder_u, emb, &s0).unwrap();
        let (alpha, ctx) = attend(&p, &s_prime, &enc, None).unwrap();
        let s = gru_step(&p.decoder_q, &ctx, &s_prime).unwrap();
        let mut g_in = s.clone();
        g_in.extend_from_slice(emb);
        g_in.extend_from_slice(&ctx);
        let ro = feedforward2(&p.readout, &g_in).unwrap();
        let logits: Vec<f64> = (0..7)
            .map(|v| {
                p.output_b.data()[v] + (0..6).map(|k| p.output_w.row(v)[k] * ro[k]).sum::<f64>()
            })
            .collect();
        let probs = softmax(&logits, None).unwrap();

        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-10);
        assert!(close(&st.s_prime, &s_prime));
        assert!(close(&st.alpha, &alpha));
        assert!(close(&st.s, &s));
        assert!(close(&st.probs, &probs));
        assert!((st.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn step_rejects_invalid_previous_word() {
        let p = random_params(8);
        let enc = encode(&p, &[4]).unwrap();
        assert!(decoder_step(&p, &[0.0; 4], 7, &enc, None).is_err());
        assert!(decoder_step(&p, &[0.0; 3], 4, &enc, None).is_err());
    }

    /// Permute the two halves of every `h_i` and the matching weight columns
    /// of every consumer of `h_i` / `H_t`: alignments and outputs must not move.
    #[test]
    fn swapping_encoder_halves_is_consistent() {
        let p = random_params(9);
        let d = 4;
        let enc = encode(&p, &[4, 5, 6, 7]).unwrap();
        let swap_cols = |t: &mut crate::nn::Tensor, offset: usize| {
            for r in 0..t.rows() {
                let row = t.row_mut(r);
                for k in 0..d {
                    row.swap(offset + k, offset + d + k);
                }
            }
        };
        let mut q = p.clone();
        swap_cols(&mut q.attention.w1, d);
        for w in [
            &mut q.decoder_q.w_z,
            &mut q.decoder_q.w_r,
            &mut q.decoder_q.w_h,
        ] {
            swap_cols(w, 0);
        }
        swap_cols(&mut q.readout.w1, d + 5);
        let swapped = EncoderStates::new(&q, enc.forward.clone(), enc.backward.clone());

        let s0 = initial_state(&p, &enc);
        let a = decoder_step(&p, &s0, 5, &enc, None).unwrap();
        let b = decoder_step(&q, &s0, 5, &swapped, None).unwrap();
        for (x, y) in a.alpha.iter().zip(&b.alpha) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(&a.context[..d], &b.context[d..]);
    }
}
