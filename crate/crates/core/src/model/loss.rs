//! Teacher-forced negative log-likelihood and its gradient.

use crate::corpus::{SentencePair, BOS, EOS};
use crate::nn::{axpy, log_softmax_at, softmax, softmax_backward, ParamSet};

use super::forward::{check_ids, encode_cached, initial_state, step_cached, StepCache};
use super::{ModelError, ModelParams};

/// Number of predicted tokens for a pair: the target words plus EOS.
pub fn token_count(pair: &SentencePair) -> usize {
    pair.target.len() + 1
}

fn decoder_inputs(pair: &SentencePair) -> (Vec<usize>, Vec<usize>) {
    let mut prev = Vec::with_capacity(pair.target.len() + 1);
    prev.push(BOS);
    prev.extend_from_slice(&pair.target);
    let mut gold = pair.target.clone();
    gold.push(EOS);
    (prev, gold)
}

/// `-Σ_t log p(y*_t | h, y*_<t)` over the target followed by EOS.
pub fn sentence_nll(params: &ModelParams, pair: &SentencePair) -> Result<f64, ModelError> {
    check_ids(&pair.target, params.tgt_vocab_size(), "target")?;
    let (enc, _) = encode_cached(params, &pair.source)?;
    let (prev, gold) = decoder_inputs(pair);
    let mut s = initial_state(params, &enc);
    let mut loss = 0.0;
    for (&y_prev, &y) in prev.iter().zip(&gold) {
        let (next, cache) = step_cached(params, &s, y_prev, &enc, None)?;
        loss -= log_softmax_at(&cache.logits, y);
        s = next;
    }
    Ok(loss)
}

/// Computes the sentence loss and adds its gradient into `grads`.
pub fn sentence_nll_grad(
    params: &ModelParams,
    pair: &SentencePair,
    grads: &mut ModelParams,
) -> Result<f64, ModelError> {
    check_ids(&pair.target, params.tgt_vocab_size(), "target")?;
    let d = params.hidden_dim();
    let e = params.embedding_dim();
    let (enc, enc_cache) = encode_cached(params, &pair.source)?;
    let (prev, gold) = decoder_inputs(pair);
    let l = enc.len();

    let s0 = initial_state(params, &enc);
    let mut s = s0.clone();
    let mut steps: Vec<StepCache> = Vec::with_capacity(gold.len());
    let mut loss = 0.0;
    for (&y_prev, &y) in prev.iter().zip(&gold) {
        let (next, cache) = step_cached(params, &s, y_prev, &enc, None)?;
        loss -= log_softmax_at(&cache.logits, y);
        steps.push(cache);
        s = next;
    }

    let mut dh = vec![vec![0.0; 2 * d]; l];
    let mut dkeys = vec![vec![0.0; params.attention.hidden_size()]; l];
    let mut ds_next = vec![0.0; d];
    let att = &params.attention;
    let w2 = att.w2.row(0);

    for t in (0..steps.len()).rev() {
        let c = &steps[t];
        let y_prev = prev[t];

        let mut dlogits = softmax(&c.logits, None)?;
        dlogits[gold[t]] -= 1.0;
        grads.output_w.add_outer(0, &dlogits, &c.readout_out);
        axpy(1.0, &dlogits, grads.output_b.data_mut());
        let mut dro = vec![0.0; params.readout.output_size()];
        params.output_w.matvec_t_add(&dlogits, &mut dro);

        let mut dg_in = vec![0.0; params.readout.input_size()];
        params
            .readout
            .backward(&c.readout, &dro, &mut grads.readout, &mut dg_in);
        let mut ds = dg_in[..d].to_vec();
        axpy(1.0, &ds_next, &mut ds);
        let mut demb = dg_in[d..d + e].to_vec();
        let mut dcontext = dg_in[d + e..].to_vec();

        let mut ds_prime = vec![0.0; d];
        params.decoder_q.backward(
            &c.q,
            &ds,
            &mut grads.decoder_q,
            &mut dcontext,
            &mut ds_prime,
        );

        // attention: H = Σ α_i h_i, α = softmax(r(s', h_i))
        let a = &c.attention;
        let dalpha: Vec<f64> = enc
            .h
            .iter()
            .map(|hi| crate::nn::dot(&dcontext, hi))
            .collect();
        for i in 0..l {
            axpy(a.alpha[i], &dcontext, &mut dh[i]);
        }
        let dscores = softmax_backward(&a.alpha, &dalpha);
        let mut dquery = vec![0.0; att.hidden_size()];
        for i in 0..l {
            let de = dscores[i];
            if de == 0.0 {
                continue;
            }
            let hid = &a.hidden[i];
            axpy(de, hid, grads.attention.w2.data_mut());
            grads.attention.b2.data_mut()[0] += de;
            for k in 0..hid.len() {
                let dpre = de * w2[k] * (1.0 - hid[k] * hid[k]);
                dquery[k] += dpre;
                dkeys[i][k] += dpre;
            }
        }
        let s_prime = &c.q.h_prev;
        grads.attention.w1.add_outer(0, &dquery, s_prime);
        att.w1.matvec_t_cols_add(0, &dquery, &mut ds_prime);

        let mut ds_prev = vec![0.0; d];
        params.decoder_u.backward(
            &c.u,
            &ds_prime,
            &mut grads.decoder_u,
            &mut demb,
            &mut ds_prev,
        );
        axpy(1.0, &demb, grads.tgt_embedding.row_mut(y_prev));
        ds_next = ds_prev;
    }

    // s_0 = tanh(W_s h_bwd_1)
    let dpre: Vec<f64> = ds_next
        .iter()
        .zip(&s0)
        .map(|(g, s)| g * (1.0 - s * s))
        .collect();
    grads.init_w.add_outer(0, &dpre, &enc.backward[0]);
    let mut dbwd0 = vec![0.0; d];
    params.init_w.matvec_t_add(&dpre, &mut dbwd0);
    axpy(1.0, &dbwd0, &mut dh[0][..d]);

    // precomputed attention keys: W1[:, d..] h_i + b1
    for i in 0..l {
        grads.attention.w1.add_outer(d, &dkeys[i], &enc.h[i]);
        axpy(1.0, &dkeys[i], grads.attention.b1.data_mut());
        att.w1.matvec_t_cols_add(d, &dkeys[i], &mut dh[i]);
    }

    let mut carry = vec![0.0; d];
    for i in (0..l).rev() {
        let mut dstate = dh[i][d..].to_vec();
        axpy(1.0, &carry, &mut dstate);
        let mut dx = vec![0.0; e];
        let mut dprev = vec![0.0; d];
        params.encoder_fwd.backward(
            &enc_cache.fwd[i],
            &dstate,
            &mut grads.encoder_fwd,
            &mut dx,
            &mut dprev,
        );
        axpy(1.0, &dx, grads.src_embedding.row_mut(pair.source[i]));
        carry = dprev;
    }
    let mut carry = vec![0.0; d];
    for i in 0..l {
        let mut dstate = dh[i][..d].to_vec();
        axpy(1.0, &carry, &mut dstate);
        let mut dx = vec![0.0; e];
        let mut dprev = vec![0.0; d];
        params.encoder_bwd.backward(
            &enc_cache.bwd[i],
            &dstate,
            &mut grads.encoder_bwd,
            &mut dx,
            &mut dprev,
        );
        axpy(1.0, &dx, grads.src_embedding.row_mut(pair.source[i]));
        carry = dprev;
    }

    Ok(loss)
}

/// Mean sentence loss over `pairs`; `grads` receives the gradient of that
/// mean. Sentences are accumulated in input order.
pub fn batch_nll_grad(
    params: &ModelParams,
    pairs: &[SentencePair],
    grads: &mut ModelParams,
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pair in pairs {
        total += sentence_nll_grad(params, pair, grads)?;
    }
    let n = pairs.len() as f64;
    grads.scale_all(1.0 / n);
    Ok(total / n)
}
