use crate::corpus::{Segment, TokenId};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

use super::params::LstmParams;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(d_h: usize) -> Self {
        LstmState {
            h: vec![0.0; d_h],
            c: vec![0.0; d_h],
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m · v` for row-major `m` with `v.len()` columns.
#[inline]
pub(crate) fn gemv_acc(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// In-place softmax; returns `ln Σ exp(x)` of the input.
pub(crate) fn softmax_in_place(x: &mut [f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    x.iter_mut().for_each(|v| *v *= inv);
    max + sum.ln()
}

/// Gate activations for one step, written into `gates` as `[i, f, o, c~]`, with the new state.
#[inline]
pub(crate) fn cell_update(pre: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let d = c.len();
    let (i_f, o_g) = pre.split_at_mut(2 * d);
    let (ig, fg) = i_f.split_at_mut(d);
    let (og, gg) = o_g.split_at_mut(d);
    for k in 0..d {
        ig[k] = sigmoid(ig[k]);
        fg[k] = sigmoid(fg[k]);
        og[k] = sigmoid(og[k]);
        gg[k] = gg[k].tanh();
        c[k] = fg[k] * c_prev[k] + ig[k] * gg[k];
        tanh_c[k] = c[k].tanh();
        h[k] = og[k] * tanh_c[k];
    }
}

/// One recurrence step on an explicit embedding vector. Returns the new state and the
/// next-word distribution `softmax(U_s h + b_s)`.
pub fn lstm_step(params: &LstmParams, state: &LstmState, e: &[f64]) -> Result<(LstmState, Vec<f64>)> {
    let d = params.dims();
    if e.len() != d.d_in || state.h.len() != d.d_h || state.c.len() != d.d_h {
        return Err(Error::Dimension(format!(
            "step expects input {} and state {}, got {} and {}/{}",
            d.d_in,
            d.d_h,
            e.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    if !e.iter().chain(&state.h).chain(&state.c).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("lstm_step input"));
    }
    let mut pre = params.b_stacked().to_vec();
    gemv_acc(params.w_stacked(), e, &mut pre);
    gemv_acc(params.u_stacked(), &state.h, &mut pre);
    let mut next = LstmState::zeros(d.d_h);
    let mut tanh_c = vec![0.0; d.d_h];
    cell_update(&mut pre, &state.c, &mut next.c, &mut tanh_c, &mut next.h);
    let mut p = params.bs().to_vec();
    gemv_acc(params.us(), &next.h, &mut p);
    softmax_in_place(&mut p);
    if !p.iter().chain(&next.h).chain(&next.c).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("lstm_step output"));
    }
    Ok((next, p))
}

/// Recurrent state plus the token still to be fed in. A fresh carry holds the zero state and
/// the pad id, whose zero embedding acts as the start-of-text input, so the first prediction
/// is the model's unconditional word distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Carry {
    pub state: LstmState,
    pub next_input: TokenId,
}

impl Carry {
    pub fn start(d_h: usize, pad_id: TokenId) -> Self {
        Carry {
            state: LstmState::zeros(d_h),
            next_input: pad_id,
        }
    }
}

/// Input projections `W e + b` precomputed for every embedding row. Embeddings are frozen, so
/// this is exact and turns the per-token input product into a lookup.
pub struct Projected<'a> {
    pub(crate) params: &'a LstmParams,
    pub(crate) proj: Vec<f64>,
    pub(crate) pad_id: TokenId,
}

impl<'a> Projected<'a> {
    pub fn new(params: &'a LstmParams, embeddings: &EmbeddingTable) -> Result<Self> {
        let d = params.dims();
        if embeddings.dim() != d.d_in {
            return Err(Error::Dimension(format!(
                "embedding dim {} vs model input {}",
                embeddings.dim(),
                d.d_in
            )));
        }
        if embeddings.rows() != d.d_out + 1 {
            return Err(Error::Dimension(format!(
                "embedding rows {} vs model output {} (+ pad)",
                embeddings.rows(),
                d.d_out
            )));
        }
        let g = 4 * d.d_h;
        let mut proj = Vec::with_capacity(embeddings.rows() * g);
        for r in 0..embeddings.rows() {
            let start = proj.len();
            proj.extend_from_slice(params.b_stacked());
            gemv_acc(params.w_stacked(), embeddings.row(r), &mut proj[start..start + g]);
        }
        Ok(Projected {
            params,
            proj,
            pad_id: (embeddings.rows() - 1) as TokenId,
        })
    }

    pub fn params(&self) -> &LstmParams {
        self.params
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn start(&self) -> Carry {
        Carry::start(self.params.dims().d_h, self.pad_id)
    }

    #[inline]
    pub(crate) fn input(&self, id: TokenId) -> &[f64] {
        let g = 4 * self.params.dims().d_h;
        &self.proj[id as usize * g..(id as usize + 1) * g]
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        let d_out = self.params.dims().d_out;
        match ids.iter().find(|&&t| t as usize >= d_out) {
            Some(&t) => Err(Error::TokenOutOfRange {
                id: t as usize,
                rows: d_out,
            }),
            None => Ok(()),
        }
    }

    /// Advances `carry` over `targets`, returning `-ln p_k[target_k]` for each position.
    pub fn nll(&self, targets: &[TokenId], carry: Carry) -> Result<(Vec<f64>, Carry)> {
        if targets.is_empty() {
            return Err(Error::Empty("sequence has no valid tokens"));
        }
        self.check_ids(targets)?;
        let d = self.params.dims();
        let Carry { mut state, mut next_input } = carry;
        let mut pre = vec![0.0; 4 * d.d_h];
        let mut c = vec![0.0; d.d_h];
        let mut tanh_c = vec![0.0; d.d_h];
        let mut logits = vec![0.0; d.d_out];
        let mut out = Vec::with_capacity(targets.len());
        for &target in targets {
            pre.copy_from_slice(self.input(next_input));
            gemv_acc(self.params.u_stacked(), &state.h, &mut pre);
            cell_update(&mut pre, &state.c, &mut c, &mut tanh_c, &mut state.h);
            std::mem::swap(&mut state.c, &mut c);
            logits.copy_from_slice(self.params.bs());
            gemv_acc(self.params.us(), &state.h, &mut logits);
            let lse = log_sum_exp(&logits);
            let nll = lse - logits[target as usize];
            if !nll.is_finite() {
                return Err(Error::NonFinite("sequence log-likelihood"));
            }
            out.push(nll);
            next_input = target;
        }
        Ok((out, Carry { state, next_input }))
    }

    /// Distribution of the word following `prefix`, fed from the start state.
    pub fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.check_ids(prefix)?;
        let d = self.params.dims();
        let mut state = LstmState::zeros(d.d_h);
        let mut pre = vec![0.0; 4 * d.d_h];
        let mut c = vec![0.0; d.d_h];
        let mut tanh_c = vec![0.0; d.d_h];
        for &input in std::iter::once(&self.pad_id).chain(prefix) {
            pre.copy_from_slice(self.input(input));
            gemv_acc(self.params.u_stacked(), &state.h, &mut pre);
            cell_update(&mut pre, &state.c, &mut c, &mut tanh_c, &mut state.h);
            std::mem::swap(&mut state.c, &mut c);
        }
        let mut p = self.params.bs().to_vec();
        gemv_acc(self.params.us(), &state.h, &mut p);
        softmax_in_place(&mut p);
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("next-word distribution"));
        }
        Ok(p)
    }
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-position negative log-likelihood of a segment's valid tokens. `init` defaults to the
/// start carry (zero state, start-of-text input).
pub fn sequence_nll(
    params: &LstmParams,
    segment: &Segment,
    embeddings: &EmbeddingTable,
    init: Option<Carry>,
) -> Result<(Vec<f64>, Carry)> {
    let model = Projected::new(params, embeddings)?;
    let carry = init.unwrap_or_else(|| model.start());
    model.nll(segment.valid(), carry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::lstm::params::{Block, Dims, Gate};

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_words((0..n).map(|i| format!("w{i}")).collect()).unwrap()
    }

    #[test]
    fn zero_params_give_uniform() {
        let p = LstmParams::zeros(Dims::new(3, 2, 7));
        let (s, probs) = lstm_step(&p, &LstmState::zeros(2), &[0.3, -1.0, 2.0]).unwrap();
        assert!(probs.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
        assert!(s.h.iter().chain(&s.c).all(|&x| x == 0.0));
    }

    /// Scalar evaluation of the six gate equations for d_in = 1, d_h = 2, d_out = 3.
    #[test]
    fn hand_computed_step() {
        let dims = Dims::new(1, 2, 3);
        let mut p = LstmParams::zeros(dims);
        let w = [[0.5, -0.3], [0.2, 0.1], [-0.4, 0.6], [0.3, 0.9]];
        let u = [
            [[0.1, 0.2], [0.0, -0.1]],
            [[0.3, 0.0], [0.2, 0.1]],
            [[-0.2, 0.1], [0.1, 0.4]],
            [[0.5, -0.5], [0.25, 0.0]],
        ];
        let b = [[0.0, 0.1], [1.0, 0.5], [0.0, -0.2], [0.05, 0.0]];
        for (gi, g) in Gate::ALL.into_iter().enumerate() {
            p.block_mut(Block::W(g)).copy_from_slice(&w[gi]);
            p.block_mut(Block::U(g)).copy_from_slice(&[u[gi][0][0], u[gi][0][1], u[gi][1][0], u[gi][1][1]]);
            p.block_mut(Block::B(g)).copy_from_slice(&b[gi]);
        }
        let us = [[1.0, -1.0], [0.5, 0.5], [-2.0, 0.0]];
        p.block_mut(Block::Us).copy_from_slice(&[1.0, -1.0, 0.5, 0.5, -2.0, 0.0]);
        p.block_mut(Block::Bs).copy_from_slice(&[0.1, 0.0, -0.1]);
        let bs = [0.1, 0.0, -0.1];
        let e = 0.7;
        let h0 = [0.2, -0.1];
        let c0 = [0.5, 0.3];
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let lin = |g: usize, k: usize| w[g][k] * e + u[g][k][0] * h0[0] + u[g][k][1] * h0[1] + b[g][k];
        let mut h1 = [0.0; 2];
        let mut c1 = [0.0; 2];
        for k in 0..2 {
            let i = sig(lin(0, k));
            let f = sig(lin(1, k));
            let o = sig(lin(2, k));
            let ct = lin(3, k).tanh();
            c1[k] = f * c0[k] + i * ct;
            h1[k] = o * c1[k].tanh();
        }
        let logits: Vec<f64> = (0..3).map(|j| us[j][0] * h1[0] + us[j][1] * h1[1] + bs[j]).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let expected: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();

        let state = LstmState { h: h0.to_vec(), c: c0.to_vec() };
        let (next, probs) = lstm_step(&p, &state, &[e]).unwrap();
        for k in 0..2 {
            assert!((next.h[k] - h1[k]).abs() < 1e-14);
            assert!((next.c[k] - c1[k]).abs() < 1e-14);
        }
        for j in 0..3 {
            assert!((probs[j] - expected[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = LstmParams::zeros(Dims::new(2, 2, 3));
        assert!(matches!(
            lstm_step(&p, &LstmState::zeros(2), &[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(lstm_step(&p, &LstmState::zeros(2), &[0.0]).is_err());
    }

    #[test]
    fn uniform_model_nll_is_ln_vocab() {
        let v = vocab(49);
        let emb = EmbeddingTable::random(&v, 4, 0);
        let p = LstmParams::zeros(Dims::new(4, 3, v.output_size()));
        let seg = Segment {
            token_ids: vec![1, 5, 9, 49, 2, 50, 50],
            valid_len: 5,
            article_id: "a".into(),
            position: 0,
        };
        let (nll, _) = sequence_nll(&p, &seg, &emb, None).unwrap();
        assert_eq!(nll.len(), 5);
        assert!(nll.iter().all(|&x| (x - 50f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn single_token_and_compositional_oracle() {
        let v = vocab(9);
        let emb = EmbeddingTable::random(&v, 3, 1);
        let p = LstmParams::init(Dims::new(3, 4, v.output_size()), 5);
        let tokens = [3u32, 0, 9, 7, 7];
        let seg = Segment {
            token_ids: tokens.to_vec(),
            valid_len: 5,
            article_id: "a".into(),
            position: 0,
        };
        let (nll, carry) = sequence_nll(&p, &seg, &emb, None).unwrap();

        // oracle: drive lstm_step by hand
        let mut state = LstmState::zeros(4);
        let mut input = v.pad_id();
        for (k, &t) in tokens.iter().enumerate() {
            let (next, probs) = lstm_step(&p, &state, emb.lookup(input).unwrap()).unwrap();
            assert!((nll[k] + probs[t as usize].ln()).abs() < 1e-12);
            state = next;
            input = t;
        }
        assert_eq!(carry.next_input, 7);
        for k in 0..4 {
            assert!((carry.state.h[k] - state.h[k]).abs() < 1e-12);
        }

        let one = Segment { valid_len: 1, ..seg.clone() };
        let (nll1, _) = sequence_nll(&p, &one, &emb, None).unwrap();
        assert_eq!(nll1.len(), 1);
        assert_eq!(nll1[0], nll[0]);
    }

    #[test]
    fn zero_valid_len_errors() {
        let v = vocab(3);
        let emb = EmbeddingTable::random(&v, 2, 1);
        let p = LstmParams::zeros(Dims::new(2, 2, v.output_size()));
        let seg = Segment { token_ids: vec![4, 4], valid_len: 0, article_id: "a".into(), position: 0 };
        assert!(sequence_nll(&p, &seg, &emb, None).is_err());
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let dims = Dims::new(2, 3, 4);
        let mut p = LstmParams::zeros(dims);
        p.block_mut(Block::B(Gate::Forget)).fill(1e3);
        let mut state = LstmState { h: vec![0.0; 3], c: vec![0.4, -1.2, 2.0] };
        for e in [[1.0, -2.0], [0.5, 0.5], [-3.0, 0.0]] {
            let (next, _) = lstm_step(&p, &state, &e).unwrap();
            assert_eq!(next.c, state.c);
            state = next;
        }
    }
}
