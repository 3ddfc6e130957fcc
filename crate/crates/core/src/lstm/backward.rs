use rayon::prelude::*;

use crate::corpus::{Segment, TokenId};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

use super::forward::{cell_update, gemv_acc, Projected};
use super::params::LstmParams;

/// Segments per parallel work unit. Fixed so the summation order, and hence every bit of the
/// gradient, does not depend on the thread count.
const CHUNK: usize = 16;

/// Partial sums for a group of segments. Input-matrix gradients are kept per embedding row and
/// only multiplied out once per batch.
struct Accum {
    grad: LstmParams,
    dz_rows: Vec<f64>,
    nll_sum: f64,
    tokens: usize,
}

impl Accum {
    fn new(model: &Projected<'_>) -> Self {
        let d = model.params().dims();
        Accum {
            grad: LstmParams::zeros(d),
            dz_rows: vec![0.0; model.proj.len()],
            nll_sum: 0.0,
            tokens: 0,
        }
    }

    fn merge(&mut self, other: Accum) {
        self.grad.add_assign(&other.grad);
        for (a, b) in self.dz_rows.iter_mut().zip(&other.dz_rows) {
            *a += b;
        }
        self.nll_sum += other.nll_sum;
        self.tokens += other.tokens;
    }
}

/// Forward activations of one sequence, kept for the backward sweep.
struct Tape {
    inputs: Vec<TokenId>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_tape(model: &Projected<'_>, targets: &[TokenId], tape: &mut Tape) -> f64 {
    let d = model.params().dims();
    let (dh, g4, n) = (d.d_h, 4 * d.d_h, targets.len());
    tape.inputs.clear();
    tape.inputs.push(model.pad_id());
    tape.inputs.extend_from_slice(&targets[..n - 1]);
    tape.gates.resize(n * g4, 0.0);
    // slot 0 holds the zero initial state; step k writes slot k + 1
    tape.c.clear();
    tape.c.resize((n + 1) * dh, 0.0);
    tape.tanh_c.resize(n * dh, 0.0);
    tape.h.clear();
    tape.h.resize((n + 1) * dh, 0.0);
    tape.probs.resize(n * d.d_out, 0.0);

    let us = model.params().us();
    let bs = model.params().bs();
    let u = model.params().u_stacked();
    let mut nll = 0.0;
    for k in 0..n {
        let pre = &mut tape.gates[k * g4..(k + 1) * g4];
        pre.copy_from_slice(model.input(tape.inputs[k]));
        let (h_prev, h_next) = tape.h.split_at_mut((k + 1) * dh);
        let h_prev = &h_prev[k * dh..];
        gemv_acc(u, h_prev, pre);
        let (c_prev, c_next) = tape.c.split_at_mut((k + 1) * dh);
        cell_update(
            pre,
            &c_prev[k * dh..],
            &mut c_next[..dh],
            &mut tape.tanh_c[k * dh..(k + 1) * dh],
            &mut h_next[..dh],
        );
        let p = &mut tape.probs[k * d.d_out..(k + 1) * d.d_out];
        p.copy_from_slice(bs);
        gemv_acc(us, &h_next[..dh], p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target_logit = p[targets[k] as usize] - max;
        let mut sum = 0.0;
        for v in p.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        nll += sum.ln() - target_logit;
        let inv = 1.0 / sum;
        p.iter_mut().for_each(|v| *v *= inv);
    }
    nll
}

fn backward_tape(model: &Projected<'_>, targets: &[TokenId], tape: &Tape, acc: &mut Accum) {
    let d = model.params().dims();
    let (dh, g4, n, d_out) = (d.d_h, 4 * d.d_h, targets.len(), d.d_out);
    let params = model.params();
    let us = params.us();
    let u = params.u_stacked();
    let o = d.offsets();

    let mut dh_next = vec![0.0; dh];
    let mut dc_next = vec![0.0; dh];
    let mut dh_cur = vec![0.0; dh];
    let mut dz = vec![0.0; g4];
    let mut dl = vec![0.0; d_out];

    for k in (0..n).rev() {
        let h = &tape.h[(k + 1) * dh..(k + 2) * dh];
        let h_prev = &tape.h[k * dh..(k + 1) * dh];
        let c_prev = &tape.c[k * dh..(k + 1) * dh];
        let tc = &tape.tanh_c[k * dh..(k + 1) * dh];
        let gates = &tape.gates[k * g4..(k + 1) * g4];

        dl.copy_from_slice(&tape.probs[k * d_out..(k + 1) * d_out]);
        dl[targets[k] as usize] -= 1.0;

        dh_cur.copy_from_slice(&dh_next);
        {
            let grad = acc.grad.as_mut_slice();
            let (_, rest) = grad.split_at_mut(o.us);
            let (g_us, g_bs) = rest.split_at_mut(o.bs - o.us);
            for j in 0..d_out {
                let dlj = dl[j];
                g_bs[j] += dlj;
                let row = &mut g_us[j * dh..(j + 1) * dh];
                let us_row = &us[j * dh..(j + 1) * dh];
                for m in 0..dh {
                    row[m] += dlj * h[m];
                    dh_cur[m] += us_row[m] * dlj;
                }
            }
        }

        for m in 0..dh {
            let (ig, fg, og, gg) = (gates[m], gates[dh + m], gates[2 * dh + m], gates[3 * dh + m]);
            let d_o = dh_cur[m] * tc[m];
            let dc = dh_cur[m] * og * (1.0 - tc[m] * tc[m]) + dc_next[m];
            let d_i = dc * gg;
            let d_g = dc * ig;
            let d_f = dc * c_prev[m];
            dc_next[m] = dc * fg;
            dz[m] = d_i * ig * (1.0 - ig);
            dz[dh + m] = d_f * fg * (1.0 - fg);
            dz[2 * dh + m] = d_o * og * (1.0 - og);
            dz[3 * dh + m] = d_g * (1.0 - gg * gg);
        }

        let grad = acc.grad.as_mut_slice();
        let g_u = &mut grad[o.u..o.b];
        dh_next.fill(0.0);
        for r in 0..g4 {
            let dzr = dz[r];
            let row = &mut g_u[r * dh..(r + 1) * dh];
            let u_row = &u[r * dh..(r + 1) * dh];
            for m in 0..dh {
                row[m] += dzr * h_prev[m];
                dh_next[m] += u_row[m] * dzr;
            }
        }
        let x = tape.inputs[k] as usize;
        for (a, b) in acc.dz_rows[x * g4..(x + 1) * g4].iter_mut().zip(&dz) {
            *a += b;
        }
    }
}

/// Mean per-token negative log-likelihood over a batch of independent segments (each starts from
/// the zero state) and its exact gradient by backpropagation through time. Embeddings are frozen
/// and receive no gradient.
pub fn loss_and_gradients(
    params: &LstmParams,
    batch: &[&Segment],
    embeddings: &EmbeddingTable,
) -> Result<(f64, LstmParams)> {
    let model = Projected::new(params, embeddings)?;
    loss_and_gradients_projected(&model, batch, embeddings)
}

pub(crate) fn loss_and_gradients_projected(
    model: &Projected<'_>,
    batch: &[&Segment],
    embeddings: &EmbeddingTable,
) -> Result<(f64, LstmParams)> {
    let total_tokens: usize = batch.iter().map(|s| s.valid_len).sum();
    if total_tokens == 0 {
        return Err(Error::Empty("batch has no valid tokens"));
    }
    let d_out = model.params().dims().d_out;
    for s in batch {
        if let Some(&t) = s.valid().iter().find(|&&t| t as usize >= d_out) {
            return Err(Error::TokenOutOfRange { id: t as usize, rows: d_out });
        }
    }

    let partials: Vec<Accum> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accum::new(model);
            let mut tape = Tape {
                inputs: Vec::new(),
                gates: Vec::new(),
                c: Vec::new(),
                tanh_c: Vec::new(),
                h: Vec::new(),
                probs: Vec::new(),
            };
            for seg in chunk.iter().filter(|s| s.valid_len > 0) {
                let targets = seg.valid();
                acc.nll_sum += forward_tape(model, targets, &mut tape);
                acc.tokens += targets.len();
                backward_tape(model, targets, &tape, &mut acc);
            }
            acc
        })
        .collect();

    let mut partials = partials.into_iter();
    let mut acc = partials.next().expect("nonempty batch");
    for p in partials {
        acc.merge(p);
    }
    let loss = acc.nll_sum / acc.tokens as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("batch loss"));
    }

    // dW = Σ_rows dz_row ⊗ e_row, db = Σ_rows dz_row
    let d = model.params().dims();
    let g4 = 4 * d.d_h;
    let o = d.offsets();
    let grad = acc.grad.as_mut_slice();
    for r in 0..embeddings.rows() {
        let dz = &acc.dz_rows[r * g4..(r + 1) * g4];
        if dz.iter().all(|&x| x == 0.0) {
            continue;
        }
        let e = embeddings.row(r);
        for (q, &dzq) in dz.iter().enumerate() {
            grad[o.b + q] += dzq;
            let row = &mut grad[o.w + q * d.d_in..o.w + (q + 1) * d.d_in];
            for (w, &x) in row.iter_mut().zip(e) {
                *w += dzq * x;
            }
        }
    }
    acc.grad.scale(1.0 / acc.tokens as f64);
    if !acc.grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, acc.grad))
}
