use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Layer sizes: embedding width, hidden/cell width, output vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            d_in: 100,
            d_h: 16,
            d_out: 10_000,
        }
    }
}

impl Dims {
    pub fn new(d_in: usize, d_h: usize, d_out: usize) -> Self {
        Dims { d_in, d_h, d_out }
    }

    /// Trainable parameters: `4(d_h·d_in + d_h·d_h + d_h) + d_out·d_h + d_out`.
    pub fn param_count(&self) -> usize {
        4 * (self.d_h * self.d_in + self.d_h * self.d_h + self.d_h) + self.d_out * self.d_h + self.d_out
    }

    pub(crate) fn offsets(&self) -> Offsets {
        let g = 4 * self.d_h;
        let w = 0;
        let u = w + g * self.d_in;
        let b = u + g * self.d_h;
        let us = b + g;
        let bs = us + self.d_out * self.d_h;
        Offsets { w, u, b, us, bs }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub w: usize,
    pub u: usize,
    pub b: usize,
    pub us: usize,
    pub bs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    fn index(self) -> usize {
        self as usize
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

/// All trainable weights in one contiguous buffer.
///
/// Layout: the stacked input matrices `[W_i; W_f; W_o; W_c]` (`4·d_h × d_in`), the stacked
/// recurrent matrices `[U_i; U_f; U_o; U_c]` (`4·d_h × d_h`), the stacked gate biases, then the
/// output projection `U_s` (`d_out × d_h`) and its bias `b_s`. Matrices are row-major.
/// Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    dims: Dims,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(dims: Dims) -> Self {
        LstmParams {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    /// Weights uniform on `[-1/sqrt(d_h), 1/sqrt(d_h)]`, biases zero.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let bound = 1.0 / (dims.d_h as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = dims.offsets();
        let weight_ranges = [o.w..o.b, o.us..o.bs];
        for range in weight_ranges {
            for x in &mut p.data[range] {
                *x = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Option<Self> {
        (data.len() == dims.param_count()).then_some(LstmParams { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn add_assign(&mut self, other: &LstmParams) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `W_gate`, `d_h × d_in`.
    pub fn w(&self, gate: Gate) -> &[f64] {
        let (h, d) = (self.dims.d_h, self.dims.d_in);
        let start = self.dims.offsets().w + gate.index() * h * d;
        &self.data[start..start + h * d]
    }

    /// `U_gate`, `d_h × d_h`.
    pub fn u(&self, gate: Gate) -> &[f64] {
        let h = self.dims.d_h;
        let start = self.dims.offsets().u + gate.index() * h * h;
        &self.data[start..start + h * h]
    }

    /// `b_gate`, length `d_h`.
    pub fn b(&self, gate: Gate) -> &[f64] {
        let h = self.dims.d_h;
        let start = self.dims.offsets().b + gate.index() * h;
        &self.data[start..start + h]
    }

    /// Output projection `U_s`, `d_out × d_h`.
    pub fn us(&self) -> &[f64] {
        let o = self.dims.offsets();
        &self.data[o.us..o.bs]
    }

    /// Output bias `b_s`, length `d_out`.
    pub fn bs(&self) -> &[f64] {
        &self.data[self.dims.offsets().bs..]
    }

    pub(crate) fn w_stacked(&self) -> &[f64] {
        let o = self.dims.offsets();
        &self.data[o.w..o.u]
    }

    pub(crate) fn u_stacked(&self) -> &[f64] {
        let o = self.dims.offsets();
        &self.data[o.u..o.b]
    }

    pub(crate) fn b_stacked(&self) -> &[f64] {
        let o = self.dims.offsets();
        &self.data[o.b..o.us]
    }

    /// Mutable view of one named block, e.g. for hand-set test models.
    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let d = self.dims;
        let o = d.offsets();
        let h = d.d_h;
        let range = match block {
            Block::W(g) => {
                let s = o.w + g.index() * h * d.d_in;
                s..s + h * d.d_in
            }
            Block::U(g) => {
                let s = o.u + g.index() * h * h;
                s..s + h * h
            }
            Block::B(g) => {
                let s = o.b + g.index() * h;
                s..s + h
            }
            Block::Us => o.us..o.bs,
            Block::Bs => o.bs..self.data.len(),
        };
        &mut self.data[range]
    }

    /// Named blocks in storage order, as `(name, values)`.
    pub fn named_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(14);
        for g in Gate::ALL {
            out.push((format!("W_{}", g.suffix()), self.w(g)));
        }
        for g in Gate::ALL {
            out.push((format!("U_{}", g.suffix()), self.u(g)));
        }
        for g in Gate::ALL {
            out.push((format!("b_{}", g.suffix()), self.b(g)));
        }
        out.push(("U_s".to_string(), self.us()));
        out.push(("b_s".to_string(), self.bs()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    W(Gate),
    U(Gate),
    B(Gate),
    Us,
    Bs,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_count_is_177488() {
        assert_eq!(Dims::default().param_count(), 177_488);
        assert_eq!(LstmParams::zeros(Dims::default()).count(), 177_488);
        // LSTM layer alone
        assert_eq!(4 * (1600 + 256 + 16), 7_488);
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let p = LstmParams::init(Dims::new(5, 4, 7), 1);
        for (name, block) in p.named_blocks() {
            if name.starts_with('b') {
                assert!(block.iter().all(|&x| x == 0.0), "{name}");
            } else {
                assert!(block.iter().all(|x| x.abs() <= 0.5), "{name}");
                assert!(block.iter().any(|&x| x != 0.0), "{name}");
            }
        }
        assert_eq!(p, LstmParams::init(Dims::new(5, 4, 7), 1));
    }

    #[test]
    fn blocks_tile_the_buffer() {
        let p = LstmParams::zeros(Dims::new(3, 2, 5));
        let total: usize = p.named_blocks().iter().map(|(_, b)| b.len()).sum();
        assert_eq!(total, p.count());
    }
}
