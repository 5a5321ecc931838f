//! One-block encoder-decoder transformer with hand-written reverse mode.
//!
//! Encoder: token + position embedding, pre-norm self-attention, pre-norm
//! feed-forward, final norm. Decoder: target + position embedding, pre-norm
//! causal self-attention, pre-norm cross-attention over the encoder states,
//! pre-norm feed-forward, final norm, linear projection to output logits.
//! All attention is single-head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_in: usize,
    pub vocab_out: usize,
    pub embed: usize,
    pub ffn: usize,
    pub max_input: usize,
    pub max_target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gain: Mat<T>,
    pub bias: Mat<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub wq: Mat<T>,
    pub wk: Mat<T>,
    pub wv: Mat<T>,
    pub wo: Mat<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<T> {
    pub w1: Mat<T>,
    pub b1: Mat<T>,
    pub w2: Mat<T>,
    pub b2: Mat<T>,
}

/// Every weight of the model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub dims: ModelDims,
    pub token_embedding: Mat<T>,
    pub encoder_position: Mat<T>,
    pub target_embedding: Mat<T>,
    pub decoder_position: Mat<T>,
    pub enc_attn_norm: Norm<T>,
    pub enc_attn: Attention<T>,
    pub enc_ffn_norm: Norm<T>,
    pub enc_ffn: FeedForward<T>,
    pub enc_final_norm: Norm<T>,
    pub dec_self_norm: Norm<T>,
    pub dec_self_attn: Attention<T>,
    pub dec_cross_norm: Norm<T>,
    pub dec_cross_attn: Attention<T>,
    pub dec_ffn_norm: Norm<T>,
    pub dec_ffn: FeedForward<T>,
    pub dec_final_norm: Norm<T>,
    pub output_weight: Mat<T>,
    pub output_bias: Mat<T>,
}

macro_rules! tensor_list {
    ($self:ident, $($r:tt)*) => {
        vec![
            ("token_embedding", $($r)* $self.token_embedding),
            ("encoder_position", $($r)* $self.encoder_position),
            ("target_embedding", $($r)* $self.target_embedding),
            ("decoder_position", $($r)* $self.decoder_position),
            ("enc_attn_norm.gain", $($r)* $self.enc_attn_norm.gain),
            ("enc_attn_norm.bias", $($r)* $self.enc_attn_norm.bias),
            ("enc_attn.wq", $($r)* $self.enc_attn.wq),
            ("enc_attn.wk", $($r)* $self.enc_attn.wk),
            ("enc_attn.wv", $($r)* $self.enc_attn.wv),
            ("enc_attn.wo", $($r)* $self.enc_attn.wo),
            ("enc_ffn_norm.gain", $($r)* $self.enc_ffn_norm.gain),
            ("enc_ffn_norm.bias", $($r)* $self.enc_ffn_norm.bias),
            ("enc_ffn.w1", $($r)* $self.enc_ffn.w1),
            ("enc_ffn.b1", $($r)* $self.enc_ffn.b1),
            ("enc_ffn.w2", $($r)* $self.enc_ffn.w2),
            ("enc_ffn.b2", $($r)* $self.enc_ffn.b2),
            ("enc_final_norm.gain", $($r)* $self.enc_final_norm.gain),
            ("enc_final_norm.bias", $($r)* $self.enc_final_norm.bias),
            ("dec_self_norm.gain", $($r)* $self.dec_self_norm.gain),
            ("dec_self_norm.bias", $($r)* $self.dec_self_norm.bias),
            ("dec_self_attn.wq", $($r)* $self.dec_self_attn.wq),
            ("dec_self_attn.wk", $($r)* $self.dec_self_attn.wk),
            ("dec_self_attn.wv", $($r)* $self.dec_self_attn.wv),
            ("dec_self_attn.wo", $($r)* $self.dec_self_attn.wo),
            ("dec_cross_norm.gain", $($r)* $self.dec_cross_norm.gain),
            ("dec_cross_norm.bias", $($r)* $self.dec_cross_norm.bias),
            ("dec_cross_attn.wq", $($r)* $self.dec_cross_attn.wq),
            ("dec_cross_attn.wk", $($r)* $self.dec_cross_attn.wk),
            ("dec_cross_attn.wv", $($r)* $self.dec_cross_attn.wv),
            ("dec_cross_attn.wo", $($r)* $self.dec_cross_attn.wo),
            ("dec_ffn_norm.gain", $($r)* $self.dec_ffn_norm.gain),
            ("dec_ffn_norm.bias", $($r)* $self.dec_ffn_norm.bias),
            ("dec_ffn.w1", $($r)* $self.dec_ffn.w1),
            ("dec_ffn.b1", $($r)* $self.dec_ffn.b1),
            ("dec_ffn.w2", $($r)* $self.dec_ffn.w2),
            ("dec_ffn.b2", $($r)* $self.dec_ffn.b2),
            ("dec_final_norm.gain", $($r)* $self.dec_final_norm.gain),
            ("dec_final_norm.bias", $($r)* $self.dec_final_norm.bias),
            ("output_weight", $($r)* $self.output_weight),
            ("output_bias", $($r)* $self.output_bias),
        ]
    };
}

impl<T: Scalar> Norm<T> {
    fn new(e: usize) -> Self {
        Self {
            gain: Mat::filled(1, e, T::one()),
            bias: Mat::zeros(1, e),
        }
    }
}

impl<T: Scalar> Attention<T> {
    fn random<R: Rng>(e: usize, rng: &mut R) -> Self {
        let std = 1.0 / (e as f64).sqrt();
        Self {
            wq: Mat::randn(e, e, std, rng),
            wk: Mat::randn(e, e, std, rng),
            wv: Mat::randn(e, e, std, rng),
            wo: Mat::randn(e, e, std, rng),
        }
    }
}

impl<T: Scalar> FeedForward<T> {
    fn random<R: Rng>(e: usize, f: usize, rng: &mut R) -> Self {
        Self {
            w1: Mat::randn(e, f, 1.0 / (e as f64).sqrt(), rng),
            b1: Mat::zeros(1, f),
            w2: Mat::randn(f, e, 1.0 / (f as f64).sqrt(), rng),
            b2: Mat::zeros(1, e),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn random<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let e = dims.embed;
        let f = dims.ffn;
        Self {
            dims,
            token_embedding: Mat::randn(dims.vocab_in, e, 1.0, rng),
            encoder_position: Mat::randn(dims.max_input, e, 0.1, rng),
            target_embedding: Mat::randn(dims.vocab_out, e, 1.0, rng),
            decoder_position: Mat::randn(dims.max_target, e, 0.1, rng),
            enc_attn_norm: Norm::new(e),
            enc_attn: Attention::random(e, rng),
            enc_ffn_norm: Norm::new(e),
            enc_ffn: FeedForward::random(e, f, rng),
            enc_final_norm: Norm::new(e),
            dec_self_norm: Norm::new(e),
            dec_self_attn: Attention::random(e, rng),
            dec_cross_norm: Norm::new(e),
            dec_cross_attn: Attention::random(e, rng),
            dec_ffn_norm: Norm::new(e),
            dec_ffn: FeedForward::random(e, f, rng),
            dec_final_norm: Norm::new(e),
            output_weight: Mat::randn(e, dims.vocab_out, 1.0 / (e as f64).sqrt(), rng),
            output_bias: Mat::zeros(1, dims.vocab_out),
        }
    }

    /// All-zero tensors with the shapes of `dims`.
    pub fn zeros(dims: ModelDims) -> Self {
        let e = dims.embed;
        let f = dims.ffn;
        let attn = || Attention {
            wq: Mat::zeros(e, e),
            wk: Mat::zeros(e, e),
            wv: Mat::zeros(e, e),
            wo: Mat::zeros(e, e),
        };
        let ffn = || FeedForward {
            w1: Mat::zeros(e, f),
            b1: Mat::zeros(1, f),
            w2: Mat::zeros(f, e),
            b2: Mat::zeros(1, e),
        };
        let norm = || Norm {
            gain: Mat::zeros(1, e),
            bias: Mat::zeros(1, e),
        };
        Self {
            dims,
            token_embedding: Mat::zeros(dims.vocab_in, e),
            encoder_position: Mat::zeros(dims.max_input, e),
            target_embedding: Mat::zeros(dims.vocab_out, e),
            decoder_position: Mat::zeros(dims.max_target, e),
            enc_attn_norm: norm(),
            enc_attn: attn(),
            enc_ffn_norm: norm(),
            enc_ffn: ffn(),
            enc_final_norm: norm(),
            dec_self_norm: norm(),
            dec_self_attn: attn(),
            dec_cross_norm: norm(),
            dec_cross_attn: attn(),
            dec_ffn_norm: norm(),
            dec_ffn: ffn(),
            dec_final_norm: norm(),
            output_weight: Mat::zeros(e, dims.vocab_out),
            output_bias: Mat::zeros(1, dims.vocab_out),
        }
    }

    pub fn zero_output_projection(&mut self) {
        self.output_weight.fill_zero();
        self.output_bias.fill_zero();
    }

    /// Tensors in their fixed serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, &Mat<T>)> {
        tensor_list!(self, &)
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat<T>)> {
        tensor_list!(self, &mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill_zero();
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }
}

// ---- layer norm ----

struct NormCache<T> {
    xhat: Mat<T>,
    rstd: Vec<T>,
}

fn norm_forward<T: Scalar>(p: &Norm<T>, x: &Mat<T>) -> (Mat<T>, NormCache<T>) {
    let e = x.cols;
    let inv_e = T::one() / T::from_usize_lossy(e);
    let eps = T::from_f64_lossy(NORM_EPS);
    let mut y = Mat::zeros(x.rows, e);
    let mut xhat = Mat::zeros(x.rows, e);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() * inv_e;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_e;
        let s = T::one() / (var + eps).sqrt();
        rstd.push(s);
        let xh = xhat.row_mut(r);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (*v - mean) * s;
        }
        let xh = xhat.row(r).to_vec();
        for ((o, h), (g, b)) in y.row_mut(r).iter_mut().zip(&xh).zip(p.gain.data.iter().zip(&p.bias.data)) {
            *o = *g * *h + *b;
        }
    }
    (y, NormCache { xhat, rstd })
}

fn norm_backward<T: Scalar>(p: &Norm<T>, c: &NormCache<T>, dy: &Mat<T>, g: &mut Norm<T>) -> Mat<T> {
    let e = dy.cols;
    let inv_e = T::one() / T::from_usize_lossy(e);
    let mut dx = Mat::zeros(dy.rows, e);
    let mut dxhat = vec![T::zero(); e];
    for r in 0..dy.rows {
        let d = dy.row(r);
        let xh = c.xhat.row(r);
        for j in 0..e {
            g.gain.data[j] += d[j] * xh[j];
            g.bias.data[j] += d[j];
            dxhat[j] = d[j] * p.gain.data[j];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() * inv_e;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| *a * *b).sum::<T>() * inv_e;
        let s = c.rstd[r];
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = s * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

// ---- attention ----

/// Keys and values projected from the attended sequence.
pub(crate) struct KeyValues<T> {
    pub k: Mat<T>,
    pub v: Mat<T>,
}

fn project_kv<T: Scalar>(p: &Attention<T>, x: &Mat<T>) -> KeyValues<T> {
    KeyValues {
        k: x.matmul(&p.wk),
        v: x.matmul(&p.wv),
    }
}

fn project_kv_backward<T: Scalar>(p: &Attention<T>, x: &Mat<T>, dk: &Mat<T>, dv: &Mat<T>, g: &mut Attention<T>) -> Mat<T> {
    x.t_matmul_into(dk, &mut g.wk);
    x.t_matmul_into(dv, &mut g.wv);
    let mut dx = dk.matmul_t(&p.wk);
    dx.add_assign(&dv.matmul_t(&p.wv));
    dx
}

struct AttendCache<T> {
    xq: Mat<T>,
    q: Mat<T>,
    probs: Mat<T>,
    ctx: Mat<T>,
}

fn attend<T: Scalar>(p: &Attention<T>, xq: &Mat<T>, kv: &KeyValues<T>, causal: bool) -> (Mat<T>, AttendCache<T>) {
    let scale = T::one() / T::from_usize_lossy(xq.cols).sqrt();
    let q = xq.matmul(&p.wq);
    let mut probs = q.matmul_t(&kv.k);
    let nk = probs.cols;
    for i in 0..probs.rows {
        let limit = if causal { (i + 1).min(nk) } else { nk };
        let row = probs.row_mut(i);
        let mut max = T::neg_infinity();
        for v in row[..limit].iter_mut() {
            *v *= scale;
            max = max.max(*v);
        }
        let mut sum = T::zero();
        for v in row[..limit].iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row[..limit].iter_mut() {
            *v /= sum;
        }
        for v in row[limit..].iter_mut() {
            *v = T::zero();
        }
    }
    let ctx = probs.matmul(&kv.v);
    let y = ctx.matmul(&p.wo);
    (
        y,
        AttendCache {
            xq: xq.clone(),
            q,
            probs,
            ctx,
        },
    )
}

/// Returns `(d xq, d k, d v)`.
fn attend_backward<T: Scalar>(
    p: &Attention<T>,
    c: &AttendCache<T>,
    kv: &KeyValues<T>,
    dy: &Mat<T>,
    g: &mut Attention<T>,
) -> (Mat<T>, Mat<T>, Mat<T>) {
    let scale = T::one() / T::from_usize_lossy(c.xq.cols).sqrt();
    c.ctx.t_matmul_into(dy, &mut g.wo);
    let dctx = dy.matmul_t(&p.wo);
    let dv = c.probs.t_matmul(&dctx);
    let mut ds = dctx.matmul_t(&kv.v);
    for i in 0..ds.rows {
        let pr = c.probs.row(i);
        let row = ds.row_mut(i);
        let inner = row.iter().zip(pr).map(|(a, b)| *a * *b).sum::<T>();
        for (d, pv) in row.iter_mut().zip(pr) {
            *d = *pv * (*d - inner) * scale;
        }
    }
    let dq = ds.matmul(&kv.k);
    let dk = ds.t_matmul(&c.q);
    c.xq.t_matmul_into(&dq, &mut g.wq);
    let dxq = dq.matmul_t(&p.wq);
    (dxq, dk, dv)
}

// ---- feed-forward ----

struct FfnCache<T> {
    x: Mat<T>,
    pre: Mat<T>,
    act: Mat<T>,
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    let a = T::from_f64_lossy(GELU_A);
    let half = T::from_f64_lossy(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    let a = T::from_f64_lossy(GELU_A);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

fn ffn_forward<T: Scalar>(p: &FeedForward<T>, x: &Mat<T>) -> (Mat<T>, FfnCache<T>) {
    let mut pre = x.matmul(&p.w1);
    pre.add_row_vector(&p.b1);
    let act = Mat {
        rows: pre.rows,
        cols: pre.cols,
        data: pre.data.iter().map(|v| gelu(*v)).collect(),
    };
    let mut y = act.matmul(&p.w2);
    y.add_row_vector(&p.b2);
    (
        y,
        FfnCache {
            x: x.clone(),
            pre,
            act,
        },
    )
}

fn ffn_backward<T: Scalar>(p: &FeedForward<T>, c: &FfnCache<T>, dy: &Mat<T>, g: &mut FeedForward<T>) -> Mat<T> {
    c.act.t_matmul_into(dy, &mut g.w2);
    dy.col_sums_into(&mut g.b2);
    let mut dpre = dy.matmul_t(&p.w2);
    for (d, x) in dpre.data.iter_mut().zip(&c.pre.data) {
        *d *= gelu_grad(*x);
    }
    c.x.t_matmul_into(&dpre, &mut g.w1);
    dpre.col_sums_into(&mut g.b1);
    dpre.matmul_t(&p.w1)
}

// ---- full model ----

fn embed<T: Scalar>(table: &Mat<T>, positions: &Mat<T>, ids: &[u32]) -> Mat<T> {
    let e = table.cols;
    let mut h = Mat::zeros(ids.len(), e);
    for (i, &id) in ids.iter().enumerate() {
        for ((o, a), b) in h.row_mut(i).iter_mut().zip(table.row(id as usize)).zip(positions.row(i)) {
            *o = *a + *b;
        }
    }
    h
}

fn embed_backward<T: Scalar>(table: &mut Mat<T>, positions: &mut Mat<T>, ids: &[u32], dh: &Mat<T>) {
    for (i, &id) in ids.iter().enumerate() {
        let d = dh.row(i);
        for (t, v) in table.row_mut(id as usize).iter_mut().zip(d) {
            *t += *v;
        }
        for (t, v) in positions.row_mut(i).iter_mut().zip(d) {
            *t += *v;
        }
    }
}

fn residual<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

struct EncoderCache<T> {
    ids: Vec<u32>,
    n_attn: NormCache<T>,
    attn_in: Mat<T>,
    attn: AttendCache<T>,
    kv: KeyValues<T>,
    n_ffn: NormCache<T>,
    ffn: FfnCache<T>,
    n_final: NormCache<T>,
}

/// Encoder output plus the cross-attention keys and values derived from it.
pub struct Encoded<T> {
    pub states: Mat<T>,
    pub(crate) cross: KeyValues<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub(crate) fn check_input(&self, input_ids: &[u32]) -> Result<()> {
        if input_ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        if input_ids.len() > self.dims.max_input {
            return Err(Error::InvalidArgument(format!(
                "input length {} exceeds {}",
                input_ids.len(),
                self.dims.max_input
            )));
        }
        if let Some(&id) = input_ids.iter().find(|&&id| id as usize >= self.dims.vocab_in) {
            return Err(Error::TokenOutOfRange {
                id: id as usize,
                size: self.dims.vocab_in,
            });
        }
        Ok(())
    }

    pub(crate) fn check_decoder_input(&self, dec_ids: &[u32]) -> Result<()> {
        if dec_ids.is_empty() || dec_ids.len() > self.dims.max_target {
            return Err(Error::InvalidArgument(format!(
                "decoder prefix length {} outside 1..={}",
                dec_ids.len(),
                self.dims.max_target
            )));
        }
        if let Some(&id) = dec_ids.iter().find(|&&id| id as usize >= self.dims.vocab_out) {
            return Err(Error::TokenOutOfRange {
                id: id as usize,
                size: self.dims.vocab_out,
            });
        }
        Ok(())
    }

    fn encode_cached(&self, ids: &[u32]) -> (Mat<T>, EncoderCache<T>) {
        let h0 = embed(&self.token_embedding, &self.encoder_position, ids);
        let (a, n_attn) = norm_forward(&self.enc_attn_norm, &h0);
        let kv = project_kv(&self.enc_attn, &a);
        let (o, attn) = attend(&self.enc_attn, &a, &kv, false);
        let h1 = residual(&h0, &o);
        let (b, n_ffn) = norm_forward(&self.enc_ffn_norm, &h1);
        let (f, ffn) = ffn_forward(&self.enc_ffn, &b);
        let h2 = residual(&h1, &f);
        let (states, n_final) = norm_forward(&self.enc_final_norm, &h2);
        (
            states,
            EncoderCache {
                ids: ids.to_vec(),
                n_attn,
                attn_in: a,
                attn,
                kv,
                n_ffn,
                ffn,
                n_final,
            },
        )
    }

    fn encode_backward(&self, c: &EncoderCache<T>, d_states: &Mat<T>, g: &mut ModelParams<T>) {
        let dh2 = norm_backward(&self.enc_final_norm, &c.n_final, d_states, &mut g.enc_final_norm);
        let db = ffn_backward(&self.enc_ffn, &c.ffn, &dh2, &mut g.enc_ffn);
        let mut dh1 = norm_backward(&self.enc_ffn_norm, &c.n_ffn, &db, &mut g.enc_ffn_norm);
        dh1.add_assign(&dh2);
        let (mut da, dk, dv) = attend_backward(&self.enc_attn, &c.attn, &c.kv, &dh1, &mut g.enc_attn);
        da.add_assign(&project_kv_backward(&self.enc_attn, &c.attn_in, &dk, &dv, &mut g.enc_attn));
        let mut dh0 = norm_backward(&self.enc_attn_norm, &c.n_attn, &da, &mut g.enc_attn_norm);
        dh0.add_assign(&dh1);
        embed_backward(&mut g.token_embedding, &mut g.encoder_position, &c.ids, &dh0);
    }

    /// Runs the encoder once; reuse the result for every decoding step.
    pub fn encode(&self, input_ids: &[u32]) -> Result<Encoded<T>> {
        self.check_input(input_ids)?;
        let (states, _) = self.encode_cached(input_ids);
        let cross = project_kv(&self.dec_cross_attn, &states);
        Ok(Encoded { states, cross })
    }

    fn decode_cached(&self, enc: &Encoded<T>, dec_ids: &[u32]) -> (Mat<T>, DecoderCache<T>) {
        let g0 = embed(&self.target_embedding, &self.decoder_position, dec_ids);
        let (a, n_self) = norm_forward(&self.dec_self_norm, &g0);
        let self_kv = project_kv(&self.dec_self_attn, &a);
        let (o1, self_attn) = attend(&self.dec_self_attn, &a, &self_kv, true);
        let g1 = residual(&g0, &o1);
        let (b, n_cross) = norm_forward(&self.dec_cross_norm, &g1);
        let (o2, cross_attn) = attend(&self.dec_cross_attn, &b, &enc.cross, false);
        let g2 = residual(&g1, &o2);
        let (c, n_ffn) = norm_forward(&self.dec_ffn_norm, &g2);
        let (f, ffn) = ffn_forward(&self.dec_ffn, &c);
        let g3 = residual(&g2, &f);
        let (d, n_final) = norm_forward(&self.dec_final_norm, &g3);
        let mut logits = d.matmul(&self.output_weight);
        logits.add_row_vector(&self.output_bias);
        (
            logits,
            DecoderCache {
                ids: dec_ids.to_vec(),
                n_self,
                self_in: a,
                self_kv,
                self_attn,
                n_cross,
                cross_attn,
                n_ffn,
                ffn,
                n_final,
                final_out: d,
            },
        )
    }

    /// Returns the gradient with respect to the encoder states.
    fn decode_backward(&self, enc: &Encoded<T>, c: &DecoderCache<T>, dlogits: &Mat<T>, g: &mut ModelParams<T>) -> Mat<T> {
        c.final_out.t_matmul_into(dlogits, &mut g.output_weight);
        dlogits.col_sums_into(&mut g.output_bias);
        let dd = dlogits.matmul_t(&self.output_weight);
        let dg3 = norm_backward(&self.dec_final_norm, &c.n_final, &dd, &mut g.dec_final_norm);
        let dc = ffn_backward(&self.dec_ffn, &c.ffn, &dg3, &mut g.dec_ffn);
        let mut dg2 = norm_backward(&self.dec_ffn_norm, &c.n_ffn, &dc, &mut g.dec_ffn_norm);
        dg2.add_assign(&dg3);
        let (db, dk, dv) = attend_backward(&self.dec_cross_attn, &c.cross_attn, &enc.cross, &dg2, &mut g.dec_cross_attn);
        let d_states = project_kv_backward(&self.dec_cross_attn, &enc.states, &dk, &dv, &mut g.dec_cross_attn);
        let mut dg1 = norm_backward(&self.dec_cross_norm, &c.n_cross, &db, &mut g.dec_cross_norm);
        dg1.add_assign(&dg2);
        let (mut da, dk, dv) = attend_backward(&self.dec_self_attn, &c.self_attn, &c.self_kv, &dg1, &mut g.dec_self_attn);
        da.add_assign(&project_kv_backward(&self.dec_self_attn, &c.self_in, &dk, &dv, &mut g.dec_self_attn));
        let mut dg0 = norm_backward(&self.dec_self_norm, &c.n_self, &da, &mut g.dec_self_norm);
        dg0.add_assign(&dg1);
        embed_backward(&mut g.target_embedding, &mut g.decoder_position, &c.ids, &dg0);
        d_states
    }

    /// Output logits for every decoder position.
    pub fn logits(&self, enc: &Encoded<T>, dec_ids: &[u32]) -> Result<Mat<T>> {
        self.check_decoder_input(dec_ids)?;
        Ok(self.decode_cached(enc, dec_ids).0)
    }

    /// Log-probabilities of the token following `dec_ids`.
    pub fn next_log_probs(&self, enc: &Encoded<T>, dec_ids: &[u32]) -> Result<Vec<T>> {
        let logits = self.logits(enc, dec_ids)?;
        Ok(log_softmax(logits.row(logits.rows - 1)))
    }

    /// Teacher-forced cross-entropy of one example. Adds `scale` times the
    /// gradient of the summed token losses into `grads` and returns the
    /// summed loss and the number of scored tokens.
    pub(crate) fn example_loss_grad(
        &self,
        input_ids: &[u32],
        target_ids: &[u32],
        scale: T,
        grads: Option<&mut ModelParams<T>>,
    ) -> Result<(T, usize)> {
        self.check_input(input_ids)?;
        let dec_in = decoder_inputs(target_ids);
        self.check_decoder_input(&dec_in)?;
        let (states, enc_cache) = self.encode_cached(input_ids);
        let cross = project_kv(&self.dec_cross_attn, &states);
        let enc = Encoded { states, cross };
        let (logits, dec_cache) = self.decode_cached(&enc, &dec_in);

        let mut loss = T::zero();
        let mut count = 0;
        let mut dlogits = Mat::zeros(logits.rows, logits.cols);
        for (pos, &target) in target_ids.iter().enumerate() {
            if target == super::codec::OUT_PAD {
                continue;
            }
            let lp = log_softmax(logits.row(pos));
            loss -= lp[target as usize];
            count += 1;
            for (d, l) in dlogits.row_mut(pos).iter_mut().zip(&lp) {
                *d = l.exp() * scale;
            }
            dlogits.row_mut(pos)[target as usize] -= scale;
        }

        if let Some(g) = grads {
            let d_states = self.decode_backward(&enc, &dec_cache, &dlogits, g);
            self.encode_backward(&enc_cache, &d_states, g);
        }
        Ok((loss, count))
    }
}

struct DecoderCache<T> {
    ids: Vec<u32>,
    n_self: NormCache<T>,
    self_in: Mat<T>,
    self_kv: KeyValues<T>,
    self_attn: AttendCache<T>,
    n_cross: NormCache<T>,
    cross_attn: AttendCache<T>,
    n_ffn: NormCache<T>,
    ffn: FfnCache<T>,
    n_final: NormCache<T>,
    final_out: Mat<T>,
}

/// `[BOS, t0, .., t(n-2)]` for targets `[t0, .., t(n-1)]`.
pub fn decoder_inputs(target_ids: &[u32]) -> Vec<u32> {
    std::iter::once(super::codec::OUT_BOS)
        .chain(target_ids.iter().take(target_ids.len().saturating_sub(1)).copied())
        .collect()
}

pub fn log_softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
    row.iter().map(|v| *v - lse).collect()
}

pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    log_softmax(row).into_iter().map(T::exp).collect()
}
