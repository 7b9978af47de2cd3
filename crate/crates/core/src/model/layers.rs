//! Transformer building blocks with explicit forward caches and backward passes.
//!
//! Weights are `[in, out]` row-major so a layer computes `y = x W + b`.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{BlockTensors, Tensor};
use crate::linalg::{acc_at_b, acc_col_sums, matmul_w, matmul_wt, Mat};

pub(crate) const LN_EPS: f64 = 1e-5;

// --- layer norm ----------------------------------------------------------

pub(crate) struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Mat, gamma: &[f64], beta: &[f64]) -> (Mat, LnCache) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / libm::sqrt(var + LN_EPS);
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (o, v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        let yr = &mut y.data[r * d..(r + 1) * d];
        for c in 0..d {
            yr[c] = xhat.data[r * d + c] * gamma[c] + beta[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx`; accumulates `dgamma`, `dbeta` into `grads`.
pub(crate) fn layer_norm_backward(
    dy: &Mat,
    cache: &LnCache,
    gamma: &[f64],
    grads: &mut [f64],
    g: Tensor,
    b: Tensor,
) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        {
            let dg = &mut grads[g.range()];
            for c in 0..d {
                dg[c] += dyr[c] * xh[c];
            }
        }
        {
            let db = &mut grads[b.range()];
            for c in 0..d {
                db[c] += dyr[c];
            }
        }
        for c in 0..d {
            dxhat[c] = dyr[c] * gamma[c];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let is = cache.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = is * (dxhat[c] - m1 - xh[c] * m2);
        }
    }
    dx
}

// --- linear --------------------------------------------------------------

pub(crate) fn linear(x: &Mat, params: &[f64], w: Tensor, b: Tensor) -> Mat {
    let out_cols = b.len;
    let mut y = matmul_w(x, &params[w.range()], out_cols);
    y.add_row_bias(&params[b.range()]);
    y
}

/// Accumulates weight and bias gradients, returns `dx`.
pub(crate) fn linear_backward(
    dy: &Mat,
    x: &Mat,
    params: &[f64],
    grads: &mut [f64],
    w: Tensor,
    b: Tensor,
) -> Mat {
    acc_at_b(&mut grads[w.range()], x, dy);
    acc_col_sums(&mut grads[b.range()], dy);
    matmul_wt(dy, &params[w.range()], x.cols)
}

// --- activations ---------------------------------------------------------

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

// --- multi-head self-attention -------------------------------------------

pub(crate) struct AttnCache {
    input: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// One `[n, n]` probability matrix per head.
    probs: Vec<Mat>,
    concat: Mat,
}

fn attention(x: &Mat, params: &[f64], t: &BlockTensors, n_heads: usize) -> (Mat, AttnCache) {
    let q = linear(x, params, t.wq, t.bq);
    let k = linear(x, params, t.wk, t.bk);
    let v = linear(x, params, t.wv, t.bv);
    let n = x.rows;
    let d = x.cols;
    let dh = d / n_heads;
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut concat = Mat::zeros(n, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let off = h * dh;
        let mut p = Mat::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[off..off + dh];
            let prow = p.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                let s = crate::linalg::dot(qi, &k.row(j)[off..off + dh]) * scale;
                prow[j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for s in prow.iter_mut() {
                *s = libm::exp(*s - max);
                sum += *s;
            }
            for s in prow.iter_mut() {
                *s /= sum;
            }
        }
        for i in 0..n {
            let out = &mut concat.data[i * d + off..i * d + off + dh];
            for j in 0..n {
                let pij = p.data[i * n + j];
                let vj = &v.row(j)[off..off + dh];
                for (o, vv) in out.iter_mut().zip(vj) {
                    *o += pij * vv;
                }
            }
        }
        probs.push(p);
    }
    let y = linear(&concat, params, t.wo, t.bo);
    (
        y,
        AttnCache {
            input: x.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    )
}

fn attention_backward(
    dy: &Mat,
    c: &AttnCache,
    params: &[f64],
    grads: &mut [f64],
    t: &BlockTensors,
    n_heads: usize,
) -> Mat {
    let dconcat = linear_backward(dy, &c.concat, params, grads, t.wo, t.bo);
    let n = dy.rows;
    let d = dy.cols;
    let dh = d / n_heads;
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    let mut dp = vec![0.0; n];
    for (h, p) in c.probs.iter().enumerate() {
        let off = h * dh;
        for i in 0..n {
            let doi = &dconcat.row(i)[off..off + dh];
            // dP_ij = dO_i . V_j ; dV_j += P_ij dO_i
            for j in 0..n {
                dp[j] = crate::linalg::dot(doi, &c.v.row(j)[off..off + dh]);
                let pij = p.data[i * n + j];
                let dvj = &mut dv.data[j * d + off..j * d + off + dh];
                for (o, g) in dvj.iter_mut().zip(doi) {
                    *o += pij * g;
                }
            }
            let prow = p.row(i);
            let inner: f64 = prow.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let qi: Vec<f64> = c.q.row(i)[off..off + dh].to_vec();
            for j in 0..n {
                let ds = prow[j] * (dp[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &c.k.row(j)[off..off + dh];
                let dqi = &mut dq.data[i * d + off..i * d + off + dh];
                for (o, kv) in dqi.iter_mut().zip(kj) {
                    *o += ds * kv;
                }
                let dkj = &mut dk.data[j * d + off..j * d + off + dh];
                for (o, qv) in dkj.iter_mut().zip(&qi) {
                    *o += ds * qv;
                }
            }
        }
    }
    let mut dx = linear_backward(&dq, &c.input, params, grads, t.wq, t.bq);
    dx.add_assign(&linear_backward(&dk, &c.input, params, grads, t.wk, t.bk));
    dx.add_assign(&linear_backward(&dv, &c.input, params, grads, t.wv, t.bv));
    dx
}

// --- feed-forward --------------------------------------------------------

pub(crate) struct FfnCache {
    input: Mat,
    pre: Mat,
    act: Mat,
}

fn ffn(x: &Mat, params: &[f64], t: &BlockTensors) -> (Mat, FfnCache) {
    let pre = linear(x, params, t.w1, t.b1);
    let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&u| gelu(u)).collect());
    let y = linear(&act, params, t.w2, t.b2);
    (
        y,
        FfnCache {
            input: x.clone(),
            pre,
            act,
        },
    )
}

fn ffn_backward(dy: &Mat, c: &FfnCache, params: &[f64], grads: &mut [f64], t: &BlockTensors) -> Mat {
    let mut dact = linear_backward(dy, &c.act, params, grads, t.w2, t.b2);
    for (g, &u) in dact.data.iter_mut().zip(&c.pre.data) {
        *g *= gelu_grad(u);
    }
    linear_backward(&dact, &c.input, params, grads, t.w1, t.b1)
}

// --- pre-norm block ------------------------------------------------------

pub(crate) struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ffn: FfnCache,
}

/// `x2 = x + attn(ln1(x))`, `y = x2 + ffn(ln2(x2))`.
pub(crate) fn block(x: &Mat, params: &[f64], t: &BlockTensors, n_heads: usize) -> (Mat, BlockCache) {
    let (h1, ln1) = layer_norm(x, &params[t.ln1_g.range()], &params[t.ln1_b.range()]);
    let (a, attn) = attention(&h1, params, t, n_heads);
    let mut x2 = x.clone();
    x2.add_assign(&a);
    let (h2, ln2) = layer_norm(&x2, &params[t.ln2_g.range()], &params[t.ln2_b.range()]);
    let (f, ffn) = ffn(&h2, params, t);
    let mut y = x2;
    y.add_assign(&f);
    (y, BlockCache { ln1, attn, ln2, ffn })
}

pub(crate) fn block_backward(
    dy: &Mat,
    c: &BlockCache,
    params: &[f64],
    grads: &mut [f64],
    t: &BlockTensors,
    n_heads: usize,
) -> Mat {
    let dh2 = ffn_backward(dy, &c.ffn, params, grads, t);
    let mut dx2 = layer_norm_backward(&dh2, &c.ln2, &params[t.ln2_g.range()], grads, t.ln2_g, t.ln2_b);
    dx2.add_assign(dy);
    let dh1 = attention_backward(&dx2, &c.attn, params, grads, t, n_heads);
    let mut dx = layer_norm_backward(&dh1, &c.ln1, &params[t.ln1_g.range()], grads, t.ln1_g, t.ln1_b);
    dx.add_assign(&dx2);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Mat::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]);
        let (y, _) = layer_norm(&x, &[1.0; 4], &[0.0; 4]);
        for r in 0..2 {
            let m = y.row(r).iter().sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
        }
    }
}
