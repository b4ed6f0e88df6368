//! Forward kernels. All accumulation happens in `f64`; results are rounded
//! to `f32` once per output element.

use super::{NnetError, Result, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// 3x3 convolution with zero padding 1.
///
/// `input` is `[c_in, h, w]`, `weight` `[c_out, c_in, 3, 3]`, `bias` `[c_out]`.
/// Output spatial size is `(h + 2 - 3) / stride + 1`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    input.expect_rank(3, "conv2d input")?;
    weight.expect_rank(4, "conv2d weight")?;
    bias.expect_rank(1, "conv2d bias")?;
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let c_out = weight.shape()[0];
    if weight.shape()[1..] != [c_in, 3, 3] || bias.shape()[0] != c_out {
        return Err(NnetError::ShapeMismatch(format!(
            "conv2d: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    if !(stride == 1 || stride == 2) {
        return Err(NnetError::ShapeMismatch(format!("conv2d: stride {stride}")));
    }
    if h == 0 || w == 0 {
        return Err(NnetError::ShapeMismatch("conv2d: empty input".into()));
    }
    let oh = (h - 1) / stride + 1;
    let ow = (w - 1) / stride + 1;
    let src = input.data();
    let kernels = weight.data();

    let mut out = Vec::with_capacity(c_out * oh * ow);
    let mut acc = vec![0f64; oh * ow];
    for o in 0..c_out {
        acc.fill(bias.data()[o] as f64);
        for c in 0..c_in {
            let plane = &src[c * h * w..(c + 1) * h * w];
            for dy in 0..3 {
                for dx in 0..3 {
                    let k = kernels[((o * c_in + c) * 3 + dy) * 3 + dx] as f64;
                    if k == 0.0 {
                        continue;
                    }
                    for i in 0..oh {
                        let iy = (i * stride + dy) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let acc_row = &mut acc[i * ow..(i + 1) * ow];
                        for (j, a) in acc_row.iter_mut().enumerate() {
                            let ix = (j * stride + dx) as isize - 1;
                            if ix >= 0 && ix < w as isize {
                                *a += row[ix as usize] as f64 * k;
                            }
                        }
                    }
                }
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

pub fn relu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Element-wise sum of equally shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(NnetError::ShapeMismatch(format!(
            "add: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 + y as f64) as f32)
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `x [n, in] * w [in, out] + b [out]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    x.expect_rank(2, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    bias.expect_rank(1, "linear bias")?;
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = weight.shape()[1];
    if weight.shape()[0] != d_in || bias.shape()[0] != d_out {
        return Err(NnetError::ShapeMismatch(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let w = weight.data();
    let mut out = Vec::with_capacity(n * d_out);
    let mut acc = vec![0f64; d_out];
    for row in x.data().chunks_exact(d_in) {
        for (a, &b) in acc.iter_mut().zip(bias.data()) {
            *a = b as f64;
        }
        for (k, &xv) in row.iter().enumerate() {
            let xv = xv as f64;
            for (a, &wv) in acc.iter_mut().zip(&w[k * d_out..(k + 1) * d_out]) {
                *a += xv * wv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![n, d_out], out)
}

/// Per-row normalization over the last dimension.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    x.expect_rank(2, "layer_norm input")?;
    let d = x.shape()[1];
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(NnetError::ShapeMismatch(format!(
            "layer_norm: input {:?}, gamma {:?}, beta {:?}",
            x.shape(),
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(d) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        out.extend(row.iter().zip(gamma.data()).zip(beta.data()).map(|((&v, &g), &b)| {
            (g as f64 * (v as f64 - mean) * inv + b as f64) as f32
        }));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = gelu(*v as f64) as f32;
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

/// Projection weights for single-head attention; each `w` is `[d, d]`, each `b` `[d]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub q: (&'a Tensor, &'a Tensor),
    pub k: (&'a Tensor, &'a Tensor),
    pub v: (&'a Tensor, &'a Tensor),
    pub o: (&'a Tensor, &'a Tensor),
}

/// Single-head scaled dot-product self-attention.
///
/// Returns the projected output `[n, d]` and the attention matrix `[n, n]`.
pub fn attention(tokens: &Tensor, weights: AttentionWeights<'_>) -> Result<(Tensor, Tensor)> {
    tokens.expect_rank(2, "attention tokens")?;
    let (n, d) = (tokens.shape()[0], tokens.shape()[1]);
    if n == 0 {
        return Err(NnetError::ShapeMismatch("attention: no tokens".into()));
    }
    for (name, (w, b)) in [("q", weights.q), ("k", weights.k), ("v", weights.v), ("o", weights.o)] {
        if w.shape() != [d, d] || b.shape() != [d] {
            return Err(NnetError::ShapeMismatch(format!(
                "attention {name}: weight {:?}, bias {:?} for d = {d}",
                w.shape(),
                b.shape()
            )));
        }
    }
    let q = linear(tokens, weights.q.0, weights.q.1)?;
    let k = linear(tokens, weights.k.0, weights.k.1)?;
    let v = linear(tokens, weights.v.0, weights.v.1)?;
    let scale = 1.0 / (d as f64).sqrt();

    let mut attn = Vec::with_capacity(n * n);
    let mut scores = vec![0f32; n];
    for qi in q.data().chunks_exact(d) {
        for (s, kj) in scores.iter_mut().zip(k.data().chunks_exact(d)) {
            let dot: f64 = qi.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum();
            *s = (dot * scale) as f32;
        }
        attn.extend(softmax(&scores));
    }

    let mut mixed = Vec::with_capacity(n * d);
    let mut acc = vec![0f64; d];
    for row in attn.chunks_exact(n) {
        acc.fill(0.0);
        for (&a, vj) in row.iter().zip(v.data().chunks_exact(d)) {
            let a = a as f64;
            for (s, &x) in acc.iter_mut().zip(vj) {
                *s += a * x as f64;
            }
        }
        mixed.extend(acc.iter().map(|&s| s as f32));
    }
    let mixed = Tensor::new(vec![n, d], mixed)?;
    let out = linear(&mixed, weights.o.0, weights.o.1)?;
    Ok((out, Tensor::new(vec![n, n], attn)?))
}
