//! Independent reference implementations used as test oracles. Everything
//! here is written from the layer definitions with plain loops in f64 and
//! shares no code with the library kernels.
#![allow(dead_code)]

use phydcm_core::nnet::rng::SplitMix64;
use phydcm_core::nnet::WeightTable;

/// Deterministic uniform values in [lo, hi) for test data.
pub struct Gen(SplitMix64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(SplitMix64::new(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn vec_f32(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f32> {
        (0..n).map(|_| self.uniform(lo, hi) as f32).collect()
    }
}

/// Direct 3x3 convolution, zero padding 1, weight [co][ci][3][3].
pub fn naive_conv2d(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let c_out = bias.len();
    let oh = (h + 2 - 3) / stride + 1;
    let ow = (w + 2 - 3) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = bias[o];
                for c in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let y = (i * stride + ky) as i64 - 1;
                            let xx = (j * stride + kx) as i64 - 1;
                            if y < 0 || xx < 0 || y >= h as i64 || xx >= w as i64 {
                                continue;
                            }
                            s += weight[o * c_in * 9 + c * 9 + ky * 3 + kx]
                                * x[c * h * w + y as usize * w + xx as usize];
                        }
                    }
                }
                out[o * oh * ow + i * ow + j] = s;
            }
        }
    }
    (out, oh, ow)
}

/// y[n][o] = b[o] + sum_k x[n][k] w[k][o].
pub fn naive_linear(x: &[f64], n: usize, d_in: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let d_out = b.len();
    let mut y = vec![0.0; n * d_out];
    for r in 0..n {
        for o in 0..d_out {
            let mut s = b[o];
            for k in 0..d_in {
                s += x[r * d_in + k] * w[k * d_out + o];
            }
            y[r * d_out + o] = s;
        }
    }
    y
}

pub fn naive_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub struct AttnParams<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub bk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
}

/// Three-loop single-head attention; returns (output [n][d], weights [n][n]).
pub fn naive_attention(x: &[f64], n: usize, d: usize, p: &AttnParams) -> (Vec<f64>, Vec<f64>) {
    let q = naive_linear(x, n, d, p.wq, p.bq);
    let k = naive_linear(x, n, d, p.wk, p.bk);
    let v = naive_linear(x, n, d, p.wv, p.bv);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let mut row = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..d {
                s += q[i * d + c] * k[j * d + c];
            }
            row[j] = s / (d as f64).sqrt();
        }
        a[i * n..(i + 1) * n].copy_from_slice(&naive_softmax(&row));
    }
    let mut mixed = vec![0.0; n * d];
    for i in 0..n {
        for c in 0..d {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * v[j * d + c];
            }
            mixed[i * d + c] = s;
        }
    }
    (naive_linear(&mixed, n, d, p.wo, p.bo), a)
}

fn layer_norm(x: &[f64], n: usize, d: usize, g: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n * d];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        for c in 0..d {
            y[r * d + c] = g[c] * (row[c] - mean) / (var + 1e-5).sqrt() + b[c];
        }
    }
    y
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Straight-line forward pass of the whole classifier, entirely in f64.
/// Returns (probabilities, logits).
pub fn reference_forward(wt: &WeightTable, input: &[f32]) -> (Vec<f64>, Vec<f64>) {
    let p = |name: &str| -> Vec<f64> { wt.get(name).unwrap().data().iter().map(|&v| v as f64).collect() };
    let conv = |x: &[f64], c: usize, h: usize, w: usize, stage: &str, stride: usize| {
        naive_conv2d(x, c, h, w, &p(&format!("{stage}.w")), &p(&format!("{stage}.b")), stride)
    };

    let x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let (mut x, h, w) = conv(&x, 1, 224, 224, "stem", 2);
    relu(&mut x);
    let (mut x, h, w) = conv(&x, 8, h, w, "down1", 2);
    relu(&mut x);
    for block in ["res1", "res2"] {
        let (mut t, _, _) = conv(&x, 16, h, w, &format!("{block}.c1"), 1);
        relu(&mut t);
        let (t, _, _) = conv(&t, 16, h, w, &format!("{block}.c2"), 1);
        x = x.iter().zip(&t).map(|(a, b)| (a + b).max(0.0)).collect();
    }
    let (mut x, h, w) = conv(&x, 16, h, w, "down2", 2);
    relu(&mut x);
    let (mut x, h, w) = conv(&x, 32, h, w, "down3", 2);
    relu(&mut x);
    assert_eq!((h, w), (14, 14));

    let (n, d) = (196, 32);
    let mut tok = vec![0.0; n * d];
    for t in 0..n {
        for c in 0..d {
            tok[t * d + c] = x[c * n + t];
        }
    }

    for tb in ["tb1", "tb2"] {
        let q = |s: &str| p(&format!("{tb}.{s}"));
        let normed = layer_norm(&tok, n, d, &q("ln1.g"), &q("ln1.b"));
        let (wq, bq, wk, bk) = (q("q.w"), q("q.b"), q("k.w"), q("k.b"));
        let (wv, bv, wo, bo) = (q("v.w"), q("v.b"), q("o.w"), q("o.b"));
        let params = AttnParams {
            wq: &wq,
            bq: &bq,
            wk: &wk,
            bk: &bk,
            wv: &wv,
            bv: &bv,
            wo: &wo,
            bo: &bo,
        };
        let (att, _) = naive_attention(&normed, n, d, &params);
        tok = tok.iter().zip(&att).map(|(a, b)| a + b).collect();
        let normed = layer_norm(&tok, n, d, &q("ln2.g"), &q("ln2.b"));
        let hidden: Vec<f64> = naive_linear(&normed, n, d, &q("mlp.fc1.w"), &q("mlp.fc1.b"))
            .into_iter()
            .map(gelu)
            .collect();
        let mlp = naive_linear(&hidden, n, 64, &q("mlp.fc2.w"), &q("mlp.fc2.b"));
        tok = tok.iter().zip(&mlp).map(|(a, b)| a + b).collect();
    }

    let mut pooled = vec![0.0; d];
    for t in 0..n {
        for c in 0..d {
            pooled[c] += tok[t * d + c] / n as f64;
        }
    }
    let logits = naive_linear(&pooled, 1, d, &p("head.w"), &p("head.b"));
    (naive_softmax(&logits), logits)
}
