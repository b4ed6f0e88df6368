use super::ops::{self, AttentionWeights, LAYER_NORM_EPS};
use super::schema::{EMBED_DIM, GRID, INPUT_SHAPE, TRANSFORMER_BLOCKS};
use super::{NnetError, Result, Tensor, WeightTable};
use crate::preprocess::ImageTensor;

/// Intermediate shapes and attention matrices from one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub shapes: Vec<(String, Vec<usize>)>,
    /// One `[n, n]` matrix per transformer block.
    pub attention: Vec<Tensor>,
    pub logits: Vec<f32>,
}

impl ForwardTrace {
    fn record(&mut self, stage: &str, t: &Tensor) {
        self.shapes.push((stage.to_string(), t.shape().to_vec()));
    }
}

/// MedViT-lite v1 classifier bound to a validated weight table.
///
/// The forward pass is pure, so one model can serve concurrent callers.
#[derive(Debug, Clone)]
pub struct Model {
    weights: WeightTable,
}

impl Model {
    pub fn new(weights: WeightTable) -> Self {
        Model { weights }
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    pub fn output_dim(&self) -> usize {
        self.weights
            .get("head.b")
            .map(|b| b.len())
            .unwrap_or_default()
    }

    /// Class probabilities for a `[1, 224, 224]` input.
    pub fn forward(&self, input: &ImageTensor) -> Result<Vec<f32>> {
        self.run(input, None)
    }

    /// As [`Model::forward`], also returning every stage's shape and the
    /// attention matrices.
    pub fn forward_traced(&self, input: &ImageTensor) -> Result<(Vec<f32>, ForwardTrace)> {
        let mut trace = ForwardTrace::default();
        let probs = self.run(input, Some(&mut trace))?;
        Ok((probs, trace))
    }

    fn w(&self, name: &str) -> Result<&Tensor> {
        self.weights.get(name)
    }

    fn conv(&self, x: &Tensor, stage: &str, stride: usize, relu: bool) -> Result<Tensor> {
        let mut y = ops::conv2d(x, self.w(&format!("{stage}.w"))?, self.w(&format!("{stage}.b"))?, stride)?;
        if relu {
            ops::relu_inplace(&mut y);
        }
        Ok(y)
    }

    fn residual(&self, x: &Tensor, block: &str) -> Result<Tensor> {
        let h = self.conv(x, &format!("{block}.c1"), 1, true)?;
        let h = self.conv(&h, &format!("{block}.c2"), 1, false)?;
        let mut y = ops::add(x, &h)?;
        ops::relu_inplace(&mut y);
        Ok(y)
    }

    fn dense(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        ops::linear(x, self.w(&format!("{name}.w"))?, self.w(&format!("{name}.b"))?)
    }

    fn transformer(&self, x: &Tensor, tb: &str) -> Result<(Tensor, Tensor)> {
        let ln = |x: &Tensor, which: &str| -> Result<Tensor> {
            ops::layer_norm(
                x,
                self.w(&format!("{tb}.{which}.g"))?,
                self.w(&format!("{tb}.{which}.b"))?,
                LAYER_NORM_EPS,
            )
        };
        let pair = |p: &str| -> Result<(&Tensor, &Tensor)> {
            Ok((self.w(&format!("{tb}.{p}.w"))?, self.w(&format!("{tb}.{p}.b"))?))
        };
        let weights = AttentionWeights {
            q: pair("q")?,
            k: pair("k")?,
            v: pair("v")?,
            o: pair("o")?,
        };
        let (attended, attn) = ops::attention(&ln(x, "ln1")?, weights)?;
        let x = ops::add(x, &attended)?;

        let mut hidden = self.dense(&ln(&x, "ln2")?, &format!("{tb}.mlp.fc1"))?;
        ops::gelu_inplace(&mut hidden);
        let mlp = self.dense(&hidden, &format!("{tb}.mlp.fc2"))?;
        Ok((ops::add(&x, &mlp)?, attn))
    }

    fn run(&self, input: &ImageTensor, mut trace: Option<&mut ForwardTrace>) -> Result<Vec<f32>> {
        let shape = [input.channels, input.height, input.width];
        if shape != INPUT_SHAPE {
            return Err(NnetError::ShapeMismatch(format!(
                "model input must be {INPUT_SHAPE:?}, got {shape:?}"
            )));
        }
        let mut record = |stage: &str, t: &Tensor| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.record(stage, t);
            }
        };
        let x = Tensor::new(shape.to_vec(), input.data.clone())?;
        record("input", &x);

        let x = self.conv(&x, "stem", 2, true)?;
        record("stem", &x);
        let x = self.conv(&x, "down1", 2, true)?;
        record("down1", &x);
        let x = self.residual(&x, "res1")?;
        record("res1", &x);
        let x = self.residual(&x, "res2")?;
        record("res2", &x);
        let x = self.conv(&x, "down2", 2, true)?;
        record("down2", &x);
        let x = self.conv(&x, "down3", 2, true)?;
        record("down3", &x);

        let mut tokens = tokenize(&x)?;
        record("tokens", &tokens);
        let mut attention = Vec::with_capacity(TRANSFORMER_BLOCKS.len());
        for tb in TRANSFORMER_BLOCKS {
            let (next, attn) = self.transformer(&tokens, tb)?;
            tokens = next;
            record(tb, &tokens);
            attention.push(attn);
        }

        // Pooled features and logits are single rows; report them as vectors.
        let pooled = global_average_pool(&tokens);
        record("gap", &Tensor::new(vec![pooled.len()], pooled.data().to_vec())?);
        let logits = self.dense(&pooled, "head")?;
        record("head", &Tensor::new(vec![logits.len()], logits.data().to_vec())?);
        let probs = ops::softmax(logits.data());
        if let Some(tr) = trace {
            tr.shapes.push(("softmax".into(), vec![probs.len()]));
            tr.attention = attention;
            tr.logits = logits.into_data();
        }
        Ok(probs)
    }
}

/// `[c, h, w]` feature map to `[h*w, c]` tokens in row-major spatial order.
fn tokenize(x: &Tensor) -> Result<Tensor> {
    if x.shape() != [EMBED_DIM, GRID, GRID] {
        return Err(NnetError::ShapeMismatch(format!(
            "tokenize expects [{EMBED_DIM}, {GRID}, {GRID}], got {:?}",
            x.shape()
        )));
    }
    let plane = GRID * GRID;
    let data = x.data();
    Tensor::new(
        vec![plane, EMBED_DIM],
        (0..plane)
            .flat_map(|t| (0..EMBED_DIM).map(move |c| data[c * plane + t]))
            .collect(),
    )
}

/// Mean over tokens, kept as a `[1, d]` row for the head.
fn global_average_pool(tokens: &Tensor) -> Tensor {
    let (n, d) = (tokens.shape()[0], tokens.shape()[1]);
    let mut acc = vec![0f64; d];
    for row in tokens.data().chunks_exact(d) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    Tensor::from_fn(vec![1, d], |i| (acc[i] / n as f64) as f32)
}
