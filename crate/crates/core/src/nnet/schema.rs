//! The fixed MedViT-lite v1 parameter schedule.

/// Token width inside the transformer blocks.
pub const EMBED_DIM: usize = 32;
pub const MLP_HIDDEN: usize = 64;
pub const NUM_CLASSES: usize = 4;
/// Side length of the final feature map; tokens = GRID * GRID.
pub const GRID: usize = 14;
pub const INPUT_SHAPE: [usize; 3] = [1, 224, 224];

/// Convolution stages as (name, c_in, c_out, stride).
pub const CONV_STAGES: [(&str, usize, usize, usize); 8] = [
    ("stem", 1, 8, 2),
    ("down1", 8, 16, 2),
    ("res1.c1", 16, 16, 1),
    ("res1.c2", 16, 16, 1),
    ("res2.c1", 16, 16, 1),
    ("res2.c2", 16, 16, 1),
    ("down2", 16, 32, 2),
    ("down3", 32, 32, 2),
];

pub const TRANSFORMER_BLOCKS: [&str; 2] = ["tb1", "tb2"];

/// Every parameter tensor, in file and generation order, with its shape.
/// Dense weights are stored `[in, out]`.
pub fn parameter_schema() -> Vec<(String, Vec<usize>)> {
    let mut schema = Vec::new();
    for (name, c_in, c_out, _) in CONV_STAGES {
        schema.push((format!("{name}.w"), vec![c_out, c_in, 3, 3]));
        schema.push((format!("{name}.b"), vec![c_out]));
    }
    let d = EMBED_DIM;
    for tb in TRANSFORMER_BLOCKS {
        schema.push((format!("{tb}.ln1.g"), vec![d]));
        schema.push((format!("{tb}.ln1.b"), vec![d]));
        for proj in ["q", "k", "v", "o"] {
            schema.push((format!("{tb}.{proj}.w"), vec![d, d]));
            schema.push((format!("{tb}.{proj}.b"), vec![d]));
        }
        schema.push((format!("{tb}.ln2.g"), vec![d]));
        schema.push((format!("{tb}.ln2.b"), vec![d]));
        schema.push((format!("{tb}.mlp.fc1.w"), vec![d, MLP_HIDDEN]));
        schema.push((format!("{tb}.mlp.fc1.b"), vec![MLP_HIDDEN]));
        schema.push((format!("{tb}.mlp.fc2.w"), vec![MLP_HIDDEN, d]));
        schema.push((format!("{tb}.mlp.fc2.b"), vec![d]));
    }
    schema.push(("head.w".into(), vec![d, NUM_CLASSES]));
    schema.push(("head.b".into(), vec![NUM_CLASSES]));
    schema
}

/// Layer-norm gain tensors (initialised to 1 in fixtures).
pub fn is_norm_gain(name: &str) -> bool {
    name.ends_with(".ln1.g") || name.ends_with(".ln2.g")
}

/// Layer-norm bias tensors (initialised to 0 in fixtures).
pub fn is_norm_bias(name: &str) -> bool {
    name.ends_with(".ln1.b") || name.ends_with(".ln2.b")
}
