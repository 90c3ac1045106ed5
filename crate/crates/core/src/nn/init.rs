use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{nn::VarStore, Tensor};

/// Re-initializes every variable from a seeded stream, independent of the
/// libtorch global generator.
///
/// Weights with two or more dimensions and their biases draw from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. One-dimensional weights without a
/// matrix sibling are normalization scales and start at 1, their biases at 0.
pub fn seeded_init(vs: &VarStore, seed: u64) {
    let vars: BTreeMap<String, Tensor> = vs.variables().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tch::no_grad(|| {
        for (name, var) in &vars {
            let shape = var.size();
            let numel: i64 = shape.iter().product();
            let values: Vec<f32> = if shape.len() >= 2 {
                let bound = 1.0 / (fan_in(&shape) as f64).sqrt();
                uniform(&mut rng, numel as usize, bound)
            } else if let Some(stem) = name.strip_suffix("bias") {
                match vars.get(&format!("{stem}weight")) {
                    Some(w) if w.dim() >= 2 => {
                        let bound = 1.0 / (fan_in(&w.size()) as f64).sqrt();
                        uniform(&mut rng, numel as usize, bound)
                    }
                    _ => vec![0.0; numel as usize],
                }
            } else {
                vec![1.0; numel as usize]
            };
            let src = Tensor::from_slice(&values).view(shape.as_slice()).to_kind(var.kind());
            var.shallow_clone().copy_(&src);
        }
    });
}

fn fan_in(shape: &[i64]) -> i64 {
    shape[1..].iter().product::<i64>().max(1)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect()
}

/// Flattened copy of every variable, ordered by name.
pub fn flat_parameters(vs: &VarStore) -> Vec<f32> {
    let vars: BTreeMap<String, Tensor> = vs.variables().into_iter().collect();
    let mut out = Vec::new();
    for var in vars.values() {
        let flat = var.detach().to_kind(tch::Kind::Float).contiguous().view([-1]);
        out.extend(Vec::<f32>::try_from(&flat).expect("float tensor"));
    }
    out
}

pub fn parameter_count(vs: &VarStore) -> usize {
    vs.variables().values().map(|t| t.numel()).sum()
}
