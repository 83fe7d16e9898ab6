#![allow(dead_code)]

pub mod oracles;

use kw2sent::corpus::TrainingExample;
use kw2sent::model::{Batch, GenerationInput, Generator, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random example over word ids `4..vocab` and tag ids `0..tags`.
pub fn random_example(rng: &mut impl Rng, vocab: usize, tags: usize, max_n: usize, max_m: usize) -> TrainingExample {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let u = rng.gen_range(1..=tags.min(3));
    let mut kt: Vec<usize> = (0..tags).collect();
    kt.shuffle(rng);
    kt.truncate(u);
    TrainingExample {
        keywords: (0..n).map(|_| rng.gen_range(4..vocab)).collect(),
        keyword_tags: kt,
        template: (0..m).map(|_| rng.gen_range(0..tags)).collect(),
        reference: (0..m).map(|_| rng.gen_range(4..vocab)).collect(),
    }
}

pub fn input(ex: &TrainingExample) -> GenerationInput {
    GenerationInput::from(ex)
}

pub fn small_config(vocab: usize, tags: usize, d: usize) -> ModelConfig {
    ModelConfig {
        dropout: 0.0,
        ..ModelConfig::uniform(vocab, tags, d)
    }
}

/// Replaces the identity tag embedding with random values so that cosine
/// scores are free of ties.
pub fn randomize_tags(g: &mut Generator<f64>, rng: &mut impl Rng) {
    if let Some(t) = g.params.get_mut("tag_embedding") {
        for x in t.data_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
}

pub fn batch(examples: &[TrainingExample]) -> Batch {
    let refs: Vec<&TrainingExample> = examples.iter().collect();
    Batch::from_examples(&refs).unwrap()
}

/// Smallest gap between the best and second-best cosine score over every
/// template position of the batch examples (infinite when U = 1).
pub fn min_cosine_gap(g: &Generator<f64>, examples: &[TrainingExample]) -> f64 {
    let Some(e) = g.params.get("tag_embedding") else { return f64::INFINITY };
    let t = e.shape()[1];
    let row = |i: usize| &e.data()[i * t..(i + 1) * t];
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut gap = f64::INFINITY;
    for ex in examples {
        for &tt in &ex.template {
            let mut s: Vec<f64> = ex.keyword_tags.iter().map(|&k| cos(row(tt), row(k))).collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if s.len() > 1 {
                gap = gap.min(s[0] - s[1]);
            }
        }
    }
    gap
}

pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Central finite differences of the batch loss against the analytic
/// gradient for every entry of every parameter. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(g: &Generator<f64>, b: &Batch, h: f64, floor: f64) -> Vec<GroupCheck> {
    let mut analytic = g.clone();
    analytic.params.zero_grads();
    analytic.loss_and_grad(b, None).unwrap();
    let mut probe = g.clone();
    let names: Vec<String> = g.params.names().map(str::to_string).collect();
    let mut out = Vec::new();
    for name in names {
        let grad = analytic.params.get(&name).unwrap().grad().unwrap().to_vec();
        let n = grad.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let orig = probe.params.get(&name).unwrap().data()[i];
            probe.params.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let up = probe.forward_loss(b, None).unwrap();
            probe.params.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let down = probe.forward_loss(b, None).unwrap();
            probe.params.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
        out.push(GroupCheck {
            name,
            checked: n,
            max_rel_err: worst,
        });
    }
    out
}
