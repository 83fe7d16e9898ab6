//! Trains the desk preset on the toy grammar and prints train/held-out scores.
//!
//! `cargo run --release --example desk_run -- [key=value ...]`

use std::time::Instant;

use kw2sent::corpus::toy::{toy_split, LexiconTagger};
use kw2sent::evalsuite::{evaluate, lambda_summary, EvalContext, EvalScenario};
use kw2sent::model::DecodeMode;
use kw2sent::training::{train, TrainConfig, TrainOptions};

fn main() {
    let mut cfg = TrainConfig::desk();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        cfg.set(k, v).unwrap();
    }
    let split = toy_split(500, 50, 7).unwrap();
    let tagger = LexiconTagger::new();
    println!("vocab {} words, {} train, {} held-out", split.vocab.words.len(), split.train.len(), split.heldout.len());
    let t0 = Instant::now();
    let opts = TrainOptions {
        on_epoch: Some(Box::new(|r| println!("epoch {:>3} loss {:.4}", r.epoch, r.train_loss))),
        ..Default::default()
    };
    let out = train(&split.train, None, &split.vocab, &cfg, opts).unwrap();
    println!("trained in {:.1}s ({} steps)", t0.elapsed().as_secs_f64(), out.steps);
    let ctx = EvalContext { vocab: &split.vocab, tagger: &tagger };
    for (name, data) in [("train", &split.train), ("held-out", &split.heldout)] {
        for mode in [DecodeMode::Greedy, DecodeMode::Beam(5)] {
            let r = evaluate(&out.model, data, ctx, EvalScenario::Exact, mode).unwrap();
            println!(
                "{name:9} {mode:7} bleu {:.2} posmatch {:.2} rouge {:.2} meteor {:.2}",
                r.bleu,
                r.posmatch.unwrap_or(f64::NAN),
                r.rouge_l,
                r.meteor_lite
            );
            if mode == DecodeMode::Greedy {
                let l = lambda_summary(r.records.iter().map(|x| &x.trace), &split.vocab);
                println!("          lambda content {:.3} function {:.3}", l.content_mean, l.function_mean);
            }
        }
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
