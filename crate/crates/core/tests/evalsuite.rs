mod common;

use common::oracles;
use kw2sent::corpus::toy::{toy_split, LexiconTagger};
use kw2sent::corpus::TrainingExample;
use kw2sent::evalsuite::*;
use kw2sent::model::{DecodeMode, Generator, ModelConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| toks(l)).collect()
}

#[test]
fn bleu_identity_and_disjoint() {
    let x = corpus(&["the cat sat on the mat .", "a dog ran"]);
    assert_eq!(bleu(&x, &x).unwrap(), 100.0);
    let y = corpus(&["one two three four five six seven", "eight nine ten"]);
    assert_eq!(bleu(&y, &x).unwrap(), 0.0);
}

#[test]
fn bleu_clips_repeated_unigrams() {
    let c = corpus(&["the the the"]);
    let r = corpus(&["the cat sat"]);
    let st = bleu_stats(&c, &r).unwrap();
    // "the" occurs once in the reference, so only one of three counts
    assert_eq!(st.matches[0], 1);
    assert_eq!(st.totals[0], 3);
    assert!((st.precision(1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    // no bigram matches and no smoothing
    assert_eq!(st.matches[1], 0);
    assert_eq!(bleu(&c, &r).unwrap(), 0.0);
}

#[test]
fn bleu_hand_computed_with_brevity_penalty() {
    let c = corpus(&["a b c d"]);
    let r = corpus(&["a b c d e"]);
    // all precisions are 1; BP = exp(1 - 5/4)
    let want = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
    assert!((bleu(&c, &r).unwrap() - want).abs() < 1e-12);
}

#[test]
fn bleu_of_short_sentences_against_themselves() {
    let x = corpus(&["a", "b c"]);
    assert_eq!(bleu(&x, &x).unwrap(), 100.0);
}

#[test]
fn metrics_reject_bad_inputs() {
    let empty: Vec<Vec<String>> = Vec::new();
    assert!(matches!(bleu(&empty, &empty), Err(EvalError::Empty)));
    assert!(matches!(rouge_l(&empty, &empty), Err(EvalError::Empty)));
    assert!(matches!(meteor_lite(&empty, &empty), Err(EvalError::Empty)));
    let one = corpus(&["a"]);
    let two = corpus(&["a", "b"]);
    assert!(matches!(bleu(&one, &two), Err(EvalError::LengthMismatch { .. })));
}

#[test]
fn rouge_l_hand_example_and_lcs_oracle() {
    let c = toks("a b c d");
    let r = toks("a c d");
    assert_eq!(lcs_len(&c, &r), 3);
    assert_eq!(oracles::lcs_brute(&c, &r), 3);
    let (p, rec) = (3.0 / 4.0, 1.0);
    let b2 = 1.44;
    let want = (1.0 + b2) * rec * p / (rec + b2 * p);
    assert!((rouge_l_sentence(&c, &r) - want).abs() < 1e-15);
    assert!((rouge_l(&[c], &[r]).unwrap() - 100.0 * want).abs() < 1e-12);
}

#[test]
fn rouge_l_identity_and_disjoint() {
    let x = corpus(&["the cat sat", "a b"]);
    assert_eq!(rouge_l(&x, &x).unwrap(), 100.0);
    assert_eq!(rouge_l(&corpus(&["x y"]), &corpus(&["z"])).unwrap(), 0.0);
}

#[test]
fn meteor_identity_has_one_chunk() {
    let x = corpus(&["the cat sat on the mat"]);
    let m = 6.0f64;
    let want = 100.0 * (1.0 - 0.5 * (1.0 / m).powi(3));
    assert!((meteor_lite(&x, &x).unwrap() - want).abs() < 1e-12);
}

#[test]
fn meteor_zero_matches() {
    assert_eq!(meteor_lite(&corpus(&["a b"]), &corpus(&["c d"])).unwrap(), 0.0);
}

#[test]
fn meteor_hand_example() {
    let c = corpus(&["the cat sat"]);
    let r = corpus(&["the cat sat down"]);
    let st = meteor_stats(&c, &r).unwrap();
    assert_eq!((st.matches, st.chunks), (3, 1));
    let (p, rec) = (1.0, 0.75);
    let fmean = p * rec / (0.9 * p + 0.1 * rec);
    let want = 100.0 * fmean * (1.0 - 0.5 * (1.0f64 / 3.0).powi(3));
    assert!((meteor_lite(&c, &r).unwrap() - want).abs() < 1e-12);
}

#[test]
fn meteor_stem_stage_and_chunks() {
    let sm = StemMatcher::default();
    // "cats" matches "cat" only through its stem
    let st = sm.sentence_stats(&toks("cats sat"), &toks("cat sat"));
    assert_eq!((st.matches, st.chunks), (2, 1));
    // swapped order: two chunks
    let st = sm.sentence_stats(&toks("sat cat"), &toks("cat sat"));
    assert_eq!((st.matches, st.chunks), (2, 2));
    // exact matches claim reference tokens before stems do
    let pairs = sm.align(&toks("cats cat"), &toks("cat cats"));
    assert_eq!(pairs, vec![(0, 1), (1, 0)]);
}

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (c, r) = oracles::random_pairs(&mut rng, 50, 8);
    for i in 0..c.len() {
        let (ci, ri) = (&c[i..=i], &r[i..=i]);
        assert!((bleu(ci, ri).unwrap() - oracles::bleu(ci, ri)).abs() < 1e-9, "bleu pair {i}");
        assert!((rouge_l(ci, ri).unwrap() - oracles::rouge_l(ci, ri)).abs() < 1e-9, "rouge pair {i}");
        assert!(
            (meteor_lite(ci, ri).unwrap() - oracles::meteor_lite(ci, ri)).abs() < 1e-9,
            "meteor pair {i}"
        );
    }
    assert!((bleu(&c, &r).unwrap() - oracles::bleu(&c, &r)).abs() < 1e-9);
    assert!((rouge_l(&c, &r).unwrap() - oracles::rouge_l(&c, &r)).abs() < 1e-9);
    assert!((meteor_lite(&c, &r).unwrap() - oracles::meteor_lite(&c, &r)).abs() < 1e-9);
}

#[test]
fn posmatch_cases() {
    let t = corpus(&["DT NN VBD .", "DT NNS"]);
    assert_eq!(posmatch(&t, &t).unwrap(), 100.0);
    let wrong = corpus(&["NN DT . VBD", "JJ JJ"]);
    assert_eq!(posmatch(&wrong, &t).unwrap(), 0.0);
    let half = corpus(&["DT NN JJ JJ", "DT NNS"]);
    assert_eq!(posmatch(&half, &t).unwrap(), 75.0);
    assert_eq!(posmatch_binary(&half, &t).unwrap(), 50.0);
    let short = corpus(&["DT", "DT NNS"]);
    assert!(matches!(posmatch(&short, &t), Err(EvalError::Validation(_))));
}

fn small_model(split_vocab: usize, tags: usize, no_template: bool, seed: u64) -> Generator<f64> {
    let cfg = ModelConfig {
        dropout: 0.0,
        init_scale: 0.3,
        no_template,
        ..ModelConfig::uniform(split_vocab, tags, 12)
    };
    Generator::new(cfg, seed).unwrap()
}

#[test]
fn evaluate_reports_and_errors() {
    let split = toy_split(40, 10, 3).unwrap();
    let tagger = LexiconTagger::new();
    let ctx = EvalContext {
        vocab: &split.vocab,
        tagger: &tagger,
    };
    let g = small_model(split.vocab.words.len(), split.vocab.tags.len(), false, 1);
    let empty: Vec<TrainingExample> = Vec::new();
    assert!(matches!(
        evaluate(&g, &empty, ctx, EvalScenario::Exact, DecodeMode::Greedy),
        Err(EvalError::Empty)
    ));
    let r = evaluate(&g, &split.heldout, ctx, EvalScenario::Exact, DecodeMode::Greedy).unwrap();
    assert_eq!(r.n_examples, 10);
    assert_eq!(r.records.len(), 10);
    for v in [r.bleu, r.rouge_l, r.meteor_lite, r.posmatch.unwrap()] {
        assert!((0.0..=100.0).contains(&v));
    }
    for (rec, ex) in r.records.iter().zip(&split.heldout) {
        assert_eq!(rec.prediction.len(), ex.template.len());
        assert_eq!(rec.trace.steps.len(), ex.template.len());
    }
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for k in ["scenario", "decode_mode", "bleu", "meteor_lite", "rouge_l", "posmatch", "n_examples"] {
        assert!(json.get(k).is_some(), "report lacks {k}");
    }
    let again = evaluate(&g, &split.heldout, ctx, EvalScenario::Exact, DecodeMode::Greedy).unwrap();
    assert_eq!(r.to_json(), again.to_json());

    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.jsonl");
    r.write_audit(&audit).unwrap();
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 10);
}

#[test]
fn similar_templates_come_from_other_examples() {
    let split = toy_split(60, 0, 5).unwrap();
    let idx = exemplar_indices(&split.train);
    for (i, &j) in idx.iter().enumerate() {
        assert_ne!(i, j);
        assert_ne!(split.train[i].template, split.train[j].template);
    }
    assert_eq!(idx, exemplar_indices(&split.train));
}

#[test]
fn baseline_has_no_posmatch() {
    let split = toy_split(20, 5, 4).unwrap();
    let tagger = LexiconTagger::new();
    let ctx = EvalContext {
        vocab: &split.vocab,
        tagger: &tagger,
    };
    let g = small_model(split.vocab.words.len(), split.vocab.tags.len(), true, 2);
    let r = evaluate(&g, &split.heldout, ctx, EvalScenario::Exact, DecodeMode::Greedy).unwrap();
    assert!(r.posmatch.is_none());
    assert!(r.records.iter().all(|x| x.prediction.len() <= 30));
}

#[test]
fn reversal_deltas_are_zero_for_the_template_model() {
    let split = toy_split(30, 20, 8).unwrap();
    let tagger = LexiconTagger::new();
    let ctx = EvalContext {
        vocab: &split.vocab,
        tagger: &tagger,
    };
    let g = small_model(split.vocab.words.len(), split.vocab.tags.len(), false, 3);
    for mode in [DecodeMode::Greedy, DecodeMode::Beam(3)] {
        let rep = reversal_robustness(&g, &split.heldout, ctx, EvalScenario::Exact, mode).unwrap();
        assert_eq!(rep.deltas.bleu, 0.0);
        assert_eq!(rep.deltas.meteor_lite, 0.0);
        assert_eq!(rep.deltas.rouge_l, 0.0);
        assert_eq!(rep.deltas.posmatch, Some(0.0));
    }
}

#[test]
fn reversing_single_keyword_examples_changes_nothing() {
    let split = toy_split(30, 20, 9).unwrap();
    let single: Vec<TrainingExample> = split
        .heldout
        .iter()
        .map(|e| TrainingExample {
            keywords: e.keywords[..1].to_vec(),
            keyword_tags: e.keyword_tags[..1].to_vec(),
            ..e.clone()
        })
        .collect();
    let tagger = LexiconTagger::new();
    let ctx = EvalContext {
        vocab: &split.vocab,
        tagger: &tagger,
    };
    let g = small_model(split.vocab.words.len(), split.vocab.tags.len(), true, 4);
    let rep = reversal_robustness(&g, &single, ctx, EvalScenario::Exact, DecodeMode::Greedy).unwrap();
    assert_eq!(rep.deltas.bleu, 0.0);
    assert_eq!(rep.deltas.rouge_l, 0.0);
    assert_eq!(rep.deltas.meteor_lite, 0.0);
}

fn sentences() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "the", "dogs", "dog"]), 1..7)
            .prop_map(|v| v.into_iter().map(str::to_string).collect::<Vec<_>>()),
        1..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn self_scores_are_perfect(x in sentences()) {
        prop_assert_eq!(bleu(&x, &x).unwrap(), 100.0);
        prop_assert_eq!(rouge_l(&x, &x).unwrap(), 100.0);
    }

    #[test]
    fn scores_stay_in_range_and_repeat(c in sentences(), r in sentences()) {
        let n = c.len().min(r.len());
        let (c, r) = (&c[..n], &r[..n]);
        for f in [bleu::<String>, rouge_l::<String>, meteor_lite::<String>] {
            let a = f(c, r).unwrap();
            prop_assert!((0.0..=100.0).contains(&a));
            prop_assert_eq!(a.to_bits(), f(c, r).unwrap().to_bits());
        }
    }
}
