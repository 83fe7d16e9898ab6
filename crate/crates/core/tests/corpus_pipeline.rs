use kw2sent::corpus::toy::{LexiconTagger, ToyGrammar};
use kw2sent::corpus::*;
use proptest::prelude::*;

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn lexicon_tagging_of_a_toy_sentence() {
    let tagger = LexiconTagger::new();
    let s = tag_sentence(&strings(&["the", "dog", "barked"]), &tagger).unwrap();
    // "barked" is not in the toy lexicon; the known words are tagged exactly
    assert_eq!(&s.tags[..2], &["DT", "NN"]);
    let s = tag_sentence(&strings(&["the", "dog", "ran"]), &tagger).unwrap();
    assert_eq!(s.tags, strings(&["DT", "NN", "VBD"]));
    assert!(tag_sentence(&[], &tagger).is_err());
}

#[test]
fn extraction_follows_the_procedure() {
    let tags = TagVocabulary::penn();
    let corpus: Vec<TaggedSentence> = ["the_DT dog_NN barked_VBD", "the_DT dog_NN barks_VBZ ._."]
        .iter()
        .map(|l| TaggedSentence::parse_pretagged(l).unwrap())
        .collect();
    // a tagger that has seen "bark" as a verb and "dog" as a noun
    let mut train = corpus.clone();
    train.push(TaggedSentence::parse_pretagged("dogs_NNS will_MD bark_VB").unwrap());
    let tagger = train_perceptron_tagger(&train, 10, 1).unwrap();
    assert_eq!(tagger.tag_tokens(&strings(&["dog"])), vec!["NN"]);
    assert_eq!(tagger.tag_tokens(&strings(&["bark"])), vec!["VB"]);

    let r = extract_record(&corpus[0], &tagger, &tags).unwrap();
    assert_eq!(r.keywords, strings(&["dog", "bark"]));
    assert_eq!(r.keyword_tags, strings(&["NOUN", "VERB"]));
    assert_eq!(r.template, strings(&["DT", "NN", "VBD"]));
    assert_eq!(r.reference, strings(&["the", "dog", "barked"]));

    let function_only = TaggedSentence::parse_pretagged("the_DT of_IN ._.").unwrap();
    assert!(matches!(
        extract_record(&function_only, &tagger, &tags),
        Err(CorpusError::NoContentWords)
    ));
}

#[test]
fn duplicate_keywords_are_kept_and_tags_are_unique() {
    let tags = TagVocabulary::penn();
    let tagger = LexiconTagger::new();
    let s = TaggedSentence::parse_pretagged("the_DT dog_NN likes_VBZ the_DT dogs_NNS ._.").unwrap();
    let r = extract_record(&s, &tagger, &tags).unwrap();
    assert_eq!(r.keywords, strings(&["dog", "like", "dog"]));
    assert_eq!(r.keyword_tags, strings(&["NOUN", "VERB"]));
}

#[test]
fn perceptron_closed_test_on_toy_corpus() {
    let corpus = ToyGrammar::default().corpus(500, 11);
    let tagger = train_perceptron_tagger(&corpus, 10, 11).unwrap();
    let acc = tagger.accuracy(&corpus);
    assert!(acc >= 0.97, "accuracy {acc}");
    let again = train_perceptron_tagger(&corpus, 10, 11).unwrap();
    assert_eq!(tagger, again);
}

#[test]
fn toy_examples_satisfy_dataset_invariants() {
    let tags = TagVocabulary::penn();
    let tagger = LexiconTagger::new();
    let records: Vec<DatasetRecord> = ToyGrammar::default()
        .corpus(300, 2)
        .iter()
        .map(|s| extract_record(s, &tagger, &tags).unwrap())
        .collect();
    let vocab = Vocabularies::build(&records, tags.clone(), 1);
    for r in &records {
        let ex = vocab.encode(r).unwrap();
        assert_eq!(ex.reference.len(), ex.template.len());
        let mut kt = ex.keyword_tags.clone();
        kt.sort();
        kt.dedup();
        assert_eq!(kt.len(), ex.keyword_tags.len());
        for &t in &ex.keyword_tags {
            assert!(tags.universal_id(tags.tag(t).unwrap()).is_some());
        }
        for (k, &id) in r.keywords.iter().zip(&ex.keywords) {
            assert_ne!(id, PAD);
            assert_ne!(id, UNK);
            let fine = tagger.tag_tokens(&[k.clone()]);
            let u = tags.universal_of(&fine[0]).unwrap();
            assert_eq!(&lemmatize(k, u), k);
        }
    }
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/data.jsonl");
    let tags = TagVocabulary::penn();
    let tagger = LexiconTagger::new();
    let records: Vec<DatasetRecord> = ToyGrammar::default()
        .corpus(50, 3)
        .iter()
        .map(|s| extract_record(s, &tagger, &tags).unwrap())
        .collect();
    save_dataset(&path, &records).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), records);
    let stats = corpus_stats(&records);
    assert_eq!(stats.count, 50);
    assert!(!stats.undefined);
}

fn token() -> impl Strategy<Value = String> {
    "[a-z\\.'\"\\\\é]{1,6}"
}

fn record() -> impl Strategy<Value = DatasetRecord> {
    (1usize..6, 1usize..4, 1usize..10).prop_flat_map(|(n, u, m)| {
        (
            prop::collection::vec(token(), n),
            prop::collection::btree_set("[A-Z]{1,4}", u),
            prop::collection::vec("[A-Z$]{1,4}", m),
            prop::collection::vec(token(), m),
        )
            .prop_map(|(keywords, kt, template, reference)| DatasetRecord {
                keywords,
                keyword_tags: kt.into_iter().collect(),
                template,
                reference,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]
    #[test]
    fn round_trip_of_1000_random_records(records in prop::collection::vec(record(), 1000)) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &records).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn lemmatize_is_idempotent(w in "[a-z]{1,12}", t in prop::sample::select(vec!["NOUN", "VERB", "ADJ", "ADV", "DET"])) {
        let once = lemmatize(&w, t);
        prop_assert_eq!(lemmatize(&once, t), once);
    }
}
