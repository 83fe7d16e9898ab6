//! Turning command-line text into model inputs.

use std::path::Path;

use kw2sent::corpus::toy::LexiconTagger;
use kw2sent::corpus::{keyword_universal_tag, lemmatize, tokenize, PerceptronTagger, PosTagger, Vocabularies};
use kw2sent::model::GenerationInput;

use crate::error::{require_file, CliError, CliResult};

/// Name accepted by `--tagger` for the toy grammar's dictionary tagger.
pub const LEXICON: &str = "lexicon";

pub fn load_tagger(spec: &str) -> CliResult<Box<dyn PosTagger>> {
    if spec == LEXICON {
        return Ok(Box::new(LexiconTagger::new()));
    }
    let path = Path::new(spec);
    require_file(path)?;
    Ok(Box::new(PerceptronTagger::load(path)?))
}

/// Comma-separated keywords, lowercased and lemmatized with the tag the
/// tagger gives each one on its own. Returns (lemmas, universal tags).
pub fn parse_keywords(
    text: &str,
    tagger: &dyn PosTagger,
    vocab: &Vocabularies,
) -> CliResult<(Vec<String>, Vec<String>)> {
    let raw: Vec<String> = text
        .split(',')
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if raw.is_empty() {
        return Err(CliError::data("no keywords given"));
    }
    let mut lemmas = Vec::with_capacity(raw.len());
    let mut tags: Vec<String> = Vec::new();
    for k in raw {
        let u = keyword_universal_tag(&k, tagger, &vocab.tags).unwrap_or_else(|| "X".to_string());
        lemmas.push(lemmatize(&k, &u));
        if vocab.tags.is_content(&u) && !tags.contains(&u) {
            tags.push(u);
        }
    }
    Ok((lemmas, tags))
}

/// Whitespace or comma separated universal tags given with `--keyword-tags`.
pub fn parse_tag_list(text: &str) -> Vec<String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn tag_ids(tags: &[String], vocab: &Vocabularies) -> CliResult<Vec<usize>> {
    tags.iter()
        .map(|t| {
            vocab.tags.id(t).ok_or_else(|| {
                CliError::data(format!(
                    "unknown tag {t:?}; known fine tags: {}; universal tags: {}",
                    vocab.tags.fine_tags().join(" "),
                    vocab.tags.universal_tags().join(" ")
                ))
            })
        })
        .collect()
}

/// Tag sequence of an exemplar sentence.
pub fn exemplar_template(sentence: &str, tagger: &dyn PosTagger) -> CliResult<Vec<String>> {
    let tokens = tokenize(sentence);
    if tokens.is_empty() {
        return Err(CliError::data("exemplar sentence is empty"));
    }
    Ok(tagger.tag_tokens(&tokens))
}

pub enum TemplateSource<'a> {
    Tags(&'a str),
    Exemplar(&'a str),
    None,
}

/// Everything `generate` and the REPL need to run one request.
pub struct Request {
    pub input: GenerationInput,
    pub keywords: Vec<String>,
    pub template: Vec<String>,
    pub unknown: Vec<String>,
}

pub fn build_request(
    keywords: &str,
    template: TemplateSource,
    keyword_tags: Option<&str>,
    no_template: bool,
    tagger: &dyn PosTagger,
    vocab: &Vocabularies,
) -> CliResult<Request> {
    let (lemmas, derived) = parse_keywords(keywords, tagger, vocab)?;
    let kt = match keyword_tags {
        Some(t) => parse_tag_list(t),
        None => derived,
    };
    let template: Vec<String> = match template {
        TemplateSource::Tags(t) => parse_tag_list(t),
        TemplateSource::Exemplar(s) => exemplar_template(s, tagger)?,
        TemplateSource::None => Vec::new(),
    };
    if !no_template {
        if template.is_empty() {
            return Err(CliError::usage("a template or an exemplar is required"));
        }
        if kt.is_empty() {
            return Err(CliError::data(
                "no keyword received a content tag; pass --keyword-tags explicitly",
            ));
        }
    }
    let unknown = lemmas.iter().filter(|w| !vocab.words.contains(w)).cloned().collect();
    let kt_ids = if kt.is_empty() { Vec::new() } else { tag_ids(&kt, vocab)? };
    Ok(Request {
        input: GenerationInput {
            keywords: lemmas.iter().map(|w| vocab.words.id(w)).collect(),
            keyword_tags: kt_ids,
            template: tag_ids(&template, vocab)?,
        },
        keywords: lemmas,
        template,
        unknown,
    })
}
