use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use kw2sent::corpus::toy::ToyGrammar;
use kw2sent::corpus::{
    corpus_stats, extract_record, load_dataset, load_pretagged, save_dataset, tag_sentence, tokenize,
    train_perceptron_tagger, CorpusError, DatasetRecord, PosTagger, TagVocabulary, TaggedSentence, TrainingExample,
    Vocabularies, WordVocabulary, MAX_SENTENCE_LEN,
};
use kw2sent::evalsuite::{evaluate as run_eval, lambda_summary, reversal_robustness, EvalContext, EvalScenario};
use kw2sent::model::{DecodeMode, DecodeTrace, Generator};
use kw2sent::training::{
    load_checkpoint, save_checkpoint, train as run_train, write_history, Checkpoint, DevSet, TrainConfig,
    TrainOptions,
};

use crate::error::{io_error, require_file, CliError, CliResult};
use crate::input::{build_request, load_tagger, Request, TemplateSource, LEXICON};
use crate::{EvaluateArgs, GenerateArgs, InspectArgs, PrepareArgs, ReplArgs, StatsArgs, TagTrainArgs, TrainArgs};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

fn decode_mode(beam: usize) -> CliResult<DecodeMode> {
    match beam {
        0 => Err(CliError::usage("--beam must be at least 1")),
        1 => Ok(DecodeMode::Greedy),
        w => Ok(DecodeMode::Beam(w)),
    }
}

fn scenario(s: &str) -> CliResult<EvalScenario> {
    s.parse().map_err(CliError::usage)
}

fn open_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    require_file(path)?;
    Ok(load_checkpoint(path)?)
}

/// Encodes records with a checkpoint's vocabularies. Unknown words map to
/// the unknown-word id; unknown tags are an error.
fn encode_records(records: &[DatasetRecord], vocab: &Vocabularies) -> CliResult<Vec<TrainingExample>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vocab
                .encode(r)
                .map_err(|e| CliError::data(format!("record {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Serialize)]
struct PrepareSummary {
    out: PathBuf,
    vocab: PathBuf,
    stats: PathBuf,
    sentences: usize,
    kept: usize,
    dropped_no_content: usize,
    vocab_size: usize,
    unknown_tokens: Option<usize>,
}

#[derive(Serialize)]
struct StatsFile {
    count: usize,
    avg_keywords: f64,
    avg_sentence_length: f64,
    undefined: bool,
    dropped_no_content: usize,
}

pub fn prepare(a: PrepareArgs) -> CliResult<()> {
    for p in [&a.input, &a.pretagged, &a.vocab].into_iter().flatten() {
        require_file(p)?;
    }
    if a.input.is_some() && a.tagger.is_none() {
        return Err(CliError::usage("raw text input needs --tagger (a tagger model file or \"lexicon\")"));
    }
    let tagger = load_tagger(a.tagger.as_deref().unwrap_or(LEXICON))?;
    let sentences: Vec<TaggedSentence> = if let Some(p) = &a.input {
        let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
        text.lines()
            .map(tokenize)
            .filter(|t| !t.is_empty())
            .map(|t| tag_sentence(&t, tagger.as_ref()))
            .collect::<Result<_, _>>()?
    } else if let Some(p) = &a.pretagged {
        load_pretagged(p)?
    } else {
        ToyGrammar::default().corpus(a.toy.unwrap_or(0), a.seed)
    };

    let tags = TagVocabulary::penn();
    let mut records = Vec::new();
    let mut dropped = 0;
    for (i, s) in sentences.iter().enumerate() {
        match extract_record(s, tagger.as_ref(), &tags) {
            Ok(r) => records.push(r),
            Err(CorpusError::NoContentWords) => dropped += 1,
            Err(e) => return Err(CliError::data(format!("sentence {}: {e}", i + 1))),
        }
    }
    save_dataset(&a.out, &records)?;

    let vocab_path = a.vocab_out.clone().unwrap_or_else(|| with_suffix(&a.out, ".vocab"));
    let (words, unknown) = match &a.vocab {
        Some(p) => {
            let w = WordVocabulary::load(p)?;
            let unk = records
                .iter()
                .flat_map(|r| r.reference.iter().chain(&r.keywords))
                .filter(|t| !w.contains(t))
                .count();
            (w, Some(unk))
        }
        None => (Vocabularies::build(&records, tags, a.min_count).words, None),
    };
    words.save(&vocab_path)?;

    let st = corpus_stats(&records);
    let stats_path = a.stats_out.clone().unwrap_or_else(|| with_suffix(&a.out, ".stats.json"));
    write_json(
        &stats_path,
        &StatsFile {
            count: st.count,
            avg_keywords: st.avg_keywords,
            avg_sentence_length: st.avg_sentence_length,
            undefined: st.undefined,
            dropped_no_content: dropped,
        },
    )?;
    print_json(&PrepareSummary {
        out: a.out,
        vocab: vocab_path,
        stats: stats_path,
        sentences: sentences.len(),
        kept: records.len(),
        dropped_no_content: dropped,
        vocab_size: words.len(),
        unknown_tokens: unknown,
    });
    Ok(())
}

pub fn tag_train(a: TagTrainArgs) -> CliResult<()> {
    require_file(&a.corpus)?;
    if let Some(h) = &a.heldout {
        require_file(h)?;
    }
    let corpus = load_pretagged(&a.corpus)?;
    let tagger = train_perceptron_tagger(&corpus, a.epochs, a.seed)?;
    tagger.save(&a.out)?;
    let heldout = match &a.heldout {
        Some(h) => Some(tagger.accuracy(&load_pretagged(h)?)),
        None => None,
    };
    print_json(&serde_json::json!({
        "out": a.out,
        "sentences": corpus.len(),
        "classes": tagger.classes().len(),
        "train_accuracy": tagger.accuracy(&corpus),
        "heldout_accuracy": heldout,
    }));
    Ok(())
}

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::preset(&a.preset)?;
    if let Some(p) = &a.config {
        require_file(p)?;
        cfg = TrainConfig::load(p, cfg)?;
    }
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if a.no_template {
        cfg.no_template = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    require_file(&a.data)?;
    for p in [&a.dev, &a.vocab].into_iter().flatten() {
        require_file(p)?;
    }
    let cfg = train_config(&a)?;
    let tagger = load_tagger(&a.tagger)?;
    let records = load_dataset(&a.data)?;
    let vocab = match &a.vocab {
        Some(p) => Vocabularies {
            words: WordVocabulary::load(p)?,
            tags: TagVocabulary::penn(),
        },
        None => Vocabularies::build(&records, TagVocabulary::penn(), a.min_count),
    };
    let data = encode_records(&records, &vocab)?;
    let dev = match &a.dev {
        Some(p) => encode_records(&load_dataset(p)?, &vocab)?,
        None => Vec::new(),
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    fs::write(a.out_dir.join("config.txt"), cfg.to_kv()).map_err(|e| io_error(&a.out_dir, e))?;

    let quiet = a.quiet;
    let opts = TrainOptions {
        checkpoint_dir: Some(a.out_dir.clone()),
        on_epoch: Some(Box::new(move |r| {
            if !quiet {
                let dev = match (r.dev_bleu, r.dev_posmatch) {
                    (Some(b), Some(p)) => format!("  dev bleu {b:.2} posmatch {p:.2}"),
                    (Some(b), None) => format!("  dev bleu {b:.2}"),
                    _ => String::new(),
                };
                eprintln!("epoch {:>3}  step {:>6}  loss {:.4}{dev}", r.epoch, r.steps, r.train_loss);
            }
        })),
    };
    let dev_set = (!dev.is_empty()).then(|| DevSet {
        examples: &dev,
        tagger: tagger.as_ref(),
    });
    let out = run_train(&data, dev_set, &vocab, &cfg, opts)?;
    let final_path = a.out_dir.join("final.ckpt");
    save_checkpoint(&final_path, &out.model, &vocab, &cfg)?;
    write_history(&a.out_dir.join("history.csv"), &out.history)?;
    print_json(&serde_json::json!({
        "out_dir": a.out_dir,
        "examples": data.len(),
        "vocab_size": vocab.words.len(),
        "epochs": out.history.len(),
        "steps": out.steps,
        "final_loss": out.history.last().map(|r| r.train_loss),
        "best_epoch": out.best.as_ref().map(|b| b.0),
    }));
    Ok(())
}

#[derive(Serialize)]
struct StepOut {
    token: String,
    template_tag: Option<String>,
    lambda: f64,
    alpha: Vec<f64>,
    lambda_alpha: Vec<f64>,
}

#[derive(Serialize)]
struct TraceOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    keywords: Vec<String>,
    template: Vec<String>,
    prediction: Vec<String>,
    steps: Vec<StepOut>,
}

fn trace_out(index: Option<usize>, keywords: &[String], template: &[String], trace: &DecodeTrace, vocab: &Vocabularies) -> TraceOut {
    let steps: Vec<StepOut> = trace
        .steps
        .iter()
        .map(|s| StepOut {
            token: vocab.words.word(s.token).to_string(),
            template_tag: s.template_tag.and_then(|t| vocab.tags.tag(t)).map(str::to_string),
            lambda: s.lambda,
            lambda_alpha: s.alpha.iter().map(|a| a * s.lambda).collect(),
            alpha: s.alpha.clone(),
        })
        .collect();
    TraceOut {
        index,
        keywords: keywords.to_vec(),
        template: template.to_vec(),
        prediction: steps.iter().map(|s| s.token.clone()).collect(),
        steps,
    }
}

struct Runner {
    ckpt: Checkpoint,
    tagger: Box<dyn PosTagger>,
    mode: DecodeMode,
    show_lambda: bool,
}

impl Runner {
    fn model(&self) -> &Generator<f32> {
        &self.ckpt.model
    }

    fn run(&self, req: &Request) -> CliResult<(String, DecodeTrace)> {
        for w in &req.unknown {
            eprintln!("warning: keyword {w:?} is not in the vocabulary");
        }
        let g = self.model().generate(&req.input, self.mode, MAX_SENTENCE_LEN)?;
        let words = self.ckpt.vocab.decode_words(&g.tokens);
        let line = if self.show_lambda {
            words
                .iter()
                .zip(&g.trace.steps)
                .map(|(w, s)| format!("{w}/{:.3}", s.lambda))
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            words.join(" ")
        };
        Ok((line, g.trace))
    }
}

pub fn generate(a: GenerateArgs) -> CliResult<()> {
    let ckpt = open_checkpoint(&a.model)?;
    let runner = Runner {
        tagger: load_tagger(&a.tagger)?,
        mode: decode_mode(a.beam)?,
        show_lambda: a.show_lambda,
        ckpt,
    };
    let source = match (&a.template, &a.exemplar) {
        (Some(t), _) => TemplateSource::Tags(t),
        (None, Some(e)) => TemplateSource::Exemplar(e),
        (None, None) => TemplateSource::None,
    };
    let no_template = runner.model().config.no_template;
    let req = build_request(
        &a.keywords,
        source,
        a.keyword_tags.as_deref(),
        no_template,
        runner.tagger.as_ref(),
        &runner.ckpt.vocab,
    )?;
    if no_template && !req.template.is_empty() {
        eprintln!("note: this model ignores templates");
    }
    let (line, trace) = runner.run(&req)?;
    println!("{line}");
    if let Some(p) = &a.trace {
        write_json(p, &trace_out(None, &req.keywords, &req.template, &trace, &runner.ckpt.vocab))?;
    }
    Ok(())
}

const REPL_HELP: &str = "enter: keyword1,keyword2 | TEMPLATE TAGS or exemplar sentence   (:quit to exit)";

fn repl_turn(runner: &Runner, line: &str) -> CliResult<String> {
    let no_template = runner.model().config.no_template;
    let (kw, rest) = match line.split_once('|') {
        Some((k, r)) => (k.trim(), r.trim()),
        None => (line.trim(), ""),
    };
    let vocab = &runner.ckpt.vocab;
    let source = if rest.is_empty() {
        TemplateSource::None
    } else if rest.split_whitespace().all(|t| vocab.tags.fine_id(t).is_some()) {
        TemplateSource::Tags(rest)
    } else {
        TemplateSource::Exemplar(rest)
    };
    let req = build_request(kw, source, None, no_template, runner.tagger.as_ref(), vocab)?;
    Ok(runner.run(&req)?.0)
}

pub fn repl(a: ReplArgs) -> CliResult<()> {
    let ckpt = open_checkpoint(&a.model)?;
    let runner = Runner {
        tagger: load_tagger(&a.tagger)?,
        mode: decode_mode(a.beam)?,
        show_lambda: a.show_lambda,
        ckpt,
    };
    eprintln!("{REPL_HELP}");
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        print!("> ");
        out.flush().ok();
        let mut line = String::new();
        match stdin.lock().read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => return Err(CliError::data(format!("stdin: {e}"))),
        }
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" | ":exit" => break,
            ":help" => {
                println!("{REPL_HELP}");
                continue;
            }
            _ => {}
        }
        match repl_turn(&runner, line) {
            Ok(s) => println!("{s}"),
            Err(e) => println!("error: {e}"),
        }
    }
    Ok(())
}

fn load_eval_data(model: &Path, data: &Path) -> CliResult<(Checkpoint, Vec<TrainingExample>)> {
    require_file(data)?;
    let ckpt = open_checkpoint(model)?;
    let records = load_dataset(data)?;
    let examples = encode_records(&records, &ckpt.vocab)?;
    Ok((ckpt, examples))
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let sc = scenario(&a.scenario)?;
    let mode = decode_mode(a.beam)?;
    let (ckpt, data) = load_eval_data(&a.model, &a.data)?;
    let tagger = load_tagger(&a.tagger)?;
    let ctx = EvalContext {
        vocab: &ckpt.vocab,
        tagger: tagger.as_ref(),
    };
    let (json, report) = if a.reverse {
        let rep = reversal_robustness(&ckpt.model, &data, ctx, sc, mode)?;
        (serde_json::to_value(&rep).expect("report serializes"), rep.original)
    } else {
        let rep = run_eval(&ckpt.model, &data, ctx, sc, mode)?;
        (serde_json::to_value(&rep).expect("report serializes"), rep)
    };
    if let Some(p) = &a.audit {
        report.write_audit(p)?;
    }
    if let Some(p) = &a.out {
        write_json(p, &json)?;
    }
    print_json(&json);
    Ok(())
}

pub fn inspect(a: InspectArgs) -> CliResult<()> {
    let sc = scenario(&a.scenario)?;
    let mode = decode_mode(a.beam)?;
    let (ckpt, data) = load_eval_data(&a.model, &a.input)?;
    let tagger = load_tagger(&a.tagger)?;
    let ctx = EvalContext {
        vocab: &ckpt.vocab,
        tagger: tagger.as_ref(),
    };
    let report = run_eval(&ckpt.model, &data, ctx, sc, mode)?;
    let file = fs::File::create(&a.out).map_err(|e| io_error(&a.out, e))?;
    let mut w = BufWriter::new(file);
    for r in &report.records {
        let t = trace_out(Some(r.index), &r.keywords, &r.template, &r.trace, &ckpt.vocab);
        writeln!(w, "{}", serde_json::to_string(&t).expect("trace serializes")).map_err(|e| io_error(&a.out, e))?;
    }
    w.flush().map_err(|e| io_error(&a.out, e))?;
    let summary = lambda_summary(report.records.iter().map(|r| &r.trace), &ckpt.vocab);
    print_json(&serde_json::json!({
        "out": a.out,
        "examples": report.records.len(),
        "lambda": summary,
    }));
    Ok(())
}

pub fn stats(a: StatsArgs) -> CliResult<()> {
    require_file(&a.data)?;
    print_json(&corpus_stats(&load_dataset(&a.data)?));
    Ok(())
}
