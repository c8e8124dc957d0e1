//! `fnmt`: corpus preparation, BPE, factorization, training, translation,
//! scoring and attention heat maps from one binary.
//!
//! Every subcommand accepts `--config FILE` with `key = value` lines named
//! after the long flags; flags given on the command line win. Exit codes:
//! 0 success, 2 usage or input error, 3 training failure.

mod config;
mod heatmap;

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fnmt::decoding::{BeamConfig, TranslateOptions, Translation, Translator, UnigramDictionary};
use fnmt::evaluation::{bleu_corpus, count_unk, factored_stream_scores};
use fnmt::experiment::{prepare_corpus, DataConfig};
use fnmt::model::{train_loop, Model, ModelConfig, Resources, TrainConfig, Trainer, Variant};
use fnmt::morphology::{factorize_sentence, recombine, FactorTag, Lexicon};
use fnmt::tensor::AdadeltaConfig;
use fnmt::text::{
    bpe_learn, bpe_undo, build_vocab, filter_corpus, read_lines, read_parallel, tokenize, word_frequencies, MergeTable,
    Vocabulary,
};

const DEFAULT_SEED: u64 = 1234;

#[derive(Parser, Debug)]
#[command(name = "fnmt", version, about = "Factored neural machine translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter a parallel corpus by length and build shortlist vocabularies.
    Prepare(PrepareArgs),
    /// Learn joint BPE merges from one or more corpora.
    BpeLearn(BpeLearnArgs),
    /// Segment text with a merge file, or undo segmentation.
    BpeApply(BpeApplyArgs),
    /// Split target text into parallel lemma and factor files.
    Factorize(FactorizeArgs),
    /// Rebuild surface words from lemma and factor files.
    Recombine(RecombineArgs),
    /// Train a word, bpe or factored model.
    Train(TrainArgs),
    /// Translate text with a trained model.
    Translate(TranslateArgs),
    /// Corpus BLEU, UNK count and per-stream scores.
    Score(ScoreArgs),
    /// Render an attention matrix as PGM and ASCII.
    Heatmap(HeatmapArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` file with defaults for this command's flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    #[arg(long, default_value_t = 30_000)]
    shortlist: usize,
}

#[derive(Args, Debug)]
struct BpeLearnArgs {
    #[command(flatten)]
    common: Common,
    /// Corpora counted jointly (source and target).
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 29_388)]
    merges: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BpeApplyArgs {
    #[command(flatten)]
    common: Common,
    /// Merge file; not needed with --undo.
    #[arg(long, alias = "merges-file")]
    codes: Option<PathBuf>,
    /// Join `@@` pieces back into words instead of segmenting.
    #[arg(long)]
    undo: bool,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FactorizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lemmas: PathBuf,
    #[arg(long)]
    factors: PathBuf,
}

#[derive(Args, Debug)]
struct RecombineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    lemmas: PathBuf,
    #[arg(long)]
    factors: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "word")]
    variant: Variant,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Dev source; the training data is used when omitted.
    #[arg(long, requires = "dev_tgt")]
    dev_src: Option<PathBuf>,
    #[arg(long, requires = "dev_src")]
    dev_tgt: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    #[arg(long, default_value_t = 30_000)]
    shortlist: usize,
    #[arg(long, default_value_t = 1_000)]
    factor_shortlist: usize,
    #[arg(long, default_value_t = 29_388)]
    bpe_merges: usize,
    #[arg(long, default_value_t = 620)]
    emb: usize,
    #[arg(long, default_value_t = 1000)]
    rnn: usize,
    #[arg(long, default_value_t = 64)]
    factor_emb: usize,
    #[arg(long, default_value_t = 80)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    #[arg(long, default_value_t = 0.95)]
    rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1)]
    eval_interval: usize,
    /// Stop once dev BLEU reaches this value.
    #[arg(long)]
    target_bleu: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lemma_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    factor_weight: f64,
    /// Falls back to FNMT_SEED, then 1234.
    #[arg(long, env = "FNMT_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    beam: usize,
    #[arg(long)]
    greedy: bool,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    max_len: Option<usize>,
    /// Expand all (lemma, factor) pairs in the factored beam.
    #[arg(long)]
    factor_cross_product: bool,
    #[arg(long, requires = "dict")]
    unk_replace: bool,
    #[arg(long)]
    dict: Option<PathBuf>,
    /// JSON lines with one attention matrix per sentence.
    #[arg(long)]
    attention: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    nbest: usize,
    #[arg(long)]
    nbest_out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Adds lemma and factor stream scores.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    smooth: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    /// Attention dump written by `translate --attention`.
    #[arg(long)]
    attention: PathBuf,
    #[arg(long, default_value_t = 0)]
    id: usize,
    #[arg(long)]
    pgm: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    cell: usize,
    /// ASCII rendering file; printed to stdout when omitted.
    #[arg(long)]
    ascii: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FNMT_LOG", "info")).init();
    let argv = match config::expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    log::info!("effective config: {:?}", cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err.chain().any(|c| {
        matches!(
            c.downcast_ref::<fnmt::Error>(),
            Some(fnmt::Error::TrainingDiverged { .. })
        )
    });
    if diverged {
        3
    } else {
        2
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::BpeLearn(a) => bpe_learn_cmd(a),
        Command::BpeApply(a) => bpe_apply_cmd(a),
        Command::Factorize(a) => factorize(a),
        Command::Recombine(a) => recombine_cmd(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Score(a) => score(a),
        Command::Heatmap(a) => heatmap::run(&a.attention, a.id, a.pgm.as_deref(), a.cell, a.ascii.as_deref()),
    }
}

fn read_input(path: Option<&Path>) -> Result<Vec<String>> {
    let mut text = String::new();
    match path {
        Some(p) => return Ok(read_lines(p)?),
        None => io::stdin().read_to_string(&mut text)?,
    };
    Ok(text.lines().map(String::from).collect())
}

fn write_output(path: Option<&Path>, lines: &[String]) -> Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for l in lines {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let pairs = read_parallel(&a.src, &a.tgt)?;
    let total = pairs.len();
    let kept = filter_corpus(pairs, a.max_len);
    if kept.is_empty() {
        bail!("no sentence pairs left after filtering {total} input pairs");
    }
    fs::create_dir_all(&a.out_dir)?;
    let src: Vec<Vec<String>> = kept.iter().map(|p| p.source.clone()).collect();
    let tgt: Vec<Vec<String>> = kept.iter().map(|p| p.target.clone()).collect();
    let join = |s: &[Vec<String>]| s.iter().map(|t| t.join(" ")).collect::<Vec<_>>();
    write_output(Some(&a.out_dir.join("train.src")), &join(&src))?;
    write_output(Some(&a.out_dir.join("train.tgt")), &join(&tgt))?;
    let sv = build_vocab(&src, a.shortlist);
    let tv = build_vocab(&tgt, a.shortlist);
    sv.write(&a.out_dir.join("vocab.src"))?;
    tv.write(&a.out_dir.join("vocab.tgt"))?;
    println!(
        "kept {} of {} pairs (dropped {}); vocab src {} tgt {}; OOV rate src {:.4} tgt {:.4}",
        kept.len(),
        total,
        total - kept.len(),
        sv.len(),
        tv.len(),
        sv.oov_rate(&src),
        tv.oov_rate(&tgt)
    );
    Ok(())
}

fn bpe_learn_cmd(a: BpeLearnArgs) -> Result<()> {
    let mut streams = Vec::new();
    for p in &a.inputs {
        streams.push(read_lines(p)?.iter().flat_map(|l| tokenize(l)).collect::<Vec<_>>());
    }
    let table = bpe_learn(&word_frequencies(&streams), a.merges);
    table.write(&a.output)?;
    println!("learned {} merges (requested {})", table.len(), a.merges);
    Ok(())
}

fn bpe_apply_cmd(a: BpeApplyArgs) -> Result<()> {
    let lines = read_input(a.input.as_deref())?;
    let out: Vec<String> = if a.undo {
        lines.iter().map(|l| bpe_undo(&tokenize(l)).join(" ")).collect()
    } else {
        let codes = a
            .codes
            .as_deref()
            .context("--codes is required unless --undo is given")?;
        let table = MergeTable::read(codes)?;
        lines.par_iter().map(|l| table.apply(&tokenize(l)).join(" ")).collect()
    };
    write_output(a.output.as_deref(), &out)
}

fn factorize(a: FactorizeArgs) -> Result<()> {
    let lexicon = Lexicon::read(&a.lexicon)?;
    let lines = read_lines(&a.input)?;
    let (mut lemmas, mut factors) = (Vec::new(), Vec::new());
    let mut unknown = 0;
    for l in &lines {
        let f = factorize_sentence(&tokenize(l), &lexicon);
        unknown += f.tags.iter().filter(|t| t.pos == "unk").count();
        lemmas.push(f.lemmas.join(" "));
        factors.push(f.factor_strings().join(" "));
    }
    write_output(Some(&a.lemmas), &lemmas)?;
    write_output(Some(&a.factors), &factors)?;
    println!(
        "factorized {} sentences; {unknown} tokens used the fallback analysis",
        lines.len()
    );
    Ok(())
}

fn recombine_cmd(a: RecombineArgs) -> Result<()> {
    let lexicon = Lexicon::read(&a.lexicon)?;
    let lemmas = read_lines(&a.lemmas)?;
    let factors = read_lines(&a.factors)?;
    if lemmas.len() != factors.len() {
        bail!("{} lemma lines but {} factor lines", lemmas.len(), factors.len());
    }
    let mut out = Vec::with_capacity(lemmas.len());
    for (n, (l, f)) in lemmas.iter().zip(&factors).enumerate() {
        let tags = tokenize(f)
            .iter()
            .map(|t| FactorTag::normalize(t))
            .collect::<fnmt::Result<Vec<_>>>()
            .with_context(|| format!("line {}", n + 1))?;
        let words = recombine(&tokenize(l), &tags, &lexicon).with_context(|| format!("line {}", n + 1))?;
        out.push(words.join(" "));
    }
    write_output(a.output.as_deref(), &out)
}

fn train(a: TrainArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let pairs = filter_corpus(read_parallel(&a.src, &a.tgt)?, a.max_len);
    if pairs.is_empty() {
        bail!("training corpus is empty after filtering");
    }
    let lexicon = match (&a.lexicon, a.variant) {
        (Some(p), _) => Some(Lexicon::read(p)?),
        (None, Variant::Factored) => bail!("--lexicon is required for the factored variant"),
        (None, _) => None,
    };
    let data_cfg = DataConfig {
        variant: a.variant,
        src_shortlist: a.shortlist,
        tgt_shortlist: a.shortlist,
        factor_shortlist: a.factor_shortlist,
        bpe_merges: a.bpe_merges,
    };
    let prep = prepare_corpus(&pairs, &data_cfg, lexicon)?;
    let (dev_sources, dev_refs) = match (&a.dev_src, &a.dev_tgt) {
        (Some(s), Some(t)) => {
            let dev = read_parallel(s, t)?;
            if dev.is_empty() {
                bail!("dev set is empty");
            }
            (
                dev.iter().map(|p| p.source.clone()).collect::<Vec<_>>(),
                dev.iter().map(|p| p.target.clone()).collect::<Vec<_>>(),
            )
        }
        _ => (prep.sources.clone(), prep.references.clone()),
    };

    fs::create_dir_all(&a.out_dir)?;
    let t = &prep.translator;
    let mut resources = Resources {
        src_vocab: Some("vocab.src".into()),
        tgt_vocab: Some("vocab.tgt".into()),
        ..Resources::default()
    };
    t.src_vocab.write(&a.out_dir.join("vocab.src"))?;
    t.tgt_vocab.write(&a.out_dir.join("vocab.tgt"))?;
    if let Some(fv) = &t.factor_vocab {
        fv.write(&a.out_dir.join("vocab.factors"))?;
        resources.factor_vocab = Some("vocab.factors".into());
    }
    if let Some(m) = &t.merges {
        m.write(&a.out_dir.join("merges.bpe"))?;
        resources.merges = Some("merges.bpe".into());
    }
    if let Some(p) = &a.lexicon {
        fs::copy(p, a.out_dir.join("lexicon.tsv")).with_context(|| format!("copying {}", p.display()))?;
        resources.lexicon = Some("lexicon.tsv".into());
    }

    let mut cfg = ModelConfig::new(
        a.variant,
        t.src_vocab.len(),
        t.tgt_vocab.len(),
        t.factor_vocab.as_ref().map(Vocabulary::len),
    )
    .with_dims(a.emb, a.rnn, a.factor_emb);
    cfg.resources = resources;
    let model = Model::new(cfg, seed)?;
    let train_cfg = TrainConfig {
        batch_size: a.batch,
        max_epochs: a.max_epochs,
        patience: a.patience,
        eval_interval: a.eval_interval,
        clip_norm: a.clip,
        adadelta: AdadeltaConfig {
            rho: a.rho,
            epsilon: a.epsilon,
            ..AdadeltaConfig::default()
        },
        lemma_weight: a.lemma_weight,
        factor_weight: a.factor_weight,
        target_bleu: a.target_bleu,
        seed,
    };
    log::info!(
        "training {} model: {} pairs, {} parameters",
        a.variant,
        prep.examples.len(),
        model.params().num_scalars()
    );
    let trainer = Trainer::new(model, train_cfg.clone())?;
    let model_path = a.out_dir.join("model.fnmt");
    let history_path = a.out_dir.join("history.json");
    let write_history = |history: &[fnmt::model::EpochRecord]| -> Result<()> {
        let doc = serde_json::json!({ "train_config": train_cfg, "epochs": history });
        fs::write(&history_path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    };
    let outcome = train_loop(
        trainer,
        &prep.examples,
        |m| fnmt::decoding::dev_bleu(m, t, &dev_sources, &dev_refs),
        |best, history| {
            if history.last().is_some_and(|r| r.improved) {
                best.save(&model_path)?;
            }
            write_history(history).map_err(|e| fnmt::Error::InvalidArgument(e.to_string()))
        },
    )?;
    outcome.best.save(&model_path)?;
    write_history(&outcome.history)?;
    println!(
        "best dev BLEU {:.2} at epoch {} ({:?}); model written to {}",
        outcome.best_bleu,
        outcome.best_epoch,
        outcome.stop,
        model_path.display()
    );
    Ok(())
}

fn resolve(base: &Path, name: Option<&String>, what: &str) -> Result<PathBuf> {
    let name = name.with_context(|| format!("model does not reference a {what}"))?;
    let p = Path::new(name);
    Ok(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
}

/// Loads the resources a model file references, relative to its directory.
fn load_translator(model: &Model, model_path: &Path) -> Result<Translator> {
    let base = model_path.parent().unwrap_or(Path::new("."));
    let r = &model.config().resources;
    let mut t = Translator::new(
        Vocabulary::read(&resolve(base, r.src_vocab.as_ref(), "source vocabulary")?)?,
        Vocabulary::read(&resolve(base, r.tgt_vocab.as_ref(), "target vocabulary")?)?,
    );
    if r.factor_vocab.is_some() {
        t.factor_vocab = Some(Vocabulary::read(&resolve(
            base,
            r.factor_vocab.as_ref(),
            "factor vocabulary",
        )?)?);
    }
    if r.merges.is_some() {
        t.merges = Some(MergeTable::read(&resolve(base, r.merges.as_ref(), "merge file")?)?);
    }
    if r.lexicon.is_some() {
        t.lexicon = Some(Lexicon::read(&resolve(base, r.lexicon.as_ref(), "lexicon")?)?);
    }
    t.check(model)?;
    Ok(t)
}

fn translate(a: TranslateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let mut translator = load_translator(&model, &a.model)?;
    if let Some(d) = &a.dict {
        translator.dictionary = Some(UnigramDictionary::read(d)?);
    }
    let opts = TranslateOptions {
        beam: BeamConfig {
            beam_size: a.beam,
            max_len: a.max_len,
            alpha: a.alpha,
            factor_cross_product: a.factor_cross_product,
            nbest: a.nbest.max(1),
        },
        greedy: a.greedy,
        unk_replace: a.unk_replace,
    };
    let lines = read_input(a.input.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.threads).build()?;
    let results: Vec<Translation> = pool.install(|| {
        lines
            .par_iter()
            .map(|l| translator.translate(&model, &tokenize(l), &opts))
            .collect::<fnmt::Result<Vec<_>>>()
    })?;
    let out: Vec<String> = results.iter().map(|t| t.words.join(" ")).collect();
    write_output(a.output.as_deref(), &out)?;
    if let Some(p) = &a.nbest_out {
        let lines: Vec<String> = results.iter().enumerate().flat_map(|(i, t)| t.nbest_lines(i)).collect();
        write_output(Some(p), &lines)?;
    }
    if let Some(p) = &a.attention {
        let lines = results
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut source = t.source_tokens.clone();
                source.push(fnmt::text::EOS_TOKEN.to_string());
                serde_json::to_string(&serde_json::json!({
                    "id": i,
                    "source": source,
                    "target": t.result.tokens,
                    "attention": t.result.attention,
                }))
            })
            .collect::<serde_json::Result<Vec<_>>>()?;
        write_output(Some(p), &lines)?;
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let hyp: Vec<Vec<String>> = read_lines(&a.hyp)?.iter().map(|l| tokenize(l)).collect();
    let refs: Vec<Vec<String>> = read_lines(&a.reference)?.iter().map(|l| tokenize(l)).collect();
    let report = bleu_corpus(&hyp, &refs, a.smooth)?;
    let unk: usize = hyp.iter().map(|h| count_unk(h)).sum();
    println!("{report}, UNK = {unk}");
    let mut doc = serde_json::to_value(&report)?;
    doc["unk"] = unk.into();
    if let Some(p) = &a.lexicon {
        let lexicon = Lexicon::read(p)?;
        let s = factored_stream_scores(&hyp, &refs, &lexicon)?;
        println!(
            "word BLEU {:.2}, lemma BLEU {:.2}, factor BLEU {:.2}",
            s.word.bleu, s.lemma.bleu, s.factors.bleu
        );
        doc["streams"] = serde_json::to_value(&s)?;
    }
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string(&doc)? + "\n")?;
    }
    Ok(())
}
