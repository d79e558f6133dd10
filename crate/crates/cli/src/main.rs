use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cmox::corpus::{detect_has_ids, parse_tsv, synth_generate, LabeledCorpus, Language, SynthSpec};
use cmox::io::{read_to_string, write_atomic};
use cmox::pipeline::{
    evaluate, run_grid, write_run_artifacts, Classifier, GridOptions, ModelKind, Overrides, ResolvedConfig,
};
use cmox::preprocess::clean;
use cmox::{predictions, Error, Result};

/// Offensive-text classification for code-mixed Dravidian corpora.
///
/// Worker threads follow RAYON_NUM_THREADS; results do not depend on it.
#[derive(Parser)]
#[command(name = "cmox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the text column of a corpus TSV (stdin to stdout by default).
    Clean {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one model and write its container, config and curve.
    Train {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        train: PathBuf,
        /// Validation corpus; required for lstm and lstm-attn.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// When given, predictions, metrics and an error report are written too.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Pretrained word vectors in text format.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write exchange-format predictions for a corpus.
    Predict {
        /// Model manifest written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// The input has no label column.
        #[arg(long)]
        unlabeled: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print weighted precision, recall and F1 of predictions against gold labels.
    Evaluate {
        #[command(flatten)]
        pair: GoldPred,
        /// Also write the full metrics record as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the confusion matrix and error analysis for a prediction file.
    Report {
        #[command(flatten)]
        pair: GoldPred,
        /// Write the report to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the error analysis as JSON lines.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Generate a synthetic Kannada-like corpus split.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train_size: usize,
        #[arg(long, default_value_t = 400)]
        valid_size: usize,
        #[arg(long, default_value_t = 400)]
        test_size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train every model for one language and write a model x P/R/F summary.
    Grid {
        #[arg(long)]
        lang: String,
        /// Comma-separated subset of models; all seven by default.
        #[arg(long, value_delimiter = ',')]
        models: Vec<ModelKind>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Size of the generated training split when `--lang synthetic`
        /// runs without corpus paths; validation and test get a fifth each.
        #[arg(long, default_value_t = 2000)]
        synth_size: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args)]
struct GoldPred {
    #[arg(long)]
    gold: PathBuf,
    /// Exchange-format predictions, or a labeled corpus TSV.
    #[arg(long)]
    pred: PathBuf,
    /// Label set; inferred from the files when omitted.
    #[arg(long)]
    lang: Option<Language>,
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    lr_c: Option<f64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    lr_max_iter: Option<usize>,
    #[arg(long)]
    svm_epochs: Option<usize>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attention: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            lr_c: a.lr_c,
            svm_c: a.svm_c,
            lr_max_iter: a.lr_max_iter,
            svm_epochs: a.svm_epochs,
            n_estimators: a.n_estimators,
            max_len: a.max_len,
            min_freq: a.min_freq,
            embed_dim: a.embed_dim,
            hidden: a.hidden,
            attention: a.attention,
            dropout: a.dropout,
            epochs: a.epochs,
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
        }
    }
}

fn load_corpus(path: &Path, language: Language, labeled: bool) -> Result<LabeledCorpus> {
    let content = read_to_string(path)?;
    parse_tsv(&content, language, detect_has_ids(&content, labeled), labeled)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Cleans the text field of every row; a header row passes through.
fn clean_line(line: &str, first: bool) -> String {
    let fields: Vec<&str> = line.split('\t').collect();
    if first && matches!(fields[..], ["text", "category"] | ["id", "text", "category"]) {
        return line.to_string();
    }
    let text_col = usize::from(fields.len() == 3);
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| if i == text_col { clean(f) } else { (*f).to_string() })
        .collect::<Vec<_>>()
        .join("\t")
}

fn run_clean(input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let reader: Box<dyn BufRead> = match &input {
        Some(p) => Box::new(io::BufReader::new(std::fs::File::open(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(io::stdin().lock()),
    };
    let label = input.clone().unwrap_or_else(|| PathBuf::from("<stdin>"));
    if let Some(out) = output {
        let mut buf = String::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&label, e))?;
            buf.push_str(&clean_line(&line, i == 0));
            buf.push('\n');
        }
        return write_atomic(out, buf.as_bytes());
    }
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let out_label = PathBuf::from("<stdout>");
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&label, e))?;
        writeln!(w, "{}", clean_line(&line, i == 0)).map_err(|e| Error::io(&out_label, e))?;
    }
    w.flush().map_err(|e| Error::io(&out_label, e))
}

/// Reads gold and predictions, inferring the label set when not given: the
/// first language under which both files parse.
fn load_pair(pair: &GoldPred) -> Result<(LabeledCorpus, Vec<predictions::PredictionRow>)> {
    let gold_text = read_to_string(&pair.gold)?;
    let pred_text = read_to_string(&pair.pred)?;
    let parse = |language: Language| -> Result<_> {
        let gold = parse_tsv(&gold_text, language, detect_has_ids(&gold_text, true), true)?;
        let preds = predictions::parse(&pred_text, language)?;
        Ok((gold, preds))
    };
    match pair.lang {
        Some(language) => parse(language),
        None => {
            let mut first_err = None;
            for language in Language::ALL {
                match parse(language) {
                    Ok(found) => return Ok(found),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            Err(first_err.expect("at least one language"))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Clean { input, output } => run_clean(input, output),
        Command::Train {
            lang,
            model,
            train,
            valid,
            test,
            vectors,
            out,
            seed,
            overrides,
        } => {
            let config = ResolvedConfig::resolve(&lang, model, seed, &overrides.into())?;
            let language = config.label_set;
            let train = load_corpus(&train, language, true)?;
            let valid = valid.map(|p| load_corpus(&p, language, true)).transpose()?;
            let classifier = Classifier::train(&config, &train, valid.as_ref(), vectors.as_deref())?;
            match test {
                Some(p) => {
                    let test = load_corpus(&p, language, true)?;
                    let evaluation = write_run_artifacts(&out, &classifier, &test)?;
                    println!("weighted F1 on test: {:.4}", evaluation.metrics.weighted.f1);
                }
                None => {
                    classifier.save(out.join("model.json"))?;
                    write_json(&out.join("config.json"), &classifier.config)?;
                    if let Some(run) = &classifier.run {
                        write_atomic(out.join("curve.jsonl"), run.curve_jsonl()?.as_bytes())?;
                    }
                }
            }
            if let Some(run) = &classifier.run {
                println!(
                    "best epoch {} (validation weighted F1 {:.4})",
                    run.best_epoch,
                    run.best_valid_f1()
                );
            }
            Ok(())
        }
        Command::Predict {
            model,
            input,
            unlabeled,
            out,
        } => {
            let classifier = Classifier::load(&model)?;
            let language = classifier.config.label_set;
            let corpus = load_corpus(&input, language, !unlabeled)?;
            let rows = classifier.prediction_rows(&corpus)?;
            write_atomic(out, predictions::to_tsv(&rows, language).as_bytes())
        }
        Command::Evaluate { pair, json } => {
            let (gold, preds) = load_pair(&pair)?;
            let evaluation = evaluate(&gold, &predictions::align(&gold, &preds)?)?;
            let w = evaluation.metrics.weighted;
            println!("precision\t{:.4}", w.precision);
            println!("recall\t{:.4}", w.recall);
            println!("weighted_f1\t{:.4}", w.f1);
            if let Some(path) = json {
                write_json(&path, &evaluation.metrics)?;
            }
            Ok(())
        }
        Command::Report { pair, out, jsonl } => {
            let (gold, preds) = load_pair(&pair)?;
            let evaluation = evaluate(&gold, &predictions::align(&gold, &preds)?)?;
            let text = format!(
                "Confusion matrix (rows gold, columns predicted)\n{}\n{}",
                evaluation.confusion.to_tsv(),
                evaluation.errors.to_text()
            );
            if let Some(path) = jsonl {
                write_atomic(path, evaluation.errors.to_jsonl()?.as_bytes())?;
            }
            match out {
                Some(path) => write_atomic(path, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Synth {
            out,
            train_size,
            valid_size,
            test_size,
            seed,
        } => {
            for (offset, (split, size)) in [("train", train_size), ("valid", valid_size), ("test", test_size)]
                .into_iter()
                .enumerate()
            {
                let corpus = synth_generate(&SynthSpec::kannada_like(size), seed + offset as u64)?;
                write_atomic(out.join(format!("{split}.tsv")), corpus.to_tsv().as_bytes())?;
            }
            Ok(())
        }
        Command::Grid {
            lang,
            models,
            train,
            valid,
            test,
            vectors,
            out,
            seed,
            synth_size,
            overrides,
        } => {
            let opts = GridOptions {
                language: lang,
                seed,
                models: if models.is_empty() {
                    ModelKind::ALL.to_vec()
                } else {
                    models
                },
                overrides: overrides.into(),
            };
            let label_set = ResolvedConfig::resolve(&opts.language, opts.models[0], seed, &opts.overrides)?.label_set;
            let (train, valid, test) = match (train, valid, test) {
                (Some(a), Some(b), Some(c)) => (
                    load_corpus(&a, label_set, true)?,
                    load_corpus(&b, label_set, true)?,
                    load_corpus(&c, label_set, true)?,
                ),
                (None, None, None) if opts.language.eq_ignore_ascii_case("synthetic") => {
                    let held_out = (synth_size / 5).max(1);
                    (
                        synth_generate(&SynthSpec::kannada_like(synth_size), seed)?,
                        synth_generate(&SynthSpec::kannada_like(held_out), seed + 1)?,
                        synth_generate(&SynthSpec::kannada_like(held_out), seed + 2)?,
                    )
                }
                _ => {
                    return Err(Error::invalid(
                        "grid needs --train, --valid and --test (optional only for --lang synthetic)",
                    ))
                }
            };
            let summary = run_grid(&opts, &train, &valid, &test, vectors.as_deref(), &out)?;
            print!("{}", summary.to_tsv());
            println!(
                "majority baseline F1 {:.4}; best model {}",
                summary.baseline.f1, summary.best
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
