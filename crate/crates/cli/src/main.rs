use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use absa_core::corpus::load_conllu;
use absa_core::eval::{
    eval_extraction, eval_polarity, eval_polarity_spans, load_semeval_xml, predict_aspect_spans, EvalResult,
    MatchMode, Span,
};
use absa_core::lexicon::load_lexicons;
use absa_core::pipeline::{run_classify, run_extract, PipelineConfig};
use absa_core::polarity::Polarity;
use absa_core::rerank::{featurize_training, fit, load_training_csv};
use absa_core::{classifier::classify_corpus, embedding::load_glove};
use absa_service::{HttpServer, ServiceOptions};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "absapp", version, about = "Aspect-based sentiment analysis with editable lexicons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Opinion rerank threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Acquire aspect and opinion lexicons from a parsed corpus.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Directory receiving aspects.csv and opinions.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Detect sentiment mentions in a target corpus and build the report.
    Classify {
        #[arg(long)]
        target: PathBuf,
        /// Directory holding aspects.csv and opinions.csv.
        #[arg(long)]
        lexicons: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against SemEval XML gold annotations.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Predicted annotations in SemEval XML.
        #[arg(long, conflicts_with_all = ["target", "lexicons"])]
        predictions: Option<PathBuf>,
        /// CoNLL-U corpus whose sent_ids match the gold sentence ids.
        #[arg(long, requires = "lexicons")]
        target: Option<PathBuf>,
        #[arg(long, requires = "target")]
        lexicons: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the HTTP service.
    Serve {
        /// 0 picks a free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Mirror lexicons and reports into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the opinion rerank model from labelled terms.
    TrainRerank {
        /// CSV with `term,label` rows (label 1 = opinion term).
        #[arg(long)]
        training: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            corpus,
            embeddings,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let outcome = run_extract(&corpus, &embeddings, &out, &cfg)?;
            println!(
                "{} aspects, {} opinions ({} opinion candidates) after {} iterations -> {}",
                outcome.lexicons.aspects.len(),
                outcome.lexicons.opinions.len(),
                outcome.opinion_candidates,
                outcome.iterations,
                out.display()
            );
        }
        Command::Classify {
            target,
            lexicons,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let lex = load_lexicons(&lexicons)?;
            let outcome = run_classify(&target, &lex, &out, &cfg)?;
            println!(
                "{} mentions over {} aspects -> {}",
                outcome.mentions.len(),
                outcome.report.rows.len(),
                out.display()
            );
        }
        Command::Eval {
            gold,
            predictions,
            target,
            lexicons,
            common,
        } => {
            let gold = load_semeval_xml(&gold)?;
            let mut results = Vec::new();
            match (predictions, target, lexicons) {
                (Some(p), _, _) => {
                    let pred = load_semeval_xml(&p)?;
                    let spans: BTreeMap<String, Vec<Span>> = pred
                        .iter()
                        .map(|a| (a.sentence_id.clone(), a.aspect_spans.iter().map(|s| (s.from, s.to)).collect()))
                        .collect();
                    let polar: BTreeMap<String, Vec<(Span, Polarity)>> = pred
                        .iter()
                        .map(|a| {
                            let v = a
                                .aspect_spans
                                .iter()
                                .filter_map(|s| Some(((s.from, s.to), s.polarity.binary()?)))
                                .collect();
                            (a.sentence_id.clone(), v)
                        })
                        .collect();
                    for mode in [MatchMode::Exact, MatchMode::Lenient] {
                        results.push(("extraction", eval_extraction(&spans, &gold, mode)?));
                        results.push(("polarity", eval_polarity_spans(&polar, &gold, mode)?));
                    }
                }
                (None, Some(t), Some(l)) => {
                    let cfg = common.load()?;
                    let corpus = load_conllu(&t)?;
                    let lex = load_lexicons(&l)?;
                    let spans = predict_aspect_spans(&corpus, &lex)?;
                    let mentions = classify_corpus(&corpus, &lex, &cfg.negations()?);
                    for mode in [MatchMode::Exact, MatchMode::Lenient] {
                        results.push(("extraction", eval_extraction(&spans, &gold, mode)?));
                        results.push(("polarity", eval_polarity(&mentions, &gold, mode)?));
                    }
                }
                _ => bail!("eval needs --predictions, or --target with --lexicons"),
            }
            print_results(&results);
        }
        Command::Serve { port, host, out, common } => {
            let cfg = common.load()?;
            let server = HttpServer::start(&format!("{host}:{port}"), ServiceOptions { config: cfg, out_dir: out })
                .with_context(|| format!("binding {host}:{port}"))?;
            println!("listening on http://{}", server.addr());
            std::io::stdout().flush()?;
            server.join();
        }
        Command::TrainRerank {
            training,
            embeddings,
            out,
            common,
        } => {
            let cfg = common.load()?;
            train_rerank(&training, &embeddings, &out, &cfg)?;
        }
    }
    Ok(())
}

fn train_rerank(training: &Path, embeddings: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let store = load_glove(embeddings, cfg.expected_dim)?;
    let generic = cfg.polarity_seeds()?.all();
    let rows = load_training_csv(training)?;
    let dataset = featurize_training(&rows, &store, &generic);
    if dataset.len() < rows.len() {
        eprintln!("{} of {} training terms have no embedding and were skipped", rows.len() - dataset.len(), rows.len());
    }
    let xs: Vec<Vec<f64>> = dataset.iter().map(|(f, _)| f.to_vec()).collect();
    let ys: Vec<u8> = dataset.iter().map(|(_, y)| *y).collect();
    let (model, report) = fit(&xs, &ys, &cfg.train_config())?;
    model.save(out)?;
    println!(
        "loss {:.6} -> {:.6}, train accuracy {:.4} -> {}",
        report.initial_loss,
        report.final_loss,
        report.final_accuracy,
        out.display()
    );
    Ok(())
}

fn print_results(results: &[(&str, EvalResult)]) {
    println!(
        "{:<11} {:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}",
        "task", "mode", "precision", "recall", "f1", "tp", "fp", "fn"
    );
    for (task, r) in results {
        println!(
            "{:<11} {:<8} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6}",
            task,
            r.mode.to_string(),
            r.precision,
            r.recall,
            r.f1,
            r.tp,
            r.fp,
            r.fn_
        );
    }
}
