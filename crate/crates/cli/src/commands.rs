use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use psp_core::corpus::{corpus_stats, parse_corpus, parse_plain_text, serialize_corpus, split_train_test};
use psp_core::harness::{
    close_hierarchy, eval_table, evaluate_f1, predict_documents, sweep_table, sweep_window_sizes, to_canonical_json,
    train_with_observer, MemorizeSpec, SyntheticSpec,
};
use psp_core::model::{load_checkpoint, save_checkpoint, CheckpointHeader};
use psp_core::{Document, EmbeddingProvider, Model, PspError};

use crate::config::RunConfigFile;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.jsonl";
pub const TEST_SPLIT_FILE: &str = "test.txt";

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn read_corpus(path: &Path) -> Result<Vec<Document>, CliError> {
    let docs = parse_corpus(&read(path)?).map_err(|e| match e {
        PspError::Parse { line, message } => CliError::Usage(format!("{}:{line}: {message}", path.display())),
        other => other.into(),
    })?;
    if docs.is_empty() {
        return Err(CliError::Usage(format!("{}: no documents", path.display())));
    }
    Ok(docs)
}

/// Loads and resolves a run config; relative paths are taken from the
/// config file's directory.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfigFile, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfigFile::load(path)?.resolve(base, seed)
}

/// Training and held-out documents of a resolved config.
fn load_split(cfg: &RunConfigFile) -> Result<(Vec<Document>, Option<Vec<Document>>), CliError> {
    let mut docs = Vec::new();
    for p in &cfg.corpus.paths {
        docs.extend(read_corpus(p)?);
    }
    match cfg.corpus.split_ratio {
        Some(r) => {
            let (train, test) = split_train_test(&docs, r, cfg.corpus.seed)?;
            Ok((train, Some(test)))
        }
        None => Ok((docs, None)),
    }
}

fn write_resolved(cfg: &RunConfigFile, out: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(cfg).map_err(PspError::from)?;
    text.push('\n');
    write(&out.join(CONFIG_FILE), &text)
}

pub fn train(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let exp = cfg.experiment()?;
    let (train_docs, test_docs) = load_split(&cfg)?;
    ensure_dir(out)?;
    write_resolved(&cfg, out)?;
    if let Some(test) = &test_docs {
        write(&out.join(TEST_SPLIT_FILE), &serialize_corpus(test))?;
    }
    let log_path = out.join(LOSS_FILE);
    let log_err = |source| CliError::Write {
        path: log_path.clone(),
        source,
    };
    let mut log = BufWriter::new(fs::File::create(&log_path).map_err(log_err)?);
    let mut log_failure = None;
    let outcome = train_with_observer(&exp, &train_docs, |rec| {
        if rec.step % 100 == 0 {
            eprintln!("step {} epoch {} loss {:.4}", rec.step, rec.epoch, rec.loss);
        }
        let line = to_canonical_json(rec).expect("step record serializes");
        if let Err(e) = writeln!(log, "{line}") {
            log_failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_failure {
        return Err(log_err(e));
    }
    log.flush().map_err(log_err)?;
    let header = CheckpointHeader {
        model: exp.model.clone(),
        embeddings: exp.embeddings.clone(),
        window_size: exp.window_size,
    };
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &header, &outcome.model)?;
    println!(
        "{} steps over {} windows in {:.1}s, final loss {:.4}; checkpoint {}",
        outcome.curve.len(),
        outcome.samples,
        outcome.seconds,
        outcome.final_loss().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<(CheckpointHeader, Model, EmbeddingProvider), CliError> {
    if !checkpoint.is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}", checkpoint.display())));
    }
    let (header, model) = load_checkpoint(checkpoint)?;
    let provider = EmbeddingProvider::from_config(&header.embeddings)?;
    Ok((header, model, provider))
}

pub fn eval(checkpoint: &Path, corpus: &Path, out: &Path) -> Result<(), CliError> {
    let (header, model, provider) = load_model(checkpoint)?;
    let docs = read_corpus(corpus)?;
    let name = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = evaluate_f1(&model, &provider, &docs, header.window_size, &name)?;
    ensure_dir(out)?;
    write(&out.join("eval.json"), &(to_canonical_json(&report)? + "\n"))?;
    let table = eval_table(&report);
    write(&out.join("eval.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn predict(checkpoint: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let (header, model, provider) = load_model(checkpoint)?;
    let docs = parse_plain_text(&read(input)?)?;
    let preds = predict_documents(&model, &provider, &docs, header.window_size)?;
    let mut annotated = Vec::with_capacity(docs.len());
    for (doc, labels) in docs.iter().zip(&preds) {
        let utts = doc
            .utterances()
            .iter()
            .zip(labels)
            .map(|(u, l)| u.with_labels(close_hierarchy(l)))
            .collect::<psp_core::Result<Vec<_>>>()?;
        annotated.push(Document::new(doc.id.clone(), utts)?);
    }
    ensure_dir(out)?;
    let path = out.join("predictions.txt");
    write(&path, &serialize_corpus(&annotated))?;
    println!("{} documents annotated; {}", annotated.len(), path.display());
    Ok(())
}

fn parse_sizes(sizes: &str) -> Result<Vec<usize>, CliError> {
    sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad window size {s:?} in --sizes")))
        })
        .collect()
}

fn worker_count() -> Result<usize, CliError> {
    match std::env::var("PSP_NUM_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("PSP_NUM_WORKERS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(1),
    }
}

pub fn sweep(config: &Path, seed: Option<u64>, sizes: Option<&str>, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let exp = cfg.experiment()?;
    let sizes = match sizes {
        Some(s) => parse_sizes(s)?,
        None => psp_core::harness::DEFAULT_SIZES.to_vec(),
    };
    let workers = worker_count()?;
    let (train_docs, test_docs) = load_split(&cfg)?;
    let test_docs = test_docs.ok_or_else(|| CliError::Usage("sweep needs corpus.split_ratio for a held-out set".into()))?;
    let dataset = cfg.corpus.paths[0]
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ensure_dir(out)?;
    write_resolved(&cfg, out)?;
    let report = sweep_window_sizes(&exp, &sizes, &train_docs, &test_docs, &dataset, workers)?;
    write(&out.join("sweep.json"), &(to_canonical_json(&report)? + "\n"))?;
    let table = sweep_table(&report);
    write(&out.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn gen_synthetic(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let spec: SyntheticSpec = match spec {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|source| CliError::ConfigJson {
            path: p.to_path_buf(),
            source,
        })?,
        None => SyntheticSpec::Memorize(MemorizeSpec::default()),
    };
    let seed = seed.unwrap_or(0);
    let docs = spec.generate(seed)?;
    ensure_dir(out)?;
    write(&out.join("spec.json"), &(to_canonical_json(&spec)? + "\n"))?;
    let path = out.join("corpus.txt");
    write(&path, &serialize_corpus(&docs))?;
    println!("{} documents (seed {seed}); {}", docs.len(), path.display());
    Ok(())
}

pub fn stats(corpus: &Path, out: Option<&PathBuf>) -> Result<(), CliError> {
    let docs = read_corpus(corpus)?;
    let s = corpus_stats(&docs);
    let name = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let table = s.to_table(&name);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join("stats.json"), &(to_canonical_json(&s)? + "\n"))?;
        write(&dir.join("stats.txt"), &table)?;
    }
    print!("{table}");
    Ok(())
}
