use std::fs;
use std::io::{self, Write};
use std::path::Path;

use flowspeaker::corpus::{generate_synthetic_corpus, load_corpus, save_corpus};
use flowspeaker::evaluation::diversity_check;
use flowspeaker::pipeline::{corpus_test_prompts, evaluate_model, generate_for_prompts, GeneratedSpeaker};
use flowspeaker::prompt::read_external_embeddings;
use flowspeaker::training::{load_checkpoint, save_checkpoint, Checkpoint, Trainer};
use flowspeaker::{ExternalEmbeddings, Mode, TestPrompt, Verdict};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Failed(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Failed(e.to_string())),
    }
}

fn json_lines<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|x| serde_json::to_string(x).expect("serializable") + "\n").collect()
}

fn external(flag: Option<&Path>, cfg: &RunConfig) -> Result<Option<ExternalEmbeddings>, CliError> {
    match flag.or(cfg.embeddings.as_deref()) {
        Some(path) => Ok(Some(ExternalEmbeddings::new(read_external_embeddings(path)?))),
        None => Ok(None),
    }
}

fn checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(load_checkpoint(path)?)
}

pub fn gen_corpus(config: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let corpus_cfg = cfg.corpus.ok_or_else(|| CliError::Config("config has no `corpus` section".into()))?;
    let corpus = generate_synthetic_corpus(&corpus_cfg)?.corpus;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Failed(format!("{}: {e}", out_dir.display())))?;
    save_corpus(&corpus, out_dir)?;
    println!(
        "wrote {} speakers, {} prompts (dim {}) to {}",
        corpus.speakers().len(),
        corpus.prompts().len(),
        corpus.dim(),
        out_dir.display()
    );
    Ok(())
}

pub fn train(config: &Path, corpus_dir: &Path, out: &Path, embeddings: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let train_cfg = cfg.train.clone().ok_or_else(|| CliError::Config("config has no `train` section".into()))?;
    let corpus = load_corpus(corpus_dir)?;
    let ext = external(embeddings, &cfg)?;
    let mut trainer = Trainer::new(&corpus, train_cfg.clone(), ext.as_ref())?;
    let (steps, every) = (train_cfg.steps, train_cfg.log_every);
    trainer.run(|step, loss| {
        if step % every == 0 || step == steps {
            println!("step {step:>6}  loss {loss:.6}");
        }
    })?;
    let cp = trainer.into_checkpoint();
    save_checkpoint(&cp, out)?;
    println!("{} checkpoint after {} steps written to {}", mode_name(cp.model.mode()), cp.step, out.display());
    Ok(())
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Proposed => "proposed",
        Mode::Baseline => "baseline",
    }
}

pub struct GenerateArgs<'a> {
    pub checkpoint: &'a Path,
    pub prompts: &'a [String],
    pub n: Option<usize>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub embeddings: Option<&'a Path>,
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_optional(args.config)?;
    let section = cfg.generate.as_ref();
    let cp = checkpoint(args.checkpoint)?;
    let n = args.n.or(section.map(|s| s.n)).unwrap_or(1);
    if n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let temperature = args.temperature.or(section.and_then(|s| s.temperature)).unwrap_or(cp.config.temperature);
    let seed = args.seed.or(section.map(|s| s.seed)).unwrap_or(cp.config.seed);
    let ext = external(args.embeddings, &cfg)?;
    if cp.model.mode() == Mode::Baseline {
        eprintln!("warning: baseline checkpoint cannot sample; writing one deterministic embedding per prompt");
    }
    let prompts: Vec<TestPrompt> = args
        .prompts
        .iter()
        .enumerate()
        .map(|(i, text)| TestPrompt { prompt_id: format!("prompt_{i:02}"), text: text.clone(), attributes: None })
        .collect();
    let generated = generate_for_prompts(&cp.model, &prompts, n, temperature, seed, ext.as_ref())?;
    write_output(args.out, &json_lines(&generated))?;
    if let Some(out) = args.out {
        eprintln!("wrote {} embeddings to {}", generated.len(), out.display());
    }
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub checkpoint: &'a Path,
    pub corpus_dir: &'a Path,
    pub prompts: Option<&'a Path>,
    pub n_per_prompt: Option<usize>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub generated: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub embeddings: Option<&'a Path>,
}

/// Reads test prompts, one JSON object per line; blank lines are skipped.
pub fn read_test_prompts(path: &Path) -> Result<Vec<TestPrompt>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    let prompts = text
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| CliError::Prompt(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<TestPrompt>, _>>()?;
    if prompts.is_empty() {
        return Err(CliError::Prompt(format!("{}: no test prompts", path.display())));
    }
    Ok(prompts)
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_optional(args.config)?;
    let section = cfg.evaluate.as_ref();
    let cp = checkpoint(args.checkpoint)?;
    let corpus = load_corpus(args.corpus_dir)?;
    let prompts = match args.prompts.or(section.and_then(|s| s.prompts.as_deref())) {
        Some(path) => read_test_prompts(path)?,
        None => corpus_test_prompts(&corpus),
    };
    let n = args.n_per_prompt.or(section.map(|s| s.n_per_prompt)).unwrap_or(8);
    if n == 0 {
        return Err(CliError::Config("--n-per-prompt must be at least 1".into()));
    }
    let temperature = args.temperature.or(section.and_then(|s| s.temperature)).unwrap_or(cp.config.temperature);
    let seed = args.seed.or(section.map(|s| s.seed)).unwrap_or(cp.config.seed);
    let ext = external(args.embeddings, &cfg)?;
    let eval = evaluate_model(&cp.model, &corpus, &prompts, n, temperature, seed, ext.as_ref())?;
    let report = &eval.report;
    write_output(args.out, &(serde_json::to_string_pretty(report).expect("serializable") + "\n"))?;
    if let Some(path) = args.generated {
        write_output(Some(path), &json_lines::<GeneratedSpeaker>(&eval.generated))?;
    }
    let verdict = match report.verdict {
        Verdict::Novel => "novel",
        Verdict::Memorized => "memorized",
        Verdict::Inconclusive => "inconclusive",
    };
    let diverse = match report.gen2gen_near {
        Some(g) => diversity_check(g, report.syn2syn_same).to_string(),
        None => "n/a".into(),
    };
    let mut line = format!(
        "verdict: {verdict} (syn2syn-same {:.4}, gen2syn-near {:.4}, syn2syn-near {:.4}); diverse: {diverse}",
        report.syn2syn_same, report.gen2syn_near, report.syn2syn_near
    );
    for (attr, acc) in &report.attribute_accuracy {
        line += &format!("; {attr} accuracy {acc:.4}");
    }
    // The verdict goes to stdout unless the report itself is written there.
    if args.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}
