use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Corpus, CorpusError, PromptRecord, SpeakerRecord};

pub const SPEAKERS_FILE: &str = "speakers.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io(format!("{}: {e}", path.display()))
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(path, e))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into());
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            file: name.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes `speakers.jsonl` and `prompts.jsonl` into `dir`, creating it.
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_lines(&dir.join(SPEAKERS_FILE), corpus.speakers())?;
    write_lines(&dir.join(PROMPTS_FILE), corpus.prompts())
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    let speakers: Vec<SpeakerRecord> = read_lines(&dir.join(SPEAKERS_FILE))?;
    if speakers.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let prompts: Vec<PromptRecord> = read_lines(&dir.join(PROMPTS_FILE))?;
    Corpus::new(speakers, prompts)
}
