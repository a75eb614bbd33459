//! CoNLL-U ingestion: 10 tab-separated columns per token row, `#`
//! comments, blank-line sentence boundaries. Multiword-token ranges
//! (ids like `1-2`) and empty nodes (ids like `5.1`) are skipped, so a
//! sentence keeps only its basic syntactic words.

use std::path::Path;

use super::{Sentence, TaskError};

pub fn read_conllu(path: &Path) -> Result<Vec<Sentence>, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let language = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_conllu(&text, &language)
}

pub fn parse_conllu(text: &str, language: &str) -> Result<Vec<Sentence>, TaskError> {
    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut upos = Vec::new();
    let mut heads = Vec::new();

    let mut flush = |words: &mut Vec<String>,
                     upos: &mut Vec<String>,
                     heads: &mut Vec<usize>|
     -> Result<(), TaskError> {
        if words.is_empty() {
            return Ok(());
        }
        let sentence = Sentence {
            words: std::mem::take(words),
            upos: std::mem::take(upos),
            heads: std::mem::take(heads),
            language: language.to_string(),
        };
        sentence.validate()?;
        sentences.push(sentence);
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            flush(&mut words, &mut upos, &mut heads)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(TaskError::Parse {
                line: line_no,
                message: format!("expected 10 columns, got {}", columns.len()),
            });
        }
        let id = columns[0];
        if id.contains('-') || id.contains('.') {
            continue; // multiword range or empty node
        }
        let head: usize = columns[6].parse().map_err(|_| TaskError::Parse {
            line: line_no,
            message: format!("non-integer head {:?}", columns[6]),
        })?;
        words.push(columns[1].to_string());
        upos.push(columns[3].to_string());
        heads.push(head);
    }
    flush(&mut words, &mut upos, &mut heads)?;
    Ok(sentences)
}
