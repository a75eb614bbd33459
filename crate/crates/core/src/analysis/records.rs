//! Evaluation result records and their delimited on-disk form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Pos,
    Uas,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Pos, Task::Uas];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Pos => "pos",
            Task::Uas => "uas",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Task::Pos),
            "uas" => Ok(Task::Uas),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    FewShot,
    FullFinetune,
    ZeroShot,
}

impl Setting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::FewShot => "few_shot",
            Setting::FullFinetune => "full_finetune",
            Setting::ZeroShot => "zero_shot",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "few_shot" => Ok(Setting::FewShot),
            "full_finetune" => Ok(Setting::FullFinetune),
            "zero_shot" => Ok(Setting::ZeroShot),
            other => Err(format!("unknown setting {other:?}")),
        }
    }
}

/// One evaluation outcome. Scores are percentages in [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub language: String,
    pub task: Task,
    pub setting: Setting,
    pub lapt_steps: u64,
    pub vocab_size: u32,
    pub alpha: f64,
    pub finetuning_lines: u64,
    pub seed: u64,
    pub score: f64,
}

pub const RECORDS_HEADER: &str =
    "language\ttask\tsetting\tlapt_steps\tvocab_size\talpha\tfinetuning_lines\tseed\tscore";

impl ResultRecord {
    pub fn to_tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.language,
            self.task,
            self.setting,
            self.lapt_steps,
            self.vocab_size,
            self.alpha,
            self.finetuning_lines,
            self.seed,
            self.score
        )
    }

    pub fn from_tsv_row(row: &str, line: usize) -> Result<Self, AnalysisError> {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 9 {
            return Err(AnalysisError::Malformed {
                line,
                message: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let parse_err = |message: String| AnalysisError::Malformed { line, message };
        Ok(Self {
            language: fields[0].to_string(),
            task: fields[1].parse().map_err(parse_err)?,
            setting: fields[2].parse().map_err(parse_err)?,
            lapt_steps: fields[3]
                .parse()
                .map_err(|e| parse_err(format!("lapt_steps: {e}")))?,
            vocab_size: fields[4]
                .parse()
                .map_err(|e| parse_err(format!("vocab_size: {e}")))?,
            alpha: fields[5].parse().map_err(|e| parse_err(format!("alpha: {e}")))?,
            finetuning_lines: fields[6]
                .parse()
                .map_err(|e| parse_err(format!("finetuning_lines: {e}")))?,
            seed: fields[7].parse().map_err(|e| parse_err(format!("seed: {e}")))?,
            score: fields[8].parse().map_err(|e| parse_err(format!("score: {e}")))?,
        })
    }
}

pub fn write_records(records: &[ResultRecord], path: &Path) -> Result<(), AnalysisError> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_tsv_row());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&text)
}

pub fn parse_records(text: &str) -> Result<Vec<ResultRecord>, AnalysisError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != RECORDS_HEADER {
                return Err(AnalysisError::Malformed {
                    line: 1,
                    message: "header does not match the records schema".into(),
                });
            }
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        records.push(ResultRecord::from_tsv_row(line, i + 1)?);
    }
    Ok(records)
}

/// Sample mean and standard deviation (n-1 denominator; 0 for a single
/// value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
