//! Marginal-effect summaries and per-setting result tables.

use std::collections::BTreeMap;

use super::records::{mean_sd, ResultRecord, Setting, Task};
use super::AnalysisError;

/// Mean score for one (language, parameter level) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCell {
    pub language: String,
    pub level: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

fn level_of(record: &ResultRecord, parameter: &str) -> Result<String, AnalysisError> {
    Ok(match parameter {
        "lapt_steps" => record.lapt_steps.to_string(),
        "vocab_size" => record.vocab_size.to_string(),
        "alpha" | "lapt_alpha" => format!("{}", record.alpha),
        "finetuning_lines" => record.finetuning_lines.to_string(),
        "task" => record.task.to_string(),
        "setting" => record.setting.to_string(),
        "seed" => record.seed.to_string(),
        other => return Err(AnalysisError::UnknownColumn(other.to_string())),
    })
}

/// Per-language mean score at each level of one parameter, averaged
/// across every other parameter setting.
pub fn marginalize(
    records: &[ResultRecord],
    parameter: &str,
) -> Result<Vec<MarginalCell>, AnalysisError> {
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let level = level_of(r, parameter)?;
        cells.entry((r.language.clone(), level)).or_default().push(r.score);
    }
    Ok(cells
        .into_iter()
        .map(|((language, level), scores)| {
            let (mean, sd) = mean_sd(&scores);
            MarginalCell { language, level, mean, sd, count: scores.len() }
        })
        .collect())
}

/// Marginal cells as plot-ready delimited text.
pub fn marginal_tsv(cells: &[MarginalCell], parameter: &str) -> String {
    let mut out = format!("language\t{parameter}\tmean\tsd\tcount\n");
    for c in cells {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\n",
            c.language, c.level, c.mean, c.sd, c.count
        ));
    }
    out
}

/// One rendered table: a (setting, task) pair with configuration rows
/// and language columns.
#[derive(Debug, Clone)]
pub struct ReportTable {
    pub setting: Setting,
    pub task: Task,
    pub tsv: String,
    pub markdown: String,
}

/// Per-setting, per-task tables of `mean +- sd` over seeds, one column
/// per language plus a row average of the language means.
pub fn emit_report(records: &[ResultRecord]) -> Result<Vec<ReportTable>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyRecords);
    }
    type ConfigKey = (u64, u32, String);
    let mut partitions: BTreeMap<(Setting, Task), BTreeMap<ConfigKey, BTreeMap<String, Vec<f64>>>> =
        BTreeMap::new();
    let mut languages_by_partition: BTreeMap<(Setting, Task), Vec<String>> = BTreeMap::new();

    for r in records {
        let key = (r.setting, r.task);
        let config = (r.lapt_steps, r.vocab_size, format!("{}", r.alpha));
        partitions
            .entry(key)
            .or_default()
            .entry(config)
            .or_default()
            .entry(r.language.clone())
            .or_default()
            .push(r.score);
        let langs = languages_by_partition.entry(key).or_default();
        if !langs.contains(&r.language) {
            langs.push(r.language.clone());
            langs.sort();
        }
    }

    let mut tables = Vec::new();
    for ((setting, task), configs) in partitions {
        let languages = &languages_by_partition[&(setting, task)];
        let mut tsv = String::from("lapt_steps\tvocab_size\talpha");
        let mut md = String::from("| steps | vocab | alpha |");
        for lang in languages {
            tsv.push_str(&format!("\t{lang}"));
            md.push_str(&format!(" {lang} |"));
        }
        tsv.push_str("\tavg\n");
        md.push_str(" avg |\n|");
        md.push_str(&"---|".repeat(languages.len() + 4));
        md.push('\n');

        for ((steps, vocab, alpha), by_language) in configs {
            tsv.push_str(&format!("{steps}\t{vocab}\t{alpha}"));
            md.push_str(&format!("| {steps} | {vocab} | {alpha} |"));
            let mut language_means = Vec::new();
            for lang in languages {
                match by_language.get(lang) {
                    Some(scores) => {
                        let (mean, sd) = mean_sd(scores);
                        language_means.push(mean);
                        tsv.push_str(&format!("\t{mean:.1}±{sd:.1}"));
                        md.push_str(&format!(" {mean:.1} ± {sd:.1} |"));
                    }
                    None => {
                        tsv.push('\t');
                        md.push_str(" |");
                    }
                }
            }
            let avg = if language_means.is_empty() {
                f64::NAN
            } else {
                language_means.iter().sum::<f64>() / language_means.len() as f64
            };
            tsv.push_str(&format!("\t{avg:.1}\n"));
            md.push_str(&format!(" {avg:.1} |\n"));
        }
        tables.push(ReportTable { setting, task, tsv, markdown: md });
    }
    Ok(tables)
}
