//! Dataset loading, batch evaluation and accuracy metrics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{IngestContext, Label, MisinfoType, Post, TokenUsage, ValidationError, Verdict};
use crate::pipeline::{ConfigFingerprint, Pipeline};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: ValidationError },
    #[error("{path}:{line}: duplicate post id `{id}`")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("split file names unknown post id `{0}`")]
    SplitMismatch(String),
    #[error("post `{0}` has no ground-truth label")]
    Unlabeled(String),
    #[error("no records to score")]
    NoRecords,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    /// Errored posts count as misclassified.
    #[default]
    CountAsWrong,
    /// Errored posts are left out of every denominator.
    Exclude,
}

impl std::str::FromStr for ErrorPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "count_as_wrong" | "count-as-wrong" => Ok(ErrorPolicy::CountAsWrong),
            "exclude" => Ok(ErrorPolicy::Exclude),
            other => Err(format!("unknown error policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub post_id: String,
    pub truth: Label,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub truth_types: BTreeSet<MisinfoType>,
    pub predicted: Option<Label>,
    pub confidence: Option<u8>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn scored(post: &Post, truth: Label, verdict: Verdict) -> Self {
        PredictionRecord {
            post_id: post.id.clone(),
            truth,
            truth_types: post.misinfo_types.clone(),
            predicted: Some(verdict.label),
            confidence: Some(verdict.confidence),
            verdict: Some(verdict),
            error: None,
        }
    }

    pub fn failed(post: &Post, truth: Label, error: impl Into<String>) -> Self {
        PredictionRecord {
            post_id: post.id.clone(),
            truth,
            truth_types: post.misinfo_types.clone(),
            predicted: None,
            confidence: None,
            verdict: None,
            error: Some(error.into()),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == Some(self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub n: usize,
    pub acc: Option<f64>,
    pub avg_conf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percentages with one decimal. `None` when the class has no counted posts.
    pub acc: Option<f64>,
    pub r_acc: Option<f64>,
    pub f_acc: Option<f64>,
    pub avg_conf: Option<f64>,
    pub n_real: usize,
    pub n_fake: usize,
    pub n_errors: usize,
    pub error_policy: ErrorPolicy,
    pub by_type: BTreeMap<MisinfoType, TypeMetrics>,
    pub token_usage: TokenUsage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigFingerprint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl MetricsReport {
    pub fn error_rate(&self) -> f64 {
        let n = self.n_real + self.n_fake;
        if n == 0 {
            0.0
        } else {
            self.n_errors as f64 / n as f64
        }
    }
}

/// `part / whole` as a percentage rounded to one decimal.
pub fn percent(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| round1(100.0 * part as f64 / whole as f64))
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn mean_conf<'a>(rs: impl Iterator<Item = &'a PredictionRecord>) -> Option<f64> {
    let confs: Vec<u64> = rs.filter_map(|r| r.confidence.map(u64::from)).collect();
    (!confs.is_empty()).then(|| round1(confs.iter().sum::<u64>() as f64 / confs.len() as f64))
}

/// Accuracy over a set of records under an error policy.
fn accuracy<'a>(rs: impl Iterator<Item = &'a PredictionRecord>, policy: ErrorPolicy) -> (usize, Option<f64>) {
    let counted: Vec<_> = rs.filter(|r| policy == ErrorPolicy::CountAsWrong || r.error.is_none()).collect();
    let correct = counted.iter().filter(|r| r.is_correct()).count();
    (counted.len(), percent(correct, counted.len()))
}

/// Acc, R.Acc, F.Acc and Avg.Conf over the records, plus the per-type
/// breakdown over fake posts. A post with several types counts once for
/// each. Metrics whose class is empty are `None` and listed in `undefined`.
pub fn compute_metrics(records: &[PredictionRecord], policy: ErrorPolicy) -> Result<MetricsReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let of = |l: Label| records.iter().filter(move |r| r.truth == l);
    let (_, acc) = accuracy(records.iter(), policy);
    let (_, r_acc) = accuracy(of(Label::Real), policy);
    let (_, f_acc) = accuracy(of(Label::Fake), policy);

    let mut undefined = Vec::new();
    for (name, v) in [("acc", acc), ("r_acc", r_acc), ("f_acc", f_acc)] {
        if v.is_none() {
            undefined.push(name.to_string());
        }
    }

    let mut by_type = BTreeMap::new();
    for t in MisinfoType::ALL {
        let members = || of(Label::Fake).filter(move |r| r.truth_types.contains(&t));
        let (n, acc) = accuracy(members(), policy);
        if acc.is_none() {
            undefined.push(format!("by_type.{}", t.as_str()));
        }
        by_type.insert(t, TypeMetrics { n, acc, avg_conf: mean_conf(members()) });
    }

    let mut token_usage = TokenUsage::default();
    for v in records.iter().filter_map(|r| r.verdict.as_ref()) {
        token_usage += v.token_usage;
    }

    Ok(MetricsReport {
        acc,
        r_acc,
        f_acc,
        avg_conf: mean_conf(records.iter()),
        n_real: of(Label::Real).count(),
        n_fake: of(Label::Fake).count(),
        n_errors: records.iter().filter(|r| r.error.is_some()).count(),
        error_policy: policy,
        by_type,
        token_usage,
        config: None,
        undefined,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub dev: Vec<Post>,
    pub test: Vec<Post>,
}

/// Reads a JSONL dataset. Relative image paths resolve against the file's
/// directory. Blank lines are skipped; duplicate ids are rejected.
pub fn load_posts(path: &Path) -> Result<Vec<Post>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let ctx = IngestContext { today: None, base_dir: path.parent().map(Path::to_path_buf) };
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let post = Post::from_json_line(line, &ctx).map_err(|source| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        if !seen.insert(post.id.clone()) {
            return Err(EvalError::DuplicateId { path: path.to_path_buf(), line: i + 1, id: post.id });
        }
        posts.push(post);
    }
    Ok(posts)
}

/// Reads the ids of a split file: one id per line (`#` comments allowed),
/// or a JSON object with a `dev` array.
pub fn read_split(path: &Path) -> Result<Vec<String>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct Split {
            dev: Vec<String>,
        }
        let s: Split =
            serde_json::from_str(&text).map_err(|e| EvalError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?;
        return Ok(s.dev);
    }
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Loads posts and splits them into dev (ids in `split_file`) and test (the
/// rest), each in file order. Without a split file everything is test.
pub fn load_dataset(path: &Path, split_file: Option<&Path>) -> Result<Dataset, EvalError> {
    let posts = load_posts(path)?;
    let Some(split_file) = split_file else {
        return Ok(Dataset { dev: vec![], test: posts });
    };
    let dev_ids: BTreeSet<String> = read_split(split_file)?.into_iter().collect();
    let known: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    if let Some(unknown) = dev_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(EvalError::SplitMismatch(unknown.clone()));
    }
    let (dev, test) = posts.into_iter().partition(|p| dev_ids.contains(&p.id));
    Ok(Dataset { dev, test })
}

/// Runs the pipeline over every post, in parallel on the current rayon pool.
/// Records come back in input order; a failing post yields an error record
/// and never stops the batch.
pub fn evaluate(
    posts: &[Post],
    pipeline: &Pipeline,
    policy: ErrorPolicy,
) -> Result<(Vec<PredictionRecord>, MetricsReport), EvalError> {
    let truths = posts
        .iter()
        .map(|p| p.label.ok_or_else(|| EvalError::Unlabeled(p.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let records: Vec<PredictionRecord> = posts
        .par_iter()
        .zip(truths.par_iter())
        .map(|(post, &truth)| {
            // The model only ever sees an unlabelled copy.
            let mut blind = post.clone();
            blind.label = None;
            blind.misinfo_types.clear();
            blind.flagging.clear();
            match pipeline.detect(&blind) {
                Ok(d) => PredictionRecord::scored(post, truth, d.verdict),
                Err(e) => {
                    log::warn!("post {}: {e}", post.id);
                    PredictionRecord::failed(post, truth, e.tag())
                }
            }
        })
        .collect();
    let mut report = compute_metrics(&records, policy)?;
    report.config = Some(pipeline.config().fingerprint());
    Ok((records, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" | "text" => Ok(ReportFormat::Table),
            "jsonl" | "json" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into())
}

/// Writes the report. `Table` is for people; `Jsonl` is the report object
/// on the first line followed by one record per line.
pub fn emit_report(
    report: &MetricsReport,
    records: &[PredictionRecord],
    format: ReportFormat,
    out: &mut dyn Write,
) -> io::Result<()> {
    match format {
        ReportFormat::Jsonl => {
            writeln!(out, "{}", serde_json::to_string(report)?)?;
            for r in records {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
        }
        ReportFormat::Table => {
            if let Some(c) = &report.config {
                let strategies = if c.strategies.is_empty() {
                    "none".to_string()
                } else {
                    c.strategies.iter().map(u8::to_string).collect::<Vec<_>>().join("+")
                };
                writeln!(
                    out,
                    "config {}: strategies={} method={} model={} domain_filter={} extraction={}",
                    c.digest, strategies, c.reasoning_method, c.model_id, c.domain_filter, c.extraction
                )?;
            }
            let policy = match report.error_policy {
                ErrorPolicy::CountAsWrong => "count_as_wrong",
                ErrorPolicy::Exclude => "exclude",
            };
            writeln!(
                out,
                "posts: {} real, {} fake, {} errors ({policy})",
                report.n_real, report.n_fake, report.n_errors
            )?;
            writeln!(out)?;
            writeln!(out, "{:<16}{:>8}{:>8}{:>8}{:>11}", "", "Acc.", "R.Acc.", "F.Acc.", "Avg.Conf.")?;
            writeln!(
                out,
                "{:<16}{:>8}{:>8}{:>8}{:>11}",
                "overall",
                cell(report.acc),
                cell(report.r_acc),
                cell(report.f_acc),
                cell(report.avg_conf)
            )?;
            writeln!(out)?;
            writeln!(out, "{:<16}{:>6}{:>8}{:>11}", "Type", "n", "Acc.", "Avg.Conf.")?;
            for (t, m) in &report.by_type {
                writeln!(out, "{:<16}{:>6}{:>8}{:>11}", t.display_name(), m.n, cell(m.acc), cell(m.avg_conf))?;
            }
            writeln!(out)?;
            writeln!(
                out,
                "tokens: {} prompt, {} completion",
                report.token_usage.prompt, report.token_usage.completion
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding() {
        assert_eq!(percent(61, 120), Some(50.8));
        assert_eq!(percent(109, 120), Some(90.8));
        assert_eq!(percent(170, 240), Some(70.8));
        assert_eq!(percent(0, 0), None);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("exclude".parse::<ErrorPolicy>(), Ok(ErrorPolicy::Exclude));
        assert!("skip".parse::<ErrorPolicy>().is_err());
    }
}
