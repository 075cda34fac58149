//! Deterministic report artifacts.
//!
//! Every CSV artifact starts with one `# {...}` line carrying the run
//! metadata as compact JSON; every JSON artifact carries it under `"meta"`.
//! Nothing time-dependent is written unless timestamps are enabled.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ConditionCode;
use crate::metrics::{PairRecord, Relatedness, SimilaritySplit};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("condition table is missing cell {0}")]
    MissingCell(String),
    #[error("prompt table row {row} ({prompt_id}) has different condition columns than the first row")]
    Ragged { row: usize, prompt_id: String },
    #[error("prompt table has no rows")]
    NoRows,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub config_digest: String,
    pub provider_name: String,
    pub provider_dim: usize,
    pub seed: Option<u64>,
    pub prng_id: Option<String>,
    pub word_vectors_id: Option<String>,
    pub prompt_template_ids: Vec<String>,
    /// Images, words and trials per condition actually used.
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl RunMetadata {
    pub fn comment_line(&self) -> String {
        format!("# {}\n", serde_json::to_string(self).expect("metadata serializes"))
    }
}

/// Write via a temporary sibling and rename, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub fn write_artifact(dir: &Path, name: &str, body: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    write_atomic(&path, body.as_bytes()).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// Conditions in column order: the four table cells first, then any others.
fn ordered_codes<'a>(codes: impl Iterator<Item = &'a ConditionCode>) -> Vec<ConditionCode> {
    let set: BTreeSet<ConditionCode> = codes.copied().collect();
    let mut out: Vec<ConditionCode> = ConditionCode::TABLE.iter().copied().filter(|c| set.contains(c)).collect();
    out.extend(set.iter().copied().filter(|c| !ConditionCode::TABLE.contains(c)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionTable {
    /// Word category rows × prediction task columns.
    pub grid_csv: String,
    /// `condition,rate` rows.
    pub flat_csv: String,
    /// Human-readable boxed layout.
    pub text: String,
}

/// Label-switching rates laid out with word-category rows and prediction
/// columns, percentages to two decimals. Pseudoword cells are optional.
pub fn emit_condition_table(
    rates: &BTreeMap<ConditionCode, f64>,
    meta: &RunMetadata,
) -> Result<ConditionTable, ReportError> {
    for c in ConditionCode::TABLE {
        if !rates.contains_key(&c) {
            return Err(ReportError::MissingCell(c.to_string()));
        }
    }
    let pseudo: Vec<ConditionCode> = ordered_codes(rates.keys())
        .into_iter()
        .filter(|c| !ConditionCode::TABLE.contains(c))
        .collect();
    let cell = |c: &str| {
        let code: ConditionCode = c.parse().expect("static code");
        rates.get(&code).map(|v| pct(*v))
    };

    let mut grid = meta.comment_line();
    grid.push_str("word_category,superordinate_prediction,basic_prediction\n");
    let mut rows = vec![("Superordinate word", "S/S", "B/S"), ("Basic word", "S/B", "B/B")];
    if !pseudo.is_empty() {
        rows.push(("Pseudoword", "S/P", "B/P"));
    }
    for (name, s, b) in &rows {
        let _ = writeln!(
            grid,
            "{name},{},{}",
            cell(s).unwrap_or_default(),
            cell(b).unwrap_or_default()
        );
    }

    let mut flat = meta.comment_line();
    flat.push_str("condition,rate\n");
    for c in ordered_codes(rates.keys()) {
        let _ = writeln!(flat, "{c},{}", pct(rates[&c]));
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<20}| {:<26}| {:<22}", "", "Superordinate prediction", "Basic prediction");
    for (name, s, b) in &rows {
        let fmt_cell = |code: &str| match cell(code) {
            Some(v) => format!("({code}) {v} %"),
            None => String::new(),
        };
        let _ = writeln!(text, "{name:<20}| {:<26}| {:<22}", fmt_cell(s), fmt_cell(b));
    }
    Ok(ConditionTable {
        grid_csv: grid,
        flat_csv: flat,
        text,
    })
}

/// Read a flat condition CSV back into rates.
pub fn parse_flat_table(csv_text: &str) -> Result<BTreeMap<ConditionCode, f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| e.to_string())?;
        let code: ConditionCode = row.get(0).unwrap_or_default().parse().map_err(|e| format!("{e}"))?;
        let v: f64 = row.get(1).unwrap_or_default().parse().map_err(|e| format!("{e}"))?;
        out.insert(code, v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptRow {
    pub prompt_id: String,
    pub pattern: String,
    pub rates: BTreeMap<ConditionCode, f64>,
}

/// One row per prompt, input order kept; every row must carry the same
/// condition columns.
pub fn emit_prompt_table(rows: &[PromptRow], meta: &RunMetadata) -> Result<String, ReportError> {
    let first = rows.first().ok_or(ReportError::NoRows)?;
    let columns = ordered_codes(first.rates.keys());
    for (i, r) in rows.iter().enumerate() {
        if !r.rates.keys().eq(first.rates.keys()) {
            return Err(ReportError::Ragged {
                row: i,
                prompt_id: r.prompt_id.clone(),
            });
        }
    }
    let mut out = meta.comment_line();
    out.push_str("prompt_id,pattern");
    for c in &columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},\"{}\"", r.prompt_id, r.pattern.replace('"', "\"\""));
        for c in &columns {
            let _ = write!(out, ",{}", pct(r.rates[c]));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct Partition<'a> {
    values: &'a [f64],
    median: Option<f64>,
    count: usize,
}

#[derive(Serialize)]
struct DistributionArtifact<'a> {
    meta: &'a RunMetadata,
    label: &'a str,
    switched: Partition<'a>,
    unswitched: Partition<'a>,
    missing_count: usize,
    total: usize,
}

/// Plot-ready JSON for one similarity split.
pub fn emit_distribution_data(split: &SimilaritySplit, label: &str, meta: &RunMetadata) -> String {
    let artifact = DistributionArtifact {
        meta,
        label,
        switched: Partition {
            values: &split.switched_values,
            median: split.switched_median,
            count: split.switched_values.len(),
        },
        unswitched: Partition {
            values: &split.unswitched_values,
            median: split.unswitched_median,
            count: split.unswitched_values.len(),
        },
        missing_count: split.missing_count,
        total: split.total(),
    };
    let mut s = serde_json::to_string_pretty(&artifact).expect("distribution serializes");
    s.push('\n');
    s
}

pub fn emit_relatedness(rel: &Relatedness, label: &str, meta: &RunMetadata) -> String {
    #[derive(Serialize)]
    struct Artifact<'a> {
        meta: &'a RunMetadata,
        label: &'a str,
        values: &'a [f64],
        median: Option<f64>,
        count: usize,
        missing_count: usize,
    }
    let mut s = serde_json::to_string_pretty(&Artifact {
        meta,
        label,
        values: &rel.values,
        median: rel.median,
        count: rel.values.len(),
        missing_count: rel.missing_count,
    })
    .expect("relatedness serializes");
    s.push('\n');
    s
}

/// A pair record plus its similarity columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow<'a> {
    pub record: &'a PairRecord,
    pub semantic_sim: Option<f64>,
    pub spelling_sim: f64,
}

pub const PAIRS_HEADER: &str =
    "image_id,condition,prompt_id,word,orig_label,new_label,switched,orig_prob,new_prob,semantic_sim,spelling_sim";

pub fn emit_pairs(rows: &[PairRow<'_>], meta: &RunMetadata) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(PAIRS_HEADER.split(',')).expect("in-memory write");
    for row in rows {
        let r = row.record;
        w.write_record([
            r.image_id.as_str(),
            &r.condition.to_string(),
            &r.prompt_id,
            &r.word,
            &r.orig_label,
            &r.new_label,
            if r.switched { "true" } else { "false" },
            &r.orig_prob.to_string(),
            &r.new_prob.to_string(),
            &row.semantic_sim.map(|v| v.to_string()).unwrap_or_default(),
            &row.spelling_sim.to_string(),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    format!("{}{body}", meta.comment_line())
}
