//! Image manifests, the basic→superordinate taxonomy, word lists and the
//! (image × word × condition) trial plan.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::normalize_label;
use crate::stimulus::StimulusSpec;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("manifest header must be `id,path,basic_label,superordinate_label`, found `{0}`")]
    BadHeader(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest row {row}: field `{field}` is empty")]
    EmptyField { row: usize, field: &'static str },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("basic label {0:?} has no superordinate parent")]
    MissingParent(String),
    #[error("basic label {basic:?} has several superordinate parents ({first:?}, {second:?})")]
    ConflictingParents {
        basic: String,
        first: String,
        second: String,
    },
    #[error("word list {path}: {source}")]
    WordListParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("word list has no words")]
    EmptyWordList,
    #[error("word list contains an empty word at position {0}")]
    EmptyWord(usize),
    #[error("duplicate word {0:?} in word list")]
    DuplicateWord(String),
    #[error("trial plan is empty after filtering")]
    EmptyPlan,
    #[error("unknown condition code {0:?}")]
    UnknownCondition(String),
}

/// One corpus image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub basic_label: String,
    pub superordinate_label: String,
}

/// Basic → superordinate mapping over normalized labels. Both label lists
/// keep first-appearance order, which is also the classification order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTaxonomy {
    parent: HashMap<String, String>,
    basic: Vec<String>,
    superordinate: Vec<String>,
}

impl LabelTaxonomy {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut tax = LabelTaxonomy::default();
        for (basic, sup) in pairs {
            let basic = normalize_label(basic.as_ref());
            let sup = normalize_label(sup.as_ref());
            if sup.is_empty() {
                return Err(CorpusError::MissingParent(basic));
            }
            match tax.parent.get(&basic) {
                Some(existing) if *existing != sup => {
                    return Err(CorpusError::ConflictingParents {
                        basic,
                        first: existing.clone(),
                        second: sup,
                    })
                }
                Some(_) => {}
                None => {
                    if !tax.superordinate.contains(&sup) {
                        tax.superordinate.push(sup.clone());
                    }
                    tax.basic.push(basic.clone());
                    tax.parent.insert(basic, sup);
                }
            }
        }
        Ok(tax)
    }

    pub fn parent(&self, basic: &str) -> Option<&str> {
        self.parent.get(&normalize_label(basic)).map(String::as_str)
    }

    pub fn basic_labels(&self) -> &[String] {
        &self.basic
    }

    pub fn superordinate_labels(&self) -> &[String] {
        &self.superordinate
    }

    /// Candidate labels for a prediction task.
    pub fn labels_for(&self, task: Task) -> &[String] {
        match task {
            Task::SuperordinatePrediction => &self.superordinate,
            Task::BasicPrediction => &self.basic,
        }
    }
}

/// A loaded, validated manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub taxonomy: LabelTaxonomy,
    /// Directory that relative image paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve_path(&self, record: &ImageRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }
}

const MANIFEST_HEADER: [&str; 4] = ["id", "path", "basic_label", "superordinate_label"];

pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let data = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = parse_manifest(&data).map_err(|e| match e {
        CorpusError::Csv { source, .. } => CorpusError::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    let taxonomy = validate_records(&records)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Manifest {
        records,
        taxonomy,
        base_dir,
    })
}

/// Parse manifest CSV bytes without taxonomy validation.
pub fn parse_manifest(data: &[u8]) -> Result<Vec<ImageRecord>, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: PathBuf::new(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(data);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(CorpusError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<ImageRecord>().enumerate() {
        let rec = row.map_err(csv_err)?;
        let row_no = i + 2;
        for (field, value) in [
            ("id", rec.id.as_str()),
            ("basic_label", rec.basic_label.as_str()),
            ("superordinate_label", rec.superordinate_label.as_str()),
        ] {
            if value.trim().is_empty() {
                if field == "superordinate_label" {
                    return Err(CorpusError::MissingParent(normalize_label(&rec.basic_label)));
                }
                return Err(CorpusError::EmptyField { row: row_no, field });
            }
        }
        records.push(rec);
    }
    Ok(records)
}

fn validate_records(records: &[ImageRecord]) -> Result<LabelTaxonomy, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    LabelTaxonomy::from_pairs(
        records
            .iter()
            .map(|r| (r.basic_label.as_str(), r.superordinate_label.as_str())),
    )
}

/// Serialize records in manifest CSV form.
pub fn write_manifest<W: std::io::Write>(records: &[ImageRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_manifest(records: &[ImageRecord], path: &Path) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_manifest(records, &mut buf).map_err(|source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, buf).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordCategory {
    Superordinate,
    Basic,
    Pseudoword,
}

impl WordCategory {
    fn initial(self) -> char {
        match self {
            WordCategory::Superordinate => 'S',
            WordCategory::Basic => 'B',
            WordCategory::Pseudoword => 'P',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[serde(alias = "superordinate_prediction")]
    #[serde(rename = "superordinate")]
    SuperordinatePrediction,
    #[serde(alias = "basic_prediction")]
    #[serde(rename = "basic")]
    BasicPrediction,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::SuperordinatePrediction, Task::BasicPrediction];

    fn initial(self) -> char {
        match self {
            Task::SuperordinatePrediction => 'S',
            Task::BasicPrediction => 'B',
        }
    }
}

/// (prediction task, superimposed-word category) cell, written `S/B` etc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConditionCode {
    pub task: Task,
    pub word_category: WordCategory,
}

impl ConditionCode {
    pub const SS: ConditionCode = ConditionCode::new(Task::SuperordinatePrediction, WordCategory::Superordinate);
    pub const BS: ConditionCode = ConditionCode::new(Task::BasicPrediction, WordCategory::Superordinate);
    pub const SB: ConditionCode = ConditionCode::new(Task::SuperordinatePrediction, WordCategory::Basic);
    pub const BB: ConditionCode = ConditionCode::new(Task::BasicPrediction, WordCategory::Basic);

    /// The four cells of the main condition table, in column order.
    pub const TABLE: [ConditionCode; 4] = [Self::SS, Self::BS, Self::SB, Self::BB];

    pub const fn new(task: Task, word_category: WordCategory) -> Self {
        ConditionCode {
            task,
            word_category,
        }
    }

    /// Filename-safe form (`S-B`).
    pub fn file_code(&self) -> String {
        format!("{}-{}", self.task.initial(), self.word_category.initial())
    }
}

impl fmt::Display for ConditionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.task.initial(), self.word_category.initial())
    }
}

impl FromStr for ConditionCode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::UnknownCondition(s.to_string());
        let (t, w) = s.split_once(['/', '-']).ok_or_else(bad)?;
        let task = match t {
            "S" => Task::SuperordinatePrediction,
            "B" => Task::BasicPrediction,
            _ => return Err(bad()),
        };
        let word_category = match w {
            "S" => WordCategory::Superordinate,
            "B" => WordCategory::Basic,
            "P" => WordCategory::Pseudoword,
            _ => return Err(bad()),
        };
        Ok(ConditionCode::new(task, word_category))
    }
}

impl Serialize for ConditionCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConditionCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Words to superimpose, all from one category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordList {
    pub category: WordCategory,
    pub words: Vec<String>,
}

impl WordList {
    pub fn new(category: WordCategory, words: Vec<String>) -> Result<Self, CorpusError> {
        let list = WordList { category, words };
        list.validate()?;
        Ok(list)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.words.is_empty() {
            return Err(CorpusError::EmptyWordList);
        }
        let mut seen = HashSet::new();
        for (i, w) in self.words.iter().enumerate() {
            let n = normalize_label(w);
            if n.is_empty() {
                return Err(CorpusError::EmptyWord(i));
            }
            if !seen.insert(n.clone()) {
                return Err(CorpusError::DuplicateWord(n));
            }
        }
        Ok(())
    }

    pub fn from_json(data: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(data)
    }
}

pub fn load_word_list(path: &Path) -> Result<WordList, CorpusError> {
    let data = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let list = WordList::from_json(&data).map_err(|source| CorpusError::WordListParse {
        path: path.to_path_buf(),
        source,
    })?;
    list.validate()?;
    Ok(list)
}

/// Cartesian product of images and words for one prediction task.
///
/// With `include_own_label == false`, a word equal to the image's own label
/// at the word's category level is skipped (pseudowords are never skipped).
pub fn plan_trials(
    images: &[ImageRecord],
    word_list: &WordList,
    task: Task,
    include_own_label: bool,
) -> Result<Vec<StimulusSpec>, CorpusError> {
    word_list.validate()?;
    let condition = ConditionCode::new(task, word_list.category);
    let words: Vec<(String, String)> = word_list
        .words
        .iter()
        .map(|w| (w.trim().to_string(), normalize_label(w)))
        .collect();
    let mut specs = Vec::with_capacity(images.len() * words.len());
    for img in images {
        let own = match word_list.category {
            WordCategory::Superordinate => Some(normalize_label(&img.superordinate_label)),
            WordCategory::Basic => Some(normalize_label(&img.basic_label)),
            WordCategory::Pseudoword => None,
        };
        for (raw, norm) in &words {
            if !include_own_label && own.as_deref() == Some(norm.as_str()) {
                continue;
            }
            specs.push(StimulusSpec {
                image_id: img.id.clone(),
                word: Some(raw.clone()),
                condition,
            });
        }
    }
    if specs.is_empty() {
        return Err(CorpusError::EmptyPlan);
    }
    Ok(specs)
}
