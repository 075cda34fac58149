//! End-to-end orchestration: load and validate a run, collect embeddings,
//! classify, analyze and write the report directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ProviderSpec, RunConfig};
use crate::corpus::{
    load_manifest, load_word_list, plan_trials, ConditionCode, ImageRecord, Manifest, Task, WordList,
};
use crate::metrics::{
    label_word_similarity, load_word_vectors, split_by_switch, switched_label_relatedness, switching_rates,
    PairRecord, SimilarityMetric, WordVectorStore,
};
use crate::normalize_label;
use crate::provider::{
    Embedding, EmbeddingCache, EmbeddingProvider, ExternalProvider, ImagePayload, Modality, ProviderError,
    SyntheticProvider, SyntheticProviderConfig, SYNTHETIC_PRNG_ID,
};
use crate::report::{self, PairRow, PromptRow, ReportError, RunMetadata};
use crate::rsa::{self, Rdm};
use crate::stimulus::{read_image, Renderer, StimulusSpec};
use crate::zeroshot::{builtin_template, classify, instantiate_prompt, load_templates, PromptTemplate};
use crate::TOOL_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} [{item}]: {source}")]
    Provider {
        stage: &'static str,
        item: String,
        #[source]
        source: ProviderError,
    },
    #[error("{stage} [{item}]: {message}")]
    Data {
        stage: &'static str,
        item: String,
        message: String,
    },
}

impl PipelineError {
    /// Process exit status: 2 config, 3 provider, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Provider { .. } => 3,
            PipelineError::Data { .. } => 4,
        }
    }

    fn data(stage: &'static str, item: impl Into<String>, message: impl ToString) -> Self {
        PipelineError::Data {
            stage,
            item: item.into(),
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<ReportError> for PipelineError {
    fn from(e: ReportError) -> Self {
        PipelineError::data("report", "", e)
    }
}

/// A validated run: every input loaded and checked, nothing computed yet.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub manifest: Manifest,
    pub word_lists: Vec<WordList>,
    pub templates: Vec<PromptTemplate>,
    pub store: Option<WordVectorStore>,
}

/// Load every input named by `config` and check it. No embedding work is
/// done here.
pub fn prepare(config: RunConfig) -> Result<Run, PipelineError> {
    config.validate()?;
    let manifest = load_manifest(&config.manifest).map_err(|e| PipelineError::data("manifest", path_item(&config.manifest), e))?;
    let word_lists = config
        .word_lists
        .iter()
        .map(|p| load_word_list(p).map_err(|e| PipelineError::data("word_list", path_item(p), e)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut templates = Vec::new();
    for id in &config.prompts.ids {
        templates.push(builtin_template(id).map_err(|e| PipelineError::Config(e.to_string()))?);
    }
    if let Some(file) = &config.prompts.file {
        templates.extend(load_templates(file).map_err(|e| PipelineError::data("prompts", path_item(file), e))?);
    }
    let mut seen = HashSet::new();
    for t in &templates {
        if !seen.insert(t.id.as_str()) {
            return Err(PipelineError::Config(format!("prompt template id {:?} selected twice", t.id)));
        }
    }

    let store = match &config.word_vectors {
        Some(p) => Some(load_word_vectors(p).map_err(|e| PipelineError::data("word_vectors", path_item(p), e))?),
        None => None,
    };
    for w in &config.rsa.words {
        if normalize_label(w).is_empty() {
            return Err(PipelineError::Config("empty RSA word".into()));
        }
    }
    if matches!(config.provider, ProviderSpec::External { .. }) {
        Renderer::new(config.render.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let run = Run {
        config,
        manifest,
        word_lists,
        templates,
        store,
    };
    if let ProviderSpec::Synthetic {
        vocabulary: Some(vocab), ..
    } = &run.config.provider
    {
        let have: HashSet<String> = vocab.iter().map(|v| normalize_label(v)).collect();
        if let Some(missing) = run.vocabulary().into_iter().find(|w| !have.contains(w)) {
            return Err(PipelineError::Config(format!(
                "synthetic vocabulary lacks {missing:?}, which the run uses"
            )));
        }
    }
    Ok(run)
}

fn path_item(p: &Path) -> String {
    p.display().to_string()
}

impl Run {
    /// Every label and word the run can ask a synthetic provider about, in
    /// first-use order.
    pub fn vocabulary(&self) -> Vec<String> {
        let tax = &self.manifest.taxonomy;
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let words = self.word_lists.iter().flat_map(|l| l.words.iter()).chain(&self.config.rsa.words);
        for w in tax
            .basic_labels()
            .iter()
            .chain(tax.superordinate_labels())
            .map(|s| s.to_string())
            .chain(words.map(|w| normalize_label(w)))
        {
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    }

    /// SHA-256 over the effective config with input paths replaced by the
    /// digests of their contents; the output directory and cache switch do
    /// not affect results and are left out.
    pub fn config_digest(&self) -> String {
        let mut v = serde_json::to_value(&self.config).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("out_dir");
        obj.remove("cache");
        obj.insert("manifest".into(), file_digest(&self.config.manifest).into());
        obj.insert(
            "word_lists".into(),
            self.config.word_lists.iter().map(|p| file_digest(p)).collect::<Vec<_>>().into(),
        );
        if let Some(p) = &self.config.word_vectors {
            obj.insert("word_vectors".into(), file_digest(p).into());
        }
        if let Some(p) = &self.config.prompts.file {
            obj["prompts"]["file"] = file_digest(p).into();
        }
        obj["render"]["font_file"] = file_digest(&self.config.render.font_file).into();
        obj.insert(
            "templates".into(),
            self.templates.iter().map(|t| format!("{}={}", t.id, t.pattern)).collect::<Vec<_>>().into(),
        );
        hex(&Sha256::digest(serde_json::to_vec(&v).expect("value serializes")))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.config.out_dir.join("report")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(p: &Path) -> String {
    match std::fs::read(p) {
        Ok(b) => format!("sha256:{}", hex(&Sha256::digest(b))),
        Err(_) => format!("unreadable:{}", p.display()),
    }
}

/// Construct the configured provider (spawning the external process).
pub fn build_provider(run: &Run) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    let cfg = &run.config;
    match &cfg.provider {
        ProviderSpec::Synthetic {
            vocabulary,
            seed,
            gamma,
            dim,
        } => {
            let mut sc = SyntheticProviderConfig::new(
                vocabulary.clone().unwrap_or_else(|| run.vocabulary()),
                seed.unwrap_or(cfg.seed),
                *gamma,
            );
            if let Some(d) = dim {
                sc.dim = *d;
            }
            let p = SyntheticProvider::new(sc).map_err(|source| PipelineError::Provider {
                stage: "provider",
                item: "synthetic".into(),
                source,
            })?;
            Ok(Box::new(p))
        }
        ProviderSpec::External { command } => {
            let p = ExternalProvider::spawn(
                command,
                std::time::Duration::from_secs(cfg.timeout_secs),
                cfg.batch_size,
            )
            .map_err(|source| PipelineError::Provider {
                stage: "handshake",
                item: command.join(" "),
                source,
            })?;
            Ok(Box::new(p))
        }
    }
}

/// How image payloads are produced.
enum Images {
    /// Stimulus metadata for the synthetic provider.
    Meta,
    /// Rendered PNG bytes for real encoders.
    Pixels {
        renderer: Renderer,
        originals: HashMap<String, Vec<u8>>,
    },
}

/// Provider, cache and payload source for one run.
pub struct Engine<'a> {
    run: &'a Run,
    provider: Box<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
    images: Images,
}

impl<'a> Engine<'a> {
    pub fn new(run: &'a Run, provider: Box<dyn EmbeddingProvider>) -> Result<Self, PipelineError> {
        let cfg = &run.config;
        let fingerprint = provider.fingerprint();
        let cache = if cfg.cache {
            EmbeddingCache::persistent(&cfg.out_dir.join("cache"), fingerprint)
        } else {
            EmbeddingCache::in_memory(fingerprint)
        };
        let images = if matches!(cfg.provider, ProviderSpec::Synthetic { .. }) {
            Images::Meta
        } else {
            let renderer = Renderer::new(cfg.render.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
            let originals = run
                .manifest
                .records
                .par_iter()
                .map(|r| {
                    let path = run.manifest.resolve_path(r);
                    read_image(&path)
                        .map(|b| (r.id.clone(), b))
                        .map_err(|e| PipelineError::data("read_image", &r.id, format!("{}: {e}", path.display())))
                })
                .collect::<Result<HashMap<_, _>, _>>()?;
            Images::Pixels { renderer, originals }
        };
        Ok(Engine {
            run,
            provider,
            cache,
            images,
        })
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn require(&self, m: Modality) -> Result<(), PipelineError> {
        if self.provider.info().modalities.contains(&m) {
            Ok(())
        } else {
            Err(PipelineError::Provider {
                stage: "handshake",
                item: self.provider.info().name.clone(),
                source: ProviderError::InvalidConfig(format!("provider does not support {m:?} inputs")),
            })
        }
    }

    fn payloads(&self, imgs: &[&ImageRecord], level: Task, word: Option<&str>) -> Result<Vec<ImagePayload>, PipelineError> {
        match &self.images {
            Images::Meta => Ok(imgs
                .iter()
                .map(|r| ImagePayload::Meta {
                    content: match level {
                        Task::SuperordinatePrediction => r.superordinate_label.clone(),
                        Task::BasicPrediction => r.basic_label.clone(),
                    },
                    word: word.map(str::to_string),
                })
                .collect()),
            Images::Pixels { renderer, originals } => imgs
                .par_iter()
                .map(|r| {
                    renderer
                        .render_png(&originals[&r.id], word)
                        .map(ImagePayload::Encoded)
                        .map_err(|e| PipelineError::data("render", &r.id, e))
                })
                .collect(),
        }
    }

    fn embed_images(&mut self, payloads: &[ImagePayload], item: String) -> Result<Vec<Embedding>, PipelineError> {
        self.cache
            .embed_images(self.provider.as_mut(), payloads)
            .map_err(|source| PipelineError::Provider {
                stage: "embed_images",
                item,
                source,
            })
    }

    fn label_embeddings(
        &mut self,
        template: &PromptTemplate,
        labels: &[String],
        word: Option<&str>,
    ) -> Result<Vec<Embedding>, PipelineError> {
        let prompts = labels
            .iter()
            .map(|l| instantiate_prompt(template, l, word))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::data("prompt", &template.id, e))?;
        self.cache
            .embed_texts(self.provider.as_mut(), &prompts)
            .map_err(|source| PipelineError::Provider {
                stage: "embed_text",
                item: template.id.clone(),
                source,
            })
    }

    /// Classify every no-word image and every word stimulus under each
    /// template and task. Records come back sorted by
    /// (image_id, word, prompt_id, condition).
    pub fn classify_trials(&mut self, templates: &[PromptTemplate]) -> Result<Vec<PairRecord>, PipelineError> {
        self.require(Modality::Text)?;
        self.require(Modality::Image)?;
        let run = self.run;
        let scale = run.config.logit_scale;
        let by_id: HashMap<&str, &ImageRecord> = run.manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut records = Vec::new();
        for t in templates {
            for &task in &run.config.tasks {
                let labels = run.manifest.taxonomy.labels_for(task).to_vec();
                let shared = if t.is_variable() {
                    None
                } else {
                    Some(self.label_embeddings(t, &labels, None)?)
                };
                // (variable-template word, image id) → (label, probability)
                let mut controls: HashMap<(Option<String>, String), (String, f64)> = HashMap::new();
                for wl in &run.word_lists {
                    let trials = plan_trials(&run.manifest.records, wl, task, run.config.include_own_label)
                        .map_err(|e| PipelineError::data("plan", format!("{}/{task:?}", t.id), e))?;
                    for (word, condition, imgs) in group_by_word(&trials, &by_id) {
                        let label_embs = match &shared {
                            Some(e) => e.clone(),
                            None => self.label_embeddings(t, &labels, Some(&word))?,
                        };
                        let key_word = t.is_variable().then(|| word.clone());
                        let need: Vec<&ImageRecord> = imgs
                            .iter()
                            .copied()
                            .filter(|r| !controls.contains_key(&(key_word.clone(), r.id.clone())))
                            .collect();
                        if !need.is_empty() {
                            let payloads = self.payloads(&need, task, None)?;
                            let embs = self.embed_images(&payloads, format!("{} no-word images", t.id))?;
                            for (r, e) in need.iter().zip(&embs) {
                                let c = classify(e, &label_embs, &labels, scale)
                                    .map_err(|err| PipelineError::data("classify", &r.id, err))?;
                                controls.insert((key_word.clone(), r.id.clone()), (c.predicted.clone(), c.predicted_probability()));
                            }
                        }
                        let payloads = self.payloads(&imgs, task, Some(&word))?;
                        let embs = self.embed_images(&payloads, format!("{} word {word:?}", t.id))?;
                        for (r, e) in imgs.iter().zip(&embs) {
                            let c = classify(e, &label_embs, &labels, scale)
                                .map_err(|err| PipelineError::data("classify", format!("{} + {word:?}", r.id), err))?;
                            let (orig, orig_p) = &controls[&(key_word.clone(), r.id.clone())];
                            records.push(PairRecord::new(
                                r.id.clone(),
                                condition,
                                t.id.clone(),
                                word.clone(),
                                orig.clone(),
                                c.predicted.clone(),
                                *orig_p,
                                c.predicted_probability(),
                            ));
                        }
                    }
                }
            }
        }
        sort_records(&mut records);
        Ok(records)
    }

    /// Image embeddings of every manifest image, without a word or with a
    /// fixed word, for representational analysis.
    pub fn image_set(&mut self, word: Option<&str>) -> Result<Vec<Embedding>, PipelineError> {
        self.require(Modality::Image)?;
        let imgs: Vec<&ImageRecord> = self.run.manifest.records.iter().collect();
        let payloads = self.payloads(&imgs, Task::BasicPrediction, word)?;
        self.embed_images(&payloads, format!("rsa {}", word.unwrap_or("no-word")))
    }

    pub fn save_cache(&self) -> Result<(), PipelineError> {
        self.cache
            .save()
            .map_err(|e| PipelineError::data("cache", "save", e))
    }
}

fn group_by_word<'r>(
    trials: &[StimulusSpec],
    by_id: &HashMap<&str, &'r ImageRecord>,
) -> Vec<(String, ConditionCode, Vec<&'r ImageRecord>)> {
    let mut order: Vec<(String, ConditionCode, Vec<&ImageRecord>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for s in trials {
        let word = s.word.clone().expect("planned trials carry a word");
        let i = *index.entry(word.clone()).or_insert_with(|| {
            order.push((word, s.condition, Vec::new()));
            order.len() - 1
        });
        order[i].2.push(by_id[s.image_id.as_str()]);
    }
    order
}

pub fn sort_records(records: &mut [PairRecord]) {
    records.sort_by(|a, b| {
        (&a.image_id, &a.word, &a.prompt_id, a.condition).cmp(&(&b.image_id, &b.word, &b.prompt_id, b.condition))
    });
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report_dir: PathBuf,
    pub meta: RunMetadata,
    pub records: Vec<PairRecord>,
    /// Rates per prompt id, in template order.
    pub rates: Vec<(String, BTreeMap<ConditionCode, f64>)>,
    pub rsa: Option<RsaSummary>,
    pub text_items_requested: usize,
    pub image_items_requested: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Classification, metrics, tables, figures and (if configured) RSA.
    Run,
    /// Classification under every template, reported as the prompt table.
    Sweep,
    /// Representational analysis only.
    Rsa,
}

fn metadata(run: &Run, provider: &dyn EmbeddingProvider) -> RunMetadata {
    let synthetic_seed = match &run.config.provider {
        ProviderSpec::Synthetic { seed, .. } => Some(seed.unwrap_or(run.config.seed)),
        ProviderSpec::External { .. } => None,
    };
    let mut counts = BTreeMap::new();
    counts.insert("images".to_string(), run.manifest.records.len());
    for wl in &run.word_lists {
        *counts.entry(format!("words_{}", category_name(wl))).or_insert(0) += wl.words.len();
    }
    RunMetadata {
        tool_version: TOOL_VERSION.to_string(),
        config_digest: run.config_digest(),
        provider_name: provider.info().name.clone(),
        provider_dim: provider.info().dim,
        seed: Some(synthetic_seed.unwrap_or(run.config.seed)),
        prng_id: synthetic_seed.map(|_| SYNTHETIC_PRNG_ID.to_string()),
        word_vectors_id: run.store.as_ref().and_then(|s| s.source_id.clone()),
        prompt_template_ids: run.templates.iter().map(|t| t.id.clone()).collect(),
        counts,
        generated_at: run.config.timestamps.then(|| {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("unix:{secs}")
        }),
    }
}

fn category_name(wl: &WordList) -> &'static str {
    match wl.category {
        crate::corpus::WordCategory::Superordinate => "superordinate",
        crate::corpus::WordCategory::Basic => "basic",
        crate::corpus::WordCategory::Pseudoword => "pseudoword",
    }
}

/// Execute a prepared run and write its report directory.
pub fn execute(run: &Run, mode: Mode) -> Result<RunSummary, PipelineError> {
    let provider = build_provider(run)?;
    execute_with(run, mode, provider)
}

/// [`execute`] with a caller-supplied provider.
pub fn execute_with(run: &Run, mode: Mode, provider: Box<dyn EmbeddingProvider>) -> Result<RunSummary, PipelineError> {
    let mut engine = Engine::new(run, provider)?;
    let result = execute_engine(run, mode, &mut engine);
    // keep whatever was embedded, even when a later stage failed
    let saved = engine.save_cache();
    let summary = result?;
    saved?;
    Ok(summary)
}

fn execute_engine(run: &Run, mode: Mode, engine: &mut Engine<'_>) -> Result<RunSummary, PipelineError> {
    let mut meta = metadata(run, engine.provider());
    let report_dir = run.report_dir();
    std::fs::create_dir_all(&report_dir).map_err(|e| PipelineError::data("report", path_item(&report_dir), e))?;

    let mut records = Vec::new();
    let mut rates = Vec::new();
    if mode != Mode::Rsa {
        records = engine.classify_trials(&run.templates)?;
        for t in &run.templates {
            let subset: Vec<PairRecord> = records.iter().filter(|r| r.prompt_id == t.id).cloned().collect();
            rates.push((t.id.clone(), switching_rates(&subset)));
        }
        let first = &run.templates[0].id;
        for r in records.iter().filter(|r| &r.prompt_id == first) {
            *meta.counts.entry(format!("trials_{}", r.condition.file_code())).or_insert(0) += 1;
        }
        meta.counts.insert("records".into(), records.len());
    }

    let rsa = if mode == Mode::Rsa || (mode == Mode::Run && (run.config.rsa.enabled || !run.config.rsa.words.is_empty())) {
        Some(rsa_analysis(run, engine)?)
    } else {
        None
    };

    if mode != Mode::Rsa {
        write_classification_reports(run, mode, &records, &rates, &meta)?;
    }
    if let Some(r) = &rsa {
        write_rsa_reports(run, r, &meta)?;
    }
    write_json(&report_dir, "meta.json", &meta)?;

    Ok(RunSummary {
        report_dir,
        meta,
        records,
        rates,
        rsa,
        text_items_requested: engine.cache().text_items_requested(),
        image_items_requested: engine.cache().image_items_requested(),
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    report::write_artifact(dir, name, &s)?;
    Ok(())
}

#[derive(Serialize)]
struct CellCounts {
    rate: f64,
    switched: usize,
    total: usize,
}

#[derive(Serialize)]
struct PromptRates<'a> {
    prompt_id: &'a str,
    pattern: &'a str,
    conditions: BTreeMap<String, CellCounts>,
}

#[derive(Serialize)]
struct RatesArtifact<'a> {
    meta: &'a RunMetadata,
    prompts: Vec<PromptRates<'a>>,
}

fn write_classification_reports(
    run: &Run,
    mode: Mode,
    records: &[PairRecord],
    rates: &[(String, BTreeMap<ConditionCode, f64>)],
    meta: &RunMetadata,
) -> Result<(), PipelineError> {
    let dir = run.report_dir();
    let store = run.store.as_ref();

    let prompt_rows: Vec<PromptRow> = run
        .templates
        .iter()
        .zip(rates)
        .map(|(t, (_, r))| PromptRow {
            prompt_id: t.id.clone(),
            pattern: t.pattern.clone(),
            rates: r.clone(),
        })
        .collect();
    report::write_artifact(&dir, "table2.csv", &report::emit_prompt_table(&prompt_rows, meta)?)?;

    let prompts = run
        .templates
        .iter()
        .map(|t| {
            let mut conditions: BTreeMap<String, CellCounts> = BTreeMap::new();
            for r in records.iter().filter(|r| r.prompt_id == t.id) {
                let c = conditions.entry(r.condition.to_string()).or_insert(CellCounts {
                    rate: 0.0,
                    switched: 0,
                    total: 0,
                });
                c.total += 1;
                c.switched += r.switched as usize;
            }
            for c in conditions.values_mut() {
                c.rate = 100.0 * c.switched as f64 / c.total as f64;
            }
            PromptRates {
                prompt_id: &t.id,
                pattern: &t.pattern,
                conditions,
            }
        })
        .collect();
    write_json(&dir, "rates.json", &RatesArtifact { meta, prompts })?;

    let rows: Vec<(Option<f64>, f64)> = records
        .par_iter()
        .map(|r| {
            let sem = store.and_then(|s| {
                label_word_similarity(SimilarityMetric::Semantic, Some(s), &r.orig_label, &r.word)
                    .ok()
                    .flatten()
            });
            let spell = label_word_similarity(SimilarityMetric::Spelling, None, &r.orig_label, &r.word)
                .ok()
                .flatten()
                .expect("spelling similarity is always defined");
            (sem, spell)
        })
        .collect();
    let pair_rows: Vec<PairRow> = records
        .iter()
        .zip(rows)
        .map(|(record, (semantic_sim, spelling_sim))| PairRow {
            record,
            semantic_sim,
            spelling_sim,
        })
        .collect();
    report::write_artifact(&dir, "pairs.csv", &report::emit_pairs(&pair_rows, meta))?;

    if mode == Mode::Sweep {
        return Ok(());
    }

    let first = &run.templates[0].id;
    let (_, first_rates) = &rates[0];
    match report::emit_condition_table(first_rates, meta) {
        Ok(t) => {
            report::write_artifact(&dir, "table1.csv", &t.grid_csv)?;
            report::write_artifact(&dir, "table1_flat.csv", &t.flat_csv)?;
            report::write_artifact(&dir, "table1.txt", &t.text)?;
        }
        Err(ReportError::MissingCell(c)) => {
            log::warn!("table1 skipped: no trials for condition {c}");
        }
        Err(e) => return Err(e.into()),
    }

    let mut by_condition: BTreeMap<ConditionCode, Vec<PairRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| &r.prompt_id == first) {
        by_condition.entry(r.condition).or_default().push(r.clone());
    }
    for (code, recs) in &by_condition {
        let mut metrics = vec![SimilarityMetric::Spelling];
        if store.is_some() {
            metrics.insert(0, SimilarityMetric::Semantic);
        }
        for m in metrics {
            let split = split_by_switch(recs, m, store).map_err(|e| PipelineError::data("metrics", code.to_string(), e))?;
            let label = format!("{} {code}", m.name());
            report::write_artifact(
                &dir,
                &format!("fig2_{}_{}.json", m.name(), code.file_code()),
                &report::emit_distribution_data(&split, &label, meta),
            )?;
        }
        if let Some(s) = store {
            let rel = switched_label_relatedness(recs, s);
            report::write_artifact(
                &dir,
                &format!("relatedness_{}.json", code.file_code()),
                &report::emit_relatedness(&rel, &format!("switched label vs word {code}"), meta),
            )?;
        }
    }
    Ok(())
}

/// RDMs of the no-word images and of each fixed-word image set.
#[derive(Debug, Clone)]
pub struct RsaSummary {
    /// `(tag, rdm)`; the first entry is the no-word RDM tagged `original`.
    pub rdms: Vec<(String, Rdm)>,
    pub stats: Vec<RdmStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdmStats {
    pub tag: String,
    pub word: Option<String>,
    pub cluster_index: Option<f64>,
    pub mean_offdiag: f64,
    /// Spearman ρ against the no-word RDM (absent for the no-word RDM).
    pub vs_original: Option<f64>,
}

fn rdm_tag(word: &str) -> String {
    let slug: String = normalize_label(word)
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    format!("word_{slug}")
}

fn rsa_analysis(run: &Run, engine: &mut Engine<'_>) -> Result<RsaSummary, PipelineError> {
    let ids: Vec<String> = run.manifest.records.iter().map(|r| r.id.clone()).collect();
    let cats: HashMap<String, String> = run
        .manifest
        .records
        .iter()
        .map(|r| (r.id.clone(), normalize_label(&r.superordinate_label)))
        .collect();
    let category_of = rsa::categories_for(&ids, &cats);
    let mut sets: Vec<(String, Option<String>)> = vec![("original".into(), None)];
    sets.extend(run.config.rsa.words.iter().map(|w| (rdm_tag(w), Some(w.trim().to_string()))));

    let mut rdms = Vec::new();
    let mut stats = Vec::new();
    for (tag, word) in sets {
        let embs = engine.image_set(word.as_deref())?;
        let rdm = rsa::compute_rdm(&embs, &ids)
            .map_err(|e| PipelineError::data("rsa", &tag, e))?
            .with_categories(category_of.clone());
        let vs_original = match rdms.first() {
            Some((_, orig)) => Some(rsa::compare_rdms(&rdm, orig).map_err(|e| PipelineError::data("rsa", &tag, e))?),
            None => None,
        };
        stats.push(RdmStats {
            tag: tag.clone(),
            word,
            cluster_index: rsa::cluster_index(&rdm).ok(),
            mean_offdiag: rsa::mean_offdiag(&rdm),
            vs_original,
        });
        rdms.push((tag, rdm));
    }
    Ok(RsaSummary { rdms, stats })
}

fn write_rsa_reports(run: &Run, rsa: &RsaSummary, meta: &RunMetadata) -> Result<(), PipelineError> {
    let dir = run.report_dir();
    for (tag, rdm) in &rsa.rdms {
        let body = format!("{}{}", meta.comment_line(), rdm.to_csv());
        report::write_artifact(&dir, &format!("rdm_{tag}.csv"), &body)?;
    }
    #[derive(Serialize)]
    struct Artifact<'a> {
        meta: &'a RunMetadata,
        rdms: &'a [RdmStats],
    }
    write_json(&dir, "rsa.json", &Artifact { meta, rdms: &rsa.stats })
}

/// Render every planned stimulus (and each no-word control) into
/// `<out>/stimuli/`, plus an `index.csv`. Returns the number of files.
pub fn generate_stimuli(run: &Run) -> Result<usize, PipelineError> {
    let renderer = Renderer::new(run.config.render.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
    let dir = run.config.out_dir.join("stimuli");
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::data("generate", path_item(&dir), e))?;
    let by_id: HashMap<&str, &ImageRecord> = run.manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut specs: Vec<StimulusSpec> = Vec::new();
    let mut seen = HashSet::new();
    for &task in &run.config.tasks {
        for wl in &run.word_lists {
            let trials = plan_trials(&run.manifest.records, wl, task, run.config.include_own_label)
                .map_err(|e| PipelineError::data("plan", format!("{task:?}"), e))?;
            let condition = trials[0].condition;
            for r in &run.manifest.records {
                let control = StimulusSpec {
                    image_id: r.id.clone(),
                    word: None,
                    condition,
                };
                if seen.insert(control.file_name()) {
                    specs.push(control);
                }
            }
            for s in trials {
                if seen.insert(s.file_name()) {
                    specs.push(s);
                }
            }
        }
    }

    specs
        .par_iter()
        .map(|s| {
            let rec = by_id[s.image_id.as_str()];
            let path = run.manifest.resolve_path(rec);
            let original = read_image(&path).map_err(|e| PipelineError::data("read_image", &rec.id, e))?;
            let png = renderer
                .render_png(&original, s.word.as_deref())
                .map_err(|e| PipelineError::data("render", s.file_name(), e))?;
            report::write_atomic(&dir.join(s.file_name()), &png).map_err(|e| PipelineError::data("generate", s.file_name(), e))
        })
        .collect::<Result<Vec<()>, _>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["file", "image_id", "word", "condition"]).expect("in-memory write");
    for s in &specs {
        w.write_record([
            s.file_name().as_str(),
            &s.image_id,
            s.word.as_deref().unwrap_or(""),
            &s.condition.to_string(),
        ])
        .expect("in-memory write");
    }
    let body = w.into_inner().expect("in-memory flush");
    report::write_atomic(&dir.join("index.csv"), &body).map_err(|e| PipelineError::data("generate", "index.csv", e))?;
    Ok(specs.len())
}

/// Human-readable summary of a prepared run, for `validate`.
pub fn describe(run: &Run) -> Result<String, PipelineError> {
    use std::fmt::Write as _;
    let tax = &run.manifest.taxonomy;
    let mut s = String::new();
    let _ = writeln!(s, "images: {}", run.manifest.records.len());
    let _ = writeln!(
        s,
        "labels: {} basic, {} superordinate",
        tax.basic_labels().len(),
        tax.superordinate_labels().len()
    );
    for (wl, p) in run.word_lists.iter().zip(&run.config.word_lists) {
        let _ = writeln!(s, "word list {} ({}): {} words", p.display(), category_name(wl), wl.words.len());
    }
    for &task in &run.config.tasks {
        for wl in &run.word_lists {
            let trials = plan_trials(&run.manifest.records, wl, task, run.config.include_own_label)
                .map_err(|e| PipelineError::data("plan", format!("{task:?}"), e))?;
            let _ = writeln!(s, "condition {}: {} trials", trials[0].condition, trials.len());
        }
    }
    let ids: Vec<&str> = run.templates.iter().map(|t| t.id.as_str()).collect();
    let _ = writeln!(s, "prompts: {}", ids.join(", "));
    let _ = writeln!(s, "config digest: {}", run.config_digest());
    Ok(s)
}
