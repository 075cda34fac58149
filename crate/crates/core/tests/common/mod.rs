#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use serde_json::{json, Value};

pub const TAXONOMY: [(&str, [&str; 2]); 10] = [
    ("animal", ["dog", "cat"]),
    ("vehicle", ["car", "bus"]),
    ("tool", ["hammer", "saw"]),
    ("food", ["apple", "bread"]),
    ("plant", ["tree", "flower"]),
    ("furniture", ["chair", "table"]),
    ("clothing", ["shirt", "hat"]),
    ("building", ["house", "tower"]),
    ("instrument", ["piano", "drum"]),
    ("person", ["man", "woman"]),
];

/// A corpus on disk: manifest, word lists and a run config.
pub struct Corpus {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub images: usize,
}

pub struct CorpusSpec {
    pub images: usize,
    pub superordinate_words: usize,
    pub basic_words: usize,
    /// Write real PNG files (needed by external providers).
    pub pixels: bool,
    pub provider: Value,
    pub extra: Value,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            images: 20,
            superordinate_words: 4,
            basic_words: 4,
            pixels: false,
            provider: json!({"kind": "synthetic", "gamma": 0.75}),
            extra: json!({}),
        }
    }
}

fn basic_labels() -> Vec<(&'static str, &'static str)> {
    // interleave so that the first k basics span k categories
    let mut out = Vec::new();
    for i in 0..2 {
        for (sup, basics) in TAXONOMY {
            out.push((basics[i], sup));
        }
    }
    out
}

pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Corpus {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let basics = basic_labels();
    let mut manifest = String::from("id,path,basic_label,superordinate_label\n");
    for i in 0..spec.images {
        let (basic, sup) = basics[i % basics.len()];
        let rel = format!("images/img{i:03}.png");
        if spec.pixels {
            let img = RgbImage::from_fn(64, 64, |x, y| {
                Rgb([(x * 4) as u8, (y * 4) as u8, (i * 37 % 256) as u8])
            });
            img.save(dir.join(&rel)).unwrap();
        }
        manifest.push_str(&format!("img{i:03},{rel},{basic},{sup}\n"));
    }
    std::fs::write(dir.join("manifest.csv"), manifest).unwrap();

    let sup_words: Vec<&str> = TAXONOMY.iter().take(spec.superordinate_words).map(|(s, _)| *s).collect();
    let basic_words: Vec<&str> = basics.iter().take(spec.basic_words).map(|(b, _)| *b).collect();
    std::fs::write(
        dir.join("sup_words.json"),
        json!({"category": "superordinate", "words": sup_words}).to_string(),
    )
    .unwrap();
    std::fs::write(
        dir.join("basic_words.json"),
        json!({"category": "basic", "words": basic_words}).to_string(),
    )
    .unwrap();

    let mut cfg = json!({
        "manifest": "manifest.csv",
        "word_lists": ["sup_words.json", "basic_words.json"],
        "provider": spec.provider,
        "seed": 7,
        "out_dir": "out",
    });
    if let (Some(c), Some(extra)) = (cfg.as_object_mut(), spec.extra.as_object()) {
        for (k, v) in extra {
            c.insert(k.clone(), v.clone());
        }
    }
    let config = dir.join("run.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    Corpus {
        dir: dir.to_path_buf(),
        config,
        images: spec.images,
    }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pwi-bench")
}

pub fn pwi(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// All files under `dir`, relative path → bytes.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// CSV body lines with the metadata comment stripped.
pub fn csv_body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// Condition cells from `table1_flat.csv`.
pub fn table1_cells(report: &Path) -> BTreeMap<String, String> {
    csv_body(&report.join("table1_flat.csv"))
        .into_iter()
        .skip(1)
        .map(|l| {
            let (c, v) = l.split_once(',').unwrap();
            (c.to_string(), v.to_string())
        })
        .collect()
}
