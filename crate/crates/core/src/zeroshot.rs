//! Prompt templates and zero-shot classification.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::provider::{cosine_parts, dot, Embedding};

pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

const X: &str = "{X}";
const Y: &str = "{Y}";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ZeroShotError {
    #[error("template {id:?}: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("template {0:?} needs a superimposed word")]
    MissingWord(String),
    #[error("template {0:?} takes no superimposed word")]
    UnexpectedWord(String),
    #[error("no labels to classify against")]
    NoLabels,
    #[error("{labels} labels but {embeddings} label embeddings")]
    LabelCountMismatch { labels: usize, embeddings: usize },
    #[error("dimension mismatch: image {image}, label {index} has {label}")]
    DimensionMismatch { image: usize, index: usize, label: usize },
    #[error("zero-norm {0}")]
    ZeroNorm(String),
    #[error("logit scale must be positive and finite, got {0}")]
    InvalidLogitScale(f64),
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    /// Prompt says the picture content is the answer.
    ImageContent,
    /// Prompt says the written word is the answer.
    SuperimposedWord,
    /// Prompt names the superimposed word through `{Y}`.
    Variable,
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub pattern: String,
    pub focus: Focus,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, pattern: impl Into<String>, focus: Focus) -> Result<Self, ZeroShotError> {
        let t = PromptTemplate {
            id: id.into(),
            pattern: pattern.into(),
            focus,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ZeroShotError> {
        let invalid = |reason: &str| ZeroShotError::InvalidTemplate {
            id: self.id.clone(),
            reason: reason.into(),
        };
        if self.pattern.matches(X).count() != 1 {
            return Err(invalid("pattern must contain {X} exactly once"));
        }
        let ys = self.pattern.matches(Y).count();
        if ys > 1 {
            return Err(invalid("pattern may contain {Y} at most once"));
        }
        if (ys == 1) != (self.focus == Focus::Variable) {
            return Err(invalid("focus must be `variable` exactly when {Y} is present"));
        }
        Ok(())
    }

    pub fn is_variable(&self) -> bool {
        self.focus == Focus::Variable
    }
}

/// The default prompt followed by the seven prompt-dependency prompts.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    [
        ("default", "a photo of a {X}", Focus::Default),
        ("content_red_word_label", "a red word label over a picture of a {X}", Focus::ImageContent),
        ("content_word_printed", "a word is printed in a red font over a picture of a {X}", Focus::ImageContent),
        ("content_photo_of_word", "a photo of a word written in a red font over a picture of a {X}", Focus::ImageContent),
        ("word_text_says", "a text that says {X}", Focus::SuperimposedWord),
        ("word_of_a_printed", "a word of a {X} is printed in a red font over a picture", Focus::SuperimposedWord),
        ("word_photo_of_the_word", "a photo of the word {X} written in a red font over a picture", Focus::SuperimposedWord),
        ("variable_word", "a photo of the word {Y} written in a red font over a picture of a {X}", Focus::Variable),
    ]
    .into_iter()
    .map(|(id, pattern, focus)| PromptTemplate {
        id: id.into(),
        pattern: pattern.into(),
        focus,
    })
    .collect()
}

pub fn builtin_template(id: &str) -> Result<PromptTemplate, ZeroShotError> {
    builtin_templates()
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| ZeroShotError::UnknownTemplate(id.to_string()))
}

/// Parse a template file: a JSON list of `{"id", "pattern", "focus"}`.
pub fn parse_templates(json: &str) -> Result<Vec<PromptTemplate>, String> {
    let templates: Vec<PromptTemplate> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    for t in &templates {
        t.validate().map_err(|e| e.to_string())?;
    }
    Ok(templates)
}

pub fn load_templates(path: &Path) -> Result<Vec<PromptTemplate>, String> {
    let s = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_templates(&s).map_err(|e| format!("{}: {e}", path.display()))
}

/// Substitute `{X}` and `{Y}` in one pass; substituted text is never
/// re-expanded.
pub fn instantiate_prompt(template: &PromptTemplate, x: &str, y: Option<&str>) -> Result<String, ZeroShotError> {
    template.validate()?;
    match (template.is_variable(), y) {
        (true, None) => return Err(ZeroShotError::MissingWord(template.id.clone())),
        (false, Some(_)) => return Err(ZeroShotError::UnexpectedWord(template.id.clone())),
        _ => {}
    }
    let mut out = String::with_capacity(template.pattern.len() + x.len() + y.map_or(0, str::len));
    let mut rest = template.pattern.as_str();
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix(X) {
            out.push_str(x);
            rest = after;
        } else if let (Some(after), Some(y)) = (tail.strip_prefix(Y), y) {
            out.push_str(y);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub labels: Vec<String>,
    pub cosines: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted: String,
    pub predicted_index: usize,
}

impl ClassificationResult {
    pub fn predicted_probability(&self) -> f64 {
        self.probabilities[self.predicted_index]
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Cosine similarities between the image and each label embedding, softmax
/// over `logit_scale · cosine`, argmax with lowest-index tie-break.
pub fn classify(
    image_emb: &Embedding,
    label_embs: &[Embedding],
    labels: &[String],
    logit_scale: f64,
) -> Result<ClassificationResult, ZeroShotError> {
    if labels.is_empty() {
        return Err(ZeroShotError::NoLabels);
    }
    if labels.len() != label_embs.len() {
        return Err(ZeroShotError::LabelCountMismatch {
            labels: labels.len(),
            embeddings: label_embs.len(),
        });
    }
    if !(logit_scale > 0.0 && logit_scale.is_finite()) {
        return Err(ZeroShotError::InvalidLogitScale(logit_scale));
    }
    let img = image_emb.values();
    let img_sq = dot(img, img);
    if img_sq == 0.0 {
        return Err(ZeroShotError::ZeroNorm("image embedding".into()));
    }
    let mut cosines = Vec::with_capacity(labels.len());
    for (index, (label, e)) in labels.iter().zip(label_embs).enumerate() {
        if e.dim() != img.len() {
            return Err(ZeroShotError::DimensionMismatch {
                image: img.len(),
                index,
                label: e.dim(),
            });
        }
        let sq = dot(e.values(), e.values());
        if sq == 0.0 {
            return Err(ZeroShotError::ZeroNorm(format!("embedding for label {label:?}")));
        }
        cosines.push(cosine_parts(dot(img, e.values()), img_sq, sq));
    }
    let logits: Vec<f64> = cosines.iter().map(|c| logit_scale * c).collect();
    let probabilities = softmax(&logits);
    // argmax on cosines: identical ordering to the probabilities, without
    // ties introduced by exp underflow
    let predicted_index = argmax(&cosines);
    Ok(ClassificationResult {
        labels: labels.to_vec(),
        predicted: labels[predicted_index].clone(),
        predicted_index,
        cosines,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    #[test]
    fn default_prompt() {
        let t = builtin_template("default").unwrap();
        assert_eq!(instantiate_prompt(&t, "dog", None).unwrap(), "a photo of a dog");
    }

    #[test]
    fn variable_prompt() {
        let t = builtin_template("variable_word").unwrap();
        assert_eq!(
            instantiate_prompt(&t, "cat", Some("electric")).unwrap(),
            "a photo of the word electric written in a red font over a picture of a cat"
        );
        assert_eq!(
            instantiate_prompt(&t, "cat", None),
            Err(ZeroShotError::MissingWord("variable_word".into()))
        );
    }

    #[test]
    fn no_recursive_expansion() {
        let t = builtin_template("default").unwrap();
        assert_eq!(instantiate_prompt(&t, "{X}", None).unwrap(), "a photo of a {X}");
        let v = builtin_template("variable_word").unwrap();
        assert_eq!(
            instantiate_prompt(&v, "{Y}", Some("{X}")).unwrap(),
            "a photo of the word {X} written in a red font over a picture of a {Y}"
        );
        let braces = PromptTemplate::new("b", "{not} a {X} {", Focus::Default).unwrap();
        assert_eq!(instantiate_prompt(&braces, "dog", None).unwrap(), "{not} a dog {");
        assert!(matches!(
            instantiate_prompt(&t, "dog", Some("cat")),
            Err(ZeroShotError::UnexpectedWord(_))
        ));
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new("a", "no placeholder", Focus::Default).is_err());
        assert!(PromptTemplate::new("a", "{X} {X}", Focus::Default).is_err());
        assert!(PromptTemplate::new("a", "{X} {Y}", Focus::ImageContent).is_err());
        assert!(PromptTemplate::new("a", "{X}", Focus::Variable).is_err());
        assert!(PromptTemplate::new("a", "{X} {Y} {Y}", Focus::Variable).is_err());
        assert!(builtin_templates().iter().all(|t| t.validate().is_ok()));
        assert_eq!(builtin_templates().len(), 8);
        let parsed = parse_templates(r#"[{"id":"t","pattern":"look: {X}","focus":"image_content"}]"#).unwrap();
        assert_eq!(parsed[0].focus, Focus::ImageContent);
        assert!(parse_templates(r#"[{"id":"t","pattern":"look","focus":"default"}]"#).is_err());
    }

    #[test]
    fn one_hot_match() {
        let image = emb(&[0.0, 0.0, 1.0]);
        let ls = [emb(&[1.0, 0.0, 0.0]), emb(&[0.0, 1.0, 0.0]), emb(&[0.0, 0.0, 1.0])];
        let r = classify(&image, &ls, &labels(3), 100.0).unwrap();
        assert_eq!(r.predicted_index, 2);
        assert_eq!(r.predicted, "l2");
        // e^100 / (e^100 + 2)
        let expected = 1.0 / (1.0 + 2.0 * (-100.0f64).exp());
        assert!((r.probabilities[2] - expected).abs() < 1e-15);
        assert!(r.probabilities[2] > 0.99);
    }

    #[test]
    fn identical_labels_tie_to_zero() {
        let image = emb(&[0.3, 0.4]);
        let ls = vec![emb(&[1.0, 1.0]); 4];
        let r = classify(&image, &ls, &labels(4), 100.0).unwrap();
        assert_eq!(r.predicted_index, 0);
        for p in &r.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let scale = 100.0;
        let p = softmax(&[0.0, scale * (2f64.ln() / scale)]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classify_errors() {
        let image = emb(&[1.0, 0.0]);
        assert_eq!(classify(&image, &[], &[], 100.0), Err(ZeroShotError::NoLabels));
        assert!(matches!(
            classify(&image, &[emb(&[1.0, 0.0, 0.0])], &labels(1), 100.0),
            Err(ZeroShotError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            classify(&image, &[emb(&[0.0, 0.0])], &labels(1), 100.0),
            Err(ZeroShotError::ZeroNorm(_))
        ));
        assert!(matches!(
            classify(&emb(&[0.0, 0.0]), &[emb(&[1.0, 0.0])], &labels(1), 100.0),
            Err(ZeroShotError::ZeroNorm(_))
        ));
        assert!(matches!(
            classify(&image, &[emb(&[1.0, 0.0])], &labels(2), 100.0),
            Err(ZeroShotError::LabelCountMismatch { .. })
        ));
        assert!(matches!(
            classify(&image, &[emb(&[1.0, 0.0])], &labels(1), 0.0),
            Err(ZeroShotError::InvalidLogitScale(_))
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (2usize..6, 1usize..8).prop_flat_map(|(dim, n)| {
            (
                proptest::collection::vec(-1.0f64..1.0, dim),
                proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, dim), n),
            )
        })
    }

    proptest! {
        #[test]
        fn probabilities_normalized((img, ls) in arb_case(), scale in 0.01f64..500.0) {
            prop_assume!(img.iter().any(|v| *v != 0.0) && ls.iter().all(|l| l.iter().any(|v| *v != 0.0)));
            let embs: Vec<Embedding> = ls.iter().map(|l| emb(l)).collect();
            let r = classify(&emb(&img), &embs, &labels(ls.len()), scale).unwrap();
            prop_assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn argmax_invariant_to_scales((img, ls) in arb_case(), s1 in 0.01f64..500.0, s2 in 0.01f64..500.0, k in 0.1f64..10.0) {
            prop_assume!(img.iter().any(|v| *v != 0.0) && ls.iter().all(|l| l.iter().any(|v| *v != 0.0)));
            let embs: Vec<Embedding> = ls.iter().map(|l| emb(l)).collect();
            let a = classify(&emb(&img), &embs, &labels(ls.len()), s1).unwrap();
            let b = classify(&emb(&img), &embs, &labels(ls.len()), s2).unwrap();
            prop_assert_eq!(a.predicted_index, b.predicted_index);
            // rescaling the image vector by a power of two leaves cosines bit-identical
            let scaled: Vec<f64> = img.iter().map(|v| v * 4.0).collect();
            let c = classify(&emb(&scaled), &embs, &labels(ls.len()), s1).unwrap();
            prop_assert_eq!(a.predicted_index, c.predicted_index);
            // generic rescaling: the argmax holds unless the top two are within rounding
            let scaled: Vec<f64> = img.iter().map(|v| v * k).collect();
            let d = classify(&emb(&scaled), &embs, &labels(ls.len()), s1).unwrap();
            let mut sorted = a.cosines.clone();
            sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
            if sorted.len() < 2 || sorted[0] - sorted[1] > 1e-12 {
                prop_assert_eq!(a.predicted_index, d.predicted_index);
            }
        }

        #[test]
        fn permutation_equivariance((img, ls) in arb_case(), rot in 0usize..8) {
            prop_assume!(img.iter().any(|v| *v != 0.0) && ls.iter().all(|l| l.iter().any(|v| *v != 0.0)));
            let n = ls.len();
            let names = labels(n);
            let embs: Vec<Embedding> = ls.iter().map(|l| emb(l)).collect();
            let a = classify(&emb(&img), &embs, &names, 100.0).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let p_embs: Vec<Embedding> = perm.iter().map(|&i| embs[i].clone()).collect();
            let p_names: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
            let b = classify(&emb(&img), &p_embs, &p_names, 100.0).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(b.cosines[j], a.cosines[i]);
                prop_assert!((b.probabilities[j] - a.probabilities[i]).abs() < 1e-12);
            }
            let mut sorted = a.cosines.clone();
            sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
            if sorted.len() < 2 || sorted[0] != sorted[1] {
                prop_assert_eq!(&b.predicted, &a.predicted);
            }
        }
    }
}
