//! JSON-lines provider protocol.
//!
//! ```text
//! {"op":"info","id":0}                         -> {"id":0,"name":"...","dim":512,"modalities":["image","text"]}
//! {"op":"embed_text","id":N,"texts":[...]}     -> {"id":N,"embeddings":[[...],...]}
//! {"op":"embed_image","id":N,"images":[{"b64":"..."} | {"meta":{"content":"dog","word":"cat"}}]}
//!                                              -> {"id":N,"embeddings":[[...],...]}
//! failure                                      -> {"id":N,"error":"message"}
//! {"op":"close"}                               then EOF
//! ```

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, ImagePayload, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Info { id: u64 },
    EmbedText { id: u64, texts: Vec<String> },
    EmbedImage { id: u64, images: Vec<WireImage> },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireImage {
    B64 { b64: String },
    Meta { meta: WireMeta },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMeta {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
}

impl From<&ImagePayload> for WireImage {
    fn from(p: &ImagePayload) -> Self {
        match p {
            ImagePayload::Encoded(bytes) => WireImage::B64 {
                b64: base64::engine::general_purpose::STANDARD.encode(bytes),
            },
            ImagePayload::Meta { content, word } => WireImage::Meta {
                meta: WireMeta {
                    content: content.clone(),
                    word: word.clone(),
                },
            },
        }
    }
}

impl WireImage {
    pub fn into_payload(self) -> Result<ImagePayload, base64::DecodeError> {
        Ok(match self {
            WireImage::B64 { b64 } => ImagePayload::Encoded(base64::engine::general_purpose::STANDARD.decode(b64)?),
            WireImage::Meta { meta } => ImagePayload::Meta {
                content: meta.content,
                word: meta.word,
            },
        })
    }
}

/// Any response line. Which fields are present depends on the request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<BTreeSet<Modality>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn error(id: u64, message: impl Into<String>) -> Self {
        Response {
            id,
            error: Some(message.into()),
            ..Response::default()
        }
    }
}

/// Answer protocol requests from `input` until `close` or EOF. One response
/// line per request, in request order.
pub fn serve<P, R, W>(provider: &mut P, input: R, mut output: W) -> std::io::Result<()>
where
    P: EmbeddingProvider + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Close) => break,
            Ok(Request::Info { id }) => {
                let info = provider.info();
                Response {
                    id,
                    name: Some(info.name.clone()),
                    dim: Some(info.dim),
                    modalities: Some(info.modalities.clone()),
                    ..Response::default()
                }
            }
            Ok(Request::EmbedText { id, texts }) => match provider.embed_texts(&texts) {
                Ok(embs) => Response {
                    id,
                    embeddings: Some(embs.into_iter().map(Into::into).collect()),
                    ..Response::default()
                },
                Err(e) => Response::error(id, e.to_string()),
            },
            Ok(Request::EmbedImage { id, images }) => {
                match images.into_iter().map(WireImage::into_payload).collect::<Result<Vec<_>, _>>() {
                    Err(e) => Response::error(id, format!("bad base64 payload: {e}")),
                    Ok(payloads) => match provider.embed_images(&payloads) {
                        Ok(embs) => Response {
                            id,
                            embeddings: Some(embs.into_iter().map(Into::into).collect()),
                            ..Response::default()
                        },
                        Err(e) => Response::error(id, e.to_string()),
                    },
                }
            }
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64))
                    .unwrap_or(0);
                Response::error(id, format!("malformed request: {e}"))
            }
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{SyntheticProvider, SyntheticProviderConfig};

    #[test]
    fn request_wire_format() {
        let r = Request::EmbedText {
            id: 3,
            texts: vec!["a".into()],
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"op":"embed_text","id":3,"texts":["a"]}"#);
        assert_eq!(serde_json::to_string(&Request::Close).unwrap(), r#"{"op":"close"}"#);
        let img: Request =
            serde_json::from_str(r#"{"op":"embed_image","id":1,"images":[{"meta":{"content":"dog","word":"cat"}},{"b64":"AAE="}]}"#)
                .unwrap();
        let Request::EmbedImage { images, .. } = img else { panic!() };
        assert_eq!(
            images[0].clone().into_payload().unwrap(),
            ImagePayload::Meta {
                content: "dog".into(),
                word: Some("cat".into())
            }
        );
        assert_eq!(images[1].clone().into_payload().unwrap(), ImagePayload::Encoded(vec![0, 1]));
    }

    #[test]
    fn serve_answers_in_order() {
        let mut p = SyntheticProvider::new(SyntheticProviderConfig::new(vec!["dog".into(), "cat".into()], 1, 0.5)).unwrap();
        let input = concat!(
            "{\"op\":\"info\",\"id\":0}\n",
            "{\"op\":\"embed_text\",\"id\":1,\"texts\":[\"a photo of a dog\",\"a cat\"]}\n",
            "{\"op\":\"embed_image\",\"id\":2,\"images\":[{\"b64\":\"AAE=\"}]}\n",
            "garbage\n",
            "{\"op\":\"close\"}\n",
            "{\"op\":\"info\",\"id\":9}\n",
        );
        let mut out = Vec::new();
        serve(&mut p, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].dim, Some(64));
        assert_eq!(lines[1].id, 1);
        assert_eq!(lines[1].embeddings.as_ref().unwrap().len(), 2);
        assert!(lines[2].error.is_some());
        assert!(lines[3].error.as_deref().unwrap().starts_with("malformed"));
    }
}
