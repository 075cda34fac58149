use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{Request, Response, WireImage};
use super::{check_batch, Embedding, EmbeddingProvider, ImagePayload, ProviderError, ProviderInfo};

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Client for an encoder process speaking the JSON-lines protocol on its
/// stdin/stdout. One request is in flight at a time; response ids are
/// checked against request ids.
pub struct ExternalProvider {
    command: Vec<String>,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    info: ProviderInfo,
    next_id: u64,
    timeout: Duration,
    batch_size: usize,
}

impl ExternalProvider {
    /// Start `command` and perform the `info` handshake.
    pub fn spawn(command: &[String], timeout: Duration, batch_size: usize) -> Result<Self, ProviderError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ProviderError::InvalidConfig("empty provider command".into()))?;
        if batch_size == 0 {
            return Err(ProviderError::InvalidConfig("batch size must be positive".into()));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| ProviderError::ProtocolViolation("provider stdout unavailable".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut provider = ExternalProvider {
            command: command.to_vec(),
            child,
            stdin,
            lines: rx,
            info: ProviderInfo {
                name: String::new(),
                dim: 0,
                modalities: Default::default(),
            },
            next_id: 0,
            timeout,
            batch_size,
        };
        provider.info = provider.handshake()?;
        Ok(provider)
    }

    fn handshake(&mut self) -> Result<ProviderInfo, ProviderError> {
        let resp = self.round_trip(|id| Request::Info { id })?;
        if let Some(e) = resp.error {
            return Err(ProviderError::ProtocolViolation(format!("info request failed: {e}")));
        }
        match (resp.name, resp.dim, resp.modalities) {
            (Some(name), Some(dim), Some(modalities)) if dim >= 2 => Ok(ProviderInfo { name, dim, modalities }),
            _ => Err(ProviderError::ProtocolViolation("info response lacks name/dim/modalities or dim < 2".into())),
        }
    }

    fn round_trip(&mut self, make: impl FnOnce(u64) -> Request) -> Result<Response, ProviderError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&make(id)).expect("requests always serialize");
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ProviderError::ProtocolViolation("provider already closed".into()))?;
        stdin.write_all(line.as_bytes())?;
        stdin.flush()?;

        let raw = match self.lines.recv_timeout(self.timeout) {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(ProviderError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ProviderError::ProtocolViolation("provider closed its output".into()))
            }
        };
        let resp: Response = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::ProtocolViolation(format!("unparseable response line {raw:?}: {e}")))?;
        if resp.id != id {
            return Err(ProviderError::ProtocolViolation(format!(
                "response id {} does not match request id {id}",
                resp.id
            )));
        }
        Ok(resp)
    }

    fn embed_batch(&mut self, batch: usize, make: impl FnOnce(u64) -> Request, n: usize) -> Result<Vec<Embedding>, ProviderError> {
        let resp = self.round_trip(make)?;
        if let Some(message) = resp.error {
            return Err(ProviderError::Remote { batch, message });
        }
        let embs = resp
            .embeddings
            .ok_or_else(|| ProviderError::ProtocolViolation("response has neither embeddings nor error".into()))?;
        check_batch(&embs, n, self.info.dim)?;
        Ok(embs.into_iter().map(Embedding).collect())
    }

    /// Send `close`, then wait briefly for the process to exit.
    pub fn close(mut self) -> Result<(), ProviderError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), ProviderError> {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = stdin.write_all(b"{\"op\":\"close\"}\n");
            let _ = stdin.flush();
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            if self.child.try_wait()?.is_some() {
                return Ok(());
            }
            if Instant::now() >= deadline {
                self.child.kill()?;
                self.child.wait()?;
                return Ok(());
            }
            thread::sleep(Duration::from_millis(10));
        }
    }
}

impl Drop for ExternalProvider {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn info(&self) -> &ProviderInfo {
        &self.info
    }

    fn fingerprint(&self) -> String {
        format!("external;name={};dim={};cmd={}", self.info.name, self.info.dim, self.command.join(" "))
    }

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::EmptyBatch);
        }
        let mut out = Vec::with_capacity(texts.len());
        for (batch, chunk) in texts.chunks(self.batch_size).enumerate() {
            let texts = chunk.to_vec();
            out.extend(self.embed_batch(batch, |id| Request::EmbedText { id, texts }, chunk.len())?);
        }
        Ok(out)
    }

    fn embed_images(&mut self, payloads: &[ImagePayload]) -> Result<Vec<Embedding>, ProviderError> {
        if payloads.is_empty() {
            return Err(ProviderError::EmptyBatch);
        }
        if let Some(index) = payloads.iter().position(|p| matches!(p, ImagePayload::Meta { .. })) {
            return Err(ProviderError::UnsupportedPayload { index });
        }
        let mut out = Vec::with_capacity(payloads.len());
        for (batch, chunk) in payloads.chunks(self.batch_size).enumerate() {
            let images: Vec<WireImage> = chunk.iter().map(WireImage::from).collect();
            out.extend(self.embed_batch(batch, |id| Request::EmbedImage { id, images }, chunk.len())?);
        }
        Ok(out)
    }
}
