//! Out-of-process models over a newline-delimited JSON protocol on the
//! child's stdin/stdout.
//!
//! Requests, one per line:
//!
//! ```text
//! {"op":"info"}
//! {"op":"generate","latents":[[...], ...]}
//! {"op":"extract","images":[[...], ...]}
//! ```
//!
//! Replies are single lines with an `ok` field. Success replies carry
//! `protocol_version`, `latent_dim`, `image_shape`, `feature_dim`,
//! `normalized`, `model_name` (info), `images` (generate) or `features`
//! (extract); failures carry `{"ok":false,"error":"..."}`. Images are
//! flattened row-major. Only one request is ever in flight per connection.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::{
    Extractor, FeatureVector, Generator, ImageTensor, LatentVector, OracleSpec, Pipeline,
};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub latent_dim: usize,
    pub image_shape: Vec<usize>,
    pub feature_dim: usize,
    pub normalized: bool,
    pub model_name: String,
}

impl BridgeSpec {
    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.feature_dim == 0
            || self.image_shape.is_empty()
            || self.image_shape.contains(&0)
        {
            return Err(Error::Protocol(format!(
                "server declared invalid dimensions: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Info,
    Generate { latents: &'a [LatentVector] },
    Extract { images: &'a [ImageTensor] },
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

impl Connection {
    fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            broken: false,
        })
    }

    fn round_trip(&mut self, request: &Request<'_>, timeout: Duration) -> Result<Value> {
        if self.broken {
            return Err(Error::Protocol("connection is no longer usable".into()));
        }
        let result = self.exchange(request, timeout);
        if matches!(result, Err(Error::Timeout(_)) | Err(Error::Protocol(_))) {
            // a late or garbled reply would desynchronize every later request
            self.broken = true;
            let _ = self.child.kill();
        }
        result
    }

    fn exchange(&mut self, request: &Request<'_>, timeout: Duration) -> Result<Value> {
        let mut line =
            serde_json::to_string(request).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("server not accepting requests: {e}")))?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Protocol(format!("reading reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol("server closed the connection".into()))
            }
        };
        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("reply is not JSON ({e}): {reply:.200}")))?;
        match value.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(value),
            Some(false) => Err(Error::Server(
                value
                    .get("error")
                    .map(|e| {
                        e.as_str()
                            .map(str::to_owned)
                            .unwrap_or_else(|| e.to_string())
                    })
                    .unwrap_or_else(|| "unspecified".into()),
            )),
            None => Err(Error::Protocol(format!(
                "reply lacks boolean \"ok\": {reply:.200}"
            ))),
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A generator and extractor hosted by a child process.
///
/// The connection is serialized behind a lock, so the client can be shared
/// across threads (e.g. concurrent restarts) without interleaving requests.
pub struct BridgeClient {
    conn: Mutex<Connection>,
    spec: BridgeSpec,
    timeout: Duration,
}

impl BridgeClient {
    /// Launches `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut conn = Connection::spawn(command)?;
        let spec = handshake_on(&mut conn, timeout)?;
        Ok(Self {
            conn: Mutex::new(conn),
            spec,
            timeout,
        })
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    /// Re-sends the info request and returns the server's current spec.
    pub fn handshake(&self) -> Result<BridgeSpec> {
        handshake_on(&mut self.conn.lock().unwrap(), self.timeout)
    }

    fn call(&self, request: &Request<'_>) -> Result<Value> {
        self.conn.lock().unwrap().round_trip(request, self.timeout)
    }

    pub fn remote_generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        if let Some(z) = latents.iter().find(|z| z.len() != self.spec.latent_dim) {
            return Err(Error::DimensionMismatch {
                expected: self.spec.latent_dim,
                got: z.len(),
            });
        }
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        let reply = self.call(&Request::Generate { latents })?;
        let rows = batch_field(&reply, "images", latents.len(), self.spec.image_len())?;
        Ok(rows.into_iter().map(ImageTensor::new).collect())
    }

    pub fn remote_extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        let len = self.spec.image_len();
        if let Some(x) = images.iter().find(|x| x.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: x.len(),
            });
        }
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let reply = self.call(&Request::Extract { images })?;
        let rows = batch_field(&reply, "features", images.len(), self.spec.feature_dim)?;
        Ok(rows.into_iter().map(FeatureVector::new).collect())
    }
}

fn handshake_on(conn: &mut Connection, timeout: Duration) -> Result<BridgeSpec> {
    let reply = conn.round_trip(&Request::Info, timeout)?;
    let version = match reply.get("protocol_version") {
        None => PROTOCOL_VERSION,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::Protocol(format!("bad protocol_version {v}")))?
            as u32,
    };
    if version != PROTOCOL_VERSION {
        return Err(Error::VersionMismatch {
            expected: PROTOCOL_VERSION,
            got: version,
        });
    }
    let spec: BridgeSpec = serde_json::from_value(reply)
        .map_err(|e| Error::Protocol(format!("malformed info reply: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn batch_field(reply: &Value, field: &str, count: usize, width: usize) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = reply
        .get(field)
        .cloned()
        .ok_or_else(|| Error::Protocol(format!("reply lacks \"{field}\"")))
        .and_then(|v| {
            serde_json::from_value(v).map_err(|e| Error::Protocol(format!("bad \"{field}\": {e}")))
        })?;
    if rows.len() != count {
        return Err(Error::model(
            None,
            format!(
                "server returned {} {field} for a batch of {count}",
                rows.len()
            ),
        ));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::model(
            Some(i),
            format!(
                "server returned {field} of length {} (expected {width})",
                rows[i].len()
            ),
        ));
    }
    Ok(rows)
}

impl Generator for BridgeClient {
    fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    fn image_shape(&self) -> &[usize] {
        &self.spec.image_shape
    }

    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        self.remote_generate(latents)
    }
}

impl Extractor for BridgeClient {
    fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    fn normalized(&self) -> bool {
        self.spec.normalized
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        self.remote_extract(images)
    }
}

/// Serves an in-process oracle over the bridge protocol until `input`
/// closes. Malformed requests get an error reply; the loop keeps going.
pub fn serve_oracle<R: BufRead, W: Write>(
    spec: &OracleSpec,
    input: R,
    mut output: W,
) -> Result<()> {
    let (generator, extractor) = spec.build()?;
    let pipeline = Pipeline::new(&generator, &extractor);
    let name = format!("{:?}-oracle-seed{}", spec.kind, spec.seed).to_lowercase();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match answer(&pipeline, spec, &name, &line) {
            Ok(v) => v,
            Err(e) => serde_json::json!({"ok": false, "error": e.to_string()}),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn answer(pipeline: &Pipeline<'_>, spec: &OracleSpec, name: &str, line: &str) -> Result<Value> {
    #[derive(Deserialize)]
    #[serde(tag = "op", rename_all = "lowercase")]
    enum Incoming {
        Info,
        Generate { latents: Vec<LatentVector> },
        Extract { images: Vec<ImageTensor> },
    }
    let request: Incoming =
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("bad request: {e}")))?;
    Ok(match request {
        Incoming::Info => serde_json::json!({
            "ok": true,
            "protocol_version": PROTOCOL_VERSION,
            "latent_dim": spec.latent_dim,
            "image_shape": [spec.image_dim],
            "feature_dim": spec.feature_dim,
            "normalized": true,
            "model_name": name,
        }),
        Incoming::Generate { latents } => {
            serde_json::json!({"ok": true, "images": pipeline.generate(&latents)?})
        }
        Incoming::Extract { images } => {
            if let Some(x) = images.iter().find(|x| x.len() != spec.image_dim) {
                return Err(Error::DimensionMismatch {
                    expected: spec.image_dim,
                    got: x.len(),
                });
            }
            serde_json::json!({"ok": true, "features": pipeline.extract(&images)?})
        }
    })
}
