//! Predictor running in a child process, spoken to over stdio.
//!
//! One JSON object per line in each direction:
//!
//! ```text
//! → {"op":"auto","patch":{"dims":[x,y,z],"origin":[i,j,k],"data":"<b64 f32 LE>"},"prompt":3}
//! → {"op":"interactive","patch":{…},"prompt":[{"position":[i,j,k],"polarity":"pos","context":"zero_shot"}]}
//! ← {"prob":"<b64 f32 LE>"}            or {"error":"message"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Patch;

use super::predictor::Predictor;
use super::prompt::{ClassPrompt, PointPrompt};

pub fn encode_f32(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f32>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::Predictor(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Predictor("payload length is not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WirePatch {
    pub dims: [usize; 3],
    pub origin: [i64; 3],
    pub data: String,
}

#[derive(Debug, Serialize)]
#[serde(tag = "op", content = "prompt", rename_all = "snake_case")]
enum Op<'a> {
    Auto(ClassPrompt),
    Interactive(&'a [PointPrompt]),
}

#[derive(Serialize)]
struct Request<'a> {
    #[serde(flatten)]
    op: Op<'a>,
    patch: WirePatch,
}

#[derive(Deserialize)]
struct Response {
    prob: Option<String>,
    error: Option<String>,
}

struct Proc {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalPredictor {
    command: String,
    proc: Mutex<Proc>,
}

impl ExternalPredictor {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Predictor(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalPredictor {
            command: command.to_string(),
            proc: Mutex::new(Proc { child, stdin, stdout }),
        })
    }

    fn call(&self, patch: &Patch, op: Op<'_>) -> Result<Vec<f32>> {
        let req = Request {
            op,
            patch: WirePatch {
                dims: patch.size.0,
                origin: patch.origin,
                data: encode_f32(&patch.data),
            },
        };
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        let fail = |m: String| Error::Predictor(format!("{}: {m}", self.command));
        let mut p = self.proc.lock().map_err(|_| fail("predictor lock poisoned".into()))?;
        p.stdin
            .write_all(line.as_bytes())
            .and_then(|_| p.stdin.flush())
            .map_err(|e| fail(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = p
            .stdout
            .read_line(&mut reply)
            .map_err(|e| fail(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(fail("process closed its output".into()));
        }
        let resp: Response =
            serde_json::from_str(&reply).map_err(|e| fail(format!("bad response: {e}")))?;
        match (resp.prob, resp.error) {
            (_, Some(e)) => Err(fail(e)),
            (Some(prob), None) => decode_f32(&prob),
            (None, None) => Err(fail("response has neither prob nor error".into())),
        }
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Ok(p) = self.proc.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl Predictor for ExternalPredictor {
    fn name(&self) -> &str {
        "external"
    }

    fn auto(&self, patch: &Patch, prompt: ClassPrompt) -> Result<Vec<f32>> {
        self.call(patch, Op::Auto(prompt))
    }

    fn interactive(&self, patch: &Patch, points: &[PointPrompt]) -> Result<Vec<f32>> {
        self.call(patch, Op::Interactive(points))
    }

    fn concurrent(&self) -> bool {
        false
    }
}
