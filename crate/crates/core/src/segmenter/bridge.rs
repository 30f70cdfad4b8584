//! Newline-delimited JSON protocol for running a segmenter in another
//! process, with a client implementing [`Segmenter`] and a server loop.
//!
//! Each request is one JSON object per line, tagged by `op`; each gets
//! exactly one response line `{"masks": [...], "grid": [H, W]}` (plus
//! `"error"` on failure). Masks are run-length strings over row-major
//! pixel order, starting with a background run.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Segmenter, SegmenterError};
use crate::mask::{GridDims, Mask, MaskSource, Pixel};
use crate::scene::io::{read_observation, write_observation};
use crate::scene::{FrameHandle, Observation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BridgeRequest {
    SeedAll {
        frame_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    PromptPoint {
        frame_id: String,
        pixel: [usize; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    HighPrecision {
        frame_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    LoadFrame {
        path: String,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeResponse {
    #[serde(default)]
    pub masks: Vec<String>,
    pub grid: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeResponse {
    fn ok(grid: GridDims, masks: &[Mask]) -> Self {
        Self {
            masks: masks.iter().map(Mask::to_rle).collect(),
            grid: [grid.rows, grid.cols],
            error: None,
        }
    }

    fn err(message: impl Into<String>) -> Self {
        Self {
            masks: Vec::new(),
            grid: [0, 0],
            error: Some(message.into()),
        }
    }
}

struct Channel<R, W> {
    reader: R,
    writer: W,
    closed: bool,
}

/// Client side of the protocol over any line reader/writer pair.
///
/// Requests are serialized through a mutex, so one client supports one
/// outstanding request at a time; use several bridges for parallelism.
pub struct BridgeClient<R, W> {
    channel: Mutex<Channel<R, W>>,
    frames: RwLock<HashMap<FrameHandle, (String, GridDims)>>,
    frame_dir: Option<PathBuf>,
}

impl<R: BufRead + Send, W: Write + Send> BridgeClient<R, W> {
    /// `frame_dir` is where [`Segmenter::load_frame`] writes frame files for
    /// the server to read; without it only [`BridgeClient::load_frame_path`]
    /// can register frames.
    pub fn new(reader: R, writer: W, frame_dir: Option<PathBuf>) -> Self {
        Self {
            channel: Mutex::new(Channel {
                reader,
                writer,
                closed: false,
            }),
            frames: RwLock::new(HashMap::new()),
            frame_dir,
        }
    }

    /// Sends one request and waits for its response.
    pub fn request(&self, req: &BridgeRequest) -> Result<BridgeResponse, SegmenterError> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| SegmenterError::Transport("client lock poisoned".into()))?;
        if ch.closed {
            return Err(SegmenterError::Transport("bridge connection closed".into()));
        }
        let line =
            serde_json::to_string(req).map_err(|e| SegmenterError::Protocol(e.to_string()))?;
        let sent = writeln!(ch.writer, "{line}").and_then(|_| ch.writer.flush());
        if let Err(e) = sent {
            ch.closed = true;
            return Err(SegmenterError::Transport(e.to_string()));
        }
        let mut reply = String::new();
        match ch.reader.read_line(&mut reply) {
            Ok(0) => {
                ch.closed = true;
                Err(SegmenterError::Transport(
                    "bridge closed the connection".into(),
                ))
            }
            Ok(_) => {
                let resp: BridgeResponse = serde_json::from_str(reply.trim_end())
                    .map_err(|e| SegmenterError::Protocol(format!("bad response: {e}")))?;
                match &resp.error {
                    Some(msg) if msg.starts_with("stale frame") => {
                        Err(SegmenterError::StaleFrame(msg.clone()))
                    }
                    Some(msg) => Err(SegmenterError::Remote(msg.clone())),
                    None => Ok(resp),
                }
            }
            Err(e) => {
                ch.closed = true;
                Err(SegmenterError::Transport(e.to_string()))
            }
        }
    }

    /// Registers a frame file already on disk under `handle`.
    pub fn load_frame_path(
        &self,
        handle: FrameHandle,
        path: &Path,
    ) -> Result<GridDims, SegmenterError> {
        let frame_id = path.to_string_lossy().into_owned();
        let resp = self.request(&BridgeRequest::LoadFrame {
            path: frame_id.clone(),
        })?;
        let dims = GridDims::new(resp.grid[0], resp.grid[1]);
        self.frames
            .write()
            .expect("frame table poisoned")
            .insert(handle, (frame_id, dims));
        Ok(dims)
    }

    /// Asks the server to exit; the connection is unusable afterwards.
    pub fn shutdown(&self) -> Result<(), SegmenterError> {
        self.request(&BridgeRequest::Shutdown)?;
        if let Ok(mut ch) = self.channel.lock() {
            ch.closed = true;
        }
        Ok(())
    }

    fn frame_id(&self, handle: FrameHandle) -> Result<(String, GridDims), SegmenterError> {
        self.frames
            .read()
            .expect("frame table poisoned")
            .get(&handle)
            .cloned()
            .ok_or_else(|| SegmenterError::StaleFrame(handle.to_string()))
    }

    fn decode(
        &self,
        resp: BridgeResponse,
        dims: GridDims,
        source: MaskSource,
    ) -> Result<Vec<Mask>, SegmenterError> {
        if resp.grid != [dims.rows, dims.cols] {
            return Err(SegmenterError::Protocol(format!(
                "response grid {:?} does not match frame {}",
                resp.grid, dims
            )));
        }
        resp.masks
            .iter()
            .map(|s| {
                Mask::from_rle(dims, s, source).map_err(|e| SegmenterError::Protocol(e.to_string()))
            })
            .collect()
    }
}

impl<R: BufRead + Send, W: Write + Send> Segmenter for BridgeClient<R, W> {
    fn load_frame(&self, obs: &Observation) -> Result<(), SegmenterError> {
        if self
            .frames
            .read()
            .expect("frame table poisoned")
            .contains_key(&obs.handle)
        {
            return Ok(());
        }
        let dir = self
            .frame_dir
            .as_ref()
            .ok_or_else(|| SegmenterError::Protocol("no frame directory configured".into()))?;
        let path = dir.join(format!("{}.json", obs.handle));
        let file = File::create(&path).map_err(|e| SegmenterError::Transport(e.to_string()))?;
        write_observation(obs, BufWriter::new(file))
            .map_err(|e| SegmenterError::Transport(e.to_string()))?;
        self.load_frame_path(obs.handle, &path)?;
        Ok(())
    }

    fn release_frame(&self, frame: FrameHandle) {
        self.frames
            .write()
            .expect("frame table poisoned")
            .remove(&frame);
    }

    fn seed_all(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        let (frame_id, dims) = self.frame_id(frame)?;
        let resp = self.request(&BridgeRequest::SeedAll {
            frame_id,
            seed: Some(seed),
        })?;
        self.decode(resp, dims, MaskSource::BottomUp)
    }

    fn prompt_point(
        &self,
        frame: FrameHandle,
        pixel: Pixel,
        seed: u64,
    ) -> Result<Mask, SegmenterError> {
        let (frame_id, dims) = self.frame_id(frame)?;
        let resp = self.request(&BridgeRequest::PromptPoint {
            frame_id,
            pixel: [pixel.row, pixel.col],
            seed: Some(seed),
        })?;
        let mut masks = self.decode(resp, dims, MaskSource::BottomUp)?;
        if masks.len() != 1 {
            return Err(SegmenterError::Protocol(format!(
                "expected one mask, got {}",
                masks.len()
            )));
        }
        let mask = masks.pop().unwrap();
        if !mask.contains(pixel) {
            return Err(SegmenterError::Protocol(
                "prompt mask misses the prompt pixel".into(),
            ));
        }
        Ok(mask)
    }

    fn high_precision(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        let (frame_id, dims) = self.frame_id(frame)?;
        let resp = self.request(&BridgeRequest::HighPrecision {
            frame_id,
            seed: Some(seed),
        })?;
        self.decode(resp, dims, MaskSource::TopDown)
    }
}

pub type ProcessBridge = BridgeClient<BufReader<ChildStdout>, ChildStdin>;

/// Starts a bridge server as a child process speaking on its stdio.
pub fn spawn_bridge(
    command: &mut Command,
    frame_dir: Option<PathBuf>,
) -> std::io::Result<(ProcessBridge, Child)> {
    let mut child = command
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    Ok((
        BridgeClient::new(BufReader::new(stdout), stdin, frame_dir),
        child,
    ))
}

/// Serves a segmenter over the protocol until `shutdown` or end of input.
///
/// Frames are read from the JSON files named in `load_frame`; the frame id
/// of a loaded frame is its path. Malformed lines get an error response and
/// the loop continues.
pub fn serve<S: Segmenter, R: BufRead, W: Write>(
    segmenter: &S,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    let mut frames: HashMap<String, (FrameHandle, GridDims)> = HashMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, stop) = match serde_json::from_str::<BridgeRequest>(&line) {
            Err(e) => (
                BridgeResponse::err(format!("malformed message: {e}")),
                false,
            ),
            Ok(BridgeRequest::Shutdown) => (BridgeResponse::ok(GridDims::new(0, 0), &[]), true),
            Ok(req) => (handle(segmenter, &mut frames, req), false),
        };
        writeln!(
            writer,
            "{}",
            serde_json::to_string(&resp).expect("response serializes")
        )?;
        writer.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}

fn handle<S: Segmenter>(
    segmenter: &S,
    frames: &mut HashMap<String, (FrameHandle, GridDims)>,
    req: BridgeRequest,
) -> BridgeResponse {
    let lookup =
        |frames: &HashMap<String, (FrameHandle, GridDims)>, id: &str| frames.get(id).copied();
    let result = match req {
        BridgeRequest::LoadFrame { path } => {
            let obs = File::open(&path)
                .map_err(|e| e.to_string())
                .and_then(|f| read_observation(BufReader::new(f)).map_err(|e| e.to_string()));
            match obs {
                Err(e) => Err(format!("cannot load frame {path}: {e}")),
                Ok(obs) => segmenter
                    .load_frame(&obs)
                    .map_err(|e| e.to_string())
                    .map(|_| {
                        frames.insert(path, (obs.handle, obs.dims));
                        (obs.dims, Vec::new())
                    }),
            }
        }
        BridgeRequest::SeedAll { frame_id, seed } => match lookup(frames, &frame_id) {
            None => Err(format!("stale frame: {frame_id}")),
            Some((h, dims)) => segmenter
                .seed_all(h, seed.unwrap_or(0))
                .map(|m| (dims, m))
                .map_err(|e| e.to_string()),
        },
        BridgeRequest::PromptPoint {
            frame_id,
            pixel,
            seed,
        } => match lookup(frames, &frame_id) {
            None => Err(format!("stale frame: {frame_id}")),
            Some((h, dims)) => segmenter
                .prompt_point(h, Pixel::new(pixel[0], pixel[1]), seed.unwrap_or(0))
                .map(|m| (dims, vec![m]))
                .map_err(|e| e.to_string()),
        },
        BridgeRequest::HighPrecision { frame_id, seed } => match lookup(frames, &frame_id) {
            None => Err(format!("stale frame: {frame_id}")),
            Some((h, dims)) => segmenter
                .high_precision(h, seed.unwrap_or(0))
                .map(|m| (dims, m))
                .map_err(|e| e.to_string()),
        },
        BridgeRequest::Shutdown => Ok((GridDims::new(0, 0), Vec::new())),
    };
    match result {
        Ok((dims, masks)) => BridgeResponse::ok(dims, &masks),
        Err(e) => BridgeResponse::err(e),
    }
}
