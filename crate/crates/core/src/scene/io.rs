//! Scene documents and ASCII PGM label/depth maps.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Observation, Scene};
use crate::mask::{GridDims, Mask, MaskSource};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error(transparent)]
    Scene(#[from] super::SceneError),
}

/// Writes a scene as a pretty-printed JSON document. Floats use shortest
/// round-trip formatting, so reading it back gives bit-identical values.
pub fn write_scene<W: Write>(scene: &Scene, writer: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(writer, scene)?;
    Ok(())
}

pub fn read_scene<R: std::io::Read>(reader: R) -> Result<Scene, IoError> {
    let scene: Scene = serde_json::from_reader(reader)?;
    scene.validate()?;
    Ok(scene)
}

/// Writes a rendered frame (depth, labels, parts, cloud) as JSON.
pub fn write_observation<W: Write>(obs: &Observation, writer: W) -> Result<(), IoError> {
    serde_json::to_writer(writer, obs)?;
    Ok(())
}

pub fn read_observation<R: std::io::Read>(reader: R) -> Result<Observation, IoError> {
    let obs: Observation = serde_json::from_reader(reader)?;
    let n = obs.dims.len();
    if obs.depth.len() != n || obs.labels.len() != n || obs.parts.len() != n || obs.cloud.len() != n
    {
        return Err(IoError::Frame(format!(
            "frame arrays do not match grid {}",
            obs.dims
        )));
    }
    Ok(obs)
}

/// Decoded P2 image. `scale` is the value of a `# scale <f>` header
/// comment, if present.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub dims: GridDims,
    pub maxval: u32,
    pub values: Vec<u32>,
    pub scale: Option<f64>,
}

fn write_p2<W: Write>(
    mut w: W,
    dims: GridDims,
    values: &[u32],
    comment: Option<String>,
) -> Result<(), IoError> {
    let maxval = values.iter().copied().max().unwrap_or(0).max(1);
    if maxval > u16::MAX as u32 {
        return Err(IoError::Pgm(format!("value {maxval} exceeds 65535")));
    }
    writeln!(w, "P2")?;
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{} {}", dims.cols, dims.rows)?;
    writeln!(w, "{maxval}")?;
    for row in values.chunks(dims.cols.max(1)) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Label map: 0 is background, other values are instance ids.
pub fn write_label_pgm<W: Write>(writer: W, dims: GridDims, labels: &[u32]) -> Result<(), IoError> {
    assert_eq!(labels.len(), dims.len());
    write_p2(writer, dims, labels, None)
}

/// Depth map quantized to `round(depth / scale)`, with the scale recorded
/// in a header comment.
pub fn write_depth_pgm<W: Write>(
    writer: W,
    dims: GridDims,
    depth: &[f64],
    scale: f64,
) -> Result<(), IoError> {
    assert_eq!(depth.len(), dims.len());
    assert!(scale > 0.0);
    let values: Vec<u32> = depth
        .iter()
        .map(|d| (d / scale).round().max(0.0) as u32)
        .collect();
    write_p2(writer, dims, &values, Some(format!("scale {scale}")))
}

pub fn read_pgm<R: BufRead>(reader: R) -> Result<Pgm, IoError> {
    let mut tokens = Vec::new();
    let mut scale = None;
    for line in reader.lines() {
        let line = line?;
        let (data, comment) = match line.find('#') {
            Some(at) => (&line[..at], Some(&line[at + 1..])),
            None => (&line[..], None),
        };
        if let Some(c) = comment {
            let mut words = c.split_whitespace();
            if words.next() == Some("scale") {
                let v = words.next().and_then(|s| s.parse::<f64>().ok());
                scale = Some(v.ok_or_else(|| IoError::Pgm(format!("bad scale comment: {c}")))?);
            }
        }
        tokens.extend(data.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    if it.next().as_deref() != Some("P2") {
        return Err(IoError::Pgm("missing P2 magic".into()));
    }
    let mut num = |what: &str| -> Result<u32, IoError> {
        it.next()
            .ok_or_else(|| IoError::Pgm(format!("missing {what}")))?
            .parse::<u32>()
            .map_err(|e| IoError::Pgm(format!("{what}: {e}")))
    };
    let cols = num("width")? as usize;
    let rows = num("height")? as usize;
    let maxval = num("maxval")?;
    let dims = GridDims::new(rows, cols);
    let mut values = Vec::with_capacity(dims.len());
    for _ in 0..dims.len() {
        let v = num("pixel")?;
        if v > maxval {
            return Err(IoError::Pgm(format!("pixel {v} above maxval {maxval}")));
        }
        values.push(v);
    }
    if it.next().is_some() {
        return Err(IoError::Pgm("trailing data".into()));
    }
    Ok(Pgm {
        dims,
        maxval,
        values,
        scale,
    })
}

/// Paints masks into a label map with ids `1..=n` in list order; later
/// masks win on overlap.
pub fn label_map(dims: GridDims, masks: &[Mask]) -> Vec<u32> {
    let mut labels = vec![0u32; dims.len()];
    for (k, m) in masks.iter().enumerate() {
        for &i in m.indices() {
            labels[i as usize] = k as u32 + 1;
        }
    }
    labels
}

/// One mask per distinct non-zero label, in ascending label order.
pub fn masks_from_labels(dims: GridDims, labels: &[u32]) -> Vec<Mask> {
    let mut per: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            per.entry(l).or_default().push(i as u32);
        }
    }
    per.into_values()
        .map(|px| Mask::from_indices(dims, px, MaskSource::TopDown))
        .collect()
}
