//! On-disk record formats: binary PGM masks, binary PPM ego images, the
//! little-endian graph record, and the key-value baseline file. All writes
//! are atomic (temp file + rename).

use crate::{CliError, Result};
use mmresgnn_core::baseline::BaselineModel;
use mmresgnn_core::features::{LinkFeatures, NUM_FEATURES};
use mmresgnn_core::graph::{CorrelationEdge, ESPLGraph, GraphNode, TransmissionEdge};
use mmresgnn_core::grid::Grid;
use mmresgnn_core::render::EgoImage;
use std::io::Write;
use std::path::Path;

pub const GRAPH_MAGIC: u32 = 0x4553_5047;
pub const GRAPH_VERSION: u32 = 1;

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(CliError::io(tmp.display().to_string()))?;
        f.write_all(bytes)
            .map_err(CliError::io(tmp.display().to_string()))?;
        f.flush().map_err(CliError::io(tmp.display().to_string()))?;
    }
    std::fs::rename(&tmp, path).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PGM (P5) binary masks, 0/255
// ---------------------------------------------------------------------------

pub fn encode_pgm(mask: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(bytes: &[u8], file: &str) -> Result<Grid<u8>> {
    let (w, h, data) = parse_netpbm(bytes, b"P5", 1, file)?;
    Ok(Grid::from_vec(
        w,
        h,
        data.iter().map(|&v| u8::from(v >= 128)).collect(),
    ))
}

// ---------------------------------------------------------------------------
// PPM (P6) binary ego images; channel value * 255 rounded half-up
// ---------------------------------------------------------------------------

pub fn encode_ppm(image: &EgoImage) -> Vec<u8> {
    let s = image.size;
    let mut out = format!("P6\n{s} {s}\n255\n").into_bytes();
    for row in 0..s {
        for col in 0..s {
            for c in 0..3 {
                let v = (image.get(c, row, col) * 255.0 + 0.5).floor().clamp(0.0, 255.0);
                out.push(v as u8);
            }
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8], window: f64, file: &str) -> Result<EgoImage> {
    let (w, h, data) = parse_netpbm(bytes, b"P6", 3, file)?;
    if w != h {
        return Err(CliError::Integrity {
            file: file.to_string(),
            reason: format!("ego image must be square, got {w}x{h}"),
        });
    }
    let mut image = EgoImage::zeros(w, window);
    for row in 0..h {
        for col in 0..w {
            for c in 0..3 {
                image.pixels[c * w * w + row * w + col] =
                    f64::from(data[(row * w + col) * 3 + c]) / 255.0;
            }
        }
    }
    Ok(image)
}

fn parse_netpbm(bytes: &[u8], magic: &[u8], channels: usize, file: &str) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |reason: String| CliError::Integrity {
        file: file.to_string(),
        reason,
    };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(bad("bad netpbm magic".into()));
    }
    // Header: magic, width, height, maxval, single whitespace, then raster.
    let mut pos = 2;
    let mut fields = Vec::new();
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated netpbm header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header".into()))?;
        fields.push(
            text.parse::<usize>()
                .map_err(|_| bad(format!("bad header field {text}")))?,
        );
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    let expected = w * h * channels;
    let data = bytes[pos..].to_vec();
    if data.len() != expected {
        return Err(bad(format!(
            "raster length {} does not match {expected}",
            data.len()
        )));
    }
    Ok((w, h, data))
}

// ---------------------------------------------------------------------------
// Graph record (little-endian)
// ---------------------------------------------------------------------------

struct BinWriter {
    buf: Vec<u8>,
}

impl BinWriter {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct BinReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: String,
}

impl<'a> BinReader<'a> {
    fn u32(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(self.truncated());
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }
    fn f64(&mut self) -> Result<f64> {
        if self.pos + 8 > self.bytes.len() {
            return Err(self.truncated());
        }
        let v = f64::from_le_bytes(self.bytes[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        Ok(v)
    }
    fn truncated(&self) -> CliError {
        CliError::Integrity {
            file: self.file.clone(),
            reason: "truncated graph record".into(),
        }
    }
}

pub fn encode_graph(graph: &ESPLGraph) -> Vec<u8> {
    let has_baseline = graph
        .transmission_edges
        .first()
        .map(|e| e.pl_base.is_some())
        .unwrap_or(false);
    let mut w = BinWriter { buf: Vec::new() };
    w.u32(GRAPH_MAGIC);
    w.u32(GRAPH_VERSION);
    w.u32(graph.snapshot_id);
    w.u32(graph.tx_vehicle_id);
    w.u32(graph.nodes.len() as u32);
    w.u32(graph.transmission_edges.len() as u32);
    w.u32(graph.correlation_edges.len() as u32);
    w.u32(u32::from(has_baseline));
    for n in &graph.nodes {
        w.f64(n.position[0]);
        w.f64(n.position[1]);
        w.f64(n.position[2]);
        w.f64(if n.is_tx { 1.0 } else { 0.0 });
    }
    for e in &graph.transmission_edges {
        w.u32(e.tx_index as u32);
        w.u32(e.rx_index as u32);
    }
    for e in &graph.correlation_edges {
        w.u32(e.src as u32);
        w.u32(e.dst as u32);
    }
    for e in &graph.transmission_edges {
        for &v in &e.features.values {
            w.f64(v);
        }
        w.f64(e.pl_raw);
        if has_baseline {
            w.f64(e.pl_base.unwrap());
            w.f64(e.y_target.unwrap());
        }
    }
    for e in &graph.correlation_edges {
        for &v in &e.features.values {
            w.f64(v);
        }
    }
    w.buf
}

pub fn decode_graph(bytes: &[u8], file: &str) -> Result<ESPLGraph> {
    let mut r = BinReader {
        bytes,
        pos: 0,
        file: file.to_string(),
    };
    let bad = |reason: String| CliError::Integrity {
        file: file.to_string(),
        reason,
    };
    if r.u32()? != GRAPH_MAGIC {
        return Err(bad("bad graph magic".into()));
    }
    let version = r.u32()?;
    if version != GRAPH_VERSION {
        return Err(bad(format!("unsupported graph version {version}")));
    }
    let snapshot_id = r.u32()?;
    let tx_vehicle_id = r.u32()?;
    let n_nodes = r.u32()? as usize;
    let n_trans = r.u32()? as usize;
    let n_corr = r.u32()? as usize;
    let flags = r.u32()?;
    let has_baseline = flags & 1 != 0;
    if n_nodes == 0 || n_trans + 1 != n_nodes {
        return Err(bad(format!(
            "inconsistent counts: {n_nodes} nodes, {n_trans} transmission edges"
        )));
    }

    let expected_len = 32
        + n_nodes * 32
        + (n_trans + n_corr) * 8
        + n_trans * 8 * (NUM_FEATURES + 1 + if has_baseline { 2 } else { 0 })
        + n_corr * 8 * NUM_FEATURES;
    if bytes.len() != expected_len {
        return Err(bad(format!(
            "record length {} does not match expected {expected_len}",
            bytes.len()
        )));
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let x = r.f64()?;
        let y = r.f64()?;
        let z = r.f64()?;
        let flag = r.f64()?;
        nodes.push(GraphNode {
            position: [x, y, z],
            is_tx: flag == 1.0,
        });
    }
    let mut trans_pairs = Vec::with_capacity(n_trans);
    for _ in 0..n_trans {
        trans_pairs.push((r.u32()? as usize, r.u32()? as usize));
    }
    let mut corr_pairs = Vec::with_capacity(n_corr);
    for _ in 0..n_corr {
        corr_pairs.push((r.u32()? as usize, r.u32()? as usize));
    }
    let mut transmission_edges = Vec::with_capacity(n_trans);
    for (tx_index, rx_index) in trans_pairs {
        let mut values = [0.0; NUM_FEATURES];
        for v in &mut values {
            *v = r.f64()?;
        }
        let pl_raw = r.f64()?;
        let (pl_base, y_target) = if has_baseline {
            (Some(r.f64()?), Some(r.f64()?))
        } else {
            (None, None)
        };
        transmission_edges.push(TransmissionEdge {
            tx_index,
            rx_index,
            features: LinkFeatures { values },
            pl_raw,
            pl_base,
            y_target,
        });
    }
    let mut correlation_edges = Vec::with_capacity(n_corr);
    for (src, dst) in corr_pairs {
        let mut values = [0.0; NUM_FEATURES];
        for v in &mut values {
            *v = r.f64()?;
        }
        correlation_edges.push(CorrelationEdge {
            src,
            dst,
            features: LinkFeatures { values },
        });
    }

    let graph = ESPLGraph {
        nodes,
        transmission_edges,
        correlation_edges,
        snapshot_id,
        tx_vehicle_id,
    };
    graph
        .check_invariants()
        .map_err(|e| bad(format!("invalid graph structure: {e}")))?;
    Ok(graph)
}

// ---------------------------------------------------------------------------
// Baseline key-value text record
// ---------------------------------------------------------------------------

pub fn encode_baseline(model: &BaselineModel) -> String {
    let mut s = String::from("format_version 1\n");
    for (i, w) in model.w.iter().enumerate() {
        s.push_str(&format!("w{i} {}\n", hexf(*w)));
    }
    s.push_str(&format!("mu_res {}\n", hexf(model.mu_res)));
    s.push_str(&format!("sigma_res {}\n", hexf(model.sigma_res)));
    s.push_str(&format!("fit_rmse {}\n", hexf(model.fit_rmse)));
    s.push_str(&format!("n_fit {}\n", model.n_fit));
    s.push_str(&format!("id {}\n", model.id()));
    s
}

/// f64 as bit-exact hex plus a human-readable decimal comment.
fn hexf(v: f64) -> String {
    format!("0x{:016x} # {v}", v.to_bits())
}

fn parse_hexf(text: &str, file: &str) -> Result<f64> {
    let raw = text.split('#').next().unwrap_or("").trim();
    let hex = raw.strip_prefix("0x").ok_or_else(|| CliError::Integrity {
        file: file.to_string(),
        reason: format!("bad float field: {text}"),
    })?;
    u64::from_str_radix(hex, 16)
        .map(f64::from_bits)
        .map_err(|_| CliError::Integrity {
            file: file.to_string(),
            reason: format!("bad float field: {text}"),
        })
}

pub fn decode_baseline(text: &str, file: &str) -> Result<BaselineModel> {
    let bad = |reason: String| CliError::Integrity {
        file: file.to_string(),
        reason,
    };
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(format!("bad line: {line}")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| bad(format!("missing field {key}")))
    };
    if get("format_version")? != "1" {
        return Err(bad("unsupported baseline format version".into()));
    }
    let mut w = [0.0; 5];
    for (i, slot) in w.iter_mut().enumerate() {
        *slot = parse_hexf(&get(&format!("w{i}"))?, file)?;
    }
    let model = BaselineModel {
        w,
        mu_res: parse_hexf(&get("mu_res")?, file)?,
        sigma_res: parse_hexf(&get("sigma_res")?, file)?,
        fit_rmse: parse_hexf(&get("fit_rmse")?, file)?,
        n_fit: get("n_fit")?
            .parse()
            .map_err(|_| bad("bad n_fit".into()))?,
    };
    let stored_id = get("id")?;
    if stored_id != model.id() {
        return Err(bad(format!(
            "baseline id mismatch: stored {stored_id}, recomputed {}",
            model.id()
        )));
    }
    Ok(model)
}
