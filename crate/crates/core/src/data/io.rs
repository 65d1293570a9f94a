//! Dataset file formats.
//!
//! CSV: one row per (sample, channel), `sample_id,channel_id,label,v_0,...`,
//! with an optional header row. Raw binary: one JSON header line followed by
//! `N * C * T` little-endian `f32` values in `(N, C, T)` order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Bin,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "bin" | "raw" | "raw-binary" => Ok(DataFormat::Bin),
            other => Err(Error::InvalidConfig(format!(
                "unknown data format {other:?} (csv|bin)"
            ))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::Csv => parse_csv(&bytes),
        DataFormat::Bin => parse_raw(&bytes),
    }
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        DataFormat::Csv => to_csv(data),
        DataFormat::Bin => to_raw(data),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn to_csv(data: &Dataset) -> Vec<u8> {
    let (c, t) = (data.channels(), data.length());
    let mut out = Vec::new();
    let mut header = String::from("sample_id,channel_id,label");
    for i in 0..t {
        header.push_str(&format!(",v_{i}"));
    }
    writeln!(out, "{header}").unwrap();
    for n in 0..data.len() {
        for (ch, row) in data.sample(n).chunks(t).enumerate().take(c) {
            write!(out, "{n},{ch},{}", data.labels()[n]).unwrap();
            for v in row {
                // shortest representation that round-trips
                write!(out, ",{v:?}").unwrap();
            }
            out.push(b'\n');
        }
    }
    out
}

pub fn parse_csv(bytes: &[u8]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<(usize, Vec<f32>)>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut length: Option<(usize, usize)> = None;
    let mut max_channel = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        if i == 0 && record.get(1).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if record.len() < 4 {
            return Err(Error::Parse(format!(
                "row {line}: expected sample_id,channel_id,label and at least one value"
            )));
        }
        let sample = record[0].to_string();
        let channel: usize = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {line}: bad channel_id {:?}", &record[1])))?;
        let label: usize = record[2]
            .parse()
            .map_err(|_| Error::Parse(format!("row {line}: bad label {:?}", &record[2])))?;
        let values = record
            .iter()
            .skip(3)
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("row {line}: bad value {f:?} at v_{j}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        match length {
            None => length = Some((values.len(), line)),
            Some((t, first)) if t != values.len() => {
                return Err(Error::Parse(format!(
                    "row {line}: {} values but row {first} has {t}",
                    values.len()
                )))
            }
            _ => {}
        }
        let slot = *index.entry(sample.clone()).or_insert_with(|| {
            order.push(sample.clone());
            rows.push(Vec::new());
            labels.push(label);
            rows.len() - 1
        });
        if labels[slot] != label {
            return Err(Error::Parse(format!(
                "row {line}: sample {sample} has label {label}, earlier rows say {}",
                labels[slot]
            )));
        }
        if rows[slot].iter().any(|(c, _)| *c == channel) {
            return Err(Error::Parse(format!(
                "row {line}: duplicate channel {channel} for sample {sample}"
            )));
        }
        max_channel = max_channel.max(channel);
        rows[slot].push((channel, values));
    }
    let (t, _) = length.ok_or_else(|| Error::Empty("csv contains no data rows".into()))?;
    let c = max_channel + 1;
    let mut data = Vec::with_capacity(rows.len() * c * t);
    for (slot, mut chans) in rows.into_iter().enumerate() {
        if chans.len() != c {
            return Err(Error::Parse(format!(
                "sample {} has {} channels, expected {c}",
                order[slot],
                chans.len()
            )));
        }
        chans.sort_by_key(|(ch, _)| *ch);
        for (_, v) in chans {
            data.extend(v);
        }
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let n = labels.len();
    Dataset::new(Tensor::new(&[n, c, t], data)?, labels, classes)
}

#[derive(Serialize, Deserialize)]
struct RawHeader {
    format: String,
    version: u32,
    n: usize,
    c: usize,
    t: usize,
    classes: usize,
    labels: Vec<usize>,
}

const RAW_FORMAT: &str = "prism-raw";
const RAW_VERSION: u32 = 1;

pub fn to_raw(data: &Dataset) -> Vec<u8> {
    let header = RawHeader {
        format: RAW_FORMAT.into(),
        version: RAW_VERSION,
        n: data.len(),
        c: data.channels(),
        t: data.length(),
        classes: data.num_classes(),
        labels: data.labels().to_vec(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serialises");
    out.push(b'\n');
    for v in data.samples().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Split `bytes` at the first newline and parse the prefix as JSON.
pub(crate) fn split_header<'a, T: serde::de::DeserializeOwned>(
    bytes: &'a [u8],
    what: &str,
) -> Result<(T, &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse(format!("{what}: missing header line")))?;
    let header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Parse(format!("{what}: malformed header: {e}")))?;
    Ok((header, &bytes[nl + 1..]))
}

pub fn parse_raw(bytes: &[u8]) -> Result<Dataset> {
    let (h, payload): (RawHeader, _) = split_header(bytes, "raw dataset")?;
    if h.format != RAW_FORMAT || h.version != RAW_VERSION {
        return Err(Error::Parse(format!(
            "raw dataset: unsupported format {:?} version {}",
            h.format, h.version
        )));
    }
    if h.labels.len() != h.n {
        return Err(Error::Parse(format!(
            "raw dataset: header declares {} samples but lists {} labels",
            h.n,
            h.labels.len()
        )));
    }
    if let Some((i, y)) = h.labels.iter().enumerate().find(|(_, &y)| y >= h.classes) {
        return Err(Error::Parse(format!(
            "raw dataset: label {y} of sample {i} out of range for {} classes",
            h.classes
        )));
    }
    let expected = h.n * h.c * h.t * 4;
    if payload.len() != expected {
        return Err(Error::Parse(format!(
            "raw dataset: payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse(format!(
            "raw dataset: non-finite value at byte offset {}",
            i * 4
        )));
    }
    Dataset::new(Tensor::new(&[h.n, h.c, h.t], data)?, h.labels, h.classes)
}
