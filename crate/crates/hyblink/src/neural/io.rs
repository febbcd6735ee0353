//! Binary model container and CSV exports.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "HYBMDL01"
//! version  u32      1
//! kind     u8       0 = float model, 1 = quantized model
//! flags    u8       bit0 autoencoder trained, bit1 classifier trained
//! count    u32      tensor count
//! tensor   repeated:
//!   name_len u8, name bytes (ASCII)
//!   dtype    u8   0 = f32, 1 = i8
//!   rows u32, cols u32
//!   i8 only: scale f64, zero_point i32
//!   data  rows×cols elements (f32 or i8)
//! ```
//!
//! Weights are stored as f32; in-memory arithmetic is f64, so save→load→save
//! is byte-stable while load of a freshly trained model truncates to f32
//! precision once.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthgen::Dataset;

use super::layers::{Dense, DenseStack, LayerSpec};
use super::quant::{QuantizedDense, QuantizedModel, QuantizedTensor};
use super::train::EpochStats;
use super::{
    decoder_specs, encoder_specs, head_specs, Model, Standardizer, FEATURE_DIM, HEAD_DROPOUT,
};

const MAGIC: &[u8; 8] = b"HYBMDL01";
const VERSION: u32 = 1;

const KIND_FLOAT: u8 = 0;
const KIND_QUANTIZED: u8 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_I8: u8 = 1;

const FLAG_AE_TRAINED: u8 = 0b01;
const FLAG_HEAD_TRAINED: u8 = 0b10;

enum TensorData {
    F32(Vec<f32>),
    I8 { scale: f64, zero_point: i32, data: Vec<i8> },
}

struct TensorRecord {
    name: String,
    rows: u32,
    cols: u32,
    data: TensorData,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

// ---------------------------------------------------------------------------
// encoding
// ---------------------------------------------------------------------------

fn encode_container(kind: u8, flags: u8, tensors: &[TensorRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(flags);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.push(t.name.len() as u8);
        out.extend_from_slice(t.name.as_bytes());
        let dtype = match &t.data {
            TensorData::F32(_) => DTYPE_F32,
            TensorData::I8 { .. } => DTYPE_I8,
        };
        out.push(dtype);
        out.extend_from_slice(&t.rows.to_le_bytes());
        out.extend_from_slice(&t.cols.to_le_bytes());
        match &t.data {
            TensorData::F32(values) => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            TensorData::I8 { scale, zero_point, data } => {
                out.extend_from_slice(&scale.to_le_bytes());
                out.extend_from_slice(&zero_point.to_le_bytes());
                out.extend(data.iter().map(|v| *v as u8));
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(format_err("truncated container"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_container(bytes: &[u8]) -> Result<(u8, u8, Vec<TensorRecord>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported container version {version}")));
    }
    let kind = r.u8()?;
    if kind != KIND_FLOAT && kind != KIND_QUANTIZED {
        return Err(format_err(format!("unknown model kind {kind}")));
    }
    let flags = r.u8()?;
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u8()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| format_err("tensor name is not valid UTF-8"))?;
        let dtype = r.u8()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let len = rows as usize * cols as usize;
        let data = match dtype {
            DTYPE_F32 => {
                let raw = r.take(len * 4)?;
                TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            DTYPE_I8 => {
                let scale = r.f64()?;
                let zero_point = r.i32()?;
                let raw = r.take(len)?;
                TensorData::I8 {
                    scale,
                    zero_point,
                    data: raw.iter().map(|b| *b as i8).collect(),
                }
            }
            other => return Err(format_err(format!("unknown tensor dtype {other}"))),
        };
        tensors.push(TensorRecord { name, rows, cols, data });
    }
    if r.pos != bytes.len() {
        return Err(format_err("trailing bytes after tensor table"));
    }
    Ok((kind, flags, tensors))
}

// ---------------------------------------------------------------------------
// model <-> records
// ---------------------------------------------------------------------------

fn f32_record(name: String, rows: usize, cols: usize, values: &[f64]) -> TensorRecord {
    TensorRecord {
        name,
        rows: rows as u32,
        cols: cols as u32,
        data: TensorData::F32(values.iter().map(|v| *v as f32).collect()),
    }
}

fn standardizer_records(s: &Standardizer) -> [TensorRecord; 2] {
    [
        f32_record("std.mean".into(), 1, FEATURE_DIM, &s.mean),
        f32_record("std.std".into(), 1, FEATURE_DIM, &s.std),
    ]
}

fn stack_records(prefix: &str, stack: &DenseStack, out: &mut Vec<TensorRecord>) {
    for (i, layer) in stack.layers.iter().enumerate() {
        out.push(f32_record(
            format!("{prefix}.{i}.w"),
            layer.spec.output_dim,
            layer.spec.input_dim,
            &layer.weights,
        ));
        out.push(f32_record(format!("{prefix}.{i}.b"), 1, layer.spec.output_dim, &layer.biases));
    }
}

/// Serializes the model into the binary container.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let standardizer = model
        .standardizer
        .as_ref()
        .ok_or(Error::Untrained("cannot persist a model without a standardizer"))?;
    let mut tensors: Vec<TensorRecord> = standardizer_records(standardizer).into();
    stack_records("enc", &model.encoder, &mut tensors);
    stack_records("dec", &model.decoder, &mut tensors);
    stack_records("head", &model.head, &mut tensors);

    let mut flags = 0u8;
    if model.ae_trained {
        flags |= FLAG_AE_TRAINED;
    }
    if model.head_trained {
        flags |= FLAG_HEAD_TRAINED;
    }
    fs::write(path, encode_container(KIND_FLOAT, flags, &tensors))?;
    Ok(())
}

struct RecordMap {
    records: Vec<TensorRecord>,
}

impl RecordMap {
    fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<TensorRecord> {
        let idx = self
            .records
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| format_err(format!("missing tensor {name}")))?;
        let record = self.records.swap_remove(idx);
        if record.rows as usize != rows || record.cols as usize != cols {
            return Err(format_err(format!(
                "tensor {name} has shape {}x{}, expected {rows}x{cols}",
                record.rows, record.cols
            )));
        }
        Ok(record)
    }

    fn take_f32(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        match self.take(name, rows, cols)?.data {
            TensorData::F32(values) => Ok(values.iter().map(|v| f64::from(*v)).collect()),
            TensorData::I8 { .. } => Err(format_err(format!("tensor {name} must be f32"))),
        }
    }

    fn take_i8(&mut self, name: &str, rows: usize, cols: usize) -> Result<QuantizedTensor> {
        match self.take(name, rows, cols)?.data {
            TensorData::I8 { scale, zero_point, data } => Ok(QuantizedTensor {
                rows,
                cols,
                scale,
                zero_point,
                data,
            }),
            TensorData::F32(_) => Err(format_err(format!("tensor {name} must be i8"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(extra) = self.records.first() {
            return Err(format_err(format!("unexpected tensor {}", extra.name)));
        }
        Ok(())
    }
}

fn standardizer_from(map: &mut RecordMap) -> Result<Standardizer> {
    let mean_v = map.take_f32("std.mean", 1, FEATURE_DIM)?;
    let std_v = map.take_f32("std.std", 1, FEATURE_DIM)?;
    let mut mean = [0.0; FEATURE_DIM];
    let mut std = [0.0; FEATURE_DIM];
    mean.copy_from_slice(&mean_v);
    std.copy_from_slice(&std_v);
    if std.iter().any(|s| !(*s > 0.0)) {
        return Err(format_err("standardizer deviations must be positive"));
    }
    Ok(Standardizer { mean, std })
}

fn stack_from(map: &mut RecordMap, prefix: &str, specs: &[LayerSpec]) -> Result<DenseStack> {
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let weights = map.take_f32(&format!("{prefix}.{i}.w"), spec.output_dim, spec.input_dim)?;
        let biases = map.take_f32(&format!("{prefix}.{i}.b"), 1, spec.output_dim)?;
        layers.push(Dense { spec: *spec, weights, biases });
    }
    Ok(DenseStack { layers })
}

/// Loads a float model container.
pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    let (kind, flags, records) = decode_container(&bytes)?;
    if kind != KIND_FLOAT {
        return Err(format_err("container holds a quantized model; use load_quantized_model"));
    }
    model_from_records(flags, records)
}

fn model_from_records(flags: u8, records: Vec<TensorRecord>) -> Result<Model> {
    let mut map = RecordMap { records };
    let standardizer = standardizer_from(&mut map)?;
    let encoder = stack_from(&mut map, "enc", &encoder_specs())?;
    let decoder = stack_from(&mut map, "dec", &decoder_specs())?;
    let head = stack_from(&mut map, "head", &head_specs())?;
    map.finish()?;
    Ok(Model {
        standardizer: Some(standardizer),
        encoder,
        decoder,
        head,
        head_dropout: HEAD_DROPOUT,
        ae_trained: flags & FLAG_AE_TRAINED != 0,
        head_trained: flags & FLAG_HEAD_TRAINED != 0,
    })
}

fn quantized_stack_records(prefix: &str, layers: &[QuantizedDense], out: &mut Vec<TensorRecord>) {
    for (i, layer) in layers.iter().enumerate() {
        for (suffix, tensor) in [("w", &layer.weights), ("b", &layer.biases)] {
            out.push(TensorRecord {
                name: format!("{prefix}.{i}.{suffix}"),
                rows: tensor.rows as u32,
                cols: tensor.cols as u32,
                data: TensorData::I8 {
                    scale: tensor.scale,
                    zero_point: tensor.zero_point,
                    data: tensor.data.clone(),
                },
            });
        }
    }
}

/// Serializes a quantized model into the binary container.
pub fn save_quantized_model(qm: &QuantizedModel, path: &Path) -> Result<()> {
    let mut tensors: Vec<TensorRecord> = standardizer_records(&qm.standardizer).into();
    quantized_stack_records("enc", &qm.encoder, &mut tensors);
    quantized_stack_records("dec", &qm.decoder, &mut tensors);
    quantized_stack_records("head", &qm.head, &mut tensors);
    let flags = FLAG_AE_TRAINED | FLAG_HEAD_TRAINED;
    fs::write(path, encode_container(KIND_QUANTIZED, flags, &tensors))?;
    Ok(())
}

fn quantized_stack_from(
    map: &mut RecordMap,
    prefix: &str,
    specs: &[LayerSpec],
) -> Result<Vec<QuantizedDense>> {
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let weights = map.take_i8(&format!("{prefix}.{i}.w"), spec.output_dim, spec.input_dim)?;
        let biases = map.take_i8(&format!("{prefix}.{i}.b"), 1, spec.output_dim)?;
        layers.push(QuantizedDense {
            input_dim: spec.input_dim,
            output_dim: spec.output_dim,
            activation: spec.activation,
            weights,
            biases,
        });
    }
    Ok(layers)
}

/// Loads a quantized model container.
pub fn load_quantized_model(path: &Path) -> Result<QuantizedModel> {
    let bytes = fs::read(path)?;
    let (kind, _flags, records) = decode_container(&bytes)?;
    if kind != KIND_QUANTIZED {
        return Err(format_err("container holds a float model; use load_model"));
    }
    quantized_from_records(records)
}

fn quantized_from_records(records: Vec<TensorRecord>) -> Result<QuantizedModel> {
    let mut map = RecordMap { records };
    let standardizer = standardizer_from(&mut map)?;
    let encoder = quantized_stack_from(&mut map, "enc", &encoder_specs())?;
    let decoder = quantized_stack_from(&mut map, "dec", &decoder_specs())?;
    let head = quantized_stack_from(&mut map, "head", &head_specs())?;
    map.finish()?;
    Ok(QuantizedModel { standardizer, encoder, decoder, head })
}

/// Either container kind, dispatched on the kind byte.
pub enum LoadedModel {
    Full(Box<Model>),
    Quantized(Box<QuantizedModel>),
}

pub fn load_any_model(path: &Path) -> Result<LoadedModel> {
    let bytes = fs::read(path)?;
    let (kind, flags, records) = decode_container(&bytes)?;
    match kind {
        KIND_FLOAT => Ok(LoadedModel::Full(Box::new(model_from_records(flags, records)?))),
        KIND_QUANTIZED => Ok(LoadedModel::Quantized(Box::new(quantized_from_records(records)?))),
        _ => unreachable!("decode_container validates the kind"),
    }
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// Writes training history as `epoch,train_loss,val_loss,val_accuracy`.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_loss", "val_accuracy"])
        .map_err(|e| format_err(format!("history csv: {e}")))?;
    for row in history {
        let acc = row.val_accuracy.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([
            row.epoch.to_string(),
            row.train_loss.to_string(),
            row.val_loss.to_string(),
            acc,
        ])
        .map_err(|e| format_err(format!("history csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| format_err(format!("history csv: {e}")))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Exports bottleneck codes as `label,code_0..code_31` for external
/// visualization.
pub fn write_latent_csv(path: &Path, model: &Model, dataset: &Dataset) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend((0..super::CODE_DIM).map(|i| format!("code_{i}")));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header).map_err(|e| format_err(format!("latent csv: {e}")))?;
    for (f, label) in &dataset.rows {
        let code = model.encode(f)?;
        let mut record = vec![label.ordinal().to_string()];
        record.extend(code.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(|e| format_err(format!("latent csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| format_err(format!("latent csv: {e}")))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Predicted label ordinals over a dataset, for fixture comparisons.
pub fn predictions(model: &Model, dataset: &Dataset) -> Result<Vec<u8>> {
    dataset
        .rows
        .iter()
        .map(|(f, _)| model.classify(f).map(|(l, _)| l.ordinal()))
        .collect()
}
