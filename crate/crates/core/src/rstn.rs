//! Binary tensor container and JSON manifest.
//!
//! Container format (little-endian):
//!
//! ```text
//! magic   "RSTN" (4 bytes)
//! version u32
//! record* name_len u32, name UTF-8, dtype u8 (0=f32, 1=f64),
//!         rank u8, dims u64 * rank, data (row-major, little-endian)
//! ```
//!
//! The manifest is a JSON sidecar naming every tensor with its shape and
//! dtype plus a rotary pair-layout flag. Activation dumps use the tensor
//! naming convention `L{layer}.H{head}.q|k|score`; half-split dumps are
//! permuted into interleaved pair order on ingestion.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trace::{ActivationTrace, HeadTrace};

pub const MAGIC: [u8; 4] = *b"RSTN";
pub const VERSION: u32 = 1;

/// Tensor element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::UnknownDtype(other)),
        }
    }
}

/// Tensor payload in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// A named n-dimensional tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(name: impl Into<String>, dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            dims,
            data: TensorData::F32(data),
        };
        t.check_len()?;
        Ok(t)
    }

    pub fn f64(name: impl Into<String>, dims: Vec<u64>, data: Vec<f64>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            dims,
            data: TensorData::F64(data),
        };
        t.check_len()?;
        Ok(t)
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product::<u64>() as usize
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Widen to f64 regardless of stored precision.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    fn check_len(&self) -> Result<()> {
        if self.len() != self.element_count() {
            return Err(Error::ShapeInconsistency(format!(
                "tensor {}: shape {:?} implies {} elements, data has {}",
                self.name,
                self.dims,
                self.element_count(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Rotary pair layout of q/k tensors and q/k projection weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotaryLayout {
    /// Pairs occupy adjacent slots `(2i, 2i+1)`.
    #[default]
    Interleaved,
    /// Pair halves occupy `(i, i + d/2)`.
    HalfSplit,
}

/// JSON sidecar describing a container's tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub layout: RotaryLayout,
    pub tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<u64>,
    pub dtype: DType,
}

impl Manifest {
    pub fn describe(layout: RotaryLayout, tensors: &[Tensor]) -> Self {
        Self {
            layout,
            tensors: tensors
                .iter()
                .map(|t| TensorMeta {
                    name: t.name.clone(),
                    shape: t.dims.clone(),
                    dtype: t.dtype(),
                })
                .collect(),
        }
    }

    /// Check that the container's tensors match this manifest exactly.
    pub fn check(&self, tensors: &[Tensor]) -> Result<()> {
        if self.tensors.len() != tensors.len() {
            return Err(Error::Manifest(format!(
                "manifest lists {} tensors, container holds {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        for meta in &self.tensors {
            let t = tensors
                .iter()
                .find(|t| t.name == meta.name)
                .ok_or_else(|| Error::Manifest(format!("tensor {} not in container", meta.name)))?;
            if t.dims != meta.shape {
                return Err(Error::ShapeInconsistency(format!(
                    "tensor {}: manifest shape {:?}, container shape {:?}",
                    meta.name, meta.shape, t.dims
                )));
            }
            if t.dtype() != meta.dtype {
                return Err(Error::Manifest(format!(
                    "tensor {}: manifest dtype {:?}, container dtype {:?}",
                    meta.name,
                    meta.dtype,
                    t.dtype()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

pub fn write_container<W: Write>(mut w: W, tensors: &[Tensor]) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for t in tensors {
        t.check_len()?;
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[t.dtype().code(), t.dims.len() as u8])?;
        for &d in &t.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        match &t.data {
            TensorData::F32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::F64(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_container_file(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_container(&mut file, tensors)?;
    file.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Truncated(what.to_string()))
}

/// Returns `Ok(None)` at a clean end of stream, `Err(Truncated)` mid-record.
fn read_record<R: Read>(r: &mut R) -> Result<Option<Tensor>> {
    let mut len_buf = [0u8; 4];
    match r.read(&mut len_buf)? {
        0 => return Ok(None),
        4 => {}
        n => {
            read_exact_or(r, &mut len_buf[n..], "tensor name length")?;
        }
    }
    let name_len = u32::from_le_bytes(len_buf) as usize;
    let mut name_bytes = vec![0u8; name_len];
    read_exact_or(r, &mut name_bytes, "tensor name")?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::Truncated("tensor name is not UTF-8".into()))?;

    let mut header = [0u8; 2];
    read_exact_or(r, &mut header, &format!("header of tensor {name}"))?;
    let dtype = DType::from_code(header[0])?;
    let rank = header[1] as usize;

    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut dim_buf = [0u8; 8];
        read_exact_or(r, &mut dim_buf, &format!("dims of tensor {name}"))?;
        dims.push(u64::from_le_bytes(dim_buf));
    }
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeInconsistency(format!("tensor {name}: dims overflow")))?
        as usize;

    let elem = match dtype {
        DType::F32 => 4,
        DType::F64 => 8,
    };
    let mut raw = vec![0u8; count * elem];
    read_exact_or(r, &mut raw, &format!("data of tensor {name}"))?;
    let data = match dtype {
        DType::F32 => TensorData::F32(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(Some(Tensor { name, dims, data }))
}

pub fn read_container<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let mut version = [0u8; 4];
    read_exact_or(&mut r, &mut version, "version")?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut tensors = Vec::new();
    while let Some(t) = read_record(&mut r)? {
        tensors.push(t);
    }
    Ok(tensors)
}

pub fn read_container_file(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    read_container(BufReader::new(File::open(path)?))
}

/// Reorder a half-split row `(i, i + d/2)` into interleaved `(2i, 2i+1)`.
fn interleave_row(row: &[f64]) -> Vec<f64> {
    let half = row.len() / 2;
    let mut out = Vec::with_capacity(row.len());
    for i in 0..half {
        out.push(row[i]);
        out.push(row[i + half]);
    }
    out
}

/// Apply the layout permutation to every row of a `[rows, d]` tensor.
pub fn interleave_matrix(m: &Matrix) -> Result<Matrix> {
    if m.cols() % 2 != 0 {
        return Err(Error::OddLength(m.cols()));
    }
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        data.extend(interleave_row(m.row(r)));
    }
    Matrix::from_vec(m.rows(), m.cols(), data)
}

fn matrix_from_tensor(t: &Tensor) -> Result<Matrix> {
    if t.dims.len() != 2 {
        return Err(Error::ShapeInconsistency(format!(
            "tensor {}: expected rank 2, got {}",
            t.name,
            t.dims.len()
        )));
    }
    Matrix::from_vec(t.dims[0] as usize, t.dims[1] as usize, t.to_f64())
}

/// Serialize a trace as `L{l}.H{h}.q|k|score` f64 tensors (interleaved
/// layout).
pub fn trace_to_tensors(trace: &ActivationTrace) -> Vec<Tensor> {
    let t = trace.seq_len() as u64;
    let d = trace.head_dim() as u64;
    let mut tensors = Vec::with_capacity(trace.n_layers() * trace.n_heads() * 3);
    for (layer, head, ht) in trace.iter_heads() {
        let prefix = format!("L{layer}.H{head}");
        tensors.push(
            Tensor::f64(format!("{prefix}.q"), vec![t, d], ht.q_rot.data().to_vec()).unwrap(),
        );
        tensors.push(
            Tensor::f64(format!("{prefix}.k"), vec![t, d], ht.k_rot.data().to_vec()).unwrap(),
        );
        tensors.push(
            Tensor::f64(format!("{prefix}.score"), vec![t, t], ht.scores.data().to_vec())
                .unwrap(),
        );
    }
    tensors
}

/// Write a trace as manifest + container pair.
pub fn save_trace(
    trace: &ActivationTrace,
    manifest_path: impl AsRef<Path>,
    container_path: impl AsRef<Path>,
) -> Result<()> {
    let tensors = trace_to_tensors(trace);
    Manifest::describe(RotaryLayout::Interleaved, &tensors).save(manifest_path)?;
    write_container_file(container_path, &tensors)
}

/// Parse `L{l}.H{h}.q|k|score` into its parts.
fn parse_trace_name(name: &str) -> Option<(usize, usize, &str)> {
    let mut parts = name.split('.');
    let layer = parts.next()?.strip_prefix('L')?.parse().ok()?;
    let head = parts.next()?.strip_prefix('H')?.parse().ok()?;
    let field = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    Some((layer, head, field))
}

/// Reconstruct a trace from tensors named `L{l}.H{h}.q|k|score`, permuting
/// half-split q/k rows into interleaved order. The (layer, head) grid must
/// be complete and all shapes consistent.
pub fn tensors_to_trace(tensors: &[Tensor], layout: RotaryLayout) -> Result<ActivationTrace> {
    let mut n_layers = 0;
    let mut n_heads = 0;
    for t in tensors {
        let (layer, head, field) = parse_trace_name(&t.name).ok_or_else(|| {
            Error::Manifest(format!(
                "tensor name {} does not match L<layer>.H<head>.q|k|score",
                t.name
            ))
        })?;
        if !matches!(field, "q" | "k" | "score") {
            return Err(Error::Manifest(format!(
                "tensor {}: unknown field {field}",
                t.name
            )));
        }
        n_layers = n_layers.max(layer + 1);
        n_heads = n_heads.max(head + 1);
    }
    if n_layers == 0 || n_heads == 0 {
        return Err(Error::EmptyInput("activation dump has no tensors"));
    }

    let find = |layer: usize, head: usize, field: &str| -> Result<Matrix> {
        let name = format!("L{layer}.H{head}.{field}");
        let t = tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::ShapeInconsistency(format!("missing tensor {name}")))?;
        matrix_from_tensor(t)
    };

    let probe = find(0, 0, "q")?;
    let seq_len = probe.rows();
    let head_dim = probe.cols();

    let mut heads = Vec::with_capacity(n_layers * n_heads);
    for layer in 0..n_layers {
        for head in 0..n_heads {
            let mut q_rot = find(layer, head, "q")?;
            let mut k_rot = find(layer, head, "k")?;
            let scores = find(layer, head, "score")?;
            if layout == RotaryLayout::HalfSplit {
                q_rot = interleave_matrix(&q_rot)?;
                k_rot = interleave_matrix(&k_rot)?;
            }
            heads.push(HeadTrace {
                q_rot,
                k_rot,
                scores,
                probs: None,
            });
        }
    }
    ActivationTrace::from_heads(n_layers, n_heads, seq_len, head_dim, heads)
}

/// Read a manifest + container pair back into a trace, checking the two
/// against each other first.
pub fn load_trace(
    manifest_path: impl AsRef<Path>,
    container_path: impl AsRef<Path>,
) -> Result<ActivationTrace> {
    let manifest = Manifest::load(manifest_path)?;
    let tensors = read_container_file(container_path)?;
    manifest.check(&tensors)?;
    tensors_to_trace(&tensors, manifest.layout)
}
