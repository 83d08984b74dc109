//! Model checkpoint file: little-endian binary with magic `AMLB`, a
//! format version, then a sequence of named tensors
//! (`name_len u32, name utf8, rows u32, cols u32, rows*cols f64`).
//!
//! Tensors are written in a fixed order — `layer{i}.weight`,
//! `layer{i}.bias` for each layer, then `head.weight` — so identical
//! models produce byte-identical files.

use std::fs;
use std::path::Path;

use amlab_core::loss::ClassifierHead;
use amlab_core::train::{Linear, Mlp};
use amlab_core::Matrix;

use crate::error::Error;

pub const MAGIC: [u8; 4] = *b"AMLB";
pub const VERSION: u32 = 1;

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn push_tensor(bytes: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f64]) {
    bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
    bytes.extend_from_slice(name.as_bytes());
    bytes.extend_from_slice(&(rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes the network and head to `path`.
pub fn save_model(path: &Path, mlp: &Mlp, head: &ClassifierHead) -> Result<(), Error> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for (i, layer) in mlp.layers().iter().enumerate() {
        push_tensor(
            &mut bytes,
            &format!("layer{i}.weight"),
            layer.weight.rows(),
            layer.weight.cols(),
            layer.weight.data(),
        );
        push_tensor(&mut bytes, &format!("layer{i}.bias"), 1, layer.bias.len(), &layer.bias);
    }
    push_tensor(
        &mut bytes,
        "head.weight",
        head.weights().rows(),
        head.weights().cols(),
        head.weights().data(),
    );
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.bytes.len() < self.offset + n {
            return Err(corrupt(
                self.path,
                format!(
                    "truncated at byte {} (wanted {n} more of {})",
                    self.offset,
                    self.bytes.len()
                ),
            ));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, Error> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.offset == self.bytes.len()
    }
}

fn read_tensors(path: &Path) -> Result<Vec<(String, Matrix)>, Error> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = Reader {
        bytes: &bytes,
        offset: 0,
        path,
    };
    if reader.take(4)? != MAGIC {
        return Err(corrupt(path, "bad magic (not an AMLB checkpoint)"));
    }
    let version = reader.u32()?;
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let mut tensors = Vec::new();
    while !reader.done() {
        let name_len = reader.u32()? as usize;
        let name = std::str::from_utf8(reader.take(name_len)?)
            .map_err(|_| corrupt(path, "tensor name is not UTF-8"))?
            .to_string();
        let rows = reader.u32()? as usize;
        let cols = reader.u32()? as usize;
        let raw = reader.take(rows * cols * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        let matrix = Matrix::from_vec(rows, cols, data)
            .map_err(|e| corrupt(path, format!("tensor {name}: {e}")))?;
        tensors.push((name, matrix));
    }
    Ok(tensors)
}

/// Reads a checkpoint back into a network and head.
pub fn load_model(path: &Path) -> Result<(Mlp, ClassifierHead), Error> {
    let tensors = read_tensors(path)?;
    if tensors.len() < 3 || tensors.len() % 2 == 0 {
        return Err(corrupt(
            path,
            format!("expected layer weight/bias pairs plus a head, found {} tensors", tensors.len()),
        ));
    }
    let layer_count = (tensors.len() - 1) / 2;
    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let (weight_name, weight) = &tensors[2 * i];
        let (bias_name, bias) = &tensors[2 * i + 1];
        if weight_name != &format!("layer{i}.weight") || bias_name != &format!("layer{i}.bias") {
            return Err(corrupt(
                path,
                format!("unexpected tensor order: {weight_name}, {bias_name}"),
            ));
        }
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(corrupt(path, format!("{bias_name} shape does not match {weight_name}")));
        }
        layers.push(Linear {
            weight: weight.clone(),
            bias: bias.data().to_vec(),
        });
    }
    let (head_name, head_weights) = &tensors[tensors.len() - 1];
    if head_name != "head.weight" {
        return Err(corrupt(path, format!("expected head.weight last, found {head_name}")));
    }
    let mlp = Mlp::from_layers(layers).map_err(|e| corrupt(path, e.to_string()))?;
    if mlp.embed_dim() != head_weights.cols() {
        return Err(corrupt(path, "head width does not match embedding width"));
    }
    let head = ClassifierHead::new(head_weights.clone()).map_err(|e| corrupt(path, e.to_string()))?;
    Ok((mlp, head))
}
