//! Model checkpoints.
//!
//! ```text
//! magic "KIGC" | u32 version | u32 flags | u32 epochs
//! u32 label count, then per label: u32 byte length + UTF-8 bytes
//! u32 max_inner_iters
//! u32 tensor count, then per tensor: u32 rank + u32 dims
//! payload: every tensor's values as little-endian f64, in table order
//! ```
//!
//! Tensor order: per LSTM layer `w`, `b`; then `head.w`, `head.b`; then, if
//! flag bit 0 is set, `W_hk`, `b_hk`, `K_e` and `[eta_k, epsilon]`. Flag bit 1
//! selects the fused modulation input.

use std::io::{self, Read, Write};

use crate::infusion::{InfusionParams, ModulationInput};
use crate::io::{dim_to_u32, read_f64s, read_u32, write_f64s, write_u32, FormatError};
use crate::tensor::Tensor;

use super::lstm::{Classifier, KnowledgeGate, LstmLayer, LstmParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KIGC";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_GATE: u32 = 1;
const FLAG_FUSED: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Classifier,
    /// Class names, index = class id.
    pub labels: Vec<String>,
    pub epochs: u32,
}

fn tensors_of(model: &Classifier) -> Vec<Tensor> {
    let mut out = Vec::new();
    for l in &model.lstm.layers {
        out.push(l.w.clone());
        out.push(Tensor::vector(l.b.clone()));
    }
    out.push(model.lstm.head_w.clone());
    out.push(Tensor::vector(model.lstm.head_b.clone()));
    if let Some(g) = &model.gate {
        out.push(g.params.w_hk.clone());
        out.push(Tensor::vector(g.params.b_hk.clone()));
        out.push(Tensor::vector(g.k_e.clone()));
        out.push(Tensor::vector(vec![g.params.eta_k, g.params.epsilon]));
    }
    out
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> io::Result<()> {
    let model = &ckpt.model;
    let mut flags = 0;
    if let Some(g) = &model.gate {
        flags |= FLAG_GATE;
        if g.params.modulation == ModulationInput::Fused {
            flags |= FLAG_FUSED;
        }
    }
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    write_u32(w, flags)?;
    write_u32(w, ckpt.epochs)?;
    write_u32(w, dim_to_u32(ckpt.labels.len())?)?;
    for l in &ckpt.labels {
        write_u32(w, dim_to_u32(l.len())?)?;
        w.write_all(l.as_bytes())?;
    }
    let max_inner = model.gate.as_ref().map_or(0, |g| g.params.max_inner_iters);
    write_u32(w, dim_to_u32(max_inner)?)?;
    let tensors = tensors_of(model);
    write_u32(w, dim_to_u32(tensors.len())?)?;
    for t in &tensors {
        write_u32(w, dim_to_u32(t.shape().len())?)?;
        for &d in t.shape() {
            write_u32(w, dim_to_u32(d)?)?;
        }
    }
    for t in &tensors {
        write_f64s(w, t.data())?;
    }
    Ok(())
}

fn header(msg: impl Into<String>) -> FormatError {
    FormatError::Header(msg.into())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(FormatError::Magic(magic));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::Version(version));
    }
    let flags = read_u32(r)?;
    let epochs = read_u32(r)?;
    let label_count = read_u32(r)? as usize;
    if label_count > 1 << 16 {
        return Err(header("implausible label count"));
    }
    let mut labels = Vec::with_capacity(label_count);
    for _ in 0..label_count {
        let len = read_u32(r)? as usize;
        if len > 1 << 16 {
            return Err(header("implausible label length"));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        labels.push(String::from_utf8(buf).map_err(|_| header("label is not UTF-8"))?);
    }
    let max_inner = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    if count > 1 << 12 {
        return Err(header("implausible tensor count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(header("implausible rank"));
        }
        shapes.push((0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<io::Result<Vec<_>>>()?);
    }
    let mut tensors = Vec::with_capacity(count);
    for shape in &shapes {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| header("shape overflows"))?;
        tensors.push(Tensor::from_vec(shape, read_f64s(r, n)?)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FormatError::Trailing(rest.len()));
    }

    let has_gate = flags & FLAG_GATE != 0;
    let extra = if has_gate { 4 } else { 0 };
    if count < 2 + extra || !(count - 2 - extra).is_multiple_of(2) || count - 2 - extra < 4 {
        return Err(header(format!("unexpected tensor count {count}")));
    }
    let layer_count = (count - 2 - extra) / 2;
    let mut it = tensors.into_iter();
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let w = it.next().unwrap();
        let b = it.next().unwrap().into_data();
        w.expect_rank(2)?;
        if w.rows() != b.len() || w.rows() % 4 != 0 {
            return Err(header("inconsistent LSTM layer shapes"));
        }
        layers.push(LstmLayer { w, b });
    }
    let head_w = it.next().unwrap();
    head_w.expect_rank(2)?;
    let head_b = it.next().unwrap().into_data();
    let d = head_w.cols();
    if head_b.len() != head_w.rows() || layers.iter().any(|l| l.w.rows() != 4 * d || l.w.cols() <= d) {
        return Err(header("inconsistent head shapes"));
    }
    if layers[1..].iter().any(|l| l.w.cols() != 2 * d) {
        return Err(header("inner layers must take width-d input"));
    }
    let gate = if has_gate {
        let w_hk = it.next().unwrap();
        let b_hk = it.next().unwrap().into_data();
        let k_e = it.next().unwrap().into_data();
        let hyper = it.next().unwrap().into_data();
        if w_hk.shape() != [d, 2 * d] || b_hk.len() != d || k_e.len() != d || hyper.len() != 2 {
            return Err(header("inconsistent gate shapes"));
        }
        Some(KnowledgeGate {
            params: InfusionParams {
                w_hk,
                b_hk,
                eta_k: hyper[0],
                epsilon: hyper[1],
                max_inner_iters: max_inner,
                modulation: if flags & FLAG_FUSED != 0 {
                    ModulationInput::Fused
                } else {
                    ModulationInput::Original
                },
            },
            k_e,
        })
    } else {
        None
    };
    Ok(Checkpoint {
        model: Classifier {
            lstm: LstmParams { layers, head_w, head_b },
            gate,
        },
        labels,
        epochs,
    })
}
