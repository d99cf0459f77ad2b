//! Binary checkpoint format.
//!
//! Layout, all integers 64-bit little-endian:
//!   magic "SEQC" | version | config (len + UTF-8) |
//!   vocab (count, then len + UTF-8 per token) |
//!   tensors (count, then per tensor: name len, name UTF-8, rank, dims,
//!   row-major f64 LE payload).
//!
//! Tensors are written in name order, so the same state always produces the
//! same bytes. Model parameters, their shadow copies, and Adam states all
//! live in the one tensor table under dotted prefixes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use numcore::{AdamState, ParamSet, Tensor};

use crate::error::{Result, SeqError};

pub const MAGIC: &[u8; 4] = b"SEQC";
pub const VERSION: u64 = 1;

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub config_text: String,
    pub vocab_tokens: Vec<String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Store a parameter set under `prefix.`.
    pub fn insert_params(&mut self, prefix: &str, params: &ParamSet) {
        for (name, t) in params {
            self.tensors.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    /// Extract the parameter set stored under `prefix.`; empty if absent.
    pub fn extract_params(&self, prefix: &str) -> ParamSet {
        let dot = format!("{prefix}.");
        self.tensors
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(&dot)
                    .map(|rest| (rest.to_string(), v.clone()))
            })
            .collect()
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let dot = format!("{prefix}.");
        self.tensors.keys().any(|k| k.starts_with(&dot))
    }

    /// Store an Adam state under `prefix.` (moments plus a meta vector
    /// [alpha, beta1, beta2, eps, step]).
    pub fn insert_adam(&mut self, prefix: &str, state: &AdamState) {
        let (m, v) = state.moments();
        self.insert_params(&format!("{prefix}.m"), m);
        self.insert_params(&format!("{prefix}.v"), v);
        let meta = Tensor::vector(vec![
            state.alpha,
            state.beta1,
            state.beta2,
            state.eps,
            state.step as f64,
        ])
        .expect("finite");
        self.tensors.insert(format!("{prefix}.meta"), meta);
    }

    pub fn extract_adam(&self, prefix: &str) -> Option<AdamState> {
        let meta = self.tensors.get(&format!("{prefix}.meta"))?;
        let d = meta.data();
        Some(AdamState::from_parts(
            d[0],
            d[1],
            d[2],
            d[3],
            d[4] as u64,
            self.extract_params(&format!("{prefix}.m")),
            self.extract_params(&format!("{prefix}.v")),
        ))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut w, &self.config_text)?;
        w.write_all(&(self.vocab_tokens.len() as u64).to_le_bytes())?;
        for tok in &self.vocab_tokens {
            write_str(&mut w, tok)?;
        }
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(t.rank() as u64).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SeqError::Checkpoint(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let version = read_u64(&mut r)?;
        if version != VERSION {
            return Err(SeqError::Checkpoint(format!(
                "{}: format version {version} (this build reads {VERSION})",
                path.display()
            )));
        }
        let config_text = read_str(&mut r)?;
        let vocab_len = read_u64(&mut r)? as usize;
        let mut vocab_tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            vocab_tokens.push(read_str(&mut r)?);
        }
        let n_tensors = read_u64(&mut r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..n_tensors {
            let name = read_str(&mut r)?;
            let rank = read_u64(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let t = Tensor::new(shape, data)
                .map_err(|e| SeqError::Checkpoint(format!("tensor `{name}`: {e}")))?;
            tensors.insert(name, t);
        }
        Ok(Checkpoint {
            config_text,
            vocab_tokens,
            tensors,
        })
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u64(r)? as usize;
    if len > 1 << 30 {
        return Err(SeqError::Checkpoint(format!("string length {len} too large")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SeqError::Checkpoint(format!("bad UTF-8: {e}")))
}
