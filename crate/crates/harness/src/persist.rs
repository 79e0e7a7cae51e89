//! Single-file binary container for trained systems.
//!
//! The byte layout is documented in `docs/model-format.md`.

use std::io::{Read, Write};
use std::path::Path;

use tbma_core::codebook::{Codebook, CodebookParams, CodewordAssignment};
use tbma_core::decoder::DecoderParams;
use tbma_core::mathkit::ComplexMatrix;
use tbma_core::training::{Encoder, TrainedSystem};

use crate::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"TBMA";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_PRE_PARAMETERS: u32 = 1;

pub fn encode(system: &TrainedSystem) -> Vec<u8> {
    let codebook = system.codebook();
    let matrix = codebook.matrix();
    let dec = &system.decoder;
    let (flags, pre) = match &system.encoder {
        Encoder::Learned(p) => (FLAG_PRE_PARAMETERS, Some(p)),
        Encoder::Fixed(_) => (0, None),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        matrix.rows() as u32,
        system.assignment.alphabet() as u32,
        matrix.cols() as u32,
        system.support.len() as u32,
        dec.hidden() as u32,
        flags,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&codebook.energy().to_le_bytes());
    let mut put = |values: &[f64]| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(&matrix.real_plane());
    put(&matrix.imag_plane());
    if let Some(p) = pre {
        put(&p.re);
        put(&p.im);
    }
    let map: Vec<f64> = system.assignment.map().iter().map(|&a| a as f64).collect();
    put(&map);
    put(&system.support);
    put(&dec.w1);
    put(&dec.b1);
    put(&dec.w2);
    put(&dec.b2);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| HarnessError::Format("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainedSystem> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(HarnessError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(HarnessError::Format(format!("unsupported format version {version}")));
    }
    let n = cur.u32()? as usize;
    let m = cur.u32()? as usize;
    let m_prime = cur.u32()? as usize;
    let outputs = cur.u32()? as usize;
    let hidden = cur.u32()? as usize;
    let flags = cur.u32()?;
    if flags & !FLAG_PRE_PARAMETERS != 0 {
        return Err(HarnessError::Format(format!("unknown flags {flags:#x}")));
    }
    let energy = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let re = cur.f64s(n * m_prime)?;
    let im = cur.f64s(n * m_prime)?;
    let matrix = ComplexMatrix::from_planes(n, m_prime, &re, &im)?;
    let encoder = if flags & FLAG_PRE_PARAMETERS != 0 {
        let pre_re = cur.f64s(n * m_prime)?;
        let pre_im = cur.f64s(n * m_prime)?;
        let params = CodebookParams::new(n, m_prime, energy, pre_re, pre_im)?;
        if params.materialize().matrix() != &matrix {
            return Err(HarnessError::Format(
                "codebook does not match its pre-parameters".into(),
            ));
        }
        Encoder::Learned(params)
    } else {
        Encoder::Fixed(Codebook::new(matrix, energy)?)
    };
    let map = cur
        .f64s(m)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 && v < m_prime as f64 {
                Ok(v as usize)
            } else {
                Err(HarnessError::Format(format!("invalid assignment entry {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let assignment = CodewordAssignment::new(map, m_prime)?;
    let support = cur.f64s(outputs)?;
    let w1 = cur.f64s(hidden * 2 * n)?;
    let b1 = cur.f64s(hidden)?;
    let w2 = cur.f64s(outputs * hidden)?;
    let b2 = cur.f64s(outputs)?;
    if cur.pos != bytes.len() {
        return Err(HarnessError::Format(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    let decoder = DecoderParams::new(n, hidden, outputs, w1, b1, w2, b2)?;
    Ok(TrainedSystem {
        encoder,
        assignment,
        decoder,
        support,
        trace: Vec::new(),
    })
}

pub fn save(system: &TrainedSystem, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    file.write_all(&encode(system)).map_err(|e| HarnessError::io(path, e))
}

/// Loads a model; the trace is not part of the container and comes back empty.
pub fn load(path: &Path) -> Result<TrainedSystem> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes)
}
