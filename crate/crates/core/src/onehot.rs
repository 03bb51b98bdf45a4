//! One-hot codec between entity states and 1600-wide binary vectors.
//!
//! Each of the eight features owns a 200-slot segment. A value `v` sets slot
//! `v + 100` of its segment, so the signed window `[-100, 99]` fits exactly.

use std::io::{Read, Write};

use crate::error::{shape_err, Error, Result};
use crate::state::{EntityState, NUM_FEATURES};

/// Slots per feature segment.
pub const SEGMENT_WIDTH: usize = 200;

/// Total one-hot width, 8 x 200.
pub const ONEHOT_DIM: usize = NUM_FEATURES * SEGMENT_WIDTH;

const OFFSET: i32 = 100;

/// A 1600-bit vector with exactly one set bit per segment.
///
/// Stored as the eight set indices; use [`OneHotVec::to_dense`] for the
/// network-facing form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OneHotVec {
    hot: [u16; NUM_FEATURES],
}

impl OneHotVec {
    /// Set bit positions, one per segment, ascending.
    pub fn set_bits(&self) -> [usize; NUM_FEATURES] {
        self.hot.map(usize::from)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; ONEHOT_DIM];
        for i in self.set_bits() {
            v[i] = 1.0;
        }
        v
    }

    /// Accepts a dense 0/1 vector with exactly one set bit per segment.
    pub fn from_dense(x: &[f64]) -> Result<Self> {
        if x.len() != ONEHOT_DIM {
            return Err(shape_err(format!("one-hot vector has {} entries, expected {ONEHOT_DIM}", x.len())));
        }
        let mut hot = [0u16; NUM_FEATURES];
        for (k, seg) in x.chunks_exact(SEGMENT_WIDTH).enumerate() {
            let mut found = None;
            for (i, &b) in seg.iter().enumerate() {
                if b == 1.0 {
                    if found.is_some() {
                        return Err(Error::Data(format!("segment {k} has more than one set bit")));
                    }
                    found = Some(i);
                } else if b != 0.0 {
                    return Err(Error::Data(format!("segment {k} holds non-binary value {b}")));
                }
            }
            let i = found.ok_or_else(|| Error::Data(format!("segment {k} has no set bit")))?;
            hot[k] = (k * SEGMENT_WIDTH + i) as u16;
        }
        Ok(OneHotVec { hot })
    }
}

/// Encodes a state; fails if any feature lies outside `[-100, 99]`.
pub fn encode_state(s: &EntityState) -> Result<OneHotVec> {
    let mut hot = [0u16; NUM_FEATURES];
    for (k, v) in s.to_array().into_iter().enumerate() {
        let slot = v + OFFSET;
        if !(0..SEGMENT_WIDTH as i32).contains(&slot) {
            return Err(Error::Data(format!(
                "feature {k} value {v} outside the encodable window [-100, 99]"
            )));
        }
        hot[k] = (k * SEGMENT_WIDTH) as u16 + slot as u16;
    }
    Ok(OneHotVec { hot })
}

/// Decodes a continuous reconstruction by taking each segment's argmax.
///
/// Ties go to the lowest index. The result is not range-checked beyond the
/// structural `[-100, 99]` window.
pub fn decode_vector(x: &[f64]) -> Result<EntityState> {
    if x.len() != ONEHOT_DIM {
        return Err(shape_err(format!("vector has {} entries, expected {ONEHOT_DIM}", x.len())));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite entry at index {i}")));
    }
    let mut f = [0i32; NUM_FEATURES];
    for (k, seg) in x.chunks_exact(SEGMENT_WIDTH).enumerate() {
        let mut best = 0;
        for i in 1..SEGMENT_WIDTH {
            if seg[i] > seg[best] {
                best = i;
            }
        }
        f[k] = best as i32 - OFFSET;
    }
    Ok(EntityState::from_array(f))
}

/// Writes one-hot vectors as CSV rows of 1600 `0`/`1` values.
pub fn write_onehot_csv<W: Write>(w: W, vectors: &[OneHotVec]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for v in vectors {
        out.write_record(v.to_dense().iter().map(|&b| if b == 1.0 { "1" } else { "0" }))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_onehot_csv<R: Read>(r: R) -> Result<Vec<OneHotVec>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let dense = rec
            .iter()
            .map(|t| match t.trim() {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(Error::Data(format!("one-hot cell `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(OneHotVec::from_dense(&dense)?);
    }
    Ok(out)
}
