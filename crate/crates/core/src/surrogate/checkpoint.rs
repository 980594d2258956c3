//! Binary model checkpoints.
//!
//! Layout (little endian): magic `SFNN`, `u32` format version, `u32` input
//! width, `u32` output width, `u32` layer count, one `u32` hidden width per
//! layer, `f64` dropout, normalizer statistics (feature mean, feature std,
//! target mean, target std), then per layer the `W`, `U` and bias blocks and
//! finally the head weight and bias blocks. Matrices are stored row-major.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::gru::GruParams;
use super::model::{GruModel, Normalizer, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFNN";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s<const N: usize>(&mut self) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for x in &mut out {
            *x = self.f64()?;
        }
        Ok(out)
    }

    fn matrix_into(&mut self, m: &mut DMatrix<f64>) -> Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(())
    }
}

pub fn encode(model: &GruModel) -> Result<Vec<u8>> {
    let norm = model.normalizer()?;
    let p = &model.params;
    let mut out = Vec::with_capacity(64 + 8 * p.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, p.input_width() as u32);
    put_u32(&mut out, p.output_width() as u32);
    put_u32(&mut out, p.layers.len() as u32);
    for w in p.widths() {
        put_u32(&mut out, w as u32);
    }
    put_f64s(&mut out, &[model.dropout]);
    put_f64s(&mut out, &norm.feature_mean);
    put_f64s(&mut out, &norm.feature_std);
    put_f64s(&mut out, &norm.target_mean);
    put_f64s(&mut out, &norm.target_std);
    for l in &p.layers {
        put_matrix(&mut out, &l.w);
        put_matrix(&mut out, &l.u);
        put_f64s(&mut out, l.b.as_slice());
    }
    put_matrix(&mut out, &p.head.w);
    put_f64s(&mut out, p.head.b.as_slice());
    Ok(out)
}

pub fn decode(data: &[u8]) -> Result<GruModel> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let input = r.u32()? as usize;
    let output = r.u32()? as usize;
    if input != INPUT_WIDTH || output != OUTPUT_WIDTH {
        return Err(Error::Format(format!("checkpoint widths {input} -> {output} do not match {INPUT_WIDTH} -> {OUTPUT_WIDTH}")));
    }
    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut widths = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let w = r.u32()? as usize;
        if w == 0 || w > 1 << 16 {
            return Err(Error::Format(format!("implausible hidden width {w}")));
        }
        widths.push(w);
    }
    let dropout = r.f64()?;
    let normalizer = Normalizer {
        feature_mean: r.f64s()?,
        feature_std: r.f64s()?,
        target_mean: r.f64s()?,
        target_std: r.f64s()?,
    };
    normalizer.validate().map_err(|e| Error::Format(e.to_string()))?;
    let mut params = GruParams::zeros(input, &widths, output);
    for l in &mut params.layers {
        r.matrix_into(&mut l.w)?;
        r.matrix_into(&mut l.u)?;
        for x in l.b.iter_mut() {
            *x = r.f64()?;
        }
    }
    r.matrix_into(&mut params.head.w)?;
    for x in params.head.b.iter_mut() {
        *x = r.f64()?;
    }
    if r.pos != data.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    if !params.is_finite() || !(0.0..1.0).contains(&dropout) {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(GruModel { params, dropout, normalizer: Some(normalizer) })
}

pub fn save(model: &GruModel, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GruModel> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    decode(&data)
}
