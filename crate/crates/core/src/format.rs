//! Binary containers for windows and models. All integers and floats are
//! little-endian.
//!
//! Window file:
//!
//! ```text
//! "WRBM" | version u32 | K u32 | n u32 | count u64 | count * n indices u32
//! ```
//!
//! Model file:
//!
//! ```text
//! "RBMM" | version u32 | mode u32
//!   mode 0 (binary):  H u32 | V u32           | W (H x V) | b (V) | c (H)
//!   mode 1 (softmax): H u32 | n u32 | K u32   | W (H x nK) | b (nK) | c (H)
//!   mode 2 (wrrbm):   n u32 | K u32 | D u32 | H u32
//!                     | D (D x K) | U(1..n) (each H x D) | b* (K) | c (H)
//! ```
//!
//! Matrices are row-major `f64`.

use std::io::{Read, Write};

use crate::corpus::WindowCorpus;
use crate::linalg::Matrix;
use crate::rbm::{RbmParams, SoftmaxLayout, VisibleMode};
use crate::wrrbm::{Embeddings, WrrbmLayout, WrrbmParams};
use crate::{Error, Result};

pub const WINDOW_MAGIC: &[u8; 4] = b"WRBM";
pub const MODEL_MAGIC: &[u8; 4] = b"RBMM";
pub const FORMAT_VERSION: u32 = 1;

const MODE_BINARY: u32 = 0;
const MODE_SOFTMAX: u32 = 1;
const MODE_WRRBM: u32 = 2;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Malformed { offset: self.pos as u64, reason: reason.into() })
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return self.fail(format!("truncated while reading {what}"));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let start = self.pos;
        if self.take(4, "magic")? != expected {
            self.pos = start;
            return self.fail(format!("bad magic, expected {:?}", String::from_utf8_lossy(expected)));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        let v = self.u32(what)? as usize;
        if v == 0 {
            self.pos = start;
            return self.fail(format!("{what} must be positive"));
        }
        Ok(v)
    }

    fn f64s(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(len.saturating_mul(8), what)?;
        let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = vals.iter().position(|x| !x.is_finite()) {
            self.pos -= (len - i) * 8;
            return self.fail(format!("non-finite value in {what}"));
        }
        Ok(vals)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let start = self.pos;
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            self.pos = start;
            return self.fail(format!("unsupported format version {v}"));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_windows(corpus: &WindowCorpus) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + corpus.flat().len() * 4);
    out.extend_from_slice(WINDOW_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    put_u32(&mut out, corpus.vocab_size())?;
    put_u32(&mut out, corpus.n())?;
    out.extend_from_slice(&(corpus.len() as u64).to_le_bytes());
    for &w in corpus.flat() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_windows(buf: &[u8]) -> Result<WindowCorpus> {
    let mut r = Reader::new(buf);
    r.magic(WINDOW_MAGIC)?;
    r.version()?;
    let k = r.dim("K")?;
    let n = r.dim("n")?;
    let count = r.u64("window count")? as usize;
    let total = count.checked_mul(n).ok_or_else(|| Error::Malformed { offset: 16, reason: "window count overflows".into() })?;
    let need = total.saturating_mul(4);
    if buf.len() - r.pos < need {
        return r.fail(format!("expected {need} bytes of indices, found {}", buf.len() - r.pos));
    }
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        let at = r.pos;
        let w = r.u32("index")?;
        if w as usize >= k {
            return Err(Error::Malformed { offset: at as u64, reason: format!("index {w} >= K={k}") });
        }
        data.push(w);
    }
    r.finish()?;
    WindowCorpus::from_flat(n, k, data)
}

pub fn write_windows<W: Write>(corpus: &WindowCorpus, mut w: W) -> Result<()> {
    w.write_all(&encode_windows(corpus)?)?;
    Ok(())
}

pub fn read_windows<R: Read>(mut r: R) -> Result<WindowCorpus> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_windows(&buf)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Rbm(RbmParams),
    Wrrbm(WrrbmParams),
}

impl Model {
    pub fn into_wrrbm(self) -> Result<WrrbmParams> {
        match self {
            Model::Wrrbm(p) => Ok(p),
            Model::Rbm(_) => Err(Error::Config("expected a wrrbm model file".into())),
        }
    }

    /// One-line description of the container header.
    pub fn summary(&self) -> String {
        match self {
            Model::Rbm(p) => match p.mode {
                VisibleMode::Binary => format!("mode=binary H={} V={}", p.hidden(), p.visible()),
                VisibleMode::Softmax(l) => format!("mode=softmax H={} n={} K={}", p.hidden(), l.n, l.k),
            },
            Model::Wrrbm(p) => {
                let l = p.layout;
                format!("mode=wrrbm n={} K={} D={} H={}", l.n, l.k, l.dim, l.hidden)
            }
        }
    }
}

pub fn encode_rbm(p: &RbmParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    match p.mode {
        VisibleMode::Binary => {
            put_u32(&mut out, MODE_BINARY as usize)?;
            put_u32(&mut out, p.hidden())?;
            put_u32(&mut out, p.visible())?;
        }
        VisibleMode::Softmax(l) => {
            put_u32(&mut out, MODE_SOFTMAX as usize)?;
            put_u32(&mut out, p.hidden())?;
            put_u32(&mut out, l.n)?;
            put_u32(&mut out, l.k)?;
        }
    }
    put_f64s(&mut out, p.w.as_slice());
    put_f64s(&mut out, &p.b);
    put_f64s(&mut out, &p.c);
    Ok(out)
}

pub fn encode_wrrbm(p: &WrrbmParams) -> Result<Vec<u8>> {
    p.validate()?;
    let l = p.layout;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    put_u32(&mut out, MODE_WRRBM as usize)?;
    for v in [l.n, l.k, l.dim, l.hidden] {
        put_u32(&mut out, v)?;
    }
    let word_major = p.d.to_word_major();
    for d in 0..l.dim {
        for w in 0..l.k {
            out.extend_from_slice(&word_major[w * l.dim + d].to_le_bytes());
        }
    }
    for u in &p.u {
        put_f64s(&mut out, u.as_slice());
    }
    put_f64s(&mut out, &p.b_star);
    put_f64s(&mut out, &p.c);
    Ok(out)
}

pub fn encode_model(m: &Model) -> Result<Vec<u8>> {
    match m {
        Model::Rbm(p) => encode_rbm(p),
        Model::Wrrbm(p) => encode_wrrbm(p),
    }
}

pub fn decode_model(buf: &[u8]) -> Result<Model> {
    let mut r = Reader::new(buf);
    r.magic(MODEL_MAGIC)?;
    r.version()?;
    let mode_at = r.pos;
    let model = match r.u32("mode")? {
        MODE_BINARY => {
            let h = r.dim("H")?;
            let v = r.dim("V")?;
            let w = r.f64s(h * v, "W")?;
            let b = r.f64s(v, "b")?;
            let c = r.f64s(h, "c")?;
            Model::Rbm(RbmParams::new(Matrix::from_vec(h, v, w), b, c, VisibleMode::Binary)?)
        }
        MODE_SOFTMAX => {
            let h = r.dim("H")?;
            let n = r.dim("n")?;
            let k = r.dim("K")?;
            let v = n * k;
            let w = r.f64s(h * v, "W")?;
            let b = r.f64s(v, "b")?;
            let c = r.f64s(h, "c")?;
            let mode = VisibleMode::Softmax(SoftmaxLayout::new(n, k)?);
            Model::Rbm(RbmParams::new(Matrix::from_vec(h, v, w), b, c, mode)?)
        }
        MODE_WRRBM => {
            let n = r.dim("n")?;
            let k = r.dim("K")?;
            let dim = r.dim("D")?;
            let h = r.dim("H")?;
            let layout = WrrbmLayout::new(n, k, dim, h)?;
            let d_rows = r.f64s(dim * k, "D")?;
            let mut word_major = vec![0.0; dim * k];
            for d in 0..dim {
                for w in 0..k {
                    word_major[w * dim + d] = d_rows[d * k + w];
                }
            }
            let mut u = Vec::with_capacity(n);
            for _ in 0..n {
                u.push(Matrix::from_vec(h, dim, r.f64s(h * dim, "U")?));
            }
            let b_star = r.f64s(k, "b*")?;
            let c = r.f64s(h, "c")?;
            let p = WrrbmParams { layout, d: Embeddings::from_word_major(k, dim, word_major)?, u, b_star, c };
            p.validate()?;
            Model::Wrrbm(p)
        }
        other => return Err(Error::Malformed { offset: mode_at as u64, reason: format!("unknown mode {other}") }),
    };
    r.finish()?;
    Ok(model)
}

pub fn write_model<W: Write>(m: &Model, mut w: W) -> Result<()> {
    w.write_all(&encode_model(m)?)?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_model(&buf)
}
