//! Self-describing binary container shared by every model kind.
//!
//! Layout (little-endian): magic `TGLM`, version `u16`, model kind `u8`, config length
//! `u32` followed by the UTF-8 config text, then named records until end of file:
//! name length `u16`, name, dtype `u8`, rank `u8`, dims `u32 × rank`, raw data.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DType, NumArray, Real};

pub const MAGIC: &[u8; 4] = b"TGLM";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    LstmLm = 0,
    Lda = 1,
    TopicRnn = 2,
    Vrtm = 3,
    Tdlm = 4,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LstmLm,
        ModelKind::Lda,
        ModelKind::TopicRnn,
        ModelKind::Vrtm,
        ModelKind::Tdlm,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| *k as u8 == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LstmLm => "lstm",
            ModelKind::Lda => "lda",
            ModelKind::TopicRnn => "topicrnn",
            ModelKind::Vrtm => "vrtm",
            ModelKind::Tdlm => "tdlm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl RecordData {
    fn dtype(&self) -> DType {
        match self {
            RecordData::F32(_) => DType::F32,
            RecordData::F64(_) => DType::F64,
            RecordData::U32(_) => DType::U32,
        }
    }

    fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::U32(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: RecordData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// Flat `key=value` lines.
    pub config: String,
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, config: impl Into<String>) -> Self {
        Checkpoint {
            kind,
            config: config.into(),
            records: Vec::new(),
        }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.lines().find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn push_array<T: Real>(&mut self, name: &str, a: &NumArray<T>) {
        let data = match T::DTYPE {
            DType::F64 => RecordData::F64(a.data().iter().map(|x| x.f()).collect()),
            _ => RecordData::F32(a.data().iter().map(|x| x.f() as f32).collect()),
        };
        self.records.push(Record {
            name: name.to_string(),
            dims: a.shape().to_vec(),
            data,
        });
    }

    pub fn push_f64(&mut self, name: &str, dims: &[usize], data: Vec<f64>) {
        self.records.push(Record {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: RecordData::F64(data),
        });
    }

    pub fn push_u32(&mut self, name: &str, dims: &[usize], data: Vec<u32>) {
        self.records.push(Record {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: RecordData::U32(data),
        });
    }

    pub fn record(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no record {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.records.iter().any(|r| r.name == name)
    }

    /// Reads a floating-point record at precision `T`.
    pub fn array<T: Real>(&self, name: &str) -> Result<NumArray<T>> {
        let r = self.record(name)?;
        let data: Vec<T> = match &r.data {
            RecordData::F32(v) => v.iter().map(|&x| T::c(x as f64)).collect(),
            RecordData::F64(v) => v.iter().map(|&x| T::c(x)).collect(),
            RecordData::U32(_) => {
                return Err(Error::Format(format!("record {name} is not floating point")))
            }
        };
        NumArray::from_vec(&r.dims, data)
    }

    pub fn u32s(&self, name: &str) -> Result<&[u32]> {
        match &self.record(name)?.data {
            RecordData::U32(v) => Ok(v),
            _ => Err(Error::Format(format!("record {name} is not u32"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(r.data.dtype() as u8);
            out.push(r.dims.len() as u8);
            for &d in &r.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match &r.data {
                RecordData::F32(v) => v.iter().for_each(|x| x.write_le(&mut out)),
                RecordData::F64(v) => v.iter().for_each(|x| x.write_le(&mut out)),
                RecordData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let code = cur.u8()?;
        let kind = ModelKind::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown model kind {code}")))?;
        let n = cur.u32()? as usize;
        let config = std::str::from_utf8(cur.take(n)?)
            .map_err(|_| Error::Format("config blob is not UTF-8".into()))?
            .to_string();
        let mut records = Vec::new();
        while cur.pos < bytes.len() {
            let n = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(n)?)
                .map_err(|_| Error::Format("record name is not UTF-8".into()))?
                .to_string();
            let code = cur.u8()?;
            let dtype = DType::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown dtype {code} in {name}")))?;
            let rank = cur.u8()? as usize;
            let dims = (0..rank)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = dims.iter().product();
            let raw = cur.take(count * dtype.size())?;
            let data = match dtype {
                DType::F32 => RecordData::F32(raw.chunks_exact(4).map(f32::read_le).collect()),
                DType::F64 => RecordData::F64(raw.chunks_exact(8).map(f64::read_le).collect()),
                DType::U32 => RecordData::U32(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
            };
            debug_assert_eq!(data.len(), count);
            records.push(Record { name, dims, data });
        }
        Ok(Checkpoint {
            kind,
            config,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = Checkpoint::new(ModelKind::Vrtm, "k=3\nvocab_hash=abc\n");
        c.push_array("w", &NumArray::<f32>::from_fn(&[2, 3], |i| i as f32 * 0.5));
        c.push_array("b", &NumArray::<f64>::vector(vec![1.0, -2.0]));
        c.push_u32("counts", &[2, 2], vec![1, 2, 3, 4]);
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_value("vocab_hash"), Some("abc"));
        assert_eq!(back.array::<f64>("w").unwrap().get2(1, 2), 2.5);
        assert_eq!(back.u32s("counts").unwrap(), &[1, 2, 3, 4]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::from_bytes(b"NOPE"), Err(Error::Format(_))));
        let mut bytes = Checkpoint::new(ModelKind::Lda, "").to_bytes();
        bytes.extend_from_slice(&[5, 0, b'x']);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
