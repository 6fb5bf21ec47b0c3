//! Minimal NPY v1.0 reader and writer.
//!
//! Supports little-endian `f32`, `f64` and `i64` arrays in C order, which is
//! everything the checkpoints need. Headers are padded so that the data
//! starts at a multiple of 64 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl NpyData {
    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
            NpyData::I64(_) => "<i8",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
            NpyData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NpyData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Npy(format!(
                "shape {shape:?} holds {expected} values, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

/// Header bytes, magic included, for an array of the given type and shape.
pub fn header(descr: &str, shape: &[usize]) -> Vec<u8> {
    let dims = match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {dims}, }}");
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn write<W: Write>(w: &mut W, array: &NpyArray) -> Result<()> {
    w.write_all(&header(array.data.descr(), &array.shape))?;
    match &array.data {
        NpyData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
        NpyData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
        NpyData::I64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
    }
    Ok(())
}

pub fn save(path: &Path, array: &NpyArray) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, array)?;
    w.flush()?;
    Ok(())
}

pub fn save_f32(path: &Path, shape: &[usize], values: impl IntoIterator<Item = f64>) -> Result<()> {
    let data = values.into_iter().map(|v| v as f32).collect();
    save(path, &NpyArray::new(shape.to_vec(), NpyData::F32(data))?)
}

fn field<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = dict
        .find(&pat)
        .ok_or_else(|| Error::Npy(format!("header lacks '{key}'")))?
        + pat.len();
    Ok(dict[start..].trim_start())
}

fn parse_shape(dict: &str) -> Result<Vec<usize>> {
    let rest = field(dict, "shape")?;
    let open = rest
        .strip_prefix('(')
        .ok_or_else(|| Error::Npy("shape is not a tuple".into()))?;
    let close = open
        .find(')')
        .ok_or_else(|| Error::Npy("unterminated shape tuple".into()))?;
    open[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Npy(format!("bad dimension {s:?}"))))
        .collect()
}

pub fn read<R: Read>(r: &mut R) -> Result<NpyArray> {
    let mut pre = [0u8; 8];
    r.read_exact(&mut pre)?;
    if &pre[..6] != MAGIC {
        return Err(Error::Npy("missing NPY magic".into()));
    }
    let header_len = match pre[6] {
        1 => {
            let mut b = [0u8; 2];
            r.read_exact(&mut b)?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::Npy(format!("unsupported NPY version {v}"))),
    };
    let mut raw = vec![0u8; header_len];
    r.read_exact(&mut raw)?;
    let dict = String::from_utf8(raw).map_err(|_| Error::Npy("header is not text".into()))?;

    if !field(&dict, "fortran_order")?.starts_with("False") {
        return Err(Error::Npy("Fortran-ordered arrays are not supported".into()));
    }
    let shape = parse_shape(&dict)?;
    let count: usize = shape.iter().product();
    let descr = field(&dict, "descr")?;
    let descr = descr
        .trim_start_matches(['\'', '"'])
        .split(['\'', '"'])
        .next()
        .unwrap_or_default();

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let width = match descr {
        "<f4" => 4,
        "<f8" | "<i8" => 8,
        other => return Err(Error::Npy(format!("unsupported dtype {other}"))),
    };
    if bytes.len() != count * width {
        return Err(Error::Npy(format!(
            "expected {} data bytes, found {}",
            count * width,
            bytes.len()
        )));
    }
    let data = match descr {
        "<f4" => NpyData::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        "<f8" => NpyData::F64(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => NpyData::I64(
            bytes
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    NpyArray::new(shape, data)
}

pub fn load(path: &Path) -> Result<NpyArray> {
    read(&mut BufReader::new(File::open(path)?))
}
