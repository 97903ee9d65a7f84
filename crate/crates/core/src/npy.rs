//! NPY (format 1.0) input and output for fields, probability stacks and
//! label maps. Arrays are C-ordered with axes `(z, y, x)` or `(y, x)`; a
//! probability stack carries the class axis first.
//!
//! Label files hold 0-based classes (0 is background), while [`LabelMap`]
//! counts from 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use npyz::{DType, NpyFile, Order, WriteOptions, WriterBuilder};

use crate::error::{Error, Result};
use crate::grid::{GridShape, LabelMap, ProbSegmentation, ScalarField};
use crate::scalar::Real;

/// Decoded array: shape plus values widened to `f64` or `u16`.
#[derive(Clone, Debug, PartialEq)]
pub enum NpyArray {
    Float { shape: Vec<usize>, data: Vec<f64> },
    Int { shape: Vec<usize>, data: Vec<u16> },
}

impl NpyArray {
    pub fn shape(&self) -> &[usize] {
        match self {
            NpyArray::Float { shape, .. } | NpyArray::Int { shape, .. } => shape,
        }
    }
}

fn npy_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Npy {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads any supported array (`f4`, `f8`, `u1`, `u2`) from a reader.
pub fn read_array<R: Read>(reader: R, path: &Path) -> Result<NpyArray> {
    let npy = NpyFile::new(reader).map_err(|e| npy_err(path, format!("bad header: {e}")))?;
    if npy.order() == Order::Fortran {
        return Err(npy_err(path, "Fortran-ordered arrays are not supported"));
    }
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let descr = match npy.dtype() {
        DType::Plain(ts) => ts.to_string(),
        other => return Err(npy_err(path, format!("unsupported dtype {}", other.descr()))),
    };
    let bad_data = |e: std::io::Error| npy_err(path, format!("bad data: {e}"));
    let arr = match &descr[1..] {
        "f4" => NpyArray::Float {
            shape,
            data: npy.into_vec::<f32>().map_err(bad_data)?.into_iter().map(f64::from).collect(),
        },
        "f8" => NpyArray::Float {
            shape,
            data: npy.into_vec::<f64>().map_err(bad_data)?,
        },
        "u1" => NpyArray::Int {
            shape,
            data: npy.into_vec::<u8>().map_err(bad_data)?.into_iter().map(u16::from).collect(),
        },
        "u2" => NpyArray::Int {
            shape,
            data: npy.into_vec::<u16>().map_err(bad_data)?,
        },
        _ => return Err(npy_err(path, format!("unsupported dtype {descr}"))),
    };
    Ok(arr)
}

pub fn read_array_file(path: &Path) -> Result<NpyArray> {
    let file = File::open(path).map_err(|e| npy_err(path, e.to_string()))?;
    read_array(BufReader::new(file), path)
}

fn grid_shape(path: &Path, dims: &[usize], spacing: Option<&[f64]>) -> Result<GridShape> {
    let shape = match spacing {
        Some(s) => GridShape::with_spacing(dims, s),
        None => GridShape::new(dims),
    };
    shape.map_err(|e| npy_err(path, e.to_string()))
}

fn float_data(path: &Path, arr: NpyArray) -> Result<(Vec<usize>, Vec<f64>)> {
    match arr {
        NpyArray::Float { shape, data } => Ok((shape, data)),
        NpyArray::Int { .. } => Err(npy_err(path, "expected a float32 or float64 array")),
    }
}

fn convert<T: Real>(path: &Path, data: Vec<f64>) -> Result<Vec<T>> {
    data.into_iter()
        .map(|v| {
            if v.is_finite() {
                Ok(T::from_f64_lossy(v))
            } else {
                Err(npy_err(path, format!("non-finite value {v}")))
            }
        })
        .collect()
}

/// Reads a 2D or 3D scalar field.
pub fn read_field<T: Real>(path: &Path, spacing: Option<&[f64]>) -> Result<ScalarField<T>> {
    let (dims, data) = float_data(path, read_array_file(path)?)?;
    let shape = grid_shape(path, &dims, spacing)?;
    ScalarField::new(shape, convert(path, data)?).map_err(|e| npy_err(path, e.to_string()))
}

/// Reads a `(K, *dims)` probability stack.
pub fn read_probabilities<T: Real>(path: &Path, spacing: Option<&[f64]>) -> Result<ProbSegmentation<T>> {
    let (dims, data) = float_data(path, read_array_file(path)?)?;
    if dims.len() < 3 {
        return Err(npy_err(path, format!("expected (K, *dims), got shape {dims:?}")));
    }
    let shape = grid_shape(path, &dims[1..], spacing)?;
    ProbSegmentation::from_stacked(shape, dims[0], convert(path, data)?).map_err(|e| npy_err(path, e.to_string()))
}

/// Reads 0-based integer labels. `num_classes` defaults to the largest label
/// plus one (at least 2).
pub fn read_labels(path: &Path, num_classes: Option<usize>, spacing: Option<&[f64]>) -> Result<LabelMap> {
    let (dims, data) = match read_array_file(path)? {
        NpyArray::Int { shape, data } => (shape, data),
        NpyArray::Float { .. } => return Err(npy_err(path, "expected a uint8 or uint16 label array")),
    };
    let shape = grid_shape(path, &dims, spacing)?;
    let max = data.iter().copied().max().unwrap_or(0) as usize;
    let k = num_classes.unwrap_or((max + 1).max(2));
    if max >= k || max == u16::MAX as usize {
        return Err(npy_err(path, format!("label {max} outside 0..{k}")));
    }
    let labels = data.into_iter().map(|l| l + 1).collect();
    LabelMap::new(shape, k, labels).map_err(|e| npy_err(path, e.to_string()))
}

fn write_with<W: Write, E: npyz::Serialize + npyz::AutoSerialize>(
    w: W,
    shape: &[usize],
    data: impl IntoIterator<Item = E>,
) -> Result<()> {
    let shape: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
    let mut writer = WriteOptions::<E>::new().default_dtype().shape(&shape).writer(w).begin_nd()?;
    writer.extend(data)?;
    writer.finish()?;
    Ok(())
}

/// Writes values in the on-disk precision of `T`.
pub fn write_values<T: Real, W: Write>(w: W, shape: &[usize], data: &[T]) -> Result<()> {
    if T::NPY_DESCR == "<f8" {
        write_with(w, shape, data.iter().map(|v| v.to_f64_lossy()))
    } else {
        write_with(w, shape, data.iter().map(|v| v.to_f64_lossy() as f32))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| npy_err(path, e.to_string()))?;
    Ok(BufWriter::new(file))
}

pub fn write_field<T: Real>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    write_values(create(path)?, field.shape().dims(), field.values())
}

pub fn write_probabilities<T: Real>(path: &Path, seg: &ProbSegmentation<T>) -> Result<()> {
    let mut shape = vec![seg.num_classes()];
    shape.extend_from_slice(seg.shape().dims());
    write_values(create(path)?, &shape, &seg.to_stacked())
}

/// Writes 0-based labels as `uint8`, or `uint16` past 256 classes.
pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let w = create(path)?;
    let dims = labels.shape().dims();
    if labels.num_classes() <= 256 {
        write_with(w, dims, labels.labels().iter().map(|&l| (l - 1) as u8))
    } else {
        write_with(w, dims, labels.labels().iter().map(|&l| l - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_keeps_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        let f = ScalarField::new(GridShape::new(&[2, 3]).unwrap(), vec![0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0]).unwrap();
        write_field(&path, &f).unwrap();
        let back: ScalarField<f64> = read_field(&path, None).unwrap();
        assert_eq!(back, f);
        let single: ScalarField<f32> = read_field(&path, None).unwrap();
        assert_eq!(single.values()[5], 1.0f32 / 3.0);
    }

    #[test]
    fn header_is_version_one_little_endian() {
        let mut buf = Vec::new();
        write_values(&mut buf, &[2, 2], &[0.0f32; 4]).unwrap();
        assert_eq!(&buf[..8], b"\x93NUMPY\x01\x00");
        let header = String::from_utf8_lossy(&buf[10..]);
        assert!(header.contains("'descr': '<f4'"), "{header}");
        assert!(header.contains("'shape': (2, 2"), "{header}");
    }

    #[test]
    fn labels_are_zero_based_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.npy");
        let lm = LabelMap::new(GridShape::new(&[1, 4]).unwrap(), 4, vec![1, 2, 3, 4]).unwrap();
        write_labels(&path, &lm).unwrap();
        match read_array_file(&path).unwrap() {
            NpyArray::Int { data, .. } => assert_eq!(data, vec![0, 1, 2, 3]),
            other => panic!("{other:?}"),
        }
        assert_eq!(read_labels(&path, Some(4), None).unwrap(), lm);
        assert!(read_labels(&path, Some(3), None).is_err());
    }

    #[test]
    fn probabilities_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.npy");
        let seg = ProbSegmentation::new(
            GridShape::new(&[1, 2]).unwrap(),
            vec![vec![0.25, 1.0], vec![0.75, 0.0]],
        )
        .unwrap();
        write_probabilities(&path, &seg).unwrap();
        assert_eq!(read_probabilities::<f64>(&path, None).unwrap(), seg);
    }

    #[test]
    fn garbage_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.npy");
        std::fs::write(&path, b"not an npy file").unwrap();
        let err = read_field::<f64>(&path, None).unwrap_err().to_string();
        assert!(err.contains("bad.npy"), "{err}");
    }

    #[test]
    fn wrong_kind_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        let f = ScalarField::new(GridShape::new(&[2, 2]).unwrap(), vec![0.0f64; 4]).unwrap();
        write_field(&path, &f).unwrap();
        assert!(read_labels(&path, None, None).is_err());
        assert!(read_probabilities::<f64>(&path, None).is_err());
    }
}
