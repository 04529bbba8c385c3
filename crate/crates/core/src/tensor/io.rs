//! Raw tensor files: `MXTENSOR` magic, dtype byte (1 = f32, 2 = f64), rank
//! byte, little-endian `u32` extents, then the little-endian payload.

use std::fs;
use std::path::Path;

use super::{DType, Real, Result, Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"MXTENSOR";

pub fn encode<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| TensorError::Format(format!("rank {} exceeds 255", t.rank())))?;
    let elem = std::mem::size_of::<T>();
    let mut out = Vec::with_capacity(10 + 4 * t.rank() + elem * t.len());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE as u8);
    out.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d)
            .map_err(|_| TensorError::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 10 || &bytes[..8] != MAGIC {
        return Err(TensorError::Format("missing MXTENSOR magic".into()));
    }
    let dtype = bytes[8];
    if dtype != T::DTYPE as u8 {
        let expected = match T::DTYPE {
            DType::F32 => "f32",
            DType::F64 => "f64",
        };
        return Err(TensorError::Format(format!("dtype code {dtype}, expected {expected}")));
    }
    let rank = bytes[9] as usize;
    let header = 10 + 4 * rank;
    if bytes.len() < header {
        return Err(TensorError::Format("truncated shape".into()));
    }
    let shape: Vec<usize> = bytes[10..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let elem = std::mem::size_of::<T>();
    let len: usize = shape.iter().product();
    if bytes.len() != header + len * elem {
        return Err(TensorError::Format(format!(
            "payload is {} bytes, shape {shape:?} needs {}",
            bytes.len() - header,
            len * elem
        )));
    }
    let data = bytes[header..].chunks_exact(elem).map(T::read_le).collect();
    Tensor::new(shape, data)
}

pub fn write<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read<T: Real>(path: &Path) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::from_f64s(vec![2, 1], &[1.0, -2.0]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..8], b"MXTENSOR");
        assert_eq!(b[8], 1);
        assert_eq!(b[9], 2);
        assert_eq!(&b[10..14], &2u32.to_le_bytes());
        assert_eq!(&b[14..18], &1u32.to_le_bytes());
        assert_eq!(&b[18..22], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 26);
    }

    #[test]
    fn rejects_wrong_dtype_and_truncation() {
        let t = Tensor::<f64>::from_f64s(vec![3], &[1.0, 2.0, 3.0]).unwrap();
        let b = encode(&t).unwrap();
        assert!(decode::<f32>(&b).is_err());
        assert!(decode::<f64>(&b[..b.len() - 1]).is_err());
        assert!(decode::<f64>(b"NOTATENSOR").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(shape in prop::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len).map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2)).collect();
            let t = Tensor::new(shape, data).unwrap();
            let back: Tensor<f64> = decode(&encode(&t).unwrap()).unwrap();
            prop_assert_eq!(
                t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(t.shape(), back.shape());
        }
    }
}
