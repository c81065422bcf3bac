//! Binary tensor container.
//!
//! ```text
//! "TSE1" | rank: u32 (= 4) | n, c, h, w: u32 | n·c·h·w × f32
//! ```
//!
//! Everything little-endian. Weight files are a `u32` record count followed
//! by that many tensor records in `w1, b1, w2, b2` order; bias vectors are
//! stored as `(1, len, 1, 1)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::excite::ExciteWeights;
use crate::tensor::Tensor4D;

pub const MAGIC: &[u8; 4] = b"TSE1";
const HEADER_LEN: usize = 4 + 4 + 16;

pub fn encode_tensor(x: &Tensor4D, out: &mut Vec<u8>) -> Result<()> {
    out.reserve(HEADER_LEN + 4 * x.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in x.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn read_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("slice of length 4")))
        .ok_or(Error::Truncated {
            expected: at + 4,
            found: buf.len(),
        })
}

/// Decodes one record from the front of `buf`, returning it with the number
/// of bytes consumed.
pub fn decode_tensor(buf: &[u8]) -> Result<(Tensor4D, usize)> {
    match buf.get(..4) {
        Some(m) if m == MAGIC => {}
        Some(m) => return Err(Error::Format(format!("bad magic {m:02x?}, expected \"TSE1\""))),
        None => {
            return Err(Error::Truncated {
                expected: 4,
                found: buf.len(),
            })
        }
    }
    let rank = read_u32(buf, 4)?;
    if rank != 4 {
        return Err(Error::Format(format!("rank {rank} unsupported, expected 4")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = read_u32(buf, 8 + 4 * i)? as usize;
    }
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero dimension in {dims:?}")));
    }
    let payload = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let end = HEADER_LEN
        .checked_add(payload)
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    if buf.len() < end {
        return Err(Error::Truncated {
            expected: end,
            found: buf.len(),
        });
    }
    let data = buf[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of length 4")))
        .collect();
    Ok((Tensor4D::new(dims, data)?, end))
}

pub fn write_tensor(x: &Tensor4D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode_tensor(x, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor4D> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (x, used) = decode_tensor(&buf)?;
    if used != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor",
            buf.len() - used
        )));
    }
    Ok(x)
}

pub fn encode_weights(w: &ExciteWeights) -> Result<Vec<u8>> {
    let (c, m) = (w.channels(), w.reduced());
    let (kx, ky) = w.kernel();
    let records = [
        Tensor4D::new([m, c, kx, ky], w.reduce().weight().to_vec())?,
        Tensor4D::new([1, m, 1, 1], w.reduce().bias().to_vec())?,
        Tensor4D::new([c, m, kx, ky], w.expand().weight().to_vec())?,
        Tensor4D::new([1, c, 1, 1], w.expand().bias().to_vec())?,
    ];
    let mut buf = Vec::new();
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in &records {
        encode_tensor(r, &mut buf)?;
    }
    Ok(buf)
}

pub fn decode_weights(buf: &[u8]) -> Result<ExciteWeights> {
    let count = read_u32(buf, 0)?;
    if count != 4 {
        return Err(Error::Format(format!("weight file has {count} records, expected 4")));
    }
    let mut at = 4;
    let mut records = Vec::with_capacity(4);
    for _ in 0..4 {
        let (t, used) = decode_tensor(&buf[at..])?;
        at += used;
        records.push(t);
    }
    if at != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after weights",
            buf.len() - at
        )));
    }
    let [w1, b1, w2, b2]: [Tensor4D; 4] = records.try_into().expect("four records");
    let [m, c, kx, ky] = w1.dims();
    if b1.dims() != [1, m, 1, 1] || w2.dims() != [c, m, kx, ky] || b2.dims() != [1, c, 1, 1] {
        return Err(Error::Format(format!(
            "inconsistent weight records: w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
            w1.dims(),
            b1.dims(),
            w2.dims(),
            b2.dims()
        )));
    }
    ExciteWeights::from_parts(
        c,
        m,
        (kx, ky),
        w1.into_data(),
        b1.into_data(),
        w2.into_data(),
        b2.into_data(),
    )
}

pub fn write_weights(w: &ExciteWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w)?).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<ExciteWeights> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excite::ExciteConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Tensor4D {
        Tensor4D::from_fn([1, 2, 3, 1], |[_, c, i, _]| (c * 3 + i) as f32 - 2.5).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"TSE1");
        assert_eq!(&buf[4..8], &[4, 0, 0, 0]);
        assert_eq!(&buf[8..24], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&buf[24..28], &(-2.5f32).to_le_bytes());
        assert_eq!(buf.len(), 24 + 6 * 4);
    }

    #[test]
    fn corrupted_magic() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(decode_tensor(&buf), Err(Error::Format(_))));
    }

    #[test]
    fn empty_payload_with_dims() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        buf.truncate(HEADER_LEN);
        assert!(matches!(decode_tensor(&buf), Err(Error::Truncated { .. })));
        buf.truncate(10);
        assert!(matches!(decode_tensor(&buf), Err(Error::Truncated { .. })));
    }

    #[test]
    fn dim_overflow_and_bad_rank() {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&4u32.to_le_bytes());
        for _ in 0..4 {
            buf.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_tensor(&buf).is_err());

        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode_tensor(&buf), Err(Error::Format(_))));
    }

    #[test]
    fn weights_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let conf: ExciteConfig = "c3x1:r2".parse().unwrap();
        let w = ExciteWeights::kaiming_uniform(6, &conf, &mut rng).unwrap();
        let buf = encode_weights(&w).unwrap();
        assert_eq!(&buf[..4], &4u32.to_le_bytes());
        assert_eq!(decode_weights(&buf).unwrap(), w);
        assert!(decode_weights(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(
            dims in (1usize..4, 1usize..5, 1usize..7, 1usize..7),
            seed in any::<u64>(),
        ) {
            let dims = [dims.0, dims.1, dims.2, dims.3];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor4D::random_normal(dims, 3.0, &mut rng).unwrap();
            let mut buf = Vec::new();
            encode_tensor(&x, &mut buf).unwrap();
            let (y, used) = decode_tensor(&buf).unwrap();
            prop_assert_eq!(used, buf.len());
            let a: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(x.dims(), y.dims());
        }
    }
}
