//! Binary codecs for bag files and parameter checkpoints.
//!
//! Both formats are little-endian with a 4-byte magic and a u32 version.
//!
//! Bag file (`GMBG`, version 1):
//! `magic | version u32 | n u32 | m u32 | label i32 | id_len u16 | id bytes |
//! n*m f64 row-major`
//!
//! Checkpoint (`GMCK`, version 1):
//! `magic | version u32 | config_len u32 | config bytes (opaque JSON) | then
//! per parameter: name_len u16 | name | rows u32 | cols u32 | rows*cols f64`,
//! parameters in the model's canonical visit order, until end of file.
//!
//! Encoding is deterministic, so equal inputs produce byte-identical files;
//! decoding fails with the byte offset where the input stopped making sense
//! and never returns a partial object.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bag::{FeatureBag, GroupLayout};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BAG_MAGIC: &[u8; 4] = b"GMBG";
pub const BAG_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::format(
                self.pos,
                format!("truncated: needed {len} bytes for {what}, {} left", self.remaining()),
            ));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        let b = self.take(4, what)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_block(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        core::str::from_utf8(bytes)
            .map(String::from)
            .map_err(|_| Error::format(at, format!("{what} is not valid UTF-8")))
    }
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len: u16 = s
        .len()
        .try_into()
        .map_err(|_| Error::parameter(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Serializes a bag. Fails on non-finite values, so no unreadable file is
/// ever produced.
pub fn encode_bag(bag: &FeatureBag) -> Result<Vec<u8>> {
    if !bag.features.is_finite() {
        return Err(Error::numeric(format!(
            "bag `{}` has non-finite values and cannot be encoded",
            bag.bag_id
        )));
    }
    let n: u32 = bag
        .features
        .rows()
        .try_into()
        .map_err(|_| Error::parameter("bag row count exceeds u32"))?;
    let m: u32 = bag
        .features
        .cols()
        .try_into()
        .map_err(|_| Error::parameter("bag column count exceeds u32"))?;
    let label: i32 = bag
        .label
        .try_into()
        .map_err(|_| Error::parameter("label exceeds i32"))?;
    let mut out = Vec::with_capacity(22 + bag.bag_id.len() + bag.features.len() * 8);
    out.extend_from_slice(BAG_MAGIC);
    out.extend_from_slice(&BAG_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    push_str(&mut out, &bag.bag_id)?;
    push_f64s(&mut out, bag.features.data());
    Ok(out)
}

/// Header fields of an encoded bag, readable without knowing the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagHeader {
    pub instances: usize,
    pub width: usize,
    pub label: usize,
    pub bag_id: String,
    /// Offset of the first feature byte.
    pub payload_offset: usize,
}

pub fn decode_bag_header(bytes: &[u8]) -> Result<BagHeader> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != BAG_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}, expected {BAG_MAGIC:02x?}")));
    }
    let version = r.u32("version")?;
    if version != BAG_VERSION {
        return Err(Error::format(4, format!("unsupported bag version {version}")));
    }
    let n = r.u32("instance count")? as u64;
    let m = r.u32("feature width")? as u64;
    let label_at = r.pos;
    let label = r.i32("label")?;
    if label < 0 {
        return Err(Error::format(label_at, format!("negative label {label}")));
    }
    let element_count = n
        .checked_mul(m)
        .filter(|&c| usize::try_from(c).is_ok())
        .ok_or_else(|| Error::format(8, format!("dimension overflow: {n} x {m}")))?;
    let bag_id = r.string("bag id")?;
    let expected = element_count as usize * 8;
    if r.remaining() != expected {
        return Err(Error::format(
            r.pos,
            format!(
                "payload of {} bytes does not match {n} x {m} f64 values ({expected} bytes)",
                r.remaining()
            ),
        ));
    }
    Ok(BagHeader {
        instances: n as usize,
        width: m as usize,
        label: label as usize,
        bag_id,
        payload_offset: r.pos,
    })
}

/// Decodes a bag against the layout it is expected to follow.
pub fn decode_bag(bytes: &[u8], layout: &GroupLayout) -> Result<FeatureBag> {
    let header = decode_bag_header(bytes)?;
    if header.width != layout.total_width() {
        return Err(Error::dimension(
            "decode_bag",
            format!("{} feature columns (layout width)", layout.total_width()),
            format!("{} columns", header.width),
        ));
    }
    let mut r = Reader::new(bytes);
    r.pos = header.payload_offset;
    let data = r.f64_block(header.instances * header.width, "feature payload")?;
    let features = Matrix::from_vec(header.instances, header.width, data)?;
    FeatureBag::new(header.bag_id, features, header.label, layout.clone())
}

/// Serializes named parameter matrices after an opaque config blob.
pub fn encode_checkpoint(config_blob: &[u8], params: &[(String, Matrix)]) -> Result<Vec<u8>> {
    let config_len: u32 = config_blob
        .len()
        .try_into()
        .map_err(|_| Error::parameter("config blob exceeds u32 length"))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_len.to_le_bytes());
    out.extend_from_slice(config_blob);
    for (name, value) in params {
        push_str(&mut out, name)?;
        let rows: u32 = value
            .rows()
            .try_into()
            .map_err(|_| Error::parameter("parameter rows exceed u32"))?;
        let cols: u32 = value
            .cols()
            .try_into()
            .map_err(|_| Error::parameter("parameter cols exceed u32"))?;
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        push_f64s(&mut out, value.data());
    }
    Ok(out)
}

/// Returns the config blob and the named parameter matrices in file order.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Vec<u8>, Vec<(String, Matrix)>)> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02x?}, expected {CHECKPOINT_MAGIC:02x?}"),
        ));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let config_len = r.u32("config length")? as usize;
    let config = r.take(config_len, "config blob")?.to_vec();
    let mut params = Vec::new();
    while r.remaining() > 0 {
        let name = r.string("parameter name")?;
        let shape_at = r.pos;
        let rows = r.u32("parameter rows")? as u64;
        let cols = r.u32("parameter cols")? as u64;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| usize::try_from(c).is_ok())
            .ok_or_else(|| Error::format(shape_at, format!("dimension overflow: {rows} x {cols}")))?;
        let data = r.f64_block(count as usize, "parameter values")?;
        params.push((name, Matrix::from_vec(rows as usize, cols as usize, data)?));
    }
    Ok((config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn one_by_one_bag_roundtrips() {
        let layout = GroupLayout::with_dims(vec![1]).unwrap();
        let bag = FeatureBag::new("tiny".to_string(), Matrix::zeros(1, 1), 0, layout.clone()).unwrap();
        let bytes = encode_bag(&bag).unwrap();
        let back = decode_bag(&bytes, &layout).unwrap();
        assert_eq!(back, bag);
    }

    #[test]
    fn large_random_bag_roundtrips_bit_exactly() {
        let layout = GroupLayout::with_dims(vec![768, 1024]).unwrap();
        let mut rng = RngStream::new(10);
        let features = Matrix::from_fn(200, 1792, |_, _| rng.normal());
        let bag = FeatureBag::new("slide_0001".to_string(), features, 4, layout.clone()).unwrap();
        let bytes = encode_bag(&bag).unwrap();
        let back = decode_bag(&bytes, &layout).unwrap();
        assert_eq!(back.bag_id, bag.bag_id);
        assert_eq!(back.label, bag.label);
        // bit-exact: compare the raw bit patterns, then the re-encoded bytes
        for (a, b) in back.features.data().iter().zip(bag.features.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(encode_bag(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let layout = GroupLayout::with_dims(vec![1]).unwrap();
        let bag = FeatureBag::new("x".to_string(), Matrix::zeros(1, 1), 0, layout.clone()).unwrap();
        let mut bytes = encode_bag(&bag).unwrap();
        bytes[0] = b'X';
        let err = decode_bag(&bytes, &layout).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let layout = GroupLayout::with_dims(vec![2]).unwrap();
        let features = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bag = FeatureBag::new("trunc".to_string(), features, 1, layout.clone()).unwrap();
        let bytes = encode_bag(&bag).unwrap();
        let cut = &bytes[..bytes.len() - 5];
        let err = decode_bag(cut, &layout).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err:?}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let layout = GroupLayout::with_dims(vec![1]).unwrap();
        let bag = FeatureBag::new("t".to_string(), Matrix::zeros(1, 1), 0, layout.clone()).unwrap();
        let mut bytes = encode_bag(&bag).unwrap();
        bytes.push(0);
        assert!(decode_bag(&bytes, &layout).is_err());
    }

    #[test]
    fn non_finite_bag_refuses_to_encode() {
        let layout = GroupLayout::with_dims(vec![1]).unwrap();
        let mut bag = FeatureBag::new("n".to_string(), Matrix::zeros(1, 1), 0, layout).unwrap();
        bag.features.set(0, 0, f64::INFINITY);
        assert!(encode_bag(&bag).is_err());
    }

    #[test]
    fn checkpoint_roundtrips_with_config_blob() {
        let config = br#"{"arch":"gasmil"}"#;
        let params = vec![
            ("gfeb0.fc1.weight".to_string(), Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64)),
            ("head.fc2.bias".to_string(), Matrix::row_vector(vec![0.5])),
        ];
        let bytes = encode_checkpoint(config, &params).unwrap();
        let (blob, decoded) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(blob, config);
        assert_eq!(decoded, params);
    }

    #[test]
    fn checkpoint_magic_and_truncation_errors() {
        let bytes = encode_checkpoint(b"{}", &[]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        let cut = &bytes[..bytes.len() - 1];
        assert!(decode_checkpoint(cut).is_err());
    }
}
