//! The `FLD1` binary field format and a CSV import for small debugging fields.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FLD1" | version: u16 = 1 | d: u8 | reserved: u8 = 0 | n: u32 | dims: d x u64 | payload: f64 ...
//! ```
//!
//! The payload holds `n * prod(dims)` doubles in site-major order with the
//! components of each site contiguous.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldDims, MultiField};

pub const MAGIC: &[u8; 4] = b"FLD1";
pub const VERSION: u16 = 1;

const FIXED_HEADER: usize = 4 + 2 + 1 + 1 + 4;

/// Serializes a field to `FLD1` bytes.
pub fn encode_field(field: &MultiField) -> Vec<u8> {
    let dims = field.dims();
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * dims.d() + 8 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dims.d() as u8);
    out.push(0);
    out.extend_from_slice(&(dims.n() as u32).to_le_bytes());
    for &e in dims.dims() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses `FLD1` bytes.
pub fn decode_field(bytes: &[u8]) -> Result<MultiField> {
    if bytes.is_empty() {
        return Err(Error::Format("empty input".into()));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(Error::Format(format!("header truncated at {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"FLD1\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = bytes[6] as usize;
    if bytes[7] != 0 {
        return Err(Error::Format("reserved header byte must be zero".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::Format("header declares zero axes".into()));
    }
    let header_len = FIXED_HEADER + 8 * d;
    if bytes.len() < header_len {
        return Err(Error::Format("dimension table truncated".into()));
    }
    let mut ext = Vec::with_capacity(d);
    for chunk in bytes[FIXED_HEADER..header_len].chunks_exact(8) {
        let e = u64::from_le_bytes(chunk.try_into().unwrap());
        ext.push(usize::try_from(e).map_err(|_| Error::Dimension(format!("extent {e} too large")))?);
    }
    let dims = FieldDims::new(ext, n)?;
    let payload = &bytes[header_len..];
    let expected = (dims.len_values() as u64)
        .checked_mul(8)
        .ok_or_else(|| Error::Dimension("payload size overflows".into()))?;
    if payload.len() as u64 != expected {
        return Err(Error::Truncated { expected, found: payload.len() as u64 });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MultiField::new(dims, values)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<MultiField> {
    let bytes = std::fs::read(path)?;
    decode_field(&bytes)
}

/// Writes a field to `path` through a temporary file in the same directory
/// followed by a rename.
pub fn save_field(field: &MultiField, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_field(field))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads a field from CSV with one row per site.
///
/// The header names the coordinate columns `k1..kd` followed by the component
/// columns `c1..cn`; only `d <= 2` is accepted. Extents are inferred from the
/// largest coordinate on each axis and every site must appear exactly once.
pub fn import_csv(reader: impl std::io::Read) -> Result<MultiField> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let d = header.iter().take_while(|h| h.starts_with('k')).count();
    let n = header.len() - d;
    if d == 0 || d > 2 {
        return Err(Error::Format(format!("CSV import supports 1 or 2 coordinate columns, found {d}")));
    }
    if n == 0 || !header.iter().skip(d).all(|h| h.starts_with('c')) {
        return Err(Error::Format("expected component columns c1..cn after coordinates".into()));
    }

    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != d + n {
            return Err(Error::Format(format!("row {} has {} columns, expected {}", line + 1, rec.len(), d + n)));
        }
        let coords = rec
            .iter()
            .take(d)
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", line + 1)))?;
        let vals = rec
            .iter()
            .skip(d)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", line + 1)))?;
        rows.push((coords, vals));
    }
    if rows.is_empty() {
        return Err(Error::Format("CSV has no data rows".into()));
    }
    let mut ext = vec![0usize; d];
    for (coords, _) in &rows {
        for (e, &k) in ext.iter_mut().zip(coords) {
            *e = (*e).max(k + 1);
        }
    }
    let dims = FieldDims::new(ext, n)?;
    if rows.len() != dims.sites() {
        return Err(Error::Format(format!(
            "{} rows for a {:?} lattice of {} sites",
            rows.len(),
            dims.dims(),
            dims.sites()
        )));
    }
    let mut values = vec![0.0; dims.len_values()];
    let mut seen = vec![false; dims.sites()];
    for (coords, vals) in rows {
        let s = dims.site_index(&coords).expect("extent covers every coordinate");
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::Format(format!("site {coords:?} listed twice")));
        }
        values[s * n..(s + 1) * n].copy_from_slice(&vals);
    }
    MultiField::new(dims, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_is_format_error() {
        assert!(matches!(decode_field(&[]), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let f = MultiField::zeros(FieldDims::new(vec![2], 1).unwrap());
        let mut bytes = encode_field(&f);
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_field(&f);
        bytes[4] = 2;
        assert!(matches!(decode_field(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn header_layout_is_exact() {
        let f = MultiField::new(FieldDims::new(vec![2, 3], 2).unwrap(), (0..12).map(f64::from).collect())
            .unwrap();
        let bytes = encode_field(&f);
        assert_eq!(&bytes[..4], b"FLD1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 2);
        assert_eq!(bytes[7], 0);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 12 * 8);
        assert_eq!(&bytes[28 + 8..28 + 16], &1.0f64.to_le_bytes());
    }

    #[test]
    fn fifty_cubed_fixture_and_one_short() {
        let dims = FieldDims::new(vec![50, 50, 50], 3).unwrap();
        let f = MultiField::from_parts_unchecked(dims, (0..375_000).map(|i| i as f64 * 1e-3).collect());
        let bytes = encode_field(&f);
        assert_eq!(decode_field(&bytes).unwrap(), f);
        let short = &bytes[..bytes.len() - 8];
        assert!(matches!(
            decode_field(short),
            Err(Error::Truncated { expected: 3_000_000, found: 2_999_992 })
        ));
    }

    #[test]
    fn non_finite_payload_is_data_error() {
        let f = MultiField::zeros(FieldDims::new(vec![2], 1).unwrap());
        let mut bytes = encode_field(&f);
        let at = bytes.len() - 8;
        bytes[at..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode_field(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn save_and_load_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        let f = MultiField::new(FieldDims::new(vec![3], 2).unwrap(), vec![0.1, -2.5, 3.0, 1e-300, 7.0, -0.0])
            .unwrap();
        save_field(&f, &path).unwrap();
        let g = load_field(&path).unwrap();
        let a: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = g.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(f.dims(), g.dims());
    }

    #[test]
    fn csv_import_two_dimensional() {
        let text = "k1,k2,c1,c2\n0,0,1,10\n0,1,2,20\n1,1,4,40\n1,0,3,30\n";
        let f = import_csv(text.as_bytes()).unwrap();
        assert_eq!(f.dims().dims(), &[2, 2]);
        assert_eq!(f.values(), &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
    }

    #[test]
    fn csv_import_rejects_gaps_and_duplicates() {
        assert!(import_csv("k1,c1\n0,1\n2,3\n".as_bytes()).is_err());
        assert!(import_csv("k1,c1\n0,1\n0,3\n".as_bytes()).is_err());
        assert!(import_csv("k1,k2,k3,c1\n0,0,0,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            ext in prop::collection::vec(1usize..6, 1..4),
            n in 1usize..4,
            bits in prop::collection::vec(any::<f64>(), 0..600),
        ) {
            let dims = FieldDims::new(ext, n).unwrap();
            let values: Vec<f64> = (0..dims.len_values())
                .map(|i| bits.get(i).copied().filter(|v| v.is_finite()).unwrap_or(i as f64))
                .collect();
            let f = MultiField::new(dims, values).unwrap();
            let bytes = encode_field(&f);
            let g = decode_field(&bytes).unwrap();
            prop_assert_eq!(encode_field(&g), bytes);
        }
    }
}
