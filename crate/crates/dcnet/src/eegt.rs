//! Binary trial files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EEGT"  version:u32  m:u32  C:u32  T:u32  n_classes:u32
//! labels: m x u16
//! data:   m x C x T x f32   (trial, channel, time)
//! pairs:u32  then per pair  key_len:u32 key  value_len:u32 value   (UTF-8)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use dcnet_core::data::TrialSet;

use crate::error::{CliError, FormatError, Result};
use crate::io::{read_file, write_file, Cursor};

pub const MAGIC: &[u8; 4] = b"EEGT";
pub const VERSION: u32 = 1;

pub fn encode(set: &TrialSet) -> std::result::Result<Vec<u8>, FormatError> {
    if set.n_classes() > usize::from(u16::MAX) + 1 {
        return Err(FormatError::Invalid(format!("{} classes do not fit 16-bit labels", set.n_classes())));
    }
    let dims = [set.len(), set.channels(), set.samples(), set.n_classes()];
    let mut out = Vec::with_capacity(24 + set.len() * 2 + set.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| FormatError::Invalid(format!("dimension {d} exceeds 32 bits")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &l in set.labels() {
        out.extend_from_slice(&(l as u16).to_le_bytes());
    }
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(set.metadata.len() as u32).to_le_bytes());
    for (k, v) in &set.metadata {
        for s in [k, v] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<TrialSet, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(MAGIC)?;
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version { expected: VERSION, found: version });
    }
    let m = c.u32("header")? as usize;
    let channels = c.u32("header")? as usize;
    let samples = c.u32("header")? as usize;
    let n_classes = c.u32("header")? as usize;
    let labels_raw = c.take(m.checked_mul(2).ok_or(FormatError::Truncated { what: "labels" })?, "labels")?;
    let labels: Vec<usize> = labels_raw.chunks_exact(2).map(|b| usize::from(u16::from_le_bytes([b[0], b[1]]))).collect();
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(FormatError::Invalid(format!("label {l} out of range for {n_classes} classes")));
    }
    let count =
        m.checked_mul(channels).and_then(|v| v.checked_mul(samples)).and_then(|v| v.checked_mul(4)).ok_or(FormatError::Truncated { what: "trial data" })?;
    let data: Vec<f32> = c.take(count, "trial data")?.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let pairs = c.u32("metadata")?;
    let mut metadata = BTreeMap::new();
    for _ in 0..pairs {
        let k = c.string("metadata")?;
        let v = c.string("metadata")?;
        metadata.insert(k, v);
    }
    c.finish()?;
    let mut set = TrialSet::new(channels, samples, n_classes, data, labels).map_err(|e| FormatError::Invalid(e.to_string()))?;
    set.metadata = metadata;
    Ok(set)
}

pub fn save_trials(set: &TrialSet, path: &Path) -> Result<()> {
    let bytes = encode(set).map_err(|e| CliError::format(path, e))?;
    write_file(path, &bytes)
}

pub fn load_trials(path: &Path) -> Result<TrialSet> {
    let bytes = read_file(path)?;
    decode(&bytes).map_err(|e| CliError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcnet_core::data::{synth, SynthSpec};

    #[test]
    fn hex_layout_of_a_tiny_set() {
        let mut set = TrialSet::new(1, 2, 2, vec![1.0, -2.0], vec![1]).unwrap();
        set.metadata.insert("s".into(), "1".into());
        let bytes = encode(&set).unwrap();
        let expected: Vec<u8> = [
            &b"EEGT"[..],
            &[1, 0, 0, 0],
            &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
            &[1, 0],
            &[0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0],
            &[1, 0, 0, 0, 1, 0, 0, 0, b's', 1, 0, 0, 0, b'1'],
        ]
        .concat();
        assert_eq!(bytes, expected);
        assert_eq!(decode(&bytes).unwrap(), set);
    }

    #[test]
    fn rejects_damage() {
        let set = synth(&SynthSpec::new(4, 2, 8, 2, 1.0, 0)).unwrap();
        let bytes = encode(&set).unwrap();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bad), Err(FormatError::Magic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(FormatError::Version { found: 2, .. })));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(FormatError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(FormatError::Trailing(1))));
        let mut label = bytes;
        label[24] = 9;
        assert!(matches!(decode(&label), Err(FormatError::Invalid(_))));
    }
}
