use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::dsp::BlockDft;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AIRS";
const VERSION: u16 = 1;

/// `K` stacked time-domain MISO AIRs of length `Q = L * B`, channel-major.
///
/// On disk (little endian): `"AIRS"`, `u16` version = 1, `u32 K`, `u16 B`,
/// `u32 L`, `u32 fs`, `u64` provenance seed, then `K * B * L` `f64` values
/// ordered by (sample, channel, tap).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    channels: usize,
    taps: usize,
    sample_rate: f64,
    seed: u64,
    data: Vec<f64>,
}

impl TrainingSet {
    pub fn new(channels: usize, taps: usize, sample_rate: f64, seed: u64, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("training set must contain at least one vector"));
        }
        if channels == 0 || taps == 0 {
            return Err(Error::invalid("channels and taps must be >= 1"));
        }
        let q = channels * taps;
        let mut data = Vec::with_capacity(q * vectors.len());
        for v in &vectors {
            if v.len() != q {
                return Err(Error::LengthMismatch { expected: q, actual: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("training vectors must be finite"));
            }
            data.extend_from_slice(v);
        }
        Ok(Self { channels, taps, sample_rate, seed, data })
    }

    /// Number of vectors `K`.
    pub fn len(&self) -> usize {
        self.data.len() / self.air_len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn air_len(&self) -> usize {
        self.channels * self.taps
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let q = self.air_len();
        &self.data[k * q..(k + 1) * q]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.air_len())
    }

    pub fn as_rows(&self) -> Vec<&[f64]> {
        self.iter().collect()
    }

    /// The first `count` vectors.
    pub fn head(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::invalid(format!("cannot take {count} of {} vectors", self.len())));
        }
        Ok(Self { data: self.data[..count * self.air_len()].to_vec(), ..self.clone() })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let fs = self.sample_rate;
        if fs.fract() != 0.0 || fs <= 0.0 || fs > u32::MAX as f64 {
            return Err(Error::Format(format!("sample rate {fs} is not representable as u32")));
        }
        let k = u32::try_from(self.len()).map_err(|_| Error::Format("too many vectors".into()))?;
        let b = u16::try_from(self.channels).map_err(|_| Error::Format("too many channels".into()))?;
        let l = u32::try_from(self.taps).map_err(|_| Error::Format("too many taps".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&k.to_le_bytes())?;
        w.write_all(&b.to_le_bytes())?;
        w.write_all(&l.to_le_bytes())?;
        w.write_all(&(fs as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let k = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let b = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let l = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let fs = u32::from_le_bytes(read_array(&mut r)?);
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        if k == 0 || b == 0 || l == 0 || fs == 0 {
            return Err(Error::Format("K, B, L and fs must be nonzero".into()));
        }
        let n = k
            .checked_mul(b)
            .and_then(|v| v.checked_mul(l))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite sample".into()));
        }
        Ok(Self { channels: b, taps: l, sample_rate: fs as f64, seed, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

/// DFT-domain images `F Q2 w` of every training vector, stacked per channel.
#[derive(Debug, Clone)]
pub struct AtfBank {
    atf_len: usize,
    data: Vec<Complex64>,
}

impl AtfBank {
    pub fn new(set: &TrainingSet, ops: &BlockDft) -> Result<Self> {
        let frame = ops.frame();
        if frame.channels != set.channels() || frame.filter_len != set.taps() {
            return Err(Error::invalid("training set does not match the frame configuration"));
        }
        let atf_len = frame.atf_len();
        let mut data = Vec::with_capacity(atf_len * set.len());
        for v in set.iter() {
            for ch in v.chunks_exact(set.taps()) {
                data.extend(ops.embed_filter(ch)?);
            }
        }
        Ok(Self { atf_len, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.atf_len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn atf(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.atf_len..(k + 1) * self.atf_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> TrainingSet {
        TrainingSet::new(2, 3, 8000.0, 42, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5; 6]]).unwrap()
    }

    #[test]
    fn header_layout_is_frozen() {
        let mut buf = Vec::new();
        small().write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AIRS");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        assert_eq!(&buf[10..12], &2u16.to_le_bytes());
        assert_eq!(&buf[12..16], &3u32.to_le_bytes());
        assert_eq!(&buf[16..20], &8000u32.to_le_bytes());
        assert_eq!(&buf[20..28], &42u64.to_le_bytes());
        assert_eq!(buf.len(), 28 + 12 * 8);
        assert_eq!(&buf[28..36], &1.0f64.to_le_bytes());
        assert_eq!(&buf[36 + 8..52], &3.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_input() {
        let mut buf = Vec::new();
        small().write_to(&mut buf).unwrap();
        assert!(matches!(TrainingSet::read_from(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(TrainingSet::read_from(&extra[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(TrainingSet::read_from(&bad[..]), Err(Error::Format(_))));
        let mut ver = buf;
        ver[4] = 2;
        assert!(matches!(TrainingSet::read_from(&ver[..]), Err(Error::Format(_))));
    }

    #[test]
    fn constructor_checks() {
        assert!(TrainingSet::new(2, 3, 8000.0, 0, vec![]).is_err());
        assert!(TrainingSet::new(2, 3, 8000.0, 0, vec![vec![0.0; 5]]).is_err());
        assert!(TrainingSet::new(1, 1, 8000.0, 0, vec![vec![f64::NAN]]).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(k in 1usize..5, b in 1usize..3, l in 1usize..6, seed: u64,
                             vals in proptest::collection::vec(-1e3f64..1e3, 60)) {
            let vectors: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..b * l).map(|j| vals[(i * b * l + j) % vals.len()]).collect())
                .collect();
            let set = TrainingSet::new(b, l, 16000.0, seed, vectors).unwrap();
            let mut buf = Vec::new();
            set.write_to(&mut buf).unwrap();
            prop_assert_eq!(TrainingSet::read_from(&buf[..]).unwrap(), set);
        }
    }
}
