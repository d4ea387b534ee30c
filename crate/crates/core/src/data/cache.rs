//! Binary cache of encoded spike trains.
//!
//! ```text
//! "SPKC"  u32 version  f64 dt_ms  u32 n_steps  u32 n_samples
//! per sample:  u32 label  u32 n_trains
//!   per train: leb128 n_spikes, then leb128 gaps between successive steps
//!              (the first gap is measured from step 0)
//! ```
//! All fixed-width fields are little-endian.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spike::TimeGrid;

pub const CACHE_MAGIC: &[u8; 4] = b"SPKC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedSample {
    pub label: u32,
    pub steps: Vec<Vec<u32>>,
}

fn put_leb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::data("spike cache: truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn leb(&mut self) -> Result<u32> {
        let mut v: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v).map_err(|_| Error::data("spike cache: varint overflow"));
            }
        }
        Err(Error::data("spike cache: varint too long"))
    }
}

/// Streams samples into a cache file whose sample count is fixed up front.
pub struct CacheWriter {
    out: BufWriter<std::fs::File>,
    expected: usize,
    written: usize,
    buf: Vec<u8>,
}

impl CacheWriter {
    pub fn create(path: &Path, grid: &TimeGrid, n_samples: usize) -> Result<Self> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&grid.dt_ms().to_le_bytes())?;
        out.write_all(&(grid.n_steps() as u32).to_le_bytes())?;
        out.write_all(&(n_samples as u32).to_le_bytes())?;
        Ok(Self {
            out,
            expected: n_samples,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn push(&mut self, sample: &CachedSample) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::data("spike cache: more samples than declared"));
        }
        let out = &mut self.buf;
        out.clear();
        out.extend_from_slice(&sample.label.to_le_bytes());
        out.extend_from_slice(&(sample.steps.len() as u32).to_le_bytes());
        for train in &sample.steps {
            put_leb(out, train.len() as u32);
            let mut prev = 0;
            for &st in train {
                if st < prev {
                    return Err(Error::data("spike cache: steps must be ascending"));
                }
                put_leb(out, st - prev);
                prev = st;
            }
        }
        self.out.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::data(format!(
                "spike cache: declared {} samples, wrote {}",
                self.expected, self.written
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_cache(path: &Path, grid: &TimeGrid, samples: &[CachedSample]) -> Result<()> {
    let mut w = CacheWriter::create(path, grid, samples.len())?;
    for s in samples {
        w.push(s)?;
    }
    w.finish()
}

/// Returns the grid the cache was written for and its samples.
pub fn read_cache(path: &Path) -> Result<(TimeGrid, Vec<CachedSample>)> {
    let mut buf = Vec::new();
    BufReader::new(std::fs::File::open(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?)
        .read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != CACHE_MAGIC {
        return Err(Error::data("spike cache: bad magic"));
    }
    let version = c.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::data(format!("spike cache: unsupported version {version}")));
    }
    let dt = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let n_steps = c.u32()?;
    let grid = TimeGrid::new(dt * n_steps as f64, dt).map_err(|e| Error::data(e.to_string()))?;
    let n = c.u32()? as usize;
    let mut samples = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let label = c.u32()?;
        let n_trains = c.u32()? as usize;
        let mut steps = Vec::with_capacity(n_trains.min(1 << 20));
        for _ in 0..n_trains {
            let k = c.leb()? as usize;
            let mut train = Vec::with_capacity(k.min(n_steps as usize));
            let mut cur = 0u32;
            for _ in 0..k {
                cur = cur.checked_add(c.leb()?).ok_or_else(|| Error::data("spike cache: step overflow"))?;
                if cur >= n_steps {
                    return Err(Error::data("spike cache: step outside grid"));
                }
                train.push(cur);
            }
            steps.push(train);
        }
        samples.push(CachedSample { label, steps });
    }
    if c.pos != buf.len() {
        return Err(Error::data("spike cache: trailing bytes"));
    }
    Ok((grid, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leb_encoding() {
        let mut v = Vec::new();
        put_leb(&mut v, 300);
        assert_eq!(v, vec![0xac, 0x02]);
        let mut c = Cursor { buf: &v, pos: 0 };
        assert_eq!(c.leb().unwrap(), 300);
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.spkc");
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(read_cache(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip(samples in prop::collection::vec(
            (0u32..47, prop::collection::vec(prop::collection::btree_set(0u32..500, 0..20), 0..6)), 0..5)) {
            let grid = TimeGrid::nmnist();
            let samples: Vec<CachedSample> = samples
                .into_iter()
                .map(|(label, trains)| CachedSample { label, steps: trains.into_iter().map(|s| s.into_iter().collect()).collect() })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c.spkc");
            write_cache(&p, &grid, &samples).unwrap();
            let (g, back) = read_cache(&p).unwrap();
            prop_assert_eq!(g.n_steps(), grid.n_steps());
            prop_assert_eq!(back, samples);
        }
    }
}
