//! Binary tag stream.
//!
//! ```text
//! header  16 bytes: "PQTG" | version u16 | reserved u16 = 0 | record_count u64
//! record  16 bytes: channel u16 | flags u16 | reserved u32 = 0 | timestamp_ps u64
//! ```
//! All integers little-endian. Records are sorted by `(timestamp, channel)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{TagRecord, FLAG_CROSSTALK, FLAG_DARK};

pub const MAGIC: [u8; 4] = *b"PQTG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;
const KNOWN_FLAGS: u16 = FLAG_DARK | FLAG_CROSSTALK;
const BUF: usize = 1 << 20;

fn header(count: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..].copy_from_slice(&count.to_le_bytes());
    h
}

#[inline]
pub fn encode(t: &TagRecord) -> [u8; RECORD_LEN] {
    let mut b = [0u8; RECORD_LEN];
    b[..2].copy_from_slice(&t.channel.to_le_bytes());
    b[2..4].copy_from_slice(&t.flags.to_le_bytes());
    b[8..].copy_from_slice(&t.time.to_le_bytes());
    b
}

#[inline]
fn decode(b: &[u8], index: u64) -> Result<TagRecord> {
    let channel = u16::from_le_bytes([b[0], b[1]]);
    let flags = u16::from_le_bytes([b[2], b[3]]);
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::Format(format!("record {index}: reserved flag bits set ({flags:#06x})")));
    }
    if b[4..8] != [0; 4] {
        return Err(Error::Format(format!("record {index}: reserved field is not zero")));
    }
    let time = u64::from_le_bytes(b[8..16].try_into().unwrap());
    Ok(TagRecord { channel, flags, time })
}

/// Streaming writer. The record count is patched into the header on
/// [`TagWriter::finish`].
pub struct TagWriter<W: Write + Seek> {
    inner: W,
    count: u64,
    last: Option<(u64, u16)>,
}

impl TagWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufWriter::with_capacity(BUF, File::create(path)?))
    }
}

impl<W: Write + Seek> TagWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        inner.write_all(&header(0))?;
        Ok(Self { inner, count: 0, last: None })
    }

    pub fn write(&mut self, t: &TagRecord) -> Result<()> {
        let key = t.key();
        if self.last.is_some_and(|k| k > key) {
            return Err(Error::Unsorted(format!(
                "record {} (t = {} ps, channel {}) precedes the previous record",
                self.count, t.time, t.channel
            )));
        }
        if t.flags & !KNOWN_FLAGS != 0 {
            return Err(Error::Format(format!("record {}: reserved flag bits set", self.count)));
        }
        self.inner.write_all(&encode(t))?;
        self.last = Some(key);
        self.count += 1;
        Ok(())
    }

    pub fn write_all(&mut self, tags: &[TagRecord]) -> Result<()> {
        tags.iter().try_for_each(|t| self.write(t))
    }

    /// Writes the final record count and returns the sink.
    pub fn finish(mut self) -> Result<W> {
        self.inner.seek(SeekFrom::Start(0))?;
        self.inner.write_all(&header(self.count))?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader yielding records in file order.
pub struct TagReader<R: Read> {
    inner: R,
    count: u64,
    read: u64,
    last: Option<(u64, u16)>,
    check_order: bool,
    buf: Vec<u8>,
    pos: usize,
    len: usize,
    done: bool,
}

impl TagReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::with_capacity(BUF, File::open(path)?))
    }
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut h = [0u8; HEADER_LEN];
        read_full(&mut inner, &mut h).and_then(|n| {
            if n < HEADER_LEN {
                Err(Error::Format(format!("file is {n} bytes, shorter than the {HEADER_LEN}-byte header")))
            } else {
                Ok(())
            }
        })?;
        if h[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:02x?}, expected \"PQTG\"", &h[..4])));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported tag file version {version}")));
        }
        if h[6..8] != [0; 2] {
            return Err(Error::Format("reserved header field is not zero".into()));
        }
        let count = u64::from_le_bytes(h[8..].try_into().unwrap());
        Ok(Self {
            inner,
            count,
            read: 0,
            last: None,
            check_order: true,
            buf: vec![0; 4096 * RECORD_LEN],
            pos: 0,
            len: 0,
            done: false,
        })
    }

    /// Disables the sort check, for callers that re-sort themselves.
    pub fn allow_unsorted(mut self) -> Self {
        self.check_order = false;
        self
    }

    /// Record count from the header.
    pub fn declared_len(&self) -> u64 {
        self.count
    }

    fn refill(&mut self) -> Result<()> {
        let left = self.count - self.read;
        let want = (left.min((self.buf.len() / RECORD_LEN) as u64) as usize) * RECORD_LEN;
        let n = read_full(&mut self.inner, &mut self.buf[..want])?;
        if n < want {
            let have = self.read + (n / RECORD_LEN) as u64;
            return Err(Error::Format(format!(
                "truncated body: header declares {} records, file holds {have}{}",
                self.count,
                if n % RECORD_LEN != 0 { " and a partial record" } else { "" }
            )));
        }
        self.pos = 0;
        self.len = n;
        Ok(())
    }

    fn next_record(&mut self) -> Result<Option<TagRecord>> {
        if self.read == self.count {
            if !self.done {
                self.done = true;
                let mut extra = [0u8; 1];
                if read_full(&mut self.inner, &mut extra)? > 0 {
                    return Err(Error::Format(format!(
                        "trailing bytes after the {} declared records",
                        self.count
                    )));
                }
            }
            return Ok(None);
        }
        if self.pos == self.len {
            self.refill()?;
        }
        let t = decode(&self.buf[self.pos..self.pos + RECORD_LEN], self.read)?;
        self.pos += RECORD_LEN;
        let key = t.key();
        if self.check_order && self.last.is_some_and(|k| k > key) {
            return Err(Error::Unsorted(format!(
                "record {} (t = {} ps, channel {}) precedes record {}; re-read with re-sorting enabled to repair",
                self.read,
                t.time,
                t.channel,
                self.read - 1
            )));
        }
        self.last = Some(key);
        self.read += 1;
        Ok(Some(t))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_record() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => None,
            Err(e) => {
                // stop after the first error
                self.read = self.count;
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}

pub fn write_tags(path: impl AsRef<Path>, tags: &[TagRecord]) -> Result<()> {
    let mut w = TagWriter::create(path)?;
    w.write_all(tags)?;
    w.finish()?;
    Ok(())
}

/// Reads a whole file. With `resort`, unsorted files are repaired with a
/// warning instead of rejected.
pub fn read_tags(path: impl AsRef<Path>, resort: bool) -> Result<Vec<TagRecord>> {
    let r = TagReader::open(path)?;
    let cap = r.declared_len().min(1 << 28) as usize;
    let mut out = Vec::with_capacity(cap);
    if !resort {
        for t in r {
            out.push(t?);
        }
        return Ok(out);
    }
    for t in r.allow_unsorted() {
        out.push(t?);
    }
    if out.windows(2).any(|w| w[0].key() > w[1].key()) {
        log::warn!("tag file is not sorted by (time, channel); re-sorting {} records", out.len());
        out.sort_by_key(TagRecord::key);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn to_bytes(tags: &[TagRecord]) -> Vec<u8> {
        let mut w = TagWriter::new(Cursor::new(Vec::new())).unwrap();
        w.write_all(tags).unwrap();
        w.finish().unwrap().into_inner()
    }

    fn from_bytes(b: &[u8]) -> Result<Vec<TagRecord>> {
        TagReader::new(b)?.collect()
    }

    #[test]
    fn empty_stream_is_header_only() {
        let b = to_bytes(&[]);
        assert_eq!(b.len(), 16);
        assert_eq!(&b[..4], b"PQTG");
        assert_eq!(b, [b'P', b'Q', b'T', b'G', 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(from_bytes(&b).unwrap().is_empty());
    }

    #[test]
    fn record_layout() {
        let b = to_bytes(&[TagRecord { channel: 0x0102, flags: 3, time: 0x0a0b0c0d }]);
        assert_eq!(b[8], 1);
        assert_eq!(&b[16..], &[2, 1, 3, 0, 0, 0, 0, 0, 0x0d, 0x0c, 0x0b, 0x0a, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = to_bytes(&[TagRecord::new(0, 1)]);
        b[0] = b'X';
        assert!(matches!(from_bytes(&b), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let b = to_bytes(&[TagRecord::new(0, 1), TagRecord::new(0, 2)]);
        assert!(matches!(from_bytes(&b[..b.len() - 3]), Err(Error::Format(m)) if m.contains("truncated")));
        assert!(matches!(from_bytes(&b[..10]), Err(Error::Format(_))));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(Error::Format(m)) if m.contains("trailing")));
    }

    #[test]
    fn unsorted_is_diagnosed_or_repaired() {
        let mut b = to_bytes(&[TagRecord::new(0, 5), TagRecord::new(0, 9)]);
        // swap the two timestamps in place
        b[24..32].copy_from_slice(&9u64.to_le_bytes());
        b[40..48].copy_from_slice(&5u64.to_le_bytes());
        assert!(matches!(from_bytes(&b), Err(Error::Unsorted(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pqtg");
        std::fs::write(&path, &b).unwrap();
        let fixed = read_tags(&path, true).unwrap();
        assert_eq!(fixed.iter().map(|t| t.time).collect::<Vec<_>>(), vec![5, 9]);
        assert!(read_tags(&path, false).is_err());
    }

    #[test]
    fn writer_rejects_unsorted() {
        let mut w = TagWriter::new(Cursor::new(Vec::new())).unwrap();
        w.write(&TagRecord::new(1, 10)).unwrap();
        assert!(w.write(&TagRecord::new(0, 10)).is_err());
    }

    #[test]
    fn reserved_bits_rejected() {
        let mut b = to_bytes(&[TagRecord::new(0, 1)]);
        b[18] = 0x80;
        assert!(from_bytes(&b).is_err());
        let mut b = to_bytes(&[TagRecord::new(0, 1)]);
        b[21] = 1;
        assert!(from_bytes(&b).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(raw in proptest::collection::vec((0u16..64, 0u16..4, 0u64..u64::MAX / 2), 0..300)) {
            let mut tags: Vec<TagRecord> = raw.into_iter().map(|(c, f, t)| TagRecord { channel: c, flags: f, time: t }).collect();
            tags.sort_by_key(TagRecord::key);
            let b = to_bytes(&tags);
            prop_assert_eq!(b.len(), 16 + 16 * tags.len());
            let back = from_bytes(&b).unwrap();
            prop_assert_eq!(&back, &tags);
            prop_assert_eq!(to_bytes(&back), b);
        }
    }
}
