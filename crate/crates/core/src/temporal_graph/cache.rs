//! Binary event cache.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      5 bytes  "TGEV1"
//! version    u16      1
//! flags      u8       bit0 directed, bit1 labelled
//! num_nodes  u64
//! feat_dim   u32
//! num_events u64
//! raw ids    num_nodes x (u64 id, u8 item)
//! events     num_events x (u32 src, u32 dst, f64 t, u8 label [0|1|255], feat_dim x f64)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Event, EventStream, RawNode};
use crate::error::{create_file, open_file, Error, Result};

pub const CACHE_MAGIC: &[u8; 5] = b"TGEV1";
const VERSION: u16 = 1;
const NO_LABEL: u8 = 255;

pub fn write_cache(stream: &EventStream, mut out: impl Write) -> Result<()> {
    let labelled = stream.has_labels();
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let flags = u8::from(stream.directed()) | (u8::from(labelled) << 1);
    out.write_all(&[flags])?;
    out.write_all(&(stream.num_nodes() as u64).to_le_bytes())?;
    out.write_all(&(stream.feat_dim() as u32).to_le_bytes())?;
    out.write_all(&(stream.len() as u64).to_le_bytes())?;
    for raw in stream.raw_ids() {
        out.write_all(&raw.id.to_le_bytes())?;
        out.write_all(&[u8::from(raw.item)])?;
    }
    for (i, ev) in stream.events().iter().enumerate() {
        out.write_all(&ev.src.to_le_bytes())?;
        out.write_all(&ev.dst.to_le_bytes())?;
        out.write_all(&ev.t.to_le_bytes())?;
        let label = match ev.label {
            Some(l) => u8::from(l),
            None => NO_LABEL,
        };
        out.write_all(&[label])?;
        for v in stream.feat(i) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::format("event cache", format!("truncated: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_cache(input: impl Read) -> Result<EventStream> {
    let mut r = Reader { inner: input };
    if &r.bytes::<5>()? != CACHE_MAGIC {
        return Err(Error::format("event cache", "bad magic"));
    }
    let version = u16::from_le_bytes(r.bytes()?);
    if version != VERSION {
        return Err(Error::format("event cache", format!("unsupported version {version}")));
    }
    let flags = r.u8()?;
    let num_nodes = r.u64()? as usize;
    let feat_dim = r.u32()? as usize;
    let num_events = r.u64()? as usize;
    let mut raw_ids = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let id = r.u64()?;
        let item = r.u8()? != 0;
        raw_ids.push(RawNode { id, item });
    }
    let mut events = Vec::with_capacity(num_events);
    let mut features = Vec::with_capacity(num_events * feat_dim);
    for _ in 0..num_events {
        let src = r.u32()?;
        let dst = r.u32()?;
        let t = r.f64()?;
        let label = match r.u8()? {
            0 => Some(false),
            1 => Some(true),
            NO_LABEL => None,
            other => return Err(Error::format("event cache", format!("bad label byte {other}"))),
        };
        events.push(Event { src, dst, t, label });
        for _ in 0..feat_dim {
            features.push(r.f64()?);
        }
    }
    EventStream::with_raw_ids(events, features, feat_dim, flags & 1 != 0, raw_ids)
        .map_err(|e| Error::format("event cache", e.to_string()))
}

pub fn write_cache_file(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(create_file(path.as_ref())?);
    write_cache(stream, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_cache_file(path: impl AsRef<Path>) -> Result<EventStream> {
    read_cache(BufReader::new(open_file(path.as_ref())?))
}
