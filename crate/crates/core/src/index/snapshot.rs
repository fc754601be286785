//! Versioned binary snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "CTXIDX1\0"
//! version      u32
//! dim          u32       0 when no vector has been seen yet
//! kind         u8        0 flat, 1 hnsw, 2 ivf
//! count        u64       live documents
//! payload_len  u64
//! payload      payload_len bytes
//! checksum     32 bytes  SHA-256 of payload
//! ```
//!
//! The payload holds the document slots followed by the kind-specific
//! structure (graph links and generator state for HNSW, centroids and lists
//! for IVF), so a loaded index answers every query exactly as the saved one.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::document::{Document, MetaValue, Metadata};
use crate::index::{
    DocTable, FlatIndex, HnswIndex, HnswParams, IndexError, IndexKind, IvfIndex, IvfParams,
    VectorIndex,
};
use crate::vector::Vector;

pub const MAGIC: &[u8; 8] = b"CTXIDX1\0";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 4 + 1 + 8 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::Corrupt(msg.into())
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("truncated payload"))?;
        let bytes = &self.buf[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IndexError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn u128(&mut self) -> Result<u128, IndexError> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    /// A length or count; bounded by the bytes left so a corrupt value
    /// cannot trigger a huge allocation.
    fn len(&mut self, min_item_bytes: usize) -> Result<usize, IndexError> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_item_bytes.max(1) as u64) > remaining {
            return Err(corrupt("length field exceeds payload"));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64, IndexError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IndexError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn str(&mut self) -> Result<String, IndexError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }

    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn kind_tag(kind: IndexKind) -> u8 {
    match kind {
        IndexKind::Flat => 0,
        IndexKind::Hnsw => 1,
        IndexKind::Ivf => 2,
    }
}

fn write_table(w: &mut Writer, table: &DocTable) {
    w.usize(table.slot_count());
    for slot in table.slots() {
        match slot {
            None => w.u8(0),
            Some(doc) => {
                w.u8(1);
                w.str(doc.id());
                w.str(doc.text());
                w.usize(doc.metadata().len());
                for (key, value) in doc.metadata() {
                    w.str(key);
                    match value {
                        MetaValue::Bool(b) => {
                            w.u8(0);
                            w.u8(*b as u8);
                        }
                        MetaValue::Number(n) => {
                            w.u8(1);
                            w.f64(*n);
                        }
                        MetaValue::String(s) => {
                            w.u8(2);
                            w.str(s);
                        }
                    }
                }
                w.f64s(doc.embedding());
            }
        }
    }
}

fn read_table(r: &mut Reader<'_>, dim: Option<usize>) -> Result<DocTable, IndexError> {
    let slot_count = r.len(1)?;
    let mut slots = Vec::with_capacity(slot_count);
    for _ in 0..slot_count {
        match r.u8()? {
            0 => slots.push(None),
            1 => {
                let id = r.str()?;
                let text = r.str()?;
                let mut metadata = Metadata::new();
                for _ in 0..r.len(9)? {
                    let key = r.str()?;
                    let value = match r.u8()? {
                        0 => MetaValue::Bool(r.u8()? != 0),
                        1 => MetaValue::Number(r.f64()?),
                        2 => MetaValue::String(r.str()?),
                        t => return Err(corrupt(format!("unknown metadata tag {t}"))),
                    };
                    metadata.insert(key, value);
                }
                let dim = dim.ok_or_else(|| corrupt("document present but dimension unset"))?;
                let embedding = Vector::new(r.f64s(dim)?).map_err(|e| corrupt(e.to_string()))?;
                let doc = Document::new(id, text, metadata, embedding)
                    .map_err(|e| corrupt(e.to_string()))?;
                slots.push(Some(doc));
            }
            t => return Err(corrupt(format!("unknown slot tag {t}"))),
        }
    }
    DocTable::from_slots(dim, slots)
}

fn write_hnsw(w: &mut Writer, index: &HnswIndex) {
    let p = index.params;
    w.usize(p.m);
    w.usize(p.ef_construction);
    w.usize(p.ef_search);
    w.u64(p.seed);
    w.buf.extend_from_slice(&index.rng.get_seed());
    w.u64(index.rng.get_stream());
    w.buf
        .extend_from_slice(&index.rng.get_word_pos().to_le_bytes());
    match index.entry {
        Some(e) => {
            w.u8(1);
            w.u32(e);
        }
        None => w.u8(0),
    }
    w.usize(index.vectors.len());
    w.f64s(&index.vectors);
    w.usize(index.links.len());
    for node in &index.links {
        w.u8(node.len() as u8);
        for layer in node {
            w.u32(layer.len() as u32);
            for &n in layer {
                w.u32(n);
            }
        }
    }
}

fn read_hnsw(r: &mut Reader<'_>, table: DocTable) -> Result<HnswIndex, IndexError> {
    let params = HnswParams {
        m: r.u64()? as usize,
        ef_construction: r.u64()? as usize,
        ef_search: r.u64()? as usize,
        seed: r.u64()?,
    };
    params.validate().map_err(|e| corrupt(e.to_string()))?;
    let mut rng = ChaCha8Rng::from_seed(r.array::<32>()?);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(r.u128()?);
    let entry = match r.u8()? {
        0 => None,
        1 => Some(r.u32()?),
        t => return Err(corrupt(format!("bad entry tag {t}"))),
    };
    let n_values = r.len(8)?;
    let vectors = r.f64s(n_values)?;
    let node_count = r.len(1)?;
    let mut links = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let layers = r.u8()? as usize;
        if layers == 0 {
            return Err(corrupt("node without layers"));
        }
        let mut node = Vec::with_capacity(layers);
        for _ in 0..layers {
            let count = r.u32()? as usize;
            let neighbors = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            node.push(neighbors);
        }
        links.push(node);
    }

    let dim = table.dim().unwrap_or(0);
    if node_count != table.slot_count() || vectors.len() != node_count * dim {
        return Err(corrupt("graph size does not match document table"));
    }
    if entry.is_some_and(|e| e as usize >= node_count) || (entry.is_none() && node_count > 0) {
        return Err(corrupt("invalid entry point"));
    }
    for node in &links {
        for (layer, neighbors) in node.iter().enumerate() {
            if neighbors
                .iter()
                .any(|&n| n as usize >= node_count || links[n as usize].len() <= layer)
            {
                return Err(corrupt("dangling graph link"));
            }
        }
    }
    Ok(HnswIndex {
        params,
        table,
        vectors,
        links,
        entry,
        rng,
    })
}

fn write_ivf(w: &mut Writer, index: &IvfIndex) {
    let Some(p) = index.params else {
        w.u8(0);
        return;
    };
    w.u8(1);
    w.usize(p.nlist);
    w.usize(p.nprobe);
    w.usize(p.kmeans_iters);
    w.u64(p.seed);
    for c in &index.centroids {
        w.f64s(c);
    }
    for list in &index.lists {
        w.usize(list.len());
        for &slot in list {
            w.usize(slot);
        }
    }
}

fn read_ivf(r: &mut Reader<'_>, table: DocTable) -> Result<IvfIndex, IndexError> {
    if r.u8()? == 0 {
        return Ok(IvfIndex {
            table,
            ..IvfIndex::default()
        });
    }
    let params = IvfParams {
        nlist: r.u64()? as usize,
        nprobe: r.u64()? as usize,
        kmeans_iters: r.u64()? as usize,
        seed: r.u64()?,
    };
    params.validate().map_err(|e| corrupt(e.to_string()))?;
    let dim = table
        .dim()
        .ok_or_else(|| corrupt("trained IVF without dimension"))?;
    if params.nlist.saturating_mul(dim).saturating_mul(8) > r.buf.len() {
        return Err(corrupt("centroid block exceeds payload"));
    }
    let centroids = (0..params.nlist)
        .map(|_| r.f64s(dim))
        .collect::<Result<Vec<_>, _>>()?;
    let mut lists = Vec::with_capacity(params.nlist);
    let mut list_of = vec![u32::MAX; table.slot_count()];
    for list_id in 0..params.nlist {
        let n = r.len(8)?;
        let mut list = Vec::with_capacity(n);
        for _ in 0..n {
            let slot = r.u64()? as usize;
            if table.get(slot).is_none() || list_of[slot] != u32::MAX {
                return Err(corrupt("inverted list refers to an invalid slot"));
            }
            list_of[slot] = list_id as u32;
            list.push(slot);
        }
        lists.push(list);
    }
    if lists.iter().map(Vec::len).sum::<usize>() != table.len() {
        return Err(corrupt("inverted lists do not cover every document"));
    }
    Ok(IvfIndex {
        params: Some(params),
        table,
        centroids,
        lists,
        list_of,
    })
}

pub(crate) fn encode(index: &VectorIndex) -> Vec<u8> {
    let mut payload = Writer::default();
    write_table(&mut payload, index.table());
    match index {
        VectorIndex::Flat(_) => {}
        VectorIndex::Hnsw(h) => write_hnsw(&mut payload, h),
        VectorIndex::Ivf(i) => write_ivf(&mut payload, i),
    }
    let payload = payload.buf;

    let mut out = Writer::default();
    out.buf.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);
    out.u32(index.dim().unwrap_or(0) as u32);
    out.u8(kind_tag(index.kind()));
    out.usize(index.len());
    out.usize(payload.len());
    out.buf.extend_from_slice(&payload);
    out.buf
        .extend_from_slice(Sha256::digest(&payload).as_slice());
    out.buf
}

pub(crate) fn decode(bytes: &[u8]) -> Result<VectorIndex, IndexError> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!(
            "{} bytes is too short for a snapshot header",
            bytes.len()
        )));
    }
    let mut header = Reader::new(&bytes[..HEADER_LEN]);
    if &header.array::<8>()? != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = header.u32()?;
    if version != FORMAT_VERSION {
        return Err(IndexError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let dim = match header.u32()? {
        0 => None,
        d => Some(d as usize),
    };
    let kind = match header.u8()? {
        0 => IndexKind::Flat,
        1 => IndexKind::Hnsw,
        2 => IndexKind::Ivf,
        t => return Err(corrupt(format!("unknown index kind {t}"))),
    };
    let count = header.u64()? as usize;
    let payload_len = header.u64()? as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != payload_len.saturating_add(CHECKSUM_LEN) {
        return Err(corrupt(format!(
            "expected {} payload bytes plus checksum, found {}",
            payload_len,
            body.len()
        )));
    }
    let (payload, checksum) = body.split_at(payload_len);
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader::new(payload);
    let table = read_table(&mut r, dim)?;
    if table.len() != count {
        return Err(corrupt("document count does not match header"));
    }
    let index = match kind {
        IndexKind::Flat => VectorIndex::Flat(FlatIndex::from_table(table)),
        IndexKind::Hnsw => VectorIndex::Hnsw(read_hnsw(&mut r, table)?),
        IndexKind::Ivf => VectorIndex::Ivf(read_ivf(&mut r, table)?),
    };
    if !r.finished() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(index)
}

/// Writes to a sibling temp file and renames, so a crash never leaves a
/// half-written snapshot at `path`.
pub(crate) fn save(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let bytes = encode(index);
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn load(path: &Path) -> Result<VectorIndex, IndexError> {
    decode(&fs::read(path)?)
}
