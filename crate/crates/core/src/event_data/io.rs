//! Line-delimited JSON events and the `SRLPEMB1` binary embeddings file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{sort_events, Corpus, DataError, NewsEvent, Result};
use crate::tensor::Matrix;

pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"SRLPEMB1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

/// Reads an events file without embeddings. Blank lines are skipped.
pub fn read_events(path: &Path) -> Result<Vec<NewsEvent>> {
    let file = File::open(path).map_err(io_err(path))?;
    read_events_from(BufReader::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io { path: path.display().to_string(), source },
        other => other,
    })
}

pub(crate) fn read_events_from<R: BufRead>(reader: R) -> Result<Vec<NewsEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: "<events>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: NewsEvent = serde_json::from_str(&line)
            .map_err(|e| DataError::MalformedEvent { line: i + 1, message: e.to_string() })?;
        event.validate()?;
        events.push(event);
    }
    Ok(events)
}

/// Writes one canonical JSON object per line, in the given order.
pub fn write_events(path: &Path, events: &[NewsEvent]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_events_to(&mut w, events).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub(crate) fn write_events_to<W: Write>(w: &mut W, events: &[NewsEvent]) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut *w, event)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One record of the embeddings file: the token matrix of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlock {
    pub event_id: String,
    pub sentence: usize,
    /// `token_count × d_tok`.
    pub values: Matrix,
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact_or(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| DataError::MalformedEmbeddings {
            offset: at,
            message: format!("reading {what}: {e}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_or(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    /// `Ok(None)` on a clean end of file at a record boundary.
    fn try_read_u32(&mut self) -> Result<Option<u32>> {
        let mut b = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match self.inner.read(&mut b[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => {
                    return Err(DataError::MalformedEmbeddings {
                        offset: self.offset + filled as u64,
                        message: "truncated record header".into(),
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(DataError::MalformedEmbeddings { offset: self.offset, message: e.to_string() }),
            }
        }
        self.offset += 4;
        Ok(Some(u32::from_le_bytes(b)))
    }
}

/// Returns `(d_tok, blocks)` in file order.
pub fn read_embeddings(path: &Path) -> Result<(usize, Vec<EmbeddingBlock>)> {
    let file = File::open(path).map_err(io_err(path))?;
    read_embeddings_from(BufReader::new(file))
}

pub(crate) fn read_embeddings_from<R: Read>(reader: R) -> Result<(usize, Vec<EmbeddingBlock>)> {
    let mut r = CountingReader { inner: reader, offset: 0 };
    let mut magic = [0u8; 8];
    r.read_exact_or(&mut magic, "magic")?;
    if &magic != EMBEDDINGS_MAGIC {
        return Err(DataError::MalformedEmbeddings { offset: 0, message: "bad magic".into() });
    }
    let d_tok = r.read_u32("d_tok")? as usize;
    if d_tok == 0 {
        return Err(DataError::MalformedEmbeddings { offset: 8, message: "d_tok is zero".into() });
    }
    let mut blocks = Vec::new();
    while let Some(id_len) = r.try_read_u32()? {
        let start = r.offset - 4;
        let mut id = vec![0u8; id_len as usize];
        r.read_exact_or(&mut id, "event id")?;
        let event_id = String::from_utf8(id)
            .map_err(|_| DataError::MalformedEmbeddings { offset: start, message: "event id is not UTF-8".into() })?;
        let sentence = r.read_u32("sentence index")? as usize;
        let token_count = r.read_u32("token count")? as usize;
        let mut raw = vec![0u8; token_count * d_tok * 4];
        r.read_exact_or(&mut raw, "embedding values")?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::MalformedEmbeddings {
                offset: start,
                message: format!("event {event_id}: non-finite embedding value at position {bad}"),
            });
        }
        blocks.push(EmbeddingBlock { event_id, sentence, values: Matrix::from_vec(token_count, d_tok, values) });
    }
    Ok((d_tok, blocks))
}

/// Writes the embeddings of every sentence that carries them, in corpus order.
/// Values are stored as `f32`.
pub fn write_embeddings(path: &Path, d_tok: usize, events: &[NewsEvent]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_embeddings_to(&mut w, d_tok, events).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub(crate) fn write_embeddings_to<W: Write>(w: &mut W, d_tok: usize, events: &[NewsEvent]) -> std::io::Result<()> {
    w.write_all(EMBEDDINGS_MAGIC)?;
    w.write_all(&(d_tok as u32).to_le_bytes())?;
    for event in events {
        for (si, sentence) in event.sentences.iter().enumerate() {
            let Some(emb) = &sentence.embeddings else { continue };
            assert_eq!(emb.cols(), d_tok, "embedding width differs from header d_tok");
            w.write_all(&(event.event_id.len() as u32).to_le_bytes())?;
            w.write_all(event.event_id.as_bytes())?;
            w.write_all(&(si as u32).to_le_bytes())?;
            w.write_all(&(emb.rows() as u32).to_le_bytes())?;
            for v in emb.as_slice() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads events, attaches embeddings when a path is given, validates and
/// returns the corpus sorted by `(published_at, event_id)`.
pub fn parse_events(events_path: &Path, embeddings_path: Option<&Path>) -> Result<Corpus> {
    let events = read_events(events_path)?;
    let embeddings = embeddings_path.map(read_embeddings).transpose()?;
    assemble(events, embeddings)
}

pub(crate) fn assemble(mut events: Vec<NewsEvent>, embeddings: Option<(usize, Vec<EmbeddingBlock>)>) -> Result<Corpus> {
    let d_tok = match embeddings {
        None => None,
        Some((d_tok, blocks)) => {
            attach(&mut events, blocks)?;
            Some(d_tok)
        }
    };
    sort_events(&mut events);
    let corpus = Corpus { d_tok, events };
    corpus.validate()?;
    Ok(corpus)
}

fn attach(events: &mut [NewsEvent], blocks: Vec<EmbeddingBlock>) -> Result<()> {
    let mut by_id: HashMap<String, usize> = HashMap::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        if by_id.insert(e.event_id.clone(), i).is_some() {
            return Err(DataError::DuplicateEvent(e.event_id.clone()));
        }
    }
    for block in blocks {
        let Some(&ei) = by_id.get(&block.event_id) else {
            return Err(DataError::DanglingEmbedding { event_id: block.event_id, sentence: block.sentence });
        };
        let event = &mut events[ei];
        let Some(sentence) = event.sentences.get_mut(block.sentence) else {
            return Err(DataError::DanglingEmbedding { event_id: block.event_id, sentence: block.sentence });
        };
        if block.values.rows() != sentence.tokens.len() {
            return Err(DataError::EmbeddingMismatch {
                event_id: block.event_id,
                message: format!(
                    "sentence {} has {} tokens but the record holds {}",
                    block.sentence,
                    sentence.tokens.len(),
                    block.values.rows()
                ),
            });
        }
        if sentence.embeddings.is_some() {
            return Err(DataError::EmbeddingMismatch {
                event_id: block.event_id,
                message: format!("sentence {} has more than one embedding record", block.sentence),
            });
        }
        sentence.embeddings = Some(block.values);
    }
    for event in events.iter() {
        if let Some(si) = event.sentences.iter().position(|s| s.embeddings.is_none()) {
            return Err(DataError::EmbeddingMismatch {
                event_id: event.event_id.clone(),
                message: format!("sentence {si} has no embedding record"),
            });
        }
    }
    Ok(())
}
