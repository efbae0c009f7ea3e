//! Text formats shared by the engine, the verifier and the renderer.
//!
//! Placement stream:
//!
//! ```text
//! # harmopack placements v1 mode=exact
//! index,x,y,w,h,rotated
//! 1,0,0,1,1/2,0
//! ```
//!
//! Box dump (the store after `n` placements):
//!
//! ```text
//! # harmopack boxes v1 mode=exact n=1 pruned_area=0
//! id,x,y,w,h
//! 1,0,1/2,1,1/2
//! ```
//!
//! Float values carry 17 significant digits, exact values are `p/q`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{EmptyBox, Placement};
use crate::numerics::{NumericMode, ParseScalarError, Scalar};

pub const PLACEMENT_HEADER: &str = "index,x,y,w,h,rotated";
pub const BOX_HEADER: &str = "id,x,y,w,h";
const PLACEMENT_MAGIC: &str = "# harmopack placements v1";
const BOX_MAGIC: &str = "# harmopack boxes v1";

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("stream is in {found} mode, expected {expected}")]
    ModeMismatch {
        expected: NumericMode,
        found: NumericMode,
    },
}

impl StreamError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        StreamError::Malformed {
            line,
            reason: reason.into(),
        }
    }
}

/// Receives committed placements in order.
pub trait PlacementSink<S> {
    fn accept(&mut self, p: &Placement<S>) -> io::Result<()>;

    /// Bytes emitted so far, for sinks backed by a byte stream.
    fn position(&self) -> u64 {
        0
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl<S: Clone> PlacementSink<S> for Vec<Placement<S>> {
    fn accept(&mut self, p: &Placement<S>) -> io::Result<()> {
        self.push(p.clone());
        Ok(())
    }
}

/// Discards placements.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl<S> PlacementSink<S> for NullSink {
    fn accept(&mut self, _: &Placement<S>) -> io::Result<()> {
        Ok(())
    }
}

pub fn format_placement<S: Scalar>(p: &Placement<S>) -> String {
    format!(
        "{},{},{},{},{},{}",
        p.index,
        p.x.encode(),
        p.y.encode(),
        p.w.encode(),
        p.h.encode(),
        u8::from(p.rotated)
    )
}

/// Writes the CSV placement stream and counts bytes so checkpoints can
/// record a resume offset.
pub struct PlacementWriter<W: Write> {
    inner: W,
    written: u64,
}

impl<W: Write> PlacementWriter<W> {
    /// Starts a fresh stream, header included.
    pub fn new(mut inner: W, mode: NumericMode) -> io::Result<Self> {
        let header = format!("{PLACEMENT_MAGIC} mode={mode}\n{PLACEMENT_HEADER}\n");
        inner.write_all(header.as_bytes())?;
        Ok(PlacementWriter {
            inner,
            written: header.len() as u64,
        })
    }

    /// Continues a stream that already holds `offset` bytes.
    pub fn resume(inner: W, offset: u64) -> Self {
        PlacementWriter {
            inner,
            written: offset,
        }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<S: Scalar, W: Write> PlacementSink<S> for PlacementWriter<W> {
    fn accept(&mut self, p: &Placement<S>) -> io::Result<()> {
        let mut line = format_placement(p);
        line.push('\n');
        self.inner.write_all(line.as_bytes())?;
        self.written += line.len() as u64;
        Ok(())
    }

    fn position(&self) -> u64 {
        self.written
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn create_placement_file(path: &Path, mode: NumericMode) -> io::Result<PlacementWriter<BufWriter<File>>> {
    PlacementWriter::new(BufWriter::new(File::create(path)?), mode)
}

/// Reopens a placement file, cuts it back to `offset` bytes and appends
/// from there.
pub fn resume_placement_file(path: &Path, offset: u64) -> io::Result<PlacementWriter<BufWriter<File>>> {
    let file = std::fs::OpenOptions::new().write(true).open(path)?;
    let len = file.metadata()?.len();
    if len < offset {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("placement stream has {len} bytes, checkpoint expects {offset}"),
        ));
    }
    file.set_len(offset)?;
    let mut file = file;
    io::Seek::seek(&mut file, io::SeekFrom::Start(offset))?;
    Ok(PlacementWriter::resume(BufWriter::new(file), offset))
}

fn parse_mode_tag(line: &str, magic: &str, lineno: usize) -> Result<(NumericMode, Vec<(String, String)>), StreamError> {
    let rest = line
        .strip_prefix(magic)
        .ok_or_else(|| StreamError::malformed(lineno, format!("expected `{magic}` header")))?;
    let mut mode = None;
    let mut fields = Vec::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| StreamError::malformed(lineno, format!("bad header field `{tok}`")))?;
        if k == "mode" {
            mode = Some(
                v.parse::<NumericMode>()
                    .map_err(|e| StreamError::malformed(lineno, e.to_string()))?,
            );
        } else {
            fields.push((k.to_owned(), v.to_owned()));
        }
    }
    let mode = mode.ok_or_else(|| StreamError::malformed(lineno, "header lacks mode"))?;
    Ok((mode, fields))
}

fn scalar<S: Scalar>(s: &str, line: usize) -> Result<S, StreamError> {
    S::decode(s).map_err(|e: ParseScalarError| StreamError::malformed(line, e.to_string()))
}

/// Reads only the mode from a placement stream's header.
pub fn placement_mode(path: &Path) -> Result<NumericMode, StreamError> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(parse_mode_tag(first.trim_end(), PLACEMENT_MAGIC, 1)?.0)
}

pub fn read_placements<S: Scalar, R: BufRead>(reader: R) -> Result<Vec<Placement<S>>, StreamError> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| StreamError::malformed(1, "empty stream"))??;
    let (mode, _) = parse_mode_tag(first.trim_end(), PLACEMENT_MAGIC, 1)?;
    if mode != S::MODE {
        return Err(StreamError::ModeMismatch {
            expected: S::MODE,
            found: mode,
        });
    }
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == PLACEMENT_HEADER => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(StreamError::malformed(2, "missing column header")),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 3;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(StreamError::malformed(lineno, "expected 6 columns"));
        }
        let index: u64 = cols[0]
            .parse()
            .map_err(|_| StreamError::malformed(lineno, "bad index"))?;
        let rotated = match cols[5] {
            "0" => false,
            "1" => true,
            _ => return Err(StreamError::malformed(lineno, "rotated must be 0 or 1")),
        };
        let p: Placement<S> = Placement {
            index,
            x: scalar(cols[1], lineno)?,
            y: scalar(cols[2], lineno)?,
            w: scalar(cols[3], lineno)?,
            h: scalar(cols[4], lineno)?,
            rotated,
        };
        if !(p.w.is_positive() && p.h.is_positive()) {
            return Err(StreamError::malformed(lineno, "non-positive side"));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn read_placement_file<S: Scalar>(path: &Path) -> Result<Vec<Placement<S>>, StreamError> {
    read_placements(BufReader::new(File::open(path)?))
}

/// The store contents after `n` placements.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDump<S> {
    pub n: u64,
    pub pruned_area: S,
    pub boxes: Vec<EmptyBox<S>>,
}

pub fn write_boxes<'a, S: Scalar + 'a, W: Write>(
    mut w: W,
    n: u64,
    pruned_area: &S,
    boxes: impl IntoIterator<Item = &'a EmptyBox<S>>,
) -> io::Result<()> {
    writeln!(
        w,
        "{BOX_MAGIC} mode={} n={n} pruned_area={}",
        S::MODE,
        pruned_area.encode()
    )?;
    writeln!(w, "{BOX_HEADER}")?;
    for b in boxes {
        writeln!(
            w,
            "{},{},{},{},{}",
            b.id,
            b.x.encode(),
            b.y.encode(),
            b.w.encode(),
            b.h.encode()
        )?;
    }
    w.flush()
}

pub fn read_boxes<S: Scalar, R: BufRead>(reader: R) -> Result<BoxDump<S>, StreamError> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| StreamError::malformed(1, "empty box dump"))??;
    let (mode, fields) = parse_mode_tag(first.trim_end(), BOX_MAGIC, 1)?;
    if mode != S::MODE {
        return Err(StreamError::ModeMismatch {
            expected: S::MODE,
            found: mode,
        });
    }
    let field = |name: &str| {
        fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| StreamError::malformed(1, format!("header lacks `{name}`")))
    };
    let n: u64 = field("n")?
        .parse()
        .map_err(|_| StreamError::malformed(1, "bad n"))?;
    let pruned_area = scalar(field("pruned_area")?, 1)?;
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == BOX_HEADER => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(StreamError::malformed(2, "missing column header")),
    }
    let mut boxes = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 3;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(StreamError::malformed(lineno, "expected 5 columns"));
        }
        boxes.push(EmptyBox {
            id: cols[0]
                .parse()
                .map_err(|_| StreamError::malformed(lineno, "bad id"))?,
            x: scalar(cols[1], lineno)?,
            y: scalar(cols[2], lineno)?,
            w: scalar(cols[3], lineno)?,
            h: scalar(cols[4], lineno)?,
        });
    }
    Ok(BoxDump {
        n,
        pruned_area,
        boxes,
    })
}

pub fn read_box_file<S: Scalar>(path: &Path) -> Result<BoxDump<S>, StreamError> {
    read_boxes(BufReader::new(File::open(path)?))
}
