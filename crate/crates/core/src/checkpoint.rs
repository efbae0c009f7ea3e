//! Checkpoint files for long runs.
//!
//! Line-oriented text: magic, version, mode, config hash, counters, the
//! running accumulators, the snapshot series, every stored box and a final
//! SHA-256 over all preceding bytes. Scalars use the stream encoding, which
//! round-trips exactly in both modes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boxstore::{BoxStore, StoreError};
use crate::geometry::EmptyBox;
use crate::numerics::{Accumulator, NumericMode, Scalar};
use crate::packer::{Packer, PackerConfig, ScanWindow, StatsSnapshot};

const MAGIC: &str = "HARMOPACK-CHECKPOINT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint version {0} is not supported (expected {VERSION})")]
    Version(u32),
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint was written in {found} mode, run uses {expected}")]
    ModeMismatch {
        expected: NumericMode,
        found: NumericMode,
    },
    #[error("checkpoint config hash {found} does not match {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

fn opt_encode<S: Scalar>(v: Option<&S>) -> String {
    v.map_or_else(|| "-".to_owned(), S::encode)
}

/// Writes the packer state. `stream_offset` is the placement stream's byte
/// length at this point. The file is replaced atomically.
pub fn save<S: Scalar>(packer: &Packer<S>, stream_offset: u64, path: &Path) -> Result<(), CheckpointError> {
    let parts = packer.parts();
    let (total, pruned) = parts.store.accumulators();
    let (max_w, max_h) = parts.store.maxima();
    let mut body = String::new();
    let w = &mut body;
    writeln!(w, "{MAGIC}").unwrap();
    writeln!(w, "version {VERSION}").unwrap();
    writeln!(w, "mode {}", S::MODE).unwrap();
    writeln!(w, "config {}", parts.config.stream_hash()).unwrap();
    writeln!(w, "n {}", parts.placed).unwrap();
    writeln!(w, "next_id {}", parts.next_id).unwrap();
    writeln!(w, "stream_offset {stream_offset}").unwrap();
    writeln!(w, "placed_area {}", parts.placed_area.encode()).unwrap();
    writeln!(w, "store_total {}", total.encode()).unwrap();
    writeln!(w, "pruned_area {}", pruned.encode()).unwrap();
    writeln!(w, "pruned_count {}", parts.store.pruned_count()).unwrap();
    writeln!(w, "prune_below {}", opt_encode(parts.store.prune_threshold())).unwrap();
    writeln!(w, "max_w {}", opt_encode(max_w)).unwrap();
    writeln!(w, "max_h {}", opt_encode(max_h)).unwrap();
    writeln!(
        w,
        "window {} {} {}",
        parts.window.queries, parts.window.total, parts.window.max
    )
    .unwrap();
    writeln!(w, "snapshots {}", parts.snapshots.len()).unwrap();
    for s in parts.snapshots {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {} {}",
            s.n,
            s.largest_w.encode(),
            s.largest_h.encode(),
            s.box_count,
            s.scan.queries,
            s.scan.total,
            s.scan.max,
            s.residual.encode(),
            s.wall_time.as_nanos(),
            s.ratio.encode(),
        )
        .unwrap();
    }
    writeln!(w, "boxes {}", parts.store.len()).unwrap();
    for b in parts.store.iter() {
        writeln!(
            w,
            "{} {} {} {} {}",
            b.id,
            b.x.encode(),
            b.y.encode(),
            b.w.encode(),
            b.h.encode()
        )
        .unwrap();
    }
    let digest = hex(&Sha256::digest(body.as_bytes()));
    writeln!(body, "checksum {digest}").unwrap();

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str, CheckpointError> {
        self.iter.next().ok_or_else(|| corrupt("unexpected end of file"))
    }

    fn field(&mut self, name: &str) -> Result<&'a str, CheckpointError> {
        let line = self.next_line()?;
        line.strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| corrupt(format!("expected `{name}` line")))
    }

    fn number(&mut self, name: &str) -> Result<u64, CheckpointError> {
        self.field(name)?
            .parse()
            .map_err(|_| corrupt(format!("bad `{name}` value")))
    }
}

fn scalar<S: Scalar>(s: &str) -> Result<S, CheckpointError> {
    S::decode(s).map_err(|e| corrupt(e.to_string()))
}

fn opt_scalar<S: Scalar>(s: &str) -> Result<Option<S>, CheckpointError> {
    if s == "-" {
        Ok(None)
    } else {
        scalar(s).map(Some)
    }
}

fn acc<S: Scalar>(s: &str) -> Result<S::Acc, CheckpointError> {
    S::Acc::decode(s).map_err(|e| corrupt(e.to_string()))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, CheckpointError> {
    s.parse().map_err(|_| corrupt(format!("bad number `{s}`")))
}

/// Reads a checkpoint and rebuilds the packer. Returns the packer and the
/// placement stream offset to resume writing at.
pub fn load<S: Scalar>(config: PackerConfig, path: &Path) -> Result<(Packer<S>, u64), CheckpointError> {
    let text = fs::read_to_string(path)?;
    if !text.starts_with(MAGIC) {
        return Err(CheckpointError::BadMagic);
    }
    let body_end = text
        .rfind("checksum ")
        .ok_or_else(|| corrupt("missing checksum"))?;
    let (body, tail) = text.split_at(body_end);
    let stored = tail["checksum ".len()..].trim_end();
    if hex(&Sha256::digest(body.as_bytes())) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut lines = Lines { iter: body.lines() };
    lines.next_line()?;
    let version: u32 = num(lines.field("version")?)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mode: NumericMode = lines
        .field("mode")?
        .parse()
        .map_err(|_| corrupt("bad mode"))?;
    if mode != S::MODE {
        return Err(CheckpointError::ModeMismatch {
            expected: S::MODE,
            found: mode,
        });
    }
    let found = lines.field("config")?.to_owned();
    let expected = config.stream_hash();
    if found != expected {
        return Err(CheckpointError::ConfigMismatch { expected, found });
    }
    let placed = lines.number("n")?;
    let next_id = lines.number("next_id")?;
    let stream_offset = lines.number("stream_offset")?;
    let placed_area = acc::<S>(lines.field("placed_area")?)?;
    let store_total = acc::<S>(lines.field("store_total")?)?;
    let pruned_area = acc::<S>(lines.field("pruned_area")?)?;
    let pruned_count = lines.number("pruned_count")?;
    let prune_below = opt_scalar::<S>(lines.field("prune_below")?)?;
    let max_w = opt_scalar::<S>(lines.field("max_w")?)?;
    let max_h = opt_scalar::<S>(lines.field("max_h")?)?;
    let win: Vec<u64> = lines
        .field("window")?
        .split(' ')
        .map(num)
        .collect::<Result<_, _>>()?;
    let [queries, total, max] = win[..] else {
        return Err(corrupt("bad window line"));
    };
    let window = ScanWindow { queries, total, max };

    let count = lines.number("snapshots")?;
    let mut snapshots = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let cols: Vec<&str> = lines.next_line()?.split(' ').collect();
        if cols.len() != 10 {
            return Err(corrupt("bad snapshot line"));
        }
        let n: u64 = num(cols[0])?;
        let largest_w: S = scalar(cols[1])?;
        let largest_h: S = scalar(cols[2])?;
        let largest_area = largest_w.clone() * largest_h.clone();
        snapshots.push(StatsSnapshot {
            n,
            largest_w,
            largest_h,
            largest_area,
            remaining: S::recip(n + 1),
            ratio: scalar(cols[9])?,
            box_count: num(cols[3])?,
            scan: ScanWindow {
                queries: num(cols[4])?,
                total: num(cols[5])?,
                max: num(cols[6])?,
            },
            residual: scalar(cols[7])?,
            wall_time: Duration::from_nanos(num(cols[8])?),
        });
    }

    let count = lines.number("boxes")?;
    let mut boxes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let cols: Vec<&str> = lines.next_line()?.split(' ').collect();
        if cols.len() != 5 {
            return Err(corrupt("bad box line"));
        }
        boxes.push(EmptyBox {
            id: num(cols[0])?,
            x: scalar(cols[1])?,
            y: scalar(cols[2])?,
            w: scalar(cols[3])?,
            h: scalar(cols[4])?,
        });
    }
    if lines.iter.next().is_some() {
        return Err(corrupt("trailing data before checksum"));
    }

    let store = BoxStore::restore(
        config.order,
        boxes,
        store_total,
        pruned_area,
        pruned_count,
        prune_below,
        max_w,
        max_h,
    )?;
    let packer = Packer::from_parts(config, store, next_id, placed, placed_area, snapshots, window);
    Ok((packer, stream_offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Exact, Float};
    use crate::stream::NullSink;

    fn exact_config(n: u64) -> PackerConfig {
        PackerConfig {
            mode: NumericMode::Exact,
            ..PackerConfig::new(n)
        }
    }

    #[test]
    fn exact_round_trip_preserves_rationals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        let mut p = Packer::<Exact>::new(exact_config(200)).unwrap();
        p.run_until(120, &mut NullSink, None).unwrap();
        save(&p, 42, &path).unwrap();
        let (q, offset) = load::<Exact>(exact_config(200), &path).unwrap();
        assert_eq!(offset, 42);
        assert_eq!(q.placed(), 120);
        assert_eq!(q.placed_area(), p.placed_area());
        let a: Vec<_> = p.store().iter().cloned().collect();
        let b: Vec<_> = q.store().iter().cloned().collect();
        assert_eq!(a, b);
        assert_eq!(q.snapshots(), p.snapshots());
    }

    #[test]
    fn truncated_and_tampered_files_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        let mut p = Packer::<Float>::new(PackerConfig::new(100)).unwrap();
        p.run_until(50, &mut NullSink, None).unwrap();
        save(&p, 0, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(
            load::<Float>(PackerConfig::new(100), &path),
            Err(CheckpointError::Corrupt(_))
        ));

        fs::write(&path, text.replacen("next_id", "next_id 1", 1)).unwrap();
        assert!(matches!(
            load::<Float>(PackerConfig::new(100), &path),
            Err(CheckpointError::Corrupt(_))
        ));

        fs::write(&path, "garbage").unwrap();
        assert!(matches!(
            load::<Float>(PackerConfig::new(100), &path),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn version_mode_and_config_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        let mut p = Packer::<Float>::new(PackerConfig::new(100)).unwrap();
        p.run_until(10, &mut NullSink, None).unwrap();
        save(&p, 0, &path).unwrap();

        assert!(matches!(
            load::<Exact>(exact_config(100), &path),
            Err(CheckpointError::ModeMismatch { .. })
        ));
        let mut other = PackerConfig::new(100);
        other.allow_rotation = !other.allow_rotation;
        assert!(matches!(
            load::<Float>(other, &path),
            Err(CheckpointError::ConfigMismatch { .. })
        ));

        // Re-sign a body with a future version.
        let text = fs::read_to_string(&path).unwrap();
        let body = &text[..text.rfind("checksum ").unwrap()];
        let body = body.replacen("version 1", "version 9", 1);
        let signed = format!("{body}checksum {}\n", hex(&Sha256::digest(body.as_bytes())));
        fs::write(&path, signed).unwrap();
        assert!(matches!(
            load::<Float>(PackerConfig::new(100), &path),
            Err(CheckpointError::Version(9))
        ));
    }
}
