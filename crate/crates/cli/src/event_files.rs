//! Bit-exact event file IO.
//!
//! Two interchangeable formats:
//! - text: UTF-8, header `# evtap v1 width=<W> height=<H> epoch=<E>`, then
//!   one `t,x,y,p` record per line with `p` in {1, -1}, LF line endings.
//! - binary: magic `EVT1`, little-endian header (u32 width, u32 height,
//!   u64 epoch, u64 count), then 16-byte records: u64 t, u16 x, u16 y, i8 p,
//!   3 zero pad bytes.
//!
//! Writes go through a temp file in the target directory and a rename, so
//! concurrent invocations on distinct outputs never observe partial files.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use evtap_core::{Event, EventStream, Polarity};

use crate::FormatError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Text,
    Binary,
}

const MAGIC: &[u8; 4] = b"EVT1";
const RECORD_LEN: usize = 16;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

/// Peeks at the leading bytes to tell the two formats apart.
pub fn detect_format(path: &Path) -> Result<EventFormat, FormatError> {
    let mut file = fs::File::open(path).map_err(|source| FormatError::io(path, source))?;
    let mut head = [0u8; 4];
    let n = file
        .read(&mut head)
        .map_err(|source| FormatError::io(path, source))?;
    if n == 4 && &head == MAGIC {
        Ok(EventFormat::Binary)
    } else {
        Ok(EventFormat::Text)
    }
}

pub fn load_events(path: &Path, format: EventFormat) -> Result<EventStream, FormatError> {
    match format {
        EventFormat::Text => load_text(path),
        EventFormat::Binary => load_binary(path),
    }
}

pub fn save_events(
    stream: &EventStream,
    path: &Path,
    format: EventFormat,
) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        match format {
            EventFormat::Text => write_text(stream, &mut out),
            EventFormat::Binary => write_binary(stream, &mut out),
        }?;
        out.flush()
    })
}

fn write_text(stream: &EventStream, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "# evtap v1 width={} height={} epoch={}",
        stream.width(),
        stream.height(),
        stream.epoch()
    )?;
    for ev in stream.events() {
        writeln!(out, "{},{},{},{}", ev.t, ev.x, ev.y, ev.polarity.as_i8())?;
    }
    Ok(())
}

fn write_binary(stream: &EventStream, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&stream.width().to_le_bytes())?;
    out.write_all(&stream.height().to_le_bytes())?;
    out.write_all(&stream.epoch().to_le_bytes())?;
    out.write_all(&(stream.len() as u64).to_le_bytes())?;
    for ev in stream.events() {
        let mut record = [0u8; RECORD_LEN];
        record[0..8].copy_from_slice(&ev.t.to_le_bytes());
        record[8..10].copy_from_slice(&ev.x.to_le_bytes());
        record[10..12].copy_from_slice(&ev.y.to_le_bytes());
        record[12] = ev.polarity.as_i8() as u8;
        out.write_all(&record)?;
    }
    Ok(())
}

fn load_text(path: &Path) -> Result<EventStream, FormatError> {
    let data = fs::read_to_string(path).map_err(|source| FormatError::io(path, source))?;
    let mut lines = data.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FormatError::parse(path, 1, "empty file, expected header"))?;
    let (width, height, epoch) = parse_header(path, header)?;

    let mut events = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| FormatError::parse(path, line_no, format!("missing field `{name}`")))
        };
        let t: u64 = parse_field(path, line_no, "t", next("t")?)?;
        let x: u16 = parse_field(path, line_no, "x", next("x")?)?;
        let y: u16 = parse_field(path, line_no, "y", next("y")?)?;
        let p: i8 = parse_field(path, line_no, "p", next("p")?)?;
        if fields.next().is_some() {
            return Err(FormatError::parse(path, line_no, "trailing fields"));
        }
        let polarity = Polarity::from_i8(p).ok_or_else(|| {
            FormatError::parse(path, line_no, format!("polarity must be 1 or -1, got {p}"))
        })?;
        events.push(Event::new(t, x, y, polarity));
    }
    EventStream::new(width, height, epoch, events)
        .map_err(|err| FormatError::validation(path, err.to_string()))
}

fn parse_header(path: &Path, header: &str) -> Result<(u32, u32, u64), FormatError> {
    let err = |msg: &str| FormatError::parse(path, 1, msg);
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "#" || tokens[1] != "evtap" || tokens[2] != "v1" {
        return Err(err("expected `# evtap v1 width=<W> height=<H> epoch=<E>`"));
    }
    let grab = |token: &str, key: &str| -> Result<u64, FormatError> {
        let value = token
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| FormatError::parse(path, 1, format!("expected `{key}=<value>`")))?;
        value
            .parse()
            .map_err(|_| FormatError::parse(path, 1, format!("bad value for `{key}`")))
    };
    let width = grab(tokens[3], "width")?;
    let height = grab(tokens[4], "height")?;
    let epoch = grab(tokens[5], "epoch")?;
    if width == 0 || height == 0 || width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(err("width and height must be positive"));
    }
    Ok((width as u32, height as u32, epoch))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T, FormatError> {
    raw.trim()
        .parse()
        .map_err(|_| FormatError::parse(path, line, format!("bad value `{raw}` for field `{name}`")))
}

fn load_binary(path: &Path) -> Result<EventStream, FormatError> {
    let data = fs::read(path).map_err(|source| FormatError::io(path, source))?;
    let err_at = |offset: usize, msg: &str| FormatError::bytes(path, offset, msg);
    if data.len() < HEADER_LEN {
        return Err(err_at(0, "file shorter than the header"));
    }
    if &data[0..4] != MAGIC {
        return Err(err_at(0, "bad magic, expected `EVT1`"));
    }
    let width = u32::from_le_bytes(data[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(data[8..12].try_into().unwrap());
    let epoch = u64::from_le_bytes(data[12..20].try_into().unwrap());
    let count = u64::from_le_bytes(data[20..28].try_into().unwrap());
    let expected = HEADER_LEN as u64 + count * RECORD_LEN as u64;
    if data.len() as u64 != expected {
        return Err(err_at(
            data.len(),
            &format!("expected {expected} bytes for {count} records"),
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let base = HEADER_LEN + i * RECORD_LEN;
        let rec = &data[base..base + RECORD_LEN];
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(rec[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(rec[10..12].try_into().unwrap());
        let p = rec[12] as i8;
        if rec[13..16] != [0, 0, 0] {
            return Err(err_at(base + 13, "nonzero pad bytes"));
        }
        let polarity = Polarity::from_i8(p)
            .ok_or_else(|| err_at(base + 12, &format!("polarity must be 1 or -1, got {p}")))?;
        events.push(Event::new(t, x, y, polarity));
    }
    EventStream::new(width, height, epoch, events)
        .map_err(|err| FormatError::validation(path, err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn sample_stream() -> EventStream {
        EventStream::new(
            4,
            4,
            7,
            vec![
                Event::new(0, 1, 1, Polarity::Pos),
                Event::new(10, 2, 1, Polarity::Neg),
            ],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("events.txt");
        let stream = sample_stream();
        save_events(&stream, &path, EventFormat::Text).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# evtap v1 width=4 height=4 epoch=7\n"));
        assert!(text.contains("0,1,1,1\n"));
        assert!(text.contains("10,2,1,-1\n"));
        let loaded = load_events(&path, EventFormat::Text).unwrap();
        assert_eq!(loaded, stream);
    }

    #[test]
    fn binary_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("events.evt");
        let stream = sample_stream();
        save_events(&stream, &path, EventFormat::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"EVT1");
        assert_eq!(bytes.len(), 28 + 2 * 16);
        let loaded = load_events(&path, EventFormat::Binary).unwrap();
        assert_eq!(loaded, stream);
    }

    #[test]
    fn empty_stream_round_trips_both_formats() {
        let dir = TempDir::new().unwrap();
        for (name, format) in [("e.txt", EventFormat::Text), ("e.evt", EventFormat::Binary)] {
            let path = dir.path().join(name);
            let empty = EventStream::empty(8, 8, 0);
            save_events(&empty, &path, format).unwrap();
            let loaded = load_events(&path, format).unwrap();
            assert_eq!(loaded, empty);
            assert!(loaded.is_empty());
        }
    }

    #[test]
    fn text_parse_error_names_line() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "# evtap v1 width=4 height=4 epoch=0\n0,1,1,1\n5,x,1,1\n").unwrap();
        let err = load_events(&path, EventFormat::Text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn out_of_bounds_record_is_a_validation_error() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("oob.txt");
        fs::write(&path, "# evtap v1 width=4 height=4 epoch=0\n5,9,0,1\n").unwrap();
        let err = load_events(&path, EventFormat::Text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("event 0"), "{msg}");
    }

    #[test]
    fn out_of_order_text_is_repaired_with_counter() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("unordered.txt");
        fs::write(
            &path,
            "# evtap v1 width=4 height=4 epoch=0\n10,1,1,1\n5,2,2,-1\n",
        )
        .unwrap();
        let loaded = load_events(&path, EventFormat::Text).unwrap();
        assert_eq!(loaded.reorder_count(), 1);
        assert_eq!(loaded.events()[0].t, 5);
    }

    #[test]
    fn binary_rejects_truncation_and_bad_pad() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.evt");
        let stream = sample_stream();
        save_events(&stream, &path, EventFormat::Binary).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&path, &bytes).unwrap();
        assert!(load_events(&path, EventFormat::Binary).is_err());

        save_events(&stream, &path, EventFormat::Binary).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last_pad = bytes.len() - 1;
        bytes[last_pad] = 9;
        fs::write(&path, &bytes).unwrap();
        let err = load_events(&path, EventFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("pad"), "{err}");
    }

    #[test]
    fn format_detection() {
        let dir = TempDir::new().unwrap();
        let t = dir.path().join("a.txt");
        let b = dir.path().join("a.evt");
        save_events(&sample_stream(), &t, EventFormat::Text).unwrap();
        save_events(&sample_stream(), &b, EventFormat::Binary).unwrap();
        assert_eq!(detect_format(&t).unwrap(), EventFormat::Text);
        assert_eq!(detect_format(&b).unwrap(), EventFormat::Binary);
    }
}
