//! Time-surface inspection dumps: one 16-bit PGM per polarity channel with
//! cell value `round(65535 * v)`. Big-endian sample bytes per the PGM spec.

use std::io::Write;
use std::path::{Path, PathBuf};

use evtap_core::{Polarity, TimeSurface};

use crate::FormatError;

fn write_pgm(ts: &TimeSurface, polarity: Polarity, path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = std::io::BufWriter::new(file);
        write!(out, "P5\n{} {}\n65535\n", ts.width(), ts.height())?;
        for &v in ts.channel(polarity) {
            let sample = (v * 65535.0).round() as u16;
            out.write_all(&sample.to_be_bytes())?;
        }
        out.flush()
    })
}

/// Writes `<stem>.pos.pgm` and `<stem>.neg.pgm`; returns both paths.
pub fn dump_surface(ts: &TimeSurface, stem: &Path) -> Result<(PathBuf, PathBuf), FormatError> {
    let named = |suffix: &str| {
        let mut name = stem.as_os_str().to_os_string();
        name.push(suffix);
        PathBuf::from(name)
    };
    let pos = named(".pos.pgm");
    let neg = named(".neg.pgm");
    write_pgm(ts, Polarity::Pos, &pos)?;
    write_pgm(ts, Polarity::Neg, &neg)?;
    Ok((pos, neg))
}
