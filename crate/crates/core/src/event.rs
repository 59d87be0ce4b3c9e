//! Event records, validated streams, and time-window slicing.
//!
//! Timestamps are integer microseconds since the stream epoch; this keeps
//! sorting exact and lets the binary file format round-trip bit-exactly.
//! Windows are half-open `[t_start, t_end)` so tiling a stream into bins
//! never double-counts a boundary event.

use alloc::vec::Vec;

/// Brightness-change sign of an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Pos => 1.0,
            Polarity::Neg => -1.0,
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Pos => 1,
            Polarity::Neg => -1,
        }
    }

    /// The on-disk encoding admits exactly `1` and `-1`.
    #[inline]
    pub fn from_i8(value: i8) -> Option<Polarity> {
        match value {
            1 => Some(Polarity::Pos),
            -1 => Some(Polarity::Neg),
            _ => None,
        }
    }

    #[inline]
    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }
}

/// A single sensor event: timestamp in microseconds since the stream epoch,
/// pixel coordinates, and polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    #[inline]
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// Half-open time interval `[t_start, t_end)` in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeWindow {
    t_start: u64,
    t_end: u64,
}

impl TimeWindow {
    pub fn new(t_start: u64, t_end: u64) -> Result<Self, EventError> {
        if t_end <= t_start {
            return Err(EventError::InvalidWindow { t_start, t_end });
        }
        Ok(TimeWindow { t_start, t_end })
    }

    #[inline]
    pub fn t_start(&self) -> u64 {
        self.t_start
    }

    #[inline]
    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    #[inline]
    pub fn span_us(&self) -> u64 {
        self.t_end - self.t_start
    }

    #[inline]
    pub fn contains(&self, t: u64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("invalid time window [{t_start}, {t_end}): end must exceed start")]
    InvalidWindow { t_start: u64, t_end: u64 },
    #[error("event {index} at ({x}, {y}) outside sensor bounds {width}x{height}")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u32,
        height: u32,
    },
}

/// A time-ordered, bounds-validated collection of events for one sensor.
///
/// Immutable after construction; all operations are pure. Out-of-order input
/// is repaired with a stable sort rather than rejected, and the number of
/// out-of-order records is kept in [`EventStream::reorder_count`].
#[derive(Clone, Debug)]
pub struct EventStream {
    width: u32,
    height: u32,
    /// Absolute microsecond origin of the stream's own t = 0.
    epoch: u64,
    events: Vec<Event>,
    reorder_count: u64,
}

impl EventStream {
    /// Validates bounds, repairs ordering, and builds a stream.
    ///
    /// The error names the offending record's index in the input order.
    pub fn new(
        width: u32,
        height: u32,
        epoch: u64,
        mut events: Vec<Event>,
    ) -> Result<Self, EventError> {
        for (index, ev) in events.iter().enumerate() {
            if u32::from(ev.x) >= width || u32::from(ev.y) >= height {
                return Err(EventError::OutOfBounds {
                    index,
                    x: ev.x,
                    y: ev.y,
                    width,
                    height,
                });
            }
        }
        let mut reorder_count = 0u64;
        for pair in events.windows(2) {
            if pair[1].t < pair[0].t {
                reorder_count += 1;
            }
        }
        if reorder_count > 0 {
            events.sort_by_key(|ev| ev.t);
        }
        Ok(EventStream {
            width,
            height,
            epoch,
            events,
            reorder_count,
        })
    }

    pub fn empty(width: u32, height: u32, epoch: u64) -> Self {
        EventStream {
            width,
            height,
            epoch,
            events: Vec::new(),
            reorder_count: 0,
        }
    }

    #[inline]
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.events.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// How many input records were out of order before the constructor's
    /// repair sort. Zero for streams built from sorted data.
    #[inline]
    pub fn reorder_count(&self) -> u64 {
        self.reorder_count
    }

    /// Events with `t_start <= t < t_end`, order and epoch preserved.
    pub fn slice_window(&self, window: TimeWindow) -> EventStream {
        let lo = self.events.partition_point(|ev| ev.t < window.t_start());
        let hi = self.events.partition_point(|ev| ev.t < window.t_end());
        EventStream {
            width: self.width,
            height: self.height,
            epoch: self.epoch,
            events: self.events[lo..hi].to_vec(),
            reorder_count: 0,
        }
    }
}

/// Equality ignores the repair counter: a repaired stream saved and reloaded
/// compares equal to the original.
impl PartialEq for EventStream {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.epoch == other.epoch
            && self.events == other.events
    }
}

impl Eq for EventStream {}
