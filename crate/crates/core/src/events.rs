//! Event streams: the canonical in-memory representation, the 5-byte AER
//! binary layout, a CSV text layout, shifted-field embedding and a seeded
//! saccade-like fixture generator.
//!
//! Streams are kept in file order. Parsers never reorder events, even when
//! timestamps regress; regressions only raise [`EventStream::non_monotone`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size in bytes of one AER record.
pub const AER_RECORD_LEN: usize = 5;

/// Largest timestamp representable in an AER record (23 bits).
pub const AER_MAX_TS: u64 = (1 << 23) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }
}

/// A single camera event. `ts` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub ts: u64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, ts: u64, polarity: Polarity) -> Self {
        Self { x, y, ts, polarity }
    }
}

/// Field-of-view geometry of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
}

impl StreamHeader {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        u32::from(x) < self.width && u32::from(y) < self.height
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn check(&self, e: &Event) -> Result<()> {
        if self.contains(e.x, e.y) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "event ({}, {}) outside {}x{} geometry",
                e.x, e.y, self.width, self.height
            )))
        }
    }
}

/// An ordered event sequence together with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub header: StreamHeader,
    pub events: Vec<Event>,
    /// Set when at least one timestamp is smaller than its predecessor.
    pub non_monotone: bool,
}

impl EventStream {
    pub fn new(header: StreamHeader, events: Vec<Event>) -> Self {
        let non_monotone = events.windows(2).any(|w| w[1].ts < w[0].ts);
        Self {
            header,
            events,
            non_monotone,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Decodes the 5-byte AER layout: byte0 = x, byte1 = y, byte2 bit 7 =
/// polarity (1 is ON), bits 6..0 = ts[22:16], byte3 = ts[15:8], byte4 = ts[7:0].
pub fn read_aer_bin(bytes: &[u8], header: StreamHeader) -> Result<EventStream> {
    let whole = bytes.len() - bytes.len() % AER_RECORD_LEN;
    if whole != bytes.len() {
        return Err(Error::Decode {
            offset: whole,
            reason: format!(
                "truncated record: {} trailing bytes",
                bytes.len() - whole
            ),
        });
    }
    let mut events = Vec::with_capacity(bytes.len() / AER_RECORD_LEN);
    for (i, rec) in bytes.chunks_exact(AER_RECORD_LEN).enumerate() {
        let e = decode_record(rec);
        if !header.contains(e.x, e.y) {
            return Err(Error::validation(format!(
                "record at byte offset {}: event ({}, {}) outside {}x{} geometry",
                i * AER_RECORD_LEN,
                e.x,
                e.y,
                header.width,
                header.height
            )));
        }
        events.push(e);
    }
    Ok(EventStream::new(header, events))
}

fn decode_record(rec: &[u8]) -> Event {
    let polarity = if rec[2] & 0x80 != 0 {
        Polarity::On
    } else {
        Polarity::Off
    };
    let ts = (u64::from(rec[2] & 0x7f) << 16) | (u64::from(rec[3]) << 8) | u64::from(rec[4]);
    Event {
        x: u16::from(rec[0]),
        y: u16::from(rec[1]),
        ts,
        polarity,
    }
}

/// Encodes events in the AER layout. Fails if a coordinate exceeds 255 or a
/// timestamp exceeds 23 bits.
pub fn write_aer_bin(events: &[Event]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(events.len() * AER_RECORD_LEN);
    for (i, e) in events.iter().enumerate() {
        if e.x > 255 || e.y > 255 {
            return Err(Error::validation(format!(
                "event {i}: coordinate ({}, {}) does not fit in one byte",
                e.x, e.y
            )));
        }
        if e.ts > AER_MAX_TS {
            return Err(Error::validation(format!(
                "event {i}: timestamp {} exceeds 23 bits",
                e.ts
            )));
        }
        let pol = if e.polarity == Polarity::On { 0x80 } else { 0 };
        out.extend_from_slice(&[
            e.x as u8,
            e.y as u8,
            pol | ((e.ts >> 16) as u8 & 0x7f),
            (e.ts >> 8) as u8,
            e.ts as u8,
        ]);
    }
    Ok(out)
}

/// Parses `x,y,ts_us,polarity` lines. Blank lines and lines starting with
/// `#` are skipped; line numbers in errors are 1-based.
pub fn read_csv(text: &str, header: StreamHeader) -> Result<EventStream> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| Error::Parse {
            line: line_no,
            reason: format!("invalid {what} `{v}`"),
        };
        let x: u16 = fields[0].parse().map_err(|_| parse_err("x", fields[0]))?;
        let y: u16 = fields[1].parse().map_err(|_| parse_err("y", fields[1]))?;
        let ts: u64 = fields[2].parse().map_err(|_| parse_err("ts", fields[2]))?;
        let polarity = fields[3]
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_sign)
            .ok_or_else(|| parse_err("polarity", fields[3]))?;
        if !header.contains(x, y) {
            return Err(Error::Parse {
                line: line_no,
                reason: format!(
                    "event ({x}, {y}) outside {}x{} geometry",
                    header.width, header.height
                ),
            });
        }
        events.push(Event { x, y, ts, polarity });
    }
    Ok(EventStream::new(header, events))
}

pub fn write_csv(events: &[Event]) -> String {
    let mut out = String::with_capacity(events.len() * 16 + 24);
    out.push_str("# x,y,ts_us,polarity\n");
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.x, e.y, e.ts, e.polarity.sign());
    }
    out
}

/// Translates every event of a `src`-sized stream by `offset` into a larger
/// `dst` field of view.
pub fn shift_embed(
    events: &[Event],
    src: StreamHeader,
    dst: StreamHeader,
    offset: (u32, u32),
) -> Result<Vec<Event>> {
    let (dx, dy) = offset;
    if dx + src.width > dst.width || dy + src.height > dst.height {
        return Err(Error::validation(format!(
            "offset ({dx}, {dy}) places a {}x{} stream outside {}x{}",
            src.width, src.height, dst.width, dst.height
        )));
    }
    if dst.width > u32::from(u16::MAX) + 1 || dst.height > u32::from(u16::MAX) + 1 {
        return Err(Error::validation("destination geometry exceeds 16-bit coordinates"));
    }
    events
        .iter()
        .map(|e| {
            src.check(e)?;
            Ok(Event {
                x: e.x + dx as u16,
                y: e.y + dy as u16,
                ..*e
            })
        })
        .collect()
}

/// Draws a shift offset uniformly over all legal placements of `src` inside
/// `dst`.
///
/// The draw is reproducible across implementations: the generator is ChaCha8
/// seeded with `seed` through `seed_from_u64`, one `next_u64` value `r` is
/// drawn, the placement index is `(r * count) >> 64` over
/// `count = (dst.w - src.w + 1) * (dst.h - src.h + 1)` placements, and the
/// index is unpacked row-major as `dx = idx % nx`, `dy = idx / nx`.
pub fn random_offset(src: StreamHeader, dst: StreamHeader, seed: u64) -> Result<(u32, u32)> {
    if src.width > dst.width || src.height > dst.height {
        return Err(Error::validation(format!(
            "{}x{} stream does not fit in {}x{}",
            src.width, src.height, dst.width, dst.height
        )));
    }
    let nx = u64::from(dst.width - src.width + 1);
    let ny = u64::from(dst.height - src.height + 1);
    let count = nx * ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.next_u64();
    let idx = ((u128::from(r) * u128::from(count)) >> 64) as u64;
    Ok(((idx % nx) as u32, (idx / nx) as u32))
}

/// Parameters of the saccade fixture generator.
///
/// A disc of `blob_radius` pixels moves along the edges of an equilateral
/// triangle of side `amplitude` centered in the frame, one edge per saccade,
/// with a smooth `(1 - cos)` position profile. Events are drawn on the disc
/// boundary by a Poisson process whose intensity follows the saccade speed
/// (`rate * pi/2 * sin(pi * tau)`), so the mean rate over a saccade equals
/// `rate`. `amplitude = 0` gives a stationary flickering blob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaccadeParams {
    pub blob_radius: f64,
    pub geometry: StreamHeader,
    pub n_saccades: u32,
    pub saccade_ms: f64,
    /// Mean event rate in events per millisecond.
    pub rate: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl SaccadeParams {
    pub fn duration_us(&self) -> f64 {
        f64::from(self.n_saccades) * self.saccade_ms * 1000.0
    }

    fn vertex(&self, k: u32) -> (f64, f64) {
        let (cx, cy) = self.frame_center();
        let circumradius = self.amplitude / 3f64.sqrt();
        let angle = -PI / 2.0 + 2.0 * PI * f64::from(k % 3) / 3.0;
        (cx + circumradius * angle.cos(), cy + circumradius * angle.sin())
    }

    fn frame_center(&self) -> (f64, f64) {
        (
            (f64::from(self.geometry.width) - 1.0) / 2.0,
            (f64::from(self.geometry.height) - 1.0) / 2.0,
        )
    }

    /// Ground-truth blob center (0-based pixel coordinates) at `ts_us`.
    pub fn blob_center(&self, ts_us: f64) -> (f64, f64) {
        let saccade_us = self.saccade_ms * 1000.0;
        let clamped = ts_us.clamp(0.0, self.duration_us());
        let mut seg = (clamped / saccade_us).floor() as u32;
        if seg >= self.n_saccades {
            seg = self.n_saccades - 1;
        }
        let tau = (clamped - f64::from(seg) * saccade_us) / saccade_us;
        let s = (1.0 - (PI * tau).cos()) / 2.0;
        let (x0, y0) = self.vertex(seg);
        let (x1, y1) = self.vertex(seg + 1);
        (x0 + s * (x1 - x0), y0 + s * (y1 - y0))
    }

    fn validate(&self) -> Result<()> {
        let positive = self.blob_radius > 0.0
            && self.n_saccades > 0
            && self.saccade_ms > 0.0
            && self.rate > 0.0
            && self.amplitude >= 0.0;
        if !positive || !self.blob_radius.is_finite() || !self.rate.is_finite() {
            return Err(Error::validation("saccade parameters must be positive and finite"));
        }
        let reach = self.amplitude / 3f64.sqrt() + self.blob_radius;
        let (cx, cy) = self.frame_center();
        if cx - reach < 0.0 || cy - reach < 0.0 {
            return Err(Error::validation(format!(
                "{}x{} geometry too small for blob radius {} and amplitude {}",
                self.geometry.width, self.geometry.height, self.blob_radius, self.amplitude
            )));
        }
        if self.duration_us() > 1e15 {
            return Err(Error::validation("fixture duration too long"));
        }
        Ok(())
    }
}

/// Generates the saccade fixture described on [`SaccadeParams`]. The output
/// is deterministic for a fixed seed and every timestamp lies in
/// `[0, n_saccades * saccade_ms * 1000)`.
pub fn synth_saccade(p: &SaccadeParams) -> Result<EventStream> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let peak_rate_per_us = p.rate * PI / 2.0 / 1000.0;
    let gaps = Exp::new(peak_rate_per_us).map_err(|e| Error::validation(e.to_string()))?;
    let total = p.duration_us();
    let saccade_us = p.saccade_ms * 1000.0;
    let max_x = f64::from(p.geometry.width - 1);
    let max_y = f64::from(p.geometry.height - 1);

    let mut events = Vec::with_capacity((p.rate * total / 1000.0 * 1.1) as usize);
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= total {
            break;
        }
        // thinning against the speed profile
        let tau = (t % saccade_us) / saccade_us;
        let accept: f64 = rng.random();
        if accept >= (PI * tau).sin() {
            continue;
        }
        let (cx, cy) = p.blob_center(t);
        let theta = rng.random::<f64>() * 2.0 * PI;
        let x = (cx + p.blob_radius * theta.cos()).round().clamp(0.0, max_x);
        let y = (cy + p.blob_radius * theta.sin()).round().clamp(0.0, max_y);
        let polarity = if rng.random::<bool>() {
            Polarity::On
        } else {
            Polarity::Off
        };
        events.push(Event {
            x: x as u16,
            y: y as u16,
            ts: t.floor() as u64,
            polarity,
        });
    }
    Ok(EventStream::new(p.geometry, events))
}
