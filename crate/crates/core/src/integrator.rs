//! Leaky frame integration and the interval-end frame buffer.
//!
//! Every event decays the whole frame by `lambda * dt` (clamped at zero) and
//! then adds one to the event's pixel. The state stores each pixel's value at
//! the time it was last touched and applies the accumulated decay on read:
//! for `p >= 0`, `max(max(p - a, 0) - b, 0) == max(p - (a + b), 0)`, so the
//! deferred evaluation is exact.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::events::{Event, StreamHeader};

/// Increment applied to a pixel per event.
pub const DELTA_INCR: f64 = 1.0;

/// A dense integrated frame, indexed `[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub values: Array2<f64>,
    pub ts: u64,
}

impl Frame {
    pub fn zeros(header: StreamHeader, ts: u64) -> Self {
        Self {
            values: Array2::zeros((header.height as usize, header.width as usize)),
            ts,
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[[y, x]]
    }
}

#[derive(Debug, Clone)]
pub struct IntegratorState {
    header: StreamHeader,
    lambda: f64,
    values: Vec<f64>,
    touched: Vec<u64>,
    clock: Option<u64>,
}

impl IntegratorState {
    /// `lambda` is the leak rate in value units per microsecond.
    pub fn new(header: StreamHeader, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::validation(format!(
                "leak rate must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            header,
            lambda,
            values: vec![0.0; header.pixels()],
            touched: vec![0; header.pixels()],
            clock: None,
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest timestamp applied so far. Regressing timestamps never move it
    /// backwards, which is what makes a regression count as `dt = 0`.
    pub fn last_event_ts(&self) -> Option<u64> {
        self.clock
    }

    pub fn apply_event(&mut self, e: &Event) -> Result<()> {
        self.header.check(e)?;
        let now = self.clock.map_or(e.ts, |c| c.max(e.ts));
        self.clock = Some(now);
        let idx = self.index(e.x as usize, e.y as usize);
        self.values[idx] = self.decayed(idx, now) + DELTA_INCR;
        self.touched[idx] = now;
        Ok(())
    }

    /// Value of pixel `(x, y)` at `ts`. Times before the last applied event
    /// read as the last event time.
    pub fn value_at(&self, x: usize, y: usize, ts: u64) -> f64 {
        self.decayed(self.index(x, y), ts)
    }

    /// Materializes the frame at `ts`.
    pub fn snapshot(&self, ts: u64) -> Frame {
        let w = self.header.width as usize;
        let h = self.header.height as usize;
        let values = Array2::from_shape_fn((h, w), |(y, x)| self.decayed(y * w + x, ts));
        Frame { values, ts }
    }

    fn decayed(&self, idx: usize, ts: u64) -> f64 {
        let v = self.values[idx];
        if v == 0.0 {
            return 0.0;
        }
        let elapsed = ts.saturating_sub(self.touched[idx]) as f64;
        (v - self.lambda * elapsed).max(0.0)
    }

    fn index(&self, x: usize, y: usize) -> usize {
        y * self.header.width as usize + x
    }
}

/// Fixed-capacity queue of interval-end snapshots; pushing at capacity
/// evicts the oldest frame.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    frames: VecDeque<Frame>,
    capacity: usize,
}

impl FrameBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("frame buffer capacity must be at least 1"));
        }
        Ok(Self {
            frames: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    /// Buffer sized for an activity window of length `l_w` with representative
    /// position `r_w` (1-based): `l_w - r_w + 1` frames.
    pub fn for_window(l_w: usize, r_w: usize) -> Result<Self> {
        if r_w == 0 || r_w > l_w {
            return Err(Error::validation(format!(
                "representative position {r_w} outside window of length {l_w}"
            )));
        }
        Self::new(l_w - r_w + 1)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, frame: Frame) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    /// Frame pushed `k` pushes ago (`k = 0` is the newest). `Ok(None)` means
    /// the buffer does not hold that many frames yet.
    pub fn frame_at_delay(&self, k: usize) -> Result<Option<&Frame>> {
        if k >= self.capacity {
            return Err(Error::validation(format!(
                "delay {k} outside buffer capacity {}",
                self.capacity
            )));
        }
        if k >= self.frames.len() {
            return Ok(None);
        }
        Ok(self.frames.get(self.frames.len() - 1 - k))
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Polarity;

    fn hdr() -> StreamHeader {
        StreamHeader::new(4, 3).unwrap()
    }

    fn ev(x: u16, y: u16, ts: u64) -> Event {
        Event::new(x, y, ts, Polarity::On)
    }

    #[test]
    fn first_event_sets_one() {
        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        s.apply_event(&ev(1, 2, 10)).unwrap();
        assert_eq!(s.snapshot(10).get(1, 2), 1.0);
        assert_eq!(s.snapshot(10).get(0, 0), 0.0);
    }

    #[test]
    fn decays_linearly_then_clamps() {
        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        s.apply_event(&ev(0, 0, 0)).unwrap();
        s.apply_event(&ev(3, 2, 4000)).unwrap();
        assert!((s.snapshot(4000).get(0, 0) - 0.6).abs() < 1e-12);

        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        s.apply_event(&ev(0, 0, 0)).unwrap();
        // 1.0 - 0.7 = 0.3 left, then 5000 us more
        assert!((s.value_at(0, 0, 7000) - 0.3).abs() < 1e-12);
        s.apply_event(&ev(3, 2, 12_000)).unwrap();
        assert_eq!(s.snapshot(12_000).get(0, 0), 0.0);
    }

    #[test]
    fn snapshot_is_idempotent() {
        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        s.apply_event(&ev(1, 1, 5)).unwrap();
        s.apply_event(&ev(1, 1, 50)).unwrap();
        assert_eq!(s.snapshot(80), s.snapshot(80));
        assert!((s.snapshot(50).get(1, 1) - (2.0 - 45.0 * 1e-4)).abs() < 1e-12);
    }

    #[test]
    fn regression_counts_as_zero_elapsed() {
        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        s.apply_event(&ev(0, 0, 1000)).unwrap();
        s.apply_event(&ev(1, 0, 500)).unwrap();
        assert_eq!(s.last_event_ts(), Some(1000));
        let f = s.snapshot(1000);
        assert_eq!(f.get(0, 0), 1.0);
        assert_eq!(f.get(1, 0), 1.0);
    }

    #[test]
    fn out_of_bounds_event_rejected() {
        let mut s = IntegratorState::new(hdr(), 1e-4).unwrap();
        assert!(s.apply_event(&ev(4, 0, 0)).is_err());
        assert!(IntegratorState::new(hdr(), -1.0).is_err());
    }

    #[test]
    fn buffer_capacity_from_window() {
        assert_eq!(FrameBuffer::for_window(101, 51).unwrap().capacity(), 51);
        assert_eq!(FrameBuffer::for_window(81, 41).unwrap().capacity(), 41);
        assert!(FrameBuffer::for_window(5, 6).is_err());
    }

    #[test]
    fn buffer_ring_semantics() {
        let mut b = FrameBuffer::for_window(101, 51).unwrap();
        assert!(b.frame_at_delay(0).unwrap().is_none());
        for ts in 0..51 {
            b.push(Frame::zeros(hdr(), ts));
        }
        assert_eq!(b.frame_at_delay(50).unwrap().unwrap().ts, 0);
        b.push(Frame::zeros(hdr(), 51));
        assert_eq!(b.len(), 51);
        assert_eq!(b.frame_at_delay(50).unwrap().unwrap().ts, 1);
        assert_eq!(b.frame_at_delay(0).unwrap().unwrap().ts, 51);
        assert!(b.frame_at_delay(51).is_err());
    }
}
