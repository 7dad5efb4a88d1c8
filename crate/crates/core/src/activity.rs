//! Region grid, per-region activity windows and global-statistics peak
//! detection.
//!
//! Each closed interval appends one event count per region to that region's
//! window. Once a window holds `l_w` values, the value at the representative
//! position `r_w` (1-based, counted from the oldest value) is a peak if it is
//! at least every other value in the window and strictly above
//! `mean + alpha * std` of every activity value seen so far over the whole
//! grid. The oldest value is then evicted.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{Event, StreamHeader};

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn union(&self, other: &PixelBox) -> PixelBox {
        PixelBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionGrid {
    pub frame: StreamHeader,
    pub region_w: usize,
    pub region_h: usize,
    pub stride: usize,
    /// Grid columns (A).
    pub cols: usize,
    /// Grid rows (B).
    pub rows: usize,
}

impl RegionGrid {
    pub fn new(frame: StreamHeader, region_w: usize, region_h: usize, stride: usize) -> Result<Self> {
        let (fw, fh) = (frame.width as usize, frame.height as usize);
        if stride == 0 {
            return Err(Error::validation("region stride must be at least 1"));
        }
        if region_w == 0 || region_h == 0 {
            return Err(Error::validation("regions must be at least 1x1"));
        }
        if region_w > fw || region_h > fh {
            return Err(Error::validation(format!(
                "{region_w}x{region_h} regions do not fit a {fw}x{fh} frame"
            )));
        }
        Ok(Self {
            frame,
            region_w,
            region_h,
            stride,
            cols: (fw - region_w) / stride + 1,
            rows: (fh - region_h) / stride + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel rectangle of region `(a, b)` (column, row).
    pub fn rect(&self, a: usize, b: usize) -> PixelBox {
        PixelBox {
            x0: a * self.stride,
            y0: b * self.stride,
            x1: a * self.stride + self.region_w,
            y1: b * self.stride + self.region_h,
        }
    }

    /// Inclusive range of grid indices along one axis whose regions contain
    /// coordinate `p`; `None` when no region does.
    fn axis_span(p: usize, extent: usize, stride: usize, count: usize) -> Option<(usize, usize)> {
        let lo = if p + 1 > extent {
            (p + 1 - extent).div_ceil(stride)
        } else {
            0
        };
        let hi = (p / stride).min(count - 1);
        (lo <= hi).then_some((lo, hi))
    }

    /// Regions containing pixel `(x, y)`, as `(a, b)` pairs in row-major order.
    pub fn regions_containing(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
        let xs = Self::axis_span(x, self.region_w, self.stride, self.cols);
        let ys = Self::axis_span(y, self.region_h, self.stride, self.rows);
        let (ax, bx) = xs.unwrap_or((1, 0));
        let (ay, by) = ys.unwrap_or((1, 0));
        (ay..=by).flat_map(move |b| (ax..=bx).map(move |a| (a, b)))
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        b * self.cols + a
    }
}

/// When the global statistics absorb the just-closed interval relative to the
/// peak test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsOrder {
    #[default]
    UpdateThenTest,
    TestThenUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityConfig {
    /// Window length `L_w` in intervals.
    pub l_w: usize,
    /// Representative position `R_w`, 1-based from the oldest value.
    pub r_w: usize,
    /// Interval length `L_bin` in microseconds.
    pub l_bin: u64,
    pub alpha: f64,
    pub stats_order: StatsOrder,
}

impl ActivityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_w == 0 {
            return Err(Error::config("l_w", "window length must be at least 1"));
        }
        if self.r_w == 0 || self.r_w > self.l_w {
            return Err(Error::config(
                "r_w",
                format!("must lie in 1..={} (window length)", self.l_w),
            ));
        }
        if self.l_bin == 0 {
            return Err(Error::config("l_bin_us", "interval length must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        Ok(())
    }

    /// Number of closures, counting the interval's own closure, until the
    /// interval is tested: `L_w - R_w + 1`.
    pub fn detection_delay(&self) -> usize {
        self.l_w - self.r_w + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeakEvent {
    /// Region column `a` and row `b`.
    pub region: (usize, usize),
    pub t1: u64,
    pub t2: u64,
    pub value: u32,
    /// Closures from the peak interval's own closure to detection, inclusive.
    pub frame_delay: usize,
    /// 0-based index of the peak interval since the stream started.
    pub interval_index: u64,
}

/// Global mean and standard deviation of all closed activity values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct ActivityState {
    grid: RegionGrid,
    cfg: ActivityConfig,
    /// Ring storage, `l_w` slots per region.
    ring: Vec<u32>,
    ring_start: usize,
    ring_len: usize,
    /// Per-region monotone queues of `(interval index, value)` for the window max.
    maxq: Vec<VecDeque<(u64, u32)>>,
    current: Vec<u32>,
    interval_start: Option<u64>,
    closed: u64,
    sum_val: u64,
    sum_sq: u128,
}

impl ActivityState {
    pub fn new(grid: RegionGrid, cfg: ActivityConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.len();
        Ok(Self {
            grid,
            cfg,
            ring: vec![0; n * cfg.l_w],
            ring_start: 0,
            ring_len: 0,
            maxq: vec![VecDeque::new(); n],
            current: vec![0; n],
            interval_start: None,
            closed: 0,
            sum_val: 0,
            sum_sq: 0,
        })
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn config(&self) -> &ActivityConfig {
        &self.cfg
    }

    /// Anchors the interval clock. Called implicitly by the first event.
    pub fn start(&mut self, ts: u64) {
        self.interval_start.get_or_insert(ts);
    }

    pub fn interval_start(&self) -> Option<u64> {
        self.interval_start
    }

    pub fn interval_end(&self) -> Option<u64> {
        self.interval_start.map(|s| s + self.cfg.l_bin)
    }

    /// True when an event at `ts` lies past the end of the open interval.
    pub fn needs_close(&self, ts: u64) -> bool {
        self.interval_end().is_some_and(|end| ts >= end)
    }

    /// Number of closed intervals (`N_int`).
    pub fn closed_intervals(&self) -> u64 {
        self.closed
    }

    pub fn sum_val(&self) -> u64 {
        self.sum_val
    }

    pub fn sum_sq(&self) -> u128 {
        self.sum_sq
    }

    /// `N_val = N_int * A * B`.
    pub fn n_val(&self) -> u64 {
        self.closed * self.grid.len() as u64
    }

    /// Counters of the open interval, indexed by [`RegionGrid::index`].
    pub fn current_counts(&self) -> &[u32] {
        &self.current
    }

    /// Activity values currently held by region `(a, b)`, oldest first.
    pub fn window(&self, a: usize, b: usize) -> Vec<u32> {
        let r = self.grid.index(a, b);
        (0..self.ring_len)
            .map(|i| self.ring[r * self.cfg.l_w + (self.ring_start + i) % self.cfg.l_w])
            .collect()
    }

    pub fn record_event(&mut self, e: &Event) {
        self.start(e.ts);
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= self.grid.frame.width as usize || y >= self.grid.frame.height as usize {
            return;
        }
        for (a, b) in self.grid.regions_containing(x, y) {
            let idx = self.grid.index(a, b);
            self.current[idx] += 1;
        }
    }

    pub fn stats(&self) -> Stats {
        stats_from_sums(self.sum_val, self.sum_sq, self.n_val())
    }

    /// Closes the open interval, appends its counters to every window, updates
    /// the global sums and tests every full window. Returns the detected peaks
    /// in row-major region order.
    pub fn close_interval(&mut self) -> Vec<PeakEvent> {
        let start = *self.interval_start.get_or_insert(0);
        let l_w = self.cfg.l_w;
        let k = self.closed;

        let write = (self.ring_start + self.ring_len) % l_w;
        let mut interval_sum = 0u64;
        let mut interval_sq = 0u128;
        for r in 0..self.grid.len() {
            let v = std::mem::take(&mut self.current[r]);
            self.ring[r * l_w + write] = v;
            interval_sum += u64::from(v);
            interval_sq += u128::from(v) * u128::from(v);

            let q = &mut self.maxq[r];
            while q.back().is_some_and(|&(_, back)| back <= v) {
                q.pop_back();
            }
            q.push_back((k, v));
            while q.front().is_some_and(|&(idx, _)| idx + (l_w as u64) <= k) {
                q.pop_front();
            }
        }
        self.ring_len += 1;

        let update = |s: &mut Self| {
            s.sum_val += interval_sum;
            s.sum_sq += interval_sq;
            s.closed += 1;
        };

        let mut peaks = Vec::new();
        if self.cfg.stats_order == StatsOrder::UpdateThenTest {
            update(self);
        }
        if self.ring_len == l_w {
            peaks = self.test_windows(start, k);
        }
        if self.cfg.stats_order == StatsOrder::TestThenUpdate {
            update(self);
        }
        if self.ring_len == l_w {
            self.ring_start = (self.ring_start + 1) % l_w;
            self.ring_len -= 1;
        }
        self.interval_start = Some(start + self.cfg.l_bin);
        peaks
    }

    /// Confidence gate `v > mu + alpha * sigma`. For integer `alpha >= 0` the
    /// test runs in integers as `(n v - S)^2 > alpha^2 (n Q - S^2)` with
    /// `n v > S`, so exact ties never depend on rounding.
    fn gate(&self) -> impl Fn(u32) -> bool {
        let n = u128::from(self.n_val());
        let (s, q) = (u128::from(self.sum_val), self.sum_sq);
        let alpha = self.cfg.alpha;
        let exact = (alpha >= 0.0 && alpha.fract() == 0.0 && alpha <= 1e6 && n > 0)
            .then(|| n.checked_mul(q).zip(s.checked_mul(s)))
            .flatten()
            .map(|(nq, ss)| (nq.saturating_sub(ss), (alpha as u128).pow(2)));
        let stats = self.stats();
        let gate = stats.mean + alpha * stats.std;
        move |v: u32| match exact {
            Some((d, a2)) => {
                let nv = n * u128::from(v);
                if nv <= s {
                    return false;
                }
                let lhs = nv - s;
                match (lhs.checked_mul(lhs), a2.checked_mul(d)) {
                    (Some(l), Some(r)) => l > r,
                    _ => f64::from(v) > gate,
                }
            }
            None => f64::from(v) > gate,
        }
    }

    fn test_windows(&self, current_start: u64, k: u64) -> Vec<PeakEvent> {
        let l_w = self.cfg.l_w;
        let back = (l_w - self.cfg.r_w) as u64;
        let above = self.gate();
        let rep_slot = (self.ring_start + self.cfg.r_w - 1) % l_w;
        let t1 = current_start - back * self.cfg.l_bin;

        let mut peaks = Vec::new();
        for b in 0..self.grid.rows {
            for a in 0..self.grid.cols {
                let r = self.grid.index(a, b);
                let rep = self.ring[r * l_w + rep_slot];
                if !above(rep) {
                    continue;
                }
                let max = self.maxq[r].front().map_or(0, |&(_, v)| v);
                if rep >= max {
                    peaks.push(PeakEvent {
                        region: (a, b),
                        t1,
                        t2: t1 + self.cfg.l_bin,
                        value: rep,
                        frame_delay: self.cfg.detection_delay(),
                        interval_index: k - back,
                    });
                }
            }
        }
        peaks
    }
}

/// Mean and standard deviation from exact integer sums; the variance
/// numerator `n * sum_sq - sum^2` is formed in integers so it is never
/// negative. The f64 fallback (on overflow) clamps at zero.
pub fn stats_from_sums(sum: u64, sum_sq: u128, n: u64) -> Stats {
    if n == 0 {
        return Stats { mean: 0.0, std: 0.0 };
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    let exact = u128::from(n)
        .checked_mul(sum_sq)
        .zip(u128::from(sum).checked_mul(u128::from(sum)))
        .map(|(a, b)| a.saturating_sub(b));
    let var = match exact {
        Some(num) => num as f64 / (nf * nf),
        None => (sum_sq as f64 / nf - mean * mean).max(0.0),
    };
    Stats {
        mean,
        std: var.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Polarity;

    fn hdr(w: u32, h: u32) -> StreamHeader {
        StreamHeader::new(w, h).unwrap()
    }

    fn cfg(l_w: usize, r_w: usize, alpha: f64) -> ActivityConfig {
        ActivityConfig {
            l_w,
            r_w,
            l_bin: 1000,
            alpha,
            stats_order: StatsOrder::UpdateThenTest,
        }
    }

    #[test]
    fn grid_counts() {
        assert_eq!(RegionGrid::new(hdr(68, 68), 23, 23, 5).unwrap().cols, 10);
        assert_eq!(RegionGrid::new(hdr(128, 128), 48, 48, 10).unwrap().cols, 9);
        let g = RegionGrid::new(hdr(20, 9), 20, 3, 7).unwrap();
        assert_eq!((g.cols, g.rows), (1, 1));
        assert!(RegionGrid::new(hdr(20, 20), 21, 3, 1).is_err());
        assert!(RegionGrid::new(hdr(20, 20), 2, 3, 0).is_err());
        assert_eq!(
            RegionGrid::new(hdr(68, 68), 23, 23, 5).unwrap().rect(2, 1),
            PixelBox { x0: 10, y0: 5, x1: 33, y1: 28 }
        );
    }

    #[test]
    fn containment_matches_brute_force() {
        for (w, h, rw, rh, s) in [(68, 68, 23, 23, 5), (30, 17, 4, 6, 3), (10, 10, 10, 10, 4), (13, 11, 2, 3, 5)] {
            let g = RegionGrid::new(hdr(w, h), rw, rh, s).unwrap();
            for y in 0..h as usize {
                for x in 0..w as usize {
                    let fast: Vec<_> = g.regions_containing(x, y).collect();
                    let mut slow = Vec::new();
                    for b in 0..g.rows {
                        for a in 0..g.cols {
                            if g.rect(a, b).contains(x, y) {
                                slow.push((a, b));
                            }
                        }
                    }
                    assert_eq!(fast, slow, "pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn record_event_counts_overlaps() {
        // 2x2 regions, stride 1: an interior pixel sits in 4 regions
        let g = RegionGrid::new(hdr(6, 6), 2, 2, 1).unwrap();
        let mut s = ActivityState::new(g, cfg(3, 2, 0.0)).unwrap();
        s.record_event(&Event::new(2, 2, 0, Polarity::On));
        assert_eq!(s.current_counts().iter().filter(|&&c| c == 1).count(), 4);

        let g = RegionGrid::new(hdr(6, 6), 3, 3, 3).unwrap();
        let mut s = ActivityState::new(g, cfg(3, 2, 0.0)).unwrap();
        s.record_event(&Event::new(0, 0, 0, Polarity::On));
        s.record_event(&Event::new(0, 0, 1, Polarity::On));
        assert_eq!(s.current_counts(), &[2, 0, 0, 0]);
    }

    fn feed_window(values: &[u32], r_w: usize, alpha: f64) -> (ActivityState, Vec<PeakEvent>) {
        let g = RegionGrid::new(hdr(1, 1), 1, 1, 1).unwrap();
        let mut s = ActivityState::new(g, cfg(values.len(), r_w, alpha)).unwrap();
        s.start(0);
        let mut peaks = Vec::new();
        for &v in values {
            for _ in 0..v {
                s.record_event(&Event::new(0, 0, s.interval_start().unwrap(), Polarity::On));
            }
            peaks.extend(s.close_interval());
        }
        (s, peaks)
    }

    #[test]
    fn representative_maximum_is_peak() {
        // mean 3.2, std 2.04 over the window itself: gate 4.1
        let (_, peaks) = feed_window(&[1, 3, 7, 3, 2], 3, 0.441);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].value, 7);
        assert_eq!((peaks[0].t1, peaks[0].t2), (2000, 3000));
        assert_eq!(peaks[0].frame_delay, 3);
        assert_eq!(peaks[0].interval_index, 2);
    }

    #[test]
    fn larger_neighbour_suppresses_peak() {
        let (_, peaks) = feed_window(&[1, 9, 7, 3, 2], 3, 0.0);
        assert!(peaks.is_empty());
    }

    #[test]
    fn ties_count_as_maxima_but_gate_applies() {
        let (_, peaks) = feed_window(&[4, 4, 4], 2, 0.0);
        // mean 4, std 0: 4 > 4 fails
        assert!(peaks.is_empty());
        let (_, peaks) = feed_window(&[0, 4, 4], 2, 0.0);
        assert_eq!(peaks.len(), 1);
    }

    #[test]
    fn window_evicts_oldest() {
        let (s, _) = feed_window(&[1, 2, 3, 4], 2, 0.0);
        assert_eq!(s.window(0, 0), vec![2, 3, 4]);
    }

    #[test]
    fn textbook_stats() {
        let vals = [2u64, 4, 4, 4, 5, 5, 7, 9];
        let sum: u64 = vals.iter().sum();
        let sq: u128 = vals.iter().map(|&v| u128::from(v * v)).sum();
        let st = stats_from_sums(sum, sq, 8);
        assert_eq!(st.mean, 5.0);
        assert_eq!(st.std, 2.0);
    }

    #[test]
    fn n_val_is_intervals_times_regions() {
        let g = RegionGrid::new(hdr(4, 3), 1, 1, 1).unwrap();
        let mut s = ActivityState::new(g, cfg(5, 3, 2.0)).unwrap();
        s.start(0);
        for _ in 0..10 {
            s.close_interval();
        }
        assert_eq!(s.n_val(), 120);
    }

    #[test]
    fn needs_close_at_interval_end() {
        let g = RegionGrid::new(hdr(4, 4), 2, 2, 2).unwrap();
        let mut s = ActivityState::new(g, cfg(5, 3, 2.0)).unwrap();
        assert!(!s.needs_close(10_000));
        s.record_event(&Event::new(0, 0, 500, Polarity::On));
        assert!(!s.needs_close(1499));
        assert!(s.needs_close(1500));
    }

    #[test]
    fn rejects_bad_config() {
        let g = RegionGrid::new(hdr(4, 4), 2, 2, 2).unwrap();
        assert!(ActivityState::new(g, cfg(5, 6, 2.0)).is_err());
        assert!(ActivityState::new(g, cfg(5, 0, 2.0)).is_err());
    }
}
