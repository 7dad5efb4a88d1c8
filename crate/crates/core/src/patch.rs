//! Patch placement on integrated frames: macro-region grouping of activated
//! grid cells, the centered and follower placement rules, and cropping.

use std::collections::VecDeque;
use std::fmt;

use ndarray::{s, Array2};
use serde::Serialize;

use crate::activity::{PixelBox, RegionGrid};
use crate::error::{Error, Result};
use crate::integrator::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchSource {
    Centered,
    Follower,
    Draw,
}

impl fmt::Display for PatchSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatchSource::Centered => "centered",
            PatchSource::Follower => "follower",
            PatchSource::Draw => "draw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    /// `n x n` pixel values indexed `[y, x]`.
    pub pixels: Array2<f64>,
    pub ts: u64,
    /// Top-left corner `(x0, y0)` in frame coordinates.
    pub origin: (usize, usize),
    pub source: PatchSource,
}

/// Grid cells (`A x B`) where a peak was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveMask {
    cols: usize,
    rows: usize,
    cells: Vec<bool>,
}

impl ActiveMask {
    pub fn new(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            cells: vec![false; cols * rows],
        }
    }

    pub fn for_grid(grid: &RegionGrid) -> Self {
        Self::new(grid.cols, grid.rows)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn set(&mut self, a: usize, b: usize, on: bool) {
        self.cells[b * self.cols + a] = on;
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.cells[b * self.cols + a]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Groups active cells into 8-connected components and returns each
/// component's pixel bounding box (union of its region rectangles). Components
/// are ordered by their first cell in row-major order.
pub fn macro_regions(mask: &ActiveMask, grid: &RegionGrid) -> Result<Vec<PixelBox>> {
    if mask.cols != grid.cols || mask.rows != grid.rows {
        return Err(Error::validation(format!(
            "mask is {}x{} but grid is {}x{}",
            mask.cols, mask.rows, grid.cols, grid.rows
        )));
    }
    let mut seen = vec![false; mask.cells.len()];
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    for b in 0..mask.rows {
        for a in 0..mask.cols {
            let idx = b * mask.cols + a;
            if !mask.cells[idx] || seen[idx] {
                continue;
            }
            seen[idx] = true;
            queue.push_back((a, b));
            let mut bbox = grid.rect(a, b);
            while let Some((ca, cb)) = queue.pop_front() {
                bbox = bbox.union(&grid.rect(ca, cb));
                for nb in cb.saturating_sub(1)..=(cb + 1).min(mask.rows - 1) {
                    for na in ca.saturating_sub(1)..=(ca + 1).min(mask.cols - 1) {
                        let nidx = nb * mask.cols + na;
                        if mask.cells[nidx] && !seen[nidx] {
                            seen[nidx] = true;
                            queue.push_back((na, nb));
                        }
                    }
                }
            }
            boxes.push(bbox);
        }
    }
    Ok(boxes)
}

/// Patch positions along one axis for a span `[start, end)`.
fn axis_positions(start: usize, end: usize, n: usize, limit: usize) -> Vec<usize> {
    let extent = end - start;
    let count = extent.div_ceil(n).max(1);
    let max_origin = (limit - n) as i64;
    if count == 1 {
        let centered = start as i64 + (extent as i64 - n as i64).div_euclid(2);
        return vec![centered.clamp(0, max_origin) as usize];
    }
    let span = (end - n - start) as f64;
    (0..count)
        .map(|i| {
            let pos = start as f64 + (i as f64 * span / (count - 1) as f64).round();
            (pos as i64).clamp(0, max_origin) as usize
        })
        .collect()
}

/// Equally spaced `n x n` patch origins covering `bbox`: per axis
/// `max(1, ceil(extent / n))` positions from the box start to `box end - n`,
/// a single patch being centered on the box. Origins are clamped into the
/// frame.
pub fn centered_patches(bbox: &PixelBox, n: usize, frame_w: usize, frame_h: usize) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Err(Error::validation("patch size must be at least 1"));
    }
    if n > frame_w || n > frame_h {
        return Err(Error::validation(format!(
            "patch size {n} exceeds {frame_w}x{frame_h} frame"
        )));
    }
    let xs = axis_positions(bbox.x0, bbox.x1, n, frame_w);
    let ys = axis_positions(bbox.y0, bbox.y1, n, frame_h);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Origin of an `n`-wide window centered on `p`, clamped into `[0, limit - n]`.
fn centered_origin(p: usize, n: usize, limit: usize) -> usize {
    p.saturating_sub(n / 2).min(limit - n)
}

/// Follower placement: a row-major scan of `bbox` that, at every pixel with
/// value `>= threshold` not yet covered by an emitted patch, emits an
/// `n x n` patch centered on it (clamped to the frame).
pub fn follower_patches(frame: &Frame, bbox: &PixelBox, threshold: f64, n: usize) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (frame.width(), frame.height());
    if !(threshold > 0.0) {
        return Err(Error::validation("follower threshold must be positive"));
    }
    if n == 0 || n > w || n > h {
        return Err(Error::validation(format!("patch size {n} invalid for {w}x{h} frame")));
    }
    if bbox.x1 > w || bbox.y1 > h {
        return Err(Error::validation("region box exceeds frame"));
    }
    let mut covered = vec![false; w * h];
    let mut origins = Vec::new();
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            if frame.get(x, y) < threshold || covered[y * w + x] {
                continue;
            }
            let ox = centered_origin(x, n, w);
            let oy = centered_origin(y, n, h);
            for cy in oy..oy + n {
                covered[cy * w + ox..cy * w + ox + n].fill(true);
            }
            origins.push((ox, oy));
        }
    }
    Ok(origins)
}

/// Copies the `n x n` window at `origin`, shifting the origin inward when the
/// window would cross the frame border.
pub fn crop(frame: &Frame, origin: (usize, usize), n: usize, source: PatchSource) -> Result<PatchRecord> {
    let (w, h) = (frame.width(), frame.height());
    if n == 0 || n > w || n > h {
        return Err(Error::validation(format!(
            "patch size {n} exceeds {w}x{h} frame"
        )));
    }
    let x0 = origin.0.min(w - n);
    let y0 = origin.1.min(h - n);
    Ok(PatchRecord {
        pixels: frame.values.slice(s![y0..y0 + n, x0..x0 + n]).to_owned(),
        ts: frame.ts,
        origin: (x0, y0),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::StreamHeader;

    fn grid(w: u32, h: u32, r: usize, s: usize) -> RegionGrid {
        RegionGrid::new(StreamHeader::new(w, h).unwrap(), r, r, s).unwrap()
    }

    #[test]
    fn single_cell_box_is_its_rect() {
        let g = grid(68, 68, 23, 5);
        let mut m = ActiveMask::for_grid(&g);
        m.set(3, 4, true);
        assert_eq!(macro_regions(&m, &g).unwrap(), vec![g.rect(3, 4)]);
    }

    #[test]
    fn diagonal_cells_merge() {
        let g = grid(40, 40, 10, 10);
        let mut m = ActiveMask::for_grid(&g);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(3, 3, true);
        let boxes = macro_regions(&m, &g).unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0], PixelBox { x0: 0, y0: 0, x1: 20, y1: 20 });
        assert_eq!(boxes[1], g.rect(3, 3));
    }

    #[test]
    fn mask_dims_checked() {
        let g = grid(40, 40, 10, 10);
        assert!(macro_regions(&ActiveMask::new(2, 4), &g).is_err());
    }

    #[test]
    fn centered_single_patch() {
        let b = PixelBox { x0: 10, y0: 10, x1: 39, y1: 39 };
        assert_eq!(centered_patches(&b, 29, 68, 68).unwrap(), vec![(10, 10)]);
        // a 23-wide region is centered inside a 29 patch
        let b = PixelBox { x0: 10, y0: 0, x1: 33, y1: 23 };
        assert_eq!(centered_patches(&b, 29, 68, 68).unwrap(), vec![(7, 0)]);
    }

    #[test]
    fn centered_two_positions() {
        let b = PixelBox { x0: 0, y0: 0, x1: 30, y1: 29 };
        assert_eq!(centered_patches(&b, 29, 68, 68).unwrap(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn centered_rejects_oversized_patch() {
        let b = PixelBox { x0: 0, y0: 0, x1: 5, y1: 5 };
        assert!(centered_patches(&b, 40, 34, 34).is_err());
    }

    fn frame_with(w: usize, h: usize, pts: &[(usize, usize)]) -> Frame {
        let mut values = Array2::zeros((h, w));
        for &(x, y) in pts {
            values[[y, x]] = 1.0;
        }
        Frame { values, ts: 42 }
    }

    #[test]
    fn follower_single_pixel() {
        let f = frame_with(30, 30, &[(15, 12)]);
        let full = PixelBox { x0: 0, y0: 0, x1: 30, y1: 30 };
        assert_eq!(follower_patches(&f, &full, 0.1, 5).unwrap(), vec![(13, 10)]);
    }

    #[test]
    fn follower_distant_pixels_need_two() {
        let f = frame_with(40, 40, &[(2, 2), (17, 2)]);
        let full = PixelBox { x0: 0, y0: 0, x1: 40, y1: 40 };
        assert_eq!(follower_patches(&f, &full, 0.1, 5).unwrap(), vec![(0, 0), (15, 0)]);
    }

    #[test]
    fn follower_restricted_to_box() {
        let f = frame_with(40, 40, &[(2, 2), (30, 30)]);
        let b = PixelBox { x0: 20, y0: 20, x1: 40, y1: 40 };
        assert_eq!(follower_patches(&f, &b, 0.1, 5).unwrap(), vec![(28, 28)]);
        assert!(follower_patches(&f, &b, 0.0, 5).is_err());
    }

    #[test]
    fn crop_identity_and_clamp() {
        let mut f = frame_with(6, 6, &[(1, 2), (5, 5)]);
        f.values[[0, 0]] = 3.0;
        let p = crop(&f, (0, 0), 6, PatchSource::Centered).unwrap();
        assert_eq!(p.pixels, f.values);
        assert_eq!(p.ts, 42);
        let p = crop(&f, (4, 4), 3, PatchSource::Follower).unwrap();
        assert_eq!(p.origin, (3, 3));
        assert_eq!(p.pixels[[2, 2]], 1.0);
        assert!(crop(&f, (0, 0), 7, PatchSource::Centered).is_err());
    }
}
