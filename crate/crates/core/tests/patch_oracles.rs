use std::collections::BTreeSet;

use evattn_core::patch::{centered_patches, crop, follower_patches, macro_regions};
use evattn_core::{ActiveMask, Frame, PatchSource, PixelBox, RegionGrid, StreamHeader};
use ndarray::Array2;
use proptest::prelude::*;

fn flood_fill_components(mask: &[Vec<bool>]) -> Vec<BTreeSet<(usize, usize)>> {
    let rows = mask.len();
    let cols = mask[0].len();
    let mut label = vec![vec![usize::MAX; cols]; rows];
    let mut comps: Vec<BTreeSet<(usize, usize)>> = Vec::new();
    for b in 0..rows {
        for a in 0..cols {
            if !mask[b][a] || label[b][a] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut comp = BTreeSet::new();
            let mut stack = vec![(a, b)];
            while let Some((ca, cb)) = stack.pop() {
                if label[cb][ca] != usize::MAX {
                    continue;
                }
                label[cb][ca] = id;
                comp.insert((ca, cb));
                for db in -1i64..=1 {
                    for da in -1i64..=1 {
                        let (na, nb) = (ca as i64 + da, cb as i64 + db);
                        if na >= 0 && nb >= 0 && (na as usize) < cols && (nb as usize) < rows {
                            let (na, nb) = (na as usize, nb as usize);
                            if mask[nb][na] && label[nb][na] == usize::MAX {
                                stack.push((na, nb));
                            }
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

fn bbox_of(comp: &BTreeSet<(usize, usize)>, g: &RegionGrid) -> PixelBox {
    comp.iter().map(|&(a, b)| g.rect(a, b)).reduce(|x, y| x.union(&y)).unwrap()
}

fn covered(origins: &[(usize, usize)], n: usize, x: usize, y: usize) -> bool {
    origins.iter().any(|&(ox, oy)| x >= ox && x < ox + n && y >= oy && y < oy + n)
}

proptest! {
    #[test]
    fn macro_regions_match_flood_fill(cells in prop::collection::vec(prop::bool::weighted(0.3), 100)) {
        let g = RegionGrid::new(StreamHeader::new(68, 68).unwrap(), 23, 23, 5).unwrap();
        let mut mask = ActiveMask::for_grid(&g);
        let mut rows = vec![vec![false; 10]; 10];
        for (i, &c) in cells.iter().enumerate() {
            mask.set(i % 10, i / 10, c);
            rows[i / 10][i % 10] = c;
        }
        let got = macro_regions(&mask, &g).unwrap();
        let want: Vec<PixelBox> = flood_fill_components(&rows).iter().map(|c| bbox_of(c, &g)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn centered_patches_cover_box_with_even_spacing(
        x0 in 0usize..100, y0 in 0usize..100, w in 1usize..120, h in 1usize..120, n in 1usize..40,
    ) {
        let (fw, fh) = (128usize, 128usize);
        let bbox = PixelBox { x0: x0.min(fw - 1), y0: y0.min(fh - 1), x1: (x0 + w).min(fw), y1: (y0 + h).min(fh) };
        prop_assume!(bbox.x1 > bbox.x0 && bbox.y1 > bbox.y0);
        let origins = centered_patches(&bbox, n, fw, fh).unwrap();
        for y in bbox.y0..bbox.y1 {
            for x in bbox.x0..bbox.x1 {
                prop_assert!(covered(&origins, n, x, y), "({}, {}) uncovered", x, y);
            }
        }
        let xs: BTreeSet<usize> = origins.iter().map(|o| o.0).collect();
        let ys: BTreeSet<usize> = origins.iter().map(|o| o.1).collect();
        for axis in [xs, ys] {
            let v: Vec<usize> = axis.into_iter().collect();
            let gaps: Vec<usize> = v.windows(2).map(|p| p[1] - p[0]).collect();
            if let (Some(lo), Some(hi)) = (gaps.iter().min(), gaps.iter().max()) {
                prop_assert!(hi - lo <= 1, "gaps {:?}", gaps);
                prop_assert!(*hi <= n);
            }
        }
    }

    #[test]
    fn follower_covers_and_matches_rescan(
        pts in prop::collection::vec((0usize..64, 0usize..48, 0.05f64..2.0), 0..40),
        n in 1usize..20,
    ) {
        let mut values = Array2::zeros((48, 64));
        for &(x, y, v) in &pts {
            values[[y, x]] = v;
        }
        let frame = Frame { values, ts: 7 };
        let bbox = PixelBox { x0: 0, y0: 0, x1: 64, y1: 48 };
        let origins = follower_patches(&frame, &bbox, 0.1, n).unwrap();
        // independent re-scan: first uncovered hot pixel seeds the next patch
        let mut expect: Vec<(usize, usize)> = Vec::new();
        for y in 0..48 {
            for x in 0..64 {
                if frame.values[[y, x]] >= 0.1 && !covered(&expect, n, x, y) {
                    let ox = (x as i64 - (n / 2) as i64).clamp(0, (64 - n) as i64) as usize;
                    let oy = (y as i64 - (n / 2) as i64).clamp(0, (48 - n) as i64) as usize;
                    expect.push((ox, oy));
                }
            }
        }
        for y in 0..48 {
            for x in 0..64 {
                if frame.values[[y, x]] >= 0.1 {
                    prop_assert!(covered(&origins, n, x, y));
                }
            }
        }
        prop_assert!(origins.len() <= expect.len());
        prop_assert_eq!(&origins, &expect);
        prop_assert_eq!(follower_patches(&frame, &bbox, 0.1, n).unwrap(), origins);
    }

    #[test]
    fn overlapping_crops_agree(seed in any::<u64>(), ax in 0usize..40, ay in 0usize..40, bx in 0usize..40, by in 0usize..40) {
        let values = Array2::from_shape_fn((50, 50), |(y, x)| ((x * 31 + y * 17) as u64 ^ seed) as f64 % 97.0);
        let frame = Frame { values, ts: 3 };
        let n = 11;
        let a = crop(&frame, (ax, ay), n, PatchSource::Centered).unwrap();
        let b = crop(&frame, (bx, by), n, PatchSource::Centered).unwrap();
        for y in 0..50 {
            for x in 0..50 {
                let ina = x >= a.origin.0 && x < a.origin.0 + n && y >= a.origin.1 && y < a.origin.1 + n;
                let inb = x >= b.origin.0 && x < b.origin.0 + n && y >= b.origin.1 && y < b.origin.1 + n;
                if ina && inb {
                    let va = a.pixels[[y - a.origin.1, x - a.origin.0]];
                    let vb = b.pixels[[y - b.origin.1, x - b.origin.0]];
                    prop_assert_eq!(va, vb);
                    prop_assert_eq!(va, frame.values[[y, x]]);
                }
            }
        }
    }
}

#[test]
fn centered_examples() {
    let b = PixelBox { x0: 10, y0: 10, x1: 39, y1: 39 };
    assert_eq!(centered_patches(&b, 29, 68, 68).unwrap(), vec![(10, 10)]);
    let b = PixelBox { x0: 0, y0: 0, x1: 30, y1: 29 };
    assert_eq!(centered_patches(&b, 29, 68, 68).unwrap(), vec![(0, 0), (1, 0)]);
}

#[test]
fn follower_examples() {
    let mut frame = Frame::zeros(StreamHeader::new(64, 64).unwrap(), 0);
    frame.values[[30, 30]] = 1.0;
    let all = PixelBox { x0: 0, y0: 0, x1: 64, y1: 64 };
    assert_eq!(follower_patches(&frame, &all, 0.1, 9).unwrap(), vec![(26, 26)]);
    frame.values[[30, 30 - 27]] = 1.0;
    assert_eq!(follower_patches(&frame, &all, 0.1, 9).unwrap().len(), 2);
}
