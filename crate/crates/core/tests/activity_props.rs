use evattn_core::{ActivityConfig, ActivityState, Event, Polarity, RegionGrid, StatsOrder, StreamHeader};
use proptest::prelude::*;

fn grid(w: u32, r: usize, s: usize) -> RegionGrid {
    RegionGrid::new(StreamHeader::new(w, w).unwrap(), r, r, s).unwrap()
}

proptest! {
    #[test]
    fn regions_containing_matches_scan(w in 8u32..40, r in 1usize..8, s in 1usize..6, x in 0usize..40, y in 0usize..40) {
        let g = grid(w, r.min(w as usize), s);
        let (x, y) = (x % w as usize, y % w as usize);
        let fast: Vec<_> = g.regions_containing(x, y).collect();
        let mut slow = Vec::new();
        for b in 0..g.rows {
            for a in 0..g.cols {
                if g.rect(a, b).contains(x, y) {
                    slow.push((a, b));
                }
            }
        }
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn flat_windows_peak_only_above_gate(v in 0u32..5, alpha in 0.0f64..3.0) {
        // every region sees the same count every interval: sigma = 0, mu = v
        let g = grid(4, 2, 2);
        let cfg = ActivityConfig { l_w: 5, r_w: 3, l_bin: 1000, alpha, stats_order: StatsOrder::UpdateThenTest };
        let mut st = ActivityState::new(g, cfg).unwrap();
        st.start(0);
        let mut peaks = 0;
        for k in 0..20u64 {
            for &(x, y) in &[(0u16, 0u16), (2, 0), (0, 2), (2, 2)] {
                for _ in 0..v {
                    st.record_event(&Event::new(x, y, k * 1000, Polarity::On));
                }
            }
            peaks += st.close_interval().len();
        }
        prop_assert_eq!(peaks, 0);
    }
}

#[test]
fn example_grid_sizes() {
    assert_eq!(grid(68, 23, 5).cols, 10);
    assert_eq!(grid(128, 48, 10).cols, 9);
    assert_eq!(grid(30, 30, 7).len(), 1);
}
