use evattn_core::{Event, FrameBuffer, IntegratorState, Polarity, StreamHeader};
use proptest::prelude::*;

fn hdr() -> StreamHeader {
    StreamHeader::new(16, 12).unwrap()
}

fn arb_stream(max_len: usize) -> impl Strategy<Value = Vec<Event>> {
    // signed gaps exercise timestamp regressions
    prop::collection::vec((0u16..16, 0u16..12, -200i64..3000), 1..max_len).prop_map(|v| {
        let mut ts = 10_000i64;
        v.into_iter()
            .map(|(x, y, gap)| {
                ts = (ts + gap).max(0);
                Event::new(x, y, ts as u64, Polarity::On)
            })
            .collect()
    })
}

fn run(events: &[Event], lambda: f64) -> IntegratorState {
    let mut st = IntegratorState::new(hdr(), lambda).unwrap();
    for e in events {
        st.apply_event(e).unwrap();
    }
    st
}

proptest! {
    #[test]
    fn values_never_negative(events in arb_stream(200), lambda in 0.0f64..0.01, probe in 0u64..100_000) {
        let st = run(&events, lambda);
        let last = events.last().unwrap().ts;
        let frame = st.snapshot(last + probe);
        prop_assert!(frame.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn decay_composes(p in 0.0f64..50.0, lambda in 0.0f64..0.01, a in 0u64..10_000, b in 0u64..10_000) {
        let step = |v: f64, dt: u64| (v - lambda * dt as f64).max(0.0);
        let twice = step(step(p, a), b);
        let once = step(p, a + b);
        prop_assert!((twice - once).abs() <= 1e-12 * p.max(1.0));
    }

    #[test]
    fn untouched_pixels_decay_monotonically(events in arb_stream(100), lambda in 0.0f64..0.01) {
        let st = run(&events, lambda);
        let last = events.iter().map(|e| e.ts).max().unwrap();
        let mut prev = st.snapshot(last);
        for k in 1..20u64 {
            let next = st.snapshot(last + k * 500);
            for (a, b) in prev.values.iter().zip(next.values.iter()) {
                prop_assert!(b <= a);
            }
            prev = next;
        }
    }

    #[test]
    fn lazy_matches_eager(events in arb_stream(300), lambda in 0.0f64..0.005) {
        let st = run(&events, lambda);
        let mut eager = vec![0.0f64; 16 * 12];
        let mut clock: Option<u64> = None;
        for e in &events {
            let now = clock.map_or(e.ts, |c| c.max(e.ts));
            let dt = clock.map_or(0, |c| now - c) as f64;
            for v in eager.iter_mut() {
                *v = (*v - lambda * dt).max(0.0);
            }
            eager[e.y as usize * 16 + e.x as usize] += 1.0;
            clock = Some(now);
        }
        let snap = st.snapshot(clock.unwrap());
        for (a, b) in snap.values.iter().zip(&eager) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }
}

#[test]
fn frame_buffer_holds_last_capacity_frames() {
    let mut buf = FrameBuffer::for_window(101, 51).unwrap();
    assert_eq!(buf.capacity(), 51);
    let st = IntegratorState::new(hdr(), 0.0).unwrap();
    for t in 0..60u64 {
        buf.push(st.snapshot(t));
        let held = (t + 1).min(51) as usize;
        assert_eq!(buf.len(), held);
        assert_eq!(buf.frame_at_delay(0).unwrap().unwrap().ts, t);
        assert_eq!(buf.frame_at_delay(held - 1).unwrap().unwrap().ts, t + 1 - held as u64);
    }
    assert!(buf.frame_at_delay(51).is_err());
}
