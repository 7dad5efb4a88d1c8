//! Runtime self-test: small randomized comparisons of the streaming and
//! factorized code paths against direct reference evaluations. Used by the
//! `check` command.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activity::{stats_from_sums, ActivityConfig, ActivityState, RegionGrid, StatsOrder};
use crate::draw::{self, build_filterbank, event_read, AttentionParams};
use crate::events::{Event, Polarity, StreamHeader};
use crate::integrator::{Frame, IntegratorState};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_events(rng: &mut ChaCha8Rng, header: StreamHeader, count: usize, max_gap: u64) -> Vec<Event> {
    let mut ts = 0;
    (0..count)
        .map(|_| {
            ts += rng.random_range(0..=max_gap);
            Event::new(
                rng.random_range(0..header.width) as u16,
                rng.random_range(0..header.height) as u16,
                ts,
                Polarity::On,
            )
        })
        .collect()
}

fn check_integrator(rng: &mut ChaCha8Rng) -> CheckResult {
    let header = StreamHeader { width: 34, height: 34 };
    let lambda = 1e-4;
    let events = random_events(rng, header, 2000, 400);
    let mut lazy = IntegratorState::new(header, lambda).expect("valid");
    let mut eager = vec![0.0f64; header.pixels()];
    let mut last = None;
    for e in &events {
        lazy.apply_event(e).expect("in bounds");
        let dt = last.map_or(0, |l| e.ts.saturating_sub(l)) as f64;
        for v in eager.iter_mut() {
            *v = (*v - lambda * dt).max(0.0);
        }
        eager[e.y as usize * 34 + e.x as usize] += 1.0;
        last = Some(e.ts);
    }
    let snap = lazy.snapshot(last.unwrap_or(0));
    let err = snap
        .values
        .iter()
        .zip(&eager)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    result("integrator lazy/eager", err <= 1e-12, format!("max abs diff {err:e}"))
}

fn check_peaks(rng: &mut ChaCha8Rng) -> CheckResult {
    let header = StreamHeader { width: 12, height: 12 };
    let grid = RegionGrid::new(header, 6, 6, 3).expect("valid grid");
    let l_w = 9;
    let r_w = rng.random_range(1..=l_w);
    let cfg = ActivityConfig {
        l_w,
        r_w,
        l_bin: 1000,
        alpha: 1.0,
        stats_order: StatsOrder::UpdateThenTest,
    };
    let mut state = ActivityState::new(grid, cfg).expect("valid");
    state.start(0);
    let mut history: Vec<Vec<u32>> = Vec::new();
    let mut streamed = Vec::new();
    for k in 0..200u64 {
        let burst = rng.random_range(0..8);
        for _ in 0..burst {
            let e = Event::new(rng.random_range(0..12), rng.random_range(0..12), k * 1000, Polarity::On);
            state.record_event(&e);
        }
        history.push(state.current_counts().to_vec());
        streamed.extend(state.close_interval().into_iter().map(|p| (p.interval_index, p.region)));
    }
    // store-everything reference
    let mut reference = Vec::new();
    let (mut sum, mut sq) = (0u64, 0u128);
    for k in 0..history.len() {
        for &v in &history[k] {
            sum += u64::from(v);
            sq += u128::from(v) * u128::from(v);
        }
        if k + 1 < l_w {
            continue;
        }
        let st = stats_from_sums(sum, sq, (k as u64 + 1) * grid.len() as u64);
        let gate = st.mean + st.std;
        let rep_k = k + 1 - l_w + r_w - 1;
        for b in 0..grid.rows {
            for a in 0..grid.cols {
                let r = grid.index(a, b);
                let rep = history[rep_k][r];
                let max = (k + 1 - l_w..=k).map(|j| history[j][r]).max().unwrap_or(0);
                if rep >= max && f64::from(rep) > gate {
                    reference.push((rep_k as u64, (a, b)));
                }
            }
        }
    }
    result(
        "peak detector vs reference",
        streamed == reference,
        format!("{} streamed, {} reference", streamed.len(), reference.len()),
    )
}

fn random_params(rng: &mut ChaCha8Rng) -> AttentionParams {
    AttentionParams {
        gx_tilde: rng.random_range(-0.5..0.5),
        gy_tilde: rng.random_range(-0.5..0.5),
        log_var: rng.random_range(-1.0..2.0),
        log_delta: rng.random_range(-1.5..0.0),
        log_gamma: rng.random_range(-0.5..0.5),
    }
}

fn check_read(rng: &mut ChaCha8Rng) -> CheckResult {
    let header = StreamHeader { width: 20, height: 16 };
    let n = 5;
    let mut worst = 0.0f64;
    let mut worst_row = 0.0f64;
    for _ in 0..20 {
        let p = random_params(rng);
        let fb = build_filterbank(&p, header, n).expect("finite");
        for s in draw::row_sums(&fb.fx).iter().chain(draw::row_sums(&fb.fy).iter()) {
            if *s != 0.0 {
                worst_row = worst_row.max((s - 1.0).abs());
            }
        }
        let frame = Frame {
            values: Array2::from_shape_fn((16, 20), |_| rng.random_range(0.0..3.0)),
            ts: 0,
        };
        let fast = draw::read(&frame, &fb).expect("dims");
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for y in 0..16 {
                    for x in 0..20 {
                        acc += fb.fy[[i, y]] * frame.values[[y, x]] * fb.fx[[j, x]];
                    }
                }
                worst = worst.max((fast[[i, j]] - fb.gamma * acc).abs());
            }
        }
    }
    result(
        "read vs triple loop",
        worst <= 1e-12 && worst_row <= 1e-9,
        format!("max abs diff {worst:e}, max row-sum error {worst_row:e}"),
    )
}

fn check_event_read(rng: &mut ChaCha8Rng) -> CheckResult {
    let header = StreamHeader { width: 34, height: 34 };
    let n = 12;
    let mut mismatches = 0;
    for _ in 0..200 {
        let mut p = random_params(rng);
        p.log_var = rng.random_range(-3.0..2.0);
        let fb = build_filterbank(&p, header, n).expect("finite");
        let e = Event::new(rng.random_range(0..34), rng.random_range(0..34), 0, Polarity::On);
        let mut one_hot = Frame::zeros(header, 0);
        one_hot.values[[e.y as usize, e.x as usize]] = 1.0;
        let patch = draw::read(&one_hot, &fb).expect("dims");
        let mut best = (0, 0, f64::NEG_INFINITY);
        for i in 0..n {
            for j in 0..n {
                if patch[[i, j]] > best.2 {
                    best = (i, j, patch[[i, j]]);
                }
            }
        }
        let expected = (best.2 > 1e-6).then_some((best.1 as u16, best.0 as u16));
        let got = event_read(&e, &fb, 1e-6).map(|o| (o.x, o.y));
        if got != expected {
            mismatches += 1;
        }
    }
    result("event read vs full argmax", mismatches == 0, format!("{mismatches} mismatches"))
}

fn check_gradient(rng: &mut ChaCha8Rng) -> CheckResult {
    let header = StreamHeader { width: 14, height: 11 };
    let n = 4;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let p = random_params(rng);
        let frame = Frame {
            values: Array2::from_shape_fn((11, 14), |_| rng.random_range(0.0..2.0)),
            ts: 0,
        };
        let up = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let g = draw::read_grad(&frame, &p, n, &up).expect("valid");
        let loss = |q: &AttentionParams| {
            let fb = build_filterbank(q, header, n).expect("finite");
            (draw::read(&frame, &fb).expect("dims") * &up).sum()
        };
        let base = p.to_array();
        let analytic = g.params.to_array();
        for k in 0..5 {
            let mut plus = base;
            let mut minus = base;
            plus[k] += h;
            minus[k] -= h;
            let numeric = (loss(&AttentionParams::from_array(plus)) - loss(&AttentionParams::from_array(minus))) / (2.0 * h);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
    }
    result("read gradient vs finite differences", worst <= 1e-4, format!("max rel err {worst:e}"))
}

/// Runs every check with a fixed seed.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_integrator(&mut rng),
        check_peaks(&mut rng),
        check_read(&mut rng),
        check_event_read(&mut rng),
        check_gradient(&mut rng),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run_all(7) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
