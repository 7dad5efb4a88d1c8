//! Fixtures shared by the criterion benches.

use evattn_core::events::synth_saccade;
use evattn_core::{EventStream, SaccadeParams, StreamHeader};

pub fn saccade_stream(side: u32, rate: f64, seed: u64) -> EventStream {
    let p = SaccadeParams {
        blob_radius: 3.0,
        geometry: StreamHeader::new(side, side).expect("nonzero side"),
        n_saccades: 3,
        saccade_ms: 100.0,
        rate,
        amplitude: f64::from(side) * 0.45,
        seed,
    };
    synth_saccade(&p).expect("valid fixture")
}
