//! Shipped dataset profiles.
//!
//! Region and patch sizes per dataset and extraction method, window settings
//! per dataset family, and the attention patch size per dataset. Geometry and
//! leak rate are defaults that a config file may override.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Centered,
    Follower,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Centered => "centered",
            Method::Follower => "follower",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Profile {
    pub name: &'static str,
    pub dataset: &'static str,
    pub method: Method,
    pub s_r: usize,
    /// Region side; regions are square (`W_r = H_r`).
    pub region: usize,
    pub n: usize,
    pub l_w: usize,
    pub r_w: usize,
    pub l_bin_us: u64,
    pub width: u32,
    pub height: u32,
    /// Patch side for the attention pipeline.
    pub attention_n: usize,
    /// Leak rate in value units per microsecond.
    pub lambda: f64,
}

struct Dataset {
    key: &'static str,
    label: &'static str,
    centered: (usize, usize, usize),
    follower: (usize, usize, usize),
    window: (usize, usize),
    side: u32,
    attention_n: usize,
}

/// `(s_r, W_r = H_r, N)` per method.
const DATASETS: [Dataset; 8] = [
    Dataset { key: "s-dvs-sc4", label: "S-DVS sc4", centered: (11, 24, 29), follower: (5, 9, 13), window: (81, 41), side: 128, attention_n: 12 },
    Dataset { key: "s-dvs-sc8", label: "S-DVS sc8", centered: (24, 32, 55), follower: (15, 23, 23), window: (81, 41), side: 128, attention_n: 24 },
    Dataset { key: "s-dvs-sc16", label: "S-DVS sc16", centered: (24, 32, 105), follower: (24, 32, 53), window: (81, 41), side: 128, attention_n: 48 },
    Dataset { key: "s-dvs-sc4+8", label: "S-DVS sc4+8", centered: (24, 32, 55), follower: (24, 32, 23), window: (81, 41), side: 128, attention_n: 24 },
    Dataset { key: "s-dvs-all", label: "S-DVS all", centered: (24, 32, 105), follower: (24, 32, 53), window: (81, 41), side: 128, attention_n: 48 },
    Dataset { key: "s-n", label: "S-N", centered: (5, 23, 29), follower: (5, 9, 13), window: (101, 51), side: 68, attention_n: 12 },
    Dataset { key: "cif10", label: "CIF10", centered: (10, 48, 105), follower: (12, 32, 75), window: (101, 51), side: 128, attention_n: 48 },
    Dataset { key: "cal101", label: "Cal101", centered: (10, 48, 105), follower: (12, 32, 75), window: (101, 51), side: 128, attention_n: 48 },
];

pub const DEFAULT_PROFILE: &str = "s-n-centered";
pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_L_BIN_US: u64 = 1000;

const NAMES: [&str; 16] = [
    "s-dvs-sc4-centered",
    "s-dvs-sc8-centered",
    "s-dvs-sc16-centered",
    "s-dvs-sc4+8-centered",
    "s-dvs-all-centered",
    "s-n-centered",
    "cif10-centered",
    "cal101-centered",
    "s-dvs-sc4-follower",
    "s-dvs-sc8-follower",
    "s-dvs-sc16-follower",
    "s-dvs-sc4+8-follower",
    "s-dvs-all-follower",
    "s-n-follower",
    "cif10-follower",
    "cal101-follower",
];

fn build(idx: usize) -> Profile {
    let d = &DATASETS[idx % DATASETS.len()];
    let method = if idx < DATASETS.len() {
        Method::Centered
    } else {
        Method::Follower
    };
    let (s_r, region, n) = match method {
        Method::Centered => d.centered,
        Method::Follower => d.follower,
    };
    debug_assert!(NAMES[idx].starts_with(d.key));
    Profile {
        name: NAMES[idx],
        dataset: d.label,
        method,
        s_r,
        region,
        n,
        l_w: d.window.0,
        r_w: d.window.1,
        l_bin_us: DEFAULT_L_BIN_US,
        width: d.side,
        height: d.side,
        attention_n: d.attention_n,
        lambda: DEFAULT_LAMBDA,
    }
}

pub fn all() -> Vec<Profile> {
    (0..NAMES.len()).map(build).collect()
}

pub fn get(name: &str) -> Option<Profile> {
    NAMES.iter().position(|&n| n == name).map(build)
}

pub fn names() -> &'static [&'static str] {
    &NAMES
}
