//! Pipeline configuration.
//!
//! Sources are layered as profile defaults, then a flat `key = value` file,
//! then command-line overrides. Unknown keys are errors. Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `profile` | dataset profile name (see [`crate::profiles`]) |
//! | `lambda` | leak rate, value units per microsecond |
//! | `l_w`, `r_w` | activity window length and representative position (1-based) |
//! | `l_bin_us` | interval length in microseconds |
//! | `w_r`, `h_r`, `s_r` | region width, height, stride |
//! | `n` | patch side for centered/follower extraction |
//! | `alpha` | confidence-gate multiplier |
//! | `mode` | `centered`, `follower` or `draw-event` |
//! | `threshold` | follower pixel threshold |
//! | `stats_order` | `update-then-test` or `test-then-update` |
//! | `mask_grouping` | `closure` (one mask per closure) or `per-peak` |
//! | `flush` | at end of stream close the open interval and `l_w - r_w` empty ones so late intervals are tested (`true`/`false`; when false the open interval is dropped) |
//! | `width`, `height` | input geometry |
//! | `field_width`, `field_height` | larger field to embed the input into at a seeded offset |
//! | `seed` | generator seed |
//! | `input`, `input_format` | input path; `aer`, `csv` or `auto` (by extension) |
//! | `out` | output directory |
//! | `write_frames` | also write the frame used for each extraction |
//! | `attention_n` | attention patch side |
//! | `interval_m` | attention interval in units of `l_bin_us` |
//! | `interval_us` | attention interval in microseconds (overrides `interval_m`) |
//! | `reset_every` | reset the controller every k intervals (0 = never) |
//! | `blank_eps` | event-read blank threshold |
//! | `controller` | `centroid` or `frozen` |
//! | `ema_decay`, `spread_scale`, `sigma_ratio` | centroid controller settings |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::activity::{ActivityConfig, StatsOrder};
use crate::draw::ControllerConfig;
use crate::error::{Error, Result};
use crate::integrator::DELTA_INCR;
use crate::profiles::{self, Method, DEFAULT_PROFILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Centered,
    Follower,
    DrawEvent,
}

impl From<Method> for Mode {
    fn from(m: Method) -> Self {
        match m {
            Method::Centered => Mode::Centered,
            Method::Follower => Mode::Follower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskGrouping {
    Closure,
    PerPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Auto,
    Aer,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Centroid,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub profile: String,
    pub lambda: f64,
    pub l_w: usize,
    pub r_w: usize,
    pub l_bin_us: u64,
    pub w_r: usize,
    pub h_r: usize,
    pub s_r: usize,
    pub n: usize,
    pub alpha: f64,
    pub mode: Mode,
    pub threshold: f64,
    #[serde(serialize_with = "ser_stats_order")]
    pub stats_order: StatsOrder,
    pub mask_grouping: MaskGrouping,
    pub flush: bool,
    pub width: u32,
    pub height: u32,
    pub field_width: Option<u32>,
    pub field_height: Option<u32>,
    pub seed: u64,
    #[serde(skip)]
    pub input: Option<PathBuf>,
    pub input_format: InputFormat,
    #[serde(skip)]
    pub out: PathBuf,
    pub write_frames: bool,
    pub attention_n: usize,
    pub interval_m: u64,
    pub interval_us: Option<u64>,
    pub reset_every: u64,
    pub blank_eps: f64,
    pub controller: ControllerKind,
    pub ema_decay: f64,
    pub spread_scale: f64,
    pub sigma_ratio: f64,
}

fn ser_stats_order<S: serde::Serializer>(o: &StatsOrder, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match o {
        StatsOrder::UpdateThenTest => "update-then-test",
        StatsOrder::TestThenUpdate => "test-then-update",
    })
}

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BLANK_EPS: f64 = 1e-6;
pub const DEFAULT_INTERVAL_M: u64 = 4;

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

impl PipelineConfig {
    pub fn from_profile(name: &str) -> Result<Self> {
        let p = profiles::get(name)
            .ok_or_else(|| Error::config("profile", format!("unknown profile `{name}`")))?;
        let ctl = ControllerConfig::default();
        Ok(Self {
            profile: p.name.to_string(),
            lambda: p.lambda,
            l_w: p.l_w,
            r_w: p.r_w,
            l_bin_us: p.l_bin_us,
            w_r: p.region,
            h_r: p.region,
            s_r: p.s_r,
            n: p.n,
            alpha: DEFAULT_ALPHA,
            mode: p.method.into(),
            threshold: 0.1 * DELTA_INCR,
            stats_order: StatsOrder::UpdateThenTest,
            mask_grouping: MaskGrouping::Closure,
            flush: true,
            width: p.width,
            height: p.height,
            field_width: None,
            field_height: None,
            seed: 0,
            input: None,
            input_format: InputFormat::Auto,
            out: PathBuf::from("out"),
            write_frames: false,
            attention_n: p.attention_n,
            interval_m: DEFAULT_INTERVAL_M,
            interval_us: None,
            reset_every: 0,
            blank_eps: DEFAULT_BLANK_EPS,
            controller: ControllerKind::Centroid,
            ema_decay: ctl.ema_decay,
            spread_scale: ctl.spread_scale,
            sigma_ratio: ctl.sigma_ratio,
        })
    }

    /// Sets one key. `profile` is not accepted here; see [`PipelineConfig::resolve`].
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "lambda" => self.lambda = parse_value(key, v)?,
            "l_w" => self.l_w = parse_value(key, v)?,
            "r_w" => self.r_w = parse_value(key, v)?,
            "l_bin_us" => self.l_bin_us = parse_value(key, v)?,
            "w_r" => self.w_r = parse_value(key, v)?,
            "h_r" => self.h_r = parse_value(key, v)?,
            "s_r" => self.s_r = parse_value(key, v)?,
            "n" => self.n = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "mode" => {
                self.mode = match v {
                    "centered" => Mode::Centered,
                    "follower" => Mode::Follower,
                    "draw-event" => Mode::DrawEvent,
                    _ => return Err(Error::config(key, format!("unknown mode `{v}`"))),
                }
            }
            "threshold" => self.threshold = parse_value(key, v)?,
            "stats_order" => {
                self.stats_order = match v {
                    "update-then-test" => StatsOrder::UpdateThenTest,
                    "test-then-update" => StatsOrder::TestThenUpdate,
                    _ => return Err(Error::config(key, format!("unknown order `{v}`"))),
                }
            }
            "mask_grouping" => {
                self.mask_grouping = match v {
                    "closure" => MaskGrouping::Closure,
                    "per-peak" => MaskGrouping::PerPeak,
                    _ => return Err(Error::config(key, format!("unknown grouping `{v}`"))),
                }
            }
            "flush" => self.flush = parse_bool(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "field_width" => self.field_width = Some(parse_value(key, v)?),
            "field_height" => self.field_height = Some(parse_value(key, v)?),
            "seed" => self.seed = parse_value(key, v)?,
            "input" => self.input = Some(PathBuf::from(v)),
            "input_format" => {
                self.input_format = match v {
                    "auto" => InputFormat::Auto,
                    "aer" => InputFormat::Aer,
                    "csv" => InputFormat::Csv,
                    _ => return Err(Error::config(key, format!("unknown format `{v}`"))),
                }
            }
            "out" => self.out = PathBuf::from(v),
            "write_frames" => self.write_frames = parse_bool(key, v)?,
            "attention_n" => self.attention_n = parse_value(key, v)?,
            "interval_m" => self.interval_m = parse_value(key, v)?,
            "interval_us" => self.interval_us = Some(parse_value(key, v)?),
            "reset_every" => self.reset_every = parse_value(key, v)?,
            "blank_eps" => self.blank_eps = parse_value(key, v)?,
            "controller" => {
                self.controller = match v {
                    "centroid" => ControllerKind::Centroid,
                    "frozen" => ControllerKind::Frozen,
                    _ => return Err(Error::config(key, format!("unknown controller `{v}`"))),
                }
            }
            "ema_decay" => self.ema_decay = parse_value(key, v)?,
            "spread_scale" => self.spread_scale = parse_value(key, v)?,
            "sigma_ratio" => self.sigma_ratio = parse_value(key, v)?,
            "profile" => {
                return Err(Error::config(key, "profile must be chosen before other keys"))
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Builds a config with precedence CLI > file > profile defaults.
    pub fn resolve(file: &[(String, String)], cli: &[(String, String)]) -> Result<Self> {
        let pick = |src: &[(String, String)]| {
            src.iter()
                .rev()
                .find(|(k, _)| k == "profile")
                .map(|(_, v)| v.trim().to_string())
        };
        let profile = pick(cli)
            .or_else(|| pick(file))
            .unwrap_or_else(|| DEFAULT_PROFILE.to_string());
        let mut cfg = Self::from_profile(&profile)?;
        for (k, v) in file.iter().chain(cli) {
            if k != "profile" {
                cfg.apply(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn activity(&self) -> ActivityConfig {
        ActivityConfig {
            l_w: self.l_w,
            r_w: self.r_w,
            l_bin: self.l_bin_us,
            alpha: self.alpha,
            stats_order: self.stats_order,
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            ema_decay: self.ema_decay,
            spread_scale: self.spread_scale,
            sigma_ratio: self.sigma_ratio,
        }
    }

    /// Attention interval length `T` in microseconds.
    pub fn interval(&self) -> u64 {
        self.interval_us.unwrap_or(self.interval_m * self.l_bin_us)
    }

    /// Geometry the pipelines operate on: the embedding field when set,
    /// otherwise the input geometry.
    pub fn field(&self) -> (u32, u32) {
        (
            self.field_width.unwrap_or(self.width),
            self.field_height.unwrap_or(self.height),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be finite and non-negative"));
        }
        self.activity().validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("width", "geometry must be at least 1x1"));
        }
        let (fw, fh) = self.field();
        if fw < self.width || fh < self.height {
            return Err(Error::config(
                "field_width",
                "embedding field must be at least the input geometry",
            ));
        }
        if fw > 65_536 || fh > 65_536 {
            return Err(Error::config("field_width", "geometry exceeds 16-bit coordinates"));
        }
        if self.s_r == 0 {
            return Err(Error::config("s_r", "must be at least 1"));
        }
        if self.w_r == 0 || self.w_r as u32 > fw {
            return Err(Error::config("w_r", format!("must lie in 1..={fw}")));
        }
        if self.h_r == 0 || self.h_r as u32 > fh {
            return Err(Error::config("h_r", format!("must lie in 1..={fh}")));
        }
        if self.n == 0 || self.n as u32 > fw.min(fh) {
            return Err(Error::config("n", format!("patch side must lie in 1..={}", fw.min(fh))));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::config("threshold", "must be positive"));
        }
        if self.attention_n == 0 {
            return Err(Error::config("attention_n", "must be at least 1"));
        }
        if self.interval() == 0 {
            return Err(Error::config("interval_m", "attention interval must be positive"));
        }
        if !(self.blank_eps >= 0.0 && self.blank_eps.is_finite()) {
            return Err(Error::config("blank_eps", "must be finite and non-negative"));
        }
        self.controller_config().validate()?;
        Ok(())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centered => "centered",
            Mode::Follower => "follower",
            Mode::DrawEvent => "draw-event",
        })
    }
}

/// Parses a flat `key = value` file. `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected key = value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn profile_defaults() {
        let c = PipelineConfig::resolve(&[], &[]).unwrap();
        assert_eq!(c.profile, "s-n-centered");
        assert_eq!((c.s_r, c.w_r, c.h_r, c.n), (5, 23, 23, 29));
        assert_eq!((c.l_w, c.r_w, c.l_bin_us), (101, 51, 1000));
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.interval(), 4000);
    }

    #[test]
    fn precedence_cli_over_file_over_profile() {
        let file = kv(&[("profile", "cif10-follower"), ("alpha", "1.5"), ("n", "40")]);
        let cli = kv(&[("alpha", "0.5")]);
        let c = PipelineConfig::resolve(&file, &cli).unwrap();
        assert_eq!(c.profile, "cif10-follower");
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.n, 40);
        assert_eq!(c.s_r, 12);
        let c = PipelineConfig::resolve(&file, &kv(&[("profile", "s-n-follower")])).unwrap();
        assert_eq!(c.profile, "s-n-follower");
        assert_eq!(c.n, 40);
    }

    #[test]
    fn unknown_key_names_field() {
        let err = PipelineConfig::resolve(&kv(&[("bogus", "1")]), &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "bogus"));
        let err = PipelineConfig::resolve(&[], &kv(&[("r_w", "200")])).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "r_w"));
        let err = PipelineConfig::resolve(&[], &kv(&[("profile", "nope")])).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn kv_file_parsing() {
        let pairs = parse_kv("# comment\n\nalpha = 3\nmode=follower\n").unwrap();
        assert_eq!(pairs, kv(&[("alpha", "3"), ("mode", "follower")]));
        assert!(parse_kv("alpha 3").is_err());
    }
}
