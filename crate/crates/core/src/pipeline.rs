//! End-to-end pipelines.
//!
//! `run_peak_pipeline` streams events through the integrator and the activity
//! detector, picks the frame recorded at the peak interval's end from the
//! frame buffer, and extracts centered or follower patches from it.
//! `run_attention_pipeline` partitions the stream into intervals of length
//! `T`, projects events through the current filterbank, reads one attended
//! patch per interval and lets the controller update the filterbank for the
//! next interval.
//!
//! Output layout under `out`: `manifest.jsonl`, `patches/`, `frames/` and
//! `logs/` (peak log or attention trace). Files carry zero-padded sequence
//! numbers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityState, PeakEvent, RegionGrid};
use crate::config::{ControllerKind, InputFormat, MaskGrouping, Mode, PipelineConfig};
use crate::draw::{self, build_filterbank, event_read, CentroidController, FilterBank};
use crate::error::{Error, Result};
use crate::events::{self, Event, EventStream, StreamHeader};
use crate::integrator::{Frame, FrameBuffer, IntegratorState};
use crate::patch::{self, ActiveMask, PatchRecord, PatchSource};
use crate::pgm;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One interval closure that produced peaks, with the frame recorded at the
/// end of the peak interval.
#[derive(Debug, Clone)]
pub struct Closure {
    /// 0-based index of the closure that detected the peaks.
    pub index: u64,
    pub peaks: Vec<PeakEvent>,
    pub frame: Frame,
}

/// Integrator, activity detector and frame buffer driven in lockstep.
#[derive(Debug, Clone)]
pub struct PeakEngine {
    integrator: IntegratorState,
    activity: ActivityState,
    buffer: FrameBuffer,
    closures: u64,
}

impl PeakEngine {
    pub fn new(header: StreamHeader, cfg: &PipelineConfig) -> Result<Self> {
        let grid = RegionGrid::new(header, cfg.w_r, cfg.h_r, cfg.s_r)?;
        let act = cfg.activity();
        Ok(Self {
            integrator: IntegratorState::new(header, cfg.lambda)?,
            activity: ActivityState::new(grid, act)?,
            buffer: FrameBuffer::for_window(act.l_w, act.r_w)?,
            closures: 0,
        })
    }

    pub fn grid(&self) -> &RegionGrid {
        self.activity.grid()
    }

    pub fn activity(&self) -> &ActivityState {
        &self.activity
    }

    pub fn integrator(&self) -> &IntegratorState {
        &self.integrator
    }

    /// Closures performed so far.
    pub fn closures(&self) -> u64 {
        self.closures
    }

    fn close_one(&mut self) -> Result<Option<Closure>> {
        let end = self
            .activity
            .interval_end()
            .ok_or_else(|| Error::validation("interval clock not started"))?;
        self.buffer.push(self.integrator.snapshot(end));
        let peaks = self.activity.close_interval();
        let index = self.closures;
        self.closures += 1;
        if peaks.is_empty() {
            return Ok(None);
        }
        let delay = peaks[0].frame_delay;
        let frame = self
            .buffer
            .frame_at_delay(delay - 1)?
            .ok_or_else(|| Error::validation("frame buffer not filled at detection time"))?
            .clone();
        Ok(Some(Closure { index, peaks, frame }))
    }

    /// Applies one event, first closing every interval that ended before it.
    pub fn push(&mut self, e: &Event) -> Result<Vec<Closure>> {
        self.integrator.header().check(e)?;
        self.activity.start(e.ts);
        let mut out = Vec::new();
        while self.activity.needs_close(e.ts) {
            out.extend(self.close_one()?);
        }
        self.integrator.apply_event(e)?;
        self.activity.record_event(e);
        Ok(out)
    }

    /// Closes the open interval and enough empty ones for every closed
    /// interval to reach the representative position.
    pub fn finish(&mut self) -> Result<Vec<Closure>> {
        let mut out = Vec::new();
        if self.activity.interval_start().is_none() {
            return Ok(out);
        }
        let cfg = *self.activity.config();
        for _ in 0..=(cfg.l_w - cfg.r_w) {
            out.extend(self.close_one()?);
        }
        Ok(out)
    }
}

/// Builds the active masks for a closure according to `grouping`.
pub fn closure_masks(closure: &Closure, grid: &RegionGrid, grouping: MaskGrouping) -> Vec<ActiveMask> {
    match grouping {
        MaskGrouping::Closure => {
            let mut m = ActiveMask::for_grid(grid);
            for p in &closure.peaks {
                m.set(p.region.0, p.region.1, true);
            }
            vec![m]
        }
        MaskGrouping::PerPeak => closure
            .peaks
            .iter()
            .map(|p| {
                let mut m = ActiveMask::for_grid(grid);
                m.set(p.region.0, p.region.1, true);
                m
            })
            .collect(),
    }
}

/// Extracts the patches of one closure with the configured method. Origins
/// repeated within one mask are emitted once.
pub fn extract_closure(closure: &Closure, grid: &RegionGrid, cfg: &PipelineConfig) -> Result<Vec<PatchRecord>> {
    let (w, h) = (closure.frame.width(), closure.frame.height());
    let mut records = Vec::new();
    for mask in closure_masks(closure, grid, cfg.mask_grouping) {
        let mut origins = Vec::new();
        for bbox in patch::macro_regions(&mask, grid)? {
            let placed = match cfg.mode {
                Mode::Centered => patch::centered_patches(&bbox, cfg.n, w, h)?,
                Mode::Follower => patch::follower_patches(&closure.frame, &bbox, cfg.threshold, cfg.n)?,
                Mode::DrawEvent => {
                    return Err(Error::config("mode", "draw-event is served by run-attention"))
                }
            };
            for o in placed {
                if !origins.contains(&o) {
                    origins.push(o);
                }
            }
        }
        let source = match cfg.mode {
            Mode::Follower => PatchSource::Follower,
            _ => PatchSource::Centered,
        };
        for o in origins {
            records.push(patch::crop(&closure.frame, o, cfg.n, source)?);
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub ts_us: u64,
    pub x0: i64,
    pub y0: i64,
    pub n: usize,
    pub source: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakLogEntry {
    pub region_a: usize,
    pub region_b: usize,
    pub t1_us: u64,
    pub t2_us: u64,
    pub value: u32,
}

impl From<&PeakEvent> for PeakLogEntry {
    fn from(p: &PeakEvent) -> Self {
        Self {
            region_a: p.region.0,
            region_b: p.region.1,
            t1_us: p.t1,
            t2_us: p.t2,
            value: p.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub ts_us: u64,
    pub gx: f64,
    pub gy: f64,
    pub delta: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub patch_file: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub events: usize,
    pub non_monotone: bool,
    pub closures: u64,
    pub peaks: usize,
    pub patches: usize,
    pub skipped_events: usize,
}

/// Manifest header: the pipeline name, input description and every
/// effective parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub pipeline: String,
    pub input: Option<String>,
    pub input_geometry: (u32, u32),
    pub field: (u32, u32),
    pub offset: (u32, u32),
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub patches: Vec<PatchEntry>,
    pub summary: Summary,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: Summary,
}

impl Manifest {
    /// JSON lines: `{"header": ...}`, one object per patch, `{"summary": ...}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&HeaderLine {
            header: self.header.clone(),
        })?;
        out.push('\n');
        for p in &self.patches {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&SummaryLine {
            summary: self.summary.clone(),
        })?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() < 2 {
            return Err(Error::validation("manifest needs a header and a summary line"));
        }
        let header: HeaderLine = serde_json::from_str(lines[0])?;
        let summary: SummaryLine = serde_json::from_str(lines[lines.len() - 1])?;
        let patches = lines[1..lines.len() - 1]
            .iter()
            .map(|l| serde_json::from_str(l))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            header: header.header,
            patches,
            summary: summary.summary,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dirs(out: &Path) -> Result<()> {
    for sub in ["patches", "frames", "logs"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    Ok(())
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    Ok(s)
}

/// Input stream after optional embedding, plus the offset used.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub stream: EventStream,
    pub input_geometry: StreamHeader,
    pub offset: (u32, u32),
}

/// Reads the configured input and embeds it into the configured field.
pub fn load_input(cfg: &PipelineConfig) -> Result<PreparedInput> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::config("input", "no input file given"))?;
    let header = StreamHeader::new(cfg.width, cfg.height).map_err(|e| Error::config("width", e.to_string()))?;
    let format = match cfg.input_format {
        InputFormat::Auto => {
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                InputFormat::Csv
            } else {
                InputFormat::Aer
            }
        }
        f => f,
    };
    let stream = match format {
        InputFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            events::read_csv(&text, header)?
        }
        _ => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            events::read_aer_bin(&bytes, header)?
        }
    };
    prepare(stream, cfg)
}

/// Embeds an already-parsed stream into the configured field.
pub fn prepare(stream: EventStream, cfg: &PipelineConfig) -> Result<PreparedInput> {
    let input_geometry = stream.header;
    let (fw, fh) = cfg.field();
    if (fw, fh) == (input_geometry.width, input_geometry.height) {
        return Ok(PreparedInput {
            stream,
            input_geometry,
            offset: (0, 0),
        });
    }
    let dst = StreamHeader::new(fw, fh)?;
    let offset = events::random_offset(input_geometry, dst, cfg.seed)?;
    let shifted = events::shift_embed(&stream.events, input_geometry, dst, offset)?;
    Ok(PreparedInput {
        stream: EventStream {
            header: dst,
            events: shifted,
            non_monotone: stream.non_monotone,
        },
        input_geometry,
        offset,
    })
}

fn header_for(pipeline: &str, cfg: &PipelineConfig, input: &PreparedInput) -> Result<ManifestHeader> {
    Ok(ManifestHeader {
        pipeline: pipeline.to_string(),
        input: cfg.input.as_ref().map(|p| p.display().to_string()),
        input_geometry: (input.input_geometry.width, input.input_geometry.height),
        field: (input.stream.header.width, input.stream.header.height),
        offset: input.offset,
        params: serde_json::to_value(cfg)?,
    })
}

fn patch_file(seq: usize) -> String {
    format!("patches/patch_{seq:06}.pgm")
}

/// Runs the peak-driven pipeline on the configured input file.
pub fn run_peak_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let input = load_input(cfg)?;
    run_peak_pipeline_on(cfg, input)
}

/// Runs the peak-driven pipeline on a prepared stream, writing under `cfg.out`.
pub fn run_peak_pipeline_on(cfg: &PipelineConfig, input: PreparedInput) -> Result<Manifest> {
    cfg.validate()?;
    if cfg.mode == Mode::DrawEvent {
        return Err(Error::config("mode", "draw-event is served by run-attention"));
    }
    let out = &cfg.out;
    create_dirs(out)?;
    let header = header_for("peaks", cfg, &input)?;
    let stream = input.stream;

    let mut engine = PeakEngine::new(stream.header, cfg)?;
    let mut closures = Vec::new();
    for e in &stream.events {
        closures.extend(engine.push(e)?);
    }
    if cfg.flush {
        closures.extend(engine.finish()?);
    }

    let mut entries = Vec::new();
    let mut peak_log = Vec::new();
    for (ci, closure) in closures.iter().enumerate() {
        peak_log.extend(closure.peaks.iter().map(PeakLogEntry::from));
        if cfg.write_frames {
            let path = out.join(format!("frames/frame_{ci:06}.pgm"));
            write_file(&path, &pgm::encode_pgm(closure.frame.values.view()))?;
        }
        for rec in extract_closure(closure, engine.grid(), cfg)? {
            let file = patch_file(entries.len());
            write_file(&out.join(&file), &pgm::encode_pgm(rec.pixels.view()))?;
            entries.push(PatchEntry {
                ts_us: rec.ts,
                x0: rec.origin.0 as i64,
                y0: rec.origin.1 as i64,
                n: cfg.n,
                source: rec.source.to_string(),
                file,
            });
        }
    }
    let log_path = out.join("logs/peaks.jsonl");
    write_file(&log_path, jsonl(&peak_log)?.as_bytes())?;

    let manifest = Manifest {
        header,
        summary: Summary {
            events: stream.events.len(),
            non_monotone: stream.non_monotone,
            closures: engine.closures(),
            peaks: peak_log.len(),
            patches: entries.len(),
            skipped_events: 0,
        },
        patches: entries,
    };
    write_file(&out.join(MANIFEST_FILE), manifest.to_jsonl()?.as_bytes())?;
    Ok(manifest)
}

/// One attention interval as seen by the pipeline.
#[derive(Debug, Clone)]
pub struct AttentionStep {
    pub ts: u64,
    pub frame: Frame,
    pub filterbank: FilterBank,
    pub patch: ndarray::Array2<f64>,
    pub skipped: usize,
}

/// Attention loop over a stream: returns one step per interval. Events of an
/// interval are projected with the filterbank held at the interval start; the
/// read at the interval end uses the same filterbank; the controller then
/// absorbs the interval's non-skipped events. With `reset_every = k > 0` the
/// controller returns to its start state after every k-th interval.
pub fn attention_steps(stream: &EventStream, cfg: &PipelineConfig) -> Result<Vec<AttentionStep>> {
    let header = stream.header;
    let n = cfg.attention_n;
    let period = cfg.interval();
    let mut integrator = IntegratorState::new(header, cfg.lambda)?;
    let mut controller = CentroidController::new(header, n, cfg.controller_config())?;
    let mut fb = build_filterbank(&controller.params(), header, n)?;
    let mut pending: Vec<Event> = Vec::new();
    let mut skipped = 0usize;
    let mut steps = Vec::new();
    let mut start: Option<u64> = None;

    let close = |end: u64,
                     integrator: &IntegratorState,
                     fb: &mut FilterBank,
                     controller: &mut CentroidController,
                     pending: &mut Vec<Event>,
                     skipped: &mut usize,
                     steps: &mut Vec<AttentionStep>|
     -> Result<()> {
        let frame = integrator.snapshot(end);
        let patch = draw::read(&frame, fb)?;
        steps.push(AttentionStep {
            ts: end,
            frame,
            filterbank: fb.clone(),
            patch,
            skipped: std::mem::take(skipped),
        });
        if cfg.controller == ControllerKind::Centroid {
            controller.update(pending);
        }
        pending.clear();
        if cfg.reset_every > 0 && steps.len() as u64 % cfg.reset_every == 0 {
            controller.reset();
        }
        *fb = build_filterbank(&controller.params(), header, n)?;
        Ok(())
    };

    for e in &stream.events {
        header.check(e)?;
        let s = *start.get_or_insert(e.ts);
        let mut end = s + period * (steps.len() as u64 + 1);
        while e.ts >= end {
            close(end, &integrator, &mut fb, &mut controller, &mut pending, &mut skipped, &mut steps)?;
            end += period;
        }
        integrator.apply_event(e)?;
        match event_read(e, &fb, cfg.blank_eps) {
            Some(_) => pending.push(*e),
            None => skipped += 1,
        }
    }
    if let Some(s) = start {
        let end = s + period * (steps.len() as u64 + 1);
        close(end, &integrator, &mut fb, &mut controller, &mut pending, &mut skipped, &mut steps)?;
    }
    Ok(steps)
}

/// Runs the attention pipeline on the configured input file.
pub fn run_attention_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let input = load_input(cfg)?;
    run_attention_pipeline_on(cfg, input)
}

pub fn run_attention_pipeline_on(cfg: &PipelineConfig, input: PreparedInput) -> Result<Manifest> {
    cfg.validate()?;
    let out = &cfg.out;
    create_dirs(out)?;
    let mut header = header_for("attention", cfg, &input)?;
    if let Some(obj) = header.params.as_object_mut() {
        obj.insert("mode".into(), serde_json::Value::from("draw-event"));
    }
    let stream = input.stream;
    let steps = attention_steps(&stream, cfg)?;

    let mut entries = Vec::with_capacity(steps.len());
    let mut trace = Vec::with_capacity(steps.len());
    let mut skipped = 0;
    for (i, step) in steps.iter().enumerate() {
        let file = patch_file(i);
        write_file(&out.join(&file), &pgm::encode_pgm(step.patch.view()))?;
        if cfg.write_frames {
            let path = out.join(format!("frames/frame_{i:06}.pgm"));
            write_file(&path, &pgm::encode_pgm(step.frame.values.view()))?;
        }
        let g = step.filterbank.grid;
        // top-left filter center in 0-based pixels
        let x0 = (step.filterbank.mu_x[0] - 1.0).round() as i64;
        let y0 = (step.filterbank.mu_y[0] - 1.0).round() as i64;
        entries.push(PatchEntry {
            ts_us: step.ts,
            x0,
            y0,
            n: cfg.attention_n,
            source: PatchSource::Draw.to_string(),
            file: file.clone(),
        });
        trace.push(TraceEntry {
            ts_us: step.ts,
            gx: g.gx,
            gy: g.gy,
            delta: g.delta,
            sigma2: g.sigma2,
            gamma: g.gamma,
            patch_file: file,
        });
        skipped += step.skipped;
    }
    let trace_path = out.join("logs/attention.jsonl");
    write_file(&trace_path, jsonl(&trace)?.as_bytes())?;

    let manifest = Manifest {
        header,
        summary: Summary {
            events: stream.events.len(),
            non_monotone: stream.non_monotone,
            closures: steps.len() as u64,
            peaks: 0,
            patches: entries.len(),
            skipped_events: skipped,
        },
        patches: entries,
    };
    write_file(&out.join(MANIFEST_FILE), manifest.to_jsonl()?.as_bytes())?;
    Ok(manifest)
}

/// Manifest path under an output directory.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.join(MANIFEST_FILE)
}
