//! Gaussian filterbank attention: filterbank construction from five
//! unconstrained parameters, the `gamma * F_Y * x * F_X^T` read operator, its
//! analytic gradient, the event-read projection into patch space and a
//! centroid-tracking controller that drives the parameters from raw events.
//!
//! Pixel coordinates inside the filterbank are 1-based: column `x` sits at
//! coordinate `x + 1`, so the frame center is `(W + 1) / 2`.
//!
//! Given `(gx~, gy~, log_var, log_delta, log_gamma)`, a frame of `W x H`
//! pixels and `N` filters per axis:
//!
//! ```text
//! gx    = (W + 1) (gx~ + 1) / 2          gy = (H + 1) (gy~ + 1) / 2
//! delta = (max(W, H) - 1) / (N - 1) * exp(log_delta)     (0 when N = 1)
//! mu_i  = g + (i - N/2 - 0.5) delta      for i = 1..=N
//! F[i, a] = exp(-(a - mu_i)^2 / (2 sigma^2)) / Z_i
//! ```
//!
//! Rows whose unnormalized mass underflows to zero stay all-zero.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, StreamHeader};
use crate::integrator::Frame;

/// The five attention parameters. Fields named `log_*` are exponentiated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub gx_tilde: f64,
    pub gy_tilde: f64,
    pub log_var: f64,
    pub log_delta: f64,
    pub log_gamma: f64,
}

impl AttentionParams {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.gx_tilde,
            self.gy_tilde,
            self.log_var,
            self.log_delta,
            self.log_gamma,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            gx_tilde: v[0],
            gy_tilde: v[1],
            log_var: v[2],
            log_delta: v[3],
            log_gamma: v[4],
        }
    }

    /// Resolves the parameters into frame-space grid values.
    pub fn resolve(&self, geometry: StreamHeader, n: usize) -> GridParams {
        let (w, h) = (f64::from(geometry.width), f64::from(geometry.height));
        GridParams {
            gx: (w + 1.0) * (self.gx_tilde + 1.0) / 2.0,
            gy: (h + 1.0) * (self.gy_tilde + 1.0) / 2.0,
            delta: stride_scale(geometry, n) * self.log_delta.exp(),
            sigma2: self.log_var.exp().max(f64::MIN_POSITIVE),
            gamma: self.log_gamma.exp(),
        }
    }

    /// Inverse of [`AttentionParams::resolve`]. For `N = 1` the stride is not
    /// recoverable and `log_delta` is set to 0.
    pub fn from_grid(g: &GridParams, geometry: StreamHeader, n: usize) -> Self {
        let (w, h) = (f64::from(geometry.width), f64::from(geometry.height));
        let scale = stride_scale(geometry, n);
        Self {
            gx_tilde: 2.0 * g.gx / (w + 1.0) - 1.0,
            gy_tilde: 2.0 * g.gy / (h + 1.0) - 1.0,
            log_var: g.sigma2.ln(),
            log_delta: if scale > 0.0 { (g.delta / scale).ln() } else { 0.0 },
            log_gamma: g.gamma.ln(),
        }
    }
}

/// `(max(W, H) - 1) / (N - 1)`, or 0 for a single filter.
fn stride_scale(geometry: StreamHeader, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (f64::from(geometry.width.max(geometry.height)) - 1.0) / (n as f64 - 1.0)
    }
}

/// Frame-space attention grid: center (1-based coordinates), stride, filter
/// variance and intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub gx: f64,
    pub gy: f64,
    pub delta: f64,
    pub sigma2: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    /// `N x H` row filters.
    pub fy: Array2<f64>,
    /// `N x W` column filters.
    pub fx: Array2<f64>,
    pub gamma: f64,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub grid: GridParams,
}

impl FilterBank {
    pub fn n(&self) -> usize {
        self.fy.nrows()
    }

    pub fn geometry(&self) -> (usize, usize) {
        (self.fx.ncols(), self.fy.ncols())
    }
}

/// Offsets `i - N/2 - 0.5` for 1-based `i`, written 0-based.
fn filter_offsets(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 + 0.5 - n as f64 / 2.0)
}

fn gaussian_rows(mu: &[f64], len: usize, sigma2: f64) -> Array2<f64> {
    let mut f = Array2::zeros((mu.len(), len));
    for (mut row, &m) in f.axis_iter_mut(Axis(0)).zip(mu) {
        for (a, v) in row.iter_mut().enumerate() {
            let d = (a + 1) as f64 - m;
            *v = (-d * d / (2.0 * sigma2)).exp();
        }
        let z = row.sum();
        if z > 0.0 {
            row /= z;
        }
    }
    f
}

pub fn build_filterbank(p: &AttentionParams, geometry: StreamHeader, n: usize) -> Result<FilterBank> {
    if n == 0 {
        return Err(Error::validation("filterbank needs at least one filter"));
    }
    if !p.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::validation("attention parameters must be finite"));
    }
    Ok(build_from_grid(p.resolve(geometry, n), geometry, n))
}

/// Builds a filterbank directly from frame-space grid values.
pub fn build_from_grid(grid: GridParams, geometry: StreamHeader, n: usize) -> FilterBank {
    let mu_x: Vec<f64> = filter_offsets(n).map(|k| grid.gx + k * grid.delta).collect();
    let mu_y: Vec<f64> = filter_offsets(n).map(|k| grid.gy + k * grid.delta).collect();
    FilterBank {
        fx: gaussian_rows(&mu_x, geometry.width as usize, grid.sigma2),
        fy: gaussian_rows(&mu_y, geometry.height as usize, grid.sigma2),
        gamma: grid.gamma,
        mu_x,
        mu_y,
        grid,
    }
}

fn check_dims(frame: &Frame, fb: &FilterBank) -> Result<()> {
    let (w, h) = fb.geometry();
    if frame.width() != w || frame.height() != h {
        return Err(Error::validation(format!(
            "filterbank built for {w}x{h}, frame is {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

/// `gamma * F_Y * frame * F_X^T`, an `N x N` patch.
pub fn read(frame: &Frame, fb: &FilterBank) -> Result<Array2<f64>> {
    check_dims(frame, fb)?;
    Ok(fb.fy.dot(&frame.values).dot(&fb.fx.t()) * fb.gamma)
}

/// Gradients of a scalar loss through [`read`], given `dL/dpatch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadGradient {
    pub params: AttentionParams,
    pub frame: Array2<f64>,
}

/// Per-row derivative of the normalized filters: returns `dL/dmu_i` for each
/// row and the row's contribution to `dL/dlog_var`.
fn bank_backward(f: &Array2<f64>, d: &Array2<f64>, mu: &[f64], sigma2: f64) -> (Vec<f64>, f64) {
    let mut dmu = Vec::with_capacity(mu.len());
    let mut dlog_var = 0.0;
    for ((frow, drow), &m) in f.axis_iter(Axis(0)).zip(d.axis_iter(Axis(0))).zip(mu) {
        // d F_a / d theta = F_a (u_a - sum_b F_b u_b) with u = d log f / d theta
        let mut s = 0.0;
        let mut f_dist = 0.0;
        let mut df_dist = 0.0;
        let mut f_w = 0.0;
        let mut df_w = 0.0;
        for (a, (&fa, &da)) in frow.iter().zip(drow).enumerate() {
            if fa == 0.0 {
                continue;
            }
            let dist = (a + 1) as f64 - m;
            let w = dist * dist / (2.0 * sigma2);
            s += da * fa;
            f_dist += fa * dist;
            df_dist += da * fa * dist;
            f_w += fa * w;
            df_w += da * fa * w;
        }
        dmu.push((df_dist - s * f_dist) / sigma2);
        dlog_var += df_w - s * f_w;
    }
    (dmu, dlog_var)
}

pub fn read_grad(frame: &Frame, p: &AttentionParams, n: usize, upstream: &Array2<f64>) -> Result<ReadGradient> {
    let geometry = StreamHeader::new(frame.width() as u32, frame.height() as u32)?;
    let fb = build_filterbank(p, geometry, n)?;
    if upstream.dim() != (n, n) {
        return Err(Error::validation(format!(
            "upstream gradient must be {n}x{n}, got {:?}",
            upstream.dim()
        )));
    }
    let g = &fb.grid;
    let x = &frame.values;

    let d_fy = upstream.dot(&fb.fx).dot(&x.t()) * g.gamma;
    let d_fx = upstream.t().dot(&fb.fy).dot(x) * g.gamma;
    let patch = fb.fy.dot(x).dot(&fb.fx.t()) * g.gamma;

    let (dmu_x, dvar_x) = bank_backward(&fb.fx, &d_fx, &fb.mu_x, g.sigma2);
    let (dmu_y, dvar_y) = bank_backward(&fb.fy, &d_fy, &fb.mu_y, g.sigma2);

    let offsets: Vec<f64> = filter_offsets(n).collect();
    let stride_term: f64 = offsets
        .iter()
        .zip(dmu_x.iter().zip(&dmu_y))
        .map(|(k, (mx, my))| k * (mx + my))
        .sum();

    let params = AttentionParams {
        gx_tilde: (f64::from(geometry.width) + 1.0) / 2.0 * dmu_x.iter().sum::<f64>(),
        gy_tilde: (f64::from(geometry.height) + 1.0) / 2.0 * dmu_y.iter().sum::<f64>(),
        log_var: dvar_x + dvar_y,
        log_delta: g.delta * stride_term,
        log_gamma: (upstream * &patch).sum(),
    };
    let frame_grad = fb.fy.t().dot(upstream).dot(&fb.fx) * g.gamma;
    Ok(ReadGradient {
        params,
        frame: frame_grad,
    })
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(v: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Projects an event into patch space: the brightest pixel of the read of a
/// one-hot frame at the event location. That patch is the outer product of
/// column `e.y` of `F_Y` and column `e.x` of `F_X`, so each axis is resolved
/// independently. Returns `None` (skip) when the brightest value is at most
/// `blank_eps`.
pub fn event_read(e: &Event, fb: &FilterBank, blank_eps: f64) -> Option<Event> {
    let (w, h) = fb.geometry();
    if e.x as usize >= w || e.y as usize >= h {
        return None;
    }
    let (row, ymax) = argmax(fb.fy.column(e.y as usize));
    let (col, xmax) = argmax(fb.fx.column(e.x as usize));
    if fb.gamma * ymax * xmax <= blank_eps {
        return None;
    }
    Some(Event {
        x: col as u16,
        y: row as u16,
        ..*e
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Weight of each new event in the moving averages; 1.0 keeps no memory.
    pub ema_decay: f64,
    /// Grid span as a multiple of the coordinate standard deviation.
    pub spread_scale: f64,
    /// Filter standard deviation as a fraction of the stride.
    pub sigma_ratio: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            ema_decay: 0.01,
            spread_scale: 4.0,
            sigma_ratio: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ema_decay > 0.0 && self.ema_decay <= 1.0) {
            return Err(Error::config("ema_decay", "must lie in (0, 1]"));
        }
        if !(self.spread_scale > 0.0 && self.spread_scale.is_finite()) {
            return Err(Error::config("spread_scale", "must be positive"));
        }
        if !(self.sigma_ratio > 0.0 && self.sigma_ratio.is_finite()) {
            return Err(Error::config("sigma_ratio", "must be positive"));
        }
        Ok(())
    }
}

/// Deterministic stand-in for a learned attention controller. It tracks
/// exponential moving averages of event coordinates and centers the grid on
/// the mean, sizing the span to `spread_scale` standard deviations. Before
/// any event arrives (and after [`CentroidController::reset`]) the grid spans
/// the whole frame.
#[derive(Debug, Clone)]
pub struct CentroidController {
    geometry: StreamHeader,
    n: usize,
    cfg: ControllerConfig,
    mean: Option<(f64, f64)>,
    var: (f64, f64),
}

impl CentroidController {
    pub fn new(geometry: StreamHeader, n: usize, cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::config("attention_n", "must be at least 1"));
        }
        Ok(Self {
            geometry,
            n,
            cfg,
            mean: None,
            var: (0.0, 0.0),
        })
    }

    fn full_span(&self) -> f64 {
        f64::from(self.geometry.width.max(self.geometry.height)) - 1.0
    }

    /// Smallest span: one pixel of stride per filter.
    fn min_span(&self) -> f64 {
        (self.n as f64 - 1.0).min(self.full_span())
    }

    fn grid_for(&self, gx: f64, gy: f64, span: f64) -> GridParams {
        let delta = if self.n > 1 { span / (self.n as f64 - 1.0) } else { 0.0 };
        let sigma = self.cfg.sigma_ratio * if self.n > 1 { delta } else { span.max(1.0) };
        GridParams {
            gx,
            gy,
            delta,
            sigma2: sigma * sigma,
            gamma: 1.0,
        }
    }

    /// Parameters covering the whole frame.
    pub fn initial_params(&self) -> AttentionParams {
        let w = f64::from(self.geometry.width);
        let h = f64::from(self.geometry.height);
        let grid = self.grid_for((w + 1.0) / 2.0, (h + 1.0) / 2.0, self.full_span());
        let mut p = AttentionParams::from_grid(&grid, self.geometry, self.n);
        // exact start values
        p.gx_tilde = 0.0;
        p.gy_tilde = 0.0;
        p.log_delta = 0.0;
        p
    }

    pub fn reset(&mut self) {
        self.mean = None;
        self.var = (0.0, 0.0);
    }

    pub fn observe(&mut self, e: &Event) {
        let (x, y) = (f64::from(e.x), f64::from(e.y));
        let a = self.cfg.ema_decay;
        match self.mean.as_mut() {
            None => {
                self.mean = Some((x, y));
                self.var = (0.0, 0.0);
            }
            Some((mx, my)) => {
                let (dx, dy) = (x - *mx, y - *my);
                *mx += a * dx;
                *my += a * dy;
                self.var.0 = (1.0 - a) * (self.var.0 + a * dx * dx);
                self.var.1 = (1.0 - a) * (self.var.1 + a * dy * dy);
            }
        }
    }

    /// Tracked mean in 0-based pixel coordinates.
    pub fn mean(&self) -> Option<(f64, f64)> {
        self.mean
    }

    pub fn params(&self) -> AttentionParams {
        let Some((mx, my)) = self.mean else {
            return self.initial_params();
        };
        let spread = self.var.0.max(self.var.1).sqrt();
        let span = (self.cfg.spread_scale * spread).clamp(self.min_span(), self.full_span());
        let grid = self.grid_for(mx + 1.0, my + 1.0, span);
        AttentionParams::from_grid(&grid, self.geometry, self.n)
    }

    /// Feeds one step of events and returns the resulting parameters.
    pub fn update(&mut self, events: &[Event]) -> AttentionParams {
        for e in events {
            self.observe(e);
        }
        self.params()
    }
}

/// Frame-space center (0-based pixel coordinates) of a filterbank grid.
pub fn grid_center(fb: &FilterBank) -> (f64, f64) {
    (fb.grid.gx - 1.0, fb.grid.gy - 1.0)
}

/// Sum of each filter row, useful for normalization checks.
pub fn row_sums(f: &Array2<f64>) -> Array1<f64> {
    f.sum_axis(Axis(1))
}
