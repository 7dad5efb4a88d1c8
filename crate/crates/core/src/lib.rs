//! Event-camera attention toolkit.
//!
//! Reconstructs leaky-integrated frames from event streams, detects peaks of
//! regional event activity against global streaming statistics, extracts
//! patches around active regions (centered and follower placement), and
//! implements the Gaussian filterbank read operator with its gradient and
//! event-level projection.

pub mod activity;
pub mod config;
pub mod draw;
pub mod error;
pub mod events;
pub mod integrator;
pub mod patch;
pub mod pgm;
pub mod pipeline;
pub mod profiles;
pub mod selfcheck;

pub use activity::{ActivityConfig, ActivityState, PeakEvent, PixelBox, RegionGrid, Stats, StatsOrder};
pub use config::{Mode, PipelineConfig};
pub use draw::{AttentionParams, CentroidController, ControllerConfig, FilterBank, GridParams};
pub use error::{Error, Result};
pub use events::{Event, EventStream, Polarity, SaccadeParams, StreamHeader};
pub use integrator::{Frame, FrameBuffer, IntegratorState};
pub use patch::{ActiveMask, PatchRecord, PatchSource};
pub use pipeline::{Manifest, PeakEngine};
