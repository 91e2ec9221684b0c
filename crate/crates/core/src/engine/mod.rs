//! Deterministic step scheduler, configuration, statistics, CSV export and
//! batch sweeps.

pub mod batch;
pub mod config;
pub mod events;
pub mod snapshot;
pub mod world;

pub use batch::{batch_run, parse_sweep, sub_seed, write_summary, BatchRow, Sweep};
pub use config::{ConfigError, ParamPath, ScheduledChange, SimulationConfig};
pub use events::{ChangeSource, Event, EventCounts, EventKind};
pub use snapshot::{export_series, BankSnapshot, SeriesWriter, Snapshot};
pub use world::{EngineError, World};
