//! Travel times, reachable sets and optimal swimming paths for a bounded-speed
//! swimmer carried by a prescribed flow.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod flowfield;
pub mod grid;
pub mod io;
pub mod levelset;
pub mod oracle;
pub mod trajectory;

pub use dynamics::{integrate, replay_error, ControlSignal, Trajectory};
pub use error::{Error, Result};
pub use flowfield::{FieldDescriptor, VectorField};
pub use grid::{Grid, ScalarGridField};
