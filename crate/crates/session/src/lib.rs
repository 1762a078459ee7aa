//! Web service through which trainees teach the reward learner keyframe by
//! keyframe, with per-group guidance, durable per-session event logs, and
//! learned-trajectory feedback.

pub mod api;
pub mod config;
pub mod error;
pub mod protocol;
pub mod store;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use error::{ServiceError, ServiceResult};
