//! HTTP sessions for interactive ranking: create candidates, rank them, get the
//! learned command back, optionally refine with language feedback.

pub mod app;
pub mod error;
pub mod session;

pub use app::{router, AppState};
pub use error::ServiceError;
pub use session::{CreateSession, ServiceConfig, Session, SessionState, Source};
