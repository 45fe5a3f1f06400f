//! Real-time game service: a human player steers an avatar with the pointer
//! while a robot controller from the simulator plays alongside.

pub mod input;
pub mod metrics;
pub mod protocol;
pub mod server;
pub mod session;

pub use metrics::SessionMetrics;
pub use protocol::{ClientMessage, ServerMessage};
pub use server::{router, serve, ServerConfig};
pub use session::{replay, Session};
