// SPDX-License-Identifier: Apache-2.0

//! Live sessions that a human trainer can watch and advise over HTTP.

pub mod http;
pub mod session;

pub use self::http::{router, serve, AppState};
pub use self::session::{Command, CreateSession, FrameView, RunState, ServiceError, Session};
