//! Command-line tools and the HTTP query session service for `cobras-ts`.

pub mod cli;
pub mod service;
