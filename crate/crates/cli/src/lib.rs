//! Command-line pipeline around `glfm-core`: run configuration, the stage
//! commands and a small synthetic corpus generator.

pub mod commands;
pub mod config;
pub mod corpus;
