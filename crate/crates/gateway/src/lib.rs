//! HTTP gateway, CLI, auditor export and public trust center for the
//! governance engine.

pub mod auth;
pub mod cli;
pub mod export;
pub mod generator;
pub mod http;
pub mod trust_center;
