//! HTTP service, generated route table, tool manifest and agent loop for a
//! glassflow pipeline.

pub mod agent;
pub mod error;
pub mod manifest;
pub mod openapi;
pub mod routes;
pub mod service;

pub use agent::{AgentConfig, ChatCompletionsEndpoint, MockEndpoint, SecretString};
pub use error::{ApiError, ErrorCode};
pub use manifest::{generate_tool_manifest, ToolDescriptor};
pub use openapi::openapi_document;
pub use routes::{generate_routes, RouteSpec, API_PREFIX};
pub use service::{serve, AgentRuntime, ServeError, ServeOptions, ServiceHandle};
