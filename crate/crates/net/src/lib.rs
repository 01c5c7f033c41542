//! Network adapters: chat-completion, embedding and search clients, and the
//! HTTP front end of the review service.

pub mod client;
pub mod server;

pub use client::{HttpConfig, HttpEmbedder, HttpSearcher, HttpTextProvider};
pub use server::{router, serve, ServerHandle};
