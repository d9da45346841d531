//! Multi-turn reinforcement learning for agentic navigation of long documents.
//!
//! An agent answers questions about a paged document by alternating
//! `<think>` reasoning with one action per turn: `search` a retriever,
//! `fetch` a page by index, or `answer`. The crate provides the response
//! grammar, the navigation environment, turn rewards, two-level GAE credit
//! assignment, a linear micro-policy with analytic gradients, and a PPO update
//! with separate KL anchors on generated and observed tokens.

pub mod credit;
pub mod document;
pub mod env;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod policy;
pub mod ppo;
pub mod retrieval;
pub mod reward;
pub mod text;

pub use error::{Error, Result};
