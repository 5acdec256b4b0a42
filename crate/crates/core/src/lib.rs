//! Cryptolect analysis toolkit.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`corpus`] and [`induction`] turn raw forum dumps into a ranked list of
//!    candidate in-group words using temporal user/word embeddings.
//! 2. [`evalgen`], [`prompts`] and [`llmclient`] build classification,
//!    retrieval and decoding test suites and run them against a
//!    chat-completion endpoint under four context framings.
//! 3. [`scoring`] and [`report`] turn parsed replies and expert judgments
//!    into metric tables and plot data.

pub mod corpus;
pub mod digest;
pub mod evalgen;
pub mod induction;
pub mod llmclient;
pub mod prompts;
pub mod report;
pub mod scoring;
pub mod synthetic;

pub use corpus::{tokenize, Corpus, Post};
pub use evalgen::{Framing, Label, LexiconEntry, Task, TestCase};
pub use llmclient::{Answer, ParsedAnswer};
