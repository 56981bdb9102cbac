//! Anisotropic, language-level message passing for text-attributed graphs.
//!
//! The crate turns a text-attributed graph into per-edge natural-language
//! messages through a two-stage LLM protocol, aggregates those messages into
//! node embeddings and classifies nodes with a small graph convolutional
//! network. Every LLM and embedding call goes through [`gateway`], which can be
//! backed by an OpenAI-compatible HTTP service or by deterministic offline
//! oracles, so the whole pipeline runs without network access in tests.
//!
//! Module map:
//!
//! - [`graph`]: data model, dataset IO, splits, per-node edge sampling and a
//!   planted-partition generator.
//! - [`gateway`]: prompt templates, chat completion backends, retry and the
//!   content-addressed response cache.
//! - [`edge_filter`]: the optional edge filter and its finetuning corpus.
//! - [`dual`]: knowledge-base records, the extraction finetuning corpus,
//!   message extraction and self-loop enhancement.
//! - [`embed`]: text aggregation and embedders.
//! - [`gnn`]: dense/CSR linear algebra, GCN and MLP, training and the
//!   multi-run evaluation protocol.
//! - [`pipeline`]: configuration, stage runner and sweeps.

pub mod dual;
pub mod edge_filter;
pub mod embed;
pub mod gateway;
pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod seed;
pub mod text;
