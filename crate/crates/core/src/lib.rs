//! Multimodal entailment-tree proof search for video question answering.
//!
//! A candidate answer becomes a declarative hypothesis, and [`search::prove`]
//! tries to ground it in a clip's transcript and frames by recursive
//! decomposition. The answer whose tree is most complete wins. Trees can be
//! scored for reasoning quality by [`eval`].

pub mod dataset;
pub mod decomposer;
pub mod evidence_text;
pub mod eval;
pub mod evidence_visual;
pub mod harness;
pub mod providers;
pub mod search;
pub mod synthetic;
pub mod tree;
