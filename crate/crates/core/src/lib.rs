//! Multi-view stance detection experiments.
//!
//! Tweets are turned into four families of features: frequency vectors,
//! word-embedding sequences, cosine-similarity sequences and author vectors
//! learned from the social interaction graph. Sequence features go through a
//! neural head (CNN or BiLSTM), everything is concatenated and classified
//! into AGAINST / FAVOR / NONE by a small dropout-dense-softmax stack. The
//! [`experiment`] module samples random architectures, runs them and renders
//! result tables.

pub mod corpus;
pub mod embedfeat;
pub mod error;
pub mod experiment;
pub mod freqfeat;
pub mod fusion;
pub mod gnnembed;
pub mod heads;
pub mod netgraph;
pub mod nn;
pub(crate) mod rng;

pub use error::{Error, Result};
