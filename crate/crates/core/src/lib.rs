//! Offensive-language classification for code-mixed Dravidian social-media
//! text: corpus handling, cleaning, tf-idf and embedding features, linear and
//! tree classifiers, a BiLSTM classifier with attention pooling, and weighted
//! F1 evaluation.

pub mod container;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod hyperparams;
pub mod io;
pub mod linear;
pub mod neural;
pub mod optim;
pub mod pipeline;
pub mod predictions;
pub mod preprocess;

pub use error::{Error, Result};
