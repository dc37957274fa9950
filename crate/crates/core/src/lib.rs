//! Symbolic-music toolkit for text-conditioned generation: Standard MIDI File
//! I/O, the REMI event codec, bar attributes, objective metrics, contrastive
//! dataset construction, a toy text-music alignment model and a nucleus-sampled
//! decoder tuned against it.

pub mod align;
pub mod attributes;
pub mod checkpoint;
pub mod dataset;
pub mod generate;
pub mod grad;
pub mod metrics;
pub mod midi;
pub mod nn;
pub mod piece;
pub mod remi;
pub mod rng;
pub mod synthetic;

pub use align::{AlignConfig, AlignModel};
pub use attributes::{AttributeBins, AttributeClasses, BarAttributeScores};
pub use dataset::{PairExample, Polarity, SplitSet, TokenizedPiece};
pub use metrics::{evaluate, MetricsReport};
pub use midi::{parse_smf, quantize, write_smf, MidiPiece};
pub use piece::{Note, QuantizedPiece};
pub use remi::{decode, encode, repair, ChordLabel, RemiSequence, Token};
