//! Bidirectional recurrent imputer fed with continuous-function data.
//!
//! Each direction runs a recurrent cell over one window. Per step it forms a
//! historical estimate from the previous state, regresses the CF data together
//! with the completed input, derives a feature estimate from the other
//! variables, and blends the two with a learned weight. The hidden state decays
//! with the time gap before each update. Training minimizes masked absolute
//! errors of the four estimates in both directions plus a consistency term.
//! Gradients come from hand-written backpropagation through time.

mod cell;
mod params;
mod sequence;
mod train;

pub use cell::{cell_forward, CellTrace, StepInput};
pub use params::{DirectionParams, MirnnParams};
pub use sequence::{
    bidirectional_forward, bidirectional_gradient, sequence_forward, BidirectionalOutput,
    DirectionData, DirectionLoss, MirnnLoss, Window,
};
pub use train::{
    fit_mirnn, impute_mirnn, load_model, save_model, train, window_starts, MirnnConfig, MirnnModel,
    MODEL_FORMAT, MODEL_VERSION,
};
