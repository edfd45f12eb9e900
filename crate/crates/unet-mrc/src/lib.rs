//! Machine reading comprehension over passages where the question may be
//! unanswerable. A single network encodes question and passage jointly
//! around a shared universal node, attends across them at several depths,
//! and predicts an answer span, a no-answer span pair, and an
//! answerability verdict, trained as one multi-task objective.

pub mod cli;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;
