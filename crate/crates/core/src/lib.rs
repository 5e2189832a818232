//! Numerical toolkit for fractional-order continuity experiments.

pub mod abel;
pub mod cli;
pub mod contlab;
pub mod conv;
pub mod fracgrid;
pub mod illposed;
pub mod mlf;
pub mod quad;
pub mod seqfde;
pub mod specdiff;
pub mod special;
