//! Desk-scale neural machine translation with fast domain adaptation:
//! continue training of a baseline attention encoder-decoder on in-domain
//! data, and ensemble decoding of the baseline with the adapted model.

pub mod corpus;
pub mod decoder;
pub mod eval;
pub mod human_eval;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod trainer;
