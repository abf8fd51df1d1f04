//! A desk-scale lab that treats an autoregressive bot as a discrete-time stochastic
//! dynamical system over a finite token alphabet.
//!
//! The state is a sliding window of `C` tokens; a [`Discriminant`] maps the window to
//! `K` logits and the sampler turns those into the next token. On top of that the
//! crate provides exhaustive and Monte Carlo reachability, certificates and controller
//! synthesis for last-ℓ controllability, meaning classifiers, and an adversary/defender
//! safeguard game.
//!
//! Everything is small enough to enumerate, which is the point: each analysis has a
//! brute-force oracle next to it (see [`oracle`]).

pub mod controllability;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod meaning;
pub mod models;
pub mod oracle;
pub mod par;
pub mod reachability;
pub mod safeguard;
pub mod stats;
pub mod token;

pub use dynamics::{Context, Prior, SamplerConfig, Temperature};
pub use error::{Budget, Error, Result};
pub use models::{AnyModel, Discriminant};
pub use token::{Alphabet, Corpus, MeaningfulSet, Sentence, TokenId};
