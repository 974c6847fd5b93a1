//! Differentially private correlation clustering through synthetic graph
//! release.

pub mod cuts;
pub mod edgelist;
pub mod exp_mech;
pub mod experiments;
pub mod error;
pub mod graph;
pub mod laplace;
pub mod lowerbound;
pub mod partitions;
pub mod release;
pub mod rng;
pub mod solvers;
pub mod transforms;

pub use error::{Error, Result};
pub use graph::{
    agreement, disagreement, neighbor_distance, signed_cut_weight, split_signs, Clustering, Edge, PairWeight,
    PrivacyParams, Sign, SignedGraph, WeightedChannel,
};
