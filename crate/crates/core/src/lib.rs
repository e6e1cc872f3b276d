pub mod corpus;
pub mod demo;
pub mod embedder;
pub mod evalkit;
pub mod model;
pub mod sampler;
pub mod seeds;
pub mod tokenizer;
pub mod trainer;
